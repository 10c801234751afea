//! Tree-structured Parzen estimator over the unit cube.
//!
//! Random start-up evaluations, then each proposal maximizes l(u)/g(u)
//! among candidates drawn from l, where l and g are per-dimension Parzen
//! densities over the best `gamma` fraction and the rest of the evaluations.
//! The tail of the budget polishes the best point with a bounded
//! Nelder–Mead search, which follows the curved ridges (learning rate
//! against temperature) that per-dimension densities handle poorly.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::error::Result;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpeOptions {
    /// Random evaluations before the model takes over; by default a fifth
    /// of the budget, at least 5.
    pub n_startup: Option<usize>,
    pub gamma: f64,
    pub n_candidates: usize,
    /// Weight of the uniform-ish prior component in each Parzen mixture.
    pub prior_weight: f64,
    /// Share of the budget spent on local refinement.
    pub local_fraction: f64,
}

impl Default for TpeOptions {
    fn default() -> Self {
        TpeOptions { n_startup: None, gamma: 0.25, n_candidates: 24, prior_weight: 1.0, local_fraction: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub u: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptTrace {
    pub evaluations: Vec<Evaluation>,
    pub best: usize,
    /// Best value after each evaluation.
    pub best_so_far: Vec<f64>,
}

impl OptTrace {
    pub fn best(&self) -> &Evaluation {
        &self.evaluations[self.best]
    }
}

/// One-dimensional truncated Parzen mixture on [0, 1].
struct Parzen {
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    weights: Vec<f64>,
    masses: Vec<f64>,
}

const PRIOR_MU: f64 = 0.5;
const PRIOR_SIGMA: f64 = 1.0;

impl Parzen {
    fn new(points: &[f64], prior_weight: f64) -> Self {
        let mut mus = vec![PRIOR_MU];
        let mut sigmas = vec![PRIOR_SIGMA];
        let mut weights = vec![prior_weight];
        let mut sorted = points.to_vec();
        sorted.sort_by(f64::total_cmp);
        let min_sigma = PRIOR_SIGMA / (1.0 + sorted.len() as f64).min(100.0);
        for (i, &x) in sorted.iter().enumerate() {
            let left = if i == 0 { x } else { x - sorted[i - 1] };
            let right = if i + 1 == sorted.len() { 1.0 - x } else { sorted[i + 1] - x };
            mus.push(x);
            sigmas.push(left.max(right).clamp(min_sigma, PRIOR_SIGMA));
            weights.push(1.0);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let std = StatNormal::new(0.0, 1.0).expect("standard normal");
        let masses = mus
            .iter()
            .zip(&sigmas)
            .map(|(m, s)| (std.cdf((1.0 - m) / s) - std.cdf(-m / s)).max(1e-12))
            .collect();
        Parzen { mus, sigmas, weights, masses }
    }

    fn ln_pdf(&self, x: f64) -> f64 {
        let mut p = 0.0;
        for i in 0..self.mus.len() {
            let z = (x - self.mus[i]) / self.sigmas[i];
            p += self.weights[i] * (-0.5 * z * z).exp()
                / (self.sigmas[i] * (2.0 * std::f64::consts::PI).sqrt() * self.masses[i]);
        }
        p.max(1e-300).ln()
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.mus.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let n = Normal::new(self.mus[k], self.sigmas[k]).expect("positive sigma");
        for _ in 0..64 {
            let x = n.sample(rng);
            if (0.0..=1.0).contains(&x) {
                return x;
            }
        }
        self.mus[k].clamp(0.0, 1.0)
    }
}

/// Evaluations so far, with the running best.
struct Log {
    evaluations: Vec<Evaluation>,
    best_so_far: Vec<f64>,
    best: usize,
}

impl Log {
    fn push(&mut self, u: Vec<f64>, value: f64) -> f64 {
        let value = if value.is_nan() { f64::NEG_INFINITY } else { value };
        if self.evaluations.is_empty() || value > self.evaluations[self.best].value {
            self.best = self.evaluations.len();
        }
        self.evaluations.push(Evaluation { u, value });
        self.best_so_far.push(self.evaluations[self.best].value);
        value
    }
}

/// Maximize `f` over [0, 1]^dim with `budget` evaluations.
pub fn tpe_maximize(
    dim: usize,
    budget: usize,
    seed: u64,
    opts: &TpeOptions,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<OptTrace> {
    let budget = budget.max(1);
    let n_local = if dim == 0 { 0 } else { (opts.local_fraction.clamp(0.0, 1.0) * budget as f64).floor() as usize };
    // too few evaluations for a simplex: keep them for the global phase
    let n_local = if n_local < 2 * (dim + 1) { 0 } else { n_local };
    let n_global = budget - n_local;
    let n_startup = opts.n_startup.unwrap_or((n_global / 5).max(5)).min(n_global);
    let mut rng = rng::rng(seed);
    let mut log = Log { evaluations: Vec::with_capacity(budget), best_so_far: Vec::with_capacity(budget), best: 0 };
    for it in 0..n_global {
        let u = if it < n_startup.max(2) || dim == 0 {
            (0..dim).map(|_| rng.random()).collect()
        } else {
            propose(&log.evaluations, dim, opts, &mut rng)
        };
        let value = f(&u)?;
        log.push(u, value);
    }
    if n_local > 0 {
        let start = log.evaluations[log.best].clone();
        nelder_mead(start, n_local, &mut |u: &[f64]| {
            let v = f(u)?;
            Ok(log.push(u.to_vec(), v))
        })?;
    }
    Ok(OptTrace { evaluations: log.evaluations, best: log.best, best_so_far: log.best_so_far })
}

/// Nelder–Mead ascent inside the unit cube (points are clamped), stopping
/// after exactly `budget` evaluations.
fn nelder_mead(start: Evaluation, budget: usize, f: &mut dyn FnMut(&[f64]) -> Result<f64>) -> Result<()> {
    const STEP: f64 = 0.1;
    let dim = start.u.len();
    let clamp = |u: Vec<f64>| -> Vec<f64> { u.into_iter().map(|x| x.clamp(0.0, 1.0)).collect() };
    let mut left = budget;
    let mut eval = |u: &[f64], left: &mut usize| -> Result<Option<f64>> {
        if *left == 0 {
            return Ok(None);
        }
        *left -= 1;
        f(u).map(Some)
    };
    let mut simplex = vec![start];
    for d in 0..dim {
        let mut u = simplex[0].u.clone();
        u[d] = if u[d] + STEP <= 1.0 { u[d] + STEP } else { u[d] - STEP };
        let Some(value) = eval(&u, &mut left)? else { return Ok(()) };
        simplex.push(Evaluation { u, value });
    }
    loop {
        simplex.sort_by(|a, b| b.value.total_cmp(&a.value));
        let worst = simplex[dim].clone();
        let centroid: Vec<f64> =
            (0..dim).map(|d| simplex[..dim].iter().map(|e| e.u[d]).sum::<f64>() / dim as f64).collect();
        let toward = |t: f64| clamp(centroid.iter().zip(&worst.u).map(|(c, w)| c + t * (c - w)).collect());
        let r = toward(1.0);
        let Some(fr) = eval(&r, &mut left)? else { return Ok(()) };
        if fr > simplex[0].value {
            let e = toward(2.0);
            let Some(fe) = eval(&e, &mut left)? else { return Ok(()) };
            simplex[dim] = if fe > fr { Evaluation { u: e, value: fe } } else { Evaluation { u: r, value: fr } };
            continue;
        }
        if fr > simplex[dim - 1].value {
            simplex[dim] = Evaluation { u: r, value: fr };
            continue;
        }
        let (c, fc) = if fr > worst.value {
            let c = toward(0.5);
            let Some(fc) = eval(&c, &mut left)? else { return Ok(()) };
            (c, fc)
        } else {
            let c = toward(-0.5);
            let Some(fc) = eval(&c, &mut left)? else { return Ok(()) };
            (c, fc)
        };
        if fc > worst.value.max(fr) {
            simplex[dim] = Evaluation { u: c, value: fc };
            continue;
        }
        let best = simplex[0].u.clone();
        for e in simplex.iter_mut().skip(1) {
            let u: Vec<f64> = best.iter().zip(&e.u).map(|(b, x)| b + 0.5 * (x - b)).collect();
            let Some(value) = eval(&u, &mut left)? else { return Ok(()) };
            *e = Evaluation { u, value };
        }
    }
}

fn propose(evals: &[Evaluation], dim: usize, opts: &TpeOptions, rng: &mut impl Rng) -> Vec<f64> {
    let mut order: Vec<usize> = (0..evals.len()).collect();
    order.sort_by(|&a, &b| evals[b].value.total_cmp(&evals[a].value).then(a.cmp(&b)));
    let n_good = ((opts.gamma * evals.len() as f64).ceil() as usize).clamp(1, evals.len() - 1);
    let (good, bad) = order.split_at(n_good);
    let models: Vec<(Parzen, Parzen)> = (0..dim)
        .map(|d| {
            let g: Vec<f64> = good.iter().map(|&i| evals[i].u[d]).collect();
            let b: Vec<f64> = bad.iter().map(|&i| evals[i].u[d]).collect();
            (Parzen::new(&g, opts.prior_weight), Parzen::new(&b, opts.prior_weight))
        })
        .collect();
    let mut best_u = Vec::new();
    let mut best_score = f64::NEG_INFINITY;
    for _ in 0..opts.n_candidates.max(1) {
        let u: Vec<f64> = models.iter().map(|(l, _)| l.sample(rng)).collect();
        let score: f64 = u
            .iter()
            .zip(&models)
            .map(|(&x, (l, g))| l.ln_pdf(x) - g.ln_pdf(x))
            .sum();
        if score > best_score {
            best_score = score;
            best_u = u;
        }
    }
    best_u
}
