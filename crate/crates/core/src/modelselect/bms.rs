//! Random-effects Bayesian model selection (variational Dirichlet scheme).

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::rng;

pub const BMS_PRIOR_ALPHA: f64 = 1.0;
pub const BMS_TOLERANCE: f64 = 1e-6;
pub const BMS_MAX_ITER: usize = 500;
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

/// N participants × K models of log-evidence (−BIC/2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceMatrix {
    pub participants: Vec<String>,
    pub models: Vec<String>,
    /// Row per participant.
    pub values: Vec<Vec<f64>>,
}

impl EvidenceMatrix {
    pub fn new(participants: Vec<String>, models: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != participants.len() {
            return Err(Error::InvalidInput("one evidence row per participant required".into()));
        }
        if values.iter().any(|r| r.len() != models.len()) {
            return Err(Error::InvalidInput("one evidence column per model required".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("log-evidence".into()));
        }
        Ok(EvidenceMatrix { participants, models, values })
    }

    /// Log-evidence from a BIC matrix.
    pub fn from_bic(participants: Vec<String>, models: Vec<String>, bic: &[Vec<f64>]) -> Result<Self> {
        let values = bic.iter().map(|r| r.iter().map(|b| -b / 2.0).collect()).collect();
        Self::new(participants, models, values)
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn k(&self) -> usize {
        self.models.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmsResult {
    pub labels: Vec<String>,
    pub alpha: Vec<f64>,
    /// Expected model frequencies.
    pub r: Vec<f64>,
    /// Exceedance probabilities.
    pub phi: Vec<f64>,
    /// Protected exceedance probabilities.
    pub protected_phi: Vec<f64>,
    /// Bayesian omnibus risk.
    pub bor: f64,
    pub mc_samples: usize,
    pub iterations: usize,
    pub converged: bool,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Exceedance probabilities by Monte Carlo over Dirichlet(alpha).
pub fn exceedance(alpha: &[f64], samples: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::rng(seed);
    let gammas: Vec<Gamma<f64>> = alpha.iter().map(|&a| Gamma::new(a, 1.0).expect("alpha > 0")).collect();
    let mut wins = vec![0usize; alpha.len()];
    for _ in 0..samples {
        // normalizing does not change the argmax
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (k, g) in gammas.iter().enumerate() {
            let v = g.sample(&mut rng);
            if v > best_v {
                best = k;
                best_v = v;
            }
        }
        wins[best] += 1;
    }
    wins.into_iter().map(|w| w as f64 / samples as f64).collect()
}

/// Random-effects BMS over the columns of `e`.
pub fn rfx_bms(e: &EvidenceMatrix, mc_samples: usize, seed: u64) -> Result<BmsResult> {
    let (n, k) = (e.n(), e.k());
    if n == 0 || k < 2 {
        return Err(Error::InvalidInput(format!("BMS needs N >= 1 and K >= 2, got N={n}, K={k}")));
    }
    if mc_samples == 0 {
        return Err(Error::InvalidInput("at least one Monte Carlo sample required".into()));
    }
    let alpha0 = vec![BMS_PRIOR_ALPHA; k];
    let mut alpha = alpha0.clone();
    let mut u = vec![vec![0.0; k]; n];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < BMS_MAX_ITER {
        iterations += 1;
        let total: f64 = alpha.iter().sum();
        let elog: Vec<f64> = alpha.iter().map(|&a| digamma(a) - digamma(total)).collect();
        for (row, un) in e.values.iter().zip(u.iter_mut()) {
            let logits: Vec<f64> = row.iter().zip(&elog).map(|(l, g)| l + g).collect();
            let z = log_sum_exp(&logits);
            for (uk, lk) in un.iter_mut().zip(&logits) {
                *uk = (lk - z).exp();
            }
        }
        let next: Vec<f64> = (0..k)
            .map(|j| alpha0[j] + u.iter().map(|un| un[j]).sum::<f64>())
            .collect();
        let delta = next.iter().zip(&alpha).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        alpha = next;
        if delta < BMS_TOLERANCE {
            converged = true;
            break;
        }
    }
    let total: f64 = alpha.iter().sum();
    let r = alpha.iter().map(|a| a / total).collect();
    let phi = exceedance(&alpha, mc_samples, seed);

    let f1 = free_energy(e, &alpha, &alpha0, &u);
    let f0: f64 = e.values.iter().map(|row| log_sum_exp(row) - (k as f64).ln()).sum();
    let bor = 1.0 / (1.0 + (f1 - f0).exp());
    let protected_phi = phi.iter().map(|p| (1.0 - bor) * p + bor / k as f64).collect();

    Ok(BmsResult {
        labels: e.models.clone(),
        alpha,
        r,
        phi,
        protected_phi,
        bor,
        mc_samples,
        iterations,
        converged,
    })
}

/// Variational free energy of the random-effects model.
fn free_energy(e: &EvidenceMatrix, alpha: &[f64], alpha0: &[f64], u: &[Vec<f64>]) -> f64 {
    let total: f64 = alpha.iter().sum();
    let total0: f64 = alpha0.iter().sum();
    let elog: Vec<f64> = alpha.iter().map(|&a| digamma(a) - digamma(total)).collect();
    let mut elj = ln_gamma(total0) - alpha0.iter().map(|&a| ln_gamma(a)).sum::<f64>();
    elj += alpha0.iter().zip(&elog).map(|(a, g)| (a - 1.0) * g).sum::<f64>();
    let mut sqm = 0.0;
    for (row, un) in e.values.iter().zip(u) {
        for j in 0..alpha.len() {
            elj += un[j] * (elog[j] + row[j]);
            if un[j] > 0.0 {
                sqm -= un[j] * un[j].ln();
            }
        }
    }
    let sqf = alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(total)
        - alpha.iter().zip(&elog).map(|(a, g)| (a - 1.0) * g).sum::<f64>();
    elj + sqf + sqm
}

/// A named group of model columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub name: String,
    pub members: Vec<usize>,
}

/// Family log-evidence: log-mean-exp over members, per participant.
pub fn family_evidence(e: &EvidenceMatrix, partition: &[Family]) -> Result<EvidenceMatrix> {
    let mut seen = vec![false; e.k()];
    for f in partition {
        if f.members.is_empty() {
            return Err(Error::InvalidInput(format!("family `{}` is empty", f.name)));
        }
        for &m in &f.members {
            if m >= e.k() || seen[m] {
                return Err(Error::InvalidInput(format!("model column {m} is out of range or in two families")));
            }
            seen[m] = true;
        }
    }
    if let Some(m) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidInput(format!("model `{}` belongs to no family", e.models[m])));
    }
    let values = e
        .values
        .iter()
        .map(|row| {
            partition
                .iter()
                .map(|f| {
                    let xs: Vec<f64> = f.members.iter().map(|&m| row[m]).collect();
                    log_sum_exp(&xs) - (xs.len() as f64).ln()
                })
                .collect()
        })
        .collect();
    EvidenceMatrix::new(
        e.participants.clone(),
        partition.iter().map(|f| f.name.clone()).collect(),
        values,
    )
}

/// BMS over families with a uniform prior within each family.
pub fn family_bms(e: &EvidenceMatrix, partition: &[Family], mc_samples: usize, seed: u64) -> Result<BmsResult> {
    rfx_bms(&family_evidence(e, partition)?, mc_samples, seed)
}
