//! First-stage stopping rules of the hierarchical meta-controller.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::BeliefState;
use crate::error::{Error, Result};

/// σ(x, τ) = 1 / (1 + e^(−x/τ)).
pub fn tempered_sigmoid(x: f64, tau: f64) -> f64 {
    let z = x / tau;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Running mean of completed-trial scores.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreMemory {
    pub mean: f64,
    pub n: u32,
}

impl ScoreMemory {
    pub fn record(&mut self, score: f64) {
        self.n += 1;
        self.mean += (score - self.mean) / f64::from(self.n);
    }

    /// Spread of the threshold draw: η / √(n + 1).
    pub fn spread(&self, eta: f64) -> f64 {
        eta / f64::from(self.n + 1).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum StoppingRule {
    /// Stop when the normalized best path value exceeds η.
    Fixed { eta: f64, tau: f64 },
    /// Threshold e^a − e^b·n_c falls with the number of clicks so far.
    Decreasing { a: f64, b: f64, tau: f64 },
    /// Threshold drawn around the mean score of earlier trials.
    PastPerformance {
        eta: f64,
        tau: f64,
        #[serde(default)]
        memory: ScoreMemory,
    },
}

impl StoppingRule {
    pub fn past_performance(eta: f64, tau: f64) -> Self {
        StoppingRule::PastPerformance { eta, tau, memory: ScoreMemory::default() }
    }

    pub fn tau(&self) -> f64 {
        match *self {
            StoppingRule::Fixed { tau, .. }
            | StoppingRule::Decreasing { tau, .. }
            | StoppingRule::PastPerformance { tau, .. } => tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let tau = self.tau();
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("stopping temperature must be > 0, got {tau}")));
        }
        let finite = match *self {
            StoppingRule::Fixed { eta, .. } => eta.is_finite(),
            StoppingRule::Decreasing { a, b, .. } => a.is_finite() && b.is_finite(),
            StoppingRule::PastPerformance { eta, memory, .. } => {
                if eta < 0.0 {
                    return Err(Error::InvalidParameter(format!("threshold spread must be >= 0, got {eta}")));
                }
                eta.is_finite() && memory.mean.is_finite()
            }
        };
        if !finite {
            return Err(Error::NonFinite("stopping rule parameter".into()));
        }
        Ok(())
    }

    /// Update the score memory after a completed trial. A no-op for rules
    /// without memory.
    pub fn record_score(&mut self, score: f64) {
        if let StoppingRule::PastPerformance { memory, .. } = self {
            memory.record(score);
        }
    }

    /// Draw a past-performance threshold; `None` for the other rules.
    pub fn draw_threshold(&self, rng: &mut impl Rng) -> Option<f64> {
        match *self {
            StoppingRule::PastPerformance { eta, memory, .. } => {
                let sd = memory.spread(eta);
                if sd == 0.0 {
                    return Some(memory.mean);
                }
                Some(Normal::new(memory.mean, sd).expect("finite spread").sample(rng))
            }
            _ => None,
        }
    }

    /// Stop probability given a threshold draw (ignored by rules without one).
    pub fn stop_probability_given(&self, b: &BeliefState, threshold: Option<f64>) -> Result<f64> {
        let m = b.best_path_value();
        match *self {
            StoppingRule::Fixed { eta, tau } => {
                let spec = b.spec();
                let span = spec.v_max() - spec.v_min();
                if !(span > 0.0) {
                    return Err(Error::InvalidSpec("fixed stopping rule needs v_max > v_min".into()));
                }
                Ok(tempered_sigmoid((m - spec.v_min()) / span - eta, tau))
            }
            StoppingRule::Decreasing { a, b: slope, tau } => {
                Ok(tempered_sigmoid(m - a.exp() + slope.exp() * b.n_clicks() as f64, tau))
            }
            StoppingRule::PastPerformance { tau, memory, .. } => {
                let t = threshold.unwrap_or(memory.mean);
                Ok(tempered_sigmoid(m - t, tau))
            }
        }
    }

    /// Stop probability averaged over the threshold draw.
    pub fn marginal_stop_probability(&self, b: &BeliefState) -> Result<f64> {
        match *self {
            StoppingRule::PastPerformance { eta, tau, memory } => {
                let m = b.best_path_value();
                let sd = memory.spread(eta);
                if sd == 0.0 {
                    return Ok(tempered_sigmoid(m - memory.mean, tau));
                }
                let (x, w) = gauss_hermite();
                let s2 = std::f64::consts::SQRT_2 * sd;
                let p: f64 = x
                    .iter()
                    .zip(w)
                    .map(|(xi, wi)| wi * tempered_sigmoid(m - (memory.mean + s2 * xi), tau))
                    .sum();
                Ok(p.clamp(0.0, 1.0))
            }
            _ => self.stop_probability_given(b, None),
        }
    }
}

/// Seeded stop probability: past-performance draws its threshold from `rng`.
pub fn stop_probability(rule: &StoppingRule, b: &BeliefState, rng: &mut impl Rng) -> Result<f64> {
    let t = rule.draw_threshold(rng);
    rule.stop_probability_given(b, t)
}

const GH_POINTS: usize = 40;

/// Gauss–Hermite nodes and weights normalized so Σ w_i = 1, i.e.
/// E[f(Z)] ≈ Σ w_i f(√2 x_i) for Z ~ N(0, 1). Golub–Welsch.
fn gauss_hermite() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GH_POINTS;
        let mut j = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let off = (k as f64 / 2.0).sqrt();
            j[(k, k - 1)] = off;
            j[(k - 1, k)] = off;
        }
        let eig = j.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1 / total).collect())
    })
}
