//! REINFORCE: per-trial policy-gradient ascent on a linear softmax policy,
//! with ADAM step sizes.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{dot, grad_log_softmax, softmax, PolicyWeights};
use crate::env::{BeliefState, Computation};
use crate::error::{Error, Result};
use crate::features::{ClickHistory, FeatureRegistry};

/// Spread of the zero-mean normal used for initial weights.
pub const INIT_WEIGHT_SD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReinforceParams {
    /// ADAM base learning rate.
    pub alpha: f64,
    /// Discount over steps within a trial.
    pub gamma: f64,
    /// Softmax temperature: P(c) ∝ exp(w·f / tau).
    pub tau: f64,
}

impl ReinforceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!("gamma must be in [0, 1], got {}", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

/// How per-step rewards weight the score-function terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardWeighting {
    /// Σ_t γ^(t−1) · r_t · ∇ln π(c_t | b_t): each step weighted by its own
    /// immediate meta-reward. Clicks then only ever see their cost, so
    /// agents learn to stop planning.
    Immediate,
    /// Σ_t G_t · ∇ln π(c_t | b_t) with G_t = Σ_{k≥t} γ^(k−t) r_k.
    #[default]
    ReturnToGo,
}

/// ADAM moment accumulators (ascent direction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(dim: usize) -> Self {
        AdamState { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    /// One ascent step on `w` along gradient `g` with base rate `alpha`.
    pub fn step(&mut self, w: &mut [f64], g: &[f64], alpha: f64) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - Self::BETA1.powi(t);
        let c2 = 1.0 - Self::BETA2.powi(t);
        for j in 0..w.len() {
            self.m[j] = Self::BETA1 * self.m[j] + (1.0 - Self::BETA1) * g[j];
            self.v[j] = Self::BETA2 * self.v[j] + (1.0 - Self::BETA2) * g[j] * g[j];
            let m_hat = self.m[j] / c1;
            let v_hat = self.v[j] / c2;
            w[j] += alpha * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// One decision of a trial: ∇ln π of the chosen computation and the
/// reward credited to that step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub grad_logpi: Vec<f64>,
    pub reward: f64,
}

/// The policy-gradient estimate for one trial.
pub fn raw_gradient(steps: &[TraceStep], gamma: f64, weighting: RewardWeighting) -> Vec<f64> {
    let dim = steps.first().map_or(0, |s| s.grad_logpi.len());
    let mut g = vec![0.0; dim];
    let credits: Vec<f64> = match weighting {
        RewardWeighting::Immediate => {
            let mut disc = 1.0;
            steps
                .iter()
                .map(|s| {
                    let c = disc * s.reward;
                    disc *= gamma;
                    c
                })
                .collect()
        }
        RewardWeighting::ReturnToGo => {
            let mut ret = 0.0;
            let mut out: Vec<f64> = steps
                .iter()
                .rev()
                .map(|s| {
                    ret = s.reward + gamma * ret;
                    ret
                })
                .collect();
            out.reverse();
            out
        }
    };
    for (s, credit) in steps.iter().zip(credits) {
        for (gj, dj) in g.iter_mut().zip(&s.grad_logpi) {
            *gj += credit * dj;
        }
    }
    g
}

/// Independent N(0, 0.1²) initial weights.
pub fn init_weights(dim: usize, rng: &mut impl Rng) -> PolicyWeights {
    let normal = Normal::new(0.0, INIT_WEIGHT_SD).expect("valid normal");
    PolicyWeights((0..dim).map(|_| normal.sample(rng)).collect())
}

/// ∇_w ln π_w(c | b) for the plain softmax policy over every valid
/// computation.
pub fn reinforce_grad_logpi(
    b: &BeliefState,
    c: Computation,
    w: &[f64],
    tau: f64,
    registry: &FeatureRegistry,
    history: &ClickHistory,
) -> Result<Vec<f64>> {
    b.check_valid(c)?;
    if w.len() != registry.dim() {
        return Err(Error::InvalidParameter(format!(
            "{} weights for {} features",
            w.len(),
            registry.dim()
        )));
    }
    let (actions, feats) = registry.compute_all(b, history);
    let values: Vec<f64> = feats.iter().map(|f| dot(f, w)).collect();
    let probs = softmax(&values, tau);
    let chosen = actions.iter().position(|&a| a == c).expect("valid computation is listed");
    let rows: Vec<&[f64]> = feats.iter().map(|f| &f[..]).collect();
    Ok(grad_log_softmax(&rows, &probs, chosen, tau))
}

/// Apply one trial's update: compute the gradient from the trace (plain
/// softmax policy, weights fixed during the trial), then take one ADAM step.
pub fn reinforce_trial_update(
    trace: &[(BeliefState, Computation, f64)],
    params: &ReinforceParams,
    adam: &mut AdamState,
    w: &PolicyWeights,
    registry: &FeatureRegistry,
    weighting: RewardWeighting,
) -> Result<PolicyWeights> {
    params.validate()?;
    match trace.last() {
        None => return Err(Error::MalformedTrace("empty trace".into())),
        Some((_, c, _)) if *c != Computation::Terminate => {
            return Err(Error::MalformedTrace("trace must end with termination".into()))
        }
        _ => {}
    }
    let history = ClickHistory::new();
    let steps = trace
        .iter()
        .enumerate()
        .map(|(t, (b, c, r))| {
            let grad_logpi = reinforce_grad_logpi(b, *c, w, params.tau, registry, &history)
                .map_err(|e| Error::MalformedTrace(format!("step {t}: {e}")))?;
            Ok(TraceStep { grad_logpi, reward: *r })
        })
        .collect::<Result<Vec<_>>>()?;
    let g = raw_gradient(&steps, params.gamma, weighting);
    let mut next = w.clone();
    adam.step(&mut next.0, &g, params.alpha);
    Ok(next)
}
