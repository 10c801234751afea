//! Base learning mechanisms and the softmax machinery they share.

mod habit;
mod lvoc;
mod nonlearning;
mod reinforce;

pub use habit::{habit_policy, HabitWeights};
pub use lvoc::{
    lvoc_learn, lvoc_select, lvoc_choice_probabilities, LvocParams, LvocPosterior, MetaExperience,
    LVOC_MC_REPLAYS,
};
pub(crate) use lvoc::{argmax_action, choice_frequencies, score_actions, thompson_pick, SelectionRule};
pub use nonlearning::nonlearning_policy;
pub use reinforce::{
    init_weights, raw_gradient, reinforce_grad_logpi, reinforce_trial_update, AdamState, ReinforceParams,
    RewardWeighting, TraceStep,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Computation;
use crate::error::{Error, Result};

/// A weight vector over a feature registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyWeights(pub Vec<f64>);

impl PolicyWeights {
    pub fn zeros(dim: usize) -> Self {
        PolicyWeights(vec![0.0; dim])
    }
}

impl std::ops::Deref for PolicyWeights {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A probability distribution over the computations valid in one belief.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub actions: Vec<Computation>,
    pub probs: Vec<f64>,
}

impl Policy {
    /// A point mass.
    pub fn certain(c: Computation) -> Self {
        Policy { actions: vec![c], probs: vec![1.0] }
    }

    pub fn prob(&self, c: Computation) -> f64 {
        self.actions
            .iter()
            .position(|&a| a == c)
            .map_or(0.0, |i| self.probs[i])
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Computation {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, p) in self.actions.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return *a;
            }
        }
        // rounding slack: last action with positive mass
        self.actions
            .iter()
            .zip(&self.probs)
            .rev()
            .find(|(_, p)| **p > 0.0)
            .map(|(a, _)| *a)
            .unwrap_or(self.actions[0])
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Numerically stable softmax of `values / tau`.
pub fn softmax(values: &[f64], tau: f64) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| ((v - max) / tau).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// P(c) ∝ exp(value(c) / τ) over the given computations.
pub fn softmax_policy(actions: &[Computation], values: &[f64], tau: f64) -> Result<Policy> {
    if actions.is_empty() {
        return Err(Error::InvalidInput("softmax over an empty action set".into()));
    }
    if actions.len() != values.len() {
        return Err(Error::InvalidInput("one value per action required".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("temperature must be > 0, got {tau}")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    Ok(Policy { actions: actions.to_vec(), probs: softmax(values, tau) })
}

/// Gradient of ln softmax(c_i) with respect to linear weights, where each
/// action's value is `w · phi(a)`: (φ(c) − Σ π(a) φ(a)) / τ.
///
/// `phi` rows for actions whose value does not depend on the weights
/// (a fixed termination value) must be zero.
pub(crate) fn grad_log_softmax(phi: &[&[f64]], probs: &[f64], chosen: usize, tau: f64) -> Vec<f64> {
    let dim = phi.first().map_or(0, |r| r.len());
    let mut g = phi[chosen].to_vec();
    for (row, p) in phi.iter().zip(probs) {
        for (gj, fj) in g.iter_mut().zip(row.iter()) {
            *gj -= p * fj;
        }
    }
    debug_assert_eq!(g.len(), dim);
    g.iter_mut().for_each(|x| *x /= tau);
    g
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
