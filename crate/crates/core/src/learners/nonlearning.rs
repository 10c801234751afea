//! Non-learning model: a fixed softmax policy over strategy features.

use super::{softmax_policy, Policy};
use crate::env::BeliefState;
use crate::error::{Error, Result};
use crate::features::{ClickHistory, FeatureRegistry};

/// P(c | b) ∝ exp(w · f(b, c)) with temperature 1.
pub fn nonlearning_policy(
    b: &BeliefState,
    w: &[f64],
    registry: &FeatureRegistry,
    history: &ClickHistory,
) -> Result<Policy> {
    if w.len() != registry.dim() {
        return Err(Error::InvalidParameter(format!(
            "weight vector has {} entries, registry {} has {}",
            w.len(),
            registry.tag(),
            registry.dim()
        )));
    }
    let (actions, feats) = registry.compute_all(b, history);
    let values: Vec<f64> = feats.iter().map(|f| f.dot(w)).collect();
    softmax_policy(&actions, &values, 1.0)
}
