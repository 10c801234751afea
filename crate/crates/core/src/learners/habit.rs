//! Mental-habit model: repeats computations in proportion to how often the
//! same node, branch and level were clicked on earlier trials.

use serde::{Deserialize, Serialize};

use super::{softmax_policy, Policy};
use crate::env::{BeliefState, Computation};
use crate::error::Result;
use crate::features::ClickHistory;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HabitWeights {
    pub node: f64,
    pub branch: f64,
    pub level: f64,
    /// Value of ⊥.
    pub termination_bias: f64,
}

impl HabitWeights {
    pub fn value(&self, b: &BeliefState, c: Computation, h: &ClickHistory) -> f64 {
        match c {
            Computation::Terminate => self.termination_bias,
            Computation::Click(id) => {
                let [n, br, lv] = h.counts_for(b, id);
                self.node * n + self.branch * br + self.level * lv
            }
        }
    }
}

/// Softmax (τ = 1) over habit values of every valid computation.
pub fn habit_policy(b: &BeliefState, w: &HabitWeights, history: &ClickHistory) -> Result<Policy> {
    let actions = b.computations();
    let values: Vec<f64> = actions.iter().map(|&c| w.value(b, c, history)).collect();
    softmax_policy(&actions, &values, 1.0)
}
