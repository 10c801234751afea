//! Mouselab-MDP planning task and its meta-level MDP.

mod belief;
mod conditions;
mod tree;

pub use belief::{pseudo_reward, transition, BeliefState, Computation};
pub use conditions::{make_condition_env, ConditionId, ConditionParams, ConditionTable};
pub use tree::{GroundTruth, Node, RewardDist, TrialSpec};

/// A trial instance: structure plus realized rewards, as written by the
/// trial generator.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrialFile {
    pub spec: TrialSpec,
    pub truth: GroundTruth,
}
