//! Teacher-forced likelihood of a participant's computations.

use crate::env::Computation;
use crate::error::{Error, Result};
use crate::features::FeatureRegistry;
use crate::metacontrol::{Agent, ModelConfig, ModelParams};

use super::ParticipantRecord;

/// Floor applied to each per-decision probability before the log.
pub const PROB_FLOOR: f64 = 1e-6;

/// Log-likelihood of every meta-decision in `record`, and the number of
/// decisions. The model learns from the participant's own experience as it
/// goes; ⊥ is rewarded with the return of the path the participant took.
pub fn sequence_loglik(
    config: &ModelConfig,
    params: &ModelParams,
    record: &ParticipantRecord,
    registry: &FeatureRegistry,
    seed: u64,
) -> Result<(f64, usize)> {
    let mut agent = Agent::new(config, params, registry, seed)?;
    let mut ll = 0.0;
    let mut n = 0;
    for (t, trial) in record.trials.iter().enumerate() {
        let steps = record.trial_steps(t)?;
        for (i, step) in steps.iter().enumerate() {
            let p = agent.policy(&step.belief)?.prob(step.computation);
            if !p.is_finite() {
                return Err(Error::NonFinite(format!(
                    "choice probability for {} at trial {t}, step {i}",
                    record.participant
                )));
            }
            ll += p.max(PROB_FLOOR).ln();
            n += 1;
            agent.observe(&step.belief, step.computation, &step.next, step.reward)?;
        }
        debug_assert_eq!(steps.last().map(|s| s.computation), Some(Computation::Terminate));
        agent.end_trial(trial.score)?;
    }
    Ok((ll, n))
}
