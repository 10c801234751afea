//! Model comparison: BIC, random-effects BMS, ΔBIC evidence labels, trend
//! and contingency tests, and selection reports.

mod bms;
mod report;
mod stats;

pub use bms::{
    exceedance, family_bms, family_evidence, rfx_bms, BmsResult, EvidenceMatrix, Family, BMS_MAX_ITER,
    BMS_PRIOR_ALPHA, BMS_TOLERANCE, DEFAULT_MC_SAMPLES,
};
pub use report::{
    partition_by_base, partition_from_map, partition_singletons, pr_evidence_counts, select, BicMatrix, BmsRow,
    PrEvidenceCounts, SelectionReport,
};
pub use stats::{chi_square_proportions, mann_kendall, ChiSquareResult, Direction, TrendResult};

use serde::{Deserialize, Serialize};

use crate::env::ConditionId;
use crate::error::{Error, Result};
use crate::fitkit::ParticipantRecord;
use crate::simlab::{classify_strategy, StrategyLabel};

/// k·ln(n_obs) − 2·loglik.
pub fn bic(loglik: f64, k: usize, n_obs: usize) -> Result<f64> {
    if n_obs == 0 {
        return Err(Error::InvalidInput("BIC needs at least one observation".into()));
    }
    Ok(k as f64 * (n_obs as f64).ln() - 2.0 * loglik)
}

/// |ΔBIC| above this counts as substantial evidence.
pub const DELTA_BIC_THRESHOLD: f64 = 3.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evidence {
    SubstantialForA,
    SubstantialForB,
    Inconclusive,
}

/// Classify Δ = bic_a − bic_b.
pub fn delta_bic_class(bic_a: f64, bic_b: f64) -> Evidence {
    let d = bic_a - bic_b;
    if d > DELTA_BIC_THRESHOLD {
        Evidence::SubstantialForB
    } else if d < -DELTA_BIC_THRESHOLD {
        Evidence::SubstantialForA
    } else {
        Evidence::Inconclusive
    }
}

/// Significance level of the click-count trend used to flag learners.
pub const LEARNER_ALPHA: f64 = 0.05;

/// Whether a participant changed strategy. Experiment 2: a significant
/// Mann–Kendall trend in clicks per trial. Experiment 1: the first-click
/// label changes at least once.
pub fn classify_learner(record: &ParticipantRecord, condition: ConditionId) -> Result<bool> {
    if condition.experiment() == 2 {
        let clicks: Vec<f64> = record.trials.iter().map(|t| t.n_clicks() as f64).collect();
        if clicks.len() < 3 {
            return Ok(false);
        }
        return Ok(mann_kendall(&clicks)?.p < LEARNER_ALPHA);
    }
    let labels = record
        .trials
        .iter()
        .map(|t| classify_strategy(t.first_click().map(|n| t.spec.depth(n)), condition))
        .collect::<Result<Vec<StrategyLabel>>>()?;
    Ok(labels.windows(2).any(|w| w[0] != w[1]))
}
