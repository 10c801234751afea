//! Per-participant maximum-likelihood fits.

use serde::{Deserialize, Serialize};

use super::likelihood::{sequence_loglik, PROB_FLOOR};
use super::optimize::{tpe_maximize, TpeOptions};
use super::params::{ParamSpace, ParamVector};
use super::ParticipantRecord;
use crate::error::Result;
use crate::features::FeatureRegistry;
use crate::metacontrol::ModelConfig;
use crate::modelselect::{bic, BicMatrix};
use crate::rng;

pub const DEFAULT_BUDGET: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub participant: String,
    pub model: String,
    pub params: ParamVector,
    pub loglik: f64,
    pub n_obs: usize,
    pub k: usize,
    pub bic: f64,
    pub budget: usize,
    pub seed: u64,
    pub registry: String,
    pub prob_floor: f64,
    /// Best log-likelihood after each evaluation.
    pub best_so_far: Vec<f64>,
}

impl FitResult {
    /// Resumption key.
    pub fn key(&self) -> (String, String, usize, u64) {
        (self.participant.clone(), self.model.clone(), self.budget, self.seed)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("fit results serialize") + "\n"
    }
}

/// Seed of the likelihood evaluations inside one fit. Every candidate is
/// scored with the same stream, so comparisons are not blurred by
/// simulation noise.
pub fn likelihood_seed(seed: u64) -> u64 {
    rng::derive_str(seed, "likelihood")
}

/// Maximize the likelihood of `record` under `config` with `budget`
/// evaluations.
pub fn fit_participant(
    config: &ModelConfig,
    record: &ParticipantRecord,
    registry: &FeatureRegistry,
    budget: usize,
    seed: u64,
) -> Result<FitResult> {
    fit_participant_with(config, record, registry, budget, seed, &TpeOptions::default())
}

pub fn fit_participant_with(
    config: &ModelConfig,
    record: &ParticipantRecord,
    registry: &FeatureRegistry,
    budget: usize,
    seed: u64,
    opts: &TpeOptions,
) -> Result<FitResult> {
    record.validate()?;
    let space = ParamSpace::for_config(config, registry)?;
    let lik_seed = likelihood_seed(seed);
    let mut n_obs = record.n_decisions();
    let trace = tpe_maximize(space.k(), budget, rng::derive_str(seed, "optimizer"), opts, |u| {
        let params = space.decode(&space.from_unit(u))?;
        let (ll, n) = sequence_loglik(config, &params, record, registry, lik_seed)?;
        n_obs = n;
        Ok(ll)
    })?;
    let best = trace.best();
    let loglik = best.value;
    Ok(FitResult {
        participant: record.participant.clone(),
        model: config.id(),
        params: space.from_unit(&best.u),
        loglik,
        n_obs,
        k: space.k(),
        bic: bic(loglik, space.k(), n_obs)?,
        budget,
        seed,
        registry: registry.tag(),
        prob_floor: PROB_FLOOR,
        best_so_far: trace.best_so_far,
    })
}

/// Wide BIC matrix from fit results (last result wins per cell).
pub fn bic_matrix(results: &[FitResult]) -> BicMatrix {
    BicMatrix::from_cells(results.iter().map(|r| (r.participant.as_str(), r.model.as_str(), r.bic)))
}
