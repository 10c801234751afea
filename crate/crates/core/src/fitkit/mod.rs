//! Participant logs, teacher-forced likelihoods and maximum-likelihood fits.

mod fit;
mod likelihood;
mod optimize;
mod params;
mod records;

pub use fit::{bic_matrix, fit_participant, fit_participant_with, likelihood_seed, FitResult, DEFAULT_BUDGET};
pub use likelihood::{sequence_loglik, PROB_FLOOR};
pub use optimize::{tpe_maximize, Evaluation, OptTrace, TpeOptions};
pub use params::{ParamDim, ParamSpace, ParamVector, Scale, LVOC_MEAN_RANGE, TERMINATION_BIAS_RANGE, WEIGHT_RANGE};
pub use records::{
    ingest_records, parse_records, write_records, ParticipantRecord, Step, TrialRecord, RECORD_VERSION,
    SCORE_TOLERANCE,
};
