//! Upload format of the collection service.
//!
//! A browser session never holds the ground truth of a trial: values are
//! fetched one click at a time. Uploaded trials therefore name the served
//! trial by index and the service fills in spec and truth before running
//! the usual record validation. Trials that already carry `spec` and
//! `truth` (offline practice sessions, simulated agents) are accepted as
//! they are.

use serde::{Deserialize, Serialize};

use mcrl_core::env::{Computation, ConditionId, GroundTruth, TrialFile, TrialSpec};
use mcrl_core::fitkit::{ParticipantRecord, TrialRecord, RECORD_VERSION};
use mcrl_core::rng;

/// The frozen JSON Schema of [`SessionUpload`], also served at
/// `GET /api/schema`.
pub const UPLOAD_SCHEMA: &str = include_str!("../schema/session-upload.schema.json");

fn record_version() -> u32 {
    RECORD_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionUpload {
    #[serde(default = "record_version")]
    pub version: u32,
    pub participant: String,
    pub condition: String,
    pub trials: Vec<UploadTrial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UploadTrial {
    /// Index into the served trial set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<TrialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<GroundTruth>,
    pub computations: Vec<Computation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<usize>>,
    pub score: f64,
}

/// Why an upload was refused. `trial` and `step` locate the first problem
/// when there is one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub participant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trial: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    pub message: String,
}

impl Rejection {
    pub fn new(error: &str, message: impl Into<String>) -> Self {
        Rejection { error: error.into(), participant: None, trial: None, step: None, message: message.into() }
    }

    fn at(participant: &str, trial: usize, message: impl Into<String>) -> Self {
        Rejection {
            error: "invalid-session".into(),
            participant: Some(participant.into()),
            trial: Some(trial),
            step: None,
            message: message.into(),
        }
    }
}

/// The trials a service instance hands out.
#[derive(Debug, Clone)]
pub struct TrialSet {
    pub condition: String,
    pub trials: Vec<TrialFile>,
}

impl TrialSet {
    /// `count` trials of `condition`; trial t uses the seed `derive(seed, t)`,
    /// the same instances `gen-env` writes.
    pub fn generate(condition: ConditionId, count: usize, seed: u64) -> mcrl_core::Result<Self> {
        let trials = (0..count)
            .map(|t| {
                let (spec, truth) = mcrl_core::env::make_condition_env(condition, rng::derive(seed, t as u64))?;
                Ok(TrialFile { spec, truth })
            })
            .collect::<mcrl_core::Result<Vec<_>>>()?;
        Ok(TrialSet { condition: condition.as_str().to_string(), trials })
    }
}

impl SessionUpload {
    /// Resolve trial references against `set` and validate the result.
    pub fn into_record(self, set: &TrialSet) -> Result<ParticipantRecord, Rejection> {
        let who = self.participant.clone();
        let mut trials = Vec::with_capacity(self.trials.len());
        for (t, up) in self.trials.into_iter().enumerate() {
            let (spec, truth) = match (up.trial, up.spec, up.truth) {
                (Some(i), spec, truth) => {
                    if self.condition != set.condition {
                        return Err(Rejection::at(
                            &who,
                            t,
                            format!("condition `{}` does not match the served `{}`", self.condition, set.condition),
                        ));
                    }
                    let file = set
                        .trials
                        .get(i)
                        .ok_or_else(|| Rejection::at(&who, t, format!("no served trial {i}")))?;
                    if spec.is_some_and(|s| s != file.spec) || truth.is_some_and(|g| g != file.truth) {
                        return Err(Rejection::at(&who, t, format!("inline trial differs from served trial {i}")));
                    }
                    (file.spec.clone(), file.truth.clone())
                }
                (None, Some(spec), Some(truth)) => (spec, truth),
                (None, _, _) => {
                    return Err(Rejection::at(&who, t, "a trial needs either `trial` or both `spec` and `truth`"));
                }
            };
            trials.push(TrialRecord { spec, truth, computations: up.computations, path: up.path, score: up.score });
        }
        let record = ParticipantRecord { version: self.version, participant: self.participant, condition: self.condition, trials };
        match record.validate() {
            Ok(()) => Ok(record),
            Err(mcrl_core::Error::CorruptRecord { participant, trial, step, reason }) => Err(Rejection {
                error: "invalid-session".into(),
                participant: Some(participant),
                trial: Some(trial),
                step: Some(step),
                message: reason,
            }),
            Err(e) => Err(Rejection::new("invalid-session", e.to_string())),
        }
    }
}

impl From<&ParticipantRecord> for SessionUpload {
    fn from(r: &ParticipantRecord) -> Self {
        SessionUpload {
            version: r.version,
            participant: r.participant.clone(),
            condition: r.condition.clone(),
            trials: r
                .trials
                .iter()
                .map(|t| UploadTrial {
                    trial: None,
                    spec: Some(t.spec.clone()),
                    truth: Some(t.truth.clone()),
                    computations: t.computations.clone(),
                    path: t.path.clone(),
                    score: t.score,
                })
                .collect(),
        }
    }
}
