//! Participant click logs: the JSONL schema shared by simulation output,
//! the collection service and the fitting pipeline.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{transition, BeliefState, Computation, GroundTruth, TrialSpec};
use crate::error::{Error, Result};

pub const RECORD_VERSION: u32 = 1;

/// Absolute tolerance when checking a recorded score.
pub const SCORE_TOLERANCE: f64 = 1e-6;

fn record_version() -> u32 {
    RECORD_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub spec: TrialSpec,
    pub truth: GroundTruth,
    /// Ordered computations; the last one is ⊥ (encoded 0).
    pub computations: Vec<Computation>,
    /// Path taken after planning. Defaults to the greedy path of the final
    /// belief when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<usize>>,
    pub score: f64,
}

/// One transition replayed from a record.
#[derive(Debug, Clone)]
pub struct Step {
    pub belief: BeliefState,
    pub computation: Computation,
    pub next: BeliefState,
    /// −λ for a click; the taken path's return for ⊥.
    pub reward: f64,
}

impl TrialRecord {
    pub fn n_clicks(&self) -> usize {
        self.computations.iter().filter(|c| c.is_click()).count()
    }

    pub fn first_click(&self) -> Option<usize> {
        self.computations.iter().find_map(|c| match c {
            Computation::Click(n) => Some(*n),
            Computation::Terminate => None,
        })
    }

    /// Replay the computations, checking each against its belief. Errors
    /// carry the offending step index.
    fn replay(&self) -> std::result::Result<(Vec<Step>, Vec<usize>), (usize, String)> {
        if self.computations.is_empty() {
            return Err((0, "no computations".into()));
        }
        let spec = Arc::new(self.spec.clone());
        self.truth.validate(&spec).map_err(|e| (0, e.to_string()))?;
        let mut b = BeliefState::new(spec.clone());
        let mut steps = Vec::with_capacity(self.computations.len());
        let last = self.computations.len() - 1;
        for (i, &c) in self.computations.iter().enumerate() {
            if i < last && c == Computation::Terminate {
                return Err((i, "termination before the final step".into()));
            }
            if i == last && c != Computation::Terminate {
                return Err((i, "the final computation must be termination".into()));
            }
            b.check_valid(c).map_err(|e| (i, e.to_string()))?;
            let (next, r) = transition(&b, c, &self.truth).map_err(|e| (i, e.to_string()))?;
            steps.push(Step { belief: b.clone(), computation: c, next: next.clone(), reward: r });
            b = next;
        }
        let path = match &self.path {
            Some(p) => {
                if spec.path_index(p).is_none() {
                    return Err((last, format!("{p:?} is not a root-to-leaf path")));
                }
                p.clone()
            }
            None => b.greedy_path().to_vec(),
        };
        steps[last].reward = self.truth.path_return(&path);
        Ok((steps, path))
    }

    /// The path taken after planning.
    pub fn chosen_path(&self) -> Result<Vec<usize>> {
        self.replay()
            .map(|(_, p)| p)
            .map_err(|(_, reason)| Error::MalformedTrace(reason))
    }

    /// Score implied by the log: path return − λ·clicks.
    pub fn derived_score(&self) -> Result<f64> {
        let path = self.chosen_path()?;
        Ok(self.truth.path_return(&path) - self.spec.click_cost * self.n_clicks() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    #[serde(default = "record_version")]
    pub version: u32,
    pub participant: String,
    pub condition: String,
    pub trials: Vec<TrialRecord>,
}

impl ParticipantRecord {
    fn corrupt(&self, trial: usize, step: usize, reason: impl Into<String>) -> Error {
        Error::CorruptRecord {
            participant: self.participant.clone(),
            trial,
            step,
            reason: reason.into(),
        }
    }

    /// Check every invariant of the schema.
    pub fn validate(&self) -> Result<()> {
        if self.version != RECORD_VERSION {
            return Err(self.corrupt(0, 0, format!("unsupported record version {}", self.version)));
        }
        if self.participant.is_empty() {
            return Err(self.corrupt(0, 0, "empty participant id"));
        }
        for t in 0..self.trials.len() {
            self.trial_steps(t)?;
        }
        Ok(())
    }

    /// Replayed transitions of trial `t`, with the record's invariants
    /// checked.
    pub fn trial_steps(&self, t: usize) -> Result<Vec<Step>> {
        let trial = &self.trials[t];
        let (steps, path) = trial.replay().map_err(|(i, reason)| self.corrupt(t, i, reason))?;
        let score = trial.truth.path_return(&path) - trial.spec.click_cost * trial.n_clicks() as f64;
        if !((score - trial.score).abs() <= SCORE_TOLERANCE) {
            return Err(self.corrupt(
                t,
                trial.computations.len() - 1,
                format!("recorded score {} but the log implies {score}", trial.score),
            ));
        }
        Ok(steps)
    }

    /// Total meta-decisions: Σ (clicks + 1).
    pub fn n_decisions(&self) -> usize {
        self.trials.iter().map(|t| t.computations.len()).sum()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize") + "\n"
    }
}

/// Parse JSONL text, one participant per line. Blank lines are skipped.
pub fn parse_records(text: &str) -> Result<Vec<ParticipantRecord>> {
    read_records(text.as_bytes())
}

fn read_records(reader: impl BufRead) -> Result<Vec<ParticipantRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |e: Error| Error::AtLine { line: i + 1, source: Box::new(e) };
        let rec: ParticipantRecord = serde_json::from_str(&line).map_err(|e| at(e.into()))?;
        rec.validate().map_err(at)?;
        out.push(rec);
    }
    Ok(out)
}

/// Read and validate a participant JSONL file.
pub fn ingest_records(path: impl AsRef<Path>) -> Result<Vec<ParticipantRecord>> {
    let f = std::fs::File::open(path)?;
    read_records(BufReader::new(f))
}

/// Write records as JSONL.
pub fn write_records(mut w: impl Write, records: &[ParticipantRecord]) -> Result<()> {
    for r in records {
        w.write_all(r.to_json_line().as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_condition_env, ConditionId};

    pub(crate) fn sample_record() -> ParticipantRecord {
        let (spec, truth) = make_condition_env(ConditionId::Exp1Far, 2).unwrap();
        let comps = vec![Computation::Click(4), Computation::Click(1), Computation::Terminate];
        let mut t = TrialRecord { spec, truth, computations: comps, path: None, score: 0.0 };
        t.score = t.derived_score().unwrap();
        ParticipantRecord {
            version: 1,
            participant: "p1".into(),
            condition: "exp1-far".into(),
            trials: vec![t],
        }
    }

    #[test]
    fn valid_record_round_trips() {
        let r = sample_record();
        r.validate().unwrap();
        let text = r.to_json_line() + "\n" + &r.to_json_line();
        let back = parse_records(&text).unwrap();
        assert_eq!(back, vec![r.clone(), r]);
        assert!(parse_records("").unwrap().is_empty());
    }

    #[test]
    fn repeated_click_names_trial_and_step() {
        let mut r = sample_record();
        r.trials[0].computations = vec![Computation::Click(4), Computation::Click(4), Computation::Terminate];
        match r.validate() {
            Err(Error::CorruptRecord { trial: 0, step: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn score_mismatch_and_missing_terminate_rejected() {
        let mut r = sample_record();
        r.trials[0].score += 1.0;
        assert!(r.validate().is_err());
        let mut r = sample_record();
        r.trials[0].computations.pop();
        assert!(matches!(r.validate(), Err(Error::CorruptRecord { step: 1, .. })));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let good = sample_record().to_json_line();
        let text = format!("{good}{{not json}}\n");
        match parse_records(&text) {
            Err(Error::AtLine { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn explicit_path_sets_terminal_reward() {
        let mut r = sample_record();
        let path = r.trials[0].spec.paths()[5].clone();
        r.trials[0].path = Some(path.clone());
        r.trials[0].score = r.trials[0].derived_score().unwrap();
        let steps = r.trial_steps(0).unwrap();
        assert_eq!(steps.last().unwrap().reward, r.trials[0].truth.path_return(&path));
        r.trials[0].path = Some(vec![1, 2]);
        assert!(r.validate().is_err());
    }
}
