//! Forward simulation of agents, first-click strategy labels and
//! learning-curve aggregation.

use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{make_condition_env, transition, BeliefState, Computation, ConditionId};
use crate::error::{Error, Result};
use crate::features::FeatureRegistry;
use crate::fitkit::{ParticipantRecord, TrialRecord, RECORD_VERSION};
use crate::metacontrol::{Agent, ModelConfig, ModelParams};
use crate::modelselect::{mann_kendall, TrendResult};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyLabel {
    Adaptive,
    NonAdaptive,
}

/// First-click rule: far-sighted (deepest node) in exp1-far, near-sighted
/// (depth 1) in exp1-near, depth 1 or 2 in exp1-bestfirst. Trials without
/// clicks are non-adaptive.
pub fn classify_strategy(first_click_depth: Option<usize>, condition: ConditionId) -> Result<StrategyLabel> {
    let adaptive = |ok: bool| if ok { StrategyLabel::Adaptive } else { StrategyLabel::NonAdaptive };
    let max_depth = crate::env::ConditionTable::default_table().branching.len();
    match condition {
        ConditionId::Exp1Far => Ok(adaptive(first_click_depth == Some(max_depth))),
        ConditionId::Exp1Near => Ok(adaptive(first_click_depth == Some(1))),
        ConditionId::Exp1BestFirst => Ok(adaptive(matches!(first_click_depth, Some(1 | 2)))),
        other => Err(Error::UnknownCondition(format!("no first-click strategy rule for {other}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub score: f64,
    pub n_clicks: usize,
    pub first_click: Option<usize>,
    pub first_click_depth: Option<usize>,
    pub label: Option<StrategyLabel>,
}

/// A simulated session. Serializes as its participant record, so any trace
/// can be fed back into fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub model: String,
    pub condition: ConditionId,
    pub record: ParticipantRecord,
}

impl SimTrace {
    pub fn agent(&self) -> &str {
        &self.record.participant
    }

    pub fn n_trials(&self) -> usize {
        self.record.trials.len()
    }

    pub fn summaries(&self) -> Vec<TrialSummary> {
        self.record
            .trials
            .iter()
            .map(|t| {
                let first_click = t.first_click();
                let first_click_depth = first_click.map(|n| t.spec.depth(n));
                TrialSummary {
                    score: t.score,
                    n_clicks: t.n_clicks(),
                    first_click,
                    first_click_depth,
                    label: classify_strategy(first_click_depth, self.condition).ok(),
                }
            })
            .collect()
    }
}

/// Run one agent for `n_trials` fresh trials of `condition`.
pub fn simulate_agent(
    config: &ModelConfig,
    params: &ModelParams,
    condition: ConditionId,
    n_trials: usize,
    registry: &FeatureRegistry,
    seed: u64,
) -> Result<SimTrace> {
    simulate_agent_named(config, params, condition, n_trials, registry, seed, format!("{}-{seed}", config.id()))
}

fn simulate_agent_named(
    config: &ModelConfig,
    params: &ModelParams,
    condition: ConditionId,
    n_trials: usize,
    registry: &FeatureRegistry,
    seed: u64,
    name: String,
) -> Result<SimTrace> {
    let mut agent = Agent::new(config, params, registry, rng::derive(seed, 1))?;
    let env_seed = rng::derive(seed, 2);
    let mut trials = Vec::with_capacity(n_trials);
    for t in 0..n_trials {
        let (spec, truth) = make_condition_env(condition, rng::derive(env_seed, t as u64))?;
        let spec = Arc::new(spec);
        let mut b = BeliefState::new(spec.clone());
        let mut comps = Vec::new();
        loop {
            let c = agent.act(&b)?;
            let (next, r) = transition(&b, c, &truth)?;
            agent.observe(&b, c, &next, r)?;
            comps.push(c);
            if c == Computation::Terminate {
                break;
            }
            b = next;
        }
        let n_clicks = comps.len() - 1;
        let score = truth.path_return(b.greedy_path()) - spec.click_cost * n_clicks as f64;
        agent.end_trial(score)?;
        trials.push(TrialRecord {
            spec: (*spec).clone(),
            truth,
            computations: comps,
            path: None,
            score,
        });
    }
    Ok(SimTrace {
        model: config.id(),
        condition,
        record: ParticipantRecord {
            version: RECORD_VERSION,
            participant: name,
            condition: condition.as_str().to_string(),
            trials,
        },
    })
}

/// Simulate `n_agents` independent agents in parallel; agent i uses the
/// parameters `params(i)` and a seed derived from `seed` and i.
pub fn simulate_cohort(
    config: &ModelConfig,
    params: impl Fn(usize) -> ModelParams + Sync,
    condition: ConditionId,
    n_agents: usize,
    n_trials: usize,
    registry: &FeatureRegistry,
    seed: u64,
) -> Result<Vec<SimTrace>> {
    (0..n_agents)
        .into_par_iter()
        .map(|i| {
            let name = format!("{}-{}-{i:03}", config.id(), condition);
            simulate_agent_named(config, &params(i), condition, n_trials, registry, rng::derive(seed, i as u64), name)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    Score,
    Clicks,
    Adaptive,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Score, Measure::Clicks, Measure::Adaptive];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Score => "score",
            Measure::Clicks => "clicks",
            Measure::Adaptive => "adaptive",
        }
    }

    fn value(self, s: &TrialSummary) -> Result<f64> {
        Ok(match self {
            Measure::Score => s.score,
            Measure::Clicks => s.n_clicks as f64,
            Measure::Adaptive => match s.label {
                Some(StrategyLabel::Adaptive) => 1.0,
                Some(StrategyLabel::NonAdaptive) => 0.0,
                None => return Err(Error::InvalidInput("adaptive proportion needs an experiment-1 condition".into())),
            },
        })
    }
}

/// Resamples used for the percentile band of each per-trial mean.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
const BOOTSTRAP_SEED: u64 = 0x6375_7276;

/// Per-trial cohort mean with a 95% bootstrap percentile band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub condition: String,
    pub model: String,
    pub measure: Measure,
    pub n_agents: usize,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl CurveSet {
    pub fn n_trials(&self) -> usize {
        self.mean.len()
    }

    /// Mann–Kendall trend of the mean curve.
    pub fn trend(&self) -> Result<TrendResult> {
        mann_kendall(&self.mean)
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

/// Aggregate aligned traces of one condition and model.
pub fn aggregate_curves(traces: &[SimTrace], measure: Measure) -> Result<CurveSet> {
    let first = traces
        .first()
        .ok_or_else(|| Error::InvalidInput("no traces to aggregate".into()))?;
    let n_trials = first.n_trials();
    if traces.iter().any(|t| t.n_trials() != n_trials) {
        return Err(Error::InvalidInput("traces have different trial counts".into()));
    }
    let values = traces
        .iter()
        .map(|t| t.summaries().iter().map(|s| measure.value(s)).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    let n = traces.len();
    let mut rng = rng::rng(BOOTSTRAP_SEED);
    let mut mean = Vec::with_capacity(n_trials);
    let mut lo = Vec::with_capacity(n_trials);
    let mut hi = Vec::with_capacity(n_trials);
    let mut boot = vec![0.0; BOOTSTRAP_RESAMPLES];
    for t in 0..n_trials {
        let col: Vec<f64> = values.iter().map(|v| v[t]).collect();
        mean.push(col.iter().sum::<f64>() / n as f64);
        for b in boot.iter_mut() {
            *b = (0..n).map(|_| col[rng.random_range(0..n)]).sum::<f64>() / n as f64;
        }
        boot.sort_by(f64::total_cmp);
        lo.push(quantile(&boot, 0.025));
        hi.push(quantile(&boot, 0.975));
    }
    Ok(CurveSet {
        condition: first.condition.as_str().to_string(),
        model: first.model.clone(),
        measure,
        n_agents: n,
        mean,
        lo,
        hi,
    })
}

/// Plot-ready CSV: one row per (condition, model, measure, trial).
pub fn curves_to_csv(curves: &[CurveSet]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["condition", "model", "measure", "trial", "n_agents", "mean", "lo", "hi"])
        .expect("in-memory write");
    for c in curves {
        for t in 0..c.n_trials() {
            w.write_record([
                c.condition.clone(),
                c.model.clone(),
                c.measure.as_str().to_string(),
                (t + 1).to_string(),
                c.n_agents.to_string(),
                format!("{}", c.mean[t]),
                format!("{}", c.lo[t]),
                format!("{}", c.hi[t]),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
