//! Model attributes layered on the base learners (stopping rules,
//! pseudo-rewards, termination deliberation) and the model grid.

mod agent;
mod stopping;

pub use agent::{effective_meta_reward, Agent, AgentSnapshot, LearnerParams, LearnerState, ModelParams};
pub use stopping::{stop_probability, tempered_sigmoid, ScoreMemory, StoppingRule};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Base {
    Reinforce,
    Lvoc,
    Habit,
    NonLearning,
}

impl Base {
    pub const ALL: [Base; 4] = [Base::Reinforce, Base::Lvoc, Base::Habit, Base::NonLearning];

    pub fn as_str(self) -> &'static str {
        match self {
            Base::Reinforce => "reinforce",
            Base::Lvoc => "lvoc",
            Base::Habit => "habit",
            Base::NonLearning => "non-learning",
        }
    }

    /// Whether the base accepts stopping rules, PR and TD.
    pub fn extensible(self) -> bool {
        matches!(self, Base::Reinforce | Base::Lvoc)
    }
}

impl fmt::Display for Base {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage1 {
    None,
    Fixed,
    Decreasing,
    PastPerformance,
}

impl Stage1 {
    pub const ALL: [Stage1; 4] = [Stage1::None, Stage1::Fixed, Stage1::Decreasing, Stage1::PastPerformance];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage1::None => "none",
            Stage1::Fixed => "fixed",
            Stage1::Decreasing => "decreasing",
            Stage1::PastPerformance => "past-performance",
        }
    }

    pub fn matches(self, rule: Option<&StoppingRule>) -> bool {
        matches!(
            (self, rule),
            (Stage1::None, None)
                | (Stage1::Fixed, Some(StoppingRule::Fixed { .. }))
                | (Stage1::Decreasing, Some(StoppingRule::Decreasing { .. }))
                | (Stage1::PastPerformance, Some(StoppingRule::PastPerformance { .. }))
        )
    }
}

/// One model of the grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub base: Base,
    pub stage1: Stage1,
    pub pseudo_rewards: bool,
    pub termination_deliberation: bool,
    /// Tag (`name@version`) of the feature registry the model was built for.
    pub registry: String,
}

impl ModelConfig {
    pub fn new(base: Base) -> Self {
        ModelConfig {
            base,
            stage1: Stage1::None,
            pseudo_rewards: false,
            termination_deliberation: false,
            registry: FeatureRegistry::default_registry().tag(),
        }
    }

    pub fn with_stage1(mut self, s: Stage1) -> Self {
        self.stage1 = s;
        self
    }

    pub fn with_pr(mut self, on: bool) -> Self {
        self.pseudo_rewards = on;
        self
    }

    pub fn with_td(mut self, on: bool) -> Self {
        self.termination_deliberation = on;
        self
    }

    /// Stable identifier, e.g. `reinforce`, `lvoc-fixed-pr`, `reinforce-pr-td`.
    pub fn id(&self) -> String {
        let mut s = self.base.as_str().to_string();
        if self.stage1 != Stage1::None {
            s.push('-');
            s.push_str(self.stage1.as_str());
        }
        if self.pseudo_rewards {
            s.push_str("-pr");
        }
        if self.termination_deliberation {
            s.push_str("-td");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let extended = self.stage1 != Stage1::None || self.pseudo_rewards || self.termination_deliberation;
        if !self.base.extensible() && extended {
            return Err(Error::InvalidConfig(format!("{} admits no extensions", self.base)));
        }
        if self.stage1 != Stage1::None && self.termination_deliberation {
            return Err(Error::InvalidConfig(format!(
                "{}: a stopping rule already decides termination",
                self.id()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for ModelConfig {
    type Err = Error;

    /// Resolve an id against the canonical grid.
    fn from_str(s: &str) -> Result<Self> {
        build_grid(&GridOptions::default())
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridOptions {
    pub registry: String,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { registry: FeatureRegistry::default_registry().tag() }
    }
}

/// The canonical model grid: for each of REINFORCE and LVOC, no stopping
/// rule × PR × TD, plus each stopping rule × PR; then habit and non-learning.
pub fn build_grid(opts: &GridOptions) -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for base in [Base::Reinforce, Base::Lvoc] {
        for stage1 in Stage1::ALL {
            let tds: &[bool] = if stage1 == Stage1::None { &[false, true] } else { &[false] };
            for &td in tds {
                for pr in [false, true] {
                    out.push(
                        ModelConfig::new(base)
                            .with_stage1(stage1)
                            .with_pr(pr)
                            .with_td(td),
                    );
                }
            }
        }
    }
    out.push(ModelConfig::new(Base::Habit));
    out.push(ModelConfig::new(Base::NonLearning));
    for c in &mut out {
        c.registry = opts.registry.clone();
    }
    out
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridEntry {
    pub id: String,
    #[serde(flatten)]
    pub config: ModelConfig,
}

/// JSONL manifest of a grid, one model per line.
pub fn grid_manifest(grid: &[ModelConfig]) -> String {
    grid.iter()
        .map(|c| {
            let e = GridEntry { id: c.id(), config: c.clone() };
            serde_json::to_string(&e).expect("serializable") + "\n"
        })
        .collect()
}

/// Parse and check a manifest produced by [`grid_manifest`].
pub fn parse_grid_manifest(text: &str) -> Result<Vec<ModelConfig>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |e: Error| Error::AtLine { line: i + 1, source: Box::new(e) };
        let e: GridEntry = serde_json::from_str(line).map_err(|e| at(e.into()))?;
        e.config.validate().map_err(at)?;
        if e.config.id() != e.id {
            return Err(at(Error::InvalidConfig(format!("id `{}` does not match its attributes", e.id))));
        }
        out.push(e.config);
    }
    Ok(out)
}

/// The frozen manifest of the default grid.
pub const CANONICAL_GRID_MANIFEST: &str = include_str!("grid.jsonl");
