//! Experimental conditions and the seeded trial generator.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::tree::{GroundTruth, TrialSpec};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ConditionId {
    Exp1Far,
    Exp1Near,
    Exp1BestFirst,
    Exp2LowCostHighVariance,
    Exp2LowCostLowVariance,
    Exp2HighCostHighVariance,
    Exp2HighCostLowVariance,
}

impl ConditionId {
    pub const ALL: [ConditionId; 7] = [
        ConditionId::Exp1Far,
        ConditionId::Exp1Near,
        ConditionId::Exp1BestFirst,
        ConditionId::Exp2LowCostHighVariance,
        ConditionId::Exp2LowCostLowVariance,
        ConditionId::Exp2HighCostHighVariance,
        ConditionId::Exp2HighCostLowVariance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionId::Exp1Far => "exp1-far",
            ConditionId::Exp1Near => "exp1-near",
            ConditionId::Exp1BestFirst => "exp1-bestfirst",
            ConditionId::Exp2LowCostHighVariance => "exp2-lowcost-highvariance",
            ConditionId::Exp2LowCostLowVariance => "exp2-lowcost-lowvariance",
            ConditionId::Exp2HighCostHighVariance => "exp2-highcost-highvariance",
            ConditionId::Exp2HighCostLowVariance => "exp2-highcost-lowvariance",
        }
    }

    pub fn experiment(self) -> u8 {
        match self {
            ConditionId::Exp1Far | ConditionId::Exp1Near | ConditionId::Exp1BestFirst => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConditionId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::UnknownCondition(s.to_string()))
    }
}

impl TryFrom<String> for ConditionId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ConditionId> for String {
    fn from(c: ConditionId) -> String {
        c.as_str().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionParams {
    pub id: String,
    pub click_cost: f64,
    /// Reward support per depth, shallowest first.
    pub supports: Vec<Vec<f64>>,
}

/// Versioned parameter table for all conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionTable {
    pub version: String,
    pub default_trials: usize,
    pub branching: Vec<usize>,
    #[serde(rename = "condition")]
    pub conditions: Vec<ConditionParams>,
}

const DEFAULT_TABLE: &str = include_str!("conditions.toml");

impl ConditionTable {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: ConditionTable =
            toml::from_str(text).map_err(|e| Error::InvalidInput(format!("condition table: {e}")))?;
        for c in &table.conditions {
            c.id.parse::<ConditionId>()?;
            if c.supports.len() != table.branching.len() {
                return Err(Error::InvalidInput(format!(
                    "condition {} lists {} supports for {} levels",
                    c.id,
                    c.supports.len(),
                    table.branching.len()
                )));
            }
        }
        Ok(table)
    }

    /// The built-in table.
    pub fn default_table() -> &'static ConditionTable {
        static TABLE: OnceLock<ConditionTable> = OnceLock::new();
        TABLE.get_or_init(|| ConditionTable::from_toml(DEFAULT_TABLE).expect("built-in condition table"))
    }

    pub fn params(&self, condition: ConditionId) -> Result<&ConditionParams> {
        self.conditions
            .iter()
            .find(|c| c.id == condition.as_str())
            .ok_or_else(|| Error::UnknownCondition(condition.to_string()))
    }

    pub fn spec(&self, condition: ConditionId) -> Result<TrialSpec> {
        let p = self.params(condition)?;
        TrialSpec::layered(&self.branching, &p.supports, p.click_cost)
    }

    /// A trial of `condition` with rewards drawn from `seed`.
    pub fn make_env(&self, condition: ConditionId, seed: u64) -> Result<(TrialSpec, GroundTruth)> {
        let spec = self
            .spec(condition)?
            .with_provenance(Some(condition.to_string()), Some(seed));
        let truth = GroundTruth::sample(&spec, &mut rng::rng(seed));
        Ok((spec, truth))
    }
}

/// Generate one trial of a condition from the built-in table.
pub fn make_condition_env(condition: ConditionId, seed: u64) -> Result<(TrialSpec, GroundTruth)> {
    ConditionTable::default_table().make_env(condition, seed)
}
