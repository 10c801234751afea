//! Bounded free-parameter spaces, one per model configuration.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureRegistry;
use crate::learners::{HabitWeights, LvocParams, ReinforceParams};
use crate::metacontrol::{Base, LearnerParams, ModelConfig, ModelParams, Stage1, StoppingRule};

/// Policy weights of directly fitted softmax models lie in ±WEIGHT_RANGE / scale.
pub const WEIGHT_RANGE: f64 = 5.0;
/// LVOC prior means lie in ±LVOC_MEAN_RANGE / scale (Q-values are in reward units).
pub const LVOC_MEAN_RANGE: f64 = 50.0;
pub const TERMINATION_BIAS_RANGE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Linear,
    Log,
    Integer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDim {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
}

impl ParamDim {
    fn new(name: impl Into<String>, lo: f64, hi: f64, scale: Scale) -> Self {
        ParamDim { name: name.into(), lo, hi, scale }
    }

    /// Map u ∈ [0, 1] into the box.
    pub fn from_unit(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self.scale {
            Scale::Linear => self.lo + u * (self.hi - self.lo),
            Scale::Log => (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp().clamp(self.lo, self.hi),
            Scale::Integer => (self.lo + (u * (self.hi - self.lo + 1.0)).floor()).min(self.hi),
        }
    }

    pub fn to_unit(&self, x: f64) -> f64 {
        let u = match self.scale {
            Scale::Linear => (x - self.lo) / (self.hi - self.lo),
            Scale::Log => (x.ln() - self.lo.ln()) / (self.hi.ln() - self.lo.ln()),
            Scale::Integer => (x - self.lo + 0.5) / (self.hi - self.lo + 1.0),
        };
        u.clamp(0.0, 1.0)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi && (self.scale != Scale::Integer || x.fract() == 0.0)
    }
}

/// Named free-parameter values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub BTreeMap<String, f64>);

impl ParamVector {
    pub fn get(&self, name: &str) -> Result<f64> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("missing parameter `{name}`")))
    }

    pub fn set(&mut self, name: impl Into<String>, v: f64) {
        self.0.insert(name.into(), v);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The box-bounded search space of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpace {
    pub config: ModelConfig,
    pub dims: Vec<ParamDim>,
    /// Feature names of the base's registry view.
    features: Vec<String>,
}

fn weight_dims(prefix: &str, registry: &FeatureRegistry, range: f64, skip: &[&str]) -> Vec<ParamDim> {
    registry
        .defs()
        .iter()
        .filter(|d| !skip.contains(&d.name.as_str()))
        .map(|d| ParamDim::new(format!("{prefix}.{}", d.name), -range / d.scale, range / d.scale, Scale::Linear))
        .collect()
}

/// Non-learning weights exclude the intercept: it adds the same amount to
/// every computation and so cannot change the softmax.
const NONLEARNING_FIXED: &[&str] = &["intercept"];

impl ParamSpace {
    pub fn for_config(config: &ModelConfig, registry: &FeatureRegistry) -> Result<Self> {
        config.validate()?;
        let view = match config.base {
            Base::Habit => registry.clone(),
            _ => registry.strategy_view(),
        };
        let mut dims = Vec::new();
        match config.base {
            Base::Reinforce => {
                dims.push(ParamDim::new("alpha", 1e-4, 1.0, Scale::Log));
                dims.push(ParamDim::new("gamma", 0.0, 1.0, Scale::Linear));
                dims.push(ParamDim::new("tau", 1e-3, 100.0, Scale::Log));
            }
            Base::Lvoc => {
                dims.extend(weight_dims("mu", &view, LVOC_MEAN_RANGE, &[]));
                dims.push(ParamDim::new("prior_var", 1e-3, 100.0, Scale::Log));
                dims.push(ParamDim::new("n_samples", 1.0, 32.0, Scale::Integer));
            }
            Base::Habit => {
                for name in ["same_node_count", "same_branch_count", "same_level_count"] {
                    let def = view
                        .defs()
                        .iter()
                        .find(|d| d.name == name)
                        .ok_or_else(|| Error::InvalidConfig(format!("registry {} lacks `{name}`", view.tag())))?;
                    let r = WEIGHT_RANGE / def.scale;
                    dims.push(ParamDim::new(format!("w.{name}"), -r, r, Scale::Linear));
                }
                dims.push(ParamDim::new(
                    "termination_bias",
                    -TERMINATION_BIAS_RANGE,
                    TERMINATION_BIAS_RANGE,
                    Scale::Linear,
                ));
            }
            Base::NonLearning => dims.extend(weight_dims("w", &view, WEIGHT_RANGE, NONLEARNING_FIXED)),
        }
        match config.stage1 {
            Stage1::None => {}
            Stage1::Fixed => dims.push(ParamDim::new("stop.eta", 0.0, 1.0, Scale::Linear)),
            Stage1::Decreasing => {
                dims.push(ParamDim::new("stop.a", -3.0, 5.0, Scale::Linear));
                dims.push(ParamDim::new("stop.b", -5.0, 3.0, Scale::Linear));
            }
            Stage1::PastPerformance => dims.push(ParamDim::new("stop.eta", 0.0, 50.0, Scale::Linear)),
        }
        if config.stage1 != Stage1::None {
            dims.push(ParamDim::new("stop.tau", 1e-3, 100.0, Scale::Log));
        }
        Ok(ParamSpace {
            config: config.clone(),
            dims,
            features: view.defs().iter().map(|d| d.name.clone()).collect(),
        })
    }

    /// Parameters used when simulating without fitted values: plain
    /// REINFORCE at α = 0.1, γ = 1, τ = 1, habit agents with a mild pull
    /// toward earlier clicks, zero-mean LVOC and non-learning weights.
    pub fn defaults(&self) -> ParamVector {
        let mut v = ParamVector::default();
        for d in &self.dims {
            let x = match d.name.as_str() {
                "alpha" => 0.1,
                "gamma" | "tau" | "prior_var" | "n_samples" | "stop.tau" => 1.0,
                "w.same_node_count" if self.config.base == Base::Habit => 0.1,
                "w.same_branch_count" if self.config.base == Base::Habit => 0.02,
                "w.same_level_count" if self.config.base == Base::Habit => 0.01,
                "termination_bias" => 2.0,
                "stop.eta" if self.config.stage1 == Stage1::PastPerformance => 5.0,
                "stop.eta" => 0.5,
                "stop.a" => 1.0,
                "stop.b" => -1.0,
                _ => 0.0,
            };
            v.set(d.name.clone(), x);
        }
        v
    }

    /// Number of free parameters.
    pub fn k(&self) -> usize {
        self.dims.len()
    }

    pub fn from_unit(&self, u: &[f64]) -> ParamVector {
        ParamVector(
            self.dims
                .iter()
                .zip(u)
                .map(|(d, &x)| (d.name.clone(), d.from_unit(x)))
                .collect(),
        )
    }

    pub fn to_unit(&self, v: &ParamVector) -> Result<Vec<f64>> {
        self.dims.iter().map(|d| Ok(d.to_unit(v.get(&d.name)?))).collect()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> ParamVector {
        let u: Vec<f64> = (0..self.k()).map(|_| rng.random()).collect();
        self.from_unit(&u)
    }

    /// All required names present, no extras, every value in bounds.
    pub fn check(&self, v: &ParamVector) -> Result<()> {
        if v.len() != self.k() {
            return Err(Error::InvalidParameter(format!(
                "{} expects {} parameters, got {}",
                self.config.id(),
                self.k(),
                v.len()
            )));
        }
        for d in &self.dims {
            let x = v.get(&d.name)?;
            if !d.contains(x) {
                return Err(Error::InvalidParameter(format!(
                    "{} = {x} is outside [{}, {}]",
                    d.name, d.lo, d.hi
                )));
            }
        }
        Ok(())
    }

    fn weights(&self, v: &ParamVector, prefix: &str, fixed: &[&str]) -> Result<Vec<f64>> {
        self.features
            .iter()
            .map(|f| {
                if fixed.contains(&f.as_str()) {
                    Ok(0.0)
                } else {
                    v.get(&format!("{prefix}.{f}"))
                }
            })
            .collect()
    }

    /// Typed model parameters for a checked vector.
    pub fn decode(&self, v: &ParamVector) -> Result<ModelParams> {
        self.check(v)?;
        let learner = match self.config.base {
            Base::Reinforce => LearnerParams::Reinforce(ReinforceParams {
                alpha: v.get("alpha")?,
                gamma: v.get("gamma")?,
                tau: v.get("tau")?,
            }),
            Base::Lvoc => LearnerParams::Lvoc(LvocParams::new(
                self.weights(v, "mu", &[])?,
                v.get("prior_var")?,
                v.get("n_samples")? as usize,
            )),
            Base::Habit => LearnerParams::Habit(HabitWeights {
                node: v.get("w.same_node_count")?,
                branch: v.get("w.same_branch_count")?,
                level: v.get("w.same_level_count")?,
                termination_bias: v.get("termination_bias")?,
            }),
            Base::NonLearning => LearnerParams::NonLearning { weights: self.weights(v, "w", NONLEARNING_FIXED)? },
        };
        let stop = match self.config.stage1 {
            Stage1::None => None,
            Stage1::Fixed => Some(StoppingRule::Fixed { eta: v.get("stop.eta")?, tau: v.get("stop.tau")? }),
            Stage1::Decreasing => Some(StoppingRule::Decreasing {
                a: v.get("stop.a")?,
                b: v.get("stop.b")?,
                tau: v.get("stop.tau")?,
            }),
            Stage1::PastPerformance => Some(StoppingRule::past_performance(v.get("stop.eta")?, v.get("stop.tau")?)),
        };
        Ok(ModelParams { learner, stop })
    }

    /// Inverse of [`ParamSpace::decode`] for parameters within bounds.
    pub fn encode(&self, p: &ModelParams) -> Result<ParamVector> {
        let mut v = ParamVector::default();
        match &p.learner {
            LearnerParams::Reinforce(r) => {
                v.set("alpha", r.alpha);
                v.set("gamma", r.gamma);
                v.set("tau", r.tau);
            }
            LearnerParams::Lvoc(l) => {
                for (f, m) in self.features.iter().zip(&l.prior_mean) {
                    v.set(format!("mu.{f}"), *m);
                }
                v.set("prior_var", l.prior_var);
                v.set("n_samples", l.n_samples as f64);
            }
            LearnerParams::Habit(h) => {
                v.set("w.same_node_count", h.node);
                v.set("w.same_branch_count", h.branch);
                v.set("w.same_level_count", h.level);
                v.set("termination_bias", h.termination_bias);
            }
            LearnerParams::NonLearning { weights } => {
                for (f, w) in self.features.iter().zip(weights) {
                    if !NONLEARNING_FIXED.contains(&f.as_str()) {
                        v.set(format!("w.{f}"), *w);
                    }
                }
            }
        }
        match p.stop {
            None => {}
            Some(StoppingRule::Fixed { eta, tau }) | Some(StoppingRule::PastPerformance { eta, tau, .. }) => {
                v.set("stop.eta", eta);
                v.set("stop.tau", tau);
            }
            Some(StoppingRule::Decreasing { a, b, tau }) => {
                v.set("stop.a", a);
                v.set("stop.b", b);
                v.set("stop.tau", tau);
            }
        }
        self.check(&v)?;
        Ok(v)
    }
}
