//! Feature vectors f(b, c) over (belief, computation) pairs.
//!
//! Features are raw (not normalized). Each definition carries a documented
//! typical magnitude (`scale`), used to size parameter bounds for models
//! whose weights are fitted directly; REINFORCE agents divide by it.
//!
//! | name                   | value for Click(n)                                   | value for ⊥     | scale |
//! |------------------------|------------------------------------------------------|-----------------|-------|
//! | intercept              | 1                                                    | 1               | 1     |
//! | termination            | 0                                                    | 1               | 1     |
//! | click_cost             | −λ                                                   | 0               | 1     |
//! | depth                  | depth of n                                           | 0               | 3     |
//! | best_path_through_node | best expected path value among paths through n       | 0               | 50    |
//! | termination_value      | 0                                                    | 𝕄 (best path)   | 50    |
//! | node_variance          | variance of n's reward distribution                  | 0               | 1000  |
//! | max_path_through_node  | highest achievable return through n                  | 0               | 100   |
//! | min_path_through_node  | lowest achievable return through n                   | 0               | 100   |
//! | pruning                | 1 if best_path_through_node < threshold              | 0               | 1     |
//! | parent_revealed        | 1 if n's parent is the root or revealed              | 0               | 1     |
//! | clicks_so_far          | 0                                                    | n_clicks        | 10    |
//! | is_leaf                | 1 if n is a leaf                                     | 0               | 1     |
//! | same_node_count        | past clicks on n                                     | 0               | 30    |
//! | same_branch_count      | past clicks in n's branch                            | 0               | 100   |
//! | same_level_count       | past clicks at n's depth                             | 0               | 100   |

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{BeliefState, Computation};
use crate::error::{Error, Result};

/// Cumulative counts of every earlier click by one agent, keyed by
/// structural position (node id, branch root id, depth).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickHistory {
    pub node: Vec<u32>,
    pub branch: Vec<u32>,
    pub level: Vec<u32>,
}

fn get(v: &[u32], i: usize) -> u32 {
    v.get(i).copied().unwrap_or(0)
}

fn bump(v: &mut Vec<u32>, i: usize) {
    if v.len() <= i {
        v.resize(i + 1, 0);
    }
    v[i] += 1;
}

impl ClickHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self, id: usize) -> u32 {
        get(&self.node, id)
    }

    pub fn branch_count(&self, branch: usize) -> u32 {
        get(&self.branch, branch)
    }

    pub fn level_count(&self, depth: usize) -> u32 {
        get(&self.level, depth)
    }

    /// Habit counts (same node, same branch, same level) for a click on `id`.
    pub fn counts_for(&self, b: &BeliefState, id: usize) -> [f64; 3] {
        let spec = b.spec();
        [
            f64::from(self.node_count(id)),
            f64::from(self.branch_count(spec.branch_of(id))),
            f64::from(self.level_count(spec.depth(id))),
        ]
    }

    /// Record a computation. Termination leaves the history unchanged.
    pub fn update(&mut self, b: &BeliefState, c: Computation) {
        if let Computation::Click(id) = c {
            let spec = b.spec();
            bump(&mut self.node, id);
            bump(&mut self.branch, spec.branch_of(id));
            bump(&mut self.level, spec.depth(id));
        }
    }
}

/// Pure form of [`ClickHistory::update`].
pub fn habit_count_update(h: &ClickHistory, b: &BeliefState, c: Computation) -> ClickHistory {
    let mut next = h.clone();
    next.update(b, c);
    next
}

pub type CustomFeature = Arc<dyn Fn(&BeliefState, Computation, &ClickHistory) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum FeatureKind {
    Intercept,
    Termination,
    ClickCost,
    Depth,
    BestPathThroughNode,
    TerminationValue,
    NodeVariance,
    MaxPathThroughNode,
    MinPathThroughNode,
    Pruning { threshold: f64 },
    ParentRevealed,
    ClicksSoFar,
    IsLeaf,
    SameNodeCount,
    SameBranchCount,
    SameLevelCount,
    Custom(CustomFeature),
}

impl fmt::Debug for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::Custom(_) => f.write_str("Custom(..)"),
            FeatureKind::Pruning { threshold } => write!(f, "Pruning {{ threshold: {threshold} }}"),
            other => write!(f, "{}", kind_name(other)),
        }
    }
}

fn kind_name(k: &FeatureKind) -> &'static str {
    match k {
        FeatureKind::Intercept => "intercept",
        FeatureKind::Termination => "termination",
        FeatureKind::ClickCost => "click_cost",
        FeatureKind::Depth => "depth",
        FeatureKind::BestPathThroughNode => "best_path_through_node",
        FeatureKind::TerminationValue => "termination_value",
        FeatureKind::NodeVariance => "node_variance",
        FeatureKind::MaxPathThroughNode => "max_path_through_node",
        FeatureKind::MinPathThroughNode => "min_path_through_node",
        FeatureKind::Pruning { .. } => "pruning",
        FeatureKind::ParentRevealed => "parent_revealed",
        FeatureKind::ClicksSoFar => "clicks_so_far",
        FeatureKind::IsLeaf => "is_leaf",
        FeatureKind::SameNodeCount => "same_node_count",
        FeatureKind::SameBranchCount => "same_branch_count",
        FeatureKind::SameLevelCount => "same_level_count",
        FeatureKind::Custom(_) => "custom",
    }
}

impl FeatureKind {
    pub fn is_habit(&self) -> bool {
        matches!(
            self,
            FeatureKind::SameNodeCount | FeatureKind::SameBranchCount | FeatureKind::SameLevelCount
        )
    }

    fn eval(&self, b: &BeliefState, c: Computation, h: &ClickHistory) -> f64 {
        let spec = b.spec();
        let click = match c {
            Computation::Click(n) => Some(n),
            Computation::Terminate => None,
        };
        let on_click = |f: &dyn Fn(usize) -> f64| click.map_or(0.0, f);
        let indicator = |x: bool| if x { 1.0 } else { 0.0 };
        match self {
            FeatureKind::Intercept => 1.0,
            FeatureKind::Termination => indicator(click.is_none()),
            FeatureKind::ClickCost => on_click(&|_| -spec.click_cost),
            FeatureKind::Depth => on_click(&|n| spec.depth(n) as f64),
            FeatureKind::BestPathThroughNode => on_click(&|n| b.best_path_value_through(n)),
            FeatureKind::TerminationValue => {
                if click.is_none() {
                    b.best_path_value()
                } else {
                    0.0
                }
            }
            FeatureKind::NodeVariance => on_click(&|n| spec.dist(n).map_or(0.0, |d| d.variance())),
            FeatureKind::MaxPathThroughNode => on_click(&|n| b.path_range_through(n).1),
            FeatureKind::MinPathThroughNode => on_click(&|n| b.path_range_through(n).0),
            FeatureKind::Pruning { threshold } => {
                on_click(&|n| indicator(b.best_path_value_through(n) < *threshold))
            }
            FeatureKind::ParentRevealed => on_click(&|n| {
                indicator(spec.parent(n).is_none_or(|p| p == 0 || b.is_revealed(p)))
            }),
            FeatureKind::ClicksSoFar => {
                if click.is_none() {
                    b.n_clicks() as f64
                } else {
                    0.0
                }
            }
            FeatureKind::IsLeaf => on_click(&|n| indicator(spec.is_leaf(n))),
            FeatureKind::SameNodeCount => on_click(&|n| h.counts_for(b, n)[0]),
            FeatureKind::SameBranchCount => on_click(&|n| h.counts_for(b, n)[1]),
            FeatureKind::SameLevelCount => on_click(&|n| h.counts_for(b, n)[2]),
            FeatureKind::Custom(f) => f(b, c, h),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
    /// Typical magnitude in the default conditions.
    pub scale: f64,
}

impl FeatureDef {
    pub fn new(name: impl Into<String>, kind: FeatureKind, scale: f64) -> Self {
        FeatureDef { name: name.into(), kind, scale }
    }

    pub fn custom(
        name: impl Into<String>,
        scale: f64,
        f: impl Fn(&BeliefState, Computation, &ClickHistory) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(name, FeatureKind::Custom(Arc::new(f)), scale)
    }
}

/// Manifest form of a registry: identity plus ordered feature names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryManifest {
    pub name: String,
    pub version: String,
    pub features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, w: &[f64]) -> f64 {
        self.0.iter().zip(w).map(|(f, w)| f * w).sum()
    }
}

impl std::ops::Deref for FeatureVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Ordered, named feature definitions. The order is fixed for a run and
/// defines the meaning of every weight vector.
#[derive(Debug, Clone)]
pub struct FeatureRegistry {
    name: String,
    version: String,
    defs: Vec<FeatureDef>,
}

pub const DEFAULT_PRUNING_THRESHOLD: f64 = 0.0;

impl FeatureRegistry {
    pub const DEFAULT_NAME: &'static str = "mouselab-default";
    pub const DEFAULT_VERSION: &'static str = "1";

    pub fn new(name: impl Into<String>, version: impl Into<String>, defs: Vec<FeatureDef>) -> Result<Self> {
        let reg = FeatureRegistry { name: name.into(), version: version.into(), defs };
        for (i, d) in reg.defs.iter().enumerate() {
            if reg.defs[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::InvalidInput(format!("duplicate feature name `{}`", d.name)));
            }
        }
        Ok(reg)
    }

    fn catalog(name: &str) -> Option<FeatureDef> {
        use FeatureKind::*;
        let (kind, scale) = match name {
            "intercept" => (Intercept, 1.0),
            "termination" => (Termination, 1.0),
            "click_cost" => (ClickCost, 1.0),
            "depth" => (Depth, 3.0),
            "best_path_through_node" => (BestPathThroughNode, 50.0),
            "termination_value" => (TerminationValue, 50.0),
            "node_variance" => (NodeVariance, 1000.0),
            "max_path_through_node" => (MaxPathThroughNode, 100.0),
            "min_path_through_node" => (MinPathThroughNode, 100.0),
            "pruning" => (Pruning { threshold: DEFAULT_PRUNING_THRESHOLD }, 1.0),
            "parent_revealed" => (ParentRevealed, 1.0),
            "clicks_so_far" => (ClicksSoFar, 10.0),
            "is_leaf" => (IsLeaf, 1.0),
            "same_node_count" => (SameNodeCount, 30.0),
            "same_branch_count" => (SameBranchCount, 100.0),
            "same_level_count" => (SameLevelCount, 100.0),
            _ => return None,
        };
        Some(FeatureDef::new(name, kind, scale))
    }

    pub const DEFAULT_FEATURES: [&'static str; 16] = [
        "intercept",
        "termination",
        "click_cost",
        "depth",
        "best_path_through_node",
        "termination_value",
        "node_variance",
        "max_path_through_node",
        "min_path_through_node",
        "pruning",
        "parent_revealed",
        "clicks_so_far",
        "is_leaf",
        "same_node_count",
        "same_branch_count",
        "same_level_count",
    ];

    /// The canonical 16-feature registry.
    pub fn default_registry() -> Self {
        let defs = Self::DEFAULT_FEATURES
            .iter()
            .map(|n| Self::catalog(n).expect("catalog entry"))
            .collect();
        FeatureRegistry::new(Self::DEFAULT_NAME, Self::DEFAULT_VERSION, defs).expect("unique names")
    }

    /// Resolve a manifest against the built-in catalog.
    pub fn from_manifest(m: &RegistryManifest) -> Result<Self> {
        let defs = m
            .features
            .iter()
            .map(|n| Self::catalog(n).ok_or_else(|| Error::InvalidInput(format!("unknown feature `{n}`"))))
            .collect::<Result<Vec<_>>>()?;
        FeatureRegistry::new(m.name.clone(), m.version.clone(), defs)
    }

    pub fn manifest(&self) -> RegistryManifest {
        RegistryManifest {
            name: self.name.clone(),
            version: self.version.clone(),
            features: self.defs.iter().map(|d| d.name.clone()).collect(),
        }
    }

    /// `name@version`, recorded alongside every fit and simulation.
    pub fn tag(&self) -> String {
        format!("{}@{}", self.name, self.version)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn dim(&self) -> usize {
        self.defs.len()
    }

    pub fn defs(&self) -> &[FeatureDef] {
        &self.defs
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.defs.iter().position(|d| d.name == name)
    }

    /// Append a feature. The version should be bumped by the caller.
    pub fn extend(mut self, def: FeatureDef, version: impl Into<String>) -> Result<Self> {
        if self.index_of(&def.name).is_some() {
            return Err(Error::InvalidInput(format!("duplicate feature name `{}`", def.name)));
        }
        self.defs.push(def);
        self.version = version.into();
        Ok(self)
    }

    /// The strategy view used by REINFORCE, LVOC and the non-learning model:
    /// every feature except the habit counts.
    pub fn strategy_view(&self) -> Self {
        FeatureRegistry {
            name: format!("{}/strategy", self.name),
            version: self.version.clone(),
            defs: self.defs.iter().filter(|d| !d.kind.is_habit()).cloned().collect(),
        }
    }

    pub fn compute(&self, b: &BeliefState, c: Computation, h: &ClickHistory) -> Result<FeatureVector> {
        b.check_valid(c)?;
        Ok(self.compute_unchecked(b, c, h))
    }

    pub(crate) fn compute_unchecked(&self, b: &BeliefState, c: Computation, h: &ClickHistory) -> FeatureVector {
        FeatureVector(self.defs.iter().map(|d| d.kind.eval(b, c, h)).collect())
    }

    /// Features for every valid computation, in canonical order.
    pub fn compute_all(&self, b: &BeliefState, h: &ClickHistory) -> (Vec<Computation>, Vec<FeatureVector>) {
        let cs = b.computations();
        let fs = cs.iter().map(|&c| self.compute_unchecked(b, c, h)).collect();
        (cs, fs)
    }
}

/// f(b, c) under a registry.
pub fn compute_features(
    b: &BeliefState,
    c: Computation,
    h: &ClickHistory,
    reg: &FeatureRegistry,
) -> Result<FeatureVector> {
    reg.compute(b, c, h)
}
