//! Task structure: the node tree, per-node reward distributions and the
//! sampled ground truth of one trial.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-12;
const BOUND_TOL: f64 = 1e-9;

/// Finite discrete reward distribution over points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardDist {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl RewardDist {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let d = RewardDist { values, probs };
        d.validate()?;
        Ok(d)
    }

    /// Equal mass on every support point.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let p = 1.0 / values.len() as f64;
        let probs = vec![p; values.len()];
        Self::new(values, probs)
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidSpec("empty reward support".into()));
        }
        if self.values.len() != self.probs.len() {
            return Err(Error::InvalidSpec(format!(
                "support has {} values but {} probabilities",
                self.values.len(),
                self.probs.len()
            )));
        }
        if self.values.iter().chain(&self.probs).any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpec("non-finite reward distribution entry".into()));
        }
        if self.probs.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidSpec("negative probability".into()));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidSpec(format!("probabilities sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values
            .iter()
            .zip(&self.probs)
            .map(|(v, p)| p * (v - m) * (v - m))
            .sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.values.iter().zip(&self.probs).any(|(&x, &p)| x == v && p > 0.0)
    }

    /// Inverse-CDF draw from a uniform variate in [0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for (v, p) in self.values.iter().zip(&self.probs) {
            acc += p;
            if u < acc && *p > 0.0 {
                return *v;
            }
        }
        // u landed in the rounding slack above the last cumulative sum
        self.values
            .iter()
            .zip(&self.probs)
            .rev()
            .find(|(_, p)| **p > 0.0)
            .map(|(v, _)| *v)
            .unwrap_or(self.values[0])
    }

    /// Support span (max - min).
    pub fn span(&self) -> f64 {
        self.max() - self.min()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Absent on the root, required everywhere else.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardDist>,
}

/// JSON shape of a [`TrialSpec`]; derived fields are re-checked on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrialSpecRepr {
    #[serde(default = "schema_version")]
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    condition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    click_cost: f64,
    nodes: Vec<Node>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v_max: Option<f64>,
}

fn schema_version() -> u32 {
    TrialSpec::SCHEMA_VERSION
}

/// An immutable planning task: a rooted tree with hidden node rewards and a
/// per-click cost.
///
/// Node ids are dense `0..n` with the root at id 0. Root-to-leaf paths are
/// stored without the root and sorted lexicographically by node-id sequence,
/// which is the tie-breaking order used everywhere a path is chosen.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "TrialSpecRepr", into = "TrialSpecRepr")]
pub struct TrialSpec {
    pub condition: Option<String>,
    pub seed: Option<u64>,
    pub click_cost: f64,
    nodes: Vec<Node>,
    children: Vec<Vec<usize>>,
    paths: Vec<Vec<usize>>,
    paths_through: Vec<Vec<usize>>,
    branch: Vec<usize>,
    max_depth: usize,
    v_min: f64,
    v_max: f64,
}

impl PartialEq for TrialSpec {
    fn eq(&self, other: &Self) -> bool {
        self.condition == other.condition
            && self.seed == other.seed
            && self.click_cost == other.click_cost
            && self.nodes == other.nodes
    }
}

impl TryFrom<TrialSpecRepr> for TrialSpec {
    type Error = Error;

    fn try_from(r: TrialSpecRepr) -> Result<Self> {
        if r.version != TrialSpec::SCHEMA_VERSION {
            return Err(Error::InvalidSpec(format!("unsupported schema version {}", r.version)));
        }
        let spec = TrialSpec::new(r.nodes, r.click_cost)?.with_provenance(r.condition, r.seed);
        for (name, given, derived) in [("v_min", r.v_min, spec.v_min), ("v_max", r.v_max, spec.v_max)] {
            if let Some(g) = given {
                if (g - derived).abs() > BOUND_TOL {
                    return Err(Error::InvalidSpec(format!(
                        "{name} is {g} but the tree implies {derived}"
                    )));
                }
            }
        }
        Ok(spec)
    }
}

impl From<TrialSpec> for TrialSpecRepr {
    fn from(s: TrialSpec) -> Self {
        TrialSpecRepr {
            version: TrialSpec::SCHEMA_VERSION,
            condition: s.condition,
            seed: s.seed,
            click_cost: s.click_cost,
            v_min: Some(s.v_min),
            v_max: Some(s.v_max),
            nodes: s.nodes,
        }
    }
}

impl TrialSpec {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn new(nodes: Vec<Node>, click_cost: f64) -> Result<Self> {
        if !(click_cost.is_finite() && click_cost >= 0.0) {
            return Err(Error::InvalidSpec(format!("click cost must be >= 0, got {click_cost}")));
        }
        let n = nodes.len();
        if n < 2 {
            return Err(Error::InvalidSpec("tree needs a root and at least one node".into()));
        }
        let mut children = vec![Vec::new(); n];
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::InvalidSpec(format!("node at position {i} has id {}", node.id)));
            }
            match node.parent {
                None if i == 0 => {
                    if node.depth != 0 || node.reward.is_some() {
                        return Err(Error::InvalidSpec("root must have depth 0 and no reward".into()));
                    }
                }
                None => return Err(Error::InvalidSpec(format!("node {i} has no parent"))),
                Some(_) if i == 0 => return Err(Error::InvalidSpec("root has a parent".into())),
                Some(p) => {
                    // parents precede children, which rules out cycles
                    if p >= i {
                        return Err(Error::InvalidSpec(format!(
                            "node {i} has parent {p}; parents must have smaller ids"
                        )));
                    }
                    if node.depth != nodes[p].depth + 1 {
                        return Err(Error::InvalidSpec(format!("node {i} has inconsistent depth")));
                    }
                    match &node.reward {
                        Some(d) => d.validate()?,
                        None => {
                            return Err(Error::InvalidSpec(format!("node {i} has no reward distribution")))
                        }
                    }
                    children[p].push(i);
                }
            }
        }

        let mut paths = Vec::new();
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((id, prefix)) = stack.pop() {
            if id != 0 && children[id].is_empty() {
                paths.push(prefix);
                continue;
            }
            for &c in children[id].iter().rev() {
                let mut p = prefix.clone();
                p.push(c);
                stack.push((c, p));
            }
        }
        paths.sort();

        let mut paths_through = vec![Vec::new(); n];
        for (pi, path) in paths.iter().enumerate() {
            for &id in path {
                paths_through[id].push(pi);
            }
        }

        let mut branch = vec![0; n];
        for i in 1..n {
            let p = nodes[i].parent.unwrap_or(0);
            branch[i] = if p == 0 { i } else { branch[p] };
        }

        let max_depth = nodes.iter().map(|n| n.depth).max().unwrap_or(0);
        let dist = |id: usize| nodes[id].reward.as_ref().expect("validated non-root reward");
        let path_sum = |path: &Vec<usize>, f: &dyn Fn(&RewardDist) -> f64| -> f64 {
            path.iter().map(|&id| f(dist(id))).sum()
        };
        let v_min = paths
            .iter()
            .map(|p| path_sum(p, &|d| d.min()))
            .fold(f64::INFINITY, f64::min);
        let v_max = paths
            .iter()
            .map(|p| path_sum(p, &|d| d.max()))
            .fold(f64::NEG_INFINITY, f64::max);

        Ok(TrialSpec {
            condition: None,
            seed: None,
            click_cost,
            nodes,
            children,
            paths,
            paths_through,
            branch,
            max_depth,
            v_min,
            v_max,
        })
    }

    /// Build a tree where every node at depth `d` has `branching[d]`
    /// children, with per-depth reward supports (uniform mass).
    pub fn layered(branching: &[usize], supports: &[Vec<f64>], click_cost: f64) -> Result<Self> {
        if branching.len() != supports.len() || branching.is_empty() {
            return Err(Error::InvalidSpec(
                "need one branching factor and one support per depth".into(),
            ));
        }
        let mut nodes = vec![Node { id: 0, parent: None, depth: 0, reward: None }];
        fn grow(
            nodes: &mut Vec<Node>,
            parent: usize,
            depth: usize,
            branching: &[usize],
            supports: &[Vec<f64>],
        ) -> Result<()> {
            if depth > branching.len() {
                return Ok(());
            }
            for _ in 0..branching[depth - 1] {
                let id = nodes.len();
                nodes.push(Node {
                    id,
                    parent: Some(parent),
                    depth,
                    reward: Some(RewardDist::uniform(supports[depth - 1].clone())?),
                });
                grow(nodes, id, depth + 1, branching, supports)?;
            }
            Ok(())
        }
        grow(&mut nodes, 0, 1, branching, supports)?;
        TrialSpec::new(nodes, click_cost)
    }

    pub fn with_provenance(mut self, condition: Option<String>, seed: Option<u64>) -> Self {
        self.condition = condition;
        self.seed = seed;
        self
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> Option<&Node> {
        self.nodes.get(id)
    }

    /// Reward distribution of a non-root node.
    pub fn dist(&self, id: usize) -> Option<&RewardDist> {
        self.nodes.get(id).and_then(|n| n.reward.as_ref())
    }

    pub fn depth(&self, id: usize) -> usize {
        self.nodes[id].depth
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.nodes[id].parent
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    /// The depth-1 ancestor of a node (the node itself at depth 1).
    pub fn branch_of(&self, id: usize) -> usize {
        self.branch[id]
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        id != 0 && self.children[id].is_empty()
    }

    /// All root-to-leaf paths (root excluded), lexicographically sorted.
    pub fn paths(&self) -> &[Vec<usize>] {
        &self.paths
    }

    /// Indices into [`paths`](Self::paths) of the paths containing `id`.
    pub fn paths_through(&self, id: usize) -> &[usize] {
        &self.paths_through[id]
    }

    pub fn path_index(&self, path: &[usize]) -> Option<usize> {
        self.paths.binary_search_by(|p| p.as_slice().cmp(path)).ok()
    }

    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    /// Same node layout and distributions, ignoring cost and provenance.
    pub fn same_structure(&self, other: &TrialSpec) -> bool {
        self.nodes.len() == other.nodes.len()
            && self
                .nodes
                .iter()
                .zip(&other.nodes)
                .all(|(a, b)| a.parent == b.parent && a.depth == b.depth)
    }
}

/// One realized reward per node, indexed by node id. The root entry is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub rewards: Vec<f64>,
}

impl GroundTruth {
    pub fn sample(spec: &TrialSpec, rng: &mut impl rand::Rng) -> Self {
        let mut rewards = vec![0.0; spec.n_nodes()];
        for (id, r) in rewards.iter_mut().enumerate().skip(1) {
            let u: f64 = rng.random();
            *r = spec.dist(id).expect("non-root reward").quantile(u);
        }
        GroundTruth { rewards }
    }

    pub fn validate(&self, spec: &TrialSpec) -> Result<()> {
        if self.rewards.len() != spec.n_nodes() {
            return Err(Error::InvalidTruth(format!(
                "{} rewards for {} nodes",
                self.rewards.len(),
                spec.n_nodes()
            )));
        }
        if self.rewards[0] != 0.0 {
            return Err(Error::InvalidTruth("root reward must be 0".into()));
        }
        for (id, &v) in self.rewards.iter().enumerate().skip(1) {
            if !spec.dist(id).is_some_and(|d| d.contains(v)) {
                return Err(Error::InvalidTruth(format!("node {id} value {v} is outside its support")));
            }
        }
        Ok(())
    }

    pub fn value(&self, id: usize) -> f64 {
        self.rewards[id]
    }

    /// Realized sum of rewards along a path.
    pub fn path_return(&self, path: &[usize]) -> f64 {
        path.iter().map(|&id| self.rewards[id]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_leaf(cost: f64) -> TrialSpec {
        TrialSpec::layered(&[2], &[vec![-10.0, 10.0]], cost).unwrap()
    }

    #[test]
    fn three_one_two_tree_has_twelve_nodes_and_six_paths() {
        let s = TrialSpec::layered(
            &[3, 1, 2],
            &[vec![-4.0, -2.0, 2.0, 4.0], vec![-8.0, -4.0, 4.0, 8.0], vec![-48.0, -24.0, 24.0, 48.0]],
            1.0,
        )
        .unwrap();
        assert_eq!(s.n_nodes(), 13);
        assert_eq!(s.paths().len(), 6);
        assert_eq!(s.paths()[0], vec![1, 2, 3]);
        assert_eq!(s.paths()[1], vec![1, 2, 4]);
        assert_eq!(s.branch_of(4), 1);
        assert_eq!(s.branch_of(12), 9);
        assert_eq!(s.v_min(), -60.0);
        assert_eq!(s.v_max(), 60.0);
        assert!(s.is_leaf(3) && !s.is_leaf(2));
    }

    #[test]
    fn rejects_bad_probabilities() {
        assert!(RewardDist::new(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        assert!(RewardDist::new(vec![1.0], vec![1.0]).is_ok());
    }

    #[test]
    fn rejects_cycles_and_orphans() {
        let d = RewardDist::uniform(vec![0.0]).unwrap();
        let nodes = vec![
            Node { id: 0, parent: None, depth: 0, reward: None },
            Node { id: 1, parent: Some(2), depth: 1, reward: Some(d.clone()) },
            Node { id: 2, parent: Some(1), depth: 1, reward: Some(d) },
        ];
        assert!(TrialSpec::new(nodes, 1.0).is_err());
    }

    #[test]
    fn json_round_trip_checks_bounds() {
        let s = two_leaf(1.0);
        let js = serde_json::to_string(&s).unwrap();
        let back: TrialSpec = serde_json::from_str(&js).unwrap();
        assert_eq!(back, s);
        let tampered = js.replace("\"v_max\":10.0", "\"v_max\":11.0");
        assert!(serde_json::from_str::<TrialSpec>(&tampered).is_err());
    }

    #[test]
    fn truth_outside_support_rejected() {
        let s = two_leaf(1.0);
        assert!(GroundTruth { rewards: vec![0.0, 10.0, -10.0] }.validate(&s).is_ok());
        assert!(GroundTruth { rewards: vec![0.0, 3.0, -10.0] }.validate(&s).is_err());
        assert!(GroundTruth { rewards: vec![0.0, 10.0] }.validate(&s).is_err());
    }

    #[test]
    fn quantile_covers_support() {
        let d = RewardDist::uniform(vec![-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(d.quantile(0.0), -1.0);
        assert_eq!(d.quantile(0.5), 0.0);
        assert_eq!(d.quantile(0.999_999), 1.0);
    }
}
