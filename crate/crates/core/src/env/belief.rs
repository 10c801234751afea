//! The meta-level MDP: belief states, computations and their transitions.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::tree::{GroundTruth, TrialSpec};
use crate::error::{Error, Result};

/// A meta-level action: reveal one node, or stop planning and act.
///
/// Serialized as a bare integer: the node id for a click and `0` for
/// termination (the root can never be clicked, so the code is unambiguous).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "usize", into = "usize")]
pub enum Computation {
    Terminate,
    Click(usize),
}

impl From<usize> for Computation {
    fn from(code: usize) -> Self {
        if code == 0 {
            Computation::Terminate
        } else {
            Computation::Click(code)
        }
    }
}

impl From<Computation> for usize {
    fn from(c: Computation) -> usize {
        c.code()
    }
}

impl Computation {
    pub fn code(self) -> usize {
        match self {
            Computation::Terminate => 0,
            Computation::Click(n) => n,
        }
    }

    pub fn is_click(self) -> bool {
        matches!(self, Computation::Click(_))
    }
}

impl fmt::Display for Computation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Computation::Terminate => f.write_str("terminate"),
            Computation::Click(n) => write!(f, "click({n})"),
        }
    }
}

/// What is known mid-trial: the revealed node values.
#[derive(Debug, Clone)]
pub struct BeliefState {
    spec: Arc<TrialSpec>,
    revealed: Vec<Option<f64>>,
    n_clicks: usize,
}

impl PartialEq for BeliefState {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.spec, &other.spec) || self.spec == other.spec)
            && self.revealed == other.revealed
            && self.n_clicks == other.n_clicks
    }
}

impl BeliefState {
    /// The initial belief: nothing revealed.
    pub fn new(spec: Arc<TrialSpec>) -> Self {
        let n = spec.n_nodes();
        BeliefState { spec, revealed: vec![None; n], n_clicks: 0 }
    }

    pub fn spec(&self) -> &Arc<TrialSpec> {
        &self.spec
    }

    pub fn n_clicks(&self) -> usize {
        self.n_clicks
    }

    pub fn revealed(&self, id: usize) -> Option<f64> {
        self.revealed.get(id).copied().flatten()
    }

    pub fn is_revealed(&self, id: usize) -> bool {
        self.revealed(id).is_some()
    }

    /// Posterior mean of a node: its value if revealed, else the prior mean.
    /// The root contributes nothing.
    pub fn node_mean(&self, id: usize) -> f64 {
        match (self.revealed[id], self.spec.dist(id)) {
            (Some(v), _) => v,
            (None, Some(d)) => d.mean(),
            (None, None) => 0.0,
        }
    }

    pub fn node_min(&self, id: usize) -> f64 {
        self.revealed[id].unwrap_or_else(|| self.spec.dist(id).map_or(0.0, |d| d.min()))
    }

    pub fn node_max(&self, id: usize) -> f64 {
        self.revealed[id].unwrap_or_else(|| self.spec.dist(id).map_or(0.0, |d| d.max()))
    }

    pub fn is_valid(&self, c: Computation) -> bool {
        match c {
            Computation::Terminate => true,
            Computation::Click(n) => n != 0 && n < self.revealed.len() && self.revealed[n].is_none(),
        }
    }

    pub fn check_valid(&self, c: Computation) -> Result<()> {
        match c {
            Computation::Terminate => Ok(()),
            Computation::Click(0) => Err(Error::invalid_computation(c, "the root cannot be clicked")),
            Computation::Click(n) if n >= self.revealed.len() => {
                Err(Error::invalid_computation(c, "no such node"))
            }
            Computation::Click(n) if self.revealed[n].is_some() => {
                Err(Error::invalid_computation(c, "node already revealed"))
            }
            Computation::Click(_) => Ok(()),
        }
    }

    /// Valid computations in canonical order: termination first, then
    /// clicks by ascending node id. This is also the tie-breaking order.
    pub fn computations(&self) -> Vec<Computation> {
        std::iter::once(Computation::Terminate)
            .chain(
                (1..self.revealed.len())
                    .filter(|&n| self.revealed[n].is_none())
                    .map(Computation::Click),
            )
            .collect()
    }

    pub fn unrevealed(&self) -> impl Iterator<Item = usize> + '_ {
        (1..self.revealed.len()).filter(move |&n| self.revealed[n].is_none())
    }

    /// Reveal a node's true value.
    pub fn reveal(&self, id: usize, truth: &GroundTruth) -> Result<BeliefState> {
        self.check_valid(Computation::Click(id))?;
        let mut next = self.clone();
        next.revealed[id] = Some(truth.value(id));
        next.n_clicks += 1;
        Ok(next)
    }

    /// Reveal a value obtained elsewhere, e.g. from the collection service.
    /// The value must lie in the node's support.
    pub fn observe(&self, id: usize, value: f64) -> Result<BeliefState> {
        self.check_valid(Computation::Click(id))?;
        let support = self.spec.node(id).and_then(|n| n.reward.as_ref()).map(|d| d.values.as_slice());
        if !support.is_some_and(|v| v.contains(&value)) {
            return Err(Error::InvalidTruth(format!("{value} is outside the support of node {id}")));
        }
        let mut next = self.clone();
        next.revealed[id] = Some(value);
        next.n_clicks += 1;
        Ok(next)
    }

    /// Expected return of a root-to-leaf path under this belief.
    pub fn expected_path_value(&self, path: &[usize]) -> Result<f64> {
        self.spec
            .path_index(path)
            .map(|i| self.path_value_at(i))
            .ok_or_else(|| Error::InvalidPath(path.to_vec()))
    }

    pub(crate) fn path_value_at(&self, path_index: usize) -> f64 {
        self.spec.paths()[path_index].iter().map(|&id| self.node_mean(id)).sum()
    }

    /// Index of the greedy path: highest expected value, first in
    /// lexicographic order among ties.
    pub fn greedy_path_index(&self) -> usize {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for i in 0..self.spec.paths().len() {
            let v = self.path_value_at(i);
            if v > best_v {
                best = i;
                best_v = v;
            }
        }
        best
    }

    pub fn greedy_path(&self) -> &[usize] {
        &self.spec.paths()[self.greedy_path_index()]
    }

    /// Value of acting now: the best expected path return.
    pub fn best_path_value(&self) -> f64 {
        self.path_value_at(self.greedy_path_index())
    }

    /// Best expected value among paths through `id`.
    pub fn best_path_value_through(&self, id: usize) -> f64 {
        self.spec
            .paths_through(id)
            .iter()
            .map(|&i| self.path_value_at(i))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest and smallest achievable return over paths through `id`.
    pub fn path_range_through(&self, id: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in self.spec.paths_through(id) {
            let path = &self.spec.paths()[i];
            lo = lo.min(path.iter().map(|&n| self.node_min(n)).sum());
            hi = hi.max(path.iter().map(|&n| self.node_max(n)).sum());
        }
        (lo, hi)
    }

    /// True when `next` is this belief plus exactly one revealed node.
    pub fn one_click_successor(&self, next: &BeliefState) -> Result<usize> {
        if !(Arc::ptr_eq(&self.spec, &next.spec) || self.spec == next.spec) {
            return Err(Error::NotSuccessor("beliefs belong to different trials".into()));
        }
        if next.n_clicks != self.n_clicks + 1 {
            return Err(Error::NotSuccessor(format!(
                "click count goes from {} to {}",
                self.n_clicks, next.n_clicks
            )));
        }
        let mut added = None;
        for (id, (a, b)) in self.revealed.iter().zip(&next.revealed).enumerate() {
            match (a, b) {
                (Some(x), Some(y)) if x == y => {}
                (None, None) => {}
                (None, Some(_)) if added.is_none() => added = Some(id),
                _ => return Err(Error::NotSuccessor(format!("node {id} differs"))),
            }
        }
        added.ok_or_else(|| Error::NotSuccessor("no node was revealed".into()))
    }
}

/// Apply a computation. Clicks cost `click_cost`; termination pays the
/// realized return of the greedy path and leaves the belief unchanged.
pub fn transition(
    belief: &BeliefState,
    c: Computation,
    truth: &GroundTruth,
) -> Result<(BeliefState, f64)> {
    match c {
        Computation::Click(n) => {
            let next = belief.reveal(n, truth)?;
            Ok((next, -belief.spec().click_cost))
        }
        Computation::Terminate => {
            let r = truth.path_return(belief.greedy_path());
            Ok((belief.clone(), r))
        }
    }
}

/// Value of the information gained by one click: how much better the new
/// greedy path is than the old one, both judged under the new belief.
/// Never negative.
pub fn pseudo_reward(before: &BeliefState, after: &BeliefState) -> Result<f64> {
    before.one_click_successor(after)?;
    let new_best = after.path_value_at(after.greedy_path_index());
    let old_path = after.path_value_at(before.greedy_path_index());
    Ok(new_best - old_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_leaf(cost: f64) -> Arc<TrialSpec> {
        Arc::new(TrialSpec::layered(&[2], &[vec![-10.0, 10.0]], cost).unwrap())
    }

    #[test]
    fn observed_values_match_reveals() {
        let spec = two_leaf(1.0);
        let truth = GroundTruth { rewards: vec![0.0, 10.0, -10.0] };
        let b = BeliefState::new(spec);
        assert_eq!(b.observe(1, 10.0).unwrap(), b.reveal(1, &truth).unwrap());
        assert!(b.observe(1, 3.0).is_err());
        assert!(b.observe(0, 0.0).is_err());
        assert!(b.observe(1, 10.0).unwrap().observe(1, 10.0).is_err());
    }

    #[test]
    fn terminate_leaves_belief_unchanged() {
        let spec = two_leaf(1.0);
        let truth = GroundTruth { rewards: vec![0.0, 10.0, -10.0] };
        let b = BeliefState::new(spec);
        let (b2, _) = transition(&b, Computation::Terminate, &truth).unwrap();
        assert_eq!(b, b2);
    }

    #[test]
    fn click_costs_lambda_and_reveals_one() {
        let spec = two_leaf(1.0);
        let truth = GroundTruth { rewards: vec![0.0, 10.0, -10.0] };
        let b = BeliefState::new(spec);
        let (b2, r) = transition(&b, Computation::Click(2), &truth).unwrap();
        assert_eq!(r, -1.0);
        assert_eq!(b2.n_clicks(), 1);
        assert_eq!(b2.revealed(2), Some(-10.0));
        assert_eq!(b.one_click_successor(&b2).unwrap(), 2);
    }

    #[test]
    fn two_leaf_click_then_stop_totals_minus_cost_plus_ten() {
        let lambda = 1.0;
        let spec = two_leaf(lambda);
        let truth = GroundTruth { rewards: vec![0.0, 10.0, -10.0] };
        let b0 = BeliefState::new(spec);
        let (b1, r1) = transition(&b0, Computation::Click(1), &truth).unwrap();
        let (_, r2) = transition(&b1, Computation::Terminate, &truth).unwrap();
        assert_eq!(r1 + r2, -lambda + 10.0);
    }

    #[test]
    fn invalid_clicks_rejected() {
        let spec = two_leaf(1.0);
        let truth = GroundTruth { rewards: vec![0.0, 10.0, -10.0] };
        let b = BeliefState::new(spec);
        assert!(transition(&b, Computation::Click(0), &truth).is_err());
        assert!(transition(&b, Computation::Click(9), &truth).is_err());
        let (b1, _) = transition(&b, Computation::Click(1), &truth).unwrap();
        let err = transition(&b1, Computation::Click(1), &truth).unwrap_err();
        assert!(matches!(err, Error::InvalidComputation { .. }));
    }

    #[test]
    fn path_values() {
        let spec = Arc::new(
            TrialSpec::layered(&[2, 1], &[vec![-48.0, 48.0], vec![-5.0, 5.0]], 1.0).unwrap(),
        );
        let truth = GroundTruth { rewards: vec![0.0, 48.0, 5.0, -48.0, -5.0] };
        let b = BeliefState::new(spec.clone());
        assert_eq!(b.expected_path_value(&[1, 2]).unwrap(), 0.0);
        assert_eq!(b.best_path_value(), 0.0);
        let b1 = b.reveal(1, &truth).unwrap();
        assert_eq!(b1.expected_path_value(&[1, 2]).unwrap(), 48.0);
        assert!(b1.expected_path_value(&[1]).is_err());
        assert!(b1.expected_path_value(&[3, 2]).is_err());
        let mut full = b1;
        for n in [2, 3, 4] {
            full = full.reveal(n, &truth).unwrap();
        }
        assert_eq!(full.best_path_value(), 53.0);
        assert_eq!(full.greedy_path(), &[1, 2]);
    }

    #[test]
    fn best_path_and_greedy_on_two_leaves() {
        let spec = two_leaf(1.0);
        let truth = GroundTruth { rewards: vec![0.0, -10.0, 10.0] };
        let b = BeliefState::new(spec);
        // full tie: lexicographically first path
        assert_eq!(b.greedy_path(), &[1]);
        let neg = b.reveal(1, &truth).unwrap();
        assert_eq!(neg.best_path_value(), 0.0);
        assert_eq!(neg.greedy_path(), &[2]);
        let pos = b.reveal(2, &truth).unwrap();
        assert_eq!(pos.greedy_path(), &[2]);
    }

    #[test]
    fn pseudo_reward_examples() {
        let spec = two_leaf(1.0);
        let truth = GroundTruth { rewards: vec![0.0, -10.0, 10.0] };
        let b = BeliefState::new(spec);
        // tie at 0 broken toward path [1]; revealing +10 on [2] switches
        let b2 = b.reveal(2, &truth).unwrap();
        assert_eq!(pseudo_reward(&b, &b2).unwrap(), 10.0);
        // revealing -10 on the greedy path [1] switches to [2] (value 0):
        // 0 - (-10) = 10
        let b1 = b.reveal(1, &truth).unwrap();
        assert_eq!(pseudo_reward(&b, &b1).unwrap(), 10.0);
        // a click that keeps the greedy path yields nothing
        let b12 = b2.reveal(1, &truth).unwrap();
        assert_eq!(pseudo_reward(&b2, &b12).unwrap(), 0.0);
        // not a successor
        assert!(pseudo_reward(&b, &b12).is_err());
        assert!(pseudo_reward(&b2, &b).is_err());
    }

    #[test]
    fn computation_codes() {
        assert_eq!(serde_json::to_string(&Computation::Terminate).unwrap(), "0");
        assert_eq!(serde_json::to_string(&Computation::Click(4)).unwrap(), "4");
        let cs: Vec<Computation> = serde_json::from_str("[3,0]").unwrap();
        assert_eq!(cs, vec![Computation::Click(3), Computation::Terminate]);
    }

    #[test]
    fn computations_are_canonically_ordered() {
        let spec = two_leaf(1.0);
        let truth = GroundTruth { rewards: vec![0.0, -10.0, 10.0] };
        let b = BeliefState::new(spec).reveal(1, &truth).unwrap();
        assert_eq!(b.computations(), vec![Computation::Terminate, Computation::Click(2)]);
    }
}
