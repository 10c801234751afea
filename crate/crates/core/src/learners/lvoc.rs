//! Learned value of computation: Bayesian linear regression of bootstrapped
//! meta-level Q-values, with generalized Thompson sampling for selection.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Policy;
use crate::env::{BeliefState, Computation};
use crate::error::{Error, Result};
use crate::features::{ClickHistory, FeatureRegistry, FeatureVector};
use crate::rng;

/// Monte Carlo replays used to estimate a Thompson-selection probability.
pub const LVOC_MC_REPLAYS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LvocParams {
    pub prior_mean: Vec<f64>,
    /// Prior variance σ² of the isotropic prior N(μ_prior, σ²·I).
    pub prior_var: f64,
    /// Posterior draws averaged per decision.
    pub n_samples: usize,
    pub obs_noise_var: f64,
}

impl LvocParams {
    pub const DEFAULT_OBS_NOISE_VAR: f64 = 1.0;

    pub fn new(prior_mean: Vec<f64>, prior_var: f64, n_samples: usize) -> Self {
        LvocParams { prior_mean, prior_var, n_samples, obs_noise_var: Self::DEFAULT_OBS_NOISE_VAR }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prior_var >= 0.0 && self.prior_var.is_finite()) {
            return Err(Error::InvalidParameter(format!("prior variance must be >= 0, got {}", self.prior_var)));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidParameter("LVOC needs at least one posterior sample".into()));
        }
        if !(self.obs_noise_var > 0.0) {
            return Err(Error::InvalidParameter("observation noise variance must be > 0".into()));
        }
        if self.prior_mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("LVOC prior mean".into()));
        }
        Ok(())
    }
}

/// Gaussian posterior over feature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LvocPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    factor: Option<DMatrix<f64>>,
}

impl LvocPosterior {
    pub fn from_prior(p: &LvocParams) -> Self {
        let d = p.prior_mean.len();
        LvocPosterior {
            mean: DVector::from_vec(p.prior_mean.clone()),
            cov: DMatrix::identity(d, d) * p.prior_var,
            factor: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Conjugate update with one observation `target ≈ f · w + noise`.
    /// Joseph-form covariance update keeps the matrix symmetric PSD.
    pub fn observe(&mut self, f: &[f64], target: f64, noise_var: f64) -> Result<()> {
        if !target.is_finite() {
            return Err(Error::NonFinite(format!("bootstrap target {target}")));
        }
        let x = DVector::from_column_slice(f);
        let px = &self.cov * &x;
        let s = x.dot(&px) + noise_var;
        let gain = &px / s;
        let resid = target - x.dot(&self.mean);
        self.mean += &gain * resid;
        let d = self.dim();
        let a = DMatrix::identity(d, d) - &gain * x.transpose();
        let mut cov = &a * &self.cov * a.transpose() + &gain * gain.transpose() * noise_var;
        cov = (&cov + cov.transpose()) * 0.5;
        self.cov = cov;
        self.factor = None;
        Ok(())
    }

    /// A matrix L with L·Lᵀ = cov.
    fn factor(&mut self) -> &DMatrix<f64> {
        if self.factor.is_none() {
            let l = match self.cov.clone().cholesky() {
                Some(c) => c.l(),
                None => {
                    // singular (e.g. zero prior variance): symmetric square root
                    let eig = self.cov.clone().symmetric_eigen();
                    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
                    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
                }
            };
            self.factor = Some(l);
        }
        self.factor.as_ref().expect("just set")
    }

    /// Arithmetic mean of `n` independent posterior draws.
    pub fn sample_mean_weights(&mut self, n: usize, rng: &mut impl Rng) -> DVector<f64> {
        let d = self.dim();
        let mut z = DVector::zeros(d);
        for _ in 0..n {
            for j in 0..d {
                let e: f64 = rng.sample(StandardNormal);
                z[j] += e;
            }
        }
        z /= n as f64;
        let mean = self.mean.clone();
        mean + self.factor() * z
    }

    /// ⟨μ, f⟩.
    pub fn predict(&self, f: &[f64]) -> f64 {
        self.mean.iter().zip(f).map(|(m, x)| m * x).sum()
    }

    pub fn is_positive_semidefinite(&self) -> bool {
        let sym = (&self.cov - self.cov.transpose()).amax() <= 1e-9 * (1.0 + self.cov.amax());
        sym && self.cov.clone().symmetric_eigen().eigenvalues.iter().all(|&v| v >= -1e-9)
    }
}

/// One meta-level experience: features of the chosen computation in its
/// belief and the bootstrap target Q̂.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaExperience {
    pub features: FeatureVector,
    pub computation: Computation,
    pub target: f64,
}

/// Posterior after one more experience.
pub fn lvoc_learn(e: &MetaExperience, posterior: &LvocPosterior, params: &LvocParams) -> Result<LvocPosterior> {
    let mut next = posterior.clone();
    next.observe(&e.features, e.target, params.obs_noise_var)?;
    Ok(next)
}

/// Which computations a selection may pick, and how ⊥ is valued.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SelectionRule {
    /// Replace ⊥'s predicted value with this (termination deliberation).
    pub fixed_termination: Option<f64>,
    /// Exclude ⊥ (a first stage already decided to continue).
    pub clicks_only: bool,
}

impl SelectionRule {
    pub const PLAIN: SelectionRule = SelectionRule { fixed_termination: None, clicks_only: false };
}

/// Index of the best-scoring admissible action; ties go to the earliest
/// action in canonical order.
pub(crate) fn argmax_action(actions: &[Computation], values: &[f64], rule: SelectionRule) -> usize {
    let mut best = None;
    let mut best_v = f64::NEG_INFINITY;
    for (i, (&a, &v)) in actions.iter().zip(values).enumerate() {
        if rule.clicks_only && a == Computation::Terminate {
            continue;
        }
        if best.is_none() || v > best_v {
            best = Some(i);
            best_v = v;
        }
    }
    best.unwrap_or(0)
}

pub(crate) fn score_actions(
    actions: &[Computation],
    feats: &[FeatureVector],
    w: &[f64],
    rule: SelectionRule,
) -> Vec<f64> {
    actions
        .iter()
        .zip(feats)
        .map(|(&a, f)| match (a, rule.fixed_termination) {
            (Computation::Terminate, Some(v)) => v,
            _ => f.dot(w),
        })
        .collect()
}

/// One Thompson selection: returns the chosen index and the value estimates.
pub(crate) fn thompson_pick(
    actions: &[Computation],
    feats: &[FeatureVector],
    posterior: &mut LvocPosterior,
    n_samples: usize,
    rule: SelectionRule,
    rng: &mut impl Rng,
) -> (usize, Vec<f64>) {
    let w = posterior.sample_mean_weights(n_samples, rng);
    let values = score_actions(actions, feats, w.as_slice(), rule);
    (argmax_action(actions, &values, rule), values)
}

/// Select a computation in `b` by generalized Thompson sampling.
pub fn lvoc_select(
    b: &BeliefState,
    posterior: &LvocPosterior,
    n_samples: usize,
    registry: &FeatureRegistry,
    history: &ClickHistory,
    seed: u64,
) -> (Computation, Vec<f64>) {
    let (actions, feats) = registry.compute_all(b, history);
    let mut post = posterior.clone();
    let (i, values) = thompson_pick(&actions, &feats, &mut post, n_samples, SelectionRule::PLAIN, &mut rng::rng(seed));
    (actions[i], values)
}

/// Selection frequencies over `replays` independent Thompson selections.
pub(crate) fn choice_frequencies(
    actions: &[Computation],
    feats: &[FeatureVector],
    posterior: &mut LvocPosterior,
    n_samples: usize,
    rule: SelectionRule,
    replays: usize,
    rng: &mut impl Rng,
) -> Policy {
    let mut counts = vec![0usize; actions.len()];
    for _ in 0..replays {
        let (i, _) = thompson_pick(actions, feats, posterior, n_samples, rule, rng);
        counts[i] += 1;
    }
    Policy {
        actions: actions.to_vec(),
        probs: counts.into_iter().map(|c| c as f64 / replays as f64).collect(),
    }
}

/// Monte Carlo estimate of the plain LVOC choice distribution in `b`.
pub fn lvoc_choice_probabilities(
    b: &BeliefState,
    posterior: &LvocPosterior,
    n_samples: usize,
    registry: &FeatureRegistry,
    history: &ClickHistory,
    seed: u64,
) -> Policy {
    let (actions, feats) = registry.compute_all(b, history);
    let mut post = posterior.clone();
    choice_frequencies(
        &actions,
        &feats,
        &mut post,
        n_samples,
        SelectionRule::PLAIN,
        LVOC_MC_REPLAYS,
        &mut rng::rng(seed),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_condition_env, ConditionId};
    use std::sync::Arc;

    #[test]
    fn one_dimensional_closed_form() {
        let p = LvocParams::new(vec![0.0], 1.0, 1);
        let post = LvocPosterior::from_prior(&p);
        let e = MetaExperience { features: FeatureVector(vec![1.0]), computation: Computation::Terminate, target: 2.0 };
        let next = lvoc_learn(&e, &post, &p).unwrap();
        assert!((next.mean[0] - 1.0).abs() < 1e-12);
        assert!((next.cov[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_prior_variance_ignores_data() {
        let p = LvocParams::new(vec![0.3, -0.2], 0.0, 4);
        let mut post = LvocPosterior::from_prior(&p);
        for t in [5.0, -3.0, 100.0] {
            post.observe(&[1.0, 2.0], t, 1.0).unwrap();
        }
        assert_eq!(post.mean.as_slice(), &[0.3, -0.2]);
        let w = post.sample_mean_weights(3, &mut crate::rng::rng(1));
        assert_eq!(w.as_slice(), &[0.3, -0.2]);
    }

    #[test]
    fn variance_shrinks_with_consistent_data() {
        let p = LvocParams::new(vec![0.0, 0.0], 2.0, 1);
        let mut post = LvocPosterior::from_prior(&p);
        let mut last = post.cov.trace();
        for _ in 0..5 {
            post.observe(&[1.0, 0.5], 3.0, 1.0).unwrap();
            let tr = post.cov.trace();
            assert!(tr < last);
            last = tr;
            assert!(post.is_positive_semidefinite());
        }
    }

    #[test]
    fn non_finite_target_rejected() {
        let p = LvocParams::new(vec![0.0], 1.0, 1);
        let post = LvocPosterior::from_prior(&p);
        let e = MetaExperience { features: FeatureVector(vec![1.0]), computation: Computation::Terminate, target: f64::NAN };
        assert!(lvoc_learn(&e, &post, &p).is_err());
    }

    #[test]
    fn degenerate_posterior_selects_argmax_of_mean() {
        let (spec, _) = make_condition_env(ConditionId::Exp1Far, 0).unwrap();
        let b = BeliefState::new(Arc::new(spec));
        let reg = FeatureRegistry::default_registry().strategy_view();
        let mut mu = vec![0.0; reg.dim()];
        mu[reg.index_of("node_variance").unwrap()] = 1.0;
        let p = LvocParams::new(mu.clone(), 0.0, 5);
        let post = LvocPosterior::from_prior(&p);
        let (c, values) = lvoc_select(&b, &post, 5, &reg, &ClickHistory::new(), 11);
        // leaves have the largest variance; node 3 is the first leaf
        assert_eq!(c, Computation::Click(3));
        assert_eq!(values.len(), 13);
    }

    #[test]
    fn selection_is_seed_deterministic() {
        let (spec, _) = make_condition_env(ConditionId::Exp1Far, 0).unwrap();
        let b = BeliefState::new(Arc::new(spec));
        let reg = FeatureRegistry::default_registry().strategy_view();
        let p = LvocParams::new(vec![0.0; reg.dim()], 1.0, 1);
        let post = LvocPosterior::from_prior(&p);
        let h = ClickHistory::new();
        let a = lvoc_select(&b, &post, 1, &reg, &h, 99);
        let b2 = lvoc_select(&b, &post, 1, &reg, &h, 99);
        assert_eq!(a, b2);
        let probs = lvoc_choice_probabilities(&b, &post, 1, &reg, &h, 5);
        assert!((probs.total() - 1.0).abs() < 1e-12);
    }
}
