//! A configured model instance: base learner plus optional stopping rule,
//! pseudo-rewards and termination deliberation.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Base, ModelConfig, StoppingRule};
use crate::env::{pseudo_reward, BeliefState, Computation};
use crate::error::{Error, Result};
use crate::features::{ClickHistory, FeatureRegistry, FeatureVector};
use crate::learners::{
    argmax_action, choice_frequencies, grad_log_softmax, init_weights, raw_gradient, score_actions, softmax,
    softmax_policy, thompson_pick, AdamState, HabitWeights, LvocParams, LvocPosterior, Policy, PolicyWeights,
    ReinforceParams, RewardWeighting, SelectionRule, TraceStep, LVOC_MC_REPLAYS,
};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "base", rename_all = "kebab-case")]
pub enum LearnerParams {
    Reinforce(ReinforceParams),
    Lvoc(LvocParams),
    Habit(HabitWeights),
    NonLearning { weights: Vec<f64> },
}

impl LearnerParams {
    pub fn base(&self) -> Base {
        match self {
            LearnerParams::Reinforce(_) => Base::Reinforce,
            LearnerParams::Lvoc(_) => Base::Lvoc,
            LearnerParams::Habit(_) => Base::Habit,
            LearnerParams::NonLearning { .. } => Base::NonLearning,
        }
    }
}

/// Fully decoded parameters of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub learner: LearnerParams,
    pub stop: Option<StoppingRule>,
}

/// Mutable learner state.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnerState {
    Reinforce {
        params: ReinforceParams,
        weights: PolicyWeights,
        adam: AdamState,
        trace: Vec<TraceStep>,
    },
    Lvoc {
        params: LvocParams,
        posterior: LvocPosterior,
    },
    Habit(HabitWeights),
    NonLearning(Vec<f64>),
}

/// Serializable checkpoint of an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub version: u32,
    pub model: String,
    pub registry: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adam: Option<AdamState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posterior_mean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posterior_cov: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub habit: Option<HabitWeights>,
    pub history: ClickHistory,
    pub stop: Option<StoppingRule>,
}

/// Meta-reward used for learning: adds the pseudo-reward to clicks when
/// the model has pseudo-rewards on.
pub fn effective_meta_reward(
    config: &ModelConfig,
    r_meta: f64,
    b_t: &BeliefState,
    b_next: &BeliefState,
) -> Result<f64> {
    if config.pseudo_rewards && b_next.n_clicks() > b_t.n_clicks() {
        Ok(r_meta + pseudo_reward(b_t, b_next)?)
    } else {
        Ok(r_meta)
    }
}

pub struct Agent {
    config: ModelConfig,
    registry: FeatureRegistry,
    state: LearnerState,
    stop: Option<StoppingRule>,
    history: ClickHistory,
    weighting: RewardWeighting,
    rng: Rng,
}

impl Agent {
    /// Build an agent. `registry` is the full registry; each base picks its
    /// own view of it. `seed` fixes initial weights and all sampling.
    pub fn new(config: &ModelConfig, params: &ModelParams, registry: &FeatureRegistry, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.registry != registry.tag() {
            return Err(Error::InvalidConfig(format!(
                "{} was built for registry {}, got {}",
                config.id(),
                config.registry,
                registry.tag()
            )));
        }
        if params.learner.base() != config.base {
            return Err(Error::InvalidConfig(format!(
                "{} given {} parameters",
                config.id(),
                params.learner.base()
            )));
        }
        if !config.stage1.matches(params.stop.as_ref()) {
            return Err(Error::InvalidConfig(format!("{} given a mismatched stopping rule", config.id())));
        }
        if let Some(rule) = &params.stop {
            rule.validate()?;
        }
        let view = match config.base {
            Base::Habit => registry.clone(),
            _ => registry.strategy_view(),
        };
        let dim_check = |n: usize, what: &str| {
            if n == view.dim() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{what} has {n} entries, expected {}", view.dim())))
            }
        };
        let state = match &params.learner {
            LearnerParams::Reinforce(p) => {
                p.validate()?;
                let weights = init_weights(view.dim(), &mut rng::rng(rng::derive(seed, 0)));
                LearnerState::Reinforce {
                    params: *p,
                    weights,
                    adam: AdamState::new(view.dim()),
                    trace: Vec::new(),
                }
            }
            LearnerParams::Lvoc(p) => {
                p.validate()?;
                dim_check(p.prior_mean.len(), "LVOC prior mean")?;
                LearnerState::Lvoc { params: p.clone(), posterior: LvocPosterior::from_prior(p) }
            }
            LearnerParams::Habit(w) => LearnerState::Habit(*w),
            LearnerParams::NonLearning { weights } => {
                dim_check(weights.len(), "non-learning weights")?;
                if weights.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("non-learning weights".into()));
                }
                LearnerState::NonLearning(weights.clone())
            }
        };
        Ok(Agent {
            config: config.clone(),
            registry: view,
            state,
            stop: params.stop,
            history: ClickHistory::new(),
            weighting: RewardWeighting::default(),
            rng: rng::rng(rng::derive(seed, 1)),
        })
    }

    pub fn with_weighting(mut self, w: RewardWeighting) -> Self {
        self.weighting = w;
        self
    }

    /// Replace the initial REINFORCE weights.
    pub fn with_initial_weights(mut self, w: PolicyWeights) -> Result<Self> {
        match &mut self.state {
            LearnerState::Reinforce { weights, .. } if weights.len() == w.len() => {
                *weights = w;
                Ok(self)
            }
            _ => Err(Error::InvalidParameter("initial weights apply to REINFORCE only, with matching length".into())),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn registry(&self) -> &FeatureRegistry {
        &self.registry
    }

    pub fn state(&self) -> &LearnerState {
        &self.state
    }

    pub fn history(&self) -> &ClickHistory {
        &self.history
    }

    pub fn stopping_rule(&self) -> Option<&StoppingRule> {
        self.stop.as_ref()
    }

    fn td(&self) -> bool {
        self.config.termination_deliberation
    }

    /// Computations the second stage chooses among.
    fn stage2_actions(&self, b: &BeliefState) -> Vec<Computation> {
        let mut actions = b.computations();
        if self.stop.is_some() {
            actions.retain(|c| c.is_click());
        }
        actions
    }

    /// Feature rows for `actions`. REINFORCE sees every feature divided by
    /// its registry scale, so ADAM's per-coordinate steps move each term of
    /// the logit by comparable amounts.
    fn features(&self, b: &BeliefState, actions: &[Computation]) -> Vec<FeatureVector> {
        let normalize = matches!(self.state, LearnerState::Reinforce { .. });
        actions
            .iter()
            .map(|&c| {
                let mut f = self.registry.compute_unchecked(b, c, &self.history);
                if normalize {
                    for (x, d) in f.0.iter_mut().zip(self.registry.defs()) {
                        *x /= d.scale;
                    }
                }
                f
            })
            .collect()
    }

    /// Values of linear-softmax bases (REINFORCE, non-learning), with ⊥
    /// fixed to 𝕄 under termination deliberation.
    fn linear_values(&self, b: &BeliefState, actions: &[Computation], feats: &[FeatureVector], w: &[f64]) -> Vec<f64> {
        let rule = self.selection_rule(b);
        score_actions(actions, feats, w, rule)
    }

    fn selection_rule(&self, b: &BeliefState) -> SelectionRule {
        SelectionRule {
            fixed_termination: self.td().then(|| b.best_path_value()),
            clicks_only: false,
        }
    }

    fn stage2_policy(&mut self, b: &BeliefState) -> Result<Policy> {
        let actions = self.stage2_actions(b);
        match &self.state {
            LearnerState::Reinforce { params, weights, .. } => {
                let feats = self.features(b, &actions);
                let values = self.linear_values(b, &actions, &feats, weights);
                softmax_policy(&actions, &values, params.tau)
            }
            LearnerState::NonLearning(w) => {
                let feats = self.features(b, &actions);
                let values = self.linear_values(b, &actions, &feats, w);
                softmax_policy(&actions, &values, 1.0)
            }
            LearnerState::Habit(w) => {
                let values: Vec<f64> = actions.iter().map(|&c| w.value(b, c, &self.history)).collect();
                softmax_policy(&actions, &values, 1.0)
            }
            LearnerState::Lvoc { .. } => {
                let feats = self.features(b, &actions);
                let rule = self.selection_rule(b);
                let LearnerState::Lvoc { params, posterior } = &mut self.state else { unreachable!() };
                Ok(choice_frequencies(
                    &actions,
                    &feats,
                    posterior,
                    params.n_samples,
                    rule,
                    LVOC_MC_REPLAYS,
                    &mut self.rng,
                ))
            }
        }
    }

    /// The full two-stage distribution over every valid computation.
    /// LVOC probabilities are Monte Carlo estimates and consume the
    /// agent's random stream.
    pub fn policy(&mut self, b: &BeliefState) -> Result<Policy> {
        let Some(rule) = self.stop else {
            return self.stage2_policy(b);
        };
        if b.unrevealed().next().is_none() {
            return Ok(Policy::certain(Computation::Terminate));
        }
        let p_stop = rule.marginal_stop_probability(b)?;
        let s2 = self.stage2_policy(b)?;
        let mut actions = vec![Computation::Terminate];
        let mut probs = vec![p_stop];
        actions.extend(s2.actions);
        probs.extend(s2.probs.iter().map(|p| (1.0 - p_stop) * p));
        Ok(Policy { actions, probs })
    }

    /// Choose the next computation by running the model's own process.
    pub fn act(&mut self, b: &BeliefState) -> Result<Computation> {
        if let Some(rule) = self.stop {
            if b.unrevealed().next().is_none() {
                return Ok(Computation::Terminate);
            }
            let p = super::stop_probability(&rule, b, &mut self.rng)?;
            if self.rng.random::<f64>() < p {
                return Ok(Computation::Terminate);
            }
        }
        if let LearnerState::Lvoc { .. } = self.state {
            let actions = self.stage2_actions(b);
            let feats = self.features(b, &actions);
            let rule = self.selection_rule(b);
            let LearnerState::Lvoc { params, posterior } = &mut self.state else { unreachable!() };
            let (i, _) = thompson_pick(&actions, &feats, posterior, params.n_samples, rule, &mut self.rng);
            return Ok(actions[i]);
        }
        let pol = self.stage2_policy(b)?;
        Ok(pol.sample(&mut self.rng))
    }

    /// Sample a computation and return it with its log-probability under
    /// the two-stage distribution.
    pub fn meta_step(&mut self, b: &BeliefState) -> Result<(Computation, f64)> {
        let c = self.act(b)?;
        let p = self.policy(b)?.prob(c);
        Ok((c, p.ln()))
    }

    /// ∇ ln P(c | b) for the REINFORCE policy with the current weights.
    fn reinforce_grad(&self, b: &BeliefState, c: Computation) -> Result<Vec<f64>> {
        let LearnerState::Reinforce { params, weights, .. } = &self.state else {
            unreachable!("called for REINFORCE only")
        };
        if self.stop.is_some() && c == Computation::Terminate {
            // first-stage decision: independent of the weights
            return Ok(vec![0.0; weights.len()]);
        }
        let actions = self.stage2_actions(b);
        let feats = self.features(b, &actions);
        let values = self.linear_values(b, &actions, &feats, weights);
        let probs = softmax(&values, params.tau);
        let zero = vec![0.0; weights.len()];
        let rows: Vec<&[f64]> = actions
            .iter()
            .zip(&feats)
            .map(|(&a, f)| if a == Computation::Terminate && self.td() { &zero[..] } else { &f[..] })
            .collect();
        let chosen = actions
            .iter()
            .position(|&a| a == c)
            .ok_or_else(|| Error::invalid_computation(c, "not available to the policy"))?;
        Ok(grad_log_softmax(&rows, &probs, chosen, params.tau))
    }

    /// Bootstrap value of `b` for LVOC: the predicted value of the
    /// computation the posterior mean would pick.
    fn lvoc_bootstrap(&self, b: &BeliefState) -> f64 {
        let LearnerState::Lvoc { posterior, .. } = &self.state else {
            unreachable!("called for LVOC only")
        };
        let actions = b.computations();
        let feats = self.features(b, &actions);
        let rule = self.selection_rule(b);
        let values = score_actions(&actions, &feats, posterior.mean.as_slice(), rule);
        values[argmax_action(&actions, &values, rule)]
    }

    /// Learn from one transition `b --c--> b_next` with meta-reward `r_meta`.
    pub fn observe(&mut self, b: &BeliefState, c: Computation, b_next: &BeliefState, r_meta: f64) -> Result<()> {
        b.check_valid(c)?;
        let r = effective_meta_reward(&self.config, r_meta, b, b_next)?;
        match self.state {
            LearnerState::Reinforce { .. } => {
                let g = self.reinforce_grad(b, c)?;
                if let LearnerState::Reinforce { trace, .. } = &mut self.state {
                    trace.push(TraceStep { grad_logpi: g, reward: r });
                }
                self.history.update(b, c);
            }
            LearnerState::Lvoc { .. } => {
                let f = self.registry.compute_unchecked(b, c, &self.history);
                self.history.update(b, c);
                let target = match c {
                    Computation::Click(_) => r + self.lvoc_bootstrap(b_next),
                    Computation::Terminate => r,
                };
                if let LearnerState::Lvoc { params, posterior } = &mut self.state {
                    posterior.observe(&f, target, params.obs_noise_var)?;
                }
            }
            LearnerState::Habit(_) | LearnerState::NonLearning(_) => self.history.update(b, c),
        }
        Ok(())
    }

    /// Close a trial: apply the per-trial REINFORCE step and update the
    /// stopping rule's score memory.
    pub fn end_trial(&mut self, score: f64) -> Result<()> {
        if let LearnerState::Reinforce { params, weights, adam, trace } = &mut self.state {
            if !trace.is_empty() {
                let g = raw_gradient(trace, params.gamma, self.weighting);
                adam.step(&mut weights.0, &g, params.alpha);
                trace.clear();
                if weights.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("REINFORCE weights".into()));
                }
            }
        }
        if let Some(rule) = &mut self.stop {
            rule.record_score(score);
        }
        Ok(())
    }

    pub fn snapshot(&self) -> AgentSnapshot {
        let mut s = AgentSnapshot {
            version: 1,
            model: self.config.id(),
            registry: self.registry.tag(),
            weights: None,
            adam: None,
            posterior_mean: None,
            posterior_cov: None,
            habit: None,
            history: self.history.clone(),
            stop: self.stop,
        };
        match &self.state {
            LearnerState::Reinforce { weights, adam, .. } => {
                s.weights = Some(weights.0.clone());
                s.adam = Some(adam.clone());
            }
            LearnerState::Lvoc { posterior, .. } => {
                s.posterior_mean = Some(posterior.mean.iter().copied().collect());
                s.posterior_cov = Some(
                    posterior
                        .cov
                        .row_iter()
                        .map(|r| r.iter().copied().collect())
                        .collect(),
                );
            }
            LearnerState::Habit(w) => s.habit = Some(*w),
            LearnerState::NonLearning(w) => s.weights = Some(w.clone()),
        }
        s
    }
}
