//! Test-time adaptation of the residual weights φ inside beam search.
//!
//! After every expansion block the `alpha * beta` rollouts form one batch.
//! Each rollout's reward is how much it lowered the best length, the
//! baseline is the batch mean, and φ takes one gradient-ascent step on
//! `mean_i (R_i - b) * sum_t log pi(a_t | s_t)`. The base weights never
//! change.
//!
//! [`lrbs_oa`] starts from zero φ for every call. [`fine_tune`] carries φ
//! across a set of instances and returns it for frozen use.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mdp::{env_reset, Action, Problem, SearchState};
use crate::policy::{eas_wrap, EasParams, GradBuffer, PolicyParams, ReferencePolicy};
use crate::rng::derive_seed;
use crate::search::{run, BlockHook, Mode, SearchConfig, SearchResult};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const DEFAULT_FT_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub learning_rate: f64,
    /// Rollout length while adapting; `None` keeps the search's `n_s`.
    #[serde(default)]
    pub n_s_adapt: Option<usize>,
    /// Zero φ before each instance.
    pub reset_per_instance: bool,
    /// Number of instances used for fine-tuning.
    #[serde(default)]
    pub ft_dataset_size: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self::online()
    }
}

impl AdaptConfig {
    pub fn online() -> Self {
        Self {
            learning_rate: DEFAULT_LEARNING_RATE,
            n_s_adapt: None,
            reset_per_instance: true,
            ft_dataset_size: 0,
        }
    }

    pub fn fine_tuning(ft_dataset_size: usize) -> Self {
        Self {
            reset_per_instance: false,
            ft_dataset_size,
            ..Self::online()
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning rate {} must be finite and nonnegative", self.learning_rate)));
        }
        if self.n_s_adapt == Some(0) {
            return Err(invalid("n_s_adapt must be positive"));
        }
        Ok(())
    }

    fn search_config(&self, config: &SearchConfig) -> SearchConfig {
        SearchConfig {
            n_s: self.n_s_adapt.unwrap_or(config.n_s),
            ..*config
        }
    }
}

/// Fine-tuning set size for a test set: `ceil(fraction * test_size)`, at least one.
pub fn ft_dataset_size(test_size: usize, fraction: f64) -> usize {
    ((test_size as f64 * fraction).ceil() as usize).max(1)
}

/// One sampled move with the state it was sampled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedStep {
    pub state: SearchState,
    pub action: Action,
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub steps: Vec<RecordedStep>,
    /// Best length at block start minus best length at block end.
    pub reward: f64,
}

/// The rollouts of one expansion block.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub rollouts: Vec<Rollout>,
    /// Version of φ the log-probabilities were recorded under.
    pub phi_version: u64,
}

impl RolloutBatch {
    pub fn rewards(&self) -> Vec<f64> {
        self.rollouts.iter().map(|r| r.reward).collect()
    }
}

/// Mean of the batch rewards.
pub fn pomo_baseline(rewards: &[f64]) -> Result<f64> {
    if rewards.is_empty() {
        return Err(invalid("baseline of an empty batch"));
    }
    Ok(rewards.iter().sum::<f64>() / rewards.len() as f64)
}

fn check_fresh(batch: &RolloutBatch, policy: &ReferencePolicy<'_>) -> Result<()> {
    let eas = policy
        .eas()
        .ok_or_else(|| invalid("the policy carries no adaptation weights"))?;
    if eas.version() != batch.phi_version {
        return Err(Error::Stale {
            recorded: batch.phi_version,
            current: eas.version(),
        });
    }
    Ok(())
}

/// `mean_i (R_i - b) * sum_t grad_phi log pi(a_t | s_t)`.
pub fn eas_gradient(
    problem: &Problem,
    batch: &RolloutBatch,
    baseline: f64,
    policy: &ReferencePolicy<'_>,
) -> Result<Vec<f64>> {
    check_fresh(batch, policy)?;
    let eas = policy.eas().expect("checked above");
    let mut buf = GradBuffer::phi_only(eas);
    if batch.rollouts.is_empty() {
        return Ok(buf.phi.unwrap());
    }
    let scale = 1.0 / batch.rollouts.len() as f64;
    for r in &batch.rollouts {
        let advantage = r.reward - baseline;
        if advantage == 0.0 {
            continue;
        }
        for s in &r.steps {
            policy.log_prob_grad(problem, &s.state, s.action, &mut buf, advantage * scale)?;
        }
    }
    Ok(buf.phi.unwrap())
}

/// The objective [`eas_gradient`] differentiates, evaluated under `policy`.
pub fn surrogate_objective(
    problem: &Problem,
    batch: &RolloutBatch,
    baseline: f64,
    policy: &ReferencePolicy<'_>,
) -> Result<f64> {
    use crate::policy::ImprovementPolicy;
    if batch.rollouts.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for r in &batch.rollouts {
        let mut lp = 0.0;
        for s in &r.steps {
            lp += policy.log_prob(problem, &s.state, s.action)?;
        }
        total += (r.reward - baseline) * lp;
    }
    Ok(total / batch.rollouts.len() as f64)
}

struct AdaptHook<'a> {
    policy: ReferencePolicy<'a>,
    learning_rate: f64,
    frozen: bool,
}

impl<'a> BlockHook for AdaptHook<'a> {
    type Policy = ReferencePolicy<'a>;

    fn policy(&self) -> &ReferencePolicy<'a> {
        &self.policy
    }

    fn records(&self) -> bool {
        !self.frozen
    }

    fn phi_version(&self) -> u64 {
        self.policy.eas().map_or(0, EasParams::version)
    }

    fn after_block(&mut self, problem: &Problem, batch: RolloutBatch) -> Result<()> {
        let b = pomo_baseline(&batch.rewards())?;
        let grad = eas_gradient(problem, &batch, b, &self.policy)?;
        let eas = self.policy.eas_mut().expect("adaptation policy carries φ");
        match eas.ascend(&grad, self.learning_rate) {
            Ok(()) => Ok(()),
            Err(Error::Numeric(msg)) => {
                warn!("adaptation stopped, continuing with frozen weights: {msg}");
                self.frozen = true;
                Ok(())
            }
            Err(e) => Err(e),
        }
    }
}

fn adapt_run(
    problem: &Problem,
    params: &PolicyParams,
    eas: EasParams,
    config: &SearchConfig,
    adapt: &AdaptConfig,
) -> Result<(SearchResult, EasParams)> {
    adapt.validate()?;
    let config = adapt.search_config(config);
    let mut hook = AdaptHook {
        policy: ReferencePolicy::with_eas(params, eas),
        learning_rate: adapt.learning_rate,
        frozen: false,
    };
    let initial = env_reset(problem, config.seed);
    let result = run(problem, &mut hook, &config, Mode::Lrbs, initial)?;
    Ok((result, hook.policy.into_eas().expect("adaptation policy carries φ")))
}

/// Beam search with online adaptation from zero φ. Returns the result and
/// the adapted weights.
pub fn lrbs_oa(
    problem: &Problem,
    params: &PolicyParams,
    config: &SearchConfig,
    adapt: &AdaptConfig,
) -> Result<(SearchResult, EasParams)> {
    adapt_run(problem, params, eas_wrap(params), config, adapt)
}

/// Seed of instance `index` when a set is solved under one config.
pub fn instance_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &[index as u64])
}

/// Solves each instance once with adaptation, carrying φ between instances
/// unless `reset_per_instance` is set; returns the final φ.
pub fn fine_tune(
    ft_instances: &[Problem],
    params: &PolicyParams,
    config: &SearchConfig,
    adapt: &AdaptConfig,
) -> Result<EasParams> {
    let mut eas = eas_wrap(params);
    for (i, p) in ft_instances.iter().enumerate() {
        if adapt.reset_per_instance {
            eas.reset();
        }
        let c = config.with_seed(instance_seed(config.seed, i));
        eas = adapt_run(p, params, eas, &c, adapt)?.1;
    }
    Ok(eas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_uniform_pdp, gen_uniform_tsp};
    use crate::mdp::PdVariant;
    use crate::policy::{ImprovementPolicy, PolicyKind};
    use crate::rng::rng_from_seed;
    use crate::search::lrbs;
    use rand::Rng;

    fn tsp(n: usize, seed: u64) -> Problem {
        Problem::Tsp(gen_uniform_tsp(n, seed).unwrap())
    }

    fn cfg(beta: usize, alpha: usize, n_s: usize, t_max: usize, seed: u64) -> SearchConfig {
        SearchConfig::new(beta, alpha, n_s, t_max).with_seed(seed)
    }

    /// Rollouts sampled under `policy` from random states.
    fn toy_batch(problem: &Problem, policy: &ReferencePolicy<'_>, rewards: &[f64], len: usize) -> RolloutBatch {
        let mut rng = rng_from_seed(17);
        let rollouts = rewards
            .iter()
            .enumerate()
            .map(|(i, &reward)| {
                let mut state = env_reset(problem, i as u64);
                let mut steps = Vec::new();
                for _ in 0..len {
                    let s = policy.sample(problem, &state, &mut rng).unwrap();
                    steps.push(RecordedStep {
                        state: state.clone(),
                        action: s.action,
                        log_prob: s.log_prob,
                    });
                    state.advance(problem, s.action).unwrap();
                }
                Rollout { steps, reward }
            })
            .collect();
        RolloutBatch {
            rollouts,
            phi_version: policy.eas().unwrap().version(),
        }
    }

    fn perturbed_eas(kind: PolicyKind, seed: u64) -> EasParams {
        let mut e = EasParams::zeros(kind);
        let mut rng = rng_from_seed(seed);
        let g: Vec<f64> = (0..e.phi.len()).map(|_| rng.gen_range(-0.2..0.2)).collect();
        e.ascend(&g, 1.0).unwrap();
        e
    }

    #[test]
    fn baseline() {
        assert_eq!(pomo_baseline(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert!(pomo_baseline(&[]).is_err());
        let r = [0.3, 0.0, 1.2, 0.5];
        let b = pomo_baseline(&r).unwrap();
        assert!(r.iter().map(|x| x - b).sum::<f64>().abs() < 1e-15);
        assert_eq!(0.7 - pomo_baseline(&[0.7]).unwrap(), 0.0);
    }

    #[test]
    fn batch_gradient_matches_finite_differences() {
        let problems = [
            tsp(8, 1),
            Problem::Pdp {
                instance: gen_uniform_pdp(3, 1).unwrap(),
                variant: PdVariant::Lifo,
            },
        ];
        for p in &problems {
            let kind = if p.is_tsp() { PolicyKind::Tsp } else { PolicyKind::Pdp };
            let params = PolicyParams::init(kind, 4);
            let eas = perturbed_eas(kind, 5);
            let policy = ReferencePolicy::with_eas(&params, eas.clone());
            let batch = toy_batch(p, &policy, &[0.4, 0.1], 3);
            let b = pomo_baseline(&batch.rewards()).unwrap();
            let g = eas_gradient(p, &batch, b, &policy).unwrap();
            let h = 1e-5;
            for idx in 0..g.len() {
                let at = |d: f64| {
                    let mut e = eas.clone();
                    e.phi[idx] += d;
                    surrogate_objective(p, &batch, b, &ReferencePolicy::with_eas(&params, e)).unwrap()
                };
                let fd = (at(h) - at(-h)) / (2.0 * h);
                let err = (fd - g[idx]).abs() / fd.abs().max(g[idx].abs()).max(1e-3);
                assert!(err <= 1e-4, "idx {idx}: {} vs {fd}", g[idx]);
            }
        }
    }

    #[test]
    fn constant_rewards_give_zero_gradient_and_scaling_is_linear() {
        let p = tsp(9, 2);
        let params = PolicyParams::init(PolicyKind::Tsp, 1);
        let policy = ReferencePolicy::with_eas(&params, eas_wrap(&params));
        let flat = toy_batch(&p, &policy, &[0.5, 0.5, 0.5], 4);
        let g = eas_gradient(&p, &flat, pomo_baseline(&flat.rewards()).unwrap(), &policy).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));

        let batch = toy_batch(&p, &policy, &[0.5, 0.0, 0.25], 4);
        let g1 = eas_gradient(&p, &batch, pomo_baseline(&batch.rewards()).unwrap(), &policy).unwrap();
        let mut scaled = batch.clone();
        scaled.rollouts.iter_mut().for_each(|r| r.reward *= 4.0);
        let g4 = eas_gradient(&p, &scaled, pomo_baseline(&scaled.rewards()).unwrap(), &policy).unwrap();
        for (a, b) in g1.iter().zip(&g4) {
            assert!((4.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn small_step_increases_the_surrogate() {
        let p = tsp(10, 3);
        let params = PolicyParams::init(PolicyKind::Tsp, 2);
        let mut policy = ReferencePolicy::with_eas(&params, eas_wrap(&params));
        let batch = toy_batch(&p, &policy, &[1.0, 0.0, 0.3, 0.0], 5);
        let b = pomo_baseline(&batch.rewards()).unwrap();
        let before = surrogate_objective(&p, &batch, b, &policy).unwrap();
        let g = eas_gradient(&p, &batch, b, &policy).unwrap();
        policy.eas_mut().unwrap().ascend(&g, 1e-4).unwrap();
        let after = surrogate_objective(&p, &batch, b, &policy).unwrap();
        assert!(after > before);
        assert!(matches!(eas_gradient(&p, &batch, b, &policy), Err(Error::Stale { .. })));
    }

    #[test]
    fn zero_learning_rate_matches_frozen_search() {
        let p = tsp(20, 4);
        let params = PolicyParams::init(PolicyKind::Tsp, 3);
        let c = cfg(3, 2, 5, 40, 8);
        let (oa, phi) = lrbs_oa(&p, &params, &c, &AdaptConfig::online().with_learning_rate(0.0)).unwrap();
        let frozen = lrbs(&p, &ReferencePolicy::new(&params), &c).unwrap();
        assert!(oa.same_outcome(&frozen));
        assert!(phi.is_zero());
    }

    #[test]
    fn adaptation_moves_phi_but_not_theta() {
        let p = tsp(20, 5);
        let params = PolicyParams::init(PolicyKind::Tsp, 3);
        let before = params.fingerprint();
        let (_, phi) = lrbs_oa(&p, &params, &cfg(3, 2, 5, 40, 1), &AdaptConfig::online().with_learning_rate(0.1)).unwrap();
        assert!(!phi.is_zero());
        assert_eq!(params.fingerprint(), before);
    }

    #[test]
    fn online_runs_do_not_depend_on_earlier_instances() {
        let (a, b) = (tsp(15, 6), tsp(15, 7));
        let params = PolicyParams::init(PolicyKind::Tsp, 3);
        let c = cfg(2, 2, 4, 20, 3);
        let oa = AdaptConfig::online().with_learning_rate(0.5);
        let alone = lrbs_oa(&b, &params, &c, &oa).unwrap().0;
        lrbs_oa(&a, &params, &c, &oa).unwrap();
        let after = lrbs_oa(&b, &params, &c, &oa).unwrap().0;
        assert!(alone.same_outcome(&after));
    }

    #[test]
    fn fine_tuning_carries_phi() {
        let params = PolicyParams::init(PolicyKind::Tsp, 3);
        let c = cfg(2, 2, 4, 16, 3);
        assert!(fine_tune(&[], &params, &c, &AdaptConfig::fine_tuning(0)).unwrap().is_zero());
        let set = [tsp(12, 1), tsp(12, 2)];
        let ft = AdaptConfig::fine_tuning(2).with_learning_rate(0.2);
        let carried = fine_tune(&set, &params, &c, &ft).unwrap();
        let first = fine_tune(&set[..1], &params, &c, &ft).unwrap();
        assert_ne!(carried.phi, first.phi);
        assert!(carried.version() > first.version());
    }

    #[test]
    fn adapt_n_s_overrides_block_length() {
        let p = tsp(15, 8);
        let params = PolicyParams::init(PolicyKind::Tsp, 3);
        let adapt = AdaptConfig {
            n_s_adapt: Some(10),
            ..AdaptConfig::online()
        };
        let (r, _) = lrbs_oa(&p, &params, &cfg(2, 2, 20, 40, 0), &adapt).unwrap();
        assert_eq!(r.trace.len(), 4);
        assert_eq!(ft_dataset_size(128, DEFAULT_FT_FRACTION), 13);
        assert_eq!(ft_dataset_size(10, DEFAULT_FT_FRACTION), 1);
    }
}
