//! REINFORCE training of the reference policy and gap evaluation.
//!
//! Each epoch draws fresh random instances. Every instance gets
//! `rollouts_per_instance` episodes from distinct random initial solutions;
//! an episode's return is the total reward, which telescopes to the initial
//! length minus the best length reached. Advantages use the mean return of
//! the instance's episodes and all of θ is updated with Adam.

use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::{instance_seed, pomo_baseline};
use crate::error::{invalid, Error, Result};
use crate::instance::{
    brute_force_pdp_optimal, gen_uniform_pdp, gen_uniform_tsp, held_karp_optimal, HELD_KARP_MAX_NODES,
    PDP_BRUTE_FORCE_MAX_REQUESTS,
};
use crate::mdp::{env_reset, PdVariant, Problem};
use crate::policy::{GradBuffer, PolicyKind, PolicyParams, ReferencePolicy};
use crate::rng::{derive_seed, rng_from_seed};
use crate::search::{sample_rollout, solve, Method, SearchConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// `None` trains on TSP, otherwise on pickup-and-delivery.
    #[serde(default)]
    pub variant: Option<PdVariant>,
    /// Node count for TSP, request count for pickup-and-delivery.
    pub instance_size: usize,
    pub episodes_per_epoch: usize,
    pub epochs: usize,
    pub episode_length: usize,
    pub rollouts_per_instance: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Instances used for the gap column of the training curve.
    #[serde(default = "default_validation_size")]
    pub validation_size: usize,
}

fn default_validation_size() -> usize {
    8
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: None,
            instance_size: 20,
            episodes_per_epoch: 64,
            epochs: 200,
            episode_length: 200,
            rollouts_per_instance: 8,
            learning_rate: 0.05,
            seed: 0,
            validation_size: default_validation_size(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.instance_size,
            self.episodes_per_epoch,
            self.epochs,
            self.episode_length,
            self.rollouts_per_instance,
        ];
        if counts.contains(&0) {
            return Err(invalid("training counts must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning rate {} must be finite and nonnegative", self.learning_rate)));
        }
        Ok(())
    }

    fn kind(&self) -> PolicyKind {
        if self.variant.is_some() {
            PolicyKind::Pdp
        } else {
            PolicyKind::Tsp
        }
    }

    /// A random training or validation problem.
    pub fn problem(&self, seed: u64) -> Result<Problem> {
        Ok(match self.variant {
            None => Problem::Tsp(gen_uniform_tsp(self.instance_size, seed)?),
            Some(variant) => Problem::Pdp {
                instance: gen_uniform_pdp(self.instance_size, seed)?,
                variant,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub mean_return: f64,
    /// Blank when no exact optimum is available at this size.
    pub mean_gap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub curve: Vec<CurvePoint>,
    /// Set when an update produced non-finite weights; `params` then holds
    /// the last finite weights.
    pub diverged: bool,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Ascent step on `w` along `grad`.
    fn step(&mut self, w: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..w.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            w[i] += lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Exact optimum when an oracle covers the problem size.
pub fn exact_optimum(problem: &Problem) -> Result<Option<f64>> {
    match problem {
        Problem::Tsp(t) if t.n() <= HELD_KARP_MAX_NODES => Ok(Some(held_karp_optimal(t)?.optimal_length)),
        Problem::Pdp { instance, variant } if instance.requests() <= PDP_BRUTE_FORCE_MAX_REQUESTS => {
            Ok(Some(brute_force_pdp_optimal(instance, *variant)?.optimal_length))
        }
        _ => Ok(None),
    }
}

const VALIDATION_STREAM: u64 = 0x7A11D;

pub fn train_base_policy(config: &TrainConfig) -> Result<TrainOutcome> {
    train_from(PolicyParams::init(config.kind(), config.seed), config)
}

/// Trains starting from `params`.
pub fn train_from(mut params: PolicyParams, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    params.validate()?;
    let validation = validation_set(config)?;
    let mut adam = Adam::new(params.weights.len());
    let mut curve = Vec::with_capacity(config.epochs);
    let mut diverged = false;
    let k = config.rollouts_per_instance;

    for epoch in 0..config.epochs {
        let problems: Vec<Problem> = (0..config.episodes_per_epoch)
            .map(|i| config.problem(derive_seed(config.seed, &[epoch as u64, i as u64])))
            .collect::<Result<_>>()?;
        let policy = ReferencePolicy::new(&params);
        let jobs: Vec<(usize, usize)> = (0..problems.len()).flat_map(|i| (0..k).map(move |r| (i, r))).collect();
        let episodes: Vec<(f64, GradBuffer)> = jobs
            .into_par_iter()
            .map(|(i, r)| {
                let seed = derive_seed(config.seed, &[epoch as u64, i as u64, r as u64]);
                let problem = &problems[i];
                let mut state = env_reset(problem, seed);
                let mut rng = rng_from_seed(derive_seed(seed, &[1]));
                let mut grad = GradBuffer::theta_only(&params);
                let mut ret = 0.0;
                for _ in 0..config.episode_length {
                    let s = policy.sample_with_grad(problem, &state, &mut rng, &mut grad, 1.0)?;
                    ret += state.advance(problem, s.action)?;
                }
                Ok((ret, grad))
            })
            .collect::<Result<_>>()?;

        let mut total = GradBuffer::theta_only(&params);
        let norm = 1.0 / episodes.len() as f64;
        let mut return_sum = 0.0;
        for group in episodes.chunks(k) {
            let returns: Vec<f64> = group.iter().map(|e| e.0).collect();
            let b = pomo_baseline(&returns)?;
            for (ret, g) in group {
                return_sum += ret;
                total.add_scaled(g, (ret - b) * norm);
            }
        }
        let grad = total.theta.expect("theta gradient");
        let mut next = params.clone();
        adam.step(&mut next.weights, &grad, config.learning_rate);
        if next.validate().is_err() || grad.iter().any(|g| !g.is_finite()) {
            warn!("training diverged at epoch {epoch}; keeping the last finite weights");
            diverged = true;
            break;
        }
        params = next;

        let mean_gap = validation_gap(&params, &validation, config)?;
        let point = CurvePoint {
            epoch,
            mean_return: return_sum * norm,
            mean_gap,
        };
        info!("epoch {epoch}: mean return {:.4}, gap {:?}", point.mean_return, point.mean_gap);
        curve.push(point);
    }
    Ok(TrainOutcome { params, curve, diverged })
}

fn validation_set(config: &TrainConfig) -> Result<Vec<(Problem, f64)>> {
    let mut out = Vec::new();
    for i in 0..config.validation_size {
        let p = config.problem(derive_seed(config.seed, &[VALIDATION_STREAM, i as u64]))?;
        match exact_optimum(&p)? {
            Some(opt) => out.push((p, opt)),
            None => return Ok(Vec::new()),
        }
    }
    Ok(out)
}

fn validation_gap(params: &PolicyParams, set: &[(Problem, f64)], config: &TrainConfig) -> Result<Option<f64>> {
    if set.is_empty() {
        return Ok(None);
    }
    let policy = ReferencePolicy::new(params);
    let mut sum = 0.0;
    for (i, (p, opt)) in set.iter().enumerate() {
        let r = sample_rollout(p, &policy, config.episode_length, 1, i as u64)?;
        sum += gap_percent(r.best_length, *opt);
    }
    Ok(Some(sum / set.len() as f64))
}

pub fn write_training_curve(curve: &[CurvePoint], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// `(obj - opt) / opt * 100`.
pub fn gap_percent(obj: f64, opt: f64) -> f64 {
    (obj - opt) / opt * 100.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapStats {
    pub gaps: Vec<f64>,
    pub objs: Vec<f64>,
    pub mean_gap: f64,
    pub mean_obj: f64,
    pub total_seconds: f64,
}

impl GapStats {
    pub fn from_pairs(objs: Vec<f64>, opts: &[f64], total_seconds: f64) -> Result<Self> {
        if objs.len() != opts.len() || objs.is_empty() {
            return Err(invalid("objective and optimum lists must be nonempty and equally long"));
        }
        let gaps: Vec<f64> = objs.iter().zip(opts).map(|(o, p)| gap_percent(*o, *p)).collect();
        let n = objs.len() as f64;
        Ok(Self {
            mean_gap: gaps.iter().sum::<f64>() / n,
            mean_obj: objs.iter().sum::<f64>() / n,
            gaps,
            objs,
            total_seconds,
        })
    }
}

/// Solves every instance with `method` and reports optimality gaps against
/// `reference`, or against exact optima when none is given. Instance `i`
/// runs with seed `instance_seed(config.seed, i)`.
pub fn evaluate_policy(
    params: &PolicyParams,
    dataset: &[Problem],
    method: Method,
    config: &SearchConfig,
    reference: Option<&[f64]>,
) -> Result<GapStats> {
    let opts: Vec<f64> = match reference {
        Some(r) if r.len() == dataset.len() => r.to_vec(),
        Some(r) => {
            return Err(invalid(format!(
                "{} reference costs for {} instances",
                r.len(),
                dataset.len()
            )))
        }
        None => dataset
            .iter()
            .enumerate()
            .map(|(i, p)| exact_optimum(p)?.ok_or_else(|| Error::MissingReference(format!("#{i}"))))
            .collect::<Result<_>>()?,
    };
    let policy = ReferencePolicy::new(params);
    let mut objs = Vec::with_capacity(dataset.len());
    let mut seconds = 0.0;
    for (i, p) in dataset.iter().enumerate() {
        let started = Instant::now();
        let r = solve(p, &policy, &config.with_seed(instance_seed(config.seed, i)), method)?;
        seconds += started.elapsed().as_secs_f64();
        objs.push(r.best_length);
    }
    GapStats::from_pairs(objs, &opts, seconds)
}
