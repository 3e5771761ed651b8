//! Limited rollout beam search and the baselines it is compared against.
//!
//! All drivers share one engine. A block expands every beam node into
//! `alpha` distinct sampled children, rolls each child out with the policy,
//! and selects a new beam. [`lrbs`] keeps the best rollout endpoints,
//! [`sgbs_c`] keeps the best children (ranked by their rollouts), and
//! [`beam_search`] is [`lrbs`] with single-step blocks.
//!
//! Every candidate owns its random stream: the first child of a node
//! continues the node's stream and the others fork from it. Candidates are
//! evaluated in parallel and merged in a fixed order, so results do not
//! depend on the number of worker threads.

mod config;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{default_config, default_config_for, Objective, Preset, SearchConfig, DEFAULT_N_S, DEFAULT_T_MAX};

use crate::adapt::{RecordedStep, Rollout, RolloutBatch};
use crate::error::{invalid, Error, Result};
use crate::mdp::{env_reset, Action, Problem, SearchState};
use crate::policy::{action_space, ImprovementPolicy, Sampled};
use crate::rng::{derive_seed, fork, rng_from_seed, SearchRng};

/// A state retained in the beam.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamNode {
    pub state: SearchState,
    /// Objective value the node was selected with.
    pub score: f64,
    /// Index of the parent in the previous beam and the move taken from it.
    pub parent: Option<usize>,
    pub action: Option<Action>,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best_solution: Vec<usize>,
    pub best_length: f64,
    /// Environment steps taken over all candidates.
    pub steps_consumed: u64,
    pub wall_seconds: f64,
    /// Best length after each block.
    pub trace: Vec<f64>,
    pub final_beam: Vec<BeamNode>,
}

impl SearchResult {
    /// Equality of everything except timing.
    pub fn same_outcome(&self, other: &SearchResult) -> bool {
        self.best_solution == other.best_solution
            && self.best_length.to_bits() == other.best_length.to_bits()
            && self.steps_consumed == other.steps_consumed
            && self.trace == other.trace
            && self.final_beam == other.final_beam
    }
}

/// Supplies the policy for each block and sees the block's rollouts.
pub(crate) trait BlockHook {
    type Policy: ImprovementPolicy + ?Sized;

    fn policy(&self) -> &Self::Policy;

    /// Whether rollouts should be recorded for [`after_block`](Self::after_block).
    fn records(&self) -> bool {
        false
    }

    fn phi_version(&self) -> u64 {
        0
    }

    fn after_block(&mut self, _problem: &Problem, _batch: RolloutBatch) -> Result<()> {
        Ok(())
    }
}

pub(crate) struct Frozen<'a, P: ?Sized>(pub &'a P);

impl<P: ImprovementPolicy + ?Sized> BlockHook for Frozen<'_, P> {
    type Policy = P;

    fn policy(&self) -> &P {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Mode {
    /// Keep rollout endpoints; depth advances by the block length.
    Lrbs,
    /// Keep the children themselves; depth advances by one.
    SgbsC,
}

struct Slot {
    node: BeamNode,
    rng: SearchRng,
}

struct Task {
    parent: usize,
    first: Sampled,
    rng: SearchRng,
}

struct Outcome {
    parent: usize,
    action: Action,
    child: Option<SearchState>,
    end: SearchState,
    rng: SearchRng,
    steps: Option<Vec<RecordedStep>>,
}

const SEARCH_STREAM: u64 = 0x5EA2C4;

/// Random stream a search with `seed` starts from.
pub fn search_rng(seed: u64) -> SearchRng {
    rng_from_seed(derive_seed(seed, &[SEARCH_STREAM]))
}

fn expand<P: ImprovementPolicy + ?Sized>(
    problem: &Problem,
    policy: &P,
    parents: &mut [Slot],
    alpha: usize,
) -> Result<Vec<Task>> {
    let mut tasks = Vec::with_capacity(parents.len() * alpha);
    for (pi, slot) in parents.iter_mut().enumerate() {
        let picks = policy.sample_distinct(problem, &slot.node.state, alpha, &mut slot.rng)?;
        for (c, first) in picks.into_iter().enumerate() {
            let rng = if c == 0 {
                slot.rng.clone()
            } else {
                fork(&slot.rng, c as u64)
            };
            tasks.push(Task { parent: pi, first, rng });
        }
    }
    Ok(tasks)
}

fn execute<P: ImprovementPolicy + ?Sized>(
    problem: &Problem,
    policy: &P,
    parents: &[Slot],
    task: Task,
    len: usize,
    record: bool,
    keep_child: bool,
) -> Result<Outcome> {
    let mut state = parents[task.parent].node.state.clone();
    let mut rng = task.rng;
    let mut steps = record.then(|| Vec::with_capacity(len));
    let mut step = |state: &mut SearchState, s: Sampled| -> Result<()> {
        if let Some(steps) = steps.as_mut() {
            steps.push(RecordedStep {
                state: state.clone(),
                action: s.action,
                log_prob: s.log_prob,
            });
        }
        state.advance(problem, s.action).map(|_| ())
    };
    step(&mut state, task.first)?;
    let child = keep_child.then(|| state.clone());
    for _ in 1..len {
        let s = policy.sample(problem, &state, &mut rng)?;
        step(&mut state, s)?;
    }
    Ok(Outcome {
        parent: task.parent,
        action: task.first.action,
        child,
        end: state,
        rng,
        steps,
    })
}

/// Orders candidates by their two keys, then insertion order,
/// drops repeated solutions and keeps at most `beta`.
fn select(problem: &Problem, mut pool: Vec<(Slot, f64, f64)>, beta: usize) -> Vec<Slot> {
    pool.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.2.total_cmp(&b.2)));
    let mut seen = HashSet::new();
    let mut beam = Vec::with_capacity(beta);
    for (slot, _, _) in pool {
        if beam.len() == beta {
            break;
        }
        if seen.insert(problem.canonical(&slot.node.state.current)) {
            beam.push(slot);
        }
    }
    beam
}

pub(crate) fn run<H: BlockHook>(
    problem: &Problem,
    hook: &mut H,
    config: &SearchConfig,
    mode: Mode,
    initial: SearchState,
) -> Result<SearchResult> {
    config.validate()?;
    let started = Instant::now();
    let mut best_solution = initial.best.clone();
    let mut best_length = initial.best_length;
    let mut steps_consumed = 0u64;
    let mut trace = Vec::new();

    let root_rng = search_rng(config.seed);
    let budget = config.budget();
    let available = action_space(problem, &initial).len();
    if config.alpha > available {
        return Err(invalid(format!(
            "alpha = {} exceeds the {available} moves available at the initial solution",
            config.alpha
        )));
    }
    let root = |rng| Slot {
        node: BeamNode {
            score: initial.best_length,
            state: initial.clone(),
            parent: None,
            action: None,
        },
        rng,
    };
    // Phase 0 draws the whole budget from the root when it has enough
    // distinct moves, otherwise beta root replicas draw alpha each.
    let (mut beam, root_alpha) = if budget <= available {
        (vec![root(root_rng)], budget)
    } else {
        let replicas = (0..config.beta)
            .map(|b| {
                root(if b == 0 {
                    root_rng.clone()
                } else {
                    fork(&root_rng, b as u64)
                })
            })
            .collect();
        (replicas, config.alpha)
    };

    let mut t = 0usize;
    let mut first = true;
    while t < config.t_max {
        let len = config.n_s.min(config.t_max - t);
        let alpha = if first { root_alpha } else { config.alpha };
        first = false;
        let policy = hook.policy();
        let tasks = expand(problem, policy, &mut beam, alpha)?;
        let record = hook.records();
        let keep_child = mode == Mode::SgbsC;
        let outcomes: Vec<Outcome> = tasks
            .into_par_iter()
            .map(|task| execute(problem, policy, &beam, task, len, record, keep_child))
            .collect::<Result<_>>()?;
        steps_consumed += (outcomes.len() * len) as u64;

        for o in &outcomes {
            if o.end.best_length < best_length {
                best_length = o.end.best_length;
                best_solution.clone_from(&o.end.best);
            }
        }
        trace.push(best_length);

        let mut rollouts = Vec::new();
        let mut pool = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            if let Some(steps) = o.steps {
                rollouts.push(Rollout {
                    steps,
                    reward: beam[o.parent].node.state.best_length - o.end.best_length,
                });
            }
            let key = match config.objective {
                Objective::BestLength => (o.end.best_length, o.end.current_length),
                Objective::CurrentLength => (o.end.current_length, o.end.best_length),
            };
            let state = match mode {
                Mode::Lrbs => o.end,
                Mode::SgbsC => o.child.expect("children are kept in this mode"),
            };
            let node = BeamNode {
                state,
                score: key.0,
                parent: Some(o.parent),
                action: Some(o.action),
            };
            pool.push((Slot { node, rng: o.rng }, key.0, key.1));
        }
        if record {
            let batch = RolloutBatch {
                rollouts,
                phi_version: hook.phi_version(),
            };
            hook.after_block(problem, batch)?;
        }
        beam = select(problem, pool, config.beta);
        t += match mode {
            Mode::Lrbs => len,
            Mode::SgbsC => 1,
        };
    }

    Ok(SearchResult {
        best_solution,
        best_length,
        steps_consumed,
        wall_seconds: started.elapsed().as_secs_f64(),
        trace,
        final_beam: beam.into_iter().map(|s| s.node).collect(),
    })
}

/// Limited rollout beam search from the initial solution `env_reset(problem, config.seed)`.
pub fn lrbs<P: ImprovementPolicy + ?Sized>(problem: &Problem, policy: &P, config: &SearchConfig) -> Result<SearchResult> {
    let initial = env_reset(problem, config.seed);
    run(problem, &mut Frozen(policy), config, Mode::Lrbs, initial)
}

/// [`lrbs`] from a given starting state.
pub fn lrbs_from<P: ImprovementPolicy + ?Sized>(
    problem: &Problem,
    policy: &P,
    config: &SearchConfig,
    initial: SearchState,
) -> Result<SearchResult> {
    run(problem, &mut Frozen(policy), config, Mode::Lrbs, initial)
}

/// Beam search with one-step look-ahead: [`lrbs`] with `n_s = 1`.
pub fn beam_search<P: ImprovementPolicy + ?Sized>(
    problem: &Problem,
    policy: &P,
    config: &SearchConfig,
) -> Result<SearchResult> {
    lrbs(problem, policy, &SearchConfig { n_s: 1, ..*config })
}

/// Beam search whose children are ranked by the best length their
/// `n_s`-step rollout reaches; the beam advances one step per iteration.
pub fn sgbs_c<P: ImprovementPolicy + ?Sized>(problem: &Problem, policy: &P, config: &SearchConfig) -> Result<SearchResult> {
    let initial = env_reset(problem, config.seed);
    run(problem, &mut Frozen(policy), config, Mode::SgbsC, initial)
}

/// `num_parallel` independent policy trajectories of `t_max` steps from the
/// same initial solution; returns the best solution seen.
pub fn sample_rollout<P: ImprovementPolicy + ?Sized>(
    problem: &Problem,
    policy: &P,
    t_max: usize,
    num_parallel: usize,
    seed: u64,
) -> Result<SearchResult> {
    if num_parallel == 0 {
        return Err(invalid("num_parallel must be at least 1"));
    }
    let started = Instant::now();
    let initial = env_reset(problem, seed);
    let base = search_rng(seed);
    let finals: Vec<SearchState> = (0..num_parallel)
        .into_par_iter()
        .map(|k| {
            let mut rng = if k == 0 { base.clone() } else { fork(&base, k as u64) };
            let mut state = initial.clone();
            for _ in 0..t_max {
                let s = policy.sample(problem, &state, &mut rng)?;
                state.advance(problem, s.action)?;
            }
            Ok(state)
        })
        .collect::<Result<_>>()?;
    let mut best = &initial;
    for s in &finals {
        if s.best_length < best.best_length {
            best = s;
        }
    }
    Ok(SearchResult {
        best_solution: best.best.clone(),
        best_length: best.best_length,
        steps_consumed: (num_parallel * t_max) as u64,
        wall_seconds: started.elapsed().as_secs_f64(),
        trace: vec![best.best_length],
        final_beam: finals
            .into_iter()
            .map(|state| BeamNode {
                score: state.best_length,
                state,
                parent: None,
                action: None,
            })
            .collect(),
    })
}

/// A search driver selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// `alpha * beta` independent policy trajectories of `t_max` steps.
    GreedySample,
    Lrbs,
    Bs,
    SgbsC,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::GreedySample, Method::Lrbs, Method::Bs, Method::SgbsC];

    pub fn name(self) -> &'static str {
        match self {
            Method::GreedySample => "greedy_sample",
            Method::Lrbs => "lrbs",
            Method::Bs => "bs",
            Method::SgbsC => "sgbs_c",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy_sample" | "sample" => Ok(Method::GreedySample),
            "lrbs" => Ok(Method::Lrbs),
            "bs" | "beam_search" => Ok(Method::Bs),
            "sgbs_c" | "sgbs" => Ok(Method::SgbsC),
            other => Err(invalid(format!("unknown search method `{other}`"))),
        }
    }
}

/// Runs `method` with `config`.
pub fn solve<P: ImprovementPolicy + ?Sized>(
    problem: &Problem,
    policy: &P,
    config: &SearchConfig,
    method: Method,
) -> Result<SearchResult> {
    match method {
        Method::GreedySample => {
            config.validate()?;
            sample_rollout(problem, policy, config.t_max, config.budget(), config.seed)
        }
        Method::Lrbs => lrbs(problem, policy, config),
        Method::Bs => beam_search(problem, policy, config),
        Method::SgbsC => sgbs_c(problem, policy, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gen_uniform_pdp, gen_uniform_tsp, held_karp_optimal};
    use crate::mdp::{two_opt_cyclic, PdVariant};
    use crate::policy::{PolicyKind, PolicyParams, ReferencePolicy, UniformPolicy};

    fn tsp(n: usize, seed: u64) -> Problem {
        Problem::Tsp(gen_uniform_tsp(n, seed).unwrap())
    }

    fn cfg(beta: usize, alpha: usize, n_s: usize, t_max: usize, seed: u64) -> SearchConfig {
        SearchConfig::new(beta, alpha, n_s, t_max).with_seed(seed)
    }

    #[test]
    fn single_node_beam_is_one_rollout() {
        let p = tsp(20, 1);
        let params = PolicyParams::init(PolicyKind::Tsp, 3);
        let policy = ReferencePolicy::new(&params);
        for seed in 0..5 {
            let a = lrbs(&p, &policy, &cfg(1, 1, 7, 50, seed)).unwrap();
            let b = sample_rollout(&p, &policy, 50, 1, seed).unwrap();
            assert_eq!(a.best_solution, b.best_solution);
            assert_eq!(a.best_length, b.best_length);
            assert_eq!(a.final_beam[0].state, b.final_beam[0].state);
            assert_eq!(a.steps_consumed, 50);
        }
    }

    #[test]
    fn beam_search_is_lrbs_with_unit_blocks_and_sgbs_agrees() {
        let p = tsp(15, 2);
        let c = cfg(4, 3, 1, 40, 9);
        let bs = beam_search(&p, &UniformPolicy, &cfg(4, 3, 6, 40, 9)).unwrap();
        let l = lrbs(&p, &UniformPolicy, &c).unwrap();
        let s = sgbs_c(&p, &UniformPolicy, &c).unwrap();
        assert!(bs.same_outcome(&l));
        assert!(s.same_outcome(&l));
    }

    #[test]
    fn step_accounting_without_shrinkage() {
        let p = tsp(30, 4);
        for (t_max, n_s) in [(100, 20), (95, 20), (20, 20)] {
            let r = lrbs(&p, &UniformPolicy, &cfg(3, 2, n_s, t_max, 0)).unwrap();
            assert_eq!(r.steps_consumed, 6 * t_max as u64);
            assert_eq!(r.trace.len(), t_max.div_ceil(n_s));
            assert!(r.final_beam.len() <= 3);
        }
    }

    #[test]
    fn sgbs_depth_advances_by_one() {
        let p = tsp(12, 5);
        let r = sgbs_c(&p, &UniformPolicy, &cfg(2, 2, 5, 9, 1)).unwrap();
        assert_eq!(r.trace.len(), 9);
        for node in &r.final_beam {
            assert_eq!(node.state.step, 9);
            assert!(node.score <= node.state.best_length);
        }
        for w in r.trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(r.trace.iter().all(|&x| r.best_length <= x));
    }

    #[test]
    fn result_length_matches_solution() {
        let p = tsp(25, 6);
        let r = lrbs(&p, &UniformPolicy, &cfg(5, 2, 4, 40, 3)).unwrap();
        assert_eq!(r.best_length, p.length(&r.best_solution));
        let init = env_reset(&p, 3);
        assert!(r.best_length <= init.best_length);
        for node in &r.final_beam {
            assert!(r.best_length <= node.state.best_length);
        }
    }

    #[test]
    fn independent_of_thread_count() {
        let p = tsp(20, 7);
        let params = PolicyParams::init(PolicyKind::Tsp, 1);
        let policy = ReferencePolicy::new(&params);
        let c = cfg(4, 3, 5, 30, 2);
        let runs: Vec<SearchResult> = [1, 3]
            .iter()
            .map(|&k| {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap();
                pool.install(|| lrbs(&p, &policy, &c).unwrap())
            })
            .collect();
        assert!(runs[0].same_outcome(&runs[1]));
        assert!(runs[0].same_outcome(&lrbs(&p, &policy, &c).unwrap()));
    }

    #[test]
    fn oversized_budget_falls_back_to_root_replicas() {
        // N = 8 has 25 moves; 64 children must come from 8 replicas.
        let p = tsp(8, 3);
        let r = lrbs(&p, &UniformPolicy, &cfg(8, 8, 5, 20, 0)).unwrap();
        assert_eq!(r.steps_consumed % 5, 0);
        assert!(lrbs(&p, &UniformPolicy, &cfg(1, 26, 5, 20, 0)).is_err());
    }

    #[test]
    fn exhaustive_beam_reaches_a_two_opt_local_optimum() {
        let p = tsp(6, 11);
        // Every move is a child, only the best survives each step.
        let m = crate::mdp::tsp_action_pairs(6).len();
        let r = beam_search(&p, &UniformPolicy, &cfg(1, m, 1, 30, 0)).unwrap();
        let best = &r.best_solution;
        for (i, j) in crate::mdp::tsp_action_pairs(6) {
            let mut t = best.clone();
            two_opt_cyclic(&mut t, i, j).unwrap();
            assert!(p.length(&t) >= r.best_length - 1e-12);
        }
        let opt = held_karp_optimal(match &p {
            Problem::Tsp(t) => t,
            _ => unreachable!(),
        })
        .unwrap();
        assert!(r.best_length >= opt.optimal_length - 1e-12);
    }

    #[test]
    fn pdp_search_keeps_feasibility() {
        for variant in [PdVariant::Precedence, PdVariant::Lifo] {
            let p = Problem::Pdp {
                instance: gen_uniform_pdp(5, 2).unwrap(),
                variant,
            };
            let params = PolicyParams::init(PolicyKind::Pdp, 2);
            let policy = ReferencePolicy::new(&params);
            let r = lrbs(&p, &policy, &cfg(4, 2, 5, 30, 1)).unwrap();
            assert!(p.is_valid_solution(&r.best_solution));
            assert_eq!(r.best_length, p.length(&r.best_solution));
        }
    }

    #[test]
    fn sample_rollout_accounting() {
        let p = tsp(10, 0);
        let r = sample_rollout(&p, &UniformPolicy, 30, 4, 1).unwrap();
        assert_eq!(r.steps_consumed, 120);
        assert_eq!(r.final_beam.len(), 4);
        assert!(sample_rollout(&p, &UniformPolicy, 30, 0, 1).is_err());
    }
}
