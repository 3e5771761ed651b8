//! The improvement MDP: a state is the current solution plus the best one
//! seen so far, actions are local moves, and the reward is the decrease of
//! the best-so-far length.

mod pdp;
mod tsp;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::instance::{check_permutation, AnyInstance, Geometry, Instance, PdInstance};

pub use pdp::{pdp_apply, pdp_feasible, PdVariant};
pub(crate) use pdp::{delivery_slots, reinsert, remove_request};
pub use tsp::{canonical_cycle, is_degenerate_two_opt, tsp_action_pairs, two_opt_apply, two_opt_cyclic};

/// A problem to improve solutions of.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Tsp(Instance),
    Pdp { instance: PdInstance, variant: PdVariant },
}

impl Problem {
    pub fn from_instance(inst: AnyInstance, variant: PdVariant) -> Self {
        match inst {
            AnyInstance::Tsp(t) => Problem::Tsp(t),
            AnyInstance::Pdp(p) => Problem::Pdp { instance: p, variant },
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.geometry().len()
    }

    pub fn geometry(&self) -> &Geometry {
        match self {
            Problem::Tsp(t) => t.geometry(),
            Problem::Pdp { instance, .. } => instance.geometry(),
        }
    }

    pub fn is_tsp(&self) -> bool {
        matches!(self, Problem::Tsp(_))
    }

    /// Closed length of a solution sequence.
    #[inline]
    pub fn length(&self, seq: &[usize]) -> f64 {
        self.geometry().cycle_length(seq)
    }

    /// Key under which equivalent solutions compare equal.
    pub fn canonical(&self, seq: &[usize]) -> Vec<usize> {
        match self {
            Problem::Tsp(_) => canonical_cycle(seq),
            Problem::Pdp { .. } => seq.to_vec(),
        }
    }

    pub fn is_valid_solution(&self, seq: &[usize]) -> bool {
        match self {
            Problem::Tsp(t) => check_permutation(seq, t.n()).is_ok(),
            Problem::Pdp { instance, variant } => {
                check_permutation(seq, instance.n_nodes()).is_ok() && pdp_feasible(seq, *variant)
            }
        }
    }

    /// Applies `action` to `seq` in place.
    pub(crate) fn apply(&self, seq: &mut Vec<usize>, action: Action) -> Result<()> {
        match (self, action) {
            (Problem::Tsp(t), Action::TwoOpt { i, j }) => {
                if j >= t.n() || i >= j || is_degenerate_two_opt(t.n(), i, j) {
                    return Err(invalid(format!("2-opt move ({i}, {j}) is not in the action space")));
                }
                two_opt_cyclic(seq, i, j)
            }
            (Problem::Pdp { variant, .. }, Action::Reinsert { request, j, k }) => {
                *seq = pdp_apply(seq, (request, j, k), *variant)?;
                Ok(())
            }
            (_, a) => Err(invalid(format!("action {a:?} does not apply to this problem"))),
        }
    }
}

/// A local move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    /// Reverse tour positions `i..=j`.
    TwoOpt { i: usize, j: usize },
    /// Remove `request` and reinsert its pickup after position `j` and its
    /// delivery after position `k` of the reduced sequence.
    Reinsert { request: usize, j: usize, k: usize },
}

/// MDP state: current solution, best so far, and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchState {
    pub current: Vec<usize>,
    pub best: Vec<usize>,
    pub current_length: f64,
    pub best_length: f64,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: SearchState,
    /// Decrease of the best-so-far length; zero unless the step improved it.
    pub reward: f64,
}

impl SearchState {
    pub fn from_solution(problem: &Problem, solution: Vec<usize>) -> Result<Self> {
        if !problem.is_valid_solution(&solution) {
            return Err(invalid("initial solution is not a feasible permutation"));
        }
        let len = problem.length(&solution);
        Ok(Self {
            best: solution.clone(),
            current: solution,
            current_length: len,
            best_length: len,
            step: 0,
        })
    }

    /// In-place transition; returns the reward.
    pub(crate) fn advance(&mut self, problem: &Problem, action: Action) -> Result<f64> {
        problem.apply(&mut self.current, action)?;
        debug_assert!(problem.is_valid_solution(&self.current));
        self.current_length = problem.length(&self.current);
        self.step += 1;
        if self.current_length < self.best_length {
            let reward = self.best_length - self.current_length;
            self.best.clone_from(&self.current);
            self.best_length = self.current_length;
            Ok(reward)
        } else {
            Ok(0.0)
        }
    }
}

/// Random initial state, deterministic per `(problem, seed)`.
pub fn env_reset(problem: &Problem, seed: u64) -> SearchState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let solution = match problem {
        Problem::Tsp(t) => {
            let mut tour: Vec<usize> = (0..t.n()).collect();
            tour.shuffle(&mut rng);
            tour
        }
        Problem::Pdp { instance, variant } => random_pdp_solution(instance, *variant, &mut rng),
    };
    SearchState::from_solution(problem, solution).expect("generated solutions are feasible")
}

/// Builds a feasible sequence by inserting requests in random order at
/// uniformly chosen feasible positions.
fn random_pdp_solution(instance: &PdInstance, variant: PdVariant, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = instance.requests();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut seq = vec![0];
    for r in order {
        let j = rng.gen_range(0..seq.len());
        let slots = delivery_slots(&seq, j, variant, n);
        let k = slots[rng.gen_range(0..slots.len())];
        seq = reinsert(&seq, instance.pickup_node(r), instance.delivery_node(r), j, k);
    }
    seq
}

/// Pure transition: returns the successor state and its reward.
pub fn env_step(problem: &Problem, state: &SearchState, action: Action) -> Result<StepOutcome> {
    let mut next = state.clone();
    let reward = next.advance(problem, action)?;
    Ok(StepOutcome { next_state: next, reward })
}
