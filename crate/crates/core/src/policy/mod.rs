//! Improvement policies: distributions over moves given a search state.
//!
//! [`ImprovementPolicy`] is the pluggable interface the search drivers use.
//! [`ReferencePolicy`] is a small trainable scorer with an optional
//! adaptation layer; [`UniformPolicy`] picks uniformly among valid moves.

mod params;
mod reference;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::mdp::{delivery_slots, remove_request, tsp_action_pairs, Action, Problem, SearchState};
use crate::rng::SearchRng;

pub use params::{
    eas_wrap, EasParams, PolicyKind, PolicyParams, EAS_FEATURES, EMBED_DIM, HEAD_LEN, NODE_FEATURES, PAIR_FEATURES,
};
pub use reference::{GradBuffer, ReferencePolicy};

/// A sampled move and its log-probability under the full distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampled {
    pub action: Action,
    pub log_prob: f64,
}

/// A normalized distribution over the valid moves of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub support: Vec<Action>,
    pub probabilities: Vec<f64>,
}

impl ActionDistribution {
    pub fn uniform(support: Vec<Action>) -> Self {
        let p = 1.0 / support.len() as f64;
        let probabilities = vec![p; support.len()];
        Self { support, probabilities }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn probability(&self, action: Action) -> Option<f64> {
        self.support
            .iter()
            .position(|&a| a == action)
            .map(|i| self.probabilities[i])
    }

    pub fn sample(&self, rng: &mut SearchRng) -> Result<Sampled> {
        if self.is_empty() {
            return Err(invalid("cannot sample from an empty action space"));
        }
        let i = draw_index(&self.probabilities, &[], rng);
        Ok(Sampled {
            action: self.support[i],
            log_prob: self.probabilities[i].ln(),
        })
    }
}

/// Index drawn proportionally to `weights`, skipping entries flagged in
/// `taken` (an empty mask takes nothing). Consumes one uniform variate.
pub(crate) fn draw_index(weights: &[f64], taken: &[bool], rng: &mut SearchRng) -> usize {
    let is_taken = |i: usize| taken.get(i).copied().unwrap_or(false);
    let total: f64 = weights
        .iter()
        .enumerate()
        .filter(|&(i, _)| !is_taken(i))
        .map(|(_, w)| w)
        .sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 || is_taken(i) {
            continue;
        }
        acc += w;
        last = Some(i);
        if u < acc {
            return i;
        }
    }
    // Rounding left u at the top of the range; fall back to the last
    // admissible entry, or any untaken one when all weights vanished.
    last.or_else(|| (0..weights.len()).find(|&i| !is_taken(i)))
        .expect("draw from an exhausted distribution")
}

/// Draws `count` pairwise-distinct moves by sequential sampling without
/// replacement, renormalizing after each draw.
pub fn sample_distinct(dist: &ActionDistribution, count: usize, rng: &mut SearchRng) -> Result<Vec<Sampled>> {
    if count > dist.len() {
        return Err(invalid(format!(
            "cannot draw {count} distinct moves from a support of {}",
            dist.len()
        )));
    }
    let mut taken = vec![false; dist.len()];
    let mut picked = Vec::with_capacity(count);
    for _ in 0..count {
        let i = draw_index(&dist.probabilities, &taken, rng);
        taken[i] = true;
        picked.push(i);
    }
    Ok(picked
        .into_iter()
        .map(|i| Sampled {
            action: dist.support[i],
            log_prob: dist.probabilities[i].ln(),
        })
        .collect())
}

/// Every valid move of `state`, in the canonical enumeration order.
pub fn action_space(problem: &Problem, state: &SearchState) -> Vec<Action> {
    match problem {
        Problem::Tsp(t) => tsp_action_pairs(t.n())
            .into_iter()
            .map(|(i, j)| Action::TwoOpt { i, j })
            .collect(),
        Problem::Pdp { instance, variant } => {
            let n = instance.requests();
            let mut out = Vec::new();
            for r in 0..n {
                let reduced = remove_request(&state.current, r);
                for j in 0..reduced.len() {
                    for k in delivery_slots(&reduced, j, *variant, n) {
                        out.push(Action::Reinsert { request: r, j, k });
                    }
                }
            }
            out
        }
    }
}

/// A stochastic improvement policy.
///
/// Only [`action_dist`](Self::action_dist) is required. Implementations with
/// a cheaper factorized sampler should override the sampling methods, keeping
/// the rule that `sample_distinct(.., 1, rng)` consumes `rng` exactly like
/// `sample`.
pub trait ImprovementPolicy: Sync {
    fn action_dist(&self, problem: &Problem, state: &SearchState) -> Result<ActionDistribution>;

    fn sample(&self, problem: &Problem, state: &SearchState, rng: &mut SearchRng) -> Result<Sampled> {
        self.action_dist(problem, state)?.sample(rng)
    }

    fn sample_distinct(
        &self,
        problem: &Problem,
        state: &SearchState,
        count: usize,
        rng: &mut SearchRng,
    ) -> Result<Vec<Sampled>> {
        sample_distinct(&self.action_dist(problem, state)?, count, rng)
    }

    fn log_prob(&self, problem: &Problem, state: &SearchState, action: Action) -> Result<f64> {
        self.action_dist(problem, state)?
            .probability(action)
            .map(f64::ln)
            .ok_or_else(|| invalid(format!("{action:?} is not in the support")))
    }
}

/// Uniform over the valid moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPolicy;

impl ImprovementPolicy for UniformPolicy {
    fn action_dist(&self, problem: &Problem, state: &SearchState) -> Result<ActionDistribution> {
        let support = action_space(problem, state);
        if support.is_empty() {
            return Err(Error::InvalidArgument("the state has no valid moves".into()));
        }
        Ok(ActionDistribution::uniform(support))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::gen_uniform_tsp;
    use crate::mdp::env_reset;
    use crate::rng::rng_from_seed;
    use std::collections::HashSet;

    fn skewed() -> ActionDistribution {
        let support: Vec<Action> = (0..5).map(|i| Action::TwoOpt { i, j: i + 2 }).collect();
        let w = [0.4, 0.25, 0.2, 0.1, 0.05];
        ActionDistribution {
            support,
            probabilities: w.to_vec(),
        }
    }

    #[test]
    fn exhaustive_draw_returns_the_support() {
        let d = skewed();
        let mut rng = rng_from_seed(1);
        let got: HashSet<Action> = sample_distinct(&d, 5, &mut rng)
            .unwrap()
            .into_iter()
            .map(|s| s.action)
            .collect();
        assert_eq!(got, d.support.iter().copied().collect());
        assert!(sample_distinct(&d, 6, &mut rng).is_err());
    }

    #[test]
    fn draws_are_distinct_and_deterministic() {
        let d = skewed();
        for seed in 0..200 {
            let a = sample_distinct(&d, 3, &mut rng_from_seed(seed)).unwrap();
            let b = sample_distinct(&d, 3, &mut rng_from_seed(seed)).unwrap();
            assert_eq!(a, b);
            let set: HashSet<Action> = a.iter().map(|s| s.action).collect();
            assert_eq!(set.len(), 3);
        }
    }

    #[test]
    fn single_draw_frequencies_match_within_three_sigma() {
        let d = skewed();
        let mut rng = rng_from_seed(9);
        let trials = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..trials {
            let s = sample_distinct(&d, 1, &mut rng).unwrap()[0];
            counts[d.support.iter().position(|&a| a == s.action).unwrap()] += 1;
        }
        for (c, p) in counts.iter().zip(&d.probabilities) {
            let sd = (trials as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - trials as f64 * p).abs() <= 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn sample_and_single_distinct_draw_consume_rng_identically() {
        let d = skewed();
        for seed in 0..50 {
            let mut a = rng_from_seed(seed);
            let mut b = rng_from_seed(seed);
            assert_eq!(d.sample(&mut a).unwrap(), sample_distinct(&d, 1, &mut b).unwrap()[0]);
            assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        }
    }

    #[test]
    fn uniform_log_prob_is_minus_log_m() {
        let p = Problem::Tsp(gen_uniform_tsp(9, 0).unwrap());
        let s = env_reset(&p, 0);
        let m = action_space(&p, &s).len() as f64;
        let lp = UniformPolicy.log_prob(&p, &s, Action::TwoOpt { i: 1, j: 3 }).unwrap();
        assert!((lp + m.ln()).abs() < 1e-12);
        assert!(UniformPolicy.log_prob(&p, &s, Action::TwoOpt { i: 0, j: 8 }).is_err());
    }
}
