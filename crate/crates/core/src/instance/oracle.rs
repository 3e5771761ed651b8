//! Exact optima for small instances.

use super::{Instance, PdInstance};
use crate::error::{Error, Result};
use crate::mdp::PdVariant;

pub const HELD_KARP_MAX_NODES: usize = 18;
/// Largest size [`held_karp_optimal_up_to`] accepts; tables take about 400 MB.
pub const HELD_KARP_HARD_LIMIT: usize = 22;
pub const PDP_BRUTE_FORCE_MAX_REQUESTS: usize = 5;

/// An optimal tour and its length.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub optimal_length: f64,
    pub optimal_tour: Vec<usize>,
}

/// Held-Karp dynamic program over subsets, with node 0 fixed as the start.
///
/// Path costs are accumulated left to right, so `optimal_length` equals
/// `tour_length(optimal_tour)` bit for bit.
pub fn held_karp_optimal(instance: &Instance) -> Result<OracleResult> {
    held_karp_optimal_up_to(instance, HELD_KARP_MAX_NODES)
}

/// [`held_karp_optimal`] with a caller-chosen size limit, for callers that
/// can afford `O(2^N N)` memory past the default cutoff.
pub fn held_karp_optimal_up_to(instance: &Instance, max_nodes: usize) -> Result<OracleResult> {
    let n = instance.n();
    let limit = max_nodes.min(HELD_KARP_HARD_LIMIT);
    if n > limit {
        return Err(Error::SizeLimit {
            what: "TSP instance",
            size: n,
            limit,
        });
    }
    // Subsets range over nodes 1..n, encoded as bit (v - 1).
    let m = n - 1;
    let full = (1usize << m) - 1;
    let mut cost = vec![f64::INFINITY; (1 << m) * m];
    let mut parent = vec![u8::MAX; (1 << m) * m];
    for v in 0..m {
        cost[(1 << v) * m + v] = instance.dist(0, v + 1);
    }
    for mask in 1..=full {
        for last in 0..m {
            if mask & (1 << last) == 0 {
                continue;
            }
            let c = cost[mask * m + last];
            if !c.is_finite() {
                continue;
            }
            for next in 0..m {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let nm = mask | (1 << next);
                let cand = c + instance.dist(last + 1, next + 1);
                if cand < cost[nm * m + next] {
                    cost[nm * m + next] = cand;
                    parent[nm * m + next] = last as u8;
                }
            }
        }
    }

    let mut best = f64::INFINITY;
    let mut best_last = 0;
    for last in 0..m {
        let c = cost[full * m + last] + instance.dist(last + 1, 0);
        if c < best {
            best = c;
            best_last = last;
        }
    }

    let mut rev = Vec::with_capacity(n);
    let (mut mask, mut last) = (full, best_last);
    loop {
        rev.push(last + 1);
        let p = parent[mask * m + last];
        mask &= !(1 << last);
        if p == u8::MAX {
            break;
        }
        last = p as usize;
    }
    let mut tour = vec![0];
    tour.extend(rev.into_iter().rev());
    debug_assert_eq!(instance.geometry().cycle_length(&tour), best);
    Ok(OracleResult {
        optimal_length: best,
        optimal_tour: tour,
    })
}

/// Exhaustive depth-first enumeration of feasible pickup-and-delivery
/// sequences, with the depot fixed first.
pub fn brute_force_pdp_optimal(instance: &PdInstance, variant: PdVariant) -> Result<OracleResult> {
    let n = instance.requests();
    if n > PDP_BRUTE_FORCE_MAX_REQUESTS {
        return Err(Error::SizeLimit {
            what: "PDP instance",
            size: n,
            limit: PDP_BRUTE_FORCE_MAX_REQUESTS,
        });
    }
    let mut search = PdSearch {
        instance,
        variant,
        seq: vec![0],
        picked: vec![false; n],
        delivered: vec![false; n],
        stack: Vec::new(),
        best: f64::INFINITY,
        best_seq: Vec::new(),
    };
    search.descend(0.0);
    Ok(OracleResult {
        optimal_length: search.best,
        optimal_tour: search.best_seq,
    })
}

struct PdSearch<'a> {
    instance: &'a PdInstance,
    variant: PdVariant,
    seq: Vec<usize>,
    picked: Vec<bool>,
    delivered: Vec<bool>,
    stack: Vec<usize>,
    best: f64,
    best_seq: Vec<usize>,
}

impl PdSearch<'_> {
    fn descend(&mut self, acc: f64) {
        let inst = self.instance;
        let last = *self.seq.last().unwrap();
        if self.seq.len() == inst.n_nodes() {
            let total = acc + inst.dist(last, 0);
            if total < self.best {
                self.best = total;
                self.best_seq = self.seq.clone();
            }
            return;
        }
        for r in 0..inst.requests() {
            if !self.picked[r] {
                let v = inst.pickup_node(r);
                self.picked[r] = true;
                self.stack.push(r);
                self.seq.push(v);
                self.descend(acc + inst.dist(last, v));
                self.seq.pop();
                self.stack.pop();
                self.picked[r] = false;
            } else if !self.delivered[r] {
                let top_ok = match self.variant {
                    PdVariant::Precedence => true,
                    PdVariant::Lifo => self.stack.last() == Some(&r),
                };
                if !top_ok {
                    continue;
                }
                let v = inst.delivery_node(r);
                let pos = self.stack.iter().rposition(|&x| x == r).unwrap();
                self.stack.remove(pos);
                self.delivered[r] = true;
                self.seq.push(v);
                self.descend(acc + inst.dist(last, v));
                self.seq.pop();
                self.delivered[r] = false;
                self.stack.insert(pos, r);
            }
        }
    }
}
