//! Removal-reinsertion moves for pickup-and-delivery sequences.
//!
//! A sequence starts at the depot (node 0) and visits every other node once.
//! With `n` requests, pickup `r` is node `r + 1` and its delivery is node
//! `r + 1 + n`. A move `(r, j, k)` removes both nodes of request `r`, then
//! places the pickup after position `j` and the delivery after position `k`
//! of the reduced sequence; `k == j` puts the delivery right after the
//! pickup.

use crate::error::{invalid, Constraint, Error, Result};

/// Which ordering rules a pickup-and-delivery tour must respect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PdVariant {
    /// Every pickup precedes its delivery.
    Precedence,
    /// Precedence plus last-in-first-out unloading.
    Lifo,
}

impl std::str::FromStr for PdVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "precedence" | "pdtsp" => Ok(PdVariant::Precedence),
            "lifo" | "pdtspl" => Ok(PdVariant::Lifo),
            other => Err(invalid(format!("unknown PDP variant `{other}`"))),
        }
    }
}

#[inline]
pub(crate) fn requests_in(seq_len: usize) -> usize {
    (seq_len - 1) / 2
}

#[inline]
pub(crate) fn node_request(node: usize, n: usize) -> usize {
    (node - 1) % n
}

#[inline]
pub(crate) fn node_is_pickup(node: usize, n: usize) -> bool {
    node >= 1 && node <= n
}

fn first_violation(solution: &[usize], variant: PdVariant) -> Option<Constraint> {
    if solution.is_empty() || solution[0] != 0 || solution.len() % 2 == 0 {
        return Some(Constraint::Precedence);
    }
    let n = requests_in(solution.len());
    let mut picked = vec![false; n];
    let mut stack = Vec::with_capacity(n);
    let mut lifo_ok = true;
    for &v in &solution[1..] {
        if v == 0 || v > 2 * n {
            return Some(Constraint::Precedence);
        }
        let r = node_request(v, n);
        if node_is_pickup(v, n) {
            picked[r] = true;
            stack.push(r);
        } else {
            if !picked[r] {
                return Some(Constraint::Precedence);
            }
            if stack.last() == Some(&r) {
                stack.pop();
            } else {
                lifo_ok = false;
                if let Some(p) = stack.iter().rposition(|&x| x == r) {
                    stack.remove(p);
                }
            }
        }
    }
    (variant == PdVariant::Lifo && !lifo_ok).then_some(Constraint::Lifo)
}

/// Whether `solution` satisfies the ordering rules of `variant`.
pub fn pdp_feasible(solution: &[usize], variant: PdVariant) -> bool {
    first_violation(solution, variant).is_none()
}

/// `solution` with both nodes of `request` removed.
pub(crate) fn remove_request(solution: &[usize], request: usize) -> Vec<usize> {
    let n = requests_in(solution.len());
    let (p, d) = (request + 1, request + 1 + n);
    solution.iter().copied().filter(|&v| v != p && v != d).collect()
}

/// Inserts pickup after `reduced[j]` and delivery after `reduced[k]`.
pub(crate) fn reinsert(reduced: &[usize], pickup: usize, delivery: usize, j: usize, k: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(reduced.len() + 2);
    for (pos, &v) in reduced.iter().enumerate() {
        out.push(v);
        if pos == j {
            out.push(pickup);
        }
        if pos == k {
            out.push(delivery);
        }
    }
    out
}

/// Positions `k >= j` after which a delivery may follow a pickup placed
/// after `reduced[j]`. Under LIFO the nodes strictly between the two must
/// form complete requests.
pub(crate) fn delivery_slots(reduced: &[usize], j: usize, variant: PdVariant, n: usize) -> Vec<usize> {
    match variant {
        PdVariant::Precedence => (j..reduced.len()).collect(),
        PdVariant::Lifo => {
            let mut out = vec![j];
            let mut depth = 0i64;
            for (pos, &v) in reduced.iter().enumerate().skip(j + 1) {
                depth += if node_is_pickup(v, n) { 1 } else { -1 };
                if depth < 0 {
                    break;
                }
                if depth == 0 {
                    out.push(pos);
                }
            }
            out
        }
    }
}

/// Removal-reinsertion move; returns a new sequence.
pub fn pdp_apply(solution: &[usize], action: (usize, usize, usize), variant: PdVariant) -> Result<Vec<usize>> {
    let (r, j, k) = action;
    if solution.len() < 3 || solution.len() % 2 == 0 {
        return Err(invalid(format!("sequence length {} is not 2n+1", solution.len())));
    }
    let n = requests_in(solution.len());
    if r >= n {
        return Err(invalid(format!("request {r} out of range for {n} requests")));
    }
    let reduced = remove_request(solution, r);
    if j >= reduced.len() || k >= reduced.len() {
        return Err(invalid(format!(
            "insertion positions ({j}, {k}) out of range for a reduced sequence of {}",
            reduced.len()
        )));
    }
    if k < j {
        // Delivery would land ahead of its pickup.
        return Err(Error::Infeasible {
            constraint: Constraint::Precedence,
        });
    }
    let out = reinsert(&reduced, r + 1, r + 1 + n, j, k);
    match first_violation(&out, variant) {
        None => Ok(out),
        Some(constraint) => Err(Error::Infeasible { constraint }),
    }
}

/// The `(j, k)` that reinserts `request` where it already is.
#[cfg(test)]
fn identity_slots(solution: &[usize], request: usize) -> (usize, usize) {
    let n = requests_in(solution.len());
    let p = solution.iter().position(|&v| v == request + 1).unwrap();
    let d = solution.iter().position(|&v| v == request + 1 + n).unwrap();
    (p - 1, d - 2)
}
