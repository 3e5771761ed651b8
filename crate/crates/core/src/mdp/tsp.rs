//! 2-opt moves on closed tours.

use crate::error::{invalid, Result};

/// A segment reversal whose segment or complement has at most one node
/// leaves the cycle unchanged.
#[inline]
pub fn is_degenerate_two_opt(n: usize, i: usize, j: usize) -> bool {
    let len = j + 1 - i;
    len <= 1 || len + 1 >= n
}

fn check_move(n: usize, i: usize, j: usize) -> Result<()> {
    if i >= j || j >= n {
        return Err(invalid(format!(
            "2-opt needs 0 <= i < j < {n}, got (i={i}, j={j})"
        )));
    }
    Ok(())
}

/// Reverses the inclusive position range `i..=j`, returning a new tour.
pub fn two_opt_apply(tour: &[usize], i: usize, j: usize) -> Result<Vec<usize>> {
    check_move(tour.len(), i, j)?;
    let mut out = tour.to_vec();
    out[i..=j].reverse();
    Ok(out)
}

/// In-place 2-opt that reverses whichever side of the cycle is shorter.
///
/// The result is cyclically equivalent to [`two_opt_apply`] and the move is
/// still its own inverse for a fixed `(i, j)`.
pub fn two_opt_cyclic(tour: &mut [usize], i: usize, j: usize) -> Result<()> {
    let n = tour.len();
    check_move(n, i, j)?;
    let inner = j + 1 - i;
    if 2 * inner <= n {
        tour[i..=j].reverse();
        return Ok(());
    }
    // Reverse the wrapped complement j+1, .., n-1, 0, .., i-1 in place.
    let outer = n - inner;
    let (mut a, mut b) = ((j + 1) % n, (i + n - 1) % n);
    for _ in 0..outer / 2 {
        tour.swap(a, b);
        a = (a + 1) % n;
        b = (b + n - 1) % n;
    }
    Ok(())
}

/// All non-degenerate `(i, j)` pairs, in row-major order.
pub fn tsp_action_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            if !is_degenerate_two_opt(n, i, j) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Rotation to node 0 in the direction with the smaller second node.
pub fn canonical_cycle(tour: &[usize]) -> Vec<usize> {
    let n = tour.len();
    let start = tour.iter().position(|&v| v == 0).unwrap_or(0);
    let fwd = tour[(start + 1) % n];
    let bwd = tour[(start + n - 1) % n];
    if fwd <= bwd {
        (0..n).map(|k| tour[(start + k) % n]).collect()
    } else {
        (0..n).map(|k| tour[(start + n - k) % n]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn reverses_inclusive_segment() {
        let t = [1, 2, 3, 4, 5, 6, 7, 8];
        assert_eq!(two_opt_apply(&t, 3, 6).unwrap(), vec![1, 2, 3, 7, 6, 5, 4, 8]);
        assert_eq!(two_opt_apply(&t, 2, 3).unwrap(), vec![1, 2, 4, 3, 5, 6, 7, 8]);
        assert!(two_opt_apply(&t, 3, 3).is_err());
        assert!(two_opt_apply(&t, 4, 3).is_err());
        assert!(two_opt_apply(&t, 3, 8).is_err());
    }

    #[test]
    fn cyclic_variant_matches_literal_reversal_up_to_rotation() {
        let t: Vec<usize> = (0..9).collect();
        for (i, j) in tsp_action_pairs(9) {
            let lit = two_opt_apply(&t, i, j).unwrap();
            let mut cyc = t.clone();
            two_opt_cyclic(&mut cyc, i, j).unwrap();
            assert_eq!(canonical_cycle(&lit), canonical_cycle(&cyc), "({i},{j})");
            two_opt_cyclic(&mut cyc, i, j).unwrap();
            assert_eq!(cyc, t);
        }
    }

    #[test]
    fn n4_action_space_reaches_exactly_the_distinct_neighbours() {
        // Oracle: every reversal of every position pair, grouped by cycle.
        let t = vec![0, 1, 2, 3];
        let here = canonical_cycle(&t);
        let mut brute = HashSet::new();
        for i in 0..4 {
            for j in i + 1..4 {
                let c = canonical_cycle(&two_opt_apply(&t, i, j).unwrap());
                if c != here {
                    brute.insert(c);
                }
            }
        }
        let listed: HashSet<_> = tsp_action_pairs(4)
            .into_iter()
            .map(|(i, j)| canonical_cycle(&two_opt_apply(&t, i, j).unwrap()))
            .collect();
        assert!(!listed.contains(&here));
        assert_eq!(listed, brute);
        assert_eq!(brute.len(), 2);
    }

    #[test]
    fn action_count_is_quadratic() {
        for n in [4usize, 10, 50, 100] {
            assert_eq!(tsp_action_pairs(n).len(), n * (n - 1) / 2 - 3);
        }
        assert!(tsp_action_pairs(3).is_empty());
    }
}
