//! Fast non-dominated sorting (maximization).
//!
//! `O(M·N²)` for `N` vectors of `M` objectives: one pass records who
//! dominates whom, then fronts are peeled by decrementing domination counts.

use crate::metrics::dominates;

use super::SelectionError;

/// Pareto rank of every input vector, 0 being the non-dominated front.
/// Output order matches input order.
pub fn pareto_ranks<T: AsRef<[f64]>>(points: &[T]) -> Result<Vec<usize>, SelectionError> {
    let Some(first) = points.first() else {
        return Ok(Vec::new());
    };
    let dim = first.as_ref().len();
    if let Some(bad) = points.iter().position(|p| p.as_ref().len() != dim) {
        return Err(SelectionError::DimensionMismatch { index: bad, expected: dim, found: points[bad].as_ref().len() });
    }

    let n = points.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for p in 0..n {
        for q in (p + 1)..n {
            let (a, b) = (points[p].as_ref(), points[q].as_ref());
            if dominates(a, b) {
                dominated_by_me[p].push(q);
                domination_count[q] += 1;
            } else if dominates(b, a) {
                dominated_by_me[q].push(p);
                domination_count[p] += 1;
            }
        }
    }

    let mut ranks = vec![0usize; n];
    let mut front: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    let mut rank = 0;
    while !front.is_empty() {
        let mut next = Vec::new();
        for &p in &front {
            ranks[p] = rank;
            for &q in &dominated_by_me[p] {
                domination_count[q] -= 1;
                if domination_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        front = next;
        rank += 1;
    }
    Ok(ranks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_dominance() {
        assert_eq!(pareto_ranks(&[[1.0; 6], [0.0; 6]]).unwrap(), vec![0, 1]);
    }

    #[test]
    fn incomparable_pair_shares_front() {
        let a = [1.0, 0.0, 0.5, 0.5, 0.5, 0.5];
        let b = [0.0, 1.0, 0.5, 0.5, 0.5, 0.5];
        assert_eq!(pareto_ranks(&[a, b]).unwrap(), vec![0, 0]);
    }

    #[test]
    fn chain_of_three() {
        let pts = vec![vec![0.1, 0.1], vec![0.9, 0.9], vec![0.5, 0.5]];
        assert_eq!(pareto_ranks(&pts).unwrap(), vec![2, 0, 1]);
    }

    #[test]
    fn equal_vectors_share_rank() {
        assert_eq!(pareto_ranks(&[[0.3, 0.3], [0.3, 0.3]]).unwrap(), vec![0, 0]);
    }

    #[test]
    fn ragged_input_is_rejected() {
        let pts = vec![vec![0.1, 0.1], vec![0.1]];
        assert!(matches!(pareto_ranks(&pts), Err(SelectionError::DimensionMismatch { index: 1, .. })));
    }
}
