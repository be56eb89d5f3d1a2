//! Weight merging of small parameter tensors.
//!
//! `W' = λ·W_a + (1 − λ)·Align(W_b)` with `λ ~ Beta(α, α)`. Alignment
//! permutes the rows of `W_b` to minimize the Frobenius distance to `W_a`,
//! solved exactly as a linear assignment on squared row distances.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use std::collections::BTreeMap;

use crate::graph::{ArtefactGraph, ArtefactNode, AttrValue, NodeType};
use crate::rng::{derive_seed, seeded_rng};
use crate::simenv::Environment;

use super::{MutationOperator, MutationOutcome, OperatorError, OperatorKind};

/// Node attribute holding a serialized tensor.
pub const ATTR_TENSOR: &str = "tensor";

pub const DEFAULT_ALPHA: f64 = 2.0;

/// Dense row-major matrix attached to `compiler` / `policy` nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeTensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MergeTensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, OperatorError> {
        if data.len() != rows * cols {
            return Err(OperatorError::ShapeMismatch { left: (rows, cols), right: (data.len(), 1) });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(OperatorError::NonFiniteTensor);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, OperatorError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(OperatorError::ShapeMismatch { left: (rows.len(), cols), right: (rows.len(), 0) });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// Row `i` of the result is row `perm[i]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &src in perm {
            data.extend_from_slice(self.row(src));
        }
        Self { rows: self.rows, cols: self.cols, data }
    }

    /// Encodes as `"rows cols v0 v1 ..."`; floats use shortest round-trip form.
    pub fn to_attr(&self) -> AttrValue {
        let mut s = format!("{} {}", self.rows, self.cols);
        for v in &self.data {
            s.push(' ');
            s.push_str(&v.to_string());
        }
        AttrValue::Text(s)
    }

    pub fn from_attr(value: &AttrValue) -> Option<Self> {
        let mut parts = value.as_str()?.split_whitespace();
        let rows: usize = parts.next()?.parse().ok()?;
        let cols: usize = parts.next()?.parse().ok()?;
        let data: Vec<f64> = parts.map(str::parse).collect::<Result<_, _>>().ok()?;
        Self::new(rows, cols, data).ok()
    }

    pub fn from_node(node: &ArtefactNode) -> Option<Self> {
        node.attr(ATTR_TENSOR).and_then(Self::from_attr)
    }

    fn check_same_shape(&self, other: &Self) -> Result<(), OperatorError> {
        if self.shape() == other.shape() {
            Ok(())
        } else {
            Err(OperatorError::ShapeMismatch { left: self.shape(), right: other.shape() })
        }
    }
}

/// Minimum-cost perfect assignment for a square cost matrix
/// (Hungarian method with potentials, `O(n³)`). Returns `assign[row] = col`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[r0 - 1][col - 1] - u[r0] - v[col];
                if reduced < minv[col] {
                    minv[col] = reduced;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for col in 1..=n {
        if owner[col] > 0 {
            assign[owner[col] - 1] = col - 1;
        }
    }
    assign
}

/// Row permutation of `w_b` closest to `w_a`, with the permuted tensor.
///
/// Keeps the identity whenever no permutation is strictly closer.
pub fn align(w_b: &MergeTensor, w_a: &MergeTensor) -> Result<(MergeTensor, Vec<usize>), OperatorError> {
    w_a.check_same_shape(w_b)?;
    let n = w_a.rows;
    let sq = |i: usize, j: usize| -> f64 { w_a.row(i).iter().zip(w_b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum() };
    let cost: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| sq(i, j)).collect()).collect();
    let identity: Vec<usize> = (0..n).collect();
    let best = min_cost_assignment(&cost);
    let total = |p: &[usize]| -> f64 { p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum() };
    let perm = if total(&best) < total(&identity) { best } else { identity };
    Ok((w_b.permute_rows(&perm), perm))
}

/// Sample from `Beta(alpha, alpha)` as `X / (X + Y)` with `X, Y ~ Gamma(alpha, 1)`.
pub fn sample_beta<R: Rng>(alpha: f64, rng: &mut R) -> Result<f64, OperatorError> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|_| OperatorError::InvalidAlpha(alpha))?;
    let x: f64 = gamma.sample(rng);
    let y: f64 = gamma.sample(rng);
    let total = x + y;
    Ok(if total > 0.0 { x / total } else { 0.5 })
}

/// Interpolates `w_a` with the aligned `w_b` at a fixed `lambda`.
pub fn merge_with_lambda(w_a: &MergeTensor, w_b: &MergeTensor, lambda: f64) -> Result<MergeTensor, OperatorError> {
    let (aligned, _) = align(w_b, w_a)?;
    let data = w_a.data.iter().zip(&aligned.data).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
    Ok(MergeTensor { rows: w_a.rows, cols: w_a.cols, data })
}

/// Draws `λ ~ Beta(alpha, alpha)` from `seed` and merges. Returns the merged
/// tensor and the λ that was drawn.
pub fn weight_merge(
    w_a: &MergeTensor,
    w_b: &MergeTensor,
    alpha: f64,
    seed: u64,
) -> Result<(MergeTensor, f64), OperatorError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(OperatorError::InvalidAlpha(alpha));
    }
    w_a.check_same_shape(w_b)?;
    let lambda = sample_beta(alpha, &mut seeded_rng(seed))?;
    Ok((merge_with_lambda(w_a, w_b, lambda)?, lambda))
}

/// Merges the tensor of one operator-model node with another's.
///
/// The critic keeps the merge only if it does not lower the tensor quality
/// of the receiving node.
#[derive(Debug, Clone)]
pub struct WeightMerge {
    pub alpha: f64,
}

impl MutationOperator for WeightMerge {
    fn kind(&self) -> OperatorKind {
        OperatorKind::WeightMerge
    }

    fn apply(&self, graph: &ArtefactGraph, seed: u64, env: &dyn Environment) -> Result<MutationOutcome, OperatorError> {
        let tensors: Vec<(&ArtefactNode, MergeTensor)> = graph
            .nodes()
            .filter(|n| matches!(n.node_type, NodeType::Compiler | NodeType::Policy))
            .filter_map(|n| MergeTensor::from_node(n).map(|t| (n, t)))
            .collect();
        let receivers: Vec<usize> = (0..tensors.len()).filter(|&i| !tensors[i].0.locked).collect();
        let mut rng = seeded_rng(derive_seed(seed, &[0]));
        let mut pairs = Vec::new();
        for &a in &receivers {
            for b in 0..tensors.len() {
                if b != a && tensors[b].1.shape() == tensors[a].1.shape() {
                    pairs.push((a, b));
                }
            }
        }
        if pairs.is_empty() {
            return Err(OperatorError::NoTensorPair);
        }
        let (ia, ib) = pairs[rng.random_range(0..pairs.len())];
        let (node_a, w_a) = &tensors[ia];
        let (node_b, w_b) = &tensors[ib];
        let (merged, lambda) = weight_merge(w_a, w_b, self.alpha, derive_seed(seed, &[1]))?;

        let before = env.tensor_quality(w_a);
        let after = env.tensor_quality(&merged);
        let accepted = after >= before;
        let params = BTreeMap::from([
            ("lambda".to_string(), lambda),
            ("quality_before".to_string(), before),
            ("quality_after".to_string(), after),
        ]);
        let out = if accepted {
            let mut node = (*node_a).clone();
            node.set_attr(ATTR_TENSOR, merged.to_attr());
            node.set_attr("merged_from", node_b.id.as_str());
            graph.with_node(node)?
        } else {
            graph.clone()
        };
        Ok(MutationOutcome::new(
            OperatorKind::WeightMerge,
            accepted,
            out,
            if accepted { 1.0 } else { 0.0 },
            Some(node_a.id.clone()),
            params,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> MergeTensor {
        MergeTensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn lambda_endpoints() {
        let a = t(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = t(&[&[0.5, 0.5], &[3.0, 3.0]]);
        assert_eq!(merge_with_lambda(&a, &b, 1.0).unwrap(), a);
        assert_eq!(merge_with_lambda(&a, &b, 0.0).unwrap(), b);
    }

    #[test]
    fn half_merge_with_zero_tensor() {
        let a = t(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = MergeTensor::zeros(2, 2);
        assert_eq!(merge_with_lambda(&a, &b, 0.5).unwrap(), t(&[&[0.5, 0.0], &[0.0, 0.5]]));
    }

    #[test]
    fn aligned_input_keeps_identity() {
        let a = t(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let (_, perm) = align(&a, &a).unwrap();
        assert_eq!(perm, vec![0, 1]);
    }

    #[test]
    fn swapped_identity_is_unswapped() {
        let a = t(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = t(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let (aligned, perm) = align(&b, &a).unwrap();
        assert_eq!(perm, vec![1, 0]);
        assert_eq!(aligned, a);
    }

    #[test]
    fn zero_tensor_aligns_to_itself() {
        let a = t(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let z = MergeTensor::zeros(2, 2);
        assert_eq!(align(&z, &a).unwrap().0, z);
    }

    #[test]
    fn shape_mismatch() {
        let a = MergeTensor::zeros(2, 2);
        let b = MergeTensor::zeros(3, 2);
        assert!(matches!(align(&b, &a), Err(OperatorError::ShapeMismatch { .. })));
        assert!(matches!(weight_merge(&a, &b, 2.0, 1), Err(OperatorError::ShapeMismatch { .. })));
    }

    #[test]
    fn attr_round_trip_is_exact() {
        let a = t(&[&[0.1, -1.0 / 3.0], &[1e-300, 12345.678]]);
        assert_eq!(MergeTensor::from_attr(&a.to_attr()).unwrap(), a);
    }

    #[test]
    fn weight_merge_is_seeded() {
        let a = t(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = t(&[&[0.0, 0.0], &[2.0, 2.0]]);
        let (m1, l1) = weight_merge(&a, &b, 2.0, 9).unwrap();
        let (m2, l2) = weight_merge(&a, &b, 2.0, 9).unwrap();
        assert_eq!((m1, l1), (m2, l2));
        assert!((0.0..=1.0).contains(&l1));
        assert!(weight_merge(&a, &b, 0.0, 9).is_err());
    }
}
