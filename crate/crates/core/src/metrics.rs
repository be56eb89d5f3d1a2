//! Raw metrics, normalization and the six-component fitness vector, plus the
//! text and build metrics the operators rely on.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FITNESS_DIM: usize = 6;

/// Component names in fitness order.
pub const COMPONENT_NAMES: [&str; FITNESS_DIM] = ["U", "P", "S", "B", "D", "C"];

/// Fitness slot of the (inverted) latency component.
pub const LATENCY_COMPONENT: usize = 1;
pub const SECURITY_COMPONENT: usize = 2;
pub const FRESHNESS_COMPONENT: usize = 4;

pub const DEFAULT_FRESHNESS_BLEND: f64 = 0.5;

/// Tolerance used when checking that a weight vector lies on the simplex.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("reproducibility needs at least one build hash")]
    EmptyInput,
    #[error("weights are not on the probability simplex (sum {sum}, min {min})")]
    WeightsOffSimplex { sum: f64, min: f64 },
    #[error("invalid normalization bounds: p_min {p_min} must be below p_max {p_max}")]
    InvalidBounds { p_min: f64, p_max: f64 },
    #[error("raw metric `{field}` = {value} is out of range")]
    InvalidRawMetric { field: &'static str, value: f64 },
}

/// Unnormalized measurements of one candidate graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawMetrics {
    /// Task success rate.
    pub u: f64,
    /// p95 latency in milliseconds.
    pub p: f64,
    /// Static security score.
    pub s: f64,
    /// Business KPI delta.
    pub b: f64,
    /// Doc freshness.
    pub d: f64,
    /// Build reproducibility.
    pub c: f64,
}

impl RawMetrics {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.p.is_finite() && self.p > 0.0) {
            return Err(MetricsError::InvalidRawMetric { field: "P", value: self.p });
        }
        for (field, value) in [("U", self.u), ("S", self.s), ("B", self.b), ("D", self.d), ("C", self.c)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(MetricsError::InvalidRawMetric { field, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationBounds {
    pub p_min: f64,
    pub p_max: f64,
}

impl Default for NormalizationBounds {
    fn default() -> Self {
        Self { p_min: 100.0, p_max: 500.0 }
    }
}

impl NormalizationBounds {
    pub fn new(p_min: f64, p_max: f64) -> Result<Self, MetricsError> {
        let b = Self { p_min, p_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.p_min.is_finite() && self.p_max.is_finite() && self.p_min < self.p_max {
            Ok(())
        } else {
            Err(MetricsError::InvalidBounds { p_min: self.p_min, p_max: self.p_max })
        }
    }
}

/// Normalized fitness `[U, 1 - P_norm, S, B, D, C]`, every component in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FitnessVector(pub [f64; FITNESS_DIM]);

impl FitnessVector {
    pub fn components(&self) -> &[f64; FITNESS_DIM] {
        &self.0
    }

    /// Pareto dominance for maximization: no worse anywhere, better somewhere.
    pub fn dominates(&self, other: &Self) -> bool {
        dominates(&self.0, &other.0)
    }
}

/// Dominance on raw slices of equal length (maximization).
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strictly = true;
        }
    }
    strictly
}

pub fn normalize_latency(p: f64, bounds: &NormalizationBounds) -> f64 {
    ((p - bounds.p_min) / (bounds.p_max - bounds.p_min)).clamp(0.0, 1.0)
}

pub fn fitness_vector(raw: &RawMetrics, bounds: &NormalizationBounds) -> FitnessVector {
    FitnessVector([raw.u, 1.0 - normalize_latency(raw.p, bounds), raw.s, raw.b, raw.d, raw.c])
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure between a reference and a candidate token sequence.
pub fn rouge_l<T: PartialEq>(reference: &[T], candidate: &[T]) -> f64 {
    if reference.is_empty() || candidate.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(reference, candidate) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let precision = lcs / candidate.len() as f64;
    let recall = lcs / reference.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Blend of ROUGE-L and clipped embedding cosine.
pub fn freshness<T: PartialEq>(
    reference_tokens: &[T],
    candidate_tokens: &[T],
    reference_embedding: &[f64],
    candidate_embedding: &[f64],
    blend: f64,
) -> f64 {
    let r = rouge_l(reference_tokens, candidate_tokens);
    let c = cosine(reference_embedding, candidate_embedding).max(0.0);
    (blend * r + (1.0 - blend) * c).clamp(0.0, 1.0)
}

/// Fraction of rebuild hashes equal to the modal hash.
pub fn reproducibility<H: AsRef<[u8]>>(hashes: &[H]) -> Result<f64, MetricsError> {
    if hashes.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut counts: HashMap<&[u8], usize> = HashMap::new();
    for h in hashes {
        *counts.entry(h.as_ref()).or_default() += 1;
    }
    let modal = counts.values().copied().max().unwrap_or(0);
    Ok(modal as f64 / hashes.len() as f64)
}

/// The modal hash itself, ties going to the lexicographically smallest.
pub fn modal_hash<H: AsRef<[u8]>>(hashes: &[H]) -> Option<&[u8]> {
    let mut counts: HashMap<&[u8], usize> = HashMap::new();
    for h in hashes {
        *counts.entry(h.as_ref()).or_default() += 1;
    }
    counts.into_iter().max_by(|(ha, ca), (hb, cb)| ca.cmp(cb).then_with(|| hb.cmp(ha))).map(|(h, _)| h)
}

pub fn check_simplex(w: &[f64]) -> Result<(), MetricsError> {
    let sum: f64 = w.iter().sum();
    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
    if w.iter().all(|x| x.is_finite()) && min >= -SIMPLEX_TOLERANCE && (sum - 1.0).abs() <= SIMPLEX_TOLERANCE {
        Ok(())
    } else {
        Err(MetricsError::WeightsOffSimplex { sum, min })
    }
}

/// Scalarized utility `w · F` for simplex weights.
pub fn aggregate_utility(fitness: &FitnessVector, w: &[f64; FITNESS_DIM]) -> Result<f64, MetricsError> {
    check_simplex(w)?;
    Ok(dot(w, &fitness.0))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_t gamma^t · u_t`.
pub fn discounted_return(utilities: &[f64], gamma: f64) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for u in utilities {
        total += discount * u;
        discount *= gamma;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn latency_normalization() {
        let b = NormalizationBounds::default();
        assert_eq!(normalize_latency(100.0, &b), 0.0);
        assert_eq!(normalize_latency(250.0, &b), 0.375);
        assert_eq!(normalize_latency(900.0, &b), 1.0);
        assert_eq!(normalize_latency(10.0, &b), 0.0);
        assert!(NormalizationBounds::new(5.0, 5.0).is_err());
    }

    #[test]
    fn fitness_examples() {
        let b = NormalizationBounds::default();
        let best = RawMetrics { u: 1.0, p: 100.0, s: 1.0, b: 1.0, d: 1.0, c: 1.0 };
        assert_eq!(fitness_vector(&best, &b).0, [1.0; 6]);
        let mid = RawMetrics { u: 0.5, p: 250.0, s: 0.7, b: 0.2, d: 0.8, c: 1.0 };
        assert_eq!(fitness_vector(&mid, &b).0, [0.5, 0.625, 0.7, 0.2, 0.8, 1.0]);
        let worst = RawMetrics { p: 500.0, ..mid };
        assert_eq!(fitness_vector(&worst, &b).0[LATENCY_COMPONENT], 0.0);
    }

    #[test]
    fn raw_metric_validation() {
        let ok = RawMetrics { u: 0.5, p: 250.0, s: 0.7, b: 0.2, d: 0.8, c: 1.0 };
        assert!(ok.validate().is_ok());
        assert!(RawMetrics { p: 0.0, ..ok }.validate().is_err());
        assert!(RawMetrics { s: 1.2, ..ok }.validate().is_err());
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l(&toks("a b c"), &toks("a b c")), 1.0);
        assert!((rouge_l(&toks("the cat sat"), &toks("the cat")) - 0.8).abs() < 1e-12);
        assert_eq!(rouge_l(&toks("a b"), &toks("c d")), 0.0);
        assert_eq!(rouge_l::<&str>(&[], &toks("a")), 0.0);
        assert_eq!(rouge_l::<&str>(&toks("a"), &[]), 0.0);
    }

    #[test]
    fn freshness_examples() {
        let t = toks("x y z");
        let e = [0.3, -0.2, 0.9];
        assert!((freshness(&t, &t, &e, &e, 0.5) - 1.0).abs() < 1e-12);
        assert_eq!(freshness(&t, &[], &[0.0; 3], &[0.0; 3], 0.5), 0.0);
        // rouge 0.8, cosine 0.6 -> 0.7
        let reference = toks("the cat sat");
        let cand = toks("the cat");
        let ea = [1.0, 0.0];
        let eb = [0.6, 0.8];
        assert!((freshness(&reference, &cand, &ea, &eb, 0.5) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn reproducibility_examples() {
        assert_eq!(reproducibility(&["h", "h", "h", "h"]).unwrap(), 1.0);
        assert_eq!(reproducibility(&["h", "h", "h", "g"]).unwrap(), 0.75);
        assert_eq!(reproducibility(&["g", "h", "h", "h"]).unwrap(), 0.75);
        assert_eq!(reproducibility::<&str>(&[]), Err(MetricsError::EmptyInput));
        assert_eq!(modal_hash(&["b", "a", "b", "a"]), Some(&b"a"[..]));
    }

    #[test]
    fn utility_examples() {
        let ones = FitnessVector([1.0; 6]);
        assert!((aggregate_utility(&ones, &[1.0 / 6.0; 6]).unwrap() - 1.0).abs() < 1e-12);
        let f = FitnessVector([0.5, 0.8, 0.1, 0.2, 0.3, 0.4]);
        assert_eq!(aggregate_utility(&f, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), 0.5);
        let g = FitnessVector([0.4, 0.8, 0.0, 0.0, 0.0, 0.0]);
        assert!((aggregate_utility(&g, &[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]).unwrap() - 0.6).abs() < 1e-12);
        assert!(matches!(
            aggregate_utility(&f, &[0.5, 0.6, 0.0, 0.0, 0.0, 0.0]),
            Err(MetricsError::WeightsOffSimplex { .. })
        ));
    }

    #[test]
    fn discounted_return_examples() {
        assert!((discounted_return(&[1.0, 1.0], 0.9) - 1.9).abs() < 1e-12);
        assert_eq!(discounted_return(&[0.37], 0.2), 0.37);
        assert_eq!(discounted_return(&[1.0, 1.0, 1.0], 0.5), 1.75);
    }

    #[test]
    fn dominance() {
        assert!(dominates(&[1.0, 1.0], &[1.0, 0.0]));
        assert!(!dominates(&[1.0, 1.0], &[1.0, 1.0]));
        assert!(!dominates(&[1.0, 0.0], &[0.0, 1.0]));
    }
}
