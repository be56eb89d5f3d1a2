//! Online scalarization weights.
//!
//! The weight vector `w` lives on the probability simplex. After each rollout
//! the observed reward `r` nudges it along the prediction error,
//! `w <- Proj(w + eta * (r - w·F) * F)`, the same step as projected SGD on
//! the squared reward-prediction loss.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{check_simplex, dot, FitnessVector, MetricsError, FITNESS_DIM};

pub const DEFAULT_ETA: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BanditError {
    #[error("simplex projection input contains a non-finite value")]
    NonFiniteInput,
    #[error("learning rate must be positive and finite, got {0}")]
    InvalidLearningRate(f64),
    #[error("pinned weights sum to {0}, which exceeds 1")]
    PinnedMassExceedsOne(f64),
    #[error(transparent)]
    Weights(#[from] MetricsError),
}

/// Euclidean projection onto `{x >= 0, Σx = 1}` (sort-and-threshold).
pub fn project_simplex(v: &[f64]) -> Result<Vec<f64>, BanditError> {
    project_scaled_simplex(v, 1.0)
}

/// Euclidean projection onto `{x >= 0, Σx = mass}` for `mass >= 0`.
pub fn project_scaled_simplex(v: &[f64], mass: f64) -> Result<Vec<f64>, BanditError> {
    if v.iter().any(|x| !x.is_finite()) || !mass.is_finite() {
        return Err(BanditError::NonFiniteInput);
    }
    if v.is_empty() {
        return Ok(Vec::new());
    }
    if mass <= 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &x) in sorted.iter().enumerate() {
        cumulative += x;
        let t = (cumulative - mass) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    Ok(v.iter().map(|x| (x - theta).max(0.0)).collect())
}

/// One projected-gradient step on arbitrary-length weights.
///
/// Components flagged in `pinned` keep their current value; the remaining
/// mass is projected over the free components.
pub fn update_weights(
    w: &[f64],
    fitness: &[f64],
    reward: f64,
    eta: f64,
    pinned: &[bool],
) -> Result<Vec<f64>, BanditError> {
    let error = reward - dot(w, fitness);
    let stepped: Vec<f64> = w.iter().zip(fitness).map(|(wi, fi)| wi + eta * error * fi).collect();
    let is_pinned = |i: usize| pinned.get(i).copied().unwrap_or(false);
    if !(0..w.len()).any(is_pinned) {
        return project_simplex(&stepped);
    }
    let pinned_mass: f64 = (0..w.len()).filter(|&i| is_pinned(i)).map(|i| w[i]).sum();
    if pinned_mass > 1.0 + 1e-12 {
        return Err(BanditError::PinnedMassExceedsOne(pinned_mass));
    }
    let free: Vec<usize> = (0..w.len()).filter(|&i| !is_pinned(i)).collect();
    let projected =
        project_scaled_simplex(&free.iter().map(|&i| stepped[i]).collect::<Vec<_>>(), (1.0 - pinned_mass).max(0.0))?;
    let mut out = w.to_vec();
    for (slot, value) in free.into_iter().zip(projected) {
        out[slot] = value;
    }
    Ok(out)
}

/// Scalarization weights plus learning rate and optional pins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditState {
    pub w: [f64; FITNESS_DIM],
    pub eta: f64,
    pub pinned: [bool; FITNESS_DIM],
}

impl Default for BanditState {
    fn default() -> Self {
        Self { w: [1.0 / FITNESS_DIM as f64; FITNESS_DIM], eta: DEFAULT_ETA, pinned: [false; FITNESS_DIM] }
    }
}

impl BanditState {
    pub fn new(w: [f64; FITNESS_DIM], eta: f64) -> Result<Self, BanditError> {
        let state = Self { w, eta, pinned: [false; FITNESS_DIM] };
        state.validate()?;
        Ok(state)
    }

    pub fn with_pins(mut self, pinned: [bool; FITNESS_DIM]) -> Self {
        self.pinned = pinned;
        self
    }

    pub fn validate(&self) -> Result<(), BanditError> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(BanditError::InvalidLearningRate(self.eta));
        }
        check_simplex(&self.w)?;
        Ok(())
    }

    /// Predicted reward `w · F`.
    pub fn predict(&self, fitness: &FitnessVector) -> f64 {
        dot(&self.w, &fitness.0)
    }

    /// Returns the state after observing reward `r` for fitness `F`.
    pub fn update(&self, fitness: &FitnessVector, reward: f64) -> Result<Self, BanditError> {
        let next = update_weights(&self.w, &fitness.0, reward, self.eta, &self.pinned)?;
        let mut w = [0.0; FITNESS_DIM];
        w.copy_from_slice(&next);
        Ok(Self { w, ..self.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn projection_is_idempotent_on_simplex_points() {
        let p = [0.1, 0.2, 0.3, 0.4];
        assert!(close(&project_simplex(&p).unwrap(), &p, 1e-15));
    }

    #[test]
    fn symmetric_input_projects_to_center() {
        let out = project_simplex(&[0.5, 0.5, 0.5]).unwrap();
        assert!(close(&out, &[1.0 / 3.0; 3], 1e-15));
    }

    #[test]
    fn projection_rejects_non_finite() {
        assert_eq!(project_simplex(&[f64::NAN, 0.0]), Err(BanditError::NonFiniteInput));
    }

    #[test]
    fn two_dim_hand_update() {
        let w = update_weights(&[0.5, 0.5], &[1.0, 0.0], 1.0, 0.05, &[]).unwrap();
        assert!(close(&w, &[0.5125, 0.4875], 1e-12), "{w:?}");
    }

    #[test]
    fn zero_error_leaves_weights() {
        let state = BanditState::default();
        let f = FitnessVector([0.3, 0.9, 0.4, 0.1, 0.7, 1.0]);
        let next = state.update(&f, state.predict(&f)).unwrap();
        assert!(close(&next.w, &state.w, 1e-15));
    }

    #[test]
    fn zero_fitness_leaves_weights() {
        let state = BanditState::default();
        let next = state.update(&FitnessVector([0.0; 6]), 0.9).unwrap();
        assert!(close(&next.w, &state.w, 1e-15));
    }

    #[test]
    fn pinned_components_stay_frozen() {
        let state = BanditState::new([0.3, 0.1, 0.1, 0.2, 0.2, 0.1], 0.5)
            .unwrap()
            .with_pins([true, false, false, false, false, false]);
        let next = state.update(&FitnessVector([1.0; 6]), 0.0).unwrap();
        assert_eq!(next.w[0], 0.3);
        assert!((next.w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(next.w.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn invalid_state_is_rejected() {
        assert!(BanditState::new([0.5; 6], 0.05).is_err());
        assert!(BanditState::new([1.0 / 6.0; 6], 0.0).is_err());
    }
}
