//! Outer loops that produce commanded reference muscle lengths.

use serde::{Deserialize, Serialize};

use crate::arm::ArmModel;
use crate::error::{ConfigIssue, Result};
use crate::scalar::{c, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct FeedbackParams<T> {
    /// Gain of the virtual-angle update, in (0, 1].
    pub alpha: T,
    /// Update frequency (Hz).
    pub rate_hz: T,
    /// Target joint angles (rad).
    pub theta_ref: Vec<T>,
}

impl<T: Real> FeedbackParams<T> {
    /// Gain 0.3 at 5 Hz.
    pub fn holding(theta_ref: Vec<T>) -> Self {
        Self {
            alpha: c(0.3),
            rate_hz: c(5.0),
            theta_ref,
        }
    }

    pub fn validate(&self, n_joints: usize, prefix: &str) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        if !(self.alpha > T::zero() && self.alpha <= T::one()) {
            issues.push(ConfigIssue::new(
                format!("{prefix}.alpha"),
                format!("must be in (0, 1] (got {})", self.alpha),
            ));
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > T::zero()) {
            issues.push(ConfigIssue::new(format!("{prefix}.rate_hz"), "must be > 0"));
        }
        if self.theta_ref.len() != n_joints {
            issues.push(ConfigIssue::new(
                format!("{prefix}.theta_ref"),
                format!("expected {n_joints} angles, got {}", self.theta_ref.len()),
            ));
        } else if self.theta_ref.iter().any(|q| !q.is_finite()) {
            issues.push(ConfigIssue::new(format!("{prefix}.theta_ref"), "must be finite"));
        }
        issues
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackState<T> {
    pub theta_virtual: Vec<T>,
}

impl<T: Real> FeedbackState<T> {
    /// Starts at the target posture.
    pub fn new(params: &FeedbackParams<T>) -> Self {
        Self {
            theta_virtual: params.theta_ref.clone(),
        }
    }

    /// `theta_virtual += alpha * (theta_ref - theta_meas)`.
    pub fn feedback_update(&self, theta_meas: &[T], params: &FeedbackParams<T>) -> Self {
        debug_assert_eq!(theta_meas.len(), self.theta_virtual.len());
        Self {
            theta_virtual: self
                .theta_virtual
                .iter()
                .zip(&params.theta_ref)
                .zip(theta_meas)
                .map(|((&v, &r), &q)| v + params.alpha * (r - q))
                .collect(),
        }
    }
}

/// Reference lengths for the current virtual posture.
pub fn refs_from_virtual<T: Real>(theta_virtual: &[T], model: &ArmModel<T>) -> Result<Vec<T>> {
    model.muscle_lengths_from_joints(theta_virtual)
}

/// One-shot open-loop references that hold `theta_target`.
pub fn hold_posture_refs<T: Real>(theta_target: &[T], model: &ArmModel<T>) -> Result<Vec<T>> {
    model.muscle_lengths_from_joints(theta_target)
}
