//! Planar N-joint arm driven by M muscles through constant moment arms.
//!
//! Conventions:
//! - muscle path length `l = l0 - G^T theta` (mm), so a positive moment arm
//!   means the muscle shortens as the joint angle grows;
//! - muscle torque `tau = G f / 1000` (N m), the virtual-work dual of the
//!   length map, so tension always pulls toward shortening;
//! - absolute link angle `phi_j = base_angle - sum_{i<=j} theta_i` in the
//!   vertical plane, y up.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigIssue, Error, Result};
use crate::musculotendon::MuscleParams;
use crate::scalar::{c, signum0, Real};

/// Millimetre moment arm to metre lever.
const MM_PER_M: f64 = 1000.0;
/// Largest physics step accepted by [`ArmModel::step_dynamics`] (s).
pub const MAX_DT: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct JointSpec<T> {
    pub name: String,
    /// Rotational inertia about the joint without payload (kg m^2).
    pub inertia: T,
    /// Viscous damping (N m s/rad).
    pub damping: T,
    pub theta_min: T,
    pub theta_max: T,
    /// One-sided limit spring (N m/rad) and damper (N m s/rad).
    pub limit_stiffness: T,
    pub limit_damping: T,
    /// Constant Coulomb friction torques (N m).
    pub mu_static: T,
    pub mu_kinetic: T,
    /// Friction proportional to the wire load crossing the joint,
    /// `sum_j |G_ij| f_j / 1000` (dimensionless).
    #[serde(default)]
    pub load_static: T,
    #[serde(default)]
    pub load_kinetic: T,
    /// Below this speed the joint may stick (rad/s).
    pub stiction_band: T,
    /// Distal link: length (m), mass (kg), centre-of-mass distance (m).
    pub link_length: T,
    pub link_mass: T,
    pub com_distance: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct MuscleSpec<T> {
    pub name: String,
    pub params: MuscleParams<T>,
    /// One moment arm per joint (mm/rad).
    pub moment_arms: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct ArmModel<T> {
    /// Gravitational acceleration (m/s^2); zero disables gravity.
    pub gravity: T,
    /// Absolute angle of the first link at zero joint angles (rad).
    pub base_angle: T,
    pub joints: Vec<JointSpec<T>>,
    pub muscles: Vec<MuscleSpec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmState<T> {
    pub theta: Vec<T>,
    pub omega: Vec<T>,
    /// Mass attached at the distal end of the last link (kg).
    pub payload_mass: T,
    /// Magnitude of the limit torque applied during the last step (N m).
    pub limit_force: Vec<T>,
}

impl<T: Real> ArmState<T> {
    pub fn at_rest(theta: Vec<T>) -> Self {
        let n = theta.len();
        Self {
            theta,
            omega: vec![T::zero(); n],
            payload_mass: T::zero(),
            limit_force: vec![T::zero(); n],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(&self.omega).all(|v| v.is_finite())
            && self.payload_mass.is_finite()
    }
}

/// Everything acting on the joints for one physics step besides gravity,
/// limits, friction and damping, which the model computes itself.
#[derive(Debug, Clone, Copy)]
pub struct Drive<'a, T> {
    pub muscle: &'a [T],
    pub external: &'a [T],
    /// Wire load per joint for the load-proportional friction terms.
    pub wire_load: &'a [T],
    /// Joints held rigidly in place.
    pub locked: &'a [bool],
}

impl<T: Real> ArmModel<T> {
    pub fn n_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn n_muscles(&self) -> usize {
        self.muscles.len()
    }

    /// Moment arm of `muscle` about `joint` (mm/rad).
    pub fn moment_arm(&self, joint: usize, muscle: usize) -> T {
        self.muscles[muscle].moment_arms[joint]
    }

    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        if self.joints.is_empty() {
            issues.push(ConfigIssue::new("joints", "at least one joint required"));
        }
        if self.muscles.is_empty() {
            issues.push(ConfigIssue::new("muscles", "at least one muscle required"));
        }
        if !(self.gravity.is_finite() && self.gravity >= T::zero()) {
            issues.push(ConfigIssue::new("gravity", "must be finite and >= 0"));
        }
        if !self.base_angle.is_finite() {
            issues.push(ConfigIssue::new("base_angle", "must be finite"));
        }
        for (i, j) in self.joints.iter().enumerate() {
            let p = format!("joints[{i}]");
            let mut check = |name: &str, ok: bool, msg: &str| {
                if !ok {
                    issues.push(ConfigIssue::new(format!("{p}.{name}"), msg));
                }
            };
            let fin = |v: T| v.is_finite();
            let nonneg = |v: T| v.is_finite() && v >= T::zero();
            check("inertia", fin(j.inertia) && j.inertia > T::zero(), "must be > 0");
            check("damping", nonneg(j.damping), "must be >= 0");
            check(
                "theta_max",
                fin(j.theta_min) && fin(j.theta_max) && j.theta_min < j.theta_max,
                "theta_min must be < theta_max",
            );
            check("limit_stiffness", nonneg(j.limit_stiffness), "must be >= 0");
            check("limit_damping", nonneg(j.limit_damping), "must be >= 0");
            check("mu_kinetic", nonneg(j.mu_kinetic), "must be >= 0");
            check(
                "mu_static",
                nonneg(j.mu_static) && j.mu_static >= j.mu_kinetic,
                "must be >= mu_kinetic",
            );
            check("load_kinetic", nonneg(j.load_kinetic), "must be >= 0");
            check(
                "load_static",
                nonneg(j.load_static) && j.load_static >= j.load_kinetic,
                "must be >= load_kinetic",
            );
            check("stiction_band", nonneg(j.stiction_band), "must be >= 0");
            check("link_length", nonneg(j.link_length), "must be >= 0");
            check("link_mass", nonneg(j.link_mass), "must be >= 0");
            check("com_distance", nonneg(j.com_distance), "must be >= 0");
        }
        for (m, spec) in self.muscles.iter().enumerate() {
            let p = format!("muscles[{m}]");
            issues.extend(spec.params.validate(&format!("{p}.params")));
            if spec.moment_arms.len() != self.joints.len() {
                issues.push(ConfigIssue::new(
                    format!("{p}.moment_arms"),
                    format!(
                        "expected {} entries (one per joint), got {}",
                        self.joints.len(),
                        spec.moment_arms.len()
                    ),
                ));
            } else if spec.moment_arms.iter().any(|g| !g.is_finite()) {
                issues.push(ConfigIssue::new(format!("{p}.moment_arms"), "must be finite"));
            }
        }
        issues
    }

    /// The joint-to-muscle-length map `h(theta) = l0 - G^T theta`.
    pub fn muscle_lengths_from_joints(&self, theta: &[T]) -> Result<Vec<T>> {
        self.check_joint_vec("theta", theta)?;
        Ok(self
            .muscles
            .iter()
            .map(|m| {
                m.moment_arms
                    .iter()
                    .zip(theta)
                    .fold(m.params.l0, |l, (&g, &q)| l - g * q)
            })
            .collect())
    }

    /// Joint torques from muscle tensions, `tau = G f / 1000`.
    pub fn joint_torques(&self, tension: &[T]) -> Result<Vec<T>> {
        self.check_tensions(tension)?;
        Ok(self.project(tension, |g| g))
    }

    /// Total wire load seen by each joint, `sum_j |G_ij| f_j / 1000`.
    pub fn wire_load(&self, tension: &[T]) -> Result<Vec<T>> {
        self.check_tensions(tension)?;
        Ok(self.project(tension, |g| g.abs()))
    }

    fn project(&self, tension: &[T], arm: impl Fn(T) -> T) -> Vec<T> {
        let scale = c::<T>(MM_PER_M);
        (0..self.n_joints())
            .map(|i| {
                self.muscles
                    .iter()
                    .zip(tension)
                    .fold(T::zero(), |acc, (m, &f)| acc + arm(m.moment_arms[i]) * f)
                    / scale
            })
            .collect()
    }

    fn check_tensions(&self, tension: &[T]) -> Result<()> {
        if tension.len() != self.n_muscles() {
            return Err(Error::InvalidArgument(format!(
                "expected {} tensions, got {}",
                self.n_muscles(),
                tension.len()
            )));
        }
        if let Some((i, f)) = tension
            .iter()
            .enumerate()
            .find(|(_, f)| !(f.is_finite() && **f >= T::zero()))
        {
            return Err(Error::InvalidArgument(format!(
                "tension of muscle {i} must be finite and >= 0 (got {f})"
            )));
        }
        Ok(())
    }

    fn check_joint_vec(&self, what: &str, v: &[T]) -> Result<()> {
        if v.len() != self.n_joints() {
            return Err(Error::InvalidArgument(format!(
                "{what}: expected {} joints, got {}",
                self.n_joints(),
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("{what}: non-finite entry")));
        }
        Ok(())
    }

    fn link_angles(&self, theta: &[T]) -> Vec<T> {
        let mut phi = self.base_angle;
        theta
            .iter()
            .map(|&q| {
                phi = phi - q;
                phi
            })
            .collect()
    }

    /// Gravity torque on each joint, including the payload at the tip.
    pub fn gravity_torques(&self, theta: &[T], payload: T) -> Vec<T> {
        let n = self.n_joints();
        if self.gravity == T::zero() {
            return vec![T::zero(); n];
        }
        let phi = self.link_angles(theta);
        // weighted lever of link k: own mass at its COM plus everything
        // distal at its far end
        let mut distal = payload;
        let mut weights = vec![T::zero(); n];
        for k in (0..n).rev() {
            let j = &self.joints[k];
            weights[k] = j.link_mass * j.com_distance + j.link_length * distal;
            distal = distal + j.link_mass;
        }
        let mut tau = vec![T::zero(); n];
        let mut acc = T::zero();
        for k in (0..n).rev() {
            acc = acc + phi[k].cos() * weights[k];
            tau[k] = self.gravity * acc;
        }
        tau
    }

    /// Joint inertia plus the payload's point-mass contribution.
    pub fn effective_inertia(&self, theta: &[T], payload: T) -> Vec<T> {
        let phi = self.link_angles(theta);
        let n = self.n_joints();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let (mut x, mut y) = (T::zero(), T::zero());
            for (j, &a) in self.joints[i..].iter().zip(&phi[i..]) {
                x = x + j.link_length * a.cos();
                y = y + j.link_length * a.sin();
            }
            out.push(self.joints[i].inertia + payload * (x * x + y * y));
        }
        out
    }

    /// Velocity change of `joint` when a mass falling from `height` is
    /// caught at `distance` along its link with no rebound. Momentum about
    /// the joint is conserved; the mass adds `mass * distance^2` of inertia.
    pub fn catch_velocity(&self, state: &ArmState<T>, joint: usize, mass: T, height: T, distance: T) -> Result<T> {
        if joint >= self.n_joints() {
            return Err(Error::InvalidArgument(format!("joint index {joint} out of range")));
        }
        let v = (c::<T>(2.0) * self.gravity * height).sqrt();
        let phi = self.link_angles(&state.theta)[joint];
        let inertia = self.effective_inertia(&state.theta, state.payload_mass)[joint];
        Ok(mass * v * distance * phi.cos() / (inertia + mass * distance * distance))
    }

    /// Semi-implicit Euler step with muscle and external torques only
    /// (no wire-load friction, no locked joints).
    pub fn step_dynamics(
        &self,
        state: &ArmState<T>,
        tau_muscle: &[T],
        tau_ext: &[T],
        dt: T,
    ) -> Result<ArmState<T>> {
        let n = self.n_joints();
        let zeros = vec![T::zero(); n];
        let unlocked = vec![false; n];
        self.step(
            state,
            &Drive {
                muscle: tau_muscle,
                external: tau_ext,
                wire_load: &zeros,
                locked: &unlocked,
            },
            dt,
        )
    }

    /// Semi-implicit Euler step.
    ///
    /// Per joint: a one-sided spring-damper beyond the limits, implicit
    /// viscous damping, and Coulomb friction with stiction. A joint inside
    /// the stiction band whose non-friction torque does not exceed the
    /// static friction is held at rest; a moving joint that friction would
    /// carry through zero velocity is stopped instead of reversed.
    pub fn step(&self, state: &ArmState<T>, drive: &Drive<'_, T>, dt: T) -> Result<ArmState<T>> {
        if !(dt > T::zero() && dt <= c(MAX_DT)) {
            return Err(Error::InvalidArgument(format!(
                "dt must be in (0, {MAX_DT}] s (got {dt})"
            )));
        }
        let n = self.n_joints();
        for (what, v) in [
            ("theta", &state.theta[..]),
            ("omega", &state.omega[..]),
            ("tau_muscle", drive.muscle),
            ("tau_ext", drive.external),
            ("wire_load", drive.wire_load),
        ] {
            if v.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "{what}: expected {n} joints, got {}",
                    v.len()
                )));
            }
        }
        if drive.locked.len() != n {
            return Err(Error::InvalidArgument(format!(
                "locked: expected {n} joints, got {}",
                drive.locked.len()
            )));
        }
        if let Some(joint) = (0..n).find(|&i| !(state.theta[i].is_finite() && state.omega[i].is_finite())) {
            return Err(Error::NonFinite { joint });
        }

        let gravity = self.gravity_torques(&state.theta, state.payload_mass);
        let inertia = self.effective_inertia(&state.theta, state.payload_mass);
        let mut next = state.clone();

        for i in 0..n {
            let j = &self.joints[i];
            let (q, w) = (state.theta[i], state.omega[i]);

            let mut tau_limit = T::zero();
            if q > j.theta_max {
                tau_limit = (-j.limit_stiffness * (q - j.theta_max) - j.limit_damping * w).min(T::zero());
            } else if q < j.theta_min {
                tau_limit = (j.limit_stiffness * (j.theta_min - q) - j.limit_damping * w).max(T::zero());
            }
            next.limit_force[i] = tau_limit.abs();

            if drive.locked[i] {
                next.omega[i] = T::zero();
                continue;
            }

            let tau = drive.muscle[i] + drive.external[i] + gravity[i] + tau_limit;
            let load = drive.wire_load[i];
            let mu_s = j.mu_static + j.load_static * load;
            let mu_k = j.mu_kinetic + j.load_kinetic * load;
            let inv = dt / inertia[i];
            let implicit = T::one() + j.damping * inv;

            let w_next = if w.abs() < j.stiction_band && tau.abs() <= mu_s {
                T::zero()
            } else {
                let dir = if w.abs() >= j.stiction_band || w != T::zero() && tau == T::zero() {
                    signum0(w)
                } else {
                    signum0(tau)
                };
                let trial = (w + inv * (tau - mu_k * dir)) / implicit;
                if dir != T::zero() && trial * dir < T::zero() && tau.abs() <= mu_s {
                    T::zero()
                } else {
                    trial
                }
            };
            next.omega[i] = w_next;
            next.theta[i] = q + dt * w_next;
        }

        if let Some(joint) = (0..n).find(|&i| !(next.theta[i].is_finite() && next.omega[i].is_finite())) {
            return Err(Error::NonFinite { joint });
        }
        Ok(next)
    }

    /// Instantaneous velocity change on one joint.
    pub fn apply_impulse(&self, state: &ArmState<T>, joint: usize, delta_omega: T) -> Result<ArmState<T>> {
        if joint >= self.n_joints() {
            return Err(Error::InvalidArgument(format!(
                "joint index {joint} out of range (arm has {} joints)",
                self.n_joints()
            )));
        }
        let mut next = state.clone();
        next.omega[joint] = next.omega[joint] + delta_omega;
        Ok(next)
    }

    pub fn kinetic_energy(&self, state: &ArmState<T>) -> T {
        let inertia = self.effective_inertia(&state.theta, state.payload_mass);
        state
            .omega
            .iter()
            .zip(&inertia)
            .fold(T::zero(), |e, (&w, &i)| e + c::<T>(0.5) * i * w * w)
    }
}
