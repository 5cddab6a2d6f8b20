//! Single muscle unit: a motor-wound wire in series with an exponential
//! elastic element.
//!
//! The elastic element obeys `f = exp(k * dn)` where `dn` is the stretch of
//! the element in millimetres. Geometric path length comes from the arm
//! kinematics; the motor winds wire so that `dn = geo_length - l_motor`.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigIssue, Error, Result};
use crate::scalar::{c, Real};

/// Tensions below this are flagged as slack in telemetry (N).
pub const SLACK_TENSION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct MuscleParams<T> {
    /// Elastic exponent (1/mm).
    pub k: T,
    /// Path length at zero joint angle (mm).
    pub l0: T,
    /// Tension ceiling (N).
    pub f_max: T,
    /// Maximum motor wire speed (mm/s).
    pub motor_vmax: T,
    /// Proportional servo gain (1/s).
    pub servo_gain: T,
    /// Tension the stiffness servo holds when the joint sits at the
    /// commanded length (N). The servo winds `ln(preload)/k` mm of extra
    /// wire so that antagonists co-contract. `1.0` disables the bias.
    #[serde(default = "one")]
    pub preload: T,
}

fn one<T: Real>() -> T {
    T::one()
}

impl<T: Real> MuscleParams<T> {
    pub fn validate(&self, prefix: &str) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let mut positive = |name: &str, v: T| {
            if !(v.is_finite() && v > T::zero()) {
                issues.push(ConfigIssue::new(
                    format!("{prefix}.{name}"),
                    format!("must be finite and > 0 (got {v})"),
                ));
            }
        };
        positive("k", self.k);
        positive("l0", self.l0);
        positive("f_max", self.f_max);
        positive("motor_vmax", self.motor_vmax);
        positive("servo_gain", self.servo_gain);
        positive("preload", self.preload);
        if self.preload.is_finite() && self.f_max.is_finite() && self.preload > self.f_max {
            issues.push(ConfigIssue::new(
                format!("{prefix}.preload"),
                "must not exceed f_max",
            ));
        }
        issues
    }

    /// Elastic stretch held by the stiffness servo at the commanded length.
    pub fn preload_elongation(&self) -> T {
        self.preload.ln() / self.k
    }
}

/// Exponential constitutive law `exp(k * dn)`, clamped to `[0, f_max]`.
pub fn tension_from_elongation<T: Real>(dn: T, k: T, f_max: T) -> Result<T> {
    if !dn.is_finite() || !k.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "elongation and k must be finite (dn = {dn}, k = {k})"
        )));
    }
    if k <= T::zero() {
        return Err(Error::InvalidArgument(format!("k must be > 0 (got {k})")));
    }
    Ok((k * dn).exp().min(f_max).max(T::zero()))
}

/// Inverse of the constitutive law: `ln(f) / k`.
pub fn elongation_from_tension<T: Real>(f: T, k: T) -> Result<T> {
    if !f.is_finite() || f <= T::zero() {
        return Err(Error::Domain(format!(
            "tension must be finite and > 0 to have an elongation (got {f})"
        )));
    }
    if !(k.is_finite() && k > T::zero()) {
        return Err(Error::InvalidArgument(format!("k must be > 0 (got {k})")));
    }
    Ok(f.ln() / k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuscleUnit<T> {
    pub params: MuscleParams<T>,
    /// Wire length on the motor side; this is the measured muscle length.
    pub l_motor: T,
    /// Last commanded muscle length.
    pub l_ref: T,
    /// Stretch of the elastic element.
    pub elongation: T,
    pub tension: T,
    /// Tension latched at the previous control tick.
    pub f_prev: T,
    /// Set when the constitutive law hit `f_max`.
    pub saturated: bool,
}

impl<T: Real> MuscleUnit<T> {
    /// A unit resting at `geo_length` with the motor already at the
    /// position the servo would hold for `l_ref`.
    pub fn at_rest(params: MuscleParams<T>, l_ref: T, geo_length: T) -> Self {
        let unit = Self {
            params,
            l_motor: l_ref - params.preload_elongation(),
            l_ref,
            elongation: T::zero(),
            tension: T::zero(),
            f_prev: T::zero(),
            saturated: false,
        };
        let mut unit = unit.update_tension(geo_length);
        unit.f_prev = unit.tension;
        unit
    }

    /// One proportional servo step toward `effective_ref` with the rate
    /// clamped to `motor_vmax`.
    pub fn step_motor(&self, effective_ref: T, dt: T) -> Self {
        debug_assert!(dt > T::zero());
        let p = &self.params;
        let target = effective_ref - p.preload_elongation();
        let rate = (p.servo_gain * (target - self.l_motor))
            .min(p.motor_vmax)
            .max(-p.motor_vmax);
        Self {
            l_motor: self.l_motor + rate * dt,
            l_ref: effective_ref,
            ..*self
        }
    }

    /// Recomputes stretch and tension for the current geometric path length.
    pub fn update_tension(&self, geo_length: T) -> Self {
        debug_assert!(geo_length > T::zero());
        let p = &self.params;
        let elongation = geo_length - self.l_motor;
        let raw = (p.k * elongation).exp();
        Self {
            elongation,
            tension: raw.min(p.f_max),
            saturated: raw >= p.f_max,
            ..*self
        }
    }

    /// Rotates the tick-latched tension and returns `f_now - f_prev`.
    pub fn latch_tick(&mut self) -> T {
        let df = self.tension - self.f_prev;
        self.f_prev = self.tension;
        df
    }

    pub fn is_slack(&self) -> bool {
        self.tension < c(SLACK_TENSION)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k: f64) -> MuscleParams<f64> {
        MuscleParams {
            k,
            l0: 100.0,
            f_max: 400.0,
            motor_vmax: 200.0,
            servo_gain: 20.0,
            preload: 1.0,
        }
    }

    fn unit(l_motor: f64) -> MuscleUnit<f64> {
        MuscleUnit {
            params: params(0.5),
            l_motor,
            l_ref: l_motor,
            elongation: 0.0,
            tension: 1.0,
            f_prev: 1.0,
            saturated: false,
        }
    }

    #[test]
    fn tension_examples() {
        assert_eq!(tension_from_elongation(0.0, 0.5, 400.0).unwrap(), 1.0);
        let e = tension_from_elongation(2.0, 0.5, 400.0).unwrap();
        assert!((e - std::f64::consts::E).abs() < 1e-12);
        let slack = tension_from_elongation(-10.0, 0.5, 400.0).unwrap();
        assert!((slack - (-5.0f64).exp()).abs() < 1e-15);
        assert!((slack - 0.00674).abs() < 1e-5);
    }

    #[test]
    fn tension_clamps_at_ceiling() {
        assert_eq!(tension_from_elongation(100.0, 0.5, 400.0).unwrap(), 400.0);
    }

    #[test]
    fn tension_rejects_non_finite() {
        assert!(matches!(
            tension_from_elongation(f64::NAN, 0.5, 400.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(tension_from_elongation(f64::INFINITY, 0.5, 400.0).is_err());
    }

    #[test]
    fn elongation_examples() {
        assert_eq!(elongation_from_tension(1.0, 0.5).unwrap(), 0.0);
        let two = elongation_from_tension(std::f64::consts::E, 0.5).unwrap();
        assert!((two - 2.0).abs() < 1e-12);
        let n = elongation_from_tension(15.0, 0.3).unwrap();
        assert!((n - 15f64.ln() / 0.3).abs() < 1e-12);
        assert!((n - 9.026).abs() < 1e-3);
    }

    #[test]
    fn slack_wire_has_no_elongation() {
        assert!(matches!(elongation_from_tension(0.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(elongation_from_tension(-3.0, 0.5), Err(Error::Domain(_))));
    }

    /// One explicit Euler step of `v = clamp(gain * err, +-vmax)`, written
    /// out by hand.
    fn euler_oracle(l: f64, target: f64, gain: f64, vmax: f64, dt: f64) -> f64 {
        let mut v = gain * (target - l);
        if v > vmax {
            v = vmax;
        }
        if v < -vmax {
            v = -vmax;
        }
        l + v * dt
    }

    #[test]
    fn motor_examples() {
        let u = unit(100.0);
        assert_eq!(u.step_motor(100.0, 0.001).l_motor, 100.0);

        let clamped = u.step_motor(90.0, 0.001).l_motor;
        let expect = euler_oracle(100.0, 90.0, 20.0, 200.0, 0.001);
        assert!((expect - 99.8).abs() < 1e-12);
        assert!((clamped - expect).abs() < 1e-12);

        let free = u.step_motor(99.9, 0.001).l_motor;
        let expect = euler_oracle(100.0, 99.9, 20.0, 200.0, 0.001);
        assert!((expect - 99.998).abs() < 1e-12);
        assert!((free - expect).abs() < 1e-12);
    }

    #[test]
    fn motor_preload_shifts_servo_target() {
        let mut u = unit(100.0);
        u.params.preload = std::f64::consts::E;
        // ln(e)/0.5 = 2 mm of extra winding
        let mut x = u;
        for _ in 0..20_000 {
            x = x.step_motor(100.0, 0.001);
        }
        assert!((x.l_motor - 98.0).abs() < 1e-9);
        let x = x.update_tension(100.0);
        assert!((x.tension - std::f64::consts::E).abs() < 1e-8);
    }

    #[test]
    fn update_tension_examples() {
        let u = unit(100.0).update_tension(102.0);
        assert_eq!(u.elongation, 2.0);
        assert!((u.tension - 1f64.exp()).abs() < 1e-12);

        let u = unit(100.0).update_tension(100.0);
        assert_eq!(u.elongation, 0.0);
        assert_eq!(u.tension, 1.0);

        let u = unit(100.0).update_tension(95.0);
        assert!((u.tension - (-2.5f64).exp()).abs() < 1e-15);
        assert!((u.tension - 0.082).abs() < 1e-3);
        assert!(!u.is_slack());
    }

    #[test]
    fn saturation_flagged() {
        let u = unit(100.0).update_tension(120.0);
        assert!(u.saturated);
        assert_eq!(u.tension, 400.0);
        assert!(!unit(100.0).update_tension(101.0).saturated);
    }

    #[test]
    fn latch_rotates_previous_tension() {
        let mut u = unit(100.0).update_tension(102.0);
        let df = u.latch_tick();
        assert!((df - (1f64.exp() - 1.0)).abs() < 1e-12);
        assert_eq!(u.f_prev, u.tension);
        assert_eq!(u.latch_tick(), 0.0);
    }

    #[test]
    fn works_in_single_precision() {
        let f = tension_from_elongation(2.0f32, 0.5, 400.0).unwrap();
        assert!((f - std::f32::consts::E).abs() < 1e-6);
        let n = elongation_from_tension(f, 0.5f32).unwrap();
        assert!((n - 2.0).abs() < 1e-5);
    }

    #[test]
    fn invalid_params_reported_by_field() {
        let mut p = params(0.5);
        p.k = 0.0;
        p.motor_vmax = f64::NAN;
        let issues = p.validate("muscles[0].params");
        let fields: Vec<_> = issues.iter().map(|i| i.field.as_str()).collect();
        assert_eq!(fields, ["muscles[0].params.k", "muscles[0].params.motor_vmax"]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trip(f in 1e-6f64..=400.0, k in 0.05f64..2.0) {
                let dn = elongation_from_tension(f, k).unwrap();
                let back = tension_from_elongation(dn, k, 400.0).unwrap();
                prop_assert!(((back - f) / f).abs() <= 1e-9);
            }

            #[test]
            fn monotone(a in -50.0f64..10.0, d in 1e-6f64..5.0, k in 0.05f64..1.0) {
                let lo = tension_from_elongation(a, k, f64::MAX).unwrap();
                let hi = tension_from_elongation(a + d, k, f64::MAX).unwrap();
                prop_assert!(lo < hi);
            }

            #[test]
            fn motor_speed_bounded(l in 0.0f64..300.0, r in 0.0f64..300.0,
                                   gain in 0.1f64..200.0, vmax in 1.0f64..500.0,
                                   dt in 1e-4f64..5e-3) {
                let mut u = unit(l);
                u.params.servo_gain = gain;
                u.params.motor_vmax = vmax;
                let next = u.step_motor(r, dt);
                prop_assert!((next.l_motor - l).abs() <= vmax * dt + 1e-12 * l.max(1.0));
            }
        }
    }
}
