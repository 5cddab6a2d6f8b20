//! Evaluation quantities computed from a [`TelemetryLog`].
//!
//! Every function here is a pure function of the log, so a log re-read from
//! CSV gives the same report bit for bit.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::reflex::TIME_EPS;
use crate::scalar::{c, Real};
use crate::scenario::{Probe, Side};
use crate::telemetry::TelemetryLog;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvTime<T> {
    Converged(T),
    NotConverged,
}

impl<T: Real> ConvTime<T> {
    /// Converged time, or `+inf` when the log ends off-target.
    pub fn or_infinity(self) -> T {
        match self {
            Self::Converged(t) => t,
            Self::NotConverged => T::infinity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport<T> {
    pub probe_joint: usize,
    pub drift: Vec<T>,
    pub max_deviation: Option<T>,
    pub conv_time: Option<ConvTime<T>>,
    pub peak_tension: Vec<T>,
    pub peak_tension_overall: T,
    pub steady_tension: T,
    pub limit_contact: T,
    pub limit_contact_per_impact: Vec<T>,
    pub reflex_event_count: usize,
}

fn in_window<T: Real>(t: T, start: T, end: T) -> bool {
    let eps = c::<T>(TIME_EPS);
    t > start + eps && t <= end + eps
}

fn window_mean<T: Real>(log: &TelemetryLog<T>, joint: usize, end: T, width: T) -> Result<T> {
    let (first, last) = match (log.start_time(), log.end_time()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InvalidArgument("empty log".into())),
    };
    let eps = c::<T>(TIME_EPS);
    if end - width < first - eps || end > last + eps {
        return Err(Error::InvalidArgument(format!(
            "window ({}, {end}] lies outside the log [{first}, {last}]",
            end - width
        )));
    }
    let (sum, count) = log
        .theta(joint)
        .filter(|&(t, _)| in_window(t, end - width, end))
        .fold((T::zero(), 0usize), |(s, n), (_, q)| (s + q, n + 1));
    if count == 0 {
        return Err(Error::InvalidArgument(format!("no samples in window ending at {end}")));
    }
    Ok(sum / T::from_usize(count).expect("count fits"))
}

/// Absolute change of the windowed mean angle between the windows ending
/// at `t_before` and at `t_after`.
pub fn drift<T: Real>(log: &TelemetryLog<T>, joint: usize, t_before: T, t_after: T, window: T) -> Result<T> {
    if joint >= log.n_joints {
        return Err(Error::InvalidArgument(format!("joint {joint} out of range")));
    }
    let before = window_mean(log, joint, t_before, window)?;
    let after = window_mean(log, joint, t_after, window)?;
    Ok((after - before).abs())
}

/// Largest `|theta - theta_ref|` at or after `t_from`.
pub fn max_deviation<T: Real>(log: &TelemetryLog<T>, joint: usize, theta_ref: T, t_from: T) -> T {
    log.theta(joint)
        .filter(|&(t, _)| t >= t_from - c(TIME_EPS))
        .fold(T::zero(), |m, (_, q)| m.max((q - theta_ref).abs()))
}

fn on_target<T: Real>(q: T, thre: T, side: Side) -> bool {
    match side {
        Side::Below => q <= thre,
        Side::Above => q >= thre,
    }
}

/// Time from `t_impact` until the angle stays on the target side of
/// `theta_thre` for the rest of the log.
pub fn conv_time<T: Real>(log: &TelemetryLog<T>, joint: usize, t_impact: T, theta_thre: T, side: Side) -> ConvTime<T> {
    let after: Vec<(T, T)> = log.theta(joint).filter(|&(t, _)| t >= t_impact - c(TIME_EPS)).collect();
    match after.iter().rposition(|&(_, q)| !on_target(q, theta_thre, side)) {
        None => ConvTime::Converged(T::zero()),
        Some(k) if k + 1 == after.len() => ConvTime::NotConverged,
        Some(k) => ConvTime::Converged(after[k + 1].0 - t_impact),
    }
}

/// Peak tension over every tick and muscle, and the mean tension of the
/// most loaded muscle over the final `window_final` seconds.
pub fn tension_stats<T: Real>(log: &TelemetryLog<T>, window_final: T) -> (T, T) {
    let peak = log
        .rows
        .iter()
        .flat_map(|r| r.f.iter().copied())
        .fold(T::zero(), T::max);
    let end = log.end_time().unwrap_or_else(T::zero);
    let rows: Vec<_> = log
        .rows
        .iter()
        .filter(|r| in_window(r.t, end - window_final, end))
        .collect();
    if rows.is_empty() {
        return (peak, T::zero());
    }
    let count = T::from_usize(rows.len()).expect("count fits");
    let steady = (0..log.n_muscles)
        .map(|j| rows.iter().fold(T::zero(), |s, r| s + r.f[j]) / count)
        .fold(T::zero(), T::max);
    (peak, steady)
}

pub fn peak_tension_per_muscle<T: Real>(log: &TelemetryLog<T>) -> Vec<T> {
    (0..log.n_muscles)
        .map(|j| log.rows.iter().fold(T::zero(), |m, r| m.max(r.f[j])))
        .collect()
}

/// Largest limit torque on any joint.
pub fn limit_contact<T: Real>(log: &TelemetryLog<T>) -> T {
    log.rows
        .iter()
        .flat_map(|r| r.limit_force.iter().copied())
        .fold(T::zero(), T::max)
}

/// Largest limit torque between each impulse and the next (or log end).
pub fn limit_contact_per_impact<T: Real>(log: &TelemetryLog<T>) -> Vec<T> {
    let starts: Vec<usize> = log
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.impulses > 0)
        .map(|(k, _)| k)
        .collect();
    starts
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let e = starts.get(i + 1).copied().unwrap_or(log.rows.len());
            log.rows[s..e]
                .iter()
                .flat_map(|r| r.limit_force.iter().copied())
                .fold(T::zero(), T::max)
        })
        .collect()
}

/// Full report for a log. Drift compares the window ending at the first
/// disturbance with the window ending at the end of the log; deviation and
/// convergence are measured from the first disturbance.
pub fn summarize<T: Real>(log: &TelemetryLog<T>, probe: &Probe<T>) -> Result<MetricsReport<T>> {
    let end = log
        .end_time()
        .ok_or_else(|| Error::InvalidArgument("empty log".into()))?;
    let first = log.disturbance_times().first().copied();
    let drift = match first {
        Some(t0) => (0..log.n_joints)
            .map(|j| drift(log, j, t0, end, probe.drift_window))
            .collect::<Result<Vec<_>>>()?,
        None => vec![T::zero(); log.n_joints],
    };
    let t_from = first.unwrap_or_else(|| log.start_time().unwrap_or_else(T::zero));
    let (peak, steady) = tension_stats(log, probe.steady_window);
    Ok(MetricsReport {
        probe_joint: probe.joint,
        drift,
        max_deviation: probe
            .theta_ref
            .map(|r| max_deviation(log, probe.joint, r, t_from)),
        conv_time: probe
            .theta_thre
            .map(|thre| conv_time(log, probe.joint, t_from, thre, probe.side)),
        peak_tension: peak_tension_per_muscle(log),
        peak_tension_overall: peak,
        steady_tension: steady,
        limit_contact: limit_contact(log),
        limit_contact_per_impact: limit_contact_per_impact(log),
        reflex_event_count: log.events.len(),
    })
}

impl<T: Real> MetricsReport<T> {
    /// `key = value` lines, stable key order.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let list = |v: &[T]| v.iter().map(T::to_string).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "probe_joint = {}", self.probe_joint);
        for (j, d) in self.drift.iter().enumerate() {
            let _ = writeln!(s, "drift_{j} = {d}");
        }
        if let Some(m) = self.max_deviation {
            let _ = writeln!(s, "max_deviation = {m}");
        }
        match self.conv_time {
            Some(ConvTime::Converged(t)) => {
                let _ = writeln!(s, "conv_time = {t}");
            }
            Some(ConvTime::NotConverged) => {
                let _ = writeln!(s, "conv_time = not_converged");
            }
            None => {}
        }
        for (j, p) in self.peak_tension.iter().enumerate() {
            let _ = writeln!(s, "peak_tension_{j} = {p}");
        }
        let _ = writeln!(s, "peak_tension = {}", self.peak_tension_overall);
        let _ = writeln!(s, "steady_tension = {}", self.steady_tension);
        let _ = writeln!(s, "limit_contact = {}", self.limit_contact);
        let _ = writeln!(s, "limit_contact_per_impact = {}", list(&self.limit_contact_per_impact));
        let _ = writeln!(s, "reflex_event_count = {}", self.reflex_event_count);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::tests::synthetic;

    #[test]
    fn drift_of_constant_log_is_zero() {
        let log = synthetic(0.01, std::iter::repeat_n(-1.57, 500));
        assert_eq!(drift(&log, 0, 1.0, 4.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn drift_of_a_step() {
        let log = synthetic(0.01, (0..500).map(|k| if k < 200 { -1.570 } else { -1.547 }));
        let d = drift(&log, 0, 1.5, 4.5, 0.5).unwrap();
        assert!((d - 0.023).abs() < 1e-12);
        let log = synthetic(0.01, (0..500).map(|k| if k < 200 { 0.3 } else { 0.305 }));
        let d = drift(&log, 0, 1.5, 4.5, 0.5).unwrap();
        assert!((d - 0.005).abs() < 1e-12);
    }

    #[test]
    fn drift_window_outside_log() {
        let log = synthetic(0.01, std::iter::repeat_n(0.0, 100));
        assert!(drift(&log, 0, 0.2, 0.9, 0.5).is_err());
        assert!(drift(&log, 0, 0.6, 1.5, 0.5).is_err());
    }

    #[test]
    fn conv_vacuous() {
        let log = synthetic(0.01, std::iter::repeat_n(-1.6, 300));
        assert_eq!(conv_time(&log, 0, 1.0, -1.55, Side::Below), ConvTime::Converged(0.0));
    }

    #[test]
    fn conv_constructed_to_point_four_two() {
        // above the threshold on [1.00, 1.42), below from 1.42 on
        let log = synthetic(0.01, (0..400).map(|k| if (100..142).contains(&k) { -1.50 } else { -1.57 }));
        match conv_time(&log, 0, 1.0, -1.55, Side::Below) {
            ConvTime::Converged(t) => assert!((t - 0.42).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn conv_oscillating_never_converges() {
        let log = synthetic(0.01, (0..400).map(|k| if k % 20 < 10 { -1.5 } else { -1.6 }));
        let log = {
            let mut l = log;
            l.rows.last_mut().unwrap().theta[0] = -1.5;
            l
        };
        assert_eq!(conv_time(&log, 0, 1.0, -1.55, Side::Below), ConvTime::NotConverged);
    }

    #[test]
    fn conv_above_side() {
        let log = synthetic(0.01, (0..300).map(|k| if k < 150 { 0.1 } else { 0.3 }));
        assert_eq!(conv_time(&log, 0, 1.0, 0.2, Side::Above).or_infinity(), 0.5);
    }

    fn with_tension(values: &[f64]) -> crate::telemetry::TelemetryLog<f64> {
        let mut log = synthetic(0.01, std::iter::repeat_n(0.0, values.len()));
        for (r, &f) in log.rows.iter_mut().zip(values) {
            r.f[0] = f;
        }
        log
    }

    #[test]
    fn tension_stat_examples() {
        assert_eq!(tension_stats(&with_tension(&[100.0; 300]), 1.0), (100.0, 100.0));
        let mut v = vec![60.0; 100];
        v.extend([150.0, 257.0, 200.0]);
        v.extend(std::iter::repeat_n(86.0, 297));
        let (peak, steady) = tension_stats(&with_tension(&v), 1.0);
        assert_eq!(peak, 257.0);
        assert_eq!(steady, 86.0);
        let (peak, steady) = tension_stats(&with_tension(&[1e-4; 300]), 1.0);
        assert!(peak < 1e-3 && steady < 1e-3);
    }

    #[test]
    fn contact_per_impact_splits_on_impulses() {
        let mut log = synthetic(0.01, std::iter::repeat_n(0.0, 100));
        log.rows[10].impulses = 1;
        log.rows[50].impulses = 1;
        log.rows[30].limit_force[0] = 4.0;
        log.rows[5].limit_force[0] = 9.0; // before the first impact
        assert_eq!(limit_contact_per_impact(&log), vec![4.0, 0.0]);
        assert_eq!(limit_contact(&log), 9.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn series() -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-1.7f64..-1.4, 150..300)
        }

        proptest! {
            #[test]
            fn drift_symmetric_and_shift_invariant(v in series(), shift in -3.0f64..3.0) {
                let log = synthetic(0.01, v.clone());
                let end = log.end_time().unwrap();
                let a = drift(&log, 0, 0.6, end, 0.5).unwrap();
                let b = drift(&log, 0, end, 0.6, 0.5).unwrap();
                prop_assert_eq!(a, b);
                prop_assert!(a >= 0.0);
                let shifted = synthetic(0.01, v.iter().map(|q| q + shift));
                let s = drift(&shifted, 0, 0.6, end, 0.5).unwrap();
                prop_assert!((s - a).abs() < 1e-9);
            }

            #[test]
            fn extending_never_shrinks_conv_time(v in series(), extra in proptest::collection::vec(-1.7f64..-1.4, 1..100)) {
                let short = synthetic(0.01, v.clone());
                let mut all = v.clone();
                all.extend(extra);
                let long = synthetic(0.01, all);
                let a = conv_time(&short, 0, 0.3, -1.55, Side::Below);
                let b = conv_time(&long, 0, 0.3, -1.55, Side::Below);
                if let (ConvTime::Converged(x), ConvTime::Converged(y)) = (a, b) {
                    prop_assert!(y >= x);
                }
                // a converged extension means the short log was converged too
                if matches!(b, ConvTime::Converged(_)) && long.rows[short.rows.len() - 1].theta[0] <= -1.55 {
                    prop_assert!(matches!(a, ConvTime::Converged(_)));
                }
            }
        }
    }
}
