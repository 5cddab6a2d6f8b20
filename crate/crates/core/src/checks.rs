//! Acceptance checks for the built-in experiments.
//!
//! Each check runs the comparisons it needs from a base experiment, so the
//! same code serves `run --check` and the test suite.

use std::fmt;

use crate::config::{Experiment, SweepSet, SweepSpec};
use crate::error::Result;
use crate::metrics::{self, ConvTime};
use crate::presets;
use crate::scalar::{c, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub criterion: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {} {}: {}", self.criterion, self.name, self.detail)
    }
}

fn report<T: Real>(e: &Experiment<T>) -> Result<metrics::MetricsReport<T>> {
    metrics::summarize(&e.run()?, &e.script.probe)
}

/// Reflex off touches the limit on at least three impacts; reflex on
/// never touches it.
pub fn protective<T: Real>(base: &Experiment<T>) -> Result<CheckOutcome> {
    let off = report(&base.clone().with_reflex(false))?.limit_contact_per_impact;
    let on = report(&base.clone().with_reflex(true))?.limit_contact_per_impact;
    let hits_off = off.iter().filter(|&&f| f > T::zero()).count();
    let hits_on = on.iter().filter(|&&f| f > T::zero()).count();
    Ok(CheckOutcome {
        criterion: 1,
        name: "protective",
        passed: hits_off >= 3 && hits_on == 0,
        detail: format!(
            "impacts with limit contact: off {hits_off}/{}, on {hits_on}/{}",
            off.len(),
            on.len()
        ),
    })
}

fn sweep<T: Real>(base: &Experiment<T>) -> Vec<(String, SweepSet<T>, Experiment<T>)> {
    base.variants(&SweepSpec::named("paper", &base.name).expect("built-in sweep"))
}

/// Drift with the reflex is at most half the drift without, for every
/// parameter set.
pub fn postural<T: Real>(base: &Experiment<T>) -> Result<CheckOutcome> {
    let mut drift = Vec::new();
    for (_, set, e) in sweep(base) {
        drift.push((set, report(&e)?.drift[e.script.probe.joint]));
    }
    let (_, off) = drift.remove(0);
    let ratios: Vec<T> = drift.iter().map(|(_, d)| *d / off).collect();
    let passed = off > T::zero() && drift.iter().all(|(_, d)| *d <= c::<T>(0.5) * off);
    let parts: Vec<String> = drift
        .iter()
        .zip(&ratios)
        .map(|((s, d), r)| format!("{} {d:.5} ({r:.3})", s.label()))
        .collect();
    Ok(CheckOutcome {
        criterion: 2,
        name: "postural drift",
        passed,
        detail: format!("off {off:.5}; {}", parts.join("; ")),
    })
}

/// Long loosening converges faster than no reflex, short loosening
/// slower; the reflex never increases the worst deviation.
pub fn feedback_convergence<T: Real>(base: &Experiment<T>) -> Result<CheckOutcome> {
    let mut runs = Vec::new();
    for (_, set, e) in sweep(&base.clone().with_feedback(true)) {
        let r = report(&e)?;
        runs.push((
            set.dt_loose,
            r.conv_time.map_or(ConvTime::NotConverged, |c| c),
            r.max_deviation.unwrap_or_else(T::zero),
        ));
    }
    let (_, conv_off, dev_off) = runs.remove(0);
    let conv = |dt: f64| {
        runs.iter()
            .find(|(d, _, _)| *d == Some(c(dt)))
            .map(|(_, cv, _)| cv.or_infinity())
            .unwrap_or_else(T::nan)
    };
    let off = conv_off.or_infinity();
    let order = conv(5.0) < off && conv(1.0) > off;
    let deviation = runs.iter().all(|(_, _, d)| *d <= dev_off);
    let parts: Vec<String> = runs
        .iter()
        .map(|(d, cv, dev)| {
            format!("dt_loose={} conv {} dev {dev:.4}", d.unwrap_or_else(T::nan), fmt_conv(*cv))
        })
        .collect();
    Ok(CheckOutcome {
        criterion: 3,
        name: "feedback convergence",
        passed: order && deviation,
        detail: format!("off conv {} dev {dev_off:.4}; {}", fmt_conv(conv_off), parts.join("; ")),
    })
}

fn fmt_conv<T: Real>(c: ConvTime<T>) -> String {
    match c {
        ConvTime::Converged(t) => format!("{t:.3}"),
        ConvTime::NotConverged => "not_converged".into(),
    }
}

/// Peak tension and steady tension with the reflex on and off.
fn lift_tensions<T: Real>(base: &Experiment<T>) -> Result<[(T, T); 2]> {
    let off = report(&base.clone().with_reflex(false))?;
    let on = report(&base.clone().with_reflex(true))?;
    Ok([
        (off.peak_tension_overall, off.steady_tension),
        (on.peak_tension_overall, on.steady_tension),
    ])
}

/// The robot with every friction coefficient set to zero.
pub fn without_friction<T: Real>(base: &Experiment<T>) -> Experiment<T> {
    let mut e = base.clone();
    for j in &mut e.robot.joints {
        j.mu_static = T::zero();
        j.mu_kinetic = T::zero();
        j.load_static = T::zero();
        j.load_kinetic = T::zero();
    }
    e
}

/// With friction the reflex raises the peak and lowers the held tension by
/// at least 20%; without friction the held tensions agree within 5%.
pub fn lifting<T: Real>(base: &Experiment<T>) -> Result<CheckOutcome> {
    let [(peak_off, steady_off), (peak_on, steady_on)] = lift_tensions(base)?;
    let [(_, free_off), (_, free_on)] = lift_tensions(&without_friction(base))?;
    let gap = (free_on - free_off).abs() / free_off;
    let passed = peak_on >= peak_off && steady_on <= c::<T>(0.8) * steady_off && gap < c(0.05);
    Ok(CheckOutcome {
        criterion: 4,
        name: "lifting tensions",
        passed,
        detail: format!(
            "peak off {peak_off:.2} on {peak_on:.2}; steady off {steady_off:.2} on {steady_on:.2} ({:.3}); frictionless gap {:.2}%",
            steady_on / steady_off,
            gap * c(100.0)
        ),
    })
}

/// Two runs give byte-identical CSV.
pub fn determinism<T: Real>(base: &Experiment<T>) -> Result<CheckOutcome> {
    let a = base.run()?.to_csv_bytes()?;
    let b = base.run()?.to_csv_bytes()?;
    Ok(CheckOutcome {
        criterion: 7,
        name: "determinism",
        passed: a == b,
        detail: format!("{} bytes, identical: {}", a.len(), a == b),
    })
}

/// The checks that apply to a built-in experiment; empty for other names.
pub fn check_experiment<T: Real>(base: &Experiment<T>) -> Result<Vec<CheckOutcome>> {
    let specific = match base.name.as_str() {
        presets::E1 => protective(base)?,
        presets::E2 => postural(base)?,
        presets::E3 => feedback_convergence(base)?,
        presets::E4 => lifting(base)?,
        _ => return Ok(Vec::new()),
    };
    Ok(vec![specific, determinism(base)?])
}
