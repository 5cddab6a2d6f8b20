//! Scripted experiments and the fixed-step main loop.
//!
//! Each physics tick runs, in order: scripted events due on this tick,
//! tension measurement, the feedback update (on feedback ticks), the reflex
//! update (on reflex ticks), then the motor servos and the arm dynamics.
//! The telemetry row for a tick holds what the controllers saw and
//! commanded at that instant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arm::{ArmModel, ArmState, Drive};
use crate::controllers::{hold_posture_refs, refs_from_virtual, FeedbackParams, FeedbackState};
use crate::error::{ConfigIssue, Error, Result};
use crate::musculotendon::MuscleUnit;
use crate::reflex::{effective_ref, ReflexParams, ReflexState};
use crate::scalar::{c, Real};
use crate::telemetry::{TelemetryLog, TickRecord};

pub use crate::presets::builtin_scenarios;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventKind<T> {
    /// Instantaneous joint velocity change (rad/s).
    Impulse { joint: usize, delta_omega: T },
    /// Sets the payload mass at the tip (kg).
    Payload { mass: T },
    /// A mass falling from `height` (m) caught at `distance` (m) from
    /// `joint`: adds the mass to the payload and the velocity of a
    /// perfectly inelastic catch.
    Drop { joint: usize, mass: T, height: T, distance: T },
    /// Piecewise-linear commanded lengths; `knots[k].lengths[j]` is the
    /// reference for muscle `j` at absolute time `knots[k].time`. Holds the
    /// last knot afterwards.
    RefTrajectory { knots: Vec<RefKnot<T>> },
    /// Same as `RefTrajectory` with knots given as joint postures (rad),
    /// mapped to lengths through the arm geometry.
    PostureTrajectory { knots: Vec<PostureKnot<T>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct RefKnot<T> {
    pub time: T,
    pub lengths: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct PostureKnot<T> {
    pub time: T,
    pub theta: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ScriptEvent<T> {
    pub time: T,
    #[serde(flatten)]
    pub kind: EventKind<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Converged while `theta <= threshold`.
    Below,
    /// Converged while `theta >= threshold`.
    Above,
}

/// What the metrics look at for this scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct Probe<T> {
    pub joint: usize,
    /// Reference angle for the maximum-deviation metric.
    #[serde(default)]
    pub theta_ref: Option<T>,
    /// Threshold angle for the convergence-time metric.
    #[serde(default)]
    pub theta_thre: Option<T>,
    #[serde(default = "below")]
    pub side: Side,
    /// Averaging window of the drift metric (s).
    pub drift_window: T,
    /// Final window of the steady-tension metric (s).
    pub steady_window: T,
}

fn below() -> Side {
    Side::Below
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript<T> {
    pub name: String,
    /// Simulated time (s).
    pub duration: T,
    /// Physics step (s).
    pub dt: T,
    /// Initial joint angles (rad).
    pub theta0: Vec<T>,
    /// Open-loop posture whose lengths are commanded when feedback is off.
    pub posture: Vec<T>,
    #[serde(default)]
    pub payload0: T,
    /// Joints held rigid for the whole run.
    #[serde(default)]
    pub locked_joints: Vec<usize>,
    pub reflex: bool,
    pub feedback: bool,
    #[serde(default)]
    pub seed: u64,
    /// Half-width of uniform timing jitter on impulses (s); zero disables.
    #[serde(default)]
    pub jitter: T,
    pub probe: Probe<T>,
    #[serde(default)]
    pub events: Vec<ScriptEvent<T>>,
}

impl<T: Real> ScenarioScript<T> {
    pub fn impulse_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Impulse { .. }))
            .count()
    }

    pub fn validate(
        &self,
        model: &ArmModel<T>,
        reflex: &ReflexParams<T>,
        feedback: Option<&FeedbackParams<T>>,
    ) -> Vec<ConfigIssue> {
        let n = model.n_joints();
        let m = model.n_muscles();
        let mut issues = model.validate();
        issues.extend(reflex.validate(m, "reflex"));
        let p = "scenario";
        let push = |issues: &mut Vec<ConfigIssue>, f: String, msg: String| issues.push(ConfigIssue::new(f, msg));

        if !(self.dt > T::zero() && self.dt <= c(crate::arm::MAX_DT)) {
            push(&mut issues, format!("{p}.dt"), format!("must be in (0, 0.005] s (got {})", self.dt));
        }
        if !(self.duration.is_finite() && self.duration > T::zero()) {
            push(&mut issues, format!("{p}.duration"), "must be > 0".into());
        }
        if self.theta0.len() != n || self.theta0.iter().any(|q| !q.is_finite()) {
            push(&mut issues, format!("{p}.theta0"), format!("expected {n} finite angles"));
        }
        if self.posture.len() != n || self.posture.iter().any(|q| !q.is_finite()) {
            push(&mut issues, format!("{p}.posture"), format!("expected {n} finite angles"));
        }
        if !(self.payload0.is_finite() && self.payload0 >= T::zero()) {
            push(&mut issues, format!("{p}.payload0"), "mass must be >= 0".into());
        }
        if let Some(&j) = self.locked_joints.iter().find(|&&j| j >= n) {
            push(&mut issues, format!("{p}.locked_joints"), format!("joint {j} out of range"));
        }
        if !(self.jitter.is_finite() && self.jitter >= T::zero()) {
            push(&mut issues, format!("{p}.jitter"), "must be >= 0".into());
        }
        if self.probe.joint >= n {
            push(&mut issues, format!("{p}.probe.joint"), format!("joint {} out of range", self.probe.joint));
        }
        for (name, v) in [("drift_window", self.probe.drift_window), ("steady_window", self.probe.steady_window)] {
            if !(v.is_finite() && v > T::zero()) {
                push(&mut issues, format!("{p}.probe.{name}"), "must be > 0".into());
            }
        }

        for (name, rate) in [("reflex.rate_hz", Some(reflex.rate_hz)), ("feedback.rate_hz", feedback.map(|f| f.rate_hz))] {
            if let Some(rate) = rate {
                if rate > T::zero() && self.dt > T::zero() && ticks_per(self.dt, rate).is_none() {
                    push(&mut issues, name.into(), format!("period must be a whole number of physics steps of {} s", self.dt));
                }
            }
        }
        match (self.feedback, feedback) {
            (true, None) => push(&mut issues, format!("{p}.feedback"), "feedback enabled but no feedback parameters given".into()),
            (_, Some(fb)) => issues.extend(fb.validate(n, "feedback")),
            _ => {}
        }

        let mut last = T::neg_infinity();
        for (k, e) in self.events.iter().enumerate() {
            let f = format!("{p}.events[{k}]");
            if !(e.time >= T::zero() && e.time <= self.duration) {
                push(&mut issues, format!("{f}.time"), format!("must lie in [0, duration] (got {})", e.time));
            }
            if e.time < last {
                push(&mut issues, format!("{f}.time"), "events must be sorted by time".into());
            }
            last = e.time;
            match &e.kind {
                EventKind::Impulse { joint, delta_omega } => {
                    if *joint >= n {
                        push(&mut issues, format!("{f}.joint"), format!("joint {joint} out of range"));
                    }
                    if !delta_omega.is_finite() {
                        push(&mut issues, format!("{f}.delta_omega"), "must be finite".into());
                    }
                }
                EventKind::Payload { mass } => {
                    if !(mass.is_finite() && *mass >= T::zero()) {
                        push(&mut issues, format!("{f}.mass"), "mass must be >= 0".into());
                    }
                }
                EventKind::Drop { joint, mass, height, distance } => {
                    if *joint >= n {
                        push(&mut issues, format!("{f}.joint"), format!("joint {joint} out of range"));
                    }
                    for (name, v) in [("mass", mass), ("height", height), ("distance", distance)] {
                        if !(v.is_finite() && *v >= T::zero()) {
                            push(&mut issues, format!("{f}.{name}"), "must be finite and >= 0".into());
                        }
                    }
                }
                EventKind::RefTrajectory { knots } => {
                    let times: Vec<_> = knots.iter().map(|k| (k.time, &k.lengths)).collect();
                    check_knots(&mut issues, &f, self.feedback, e.time, &times, m, "lengths");
                }
                EventKind::PostureTrajectory { knots } => {
                    let times: Vec<_> = knots.iter().map(|k| (k.time, &k.theta)).collect();
                    check_knots(&mut issues, &f, self.feedback, e.time, &times, n, "theta");
                }
            }
        }
        issues
    }
}

fn check_knots<T: Real>(
    issues: &mut Vec<ConfigIssue>,
    f: &str,
    feedback: bool,
    start: T,
    knots: &[(T, &Vec<T>)],
    width: usize,
    what: &str,
) {
    if feedback {
        issues.push(ConfigIssue::new(f, "reference trajectories require feedback off"));
    }
    if knots.is_empty() {
        issues.push(ConfigIssue::new(format!("{f}.knots"), "at least one knot required"));
    }
    let mut prev = start;
    for (i, &(time, values)) in knots.iter().enumerate() {
        if time < prev {
            issues.push(ConfigIssue::new(
                format!("{f}.knots[{i}].time"),
                "knots must be sorted and not precede the event",
            ));
        }
        prev = time;
        if values.len() != width || values.iter().any(|v| !v.is_finite()) {
            issues.push(ConfigIssue::new(
                format!("{f}.knots[{i}].{what}"),
                format!("expected {width} finite values"),
            ));
        }
    }
}

/// Physics steps per controller period, if the period is a whole number of
/// steps.
fn ticks_per<T: Real>(dt: T, rate_hz: T) -> Option<u64> {
    let ratio = (T::one() / rate_hz) / dt;
    let rounded = ratio.round();
    ((ratio - rounded).abs() < c(1e-6) && rounded >= T::one()).then(|| rounded.to_u64().expect("tick ratio fits"))
}

fn time_to_tick<T: Real>(time: T, dt: T) -> u64 {
    (time / dt).round().max(T::zero()).to_u64().expect("tick fits in u64")
}

fn interpolate<T: Real>(knots: &[RefKnot<T>], t: T) -> Vec<T> {
    let last = knots.last().expect("validated non-empty");
    if t >= last.time {
        return last.lengths.clone();
    }
    let first = &knots[0];
    if t <= first.time {
        return first.lengths.clone();
    }
    let k = knots.windows(2).position(|w| t < w[1].time).expect("t inside knot span");
    let (a, b) = (&knots[k], &knots[k + 1]);
    let s = (t - a.time) / (b.time - a.time);
    a.lengths
        .iter()
        .zip(&b.lengths)
        .map(|(&la, &lb)| la + (lb - la) * s)
        .collect()
}

/// Runs one scenario to completion and returns the full log.
///
/// `feedback` is only consulted when the script enables feedback. The run
/// is a pure function of its arguments: identical inputs give identical
/// logs.
pub fn run<T: Real>(
    scenario: &ScenarioScript<T>,
    robot: &ArmModel<T>,
    reflex_params: &ReflexParams<T>,
    feedback: Option<&FeedbackParams<T>>,
) -> Result<TelemetryLog<T>> {
    let issues = scenario.validate(robot, reflex_params, feedback);
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    let n = robot.n_joints();
    let m = robot.n_muscles();
    let dt = scenario.dt;
    let reflex_period = ticks_per(dt, reflex_params.rate_hz).expect("validated");
    let fb = if scenario.feedback { feedback } else { None };
    let fb_period = fb.map(|f| ticks_per(dt, f.rate_hz).expect("validated"));
    let n_ticks = time_to_tick(scenario.duration, dt) + 1;

    // scripted events keyed by tick; impulse times may be jittered
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut schedule: Vec<(u64, usize)> = scenario
        .events
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let mut time = e.time;
            if scenario.jitter > T::zero() && matches!(e.kind, EventKind::Impulse { .. }) {
                let j = scenario.jitter.as_f64();
                time = (time + T::lit(rng.gen_range(-j..=j))).max(T::zero()).min(scenario.duration);
            }
            (time_to_tick(time, dt), k)
        })
        .collect();
    schedule.sort();

    let mut locked = vec![false; n];
    for &j in &scenario.locked_joints {
        locked[j] = true;
    }

    let mut state = ArmState::at_rest(scenario.theta0.clone());
    state.payload_mass = scenario.payload0;
    let mut fb_state = fb.map(FeedbackState::new);
    let mut l_cmd = match (&fb_state, fb) {
        (Some(s), Some(_)) => refs_from_virtual(&s.theta_virtual, robot)?,
        _ => hold_posture_refs(&scenario.posture, robot)?,
    };
    let geo0 = robot.muscle_lengths_from_joints(&state.theta)?;
    let mut muscles: Vec<MuscleUnit<T>> = robot
        .muscles
        .iter()
        .zip(&l_cmd)
        .zip(&geo0)
        .map(|((spec, &l), &g)| MuscleUnit::at_rest(spec.params, l, g))
        .collect();
    let mut reflex = ReflexState::new(reflex_params, m);
    let mut df = vec![T::zero(); m];
    let mut trajectory: Option<Vec<RefKnot<T>>> = None;
    let zero_ext = vec![T::zero(); n];
    let mut next_event = 0usize;

    let mut log = TelemetryLog::new(n, m, dt);
    log.rows.reserve(n_ticks as usize);

    for tick in 0..n_ticks {
        let t = T::from_u64(tick).expect("tick fits") * dt;
        let diverged = |detail: String| Error::Divergence {
            tick,
            t: t.as_f64(),
            detail,
        };

        let mut impulses = 0u32;
        while next_event < schedule.len() && schedule[next_event].0 == tick {
            let event = &scenario.events[schedule[next_event].1];
            match &event.kind {
                EventKind::Impulse { joint, delta_omega } => {
                    state = robot.apply_impulse(&state, *joint, *delta_omega)?;
                    impulses += 1;
                }
                EventKind::Payload { mass } => state.payload_mass = *mass,
                EventKind::Drop { joint, mass, height, distance } => {
                    let dw = robot.catch_velocity(&state, *joint, *mass, *height, *distance)?;
                    state = robot.apply_impulse(&state, *joint, dw)?;
                    state.payload_mass = state.payload_mass + *mass;
                    impulses += 1;
                }
                EventKind::RefTrajectory { knots } => trajectory = Some(knots.clone()),
                EventKind::PostureTrajectory { knots } => {
                    trajectory = Some(
                        knots
                            .iter()
                            .map(|k| {
                                Ok(RefKnot {
                                    time: k.time,
                                    lengths: robot.muscle_lengths_from_joints(&k.theta)?,
                                })
                            })
                            .collect::<Result<_>>()?,
                    );
                }
            }
            next_event += 1;
        }

        let geo = robot.muscle_lengths_from_joints(&state.theta).map_err(|e| diverged(e.to_string()))?;
        if let Some(j) = geo.iter().position(|g| !(g.is_finite() && *g > T::zero())) {
            return Err(diverged(format!("path length of muscle {j} is {}", geo[j])));
        }
        for (unit, &g) in muscles.iter_mut().zip(&geo) {
            *unit = unit.update_tension(g);
        }
        if let Some(j) = muscles.iter().position(|u| !u.tension.is_finite()) {
            return Err(diverged(format!("tension of muscle {j} is not finite")));
        }

        let feedback_tick = matches!(fb_period, Some(p) if tick % p == 0);
        if let (true, Some(s), Some(params)) = (feedback_tick, fb_state.as_mut(), fb) {
            *s = s.feedback_update(&state.theta, params);
            l_cmd = refs_from_virtual(&s.theta_virtual, robot)?;
        }
        if let Some(knots) = &trajectory {
            l_cmd = interpolate(knots, t);
        }

        let reflex_tick = tick % reflex_period == 0;
        let mut fired = Vec::new();
        if reflex_tick {
            let prev: Vec<T> = muscles.iter().map(|u| u.f_prev).collect();
            for (d, unit) in df.iter_mut().zip(muscles.iter_mut()) {
                *d = unit.latch_tick();
            }
            if scenario.reflex {
                let now: Vec<T> = muscles.iter().map(|u| u.tension).collect();
                let events = reflex.update(&prev, &now, t, reflex_params)?;
                fired = events.iter().map(|e| e.muscle).collect();
                log.events.extend(events);
            }
        }
        let l_eff = effective_ref(&l_cmd, &reflex.offsets);

        let tension: Vec<T> = muscles.iter().map(|u| u.tension).collect();
        let tau = robot.joint_torques(&tension)?;
        let load = robot.wire_load(&tension)?;
        let next = robot
            .step(
                &state,
                &Drive {
                    muscle: &tau,
                    external: &zero_ext,
                    wire_load: &load,
                    locked: &locked,
                },
                dt,
            )
            .map_err(|e| diverged(e.to_string()))?;

        log.rows.push(TickRecord {
            tick,
            t,
            theta: state.theta.clone(),
            omega: state.omega.clone(),
            payload: state.payload_mass,
            l_motor: muscles.iter().map(|u| u.l_motor).collect(),
            l_ref_cmd: l_cmd.clone(),
            l_ref_eff: l_eff.clone(),
            f: tension,
            df: df.clone(),
            offset: reflex.offsets.clone(),
            limit_force: next.limit_force.clone(),
            saturated: muscles.iter().map(|u| u.saturated).collect(),
            slack: muscles.iter().map(MuscleUnit::is_slack).collect(),
            reflex_tick,
            feedback_tick,
            impulses,
            fired,
        });

        for (unit, &target) in muscles.iter_mut().zip(&l_eff) {
            *unit = unit.step_motor(target, dt);
        }
        state = next;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{desk_arm, desk_reflex};

    fn quiet(theta0: Vec<f64>) -> ScenarioScript<f64> {
        ScenarioScript {
            name: "quiet".into(),
            duration: 1.0,
            dt: 0.001,
            posture: theta0.clone(),
            theta0,
            payload0: 0.0,
            locked_joints: vec![],
            reflex: true,
            feedback: false,
            seed: 0,
            jitter: 0.0,
            probe: Probe {
                joint: 1,
                theta_ref: None,
                theta_thre: None,
                side: Side::Below,
                drift_window: 0.5,
                steady_window: 1.0,
            },
            events: vec![],
        }
    }

    #[test]
    fn clocks_and_row_count() {
        let arm = desk_arm::<f64>();
        let mut s = quiet(vec![0.0, -1.0]);
        s.feedback = true;
        let fb = FeedbackParams::holding(vec![0.0, -1.0]);
        let log = run(&s, &arm, &desk_reflex(), Some(&fb)).unwrap();
        assert_eq!(log.rows.len(), 1001);
        for r in &log.rows {
            assert_eq!(r.reflex_tick, r.tick % 10 == 0);
            assert_eq!(r.feedback_tick, r.tick % 200 == 0);
        }
    }

    #[test]
    fn events_land_on_their_tick() {
        let arm = desk_arm::<f64>();
        let mut s = quiet(vec![0.0, -1.0]);
        s.events = vec![
            ScriptEvent {
                time: 0.2504,
                kind: EventKind::Impulse { joint: 1, delta_omega: 0.5 },
            },
            ScriptEvent {
                time: 0.5,
                kind: EventKind::Payload { mass: 2.0 },
            },
        ];
        let log = run(&s, &arm, &desk_reflex(), None).unwrap();
        assert_eq!(log.impulse_times(), vec![0.25]);
        assert_eq!(log.rows[250].omega[1], 0.5);
        assert_eq!(log.payload_change_times(), vec![0.5]);
        assert_eq!(log.rows[499].payload, 0.0);
    }

    #[test]
    fn trajectory_interpolates_and_holds() {
        let knots = vec![
            RefKnot { time: 1.0, lengths: vec![10.0, 0.0] },
            RefKnot { time: 2.0, lengths: vec![20.0, -4.0] },
        ];
        assert_eq!(interpolate(&knots, 0.5), vec![10.0, 0.0]);
        assert_eq!(interpolate(&knots, 1.5), vec![15.0, -2.0]);
        assert_eq!(interpolate(&knots, 3.0), vec![20.0, -4.0]);
    }

    #[test]
    fn invalid_script_is_a_config_error() {
        let arm = desk_arm::<f64>();
        let mut s = quiet(vec![0.0]);
        s.events.push(ScriptEvent {
            time: 5.0,
            kind: EventKind::Payload { mass: -1.0 },
        });
        match run(&s, &arm, &desk_reflex(), None) {
            Err(Error::Config(issues)) => {
                let fields: Vec<_> = issues.iter().map(|i| i.field.as_str()).collect();
                assert!(fields.contains(&"scenario.theta0"));
                assert!(fields.contains(&"scenario.events[0].time"));
                assert!(fields.contains(&"scenario.events[0].mass"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn rate_must_divide_dt() {
        let arm = desk_arm::<f64>();
        let s = quiet(vec![0.0, -1.0]);
        let mut r = desk_reflex::<f64>();
        r.rate_hz = 300.0;
        let issues = s.validate(&arm, &r, None);
        assert!(issues.iter().any(|i| i.field == "reflex.rate_hz"));
    }

    #[test]
    fn divergence_reports_tick() {
        // a kick large enough to carry the extensor path below zero length
        let arm = desk_arm::<f64>();
        let mut s = quiet(vec![0.0, -1.0]);
        s.events.push(ScriptEvent {
            time: 0.1,
            kind: EventKind::Impulse { joint: 1, delta_omega: 1e6 },
        });
        match run(&s, &arm, &desk_reflex(), None) {
            Err(Error::Divergence { tick, .. }) => assert!(tick >= 100),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn jitter_is_seeded() {
        let arm = desk_arm::<f64>();
        let mut s = quiet(vec![0.0, -1.0]);
        s.jitter = 0.05;
        s.events.push(ScriptEvent {
            time: 0.5,
            kind: EventKind::Impulse { joint: 1, delta_omega: 0.1 },
        });
        let a = run(&s, &arm, &desk_reflex(), None).unwrap();
        let b = run(&s, &arm, &desk_reflex(), None).unwrap();
        assert_eq!(a.impulse_times(), b.impulse_times());
        let t = a.impulse_times()[0];
        assert!((t - 0.5).abs() <= 0.05 + 1e-9);
        s.seed = 99;
        let c = run(&s, &arm, &desk_reflex(), None).unwrap();
        assert_ne!(c.impulse_times(), a.impulse_times());
    }
}
