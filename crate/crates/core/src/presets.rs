//! Desk-scale default robot and the four built-in experiments.
//!
//! The robot is a two-joint planar arm (shoulder pitch `S-p`, elbow pitch
//! `E-p`) with one flexor/extensor pair per joint. Negative elbow angles
//! flex the elbow; `0` is full extension and also the elbow limit.

use crate::arm::{ArmModel, JointSpec, MuscleSpec};
use crate::controllers::FeedbackParams;
use crate::musculotendon::MuscleParams;
use crate::reflex::ReflexParams;
use crate::scalar::{c, Real};
use crate::scenario::{EventKind, PostureKnot, Probe, ScenarioScript, ScriptEvent, Side};

pub const SHOULDER: usize = 0;
pub const ELBOW: usize = 1;

pub const E1: &str = "e1";
pub const E2: &str = "e2";
pub const E3: &str = "e3";
pub const E4: &str = "e4";
pub const BUILTIN_NAMES: [&str; 4] = [E1, E2, E3, E4];

/// Elbow angle held in the protective experiment (rad).
pub const E1_ELBOW: f64 = -0.04;
/// Elbow angle held in the postural experiments (rad).
pub const HOLD_ELBOW: f64 = -1.57;
/// E2 starts this much more flexed and settles onto the posture (rad).
pub const E2_PREFLEX: f64 = 0.115;
/// Convergence threshold for the feedback experiment (rad).
pub const E3_THRESHOLD: f64 = -1.55;
pub const E3_DROP_MASS: f64 = 3.6;
pub const E3_DROP_HEIGHT: f64 = 0.2;
pub const E4_PAYLOAD: f64 = 10.0;
pub const E4_RAMP: f64 = 1.0;
/// Elbow angles at the start and end of the lift (rad).
pub const E4_START: f64 = -0.225;
pub const E4_END: f64 = -0.75;

pub const STANDARD_GRAVITY: f64 = 9.81;

fn muscle<T: Real>(name: &str, arms: [f64; 2]) -> MuscleSpec<T> {
    MuscleSpec {
        name: name.into(),
        params: MuscleParams {
            k: c(0.335),
            l0: c(300.0),
            f_max: c(400.0),
            motor_vmax: c(1190.0),
            servo_gain: c(238.0),
            preload: c(133.0),
        },
        moment_arms: arms.iter().map(|&g| c(g)).collect(),
    }
}

pub fn desk_arm<T: Real>() -> ArmModel<T> {
    ArmModel {
        gravity: c(STANDARD_GRAVITY),
        base_angle: -T::FRAC_PI_2(),
        joints: vec![
            JointSpec {
                name: "S-p".into(),
                inertia: c(0.15),
                damping: c(1.0),
                theta_min: c(-3.0),
                theta_max: c(1.0),
                limit_stiffness: c(1000.0),
                limit_damping: c(5.0),
                mu_static: c(0.5),
                mu_kinetic: c(0.4),
                load_static: c(0.1),
                load_kinetic: c(0.08),
                stiction_band: c(0.01),
                link_length: c(0.28),
                link_mass: c(1.8),
                com_distance: c(0.14),
            },
            JointSpec {
                name: "E-p".into(),
                inertia: c(0.37),
                damping: c(1.83),
                theta_min: c(-2.6),
                theta_max: c(0.0),
                limit_stiffness: c(800.0),
                limit_damping: c(4.0),
                mu_static: c(0.19),
                mu_kinetic: c(0.085),
                load_static: c(0.27),
                load_kinetic: c(0.17),
                stiction_band: c(0.009),
                link_length: c(0.22),
                link_mass: c(1.2),
                com_distance: c(0.11),
            },
        ],
        muscles: vec![
            muscle("S-p flexor", [-50.0, 0.0]),
            muscle("S-p extensor", [50.0, 0.0]),
            muscle("E-p flexor", [0.0, -62.0]),
            muscle("E-p extensor", [0.0, 62.0]),
        ],
    }
}

/// One inhibition group per joint.
pub fn desk_reflex<T: Real>() -> ReflexParams<T> {
    ReflexParams::with_groups(vec![vec![0, 1], vec![2, 3]])
}

/// Reflex parameters a built-in experiment starts from.
pub fn reflex_for<T: Real>(_name: &str) -> ReflexParams<T> {
    desk_reflex()
}

pub fn hold_feedback<T: Real>() -> FeedbackParams<T> {
    FeedbackParams::holding(vec![T::zero(), c(HOLD_ELBOW)])
}

fn probe<T: Real>() -> Probe<T> {
    Probe {
        joint: ELBOW,
        theta_ref: None,
        theta_thre: None,
        side: Side::Below,
        drift_window: c(0.5),
        steady_window: c(1.0),
    }
}

fn base<T: Real>(name: &str, duration: f64, elbow: f64) -> ScenarioScript<T> {
    let posture = vec![T::zero(), c(elbow)];
    ScenarioScript {
        name: name.into(),
        duration: c(duration),
        dt: c(0.001),
        theta0: posture.clone(),
        posture,
        payload0: T::zero(),
        locked_joints: vec![SHOULDER],
        reflex: true,
        feedback: false,
        seed: 0,
        jitter: T::zero(),
        probe: probe(),
        events: vec![],
    }
}

fn impulses<T: Real>(first: f64, spacing: f64, count: usize, delta_omega: f64) -> Vec<ScriptEvent<T>> {
    (0..count)
        .map(|k| ScriptEvent {
            time: c(first + spacing * k as f64),
            kind: EventKind::Impulse {
                joint: ELBOW,
                delta_omega: c(delta_omega),
            },
        })
        .collect()
}

/// Protective behaviour: seven impacts toward the extension limit with the
/// elbow held just short of it.
pub fn e1_protective<T: Real>() -> ScenarioScript<T> {
    let mut s = base(E1, 12.0, E1_ELBOW);
    s.events = impulses(1.0, 1.5, 7, 1.94);
    s
}

/// Passive postural stability: seven impacts on the forearm at a right
/// angle, open loop.
pub fn e2_postural<T: Real>() -> ScenarioScript<T> {
    let mut s = base(E2, 18.0, HOLD_ELBOW);
    s.theta0[ELBOW] = c(HOLD_ELBOW - E2_PREFLEX);
    s.events = impulses(3.0, 2.0, 7, 1.0);
    s
}

/// Feedback postural stability: a 3.6 kg bag dropped from 20 cm onto the
/// forearm while the joint-angle feedback holds the elbow at -1.57 rad.
pub fn e3_feedback<T: Real>() -> ScenarioScript<T> {
    let mut s = base(E3, 11.0, HOLD_ELBOW);
    s.feedback = true;
    s.probe.theta_ref = Some(c(HOLD_ELBOW));
    s.probe.theta_thre = Some(c(E3_THRESHOLD));
    s.events = vec![ScriptEvent {
        time: c(3.0),
        kind: EventKind::Drop {
            joint: ELBOW,
            mass: c(E3_DROP_MASS),
            height: c(E3_DROP_HEIGHT),
            distance: desk_arm::<T>().joints[ELBOW].link_length,
        },
    }];
    s
}

/// Active lifting: 10 kg in the hand from the start, commanded lengths
/// ramped over one second from an extended to a flexed elbow.
pub fn e4_lifting<T: Real>() -> ScenarioScript<T> {
    let start = [0.0, E4_START];
    let end = [0.0, E4_END];
    let mut s = base(E4, 8.0, start[1]);
    s.payload0 = c(E4_PAYLOAD);
    let t0 = 2.0;
    s.events = vec![ScriptEvent {
        time: c(t0),
        kind: EventKind::PostureTrajectory {
            knots: vec![
                PostureKnot { time: c(t0), theta: start.map(c).to_vec() },
                PostureKnot { time: c(t0 + E4_RAMP), theta: end.map(c).to_vec() },
            ],
        },
    }];
    s
}

/// The four experiments, keyed by CLI name.
pub fn builtin_scenarios<T: Real>() -> Vec<(&'static str, ScenarioScript<T>)> {
    vec![
        (E1, e1_protective()),
        (E2, e2_postural()),
        (E3, e3_feedback()),
        (E4, e4_lifting()),
    ]
}

pub fn builtin<T: Real>(name: &str) -> Option<ScenarioScript<T>> {
    builtin_scenarios().into_iter().find(|(n, _)| *n == name).map(|(_, s)| s)
}
