//! Deterministic simulator of a tendon-driven arm with exponential series
//! elastic muscles, joint friction and a tension-triggered stretch reflex,
//! plus the scripted experiments and metrics used to evaluate it.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common case.

pub mod arm;
pub mod checks;
pub mod config;
pub mod controllers;
pub mod error;
pub mod metrics;
pub mod musculotendon;
pub mod presets;
pub mod reflex;
pub mod scalar;
pub mod scenario;
pub mod telemetry;

pub use error::{ConfigIssue, Error, Result};
pub use scalar::Real;

pub type ArmModel = arm::ArmModel<f64>;
pub type ArmState = arm::ArmState<f64>;
pub type MuscleParams = musculotendon::MuscleParams<f64>;
pub type MuscleUnit = musculotendon::MuscleUnit<f64>;
pub type ReflexParams = reflex::ReflexParams<f64>;
pub type ReflexState = reflex::ReflexState<f64>;
pub type FeedbackParams = controllers::FeedbackParams<f64>;
pub type FeedbackState = controllers::FeedbackState<f64>;
pub type ScenarioScript = scenario::ScenarioScript<f64>;
pub type TelemetryLog = telemetry::TelemetryLog<f64>;
pub type MetricsReport = metrics::MetricsReport<f64>;
pub type Experiment = config::Experiment<f64>;
pub type ExperimentConfig = config::ExperimentConfig<f64>;

/// Single-precision variants.
pub mod single {
    pub type ArmModel = crate::arm::ArmModel<f32>;
    pub type ArmState = crate::arm::ArmState<f32>;
    pub type MuscleUnit = crate::musculotendon::MuscleUnit<f32>;
    pub type ReflexParams = crate::reflex::ReflexParams<f32>;
    pub type ScenarioScript = crate::scenario::ScenarioScript<f32>;
    pub type TelemetryLog = crate::telemetry::TelemetryLog<f32>;
}
