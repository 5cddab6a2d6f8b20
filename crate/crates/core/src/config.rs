//! Experiment configuration files.
//!
//! An experiment file is TOML with a `schema_version` field:
//!
//! ```toml
//! schema_version = 1
//! name = "e2"
//! robot_file = "desk_arm.toml"   # relative to this file; or an inline [robot]
//!
//! [reflex]
//! enabled = true
//! [reflex.params]
//! c_stretch = 15.0
//! dl_stretch = 10.0
//! dt_loose = 0.5
//! rate_hz = 100.0
//! groups = [[0, 1], [2, 3]]
//!
//! [feedback]                      # optional
//! enabled = false
//! [feedback.params]
//! alpha = 0.3
//! rate_hz = 5.0
//! theta_ref = [0.0, -1.57]
//!
//! [script]                        # optional when `name` is a built-in
//! # ScenarioScript fields
//!
//! [sweep]                         # optional
//! include_off = true
//! sets = [{ dl_stretch = 10.0, dt_loose = 0.5 }]
//! ```
//!
//! The `enabled` flags of the reflex and feedback sections override the
//! flags stored in the script.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arm::ArmModel;
use crate::controllers::FeedbackParams;
use crate::error::{ConfigIssue, Error, Result};
use crate::presets;
use crate::reflex::ReflexParams;
use crate::scalar::{c, Real};
use crate::scenario::{self, ScenarioScript};
use crate::telemetry::TelemetryLog;

pub const SCHEMA_VERSION: u32 = 1;

/// Scenario name that requires an inline script.
pub const CUSTOM: &str = "custom";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig<T> {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot: Option<ArmModel<T>>,
    pub reflex: ReflexSection<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackSection<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<ScenarioScript<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct ReflexSection<T> {
    pub enabled: bool,
    pub params: ReflexParams<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct FeedbackSection<T> {
    pub enabled: bool,
    pub params: FeedbackParams<T>,
}

/// Robot description stored in its own file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct RobotConfig<T> {
    pub schema_version: u32,
    pub robot: ArmModel<T>,
}

/// Sweep stored in its own file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct SweepConfig<T> {
    pub schema_version: u32,
    pub sweep: SweepSpec<T>,
}

/// Reflex parameter sets to compare; unset fields keep the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct SweepSpec<T> {
    /// Also run with the reflex disabled.
    #[serde(default = "yes")]
    pub include_off: bool,
    pub sets: Vec<SweepSet<T>>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct SweepSet<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_stretch: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dl_stretch: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_loose: Option<T>,
}

impl<T: Real> SweepSet<T> {
    pub fn apply(&self, base: &ReflexParams<T>) -> ReflexParams<T> {
        let mut p = base.clone();
        p.c_stretch = self.c_stretch.unwrap_or(p.c_stretch);
        p.dl_stretch = self.dl_stretch.unwrap_or(p.dl_stretch);
        p.dt_loose = self.dt_loose.unwrap_or(p.dt_loose);
        p
    }

    /// Short label such as `dl_stretch=10,dt_loose=0.5`; `default` when no
    /// field is overridden.
    pub fn label(&self) -> String {
        let parts: Vec<String> = [
            ("c_stretch", self.c_stretch),
            ("dl_stretch", self.dl_stretch),
            ("dt_loose", self.dt_loose),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| format!("{k}={v}")))
        .collect();
        if parts.is_empty() {
            "default".into()
        } else {
            parts.join(",")
        }
    }
}

impl<T: Real> SweepSpec<T> {
    /// Named sweeps: `paper` holds the parameter sets compared for each
    /// built-in experiment, `onoff` compares the base parameters with the
    /// reflex disabled.
    pub fn named(name: &str, experiment: &str) -> Option<Self> {
        let set = |dl: Option<f64>, dt: Option<f64>| SweepSet {
            c_stretch: None,
            dl_stretch: dl.map(c),
            dt_loose: dt.map(c),
        };
        let sets = match (name, experiment) {
            ("onoff", _) => vec![SweepSet::default()],
            ("paper", presets::E2) => vec![
                set(Some(10.0), Some(0.5)),
                set(Some(10.0), Some(1.0)),
                set(Some(20.0), Some(1.0)),
            ],
            ("paper", presets::E3) => vec![set(None, Some(1.0)), set(None, Some(3.0)), set(None, Some(5.0))],
            ("paper", presets::E1 | presets::E4) => vec![SweepSet::default()],
            _ => return None,
        };
        Some(Self { include_off: true, sets })
    }

    pub fn validate(&self, prefix: &str) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        if self.sets.is_empty() && !self.include_off {
            issues.push(ConfigIssue::new(format!("{prefix}.sets"), "sweep has no runs"));
        }
        for (i, s) in self.sets.iter().enumerate() {
            for (k, v) in [("c_stretch", s.c_stretch), ("dl_stretch", s.dl_stretch), ("dt_loose", s.dt_loose)] {
                if let Some(v) = v {
                    if !(v.is_finite() && v > T::zero()) {
                        issues.push(ConfigIssue::new(
                            format!("{prefix}.sets[{i}].{k}"),
                            format!("must be finite and > 0 (got {v})"),
                        ));
                    }
                }
            }
        }
        issues
    }
}

/// A fully resolved experiment: everything a run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment<T> {
    pub name: String,
    pub robot: ArmModel<T>,
    pub script: ScenarioScript<T>,
    pub reflex: ReflexParams<T>,
    pub feedback: Option<FeedbackParams<T>>,
    pub sweep: Option<SweepSpec<T>>,
}

impl<T: Real> Experiment<T> {
    /// Built-in experiment with the default robot.
    pub fn builtin(name: &str) -> Option<Self> {
        let script = presets::builtin::<T>(name)?;
        Some(Self {
            name: name.into(),
            robot: presets::desk_arm(),
            feedback: Some(FeedbackParams::holding(script.posture.clone())),
            reflex: presets::reflex_for(name),
            script,
            sweep: None,
        })
    }

    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut issues = self.script.validate(&self.robot, &self.reflex, self.feedback.as_ref());
        if let Some(s) = &self.sweep {
            issues.extend(s.validate("sweep"));
        }
        issues
    }

    pub fn with_reflex(mut self, on: bool) -> Self {
        self.script.reflex = on;
        self
    }

    pub fn with_feedback(mut self, on: bool) -> Self {
        self.script.feedback = on;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.script.seed = seed;
        self
    }

    pub fn run(&self) -> Result<TelemetryLog<T>> {
        scenario::run(&self.script, &self.robot, &self.reflex, self.feedback.as_ref())
    }

    /// One labelled experiment per sweep entry: `off` first when requested,
    /// then `set1`, `set2`, ... with the reflex enabled.
    pub fn variants(&self, sweep: &SweepSpec<T>) -> Vec<(String, SweepSet<T>, Self)> {
        let mut out = Vec::new();
        if sweep.include_off {
            out.push(("off".to_string(), SweepSet::default(), self.clone().with_reflex(false)));
        }
        for (i, set) in sweep.sets.iter().enumerate() {
            let mut e = self.clone().with_reflex(true);
            e.reflex = set.apply(&self.reflex);
            out.push((format!("set{}", i + 1), set.clone(), e));
        }
        out
    }

    /// Config that reproduces this experiment. The robot is written inline
    /// unless `robot_file` is given.
    pub fn to_config(&self, robot_file: Option<PathBuf>) -> ExperimentConfig<T> {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            name: self.name.clone(),
            robot: robot_file.is_none().then(|| self.robot.clone()),
            robot_file,
            reflex: ReflexSection {
                enabled: self.script.reflex,
                params: self.reflex.clone(),
            },
            feedback: self.feedback.as_ref().map(|params| FeedbackSection {
                enabled: self.script.feedback,
                params: params.clone(),
            }),
            script: Some(self.script.clone()),
            sweep: self.sweep.clone(),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<D: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<D> {
    toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn check_version(issues: &mut Vec<ConfigIssue>, field: &str, found: u32) {
    if found != SCHEMA_VERSION {
        issues.push(ConfigIssue::new(
            field,
            format!("unsupported version {found} (expected {SCHEMA_VERSION})"),
        ));
    }
}

impl<T: Real> ExperimentConfig<T> {
    pub fn load(path: &Path) -> Result<Self> {
        parse(path, &read(path)?)
    }

    /// Resolves file references relative to `base_dir` and validates the
    /// result. All problems are reported together.
    pub fn resolve(self, base_dir: &Path) -> Result<Experiment<T>> {
        let mut issues = Vec::new();
        check_version(&mut issues, "schema_version", self.schema_version);

        let robot = match (self.robot, &self.robot_file) {
            (Some(_), Some(_)) => {
                issues.push(ConfigIssue::new("robot_file", "give either robot_file or [robot], not both"));
                None
            }
            (Some(r), None) => Some(r),
            (None, Some(file)) => {
                let path = base_dir.join(file);
                if path.is_file() {
                    let rc: RobotConfig<T> = parse(&path, &read(&path)?)?;
                    check_version(&mut issues, "robot_file: schema_version", rc.schema_version);
                    Some(rc.robot)
                } else {
                    issues.push(ConfigIssue::new(
                        "robot_file",
                        format!("file not found: {}", path.display()),
                    ));
                    None
                }
            }
            (None, None) => Some(presets::desk_arm()),
        };

        let script = match self.script {
            Some(s) => Some(s),
            None if self.name == CUSTOM => {
                issues.push(ConfigIssue::new("script", "custom experiments need an inline [script]"));
                None
            }
            None => {
                let s = presets::builtin(&self.name);
                if s.is_none() {
                    issues.push(ConfigIssue::new(
                        "name",
                        format!("unknown built-in experiment {:?} and no [script] given", self.name),
                    ));
                }
                s
            }
        };

        let (Some(robot), Some(mut script)) = (robot, script) else {
            return Err(Error::Config(issues));
        };
        script.reflex = self.reflex.enabled;
        script.feedback = self.feedback.as_ref().is_some_and(|f| f.enabled);
        let experiment = Experiment {
            name: self.name,
            robot,
            script,
            reflex: self.reflex.params,
            feedback: self.feedback.map(|f| f.params),
            sweep: self.sweep,
        };
        issues.extend(experiment.validate());
        if issues.is_empty() {
            Ok(experiment)
        } else {
            Err(Error::Config(issues))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

impl<T: Real> RobotConfig<T> {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("robot serializes")
    }
}

/// Loads, resolves and validates an experiment file.
pub fn load_experiment<T: Real>(path: &Path) -> Result<Experiment<T>> {
    let base = path.parent().unwrap_or(Path::new("."));
    ExperimentConfig::load(path)?.resolve(base)
}

/// Loads a sweep file.
pub fn load_sweep<T: Real>(path: &Path) -> Result<SweepSpec<T>> {
    let sc: SweepConfig<T> = parse(path, &read(path)?)?;
    let mut issues = Vec::new();
    check_version(&mut issues, "schema_version", sc.schema_version);
    issues.extend(sc.sweep.validate("sweep"));
    if issues.is_empty() {
        Ok(sc.sweep)
    } else {
        Err(Error::Config(issues))
    }
}

/// Checks a config file without running any physics.
pub fn validate_config(path: &Path) -> Result<()> {
    load_experiment::<f64>(path).map(|_| ())
}
