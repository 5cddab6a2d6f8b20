use std::path::PathBuf;

use reflex_sim_core::config::{load_experiment, validate_config, RobotConfig, SCHEMA_VERSION};
use reflex_sim_core::presets::{desk_arm, BUILTIN_NAMES};
use reflex_sim_core::Experiment;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_experiments_match_builtins() {
    for name in BUILTIN_NAMES {
        let path = configs().join(format!("{name}.toml"));
        validate_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let loaded: Experiment = load_experiment(&path).unwrap();
        assert_eq!(loaded, Experiment::builtin(name).unwrap(), "{name}");
    }
}

#[test]
fn shipped_robot_is_the_desk_arm() {
    let text = std::fs::read_to_string(configs().join("desk_arm.toml")).unwrap();
    let rc: RobotConfig<f64> = toml::from_str(&text).unwrap();
    assert_eq!(rc.schema_version, SCHEMA_VERSION);
    assert_eq!(rc.robot, desk_arm());
}

#[test]
fn shipped_sweeps_load() {
    for entry in std::fs::read_dir(configs().join("sweeps")).unwrap() {
        let path = entry.unwrap().path();
        let sweep = reflex_sim_core::config::load_sweep::<f64>(&path).unwrap();
        assert!(!sweep.sets.is_empty(), "{}", path.display());
    }
}
