use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_reflex-sim"))
}

fn reflex_sim(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).env_remove("REFLEX_SIM_THREADS").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn kv(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

fn value(text: &str, key: &str) -> String {
    kv(text).into_iter().find(|(k, _)| k == key).unwrap_or_else(|| panic!("no {key}")).1
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn run_writes_log_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = reflex_sim(&["run", "e1", "--out", "out"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("out/e1");
    let csv = fs::read_to_string(run.join("log.csv")).unwrap();
    assert!(csv.starts_with("tick,t,theta_0,theta_1,omega_0,omega_1,payload,"));
    let metrics = fs::read_to_string(run.join("metrics.txt")).unwrap();
    assert!(metrics.lines().all(|l| l.contains(" = ")), "{metrics}");
}

#[test]
fn reflex_off_touches_the_limit() {
    let dir = tempfile::tempdir().unwrap();
    let o = reflex_sim(&["run", "e1", "--reflex", "off"], dir.path());
    assert_eq!(code(&o), 0);
    let metrics = fs::read_to_string(dir.path().join("out/e1/metrics.txt")).unwrap();
    let contact: f64 = value(&metrics, "limit_contact").parse().unwrap();
    assert!(contact > 0.0);
    assert_eq!(value(&metrics, "reflex_event_count"), "0");
}

#[test]
fn metrics_recomputed_from_log_match() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&reflex_sim(&["run", "e2"], dir.path())), 0);
    let o = reflex_sim(&["metrics", "out/e2/log.csv", "--experiment", "e2"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let saved = fs::read_to_string(dir.path().join("out/e2/metrics.txt")).unwrap();
    assert_eq!(String::from_utf8(o.stdout).unwrap(), saved);
}

#[test]
fn paper_sweep_writes_every_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = reflex_sim(&["run", "e2", "--sweep", "paper"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let root = dir.path().join("out/e2");
    for label in ["off", "set1", "set2", "set3"] {
        assert!(root.join(label).join("log.csv").is_file(), "{label}");
        assert!(root.join(label).join("metrics.txt").is_file(), "{label}");
    }
    let table = fs::read_to_string(root.join("comparison.txt")).unwrap();
    assert!(table.contains("reflex off"));
    assert!(table.contains("dl_stretch=20,dt_loose=1"));
}

#[test]
fn sweep_output_does_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut logs = Vec::new();
    for threads in ["1", "3"] {
        let out = format!("out{threads}");
        let o = bin()
            .args(["run", "e3", "--sweep", "paper", "--out", &out])
            .current_dir(dir.path())
            .env("REFLEX_SIM_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        logs.push(fs::read(dir.path().join(&out).join("e3/set2/log.csv")).unwrap());
    }
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["run", "e3", "--sweep", "paper"])
        .current_dir(dir.path())
        .env("REFLEX_SIM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("REFLEX_SIM_THREADS"));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        assert_eq!(code(&reflex_sim(&["run", "e4", "--out", out], dir.path())), 0);
    }
    let a = fs::read(dir.path().join("a/e4/log.csv")).unwrap();
    let b = fs::read(dir.path().join("b/e4/log.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_dt_loose_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("e2.toml"))
        .unwrap()
        .replace("dt_loose = 0.5", "dt_loose = 0.0");
    assert!(text.contains("dt_loose = 0.0"));
    fs::copy(configs().join("desk_arm.toml"), dir.path().join("desk_arm.toml")).unwrap();
    fs::write(dir.path().join("bad.toml"), text).unwrap();

    let o = reflex_sim(&["validate", "bad.toml"], dir.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("reflex.dt_loose"));

    let o = reflex_sim(&["run", "e2", "--config", "bad.toml"], dir.path());
    assert_eq!(code(&o), 3);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn shipped_configs_validate() {
    for name in ["e1", "e2", "e3", "e4"] {
        let path = configs().join(format!("{name}.toml"));
        let o = bin().arg("validate").arg(&path).output().unwrap();
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn malformed_toml_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("x.toml"), "schema_version = [").unwrap();
    assert_eq!(code(&reflex_sim(&["validate", "x.toml"], dir.path())), 3);
    fs::write(dir.path().join("y.toml"), "schema_version = 7\nname = \"e1\"\n[reflex]\n").unwrap();
    assert_eq!(code(&reflex_sim(&["validate", "y.toml"], dir.path())), 3);
}

#[test]
fn unknown_experiment_and_missing_custom_config() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&reflex_sim(&["run", "e9"], dir.path())), 3);
    assert_eq!(code(&reflex_sim(&["run", "custom"], dir.path())), 3);
    assert_eq!(code(&reflex_sim(&["run", "e1", "--reflex", "maybe"], dir.path())), 2);
}

#[test]
fn divergence_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    // a hard shove far past the limit drives the flexor path length negative
    let text = fs::read_to_string(configs().join("e1.toml"))
        .unwrap()
        .replace("delta_omega = ", "delta_omega = 1000000.0 #");
    fs::copy(configs().join("desk_arm.toml"), dir.path().join("desk_arm.toml")).unwrap();
    fs::write(dir.path().join("wild.toml"), text).unwrap();
    let o = reflex_sim(&["run", "e1", "--config", "wild.toml"], dir.path());
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn custom_experiment_runs_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("e2.toml"))
        .unwrap()
        .replacen("name = \"e2\"", "name = \"custom\"", 1);
    fs::copy(configs().join("desk_arm.toml"), dir.path().join("desk_arm.toml")).unwrap();
    fs::write(dir.path().join("mine.toml"), text).unwrap();
    let o = reflex_sim(&["run", "custom", "--config", "mine.toml"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("out/custom/log.csv").is_file());
    // there is nothing to check a custom experiment against
    let o = reflex_sim(&["run", "custom", "--config", "mine.toml", "--check"], dir.path());
    assert_eq!(code(&o), 3);
}

#[test]
fn check_reports_each_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let o = reflex_sim(&["run", "e1", "--check"], dir.path());
    let stdout = String::from_utf8_lossy(&o.stdout);
    let lines: Vec<&str> = stdout.lines().filter(|l| l.starts_with("[PASS]") || l.starts_with("[FAIL]")).collect();
    assert_eq!(lines.len(), 2, "{stdout}");
    let failed = lines.iter().any(|l| l.starts_with("[FAIL]"));
    assert_eq!(code(&o), if failed { 5 } else { 0 });
}

#[test]
fn sweep_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = configs().join("sweeps/threshold.toml");
    let o = reflex_sim(&["run", "e1", "--sweep", file.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("out/e1/comparison.txt")).unwrap();
    assert_eq!(table.lines().count(), 5, "{table}");
    assert!(table.contains("c_stretch=30"));
}
