use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use reflex_sim_core::config::{self, SweepSet, SweepSpec, CUSTOM};
use reflex_sim_core::metrics::{summarize, ConvTime};
use reflex_sim_core::presets::BUILTIN_NAMES;
use reflex_sim_core::{checks, Error, Experiment, MetricsReport, TelemetryLog};

/// Environment variable capping the number of sweep worker threads.
const THREADS_ENV: &str = "REFLEX_SIM_THREADS";

mod exit {
    pub const OTHER: u8 = 1;
    pub const CONFIG: u8 = 3;
    pub const DIVERGENCE: u8 = 4;
    pub const ACCEPTANCE: u8 = 5;
}

#[derive(Parser)]
#[command(name = "reflex-sim", version, about = "Stretch-reflex arm simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in experiment (e1..e4) or a custom one from --config.
    Run {
        experiment: String,
        /// Experiment file; required for `custom`, overrides built-in defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        reflex: Option<Switch>,
        #[arg(long)]
        feedback: Option<Switch>,
        /// Named sweep (`paper`, `onoff`) or a sweep file.
        #[arg(long)]
        sweep: Option<String>,
        /// Evaluate the acceptance checks for this experiment.
        #[arg(long)]
        check: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check an experiment file without running it.
    Validate { config: PathBuf },
    /// Recompute the metrics summary of a logged run.
    Metrics {
        log: PathBuf,
        /// Built-in experiment whose probe settings to use.
        #[arg(long, conflicts_with = "config")]
        experiment: Option<String>,
        /// Experiment file whose probe settings to use.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        matches!(self, Switch::On)
    }
}

/// Acceptance failure, reported with its own exit code.
#[derive(Debug)]
struct CheckFailed(usize);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} acceptance check(s) failed", self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<CheckFailed>().is_some() {
        return exit::ACCEPTANCE;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Parse { .. }) => exit::CONFIG,
        Some(Error::Divergence { .. } | Error::NonFinite { .. }) => exit::DIVERGENCE,
        _ => exit::OTHER,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            experiment,
            config,
            reflex,
            feedback,
            sweep,
            check,
            out,
            seed,
        } => run(RunArgs {
            experiment,
            config,
            reflex,
            feedback,
            sweep,
            check,
            out,
            seed,
        }),
        Command::Validate { config } => validate(&config),
        Command::Metrics { log, experiment, config } => metrics(&log, experiment.as_deref(), config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

struct RunArgs {
    experiment: String,
    config: Option<PathBuf>,
    reflex: Option<Switch>,
    feedback: Option<Switch>,
    sweep: Option<String>,
    check: bool,
    out: PathBuf,
    seed: Option<u64>,
}

fn config_error(field: &str, message: String) -> anyhow::Error {
    Error::Config(vec![reflex_sim_core::ConfigIssue::new(field, message)]).into()
}

fn load(name: &str, config: Option<&Path>) -> anyhow::Result<Experiment> {
    let e = match config {
        Some(path) => {
            let e: Experiment = config::load_experiment(path)?;
            if name != CUSTOM && e.name != name {
                return Err(config_error(
                    "name",
                    format!("config describes {:?} but {name:?} was requested", e.name),
                ));
            }
            e
        }
        None if name == CUSTOM => return Err(config_error("config", "custom experiments need --config FILE".into())),
        None => Experiment::builtin(name).ok_or_else(|| {
            config_error(
                "experiment",
                format!("unknown experiment {name:?}; expected one of {BUILTIN_NAMES:?} or custom"),
            )
        })?,
    };
    Ok(e)
}

fn resolve_sweep(spec: &str, experiment: &str) -> anyhow::Result<SweepSpec<f64>> {
    if let Some(s) = SweepSpec::named(spec, experiment) {
        return Ok(s);
    }
    let path = Path::new(spec);
    if path.is_file() {
        return Ok(config::load_sweep(path)?);
    }
    Err(config_error(
        "sweep",
        format!("{spec:?} is neither a named sweep for {experiment} nor a sweep file"),
    ))
}

fn thread_pool() -> anyhow::Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| config_error(THREADS_ENV, format!("expected a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

fn write_run(dir: &Path, log: &TelemetryLog, report: &MetricsReport) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    log.save_csv(&dir.join("log.csv"))?;
    fs::write(dir.join("metrics.txt"), report.to_kv()).with_context(|| format!("writing metrics in {}", dir.display()))?;
    Ok(())
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let mut base = load(&args.experiment, args.config.as_deref())?;
    if let Some(s) = args.reflex {
        base = base.with_reflex(s.on());
    }
    if let Some(s) = args.feedback {
        base = base.with_feedback(s.on());
    }
    if let Some(seed) = args.seed {
        base = base.with_seed(seed);
    }
    let issues = base.validate();
    if !issues.is_empty() {
        return Err(Error::Config(issues).into());
    }

    let out = args.out.join(&base.name);
    let sweep = match &args.sweep {
        Some(spec) => Some(resolve_sweep(spec, &base.name)?),
        None => base.sweep.clone(),
    };
    match sweep {
        Some(sweep) => run_sweep(&base, &sweep, &out)?,
        None => {
            let log = base.run()?;
            let report = summarize(&log, &base.script.probe)?;
            write_run(&out, &log, &report)?;
            print!("{}", report.to_kv());
            println!("wrote {}", out.display());
        }
    }

    if args.check {
        if base.name == CUSTOM || !BUILTIN_NAMES.contains(&base.name.as_str()) {
            return Err(config_error(
                "check",
                format!("no acceptance checks defined for {:?}", base.name),
            ));
        }
        let outcomes = checks::check_experiment(&base)?;
        for o in &outcomes {
            println!("{o}");
        }
        let failed = outcomes.iter().filter(|o| !o.passed).count();
        if failed > 0 {
            return Err(CheckFailed(failed).into());
        }
    }
    Ok(())
}

fn run_sweep(base: &Experiment, sweep: &SweepSpec<f64>, out: &Path) -> anyhow::Result<()> {
    let variants = base.variants(sweep);
    let pool = thread_pool()?;
    let results: Vec<anyhow::Result<MetricsReport>> = pool.install(|| {
        variants
            .par_iter()
            .map(|(label, _, e)| {
                let log = e.run()?;
                let report = summarize(&log, &e.script.probe)?;
                write_run(&out.join(label), &log, &report)?;
                Ok(report)
            })
            .collect()
    });
    let mut rows = Vec::new();
    for ((label, set, _), r) in variants.iter().zip(results) {
        rows.push((label.as_str(), set, r.with_context(|| format!("sweep run {label}"))?));
    }
    let table = comparison_table(&rows);
    fs::create_dir_all(out)?;
    fs::write(out.join("comparison.txt"), &table)?;
    print!("{table}");
    println!("wrote {}", out.display());
    Ok(())
}

fn fmt_conv(c: Option<ConvTime<f64>>) -> String {
    match c {
        Some(ConvTime::Converged(t)) => format!("{t:.3}"),
        Some(ConvTime::NotConverged) => "not_conv".into(),
        None => "-".into(),
    }
}

fn comparison_table(rows: &[(&str, &SweepSet<f64>, MetricsReport)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<6} {:<28} {:>10} {:>10} {:>9} {:>9} {:>9} {:>9} {:>7}",
        "run", "params", "drift", "max_dev", "conv", "peak_f", "steady_f", "limit", "events"
    );
    for (label, set, r) in rows {
        let params = if *label == "off" { "reflex off".to_string() } else { set.label() };
        let dev = r.max_deviation.map_or("-".into(), |d| format!("{d:.4}"));
        let _ = writeln!(
            s,
            "{:<6} {:<28} {:>10.5} {:>10} {:>9} {:>9.2} {:>9.2} {:>9.3} {:>7}",
            label,
            params,
            r.drift[r.probe_joint],
            dev,
            fmt_conv(r.conv_time),
            r.peak_tension_overall,
            r.steady_tension,
            r.limit_contact,
            r.reflex_event_count
        );
    }
    s
}

fn validate(path: &Path) -> anyhow::Result<()> {
    match config::validate_config(path) {
        Ok(()) => {
            println!("{}: ok", path.display());
            Ok(())
        }
        Err(Error::Config(issues)) => {
            for i in &issues {
                eprintln!("{}: {i}", path.display());
            }
            Err(Error::Config(issues).into())
        }
        Err(e) => Err(e.into()),
    }
}

fn metrics(log: &Path, experiment: Option<&str>, config: Option<&Path>) -> anyhow::Result<()> {
    let probe = match (experiment, config) {
        (_, Some(path)) => config::load_experiment::<f64>(path)?.script.probe,
        (Some(name), None) => load(name, None)?.script.probe,
        (None, None) => bail!("give --experiment NAME or --config FILE to select the probe settings"),
    };
    let log = TelemetryLog::load_csv(log)?;
    if probe.joint >= log.n_joints {
        return Err(anyhow!("probe joint {} not in a log with {} joints", probe.joint, log.n_joints));
    }
    print!("{}", summarize(&log, &probe)?.to_kv());
    Ok(())
}
