//! `esor`: run, sweep, bound, and verify closed-loop scenarios.
//!
//! Exit codes: 0 ok, 1 runtime error, 2 safety violation, 3 infeasible QP
//! samples present.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use esor_core::harness::{
    build_scenario, compute_metrics, parse_values, scenario_bounds, simulate, sweep, verify_bounds,
    write_bounds_csv, write_metrics_csv, write_sweep_csv, Metrics, RunStatus, ScenarioConfig,
    TrajectoryLog,
};

#[derive(Parser)]
#[command(
    name = "esor",
    version,
    about = "Observer-based robust safety filter scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write trajectory.csv, metrics.csv, bounds.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; falls back to `output.dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the scenario once per value of a dotted config key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted key, e.g. `observer.bandwidth` or `controller`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        /// Also write sweep.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the error-bound set implied by a config.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Check a trajectory log against the bounds implied by a config.
    Verify {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Minimum containment and sufficiency rate.
        #[arg(long, default_value_t = 0.999)]
        required_rate: f64,
    },
}

fn load(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(std::io::BufWriter::new(f))
}

fn summary(m: &Metrics) -> String {
    format!(
        "samples {}  min_h {:.6}  mean_h {:.6}  violations {}  containment {:.5}  sufficiency {:.5}  infeasible {}",
        m.samples, m.min_h, m.mean_h, m.violations, m.containment_rate, m.sufficiency_rate, m.infeasible_samples
    )
}

fn run(config: &Path, out: Option<PathBuf>) -> Result<RunStatus> {
    let cfg = load(config)?;
    let Some(dir) = out.or_else(|| cfg.output.dir.clone()) else {
        bail!("no output directory: pass --out or set output.dir");
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let scenario = build_scenario(&cfg)?;
    let log = simulate(&scenario)?;
    let metrics = compute_metrics(&log, cfg.simulation.transient);
    log.save(&dir.join("trajectory.csv"))?;
    write_metrics_csv(
        &[(cfg.controller.as_str().to_string(), metrics.clone())],
        create(&dir.join("metrics.csv"))?,
    )?;
    write_bounds_csv(&scenario_bounds(&cfg)?, create(&dir.join("bounds.csv"))?)?;
    println!("{}", summary(&metrics));
    Ok(RunStatus::from_metrics(&metrics))
}

fn run_sweep(config: &Path, axis: &str, values: &str, out: Option<PathBuf>) -> Result<RunStatus> {
    let cfg = load(config)?;
    let values = parse_values(values);
    if values.is_empty() {
        bail!("--values is empty");
    }
    let rows = sweep(&cfg, axis, &values)?;
    let mut buf = Vec::new();
    write_sweep_csv(axis, &rows, &mut buf)?;
    std::io::stdout().write_all(&buf)?;
    if let Some(dir) = out {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("sweep.csv"), &buf)?;
    }
    let statuses: Vec<RunStatus> = rows
        .iter()
        .map(|r| RunStatus::from_metrics(&r.metrics))
        .collect();
    Ok(if statuses.contains(&RunStatus::SafetyViolation) {
        RunStatus::SafetyViolation
    } else if statuses.contains(&RunStatus::InfeasibleSamples) {
        RunStatus::InfeasibleSamples
    } else {
        RunStatus::Ok
    })
}

fn bounds(config: &Path, format: Format) -> Result<RunStatus> {
    let b = scenario_bounds(&load(config)?)?;
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&b)?),
        Format::Csv => write_bounds_csv(&b, std::io::stdout().lock())?,
    }
    Ok(RunStatus::Ok)
}

fn verify(log_path: &Path, config: &Path, required: f64) -> Result<RunStatus> {
    let cfg = load(config)?;
    let log = TrajectoryLog::load(log_path)?;
    let report = verify_bounds(&log, &scenario_bounds(&cfg)?, cfg.simulation.transient)?;
    let metrics = compute_metrics(&log, cfg.simulation.transient);
    println!(
        "containment {:.6}  sufficiency {:.6}  max_normalized_exceedance {:.6}  flagged {}  sufficiency_failures {}  violations {}",
        report.containment_rate,
        report.sufficiency_rate,
        report.max_normalized_exceedance,
        report.flagged.len(),
        report.sufficiency_failures.len(),
        metrics.violations,
    );
    for f in report.flagged.iter().take(20) {
        println!(
            "flagged t={} channel={} error={} gamma={}",
            f.t, f.channel, f.error, f.gamma
        );
    }
    Ok(if metrics.violations > 0 || !report.passes(required) {
        RunStatus::SafetyViolation
    } else {
        RunStatus::Ok
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => run(&config, out),
        Command::Sweep {
            config,
            axis,
            values,
            out,
        } => run_sweep(&config, &axis, &values, out),
        Command::Bounds { config, format } => bounds(&config, format),
        Command::Verify {
            log,
            config,
            required_rate,
        } => verify(&log, &config, required_rate),
    };
    match result {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
