//! `track`: run beam-tracking scenarios and write traces and summaries.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use beamtrack::harness::{emit_summary, emit_trace, HarnessError, Scenario, ScenarioConfig, Scheme, PRESETS};
use clap::{Parser, Subcommand};

/// Overrides `--out` when set.
const OUT_DIR_ENV: &str = "TRACK_OUT_DIR";

#[derive(Parser)]
#[command(name = "track", version, about = "Monopulse EKF beam tracking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.csv and summary.json.
    Run {
        /// Scenario JSON file, or `preset:NAME`.
        #[arg(long)]
        config: String,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Scenario presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Run several schemes on common random numbers, one subdirectory each.
    Compare {
        #[arg(long)]
        config: String,
        /// Comma-separated list, e.g. `proposed,abp,codebook`.
        #[arg(long)]
        schemes: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print a preset as JSON, ready to edit.
    Show { name: String },
}

fn out_dir(flag: PathBuf) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => flag,
    }
}

fn run_one(cfg: ScenarioConfig, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.to_path_buf(), source })?;
    let result = Scenario::new(cfg)?.run();
    // The trace is trial 0; the summary covers every trial.
    emit_trace(&result.trials[0].records, &dir.join("trace.csv"))?;
    emit_summary(&result.summary, &dir.join("summary.json"))?;
    let s = &result.summary;
    let tail = &s.per_frame_mse[s.per_frame_mse.len() / 2..];
    println!(
        "{}: scheme={} trials={} frames={} mean MSE (second half)={:.3e} detections={} -> {}",
        s.scenario.name,
        s.scenario.scheme,
        s.scenario.trials,
        s.scenario.frames,
        tail.iter().sum::<f64>() / tail.len() as f64,
        s.detection_frames.len(),
        dir.display()
    );
    Ok(())
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, scheme, seed, out } => {
            let mut cfg = ScenarioConfig::resolve(&config)?;
            if let Some(s) = scheme {
                cfg.scheme = s.parse()?;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            run_one(cfg, &out_dir(out))
        }
        Command::Presets { action: PresetAction::List } => {
            for (name, about) in PRESETS {
                println!("{name:<12} {about}");
            }
            Ok(())
        }
        Command::Presets { action: PresetAction::Show { name } } => {
            println!("{}", beamtrack::harness::preset(&name)?.to_json());
            Ok(())
        }
        Command::Compare { config, schemes, out } => {
            let cfg = ScenarioConfig::resolve(&config)?;
            let schemes = schemes.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<Vec<Scheme>, _>>()?;
            if schemes.is_empty() {
                return Err(HarnessError::Config("--schemes is empty".into()));
            }
            let dir = out_dir(out);
            for s in schemes {
                run_one(cfg.with_scheme(s), &dir.join(s.name()))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
