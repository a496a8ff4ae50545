use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isac::harness::{self, ExperimentConfig};
use isac::IsacError;

#[derive(Parser)]
#[command(name = "isac-sim", version, about = "Phase-coded FMCW sensing and communication link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo sweep of the configured structures.
    Run {
        #[command(flatten)]
        common: Common,
        /// Build reconstructions from the true paths and frames.
        #[arg(long)]
        perfect: bool,
    },
    /// Moving-target trajectory with tracking between transmissions.
    Dynamic(Common),
    /// Closed-form dispersion grids and the Doppler resolution table.
    Oracle(Common),
    /// False-alarm rate of the CFAR detector on noise-only frames.
    Pfa {
        #[command(flatten)]
        common: Common,
        /// Minimum number of map cells to test.
        #[arg(long, default_value_t = 10_000_000)]
        cells: u64,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment file (`key = value` lines).
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Override a configuration key, e.g. `--set ebn0=8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let text = fs::read_to_string(&self.config)
            .map_err(|e| Failure::Config(format!("{}: {e}", self.config.display())))?;
        let mut cfg = ExperimentConfig::parse(&text)?;
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Failure::Config(format!("--set {kv}: expected KEY=VALUE")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

enum Failure {
    Config(String),
    Numeric(String),
    Io(String),
}

impl From<IsacError> for Failure {
    fn from(e: IsacError) -> Self {
        match e {
            IsacError::Config(_) | IsacError::InvalidParameter { .. } | IsacError::UnknownStructure(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Numeric(other.to_string()),
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { common, perfect } => {
            let cfg = common.load()?;
            let rows = harness::run_sweep(&cfg, perfect)?;
            emit(common.out.as_deref(), &harness::to_csv(&rows))
        }
        Command::Oracle(c) => {
            let cfg = c.load()?;
            let grids = harness::oracle_grids(&cfg)?;
            let table = harness::doppler_table(&cfg)?;
            match &c.out {
                Some(p) => {
                    emit(Some(p), &grids)?;
                    emit(Some(&p.with_extension("doppler.csv")), &table)
                }
                None => emit(None, &format!("{grids}\n{table}")),
            }
        }
        Command::Dynamic(c) => {
            let cfg = c.load()?;
            let report = harness::run_dynamic(&cfg)?;
            emit(c.out.as_deref(), &harness::to_csv(&report.rows))?;
            match &c.out {
                Some(p) => emit(Some(&p.with_extension("steps.csv")), &report.steps_csv()),
                None => emit(None, &format!("\n{}", report.steps_csv())),
            }
        }
        Command::Pfa { common, cells } => {
            let cfg = common.load()?;
            let est = harness::estimate_pfa(&cfg, cells)?;
            let text = format!(
                "cells,crossings,pfa,target\n{},{},{},{}\n",
                est.cells,
                est.crossings,
                harness::fmt_sig(est.pfa),
                harness::fmt_sig(cfg.pfa)
            );
            emit(common.out.as_deref(), &text)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("simulation failed: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Io(m)) => {
            eprintln!("i/o error: {m}");
            ExitCode::from(1)
        }
    }
}
