use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use subconvex::harness::{apply_overrides, run_experiment, Command, ExperimentConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    /// k, m and r on a c grid; main-term deviation and remainder tables
    Kernel,
    /// Critical-point table over (t, n)
    Critpts,
    /// Plain and tilde sweeps of H over t for every T
    Sweep,
    /// Peak statistics and scaling fits from sweep.csv
    Peakfit,
    /// Weighted-sum maximization and the bound-chain report from sweep.csv
    Boundchain,
    /// Every stage in order
    All,
}

#[derive(Debug, Parser)]
#[command(name = "subconvex", version, about = "Model kernels, Airy-peak sweeps and bound chains")]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    /// Config file of `key = value` lines
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads
    #[arg(long)]
    workers: Option<usize>,
    /// Quadrature tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Extra `key=value` settings, applied after the config file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn run(cli: Cli) -> subconvex::Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut overrides = BTreeMap::new();
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| subconvex::Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        overrides.insert(k.trim().to_string(), v.to_string());
    }
    if let Some(out) = &cli.out {
        overrides.insert("out".into(), out.display().to_string());
    }
    if let Some(w) = cli.workers {
        overrides.insert("workers".into(), w.to_string());
    }
    if let Some(t) = cli.tol {
        overrides.insert("tol".into(), t.to_string());
    }
    apply_overrides(&mut cfg, &overrides)?;
    let cmd = match cli.command {
        Sub::Kernel => Command::Kernel,
        Sub::Critpts => Command::Critpts,
        Sub::Sweep => Command::Sweep,
        Sub::Peakfit => Command::Peakfit,
        Sub::Boundchain => Command::Boundchain,
        Sub::All => Command::All,
    };
    let outcome = run_experiment(cmd, &cfg)?;
    print!("{}", outcome.summary());
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
