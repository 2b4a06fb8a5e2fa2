use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use roughmill::harness::{emit_config, parse_config_unchecked, run_experiment, with_threads, ExperimentConfig, Suite};

/// Slow-fast rough PDE experiments on a spectral Galerkin truncation.
#[derive(Debug, Parser)]
#[command(name = "roughmill", version)]
struct Cli {
    /// lift-check, convolve-check, increments, ergodicity, averaging, all,
    /// or emit-config
    command: String,

    /// Flat key = value configuration file
    #[arg(long, env = "ROUGHMILL_CONFIG")]
    config: Option<PathBuf>,

    /// Master seed
    #[arg(long, env = "ROUGHMILL_SEED")]
    seed: Option<u64>,

    /// Output directory for CSV and summary files
    #[arg(long, env = "ROUGHMILL_OUT", default_value = "roughmill-out")]
    out: PathBuf,

    /// Replica count applied to every suite
    #[arg(long, env = "ROUGHMILL_REPLICAS")]
    replicas: Option<usize>,

    /// Worker threads (defaults to all cores)
    #[arg(long, env = "ROUGHMILL_THREADS")]
    threads: Option<usize>,
}

fn load(cli: &Cli) -> roughmill::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config_unchecked(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_env(std::env::vars())?;
    if let Some(seed) = cli.seed {
        cfg.solver.master_seed = seed;
    }
    if let Some(n) = cli.replicas {
        cfg.experiment.set_replicas(n);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> roughmill::Result<bool> {
    let cfg = load(cli)?;
    if cli.command == "emit-config" {
        print!("{}", emit_config(&cfg));
        return Ok(true);
    }
    let suites: Vec<Suite> = if cli.command == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![Suite::parse(&cli.command)
            .ok_or_else(|| roughmill::Error::Config(format!("unknown command '{}'", cli.command)))?]
    };
    let mut ok = true;
    for suite in suites {
        let report = with_threads(cli.threads, || run_experiment(suite, &cfg, &cli.out))??;
        println!("== {} ({})", suite.name(), report.csv_path.display());
        for c in &report.checks {
            println!("{}", c.line());
        }
        ok &= report.passed();
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
