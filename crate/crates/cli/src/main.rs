use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use hamport_cli::config::ScenarioConfig;
use hamport_cli::run;

/// Certify, simulate and check stability of a boundary-controlled
/// port-Hamiltonian scenario.
#[derive(Debug, Parser)]
#[command(name = "hamport", version)]
struct Args {
    /// Scenario file (`[section]` headers and `key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    /// Base seed; replaces `ensemble.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; replaces `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated analyses: conditions, simulate, contraction, gain_curve, model_dump.
    #[arg(long, value_delimiter = ',')]
    analyses: Option<Vec<String>>,
    /// `section.key=value`, applied after the file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn execute(args: &Args) -> Result<bool> {
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("ensemble.seed={seed}"));
    }
    if let Some(list) = &args.analyses {
        let quoted: Vec<String> = list.iter().map(|a| format!("\"{}\"", a.trim())).collect();
        overrides.push(format!("output.analyses=[{}]", quoted.join(",")));
    }
    let cfg = ScenarioConfig::load(&args.config, &overrides)?;
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("cannot start worker pool")?;
    }
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    log::info!("running {:?} into {}", cfg.output.analyses, out.display());
    let outcome = run::run(&cfg, &out)?;
    print!("{}", outcome.table());
    for p in &outcome.written {
        log::info!("wrote {}", p.display());
    }
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HAMPORT_LOG", "warn")).init();
    let args = Args::parse();
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
