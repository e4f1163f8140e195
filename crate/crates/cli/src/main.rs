use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use proxbundle::harness::runner::resolve_reference;
use proxbundle::harness::{
    build_problem, make_x0, output_dir, output_root, run_experiment, verify_bounds, with_seed, ExperimentSpec, Verdict,
    OUTPUT_ENV,
};

#[derive(Parser)]
#[command(name = "proxbundle", version, about = "Run proximal bundle experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every solver of an experiment and write CSV traces plus summary.json.
    Run {
        config: PathBuf,
        /// Override the experiment seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output root (defaults to $PROXBUNDLE_OUT, then ./results).
        #[arg(long, env = OUTPUT_ENV)]
        out: Option<PathBuf>,
    },
    /// Compare observed step counts with the theoretical ceilings.
    VerifyBounds {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the optimal value used as f* for the experiment's problem.
    ReferenceSolve {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Print the full result as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn load(config: &Path, seed: Option<u64>) -> Result<ExperimentSpec> {
    let spec = ExperimentSpec::load(config).with_context(|| format!("reading config {}", config.display()))?;
    Ok(match seed {
        Some(s) => with_seed(&spec, s),
        None => spec,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, seed, out } => {
            let spec = load(&config, seed)?;
            let root = out.unwrap_or_else(output_root);
            let dir = output_dir(&spec, &root);
            let summaries = run_experiment(&spec, &dir)?;
            let mut failures = 0;
            for summary in &summaries {
                for s in &summary.solvers {
                    let gap = s.best_gap.map(|g| format!("{g:.3e}")).unwrap_or_else(|| "-".into());
                    println!(
                        "{:<24} {:<8} {:<6} best_gap {:>10} oracle_calls {}",
                        s.name, s.kind, s.status, gap, s.oracle_calls
                    );
                    if let Some(e) = &s.error {
                        println!("    error: {e}");
                        failures += 1;
                    }
                }
            }
            println!("wrote {}", dir.display());
            Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::VerifyBounds { config, seed } => {
            let spec = load(&config, seed)?;
            let checks = verify_bounds(&spec)?;
            for c in &checks {
                println!("{c}");
            }
            let fails = checks.iter().filter(|c| c.verdict == Verdict::Fail).count();
            let passes = checks.iter().filter(|c| c.verdict == Verdict::Pass).count();
            println!("{passes} passed, {fails} failed, {} skipped", checks.len() - passes - fails);
            Ok(if fails == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::ReferenceSolve { config, seed, json } => {
            let spec = load(&config, seed)?;
            let (problem, _) = build_problem(&spec.problem, spec.seed)?;
            let x0_spec = spec.x0.clone().unwrap_or_else(|| problem.default_x0());
            let x0 = make_x0(&x0_spec, problem.dim(), spec.seed)?;
            let r = resolve_reference(&spec, &problem, &x0)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                let flag = if r.certified { "certified" } else { "not certified" };
                println!("{:.17e} ({:?}, {flag}, stop: {})", r.f_star, r.source, r.stop);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
