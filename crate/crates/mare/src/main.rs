use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mare::cli::output::to_json;
use mare::cli::{cmd_oracle, cmd_run, cmd_sweep, cmd_validity, error_json, load_config, THREADS_ENV};
use serde_json::json;

#[derive(Parser)]
#[command(name = "mare", version, about = "Magnetization-resolved reservoir engineering simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one protocol configuration.
    Run { config: PathBuf },
    /// Cross-check the analytic propagator against the ODE oracle.
    Oracle {
        #[arg(long, default_value_t = 8)]
        grid_size: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturb one rate on the analytic side (fault injection).
        #[arg(long, hide = true)]
        corrupt_rate: bool,
    },
    /// Report the Markov and secular validity diagnostics.
    Validity { config: PathBuf },
    /// Run every configuration matching a glob in parallel.
    Sweep { pattern: String },
}

/// Print to stdout, tolerating a closed pipe.
fn emit(v: &serde_json::Value) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{}", to_json(v));
}

fn fail(e: &mare::Error) -> ExitCode {
    emit(&error_json(e));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("{THREADS_ENV}: {e}");
                }
            }
            _ => log::warn!("{THREADS_ENV}={v:?} is not a positive integer; ignored"),
        }
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => match load_config(&config).and_then(|s| cmd_run(&s)) {
            Ok(summary) => {
                emit(&summary);
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Validity { config } => match load_config(&config).and_then(|s| cmd_validity(&s)) {
            Ok(v) => {
                let ok = v["passes"].as_bool().unwrap_or(false);
                emit(&v);
                if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE }
            }
            Err(e) => fail(&e),
        },
        Command::Oracle { grid_size, trials, seed, corrupt_rate } => {
            match cmd_oracle(grid_size, trials, seed, corrupt_rate) {
                Ok(report) => {
                    let mut v = json!({
                        "trials": report.trials,
                        "max_deviation": report.max_deviation,
                        "passed": report.passed,
                    });
                    if !report.passed {
                        v["worst"] = serde_json::to_value(&report.worst).unwrap_or_default();
                    }
                    emit(&v);
                    if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE }
                }
                Err(e) => fail(&e),
            }
        }
        Command::Sweep { pattern } => match cmd_sweep(&pattern) {
            Ok(results) => {
                let mut ok = true;
                let items: Vec<_> = results
                    .iter()
                    .map(|(path, r)| match r {
                        Ok(_) => json!({"config": path.display().to_string(), "ok": true}),
                        Err(e) => {
                            ok = false;
                            json!({"config": path.display().to_string(), "ok": false, "error": error_json(e)})
                        }
                    })
                    .collect();
                emit(&json!(items));
                if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE }
            }
            Err(e) => fail(&e),
        },
    }
}
