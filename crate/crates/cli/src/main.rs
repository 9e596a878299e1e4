use std::process::ExitCode;

use anyhow::Result;
use cats_cli::{run_eval, run_inspect, run_train, run_verify_theory, Cli, Command, RunConfig};
use clap::Parser;

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        None => train(RunConfig::resolve(cli.train)?),
        Some(Command::Train(args)) => train(RunConfig::resolve(args)?),
        Some(Command::Eval(args)) => {
            println!("{}", serde_json::to_string(&run_eval(&args)?)?);
            Ok(ExitCode::SUCCESS)
        }
        Some(Command::VerifyTheory(args)) => {
            let outcome = run_verify_theory(&args)?;
            print!("{}", outcome.table);
            println!("report written to {}", outcome.report_path.display());
            if outcome.failed.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("failed checks: {}", outcome.failed.join(", "));
                Ok(ExitCode::FAILURE)
            }
        }
        Some(Command::Inspect(args)) => {
            print!("{}", run_inspect(&args)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn train(config: RunConfig) -> Result<ExitCode> {
    let summary = run_train(&config)?;
    println!(
        "test mse {:.6} mae {:.6} after {} epochs; artifacts in {}",
        summary.test_mse,
        summary.test_mae,
        summary.epochs_run,
        config.output.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
