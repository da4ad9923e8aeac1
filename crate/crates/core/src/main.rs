use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use simopt::harness::{
    compare_config, delta_csv, emit_delta_curve, run_experiment, write_delta_csv, ExperimentConfig, ExperimentReport,
    HarnessError,
};

#[derive(Parser, Debug)]
#[command(name = "simopt", version, about = "Discrete simulation optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the solvers of one configuration over its trials.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the configuration).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides the configuration).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Mean KN evaluations to completion as a function of the indifference zone.
    SweepDelta {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        deltas: Vec<f64>,
        /// CSV file to write in addition to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Head-to-head comparison of the solvers in two configurations.
    Compare {
        #[arg(long)]
        config_a: PathBuf,
        #[arg(long)]
        config_b: PathBuf,
        #[arg(long, default_value_t = 10)]
        tests: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn print_report(report: &ExperimentReport) {
    if let Some((flat, mean)) = report.optimum {
        println!("optimum: {flat} (true mean {mean})");
    }
    println!(
        "{:<14} {:>6} {:>12} {:>10} {:>10} {:>12} {:>8}",
        "solver", "trials", "improvement", "sd", "stages", "evaluations", "correct"
    );
    for s in &report.summaries {
        let a = &s.aggregate;
        let correct = s.correct_rate.map(|c| format!("{c:.2}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<14} {:>6} {:>12.4} {:>10.4} {:>10.1} {:>12.1} {:>8}",
            s.solver, a.trials, a.mean_improvement, a.sd_improvement, a.mean_stages, a.mean_evaluations, correct
        );
    }
    for v in &report.verdicts {
        println!(
            "{} vs {}: better {:.2}, comparable {:.2}, worse {:.2} over {} trials",
            v.a, v.b, v.prop_better, v.prop_comparable, v.prop_worse, v.trials
        );
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config, out, seed, trials } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            let report = run_experiment(&cfg, out.as_deref())?;
            print_report(&report);
        }
        Command::SweepDelta { config, deltas, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = emit_delta_curve(&cfg, &deltas)?;
            print!("{}", delta_csv(&rows));
            if let Some(path) = out {
                write_delta_csv(&path, &rows)?;
            }
        }
        Command::Compare { config_a, config_b, tests, out, seed } => {
            let a = ExperimentConfig::load(&config_a)?;
            let b = ExperimentConfig::load(&config_b)?;
            let mut cfg = compare_config(&a, &b, tests)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let report = run_experiment(&cfg, out.as_deref()).context("comparison failed")?;
            print_report(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<HarnessError>().map_or(1, HarnessError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
