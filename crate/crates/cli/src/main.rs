use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pro_benefit::error::Error;
use pro_benefit::report::{assess_files, run_simulation, validate, write_assessment, write_simulation};
use pro_benefit::simulator::SimConfig;

/// Benefit assessment of patient-reported outcome endpoints.
#[derive(Parser)]
#[command(name = "pro-benefit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every analysis and write the report, summary and plot data.
    Assess {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run simulation replicates and write operating characteristics.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check data and configuration without analysing.
    Validate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
}

const OK: u8 = 0;
const INVALID: u8 = 1;
const FAILED: u8 = 2;

/// Input problems map to 1, everything else to 2.
fn code_for(e: &Error) -> u8 {
    match e {
        Error::Io { .. }
        | Error::Config(_)
        | Error::Csv(_)
        | Error::Load(_)
        | Error::Design(_)
        | Error::Scoring(_)
        | Error::UnknownScale(_)
        | Error::UnknownVisit(_)
        | Error::NoBaselineVisit
        | Error::InvalidSimConfig(_) => INVALID,
        _ => FAILED,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Assess { data, config, out } => match assess_files(&data, &config) {
            Err(e) => {
                eprintln!("error: {e}");
                code_for(&e)
            }
            Ok(output) => match write_assessment(&output, &out) {
                Err(e) => {
                    eprintln!("error: {e}");
                    FAILED
                }
                Ok(()) => {
                    print!("{}", output.report.summary());
                    if !output.report.errors.is_empty() {
                        eprintln!("{} analysis error(s) recorded in the report", output.report.errors.len());
                    }
                    OK
                }
            },
        },
        Command::Simulate { config, out } => {
            let result = SimConfig::from_path(&config).and_then(|cfg| {
                let oc = run_simulation(&cfg)?;
                write_simulation(&cfg, &oc, &out)?;
                Ok(oc)
            });
            match result {
                Err(e) => {
                    eprintln!("error: {e}");
                    code_for(&e)
                }
                Ok(oc) => {
                    println!(
                        "{} replicate(s); true RR {}; coverage {}; minor-or-better {}; gate failures {}",
                        oc.replicates, oc.true_rr, oc.coverage, oc.minor_or_better_rate, oc.gate_failure_rate
                    );
                    OK
                }
            }
        }
        Command::Validate { data, config } => {
            let v = validate(&data, &config);
            for w in &v.warnings {
                eprintln!("warning: {w}");
            }
            for e in &v.errors {
                eprintln!("error: {e}");
            }
            if v.ok() {
                println!("ok");
                OK
            } else {
                INVALID
            }
        }
    };
    ExitCode::from(code)
}
