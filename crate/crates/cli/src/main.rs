//! `lcrm`: fit, compare, classify, simulate and check from the command line.
//!
//! Every subcommand prints one JSON object on stdout when it succeeds. On
//! failure it prints `{"status": "error", "error": {...}}` on stderr and exits
//! with status 1 (2 for command-line usage errors).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use commands::{ClassifyArgs, SimulateArgs};
use config::RunArgs;

#[derive(Parser, Debug)]
#[command(name = "lcrm", version, about = "Bayesian latent cure rate marker survival models")]
struct Cli {
    /// Root for default output directories.
    #[arg(long, env = "LCRM_OUTPUT_ROOT", default_value = "lcrm-output", global = true)]
    output_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one model and write the archive and a posterior summary.
    Fit(RunArgs),
    /// Fit a (model, G, J) grid and tabulate LPML and DIC; with a range of G,
    /// also estimate P(G | data) by reversible jump.
    Compare(RunArgs),
    /// Predictive group probabilities and survival curves for one subject.
    Classify(ClassifyArgs),
    /// Simulate a dataset from the LCRM with its ground truth.
    Simulate(SimulateArgs),
    /// Check the sufficient conditions for a proper posterior.
    Check(RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Compare(_) => "compare",
            Command::Classify(_) => "classify",
            Command::Simulate(_) => "simulate",
            Command::Check(_) => "check",
        }
    }
}

fn error_json(err: &anyhow::Error) -> Value {
    let mut body = json!({ "kind": "other", "message": format!("{err:#}") });
    if let Some(core) = err.downcast_ref::<lcrm_core::Error>() {
        body["kind"] = json!(core.kind());
        if let lcrm_core::Error::Propriety(report) = core {
            let labels: Vec<&str> = report.failed_conditions.iter().map(|c| c.label()).collect();
            body["failed_conditions"] = json!(labels);
            body["report"] = json!(report);
        }
    }
    json!({ "status": "error", "error": body })
}

fn run(cli: Cli) -> anyhow::Result<Value> {
    let name = cli.command.name();
    let default_out = cli.output_root.join(name);
    let result = match &cli.command {
        Command::Fit(a) => commands::fit(a, default_out),
        Command::Compare(a) => commands::compare_grid(a, default_out),
        Command::Classify(a) => commands::classify(a, default_out),
        Command::Simulate(a) => commands::simulate(a, default_out),
        Command::Check(a) => commands::check(a, default_out),
    }?;
    Ok(json!({ "status": "ok", "command": name, "result": result }))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let body = json!({ "status": "error", "error": { "kind": "usage", "message": e.to_string() } });
            eprintln!("{}", serde_json::to_string_pretty(&body).expect("serializable"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string_pretty(&error_json(&e)).expect("serializable"));
            ExitCode::FAILURE
        }
    }
}
