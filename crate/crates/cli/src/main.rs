// SPDX-License-Identifier: Apache-2.0

//! `lexalign` command-line driver. Exit codes: 0 success, 1 validation
//! error, 2 runtime or numeric failure.

mod cmd;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "lexalign", version, about = "Sparse lexical vision-language alignment experiments")]
struct Cli {
    /// Worker thread cap (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic paired dataset with a manifest.
    GenData(cmd::gen_data::Args),
    /// Train an encoder pair; writes checkpoint.bin and metrics.csv.
    Train(cmd::train::Args),
    /// Ranked token tables for chosen samples.
    DumpLexical(cmd::dump::Args),
    /// Side-by-side concentration and retrieval report for two checkpoints.
    ComparePenalty(cmd::compare::Args),
    /// Evaluation reports.
    Eval {
        #[command(subcommand)]
        target: cmd::eval::Target,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::GenData(a) => cmd::gen_data::run(a),
        Command::Train(a) => cmd::train::run(a),
        Command::DumpLexical(a) => cmd::dump::run(a),
        Command::ComparePenalty(a) => cmd::compare::run(a),
        Command::Eval { target } => cmd::eval::run(target),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(cmd::exit_code(&e))
        }
    }
}
