use std::path::PathBuf;

use clap::{Parser, Subcommand};
use gpemg::cli::{run, Command, RunManifest};

#[derive(Parser)]
#[command(name = "gpemg", about = "GPE ground states by multilevel correction")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Timing repetitions; the median is reported.
    #[arg(long, default_value_t = 3)]
    reps: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one configuration; writes report.json and levels.csv.
    Solve(Common),
    /// Timing sweep over zeta values and methods; writes bench.csv.
    Bench(Common),
    /// Adaptive loop; writes adapt.csv.
    Adapt(Common),
}

fn main() {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let (command, c) = match args.command {
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::Bench(c) => (Command::Bench, c),
        Cmd::Adapt(c) => (Command::Adapt, c),
    };
    let code = run(&RunManifest {
        command,
        config: c.config,
        out: c.out,
        reps: c.reps,
    });
    std::process::exit(code);
}
