use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fwl_core::cli::{dispatch, Command, RunSpec};

/// Fidelity-weighted learning experiments for pairwise ranking.
#[derive(Debug, Parser)]
#[command(name = "fwl", version)]
struct Args {
    /// Config file of `section.key = value` lines.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Override one key, e.g. `--set train.beta=2.0`. Repeatable.
    #[arg(long = "set", short = 's', value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output directory.
    #[arg(long, short, env = "FWL_OUT", default_value = "out", global = true)]
    out: PathBuf,

    /// Global seed, replacing `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Write the collection as docs.tsv, queries.tsv and qrels.txt.
    Synth,
    /// Label weak pairs with the configured annotator into weak.tsv.
    Annotate,
    /// Train one strategy on all judged queries.
    Train {
        /// One of wa, nn-w, nn-s, nn-sw, nn-wts, fwl.
        #[arg(long)]
        strategy: String,
    },
    /// Score a checkpoint, or the annotator without one, into metrics.csv.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Cross-validate strategies (all when none given) into metrics.csv and runs.jsonl.
    Cv {
        #[arg(long = "strategy")]
        strategies: Vec<String>,
    },
    /// FWL over `sweep.betas` into sweep_beta.csv.
    SweepBeta,
    /// WA against FWL for each of `sweep.annotators` into sensitivity.csv.
    Sensitivity,
    /// One-dimensional regression demo into toy1d.csv.
    Toy1d,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = match args.command {
        Cmd::Synth => Command::Synth,
        Cmd::Annotate => Command::Annotate,
        Cmd::Train { strategy } => Command::Train { strategy },
        Cmd::Eval { checkpoint } => Command::Eval { checkpoint },
        Cmd::Cv { strategies } => Command::Cv { strategies },
        Cmd::SweepBeta => Command::SweepBeta,
        Cmd::Sensitivity => Command::Sensitivity,
        Cmd::Toy1d => Command::Toy1d,
    };
    let spec = RunSpec { command, config: args.config, overrides: args.overrides, out_dir: args.out, seed: args.seed };
    ExitCode::from(dispatch(&spec) as u8)
}
