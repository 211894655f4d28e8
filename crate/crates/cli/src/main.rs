use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use seqtag_cli::commands;

/// biLSTM-CRF sequence tagger: train, predict, evaluate, compare.
#[derive(Parser)]
#[command(name = "seqtag", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a key=value config file
    Train {
        /// Path to the config file
        config: PathBuf,
    },
    /// Tag a CoNLL file with a trained model
    Predict {
        model: PathBuf,
        input: PathBuf,
        output: PathBuf,
        /// Auxiliary vector file for the input sentences
        #[arg(long)]
        aux: Option<PathBuf>,
    },
    /// Entity-level F1 of a prediction file against gold
    Eval {
        gold: PathBuf,
        pred: PathBuf,
    },
    /// Paired randomization significance test between two prediction files
    Compare {
        gold: PathBuf,
        pred_a: PathBuf,
        pred_b: PathBuf,
        /// Randomization rounds
        #[arg(long = "iters", default_value_t = 10_000)]
        iters: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config } => commands::cmd_train(&config),
        Command::Predict {
            model,
            input,
            output,
            aux,
        } => commands::cmd_predict(&model, &input, &output, aux.as_deref()),
        Command::Eval { gold, pred } => commands::cmd_eval(&gold, &pred),
        Command::Compare {
            gold,
            pred_a,
            pred_b,
            iters,
        } => commands::cmd_compare(&gold, &pred_a, &pred_b, iters),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
