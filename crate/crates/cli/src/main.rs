//! geoseq: corpus preparation, program execution, pretraining, unified
//! training, beam decoding, and evaluation for geometry calculation and
//! proving problems.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "geoseq", version, about = "Unified geometry sequence pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Model-size flags shared by the training and decoding commands.
#[derive(Args, Debug, Clone, Copy)]
pub struct ModelArgs {
    /// Embedding width.
    #[arg(long, default_value_t = 64)]
    pub d_model: usize,
    /// Encoder/decoder layer count.
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Attention heads.
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    /// Feed-forward width.
    #[arg(long, default_value_t = 256)]
    pub d_ff: usize,
    /// Source text position cap (diagram slots come on top).
    #[arg(long, default_value_t = 192)]
    pub max_src_len: usize,
    /// Target position cap.
    #[arg(long, default_value_t = 48)]
    pub max_tgt_len: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with gold programs and proofs.
    GenSynthetic {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of proving problems.
        #[arg(long, default_value_t = 80)]
        proving: usize,
        /// Number of calculation problems.
        #[arg(long, default_value_t = 40)]
        calculation: usize,
    },
    /// Validate, split, and index a corpus; build the vocabulary.
    Prepare {
        /// Corpus directory holding proving.jsonl and/or calculation.jsonl.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Split ratios as train,val,test.
        #[arg(long, default_value = "0.70,0.15,0.15")]
        ratios: String,
    },
    /// Execute a program sequence against a number environment.
    Execute {
        /// Comma-separated numbers bound to N0, N1, ...
        #[arg(long)]
        numbers: String,
        /// Whitespace-joined program tokens.
        #[arg(long)]
        program: String,
    },
    /// Emit pretraining (input, target) token-string pairs, one per line,
    /// tab-separated.
    PretrainTargets {
        /// Corpus file, or a directory holding proving.jsonl/calculation.jsonl.
        corpus: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pretrain on solution sequences and masked text.
    Pretrain {
        /// Prepared data directory (output of `prepare`).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5e-4)]
        lr: f64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 10)]
        batch_size: usize,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Train on program and target sequences.
    Train {
        /// Prepared data directory (output of `prepare`).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "unified")]
        task_mix: String,
        #[arg(long, default_value_t = 2e-4)]
        lr: f64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 10)]
        batch_size: usize,
        /// Warm-start checkpoint (e.g. the pretrained model).
        #[arg(long)]
        init_from: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Beam-decode a split and write the prediction dump.
    Decode {
        /// Prepared data directory (output of `prepare`).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Must match the seed used by `prepare` so gold targets agree.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 10)]
        beam_width: usize,
        #[arg(long, default_value_t = 40)]
        max_len: usize,
    },
    /// Score a prediction dump: answer accuracy and top-K proving accuracy.
    Eval {
        /// Prepared data directory (output of `prepare`).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Must match the seed used by `prepare` so gold targets agree.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "test")]
        split: String,
        /// K for top-K proving accuracy.
        #[arg(long, default_value_t = 10)]
        beam_width: usize,
        /// Relative tolerance for answer matching.
        #[arg(long, default_value_t = 0.01)]
        tolerance: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("GEOSEQ_LOG")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynthetic { out, seed, proving, calculation } => {
            commands::gen_synthetic(&out, seed, proving, calculation)
        }
        Command::Prepare { corpus, out, seed, ratios } => {
            commands::prepare(&corpus, &out, seed, &ratios)
        }
        Command::Execute { numbers, program } => commands::execute(&numbers, &program),
        Command::PretrainTargets { corpus, seed } => commands::pretrain_targets(&corpus, seed),
        Command::Pretrain { data, out, seed, lr, epochs, batch_size, model } => {
            commands::pretrain(&data, &out, seed, lr, epochs, batch_size, model)
        }
        Command::Train { data, out, seed, task_mix, lr, epochs, batch_size, init_from, model } => {
            commands::train(
                &data,
                &out,
                seed,
                &task_mix,
                lr,
                epochs,
                batch_size,
                init_from.as_deref(),
                model,
            )
        }
        Command::Decode { data, checkpoint, out, seed, split, beam_width, max_len } => {
            commands::decode(&data, &checkpoint, &out, seed, &split, beam_width, max_len)
        }
        Command::Eval { data, predictions, out, seed, split, beam_width, tolerance } => {
            commands::eval(&data, &predictions, &out, seed, &split, beam_width, tolerance)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
