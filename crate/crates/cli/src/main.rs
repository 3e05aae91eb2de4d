//! `glossweave`: pipeline orchestration for the pseudo-gloss alignment
//! toolkit. One subcommand per stage; all stages read the same JSON config
//! file and write only the documented file formats.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, missing inputs,
//! config or schema violations), 2 runtime failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use glossweave_core::Error as CoreError;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::Config(_)
            | CoreError::EmptyCorpus
            | CoreError::CorpusLine { .. }
            | CoreError::Format { .. }
            | CoreError::Shape(_)
            | CoreError::UnknownToken { .. }
            | CoreError::EmptyGloss
            | CoreError::EmptyReference
            | CoreError::Record { .. }
            | CoreError::Feature { .. } => CliError::Validation(err.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "glossweave",
    version,
    about = "Pseudo-gloss alignment pipeline: simulate, generate, train, reorder, recognize, evaluate",
    after_help = "Config file: a JSON object with optional sections sim, llm, mlc, ctc, eval.\n\
        Missing sections and fields take documented defaults (all seeds default to 42);\n\
        unknown keys are rejected. Print the full default config with `glossweave config`.\n\
        The GLOSSWEAVE_LOG environment variable sets log verbosity (error|warn|info|debug)."
)]
struct Cli {
    /// Suppress progress logging (errors are still printed).
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigOpt {
    /// Toolkit config file (JSON; missing sections take defaults).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with known gloss order and frame labels.
    Simulate {
        #[command(flatten)]
        config: ConfigOpt,
        /// Output corpus directory.
        #[arg(long)]
        out: PathBuf,
        /// Override sim.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fill llm_gloss on a corpus from an LLM endpoint or an offline mock.
    Gengloss {
        #[command(flatten)]
        config: ConfigOpt,
        /// Corpus directory holding corpus.jsonl.
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory (defaults to the corpus directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Canned-response JSON Lines file; enables offline mock mode.
        #[arg(long)]
        mock: Option<PathBuf>,
        /// Override llm.endpoint.
        #[arg(long)]
        endpoint: Option<String>,
        /// Override llm.model.
        #[arg(long)]
        model: Option<String>,
        /// JSON file with in-context example pairs [{text, gloss}, ...].
        #[arg(long)]
        examples: Option<PathBuf>,
        /// Use only the first N example pairs.
        #[arg(long)]
        num_examples: Option<usize>,
    },
    /// Fill llm_gloss with the stop-word content-word baseline.
    BaselineGloss {
        #[command(flatten)]
        config: ConfigOpt,
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory (defaults to the corpus directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the weakly supervised frame classifier.
    TrainMlc {
        #[command(flatten)]
        config: ConfigOpt,
        #[arg(long)]
        corpus: PathBuf,
        /// Classifier checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// Override mlc.epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Override mlc.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reorder drafts against frame predictions; fills reordered_gloss.
    Align {
        #[command(flatten)]
        config: ConfigOpt,
        #[arg(long)]
        corpus: PathBuf,
        /// Trained frame classifier checkpoint.
        #[arg(long)]
        clf: PathBuf,
        /// Write a per-record audit file (JSON Lines).
        #[arg(long)]
        audit: Option<PathBuf>,
        /// Output directory (defaults to the corpus directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the toy CTC recognizer on a gloss target field.
    TrainCtc {
        #[command(flatten)]
        config: ConfigOpt,
        #[arg(long)]
        corpus: PathBuf,
        /// Recognizer checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// Held-out corpus for per-epoch WER reporting.
        #[arg(long)]
        dev_corpus: Option<PathBuf>,
        /// Target field: reordered, llm, or true_gloss (overrides ctc.targets).
        #[arg(long)]
        targets: Option<String>,
        /// Override ctc.epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Override ctc.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a corpus; prints a table and writes metrics.json.
    Evaluate {
        #[command(flatten)]
        config: ConfigOpt,
        #[arg(long)]
        corpus: PathBuf,
        /// Frame classifier checkpoint (enables set precision/recall).
        #[arg(long)]
        clf: Option<PathBuf>,
        /// Recognizer checkpoint (scores greedy decodes as the hypothesis).
        #[arg(long)]
        ctc: Option<PathBuf>,
        /// Hypothesis source: auto, decode, reordered, or llm.
        #[arg(long, default_value = "auto")]
        hyp: String,
        /// Metrics file to write (defaults to <corpus>/metrics.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a comparison grid from several metrics.json files.
    Report {
        /// metrics.json files, one per run.
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Print the fully defaulted config (or the given one after validation).
    Config {
        #[command(flatten)]
        config: ConfigOpt,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // help and version requests are not errors
            if err.use_stderr() {
                eprintln!("{err}");
                return ExitCode::from(1);
            }
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };

    let default_level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("GLOSSWEAVE_LOG", default_level),
    )
    .format_timestamp(None)
    .init();

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}
