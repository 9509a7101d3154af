mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Overrides;

#[derive(Parser, Debug)]
#[command(name = "oracle-forge", version, about = "Test oracle inference over JSONL corpora")]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalFlags {
    /// key=value file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = one per core)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Abort on the first bad record
    #[arg(long, global = true)]
    strict: bool,
    /// Constants kept per type in the global table
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Minimum score for emitting an assertion
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true)]
    exception_cutoff: Option<f64>,
    /// `heuristic`, `tcp://host:port` or `exec:<command>`
    #[arg(long, global = true)]
    scorer: Option<String>,
    /// Use the built-in heuristic when the external scorer is unreachable
    #[arg(long, global = true)]
    fallback_heuristic: bool,
    #[arg(long, global = true)]
    scorer_timeout_ms: Option<u64>,
    #[arg(long, global = true)]
    max_in_flight: Option<usize>,
}

impl GlobalFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            k: self.k,
            threshold: self.threshold,
            exception_cutoff: self.exception_cutoff,
            scorer: self.scorer.clone(),
            fallback_heuristic: self.fallback_heuristic.then_some(true),
            seed: self.seed,
            jobs: self.jobs,
            strict: self.strict.then_some(true),
            scorer_timeout_ms: self.scorer_timeout_ms,
            max_in_flight: self.max_in_flight,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DatasetKind {
    Exceptions,
    Assertions,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse tests and print one JSON AST (or error) per line
    Parse {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Build a labelled dataset from raw (focal method, test) records
    Dataset {
        kind: DatasetKind,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Constant table (required for assertions)
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Emit groups whose ground truth is not a candidate (all labels 0)
        #[arg(long)]
        keep_oov: bool,
        /// Where to write the build report (default: stderr)
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Build the global constant table from a corpus's assertions
    Vocab {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Infer an oracle for every test prefix
    Infer {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Verdicts, FPR and bugs found from execution records
    Eval {
        #[arg(long, short)]
        records: PathBuf,
        /// JSON report destination; the text table goes to stdout
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Share of assertions expressible in the oracle grammar
    Coverage {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Accuracy and in-vocab fraction as the table size k varies
    Ablate {
        #[arg(long, short)]
        input: PathBuf,
        /// Corpus the constant table is built from (default: the input)
        #[arg(long)]
        vocab_corpus: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,4,8,16")]
        ks: Vec<usize>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let file = match &cli.global.config {
        Some(p) => Overrides::load(p),
        None => Ok(Overrides::default()),
    };
    let cfg = match file.and_then(|f| cli.global.overrides().over(f).resolve()) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.command, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
