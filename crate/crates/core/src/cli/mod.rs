//! `dredit` command line.
//!
//! Exit codes: 0 success, 2 usage, 3 bad data, 4 numerical failure, 5 I/O.
//! With `--json` every command prints exactly one JSON object ([`RunReport`])
//! on stdout, including on failure; diagnostics go to stderr.

mod commands;
mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bench::Shift;
use crate::error::{Error, ErrorKind};
use crate::eval::Similarity;
use crate::solver::{EditSide, Ridge};

pub use report::{RunReport, REPORT_SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_IO: i32 = 5;

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Usage => EXIT_USAGE,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numeric => EXIT_NUMERIC,
        ErrorKind::Io => EXIT_IO,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dredit",
    version,
    about = "Fit, apply and evaluate closed-form embedding edit operators"
)]
pub struct Cli {
    /// Emit a single JSON report on stdout.
    #[arg(long, global = true)]
    pub json: bool,

    /// Cap on worker threads for internal parallelism (1 = serial).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an edit operator from question/answer embeddings and store it.
    Fit(FitArgs),
    /// Apply a stored operator to query and/or corpus embeddings.
    Calibrate(CalibrateArgs),
    /// Exact top-k retrieval.
    Search(SearchArgs),
    /// Retrieval metrics (nDCG, MAP, Recall at k) against qrels.
    Eval(EvalArgs),
    /// Fit on source-domain pairs, then calibrate and evaluate a target task.
    Zerodr(ZerodrArgs),
    /// Time the closed-form fit against the gradient-descent oracle.
    Bench(BenchArgs),
    /// Fit and evaluate over a grid of lambda values.
    Sweep(SweepArgs),
    /// Fit on growing subsamples of synthetic training pairs.
    Scale(ScaleArgs),
    /// Write a seeded synthetic domain-shift dataset.
    Synth(SynthArgs),
    /// Inspect or modify the operator store.
    #[command(subcommand)]
    Store(StoreCommand),
}

#[derive(Debug, Clone, Args)]
pub struct StoreArg {
    /// Operator store root.
    #[arg(long, env = "DREDITOR_STORE", value_name = "DIR")]
    pub store: Option<PathBuf>,
}

fn parse_ridge(s: &str) -> Result<Ridge, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Ridge::Auto);
    }
    match s.parse::<f64>() {
        Ok(r) if r.is_finite() && r >= 0.0 => Ok(Ridge::Fixed(r)),
        _ => Err(format!(
            "expected `auto` or a nonnegative number, got {s:?}"
        )),
    }
}

fn parse_lambda(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(l) if l.is_finite() && l > 0.0 => Ok(l),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn parse_k(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(k),
        _ => Err(format!("expected an integer >= 1, got {s:?}")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Weight of the answer-invariance term.
    #[arg(long, default_value = "1", value_parser = parse_lambda)]
    pub lambda: f64,

    /// Diagonal jitter: `auto` (1e-6 · trace/d) or an absolute value.
    #[arg(long, default_value = "auto", value_parser = parse_ridge)]
    pub ridge: Ridge,
}

#[derive(Debug, Clone, Args)]
pub struct TrainInputs {
    /// Question embeddings (DRED1).
    #[arg(long, value_name = "FILE")]
    pub questions: PathBuf,

    /// Answer embeddings (DRED1).
    #[arg(long, value_name = "FILE")]
    pub answers: PathBuf,

    /// Question/answer alignment (JSONL with qid, did).
    #[arg(long, value_name = "FILE")]
    pub pairs: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalOpts {
    /// Rank cutoff.
    #[arg(long, default_value = "10", value_parser = parse_k)]
    pub k: usize,

    #[arg(long, value_enum, default_value_t = Similarity::Cosine)]
    pub sim: Similarity,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub inputs: TrainInputs,

    /// Domain key in the operator store.
    #[arg(long)]
    pub domain: String,

    #[command(flatten)]
    pub store: StoreArg,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// Edit side recorded in the operator metadata.
    #[arg(long, value_enum, default_value_t = EditSide::QueriesAndAnswers)]
    pub side: EditSide,

    /// Source dataset label recorded in the metadata (defaults to the pairs path).
    #[arg(long)]
    pub dataset_id: Option<String>,

    /// Overwrite an existing operator for the domain.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub domain: String,

    #[command(flatten)]
    pub store: StoreArg,

    /// Query embeddings to calibrate.
    #[arg(long, value_name = "FILE", requires = "queries_out")]
    pub queries: Option<PathBuf>,

    #[arg(long, value_name = "FILE", requires = "queries")]
    pub queries_out: Option<PathBuf>,

    /// Corpus embeddings to calibrate.
    #[arg(long, value_name = "FILE", requires = "corpus_out")]
    pub corpus: Option<PathBuf>,

    #[arg(long, value_name = "FILE", requires = "corpus")]
    pub corpus_out: Option<PathBuf>,

    /// `q` leaves the corpus unchanged (copied byte for byte); `qa` calibrates both.
    #[arg(long, value_enum, default_value_t = EditSide::QueriesAndAnswers)]
    pub side: EditSide,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Query embeddings (DRED1).
    #[arg(long, value_name = "FILE")]
    pub queries: PathBuf,

    /// Corpus embeddings (DRED1).
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,

    #[command(flatten)]
    pub eval: EvalOpts,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Query embeddings (DRED1).
    #[arg(long, value_name = "FILE")]
    pub queries: PathBuf,

    /// Corpus embeddings (DRED1).
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,

    /// Relevance judgments (JSONL with qid, did, rel).
    #[arg(long, value_name = "FILE")]
    pub qrels: PathBuf,

    #[command(flatten)]
    pub eval: EvalOpts,
}

#[derive(Debug, Args)]
pub struct ZerodrArgs {
    /// Source-domain pairs standing in for target training data.
    #[command(flatten)]
    pub inputs: TrainInputs,

    /// Target-task query embeddings (DRED1).
    #[arg(long, value_name = "FILE")]
    pub queries: PathBuf,

    /// Target-task corpus embeddings (DRED1).
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,

    /// Relevance judgments (JSONL with qid, did, rel).
    #[arg(long, value_name = "FILE")]
    pub qrels: PathBuf,

    /// Also save the operator under this domain key.
    #[arg(long)]
    pub domain: Option<String>,

    #[command(flatten)]
    pub store: StoreArg,

    #[command(flatten)]
    pub solver: SolverArgs,

    #[arg(long, value_enum, default_value_t = EditSide::QueriesAndAnswers)]
    pub side: EditSide,

    #[command(flatten)]
    pub eval: EvalOpts,

    /// Source dataset label recorded in the metadata (defaults to the pairs path).
    #[arg(long)]
    pub dataset_id: Option<String>,

    #[arg(long)]
    pub force: bool,

    /// Write calibrated queries and corpus here.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthOpts {
    /// Generator seed.
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long, default_value_t = 64)]
    pub d: usize,

    #[arg(long, default_value_t = 2000)]
    pub n_train: usize,

    #[arg(long, default_value_t = 200)]
    pub n_test: usize,

    /// Corpus size including the test answers.
    #[arg(long, default_value_t = 2000)]
    pub n_corpus: usize,

    #[arg(long, value_enum, default_value_t = Shift::RandomLinear)]
    pub shift: Shift,

    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
}

#[derive(Debug, Clone, Args)]
pub struct DataSource {
    /// Dataset directory in the `synth` layout (otherwise generated from --seed).
    #[arg(long, value_name = "DIR", conflicts_with = "seed")]
    pub data: Option<PathBuf>,

    #[command(flatten)]
    pub synth: SynthOpts,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub source: DataSource,

    #[arg(long, default_value = "1", value_parser = parse_lambda)]
    pub lambda: f64,

    /// Gradient-descent oracle steps.
    #[arg(long, default_value_t = 500)]
    pub gd_steps: usize,

    /// Runs per measurement; the median is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: DataSource,

    /// Comma-separated lambda values, evaluated in order.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_lambda)]
    pub grid: Vec<f64>,

    #[arg(long, default_value = "auto", value_parser = parse_ridge)]
    pub ridge: Ridge,

    #[arg(long, value_enum, default_value_t = EditSide::QueriesAndAnswers)]
    pub side: EditSide,

    #[command(flatten)]
    pub eval: EvalOpts,
}

#[derive(Debug, Args)]
pub struct ScaleArgs {
    #[command(flatten)]
    pub synth: SynthOpts,

    /// Comma-separated training subsample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,

    #[command(flatten)]
    pub solver: SolverArgs,

    #[arg(long, value_enum, default_value_t = EditSide::QueriesAndAnswers)]
    pub side: EditSide,

    #[command(flatten)]
    pub eval: EvalOpts,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub synth: SynthOpts,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum StoreCommand {
    /// List stored operators.
    List(StoreArg),
    /// Show one operator's metadata.
    Show {
        #[arg(long)]
        domain: String,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Delete one operator.
    Rm {
        #[arg(long)]
        domain: String,
        #[command(flatten)]
        store: StoreArg,
    },
}

/// Parses `std::env::args` and runs the command; returns the exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            let _ = e.print();
            if args.iter().any(|a| a == "--json") {
                RunReport::failure("parse", EXIT_USAGE, e.kind().to_string()).print_json();
            }
            return EXIT_USAGE;
        }
    };
    commands::dispatch(cli)
}
