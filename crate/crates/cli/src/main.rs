//! `seqclus`: encode, cluster and evaluate categorical sequence corpora, and
//! run the synthetic benchmarks.

mod commands;
mod output;

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use output::Outputs;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    Internal(String),
    #[error(transparent)]
    Lib(#[from] seqclus::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Internal(_) => 2,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Internal(_) => "internal",
            _ => "user",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "seqclus",
    version,
    about = "Cluster categorical sequences with tree-ensemble encodings"
)]
pub struct Cli {
    /// Master seed for every random choice
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads (results do not depend on this)
    #[arg(long, global = true, env = "SEQCLUS_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct InputArgs {
    /// Corpus file
    #[arg(long, short)]
    pub input: PathBuf,
    /// fasta, csv or lines
    #[arg(long, default_value = "fasta")]
    pub format: String,
    /// Read the last CSV field of each row as the class label
    #[arg(long)]
    pub labels: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct MethodArgs {
    /// ntreeclus-dt, ntreeclus-rf, ntreeclus-dt-pos, ntreeclus-rf-pos,
    /// kmer, kmer-K, levenshtein or jaro-winkler
    #[arg(long, default_value = "ntreeclus-rf")]
    pub method: String,
    /// Window size for the tree encoders, or k for kmer
    #[arg(long = "n")]
    pub window: Option<usize>,
    /// Trees in the forest variants
    #[arg(long, default_value_t = 10)]
    pub trees: usize,
    /// cosine or manhattan, for vector methods
    #[arg(long, default_value = "cosine")]
    pub metric: String,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Write per-sequence terminal (or k-mer) counts
    Encode {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        method: MethodArgs,
        /// Representation TSV
        #[arg(long)]
        out: PathBuf,
        /// Write a dense matrix instead of sparse pairs
        #[arg(long)]
        dense: bool,
        /// Save the trained forest as JSON
        #[arg(long)]
        save_model: Option<PathBuf>,
        /// Write the segmented window matrix as TSV
        #[arg(long)]
        dump_segments: Option<PathBuf>,
    },
    /// Ward clustering cut into k clusters
    Cluster {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        method: MethodArgs,
        #[arg(long)]
        k: usize,
        /// Assignment CSV (seq_id, cluster)
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        newick: Option<PathBuf>,
        /// Distance matrix TSV
        #[arg(long)]
        dist_out: Option<PathBuf>,
        /// Per-k index TSV over this range, e.g. 2:10
        #[arg(long, requires = "scores")]
        k_range: Option<String>,
        #[arg(long, requires = "k_range")]
        scores: Option<PathBuf>,
    },
    /// Pick k by an internal validity index
    EstimateK {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        method: MethodArgs,
        #[arg(long, default_value = "2:10")]
        k_range: String,
        /// asw, ch, dunn or combined (min-max normalized ASW and CH)
        #[arg(long, default_value = "asw")]
        index: String,
        /// Weights of ASW and CH for the combined index
        #[arg(long, default_value = "0.5,0.5")]
        weights: String,
        /// Per-k curve TSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validity report against ground-truth labels
    Evaluate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        method: MethodArgs,
        /// Clusters to cut; defaults to the number of classes
        #[arg(long)]
        k: Option<usize>,
        /// Report JSON (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a synthetic benchmark preset
    Simulate {
        #[arg(long, required_unless_present = "list")]
        preset: Option<String>,
        /// Per-run CSV report
        #[arg(long, required_unless_present = "list")]
        out: Option<PathBuf>,
        /// Full JSON report with cell specs and summaries
        #[arg(long)]
        json: Option<PathBuf>,
        /// Print the preset names and exit
        #[arg(long)]
        list: bool,
    },
    /// Time the pipeline stages on a generated corpus
    Bench {
        #[arg(long, default_value_t = 200)]
        sequences: usize,
        #[arg(long, default_value_t = 100)]
        length: usize,
        #[arg(long, default_value_t = 7)]
        alphabet: usize,
        #[arg(long, default_value_t = 3)]
        repeat: usize,
        #[command(flatten)]
        method: MethodArgs,
    },
}

fn report(err: &CliError) -> ExitCode {
    eprintln!(
        "{}",
        json!({ "error": err.to_string(), "kind": err.kind() })
    );
    ExitCode::from(err.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            return report(&CliError::User(first.to_string()));
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            return report(&CliError::User("--threads must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            return report(&CliError::Internal(e.to_string()));
        }
    }

    panic::set_hook(Box::new(|_| {}));
    let mut outputs = Outputs::default();
    let result = panic::catch_unwind(AssertUnwindSafe(|| commands::run(&cli, &mut outputs)));
    let result = match result {
        Ok(r) => r,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unexpected failure".into());
            Err(CliError::Internal(msg))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            outputs.discard();
            report(&e)
        }
    }
}
