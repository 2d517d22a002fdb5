mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "dialex", version, about = "Dialect lexicon induction and evaluation")]
struct Cli {
    /// Worker threads. Never changes any output.
    #[arg(long, global = true, env = "DIALEX_JOBS")]
    jobs: Option<usize>,

    /// TOML file with settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default, Clone)]
pub struct TextFlags {
    /// Lowercase terms before comparing them.
    #[arg(long)]
    pub lowercase: Option<bool>,
    /// Treat `inflected` labels as positive.
    #[arg(long)]
    pub inflected_positive: Option<bool>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct ForestFlags {
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long)]
    pub bootstrap: Option<bool>,
    #[arg(long)]
    pub min_samples_split: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub positive_weight: Option<f64>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct ProtocolFlags {
    /// Comma-separated seeds; one split and one forest per seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub stratify: Option<bool>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct Bm25Flags {
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Reference forest settings, trained on every row of the input.
    Production,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the 12 features of labeled pairs.
    Features {
        pairs: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        text: TextFlags,
    },
    /// Train a forest on every row of a labeled pair file.
    Train {
        pairs: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Forest seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        text: TextFlags,
        #[command(flatten)]
        forest: ForestFlags,
    },
    /// Precision, recall and F1. With --model, score the whole file with that
    /// model; otherwise split, train and test once per seed.
    EvalBli {
        pairs: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        text: TextFlags,
        #[command(flatten)]
        forest: ForestFlags,
        #[command(flatten)]
        protocol: ProtocolFlags,
    },
    /// Cross-dialect transfer matrices (precision, recall, F1).
    Cross {
        /// `name=pairs.tsv`, repeated once per dialect.
        #[arg(long = "dataset", required = true)]
        datasets: Vec<String>,
        /// Directory receiving precision.tsv, recall.tsv and f1.tsv.
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        text: TextFlags,
        #[command(flatten)]
        forest: ForestFlags,
        #[command(flatten)]
        protocol: ProtocolFlags,
    },
    /// F1 as a function of the training-set fraction.
    Ablate {
        pairs: PathBuf,
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        /// Seed of the fixed test split.
        #[arg(long)]
        split_seed: Option<u64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        text: TextFlags,
        #[command(flatten)]
        forest: ForestFlags,
        #[command(flatten)]
        protocol: ProtocolFlags,
    },
    /// Induce a dialect dictionary from lemmas and a dialect vocabulary.
    Induce {
        /// One lemma per line (extra tab-separated columns are ignored).
        #[arg(long)]
        lemmas: PathBuf,
        /// `term<TAB>frequency` lines.
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dialect: String,
        #[arg(short, long)]
        out: PathBuf,
        /// Also write the size summary here.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Keep only the most frequent dialect terms.
        #[arg(long)]
        vocab_cap: Option<usize>,
        #[arg(long)]
        lowercase: Option<bool>,
    },
    /// Size summary of one or more dictionaries.
    Stats {
        /// `dialect=dict.tsv`, repeated.
        #[arg(long = "dict", required = true)]
        dicts: Vec<String>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        lowercase: Option<bool>,
    },
    /// Build a BM25 index from a JSON-lines collection.
    Index {
        docs: PathBuf,
        /// Output directory; the index is stored as `index.json` inside it.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Rank documents for each query, optionally with dictionary expansion.
    Search {
        #[arg(long)]
        index: PathBuf,
        /// `qid<TAB>text` lines.
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long, default_value = "dialex")]
        tag: String,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        bm25: Bm25Flags,
    },
    /// nDCG@10 and Recall@100 of a run.
    EvalIr {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// BM25 with and without query expansion, one row per dialect plus ALL.
    QeExperiment {
        /// `name=dir`; the directory holds docs.jsonl, queries.tsv,
        /// qrels.txt and dict.tsv.
        #[arg(long = "dataset", required = true)]
        datasets: Vec<String>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        bm25: Bm25Flags,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let data = err
        .chain()
        .filter_map(|e| e.downcast_ref::<dialex_core::Error>())
        .any(|e| e.is_data_error());
    if data {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command, cli.config.as_deref(), cli.jobs) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
