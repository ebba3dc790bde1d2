//! `infostat`: build vocabularies, train, cross-validate, ablate and probe
//! information-status classifiers.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use infostat::model::Profile;
use infostat::probe::Grouping;
use infostat::Error;

use config::{load_config, ExperimentConfig, SEED_ENV};

#[derive(Parser)]
#[command(name = "infostat", version, about = "Information-status classification with a self-attention encoder")]
struct Cli {
    /// Worker threads for fold-level parallelism (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a rule-labelled synthetic corpus.
    GenSynthetic(Opts),
    /// Learn a subword vocabulary from a corpus.
    BuildVocab(Opts),
    /// Train one model and save a checkpoint.
    Train(Opts),
    /// Document-level k-fold cross-validation.
    CrossValidate(Opts),
    /// Cross-validate the four input ablations against the full model.
    Ablate(Opts),
    /// Rank the tokens [CLS] attends to per class.
    Probe(Opts),
    /// Re-execute a run from its manifest.
    Run {
        manifest: PathBuf,
        /// Write outputs here instead of the manifest's directory.
        #[arg(long, visible_alias = "report-out")]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Default)]
struct Opts {
    /// Experiment config (TOML); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output directory.
    #[arg(long, visible_alias = "report-out")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_profile)]
    profile: Option<Profile>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    fold: Option<usize>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,

    #[arg(long)]
    no_mention: bool,
    #[arg(long)]
    no_local: bool,
    #[arg(long)]
    no_overlap: bool,
    #[arg(long)]
    prev_sents: Option<usize>,
    #[arg(long)]
    all_prev: bool,
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,

    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    ff: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,

    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Group probe scores by predicted rather than gold class.
    #[arg(long)]
    by_predicted: bool,

    #[arg(long)]
    docs: Option<usize>,
    #[arg(long)]
    sentences: Option<usize>,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    match s {
        "paper" => Ok(Profile::Paper),
        "desk" => Ok(Profile::Desk),
        "custom" => Ok(Profile::Custom),
        _ => Err(format!("unknown profile {s:?} (paper | desk | custom)")),
    }
}

fn absolute(p: PathBuf) -> PathBuf {
    std::fs::canonicalize(&p).unwrap_or(p)
}

impl Opts {
    fn into_config(self, command: &str) -> Result<ExperimentConfig, Error> {
        let mut c = match &self.config {
            Some(path) => load_config(path)?,
            None => ExperimentConfig::default(),
        };
        c.command = command.to_string();
        if let Ok(v) = std::env::var(SEED_ENV) {
            c.seed = v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an integer")))?;
        }
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(c.seed, self.seed);
        set!(c.profile, self.profile);
        set!(c.folds, self.folds);
        set!(c.vocab_size, self.vocab_size);
        set!(c.rounds, self.rounds);
        set!(c.output_dir, self.out);
        set!(c.context.max_tokens, self.max_tokens);
        set!(c.context.sliding_window_stride, self.stride);
        set!(c.context.extra_prev_sentences, self.prev_sents);
        set!(c.model.layers, self.layers);
        set!(c.model.heads, self.heads);
        set!(c.model.hidden, self.hidden);
        set!(c.model.ff, self.ff);
        set!(c.model.dropout, self.dropout);
        set!(c.probe.top_k, self.top_k);
        set!(c.synthetic.docs, self.docs);
        set!(c.synthetic.sentences_per_doc, self.sentences);
        if self.fold.is_some() {
            c.fold = self.fold;
        }
        if self.corpus.is_some() {
            c.corpus = self.corpus;
        }
        if self.checkpoint.is_some() {
            c.probe.checkpoint = self.checkpoint;
        }
        c.context.include_mention &= !self.no_mention;
        c.context.include_local_context &= !self.no_local;
        c.context.include_overlap &= !self.no_overlap;
        c.context.all_previous_context |= self.all_prev;
        if self.by_predicted {
            c.probe.group_by = Grouping::Predicted;
        }
        if self.epochs.is_some() {
            c.train.epochs = self.epochs;
        }
        if self.lr.is_some() {
            c.train.learning_rate = self.lr;
        }
        if self.batch_size.is_some() {
            c.train.batch_size = self.batch_size;
        }
        c.corpus = c.corpus.map(absolute);
        c.probe.checkpoint = c.probe.checkpoint.map(absolute);
        Ok(c)
    }
}

/// Usage 2, data 3, runtime 4.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Io { .. } | Error::Schema { .. } | Error::Invariant(_) => 3,
        Error::Budget(_) | Error::Shape(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("{}", serde_json::json!({"error": "config", "exit": 2, "message": "--jobs must be positive"}));
            return ExitCode::from(2);
        }
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let result = match cli.command {
        Command::GenSynthetic(o) => o.into_config("gen-synthetic"),
        Command::BuildVocab(o) => o.into_config("build-vocab"),
        Command::Train(o) => o.into_config("train"),
        Command::CrossValidate(o) => o.into_config("cross-validate"),
        Command::Ablate(o) => o.into_config("ablate"),
        Command::Probe(o) => o.into_config("probe"),
        Command::Run { manifest, out } => load_config(&manifest).map(|mut c| {
            if let Some(out) = out {
                c.output_dir = out;
            }
            c
        }),
    }
    .and_then(commands::execute);
    match result {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("{}", serde_json::json!({"error": e.kind(), "exit": code, "message": e.to_string()}));
            ExitCode::from(code)
        }
    }
}
