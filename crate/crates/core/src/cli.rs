//! Command-line front end.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{self, PoleIntensity};
use crate::baselines::{train_wordfish, train_wordshoal};
use crate::corpus::{self, log_transform, median_doc_length, PreprocessConfig, SparseCorpus};
use crate::error::{Error, Result};
use crate::grad_engine::AdamConfig;
use crate::io::{self, FitDump};
use crate::pf;
use crate::synth;
use crate::tbip::{self, FitResult, Initialization, PriorConfig, TrainConfig};
use crate::vote::train_vote;

pub const RUN_MANIFEST: &str = "run.json";

/// Median document length above which `--log-counts auto` transforms counts.
pub const AUTO_LOG_THRESHOLD: f64 = 100.0;

#[derive(Parser, Debug)]
#[command(name = "tbip", version, about = "Text-based ideal points and baselines")]
pub struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Turn JSON-lines documents into a count corpus
    Preprocess(PreprocessArgs),
    /// Fit a model
    #[command(subcommand)]
    Train(TrainCommand),
    /// Reports on fitted models
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Sample synthetic data with known ground truth
    #[command(subcommand)]
    Synthesize(SynthCommand),
}

#[derive(Args, Debug, Serialize)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.001)]
    pub min_df: f64,
    #[arg(long, default_value_t = 0.3)]
    pub max_df: f64,
    #[arg(long, default_value_t = 10)]
    pub min_authors: usize,
    #[arg(long, default_value_t = 1)]
    pub min_docs_per_author: usize,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub ngrams: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LogCounts {
    Auto,
    On,
    Off,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 512)]
    pub batch: usize,
    #[arg(long, default_value_t = 50_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 100)]
    pub report_interval: usize,
}

impl OptimArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch,
            max_steps: self.steps,
            seed: self.seed,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            mc_samples: self.mc_samples,
            elbo_report_interval: self.report_interval,
            ..TrainConfig::default()
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum TrainCommand {
    /// Text-based ideal point model
    Tbip(TrainTbipArgs),
    /// Poisson factorization (pretraining for tbip)
    Pf(TrainPfArgs),
    /// Vote-based ideal points
    Vote(TrainVoteArgs),
    /// Wordfish on author-pooled counts
    Wordfish(TrainTextArgs),
    /// Wordshoal over debate-labeled documents
    Wordshoal(TrainWordshoalArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct TrainTbipArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, value_enum, default_value_t = LogCounts::Auto)]
    pub log_counts: LogCounts,
    /// Directory of a `train pf` fit to initialize from
    #[arg(long)]
    pub pretrain_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub pretrain_sweeps: usize,
    #[arg(long, default_value_t = 0.3)]
    pub prior_a: f64,
    #[arg(long, default_value_t = 0.3)]
    pub prior_b: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainPfArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, default_value_t = 500)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = LogCounts::Auto)]
    pub log_counts: LogCounts,
    #[arg(long, default_value_t = 0.3)]
    pub prior_a: f64,
    #[arg(long, default_value_t = 0.3)]
    pub prior_b: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainVoteArgs {
    #[arg(long)]
    pub votes: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainTextArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainWordshoalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// CSV of doc_index,debate_id
    #[arg(long)]
    pub debates: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Subcommand, Debug)]
pub enum AnalyzeCommand {
    /// Top terms per topic at both poles and at the neutral position
    Topics(TopicsArgs),
    /// Correlate fitted ideal points with a reference
    Compare(CompareArgs),
    /// Likelihood ratios of one document under alternative ideal points
    Influence(InfluenceArgs),
    /// Standardize and sign-align ideal points
    Align(AlignArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct TopicsArgs {
    #[arg(long)]
    pub fit: PathBuf,
    /// Corpus directory holding the vocabulary
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Use exact variational expectations instead of plug-in means
    #[arg(long)]
    pub exact: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct CompareArgs {
    /// Fit directories to compare (any model kind)
    #[arg(long = "fit", required = true)]
    pub fits: Vec<PathBuf>,
    /// Reference ideal points as name,score CSV
    #[arg(long, conflicts_with = "truth", required_unless_present = "truth")]
    pub reference: Option<PathBuf>,
    /// Truth JSON written by `synthesize`
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct InfluenceArgs {
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub doc: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct AlignArgs {
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    TwoCluster,
    Uniform,
}

impl From<Layout> for synth::IdealPointLayout {
    fn from(l: Layout) -> Self {
        match l {
            Layout::TwoCluster => synth::IdealPointLayout::TwoCluster,
            Layout::Uniform => synth::IdealPointLayout::Uniform,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum SynthCommand {
    /// Text corpus from the ideal point topic model
    Tbip(SynthTbipArgs),
    /// Roll-call votes
    Votes(SynthVotesArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct SynthTbipArgs {
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub docs: usize,
    #[arg(long, default_value_t = 300)]
    pub terms: usize,
    #[arg(long, default_value_t = 20)]
    pub authors: usize,
    #[arg(long, default_value_t = 5)]
    pub topics: usize,
    #[arg(long, default_value_t = 1.0)]
    pub polarity: f64,
    #[arg(long, value_enum, default_value_t = Layout::TwoCluster)]
    pub layout: Layout,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct SynthVotesArgs {
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub lawmakers: usize,
    #[arg(long, default_value_t = 300)]
    pub bills: usize,
    #[arg(long, value_enum, default_value_t = Layout::TwoCluster)]
    pub layout: Layout,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Record of one successful command invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical JSON of all options except output paths
    pub config_hash: String,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub output_dir: String,
    pub wall_time_secs: f64,
    pub final_elbo: Option<f64>,
}

pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("options serialize");
    hex::encode(Sha256::digest(&json))
}

pub fn read_run_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(RUN_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.line(), e.to_string()))
}

struct Outcome {
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    final_elbo: Option<f64>,
}

fn finish<T: Serialize>(command: &str, config: &T, out: &Path, started: Instant, outcome: Outcome) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        config_hash: config_hash(config),
        seed: outcome.seed,
        inputs: io::path_list(&outcome.inputs),
        output_dir: out.display().to_string(),
        wall_time_secs: started.elapsed().as_secs_f64(),
        final_elbo: outcome.final_elbo,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    io::write_atomic(&out.join(RUN_MANIFEST), &json)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn last_elbo(trace: &[(usize, f64)]) -> Option<f64> {
    trace.last().map(|&(_, e)| e)
}

/// Parse arguments from the process and run. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?
            .install(|| dispatch(cli.command)),
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<()> {
    let started = Instant::now();
    match command {
        Command::Preprocess(a) => cmd_preprocess(&a, started),
        Command::Train(t) => match t {
            TrainCommand::Tbip(a) => cmd_train_tbip(&a, started),
            TrainCommand::Pf(a) => cmd_train_pf(&a, started),
            TrainCommand::Vote(a) => cmd_train_vote(&a, started),
            TrainCommand::Wordfish(a) => cmd_train_wordfish(&a, started),
            TrainCommand::Wordshoal(a) => cmd_train_wordshoal(&a, started),
        },
        Command::Analyze(c) => match c {
            AnalyzeCommand::Topics(a) => cmd_topics(&a, started),
            AnalyzeCommand::Compare(a) => cmd_compare(&a, started),
            AnalyzeCommand::Influence(a) => cmd_influence(&a, started),
            AnalyzeCommand::Align(a) => cmd_align(&a, started),
        },
        Command::Synthesize(c) => match c {
            SynthCommand::Tbip(a) => cmd_synth_tbip(&a, started),
            SynthCommand::Votes(a) => cmd_synth_votes(&a, started),
        },
    }
}

pub fn cmd_preprocess(a: &PreprocessArgs, started: Instant) -> Result<()> {
    let docs = io::read_jsonl(&a.input)?;
    let mut inputs = vec![a.input.clone()];
    let stopwords: BTreeSet<String> = match &a.stopwords {
        Some(p) => {
            inputs.push(p.clone());
            fs::read_to_string(p)
                .map_err(|e| Error::io(p, e))?
                .lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect()
        }
        None => BTreeSet::new(),
    };
    let cfg = PreprocessConfig {
        min_doc_frequency: a.min_df,
        max_doc_frequency: a.max_df,
        min_authors_per_term: a.min_authors,
        min_docs_per_author: a.min_docs_per_author,
        stopwords,
        max_ngram: a.ngrams,
    };
    let (corpus, vocab) = corpus::build_corpus(&docs, &cfg)?;
    let weights = corpus::compute_weights(&corpus)?;
    io::write_corpus_dir(&a.out, &corpus, &vocab, Some(&weights))?;
    println!(
        "{} documents, {} terms, {} authors",
        corpus.num_docs(),
        corpus.num_terms(),
        corpus.num_authors()
    );
    finish(
        "preprocess",
        a,
        &a.out,
        started,
        Outcome {
            seed: None,
            inputs,
            final_elbo: None,
        },
    )
}

fn resolve_log_counts(mode: LogCounts, corpus: &SparseCorpus) -> bool {
    match mode {
        LogCounts::On => true,
        LogCounts::Off => false,
        LogCounts::Auto => median_doc_length(corpus) > AUTO_LOG_THRESHOLD,
    }
}

pub fn cmd_train_tbip(a: &TrainTbipArgs, started: Instant) -> Result<()> {
    let (corpus, _) = io::read_corpus_dir(&a.corpus)?;
    let cfg = TrainConfig {
        num_topics: a.k,
        use_log_transform: resolve_log_counts(a.log_counts, &corpus),
        pretrain_sweeps: a.pretrain_sweeps,
        ..a.optim.config()
    };
    let priors = PriorConfig {
        a: a.prior_a,
        b: a.prior_b,
    };
    let mut inputs = vec![a.corpus.clone()];
    let init = match &a.pretrain_dir {
        Some(dir) => {
            inputs.push(dir.clone());
            let dump = io::read_fit_dump(dir)?;
            if dump.kind != "pf" {
                return Err(Error::Invalid(format!("{} is not a pf fit", dir.display())));
            }
            Some(Initialization {
                theta: dump.array("theta")?.data.clone(),
                beta: dump.array("beta")?.data.clone(),
            })
        }
        None => None,
    };
    let fit = tbip::train_tbip(&corpus, &cfg, &priors, init.as_ref())?;
    io::write_fit(&a.out, &fit)?;
    finish(
        "train tbip",
        a,
        &a.out,
        started,
        Outcome {
            seed: Some(a.optim.seed),
            inputs,
            final_elbo: last_elbo(&fit.elbo_trace),
        },
    )
}

pub fn cmd_train_pf(a: &TrainPfArgs, started: Instant) -> Result<()> {
    let (corpus, _) = io::read_corpus_dir(&a.corpus)?;
    let transformed = resolve_log_counts(a.log_counts, &corpus);
    let corpus = if transformed { log_transform(&corpus) } else { corpus };
    PriorConfig {
        a: a.prior_a,
        b: a.prior_b,
    }
    .validate()?;
    let fit = pf::pretrain(&corpus, a.k, a.prior_a, a.prior_b, a.sweeps, a.seed)?;
    let trace = fit.elbo_trace.clone();
    let (d, v, k) = (corpus.num_docs(), corpus.num_terms(), a.k);
    let mut dump = FitDump {
        kind: "pf".into(),
        seed: a.seed,
        dims: dims(&[("docs", d), ("terms", v), ("topics", k)]),
        config: serde_json::json!({ "sweeps": a.sweeps, "a": a.prior_a, "b": a.prior_b, "log_transform": transformed }),
        author_names: corpus.author_names().to_vec(),
        arrays: BTreeMap::new(),
        elbo_trace: trace,
    };
    dump.insert("theta", vec![d, k], fit.theta);
    dump.insert("beta", vec![k, v], fit.beta);
    io::write_fit_dump(&a.out, &dump)?;
    finish(
        "train pf",
        a,
        &a.out,
        started,
        Outcome {
            seed: Some(a.seed),
            inputs: vec![a.corpus.clone()],
            final_elbo: last_elbo(&dump.elbo_trace),
        },
    )
}

fn dims(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
    pairs.iter().map(|&(n, x)| (n.to_string(), x)).collect()
}

pub fn cmd_train_vote(a: &TrainVoteArgs, started: Instant) -> Result<()> {
    let votes = io::read_votes(&a.votes)?;
    let cfg = a.optim.config();
    let fit = train_vote(&votes, &cfg)?;
    let (ni, nj) = (votes.num_lawmakers(), votes.num_bills());
    let mut dump = FitDump {
        kind: "vote".into(),
        seed: cfg.seed,
        dims: dims(&[("lawmakers", ni), ("bills", nj)]),
        config: serde_json::json!({ "train": cfg, "bill_ids": votes.bill_ids() }),
        author_names: votes.lawmaker_names().to_vec(),
        arrays: BTreeMap::new(),
        elbo_trace: fit.elbo_trace,
    };
    dump.insert("x", vec![ni], fit.x_hat);
    dump.insert("alpha", vec![nj], fit.alpha_hat);
    dump.insert("eta", vec![nj], fit.eta_hat);
    io::write_fit_dump(&a.out, &dump)?;
    finish(
        "train vote",
        a,
        &a.out,
        started,
        Outcome {
            seed: Some(cfg.seed),
            inputs: vec![a.votes.clone()],
            final_elbo: last_elbo(&dump.elbo_trace),
        },
    )
}

pub fn cmd_train_wordfish(a: &TrainTextArgs, started: Instant) -> Result<()> {
    let (corpus, _) = io::read_corpus_dir(&a.corpus)?;
    let cfg = a.optim.config();
    let fit = train_wordfish(&corpus, &cfg)?;
    let (ns, nv) = (corpus.num_authors(), corpus.num_terms());
    let mut dump = FitDump {
        kind: "wordfish".into(),
        seed: cfg.seed,
        dims: dims(&[("authors", ns), ("terms", nv)]),
        config: serde_json::json!({ "train": cfg }),
        author_names: corpus.author_names().to_vec(),
        arrays: BTreeMap::new(),
        elbo_trace: fit.elbo_trace,
    };
    dump.insert("x", vec![ns], fit.x_hat);
    dump.insert("alpha", vec![ns], fit.alpha_hat);
    dump.insert("psi", vec![nv], fit.psi_hat);
    dump.insert("b", vec![nv], fit.b_hat);
    io::write_fit_dump(&a.out, &dump)?;
    finish(
        "train wordfish",
        a,
        &a.out,
        started,
        Outcome {
            seed: Some(cfg.seed),
            inputs: vec![a.corpus.clone()],
            final_elbo: last_elbo(&dump.elbo_trace),
        },
    )
}

pub fn cmd_train_wordshoal(a: &TrainWordshoalArgs, started: Instant) -> Result<()> {
    let (corpus, _) = io::read_corpus_dir(&a.corpus)?;
    let data = io::read_debates(&a.debates, corpus)?;
    let cfg = a.optim.config();
    let fit = train_wordshoal(&data, &cfg)?;
    let names = data.corpus.author_names();
    let debates: Vec<serde_json::Value> = fit
        .debates
        .iter()
        .map(|d| {
            serde_json::json!({
                "debate": d.debate,
                "authors": d.authors.iter().map(|&s| &names[s]).collect::<Vec<_>>(),
                "positions": d.positions,
            })
        })
        .collect();
    let ns = names.len();
    let mut dump = FitDump {
        kind: "wordshoal".into(),
        seed: cfg.seed,
        dims: dims(&[("authors", ns), ("debates", fit.debates.len())]),
        config: serde_json::json!({ "train": cfg, "debates": debates }),
        author_names: names.to_vec(),
        arrays: BTreeMap::new(),
        elbo_trace: fit.elbo_trace,
    };
    dump.insert("x", vec![ns], fit.x_hat);
    io::write_fit_dump(&a.out, &dump)?;
    finish(
        "train wordshoal",
        a,
        &a.out,
        started,
        Outcome {
            seed: Some(cfg.seed),
            inputs: vec![a.corpus.clone(), a.debates.clone()],
            final_elbo: last_elbo(&dump.elbo_trace),
        },
    )
}

pub fn cmd_topics(a: &TopicsArgs, started: Instant) -> Result<()> {
    let fit = io::read_fit(&a.fit)?;
    let (_, vocab) = io::read_corpus_dir(&a.corpus)?;
    let mode = if a.exact {
        PoleIntensity::Exact
    } else {
        PoleIntensity::PlugIn
    };
    let report = analysis::topic_report(&fit, &vocab, a.top, mode)?;
    ensure_dir(&a.out)?;
    let md = report.to_markdown();
    io::write_atomic(&a.out.join("topics.md"), md.as_bytes())?;
    let json = serde_json::to_vec_pretty(&report).expect("report serializes");
    io::write_atomic(&a.out.join("topics.json"), &json)?;
    print!("{md}");
    finish(
        "analyze topics",
        a,
        &a.out,
        started,
        Outcome {
            seed: None,
            inputs: vec![a.fit.clone(), a.corpus.clone()],
            final_elbo: None,
        },
    )
}

/// Truth file written by `synthesize`: author names and true ideal points.
#[derive(Debug, Serialize, Deserialize)]
pub struct TruthFile {
    pub author_names: Vec<String>,
    pub x: Vec<f64>,
    #[serde(default)]
    pub spec: serde_json::Value,
    #[serde(default)]
    pub latent: serde_json::Value,
}

fn read_truth(path: &Path) -> Result<TruthFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let truth: TruthFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    if truth.author_names.len() != truth.x.len() {
        return Err(Error::ShapeMismatch(format!(
            "{}: names and x differ in length",
            path.display()
        )));
    }
    Ok(truth)
}

fn read_reference(reference: Option<&PathBuf>, truth: Option<&PathBuf>) -> Result<(PathBuf, Vec<(String, f64)>)> {
    match (reference, truth) {
        (Some(p), _) => Ok((p.clone(), io::read_scores(p)?)),
        (None, Some(p)) => {
            let t = read_truth(p)?;
            Ok((p.clone(), t.author_names.into_iter().zip(t.x).collect()))
        }
        (None, None) => Err(Error::Invalid("a reference or truth file is required".into())),
    }
}

/// Reference scores reordered to follow `names`; every name must be present.
fn match_reference(names: &[String], reference: &[(String, f64)]) -> Result<Vec<f64>> {
    let lookup: HashMap<&str, f64> = reference.iter().map(|(n, s)| (n.as_str(), *s)).collect();
    let missing: Vec<&str> = names
        .iter()
        .map(String::as_str)
        .filter(|n| !lookup.contains_key(n))
        .collect();
    if !missing.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} of {} fitted authors have no reference score (e.g. {:?})",
            missing.len(),
            names.len(),
            missing[0]
        )));
    }
    Ok(names.iter().map(|n| lookup[n.as_str()]).collect())
}

fn fit_label(path: &Path, used: &mut BTreeSet<String>) -> String {
    let base = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "fit".into());
    let mut label = base.clone();
    let mut i = 2;
    while !used.insert(label.clone()) {
        label = format!("{base}_{i}");
        i += 1;
    }
    label
}

pub fn cmd_compare(a: &CompareArgs, started: Instant) -> Result<()> {
    let (ref_path, reference) = read_reference(a.reference.as_ref(), a.truth.as_ref())?;
    ensure_dir(&a.out)?;
    let mut table = String::from("| Fit | Kind | Pearson | Spearman |\n|---|---|---|---|\n");
    let mut used = BTreeSet::new();
    let mut rows = Vec::new();
    for path in &a.fits {
        let dump = io::read_fit_dump(path)?;
        let (names, x) = io::fit_ideal_points(&dump)?;
        let r = match_reference(&names, &reference)?;
        let aligned = analysis::align(&x, Some(&r))?;
        let c = analysis::compare(&aligned.values, &r)?;
        let label = fit_label(path, &mut used);
        io::write_scores(
            &a.out.join(format!("ideal_points_{label}.csv")),
            &names,
            &aligned.values,
        )?;
        table.push_str(&format!(
            "| {label} | {} | {:.3} | {:.3} |\n",
            dump.kind, c.pearson, c.spearman
        ));
        println!("{label}: pearson {:.3} spearman {:.3}", c.pearson, c.spearman);
        rows.push(serde_json::json!({ "fit": label, "kind": dump.kind, "pearson": c.pearson, "spearman": c.spearman }));
    }
    let (ref_names, ref_scores): (Vec<String>, Vec<f64>) = reference.into_iter().unzip();
    io::write_scores(&a.out.join("reference.csv"), &ref_names, &ref_scores)?;
    io::write_atomic(&a.out.join("table.md"), table.as_bytes())?;
    let json = serde_json::to_vec_pretty(&rows).expect("rows serialize");
    io::write_atomic(&a.out.join("table.json"), &json)?;
    let mut inputs = a.fits.clone();
    inputs.push(ref_path);
    finish(
        "analyze compare",
        a,
        &a.out,
        started,
        Outcome {
            seed: None,
            inputs,
            final_elbo: None,
        },
    )
}

pub fn cmd_influence(a: &InfluenceArgs, started: Instant) -> Result<()> {
    let fit: FitResult = io::read_fit(&a.fit)?;
    let (corpus, _) = io::read_corpus_dir(&a.corpus)?;
    let corpus = if fit.config.use_log_transform {
        log_transform(&corpus)
    } else {
        corpus
    };
    let score = analysis::influence(&fit, &corpus, a.doc)?;
    ensure_dir(&a.out)?;
    let json = serde_json::to_vec_pretty(&score).expect("score serializes");
    io::write_atomic(&a.out.join("influence.json"), &json)?;
    println!(
        "doc {}: vs_zero {} vs_max {} vs_min {}",
        score.doc, score.ratio_vs_zero, score.ratio_vs_max, score.ratio_vs_min
    );
    finish(
        "analyze influence",
        a,
        &a.out,
        started,
        Outcome {
            seed: None,
            inputs: vec![a.fit.clone(), a.corpus.clone()],
            final_elbo: None,
        },
    )
}

pub fn cmd_align(a: &AlignArgs, started: Instant) -> Result<()> {
    let dump = io::read_fit_dump(&a.fit)?;
    let (names, x) = io::fit_ideal_points(&dump)?;
    let mut inputs = vec![a.fit.clone()];
    let reference = match &a.reference {
        Some(p) => {
            inputs.push(p.clone());
            Some(match_reference(&names, &io::read_scores(p)?)?)
        }
        None => None,
    };
    let aligned = analysis::align(&x, reference.as_deref())?;
    ensure_dir(&a.out)?;
    io::write_scores(&a.out.join("ideal_points.csv"), &names, &aligned.values)?;
    println!("sign flipped: {}", aligned.sign_flipped);
    finish(
        "analyze align",
        a,
        &a.out,
        started,
        Outcome {
            seed: None,
            inputs,
            final_elbo: None,
        },
    )
}

fn write_truth<S: Serialize, L: Serialize>(
    path: &Path,
    names: &[String],
    x: &[f64],
    spec: &S,
    latent: &L,
) -> Result<()> {
    let truth = TruthFile {
        author_names: names.to_vec(),
        x: x.to_vec(),
        spec: serde_json::to_value(spec).expect("spec serializes"),
        latent: serde_json::to_value(latent).expect("truth serializes"),
    };
    io::write_atomic(path, &serde_json::to_vec_pretty(&truth).expect("truth serializes"))
}

pub fn cmd_synth_tbip(a: &SynthTbipArgs, started: Instant) -> Result<()> {
    let spec = synth::SynthSpec {
        num_docs: a.docs,
        num_terms: a.terms,
        num_authors: a.authors,
        num_topics: a.topics,
        layout: a.layout.into(),
        polarity_scale: a.polarity,
        seed: a.seed,
        ..synth::SynthSpec::default()
    };
    let (corpus, truth) = synth::sample_tbip(&spec)?;
    let vocab = corpus::Vocabulary::new((0..corpus.num_terms()).map(|v| format!("term_{v:04}")).collect())?;
    let weights = corpus::compute_weights(&corpus)?;
    io::write_corpus_dir(&a.out, &corpus, &vocab, Some(&weights))?;
    write_truth(
        &a.out.join("truth.json"),
        corpus.author_names(),
        &truth.x,
        &spec,
        &truth,
    )?;
    finish(
        "synthesize tbip",
        a,
        &a.out,
        started,
        Outcome {
            seed: Some(a.seed),
            inputs: Vec::new(),
            final_elbo: None,
        },
    )
}

pub fn cmd_synth_votes(a: &SynthVotesArgs, started: Instant) -> Result<()> {
    let spec = synth::VoteSynthSpec {
        num_lawmakers: a.lawmakers,
        num_bills: a.bills,
        layout: a.layout.into(),
        seed: a.seed,
        ..synth::VoteSynthSpec::default()
    };
    let (votes, truth) = synth::sample_votes(&spec)?;
    ensure_dir(&a.out)?;
    io::write_votes(&a.out.join("votes.csv"), &votes)?;
    write_truth(
        &a.out.join("truth.json"),
        votes.lawmaker_names(),
        &truth.x,
        &spec,
        &truth,
    )?;
    finish(
        "synthesize votes",
        a,
        &a.out,
        started,
        Outcome {
            seed: Some(a.seed),
            inputs: Vec::new(),
            final_elbo: None,
        },
    )
}
