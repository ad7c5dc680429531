//! On-disk formats.
//!
//! * Corpus directory: `counts.txt` (`doc term count` per line, 0-based),
//!   `vocab.txt` (one term per line), `authors.csv` (`doc_index,author_name`)
//!   and optionally `weights.csv` (`author_name,weight`).
//! * Fit directory: `manifest.json` describing every array, one flat
//!   little-endian `f64` row-major `<name>.bin` per array, and `elbo.csv`.
//! * Votes: CSV `lawmaker_name,bill_id,vote` with vote `1` (yea) or `0`
//!   (nay); any other code is skipped.
//! * Ideal points: CSV `name,score`.
//! * Debate labels: CSV `doc_index,debate_id`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::DebateLabeledCorpus;
use crate::corpus::{RawDocument, SparseCorpus, VerbosityWeights, Vocabulary};
use crate::error::{Error, Result};
use crate::tbip::{FitResult, PriorConfig, TrainConfig, VariationalScales};
use crate::vote::VoteMatrix;

pub const COUNTS_FILE: &str = "counts.txt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const AUTHORS_FILE: &str = "authors.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const FIT_MANIFEST: &str = "manifest.json";
pub const ELBO_FILE: &str = "elbo.csv";

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

/// Write `contents` to a sibling temp file then rename it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn parse_num<T: std::str::FromStr>(s: &str, path: &Path, line: usize, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {what} {s:?}")))
}

/// Documents from JSON lines with fields `id`, `author`, `text`.
pub fn read_jsonl(path: &Path) -> Result<Vec<RawDocument>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e.to_string())))
        .collect()
}

pub fn write_corpus_dir(
    dir: &Path,
    corpus: &SparseCorpus,
    vocab: &Vocabulary,
    weights: Option<&VerbosityWeights>,
) -> Result<()> {
    create_dir(dir)?;
    write_text(&dir.join(COUNTS_FILE), |w| {
        for (d, v, c) in corpus.entries() {
            writeln!(w, "{d} {v} {c}")?;
        }
        Ok(())
    })?;
    write_text(&dir.join(VOCAB_FILE), |w| {
        for t in vocab.terms() {
            writeln!(w, "{t}")?;
        }
        Ok(())
    })?;
    write_text(&dir.join(AUTHORS_FILE), |w| {
        for (d, &a) in corpus.authors().iter().enumerate() {
            writeln!(w, "{d},{}", corpus.author_names()[a])?;
        }
        Ok(())
    })?;
    if let Some(weights) = weights {
        write_weights(&dir.join(WEIGHTS_FILE), corpus.author_names(), weights)?;
    }
    Ok(())
}

pub fn write_weights(path: &Path, names: &[String], weights: &VerbosityWeights) -> Result<()> {
    write_text(path, |w| {
        for (name, wt) in names.iter().zip(weights.as_slice()) {
            writeln!(w, "{name},{wt}")?;
        }
        Ok(())
    })
}

/// Read a corpus directory. Authors are indexed in order of first
/// appearance in `authors.csv`.
pub fn read_corpus_dir(dir: &Path) -> Result<(SparseCorpus, Vocabulary)> {
    let vocab_path = dir.join(VOCAB_FILE);
    let vocab = Vocabulary::new(read_lines(&vocab_path)?)?;

    let authors_path = dir.join(AUTHORS_FILE);
    let mut author_index: HashMap<String, usize> = HashMap::new();
    let mut names = Vec::new();
    let mut labels: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, line) in read_lines(&authors_path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (doc, name) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(&authors_path, i + 1, "expected doc_index,author_name"))?;
        let doc: usize = parse_num(doc, &authors_path, i + 1, "document index")?;
        let next = names.len();
        let a = *author_index.entry(name.to_string()).or_insert_with(|| {
            names.push(name.to_string());
            next
        });
        if labels.insert(doc, a).is_some() {
            return Err(Error::parse(
                &authors_path,
                i + 1,
                format!("document {doc} labeled twice"),
            ));
        }
    }
    let num_docs = labels.len();
    if labels.keys().enumerate().any(|(i, &d)| i != d) {
        return Err(Error::Invalid(format!(
            "{}: document indices must cover 0..{num_docs}",
            authors_path.display()
        )));
    }
    let author_of: Vec<usize> = labels.into_values().collect();

    let counts_path = dir.join(COUNTS_FILE);
    let mut entries = Vec::new();
    for (i, line) in read_lines(&counts_path)?.iter().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            [d, v, c] => entries.push((
                parse_num(d, &counts_path, i + 1, "document index")?,
                parse_num(v, &counts_path, i + 1, "term index")?,
                parse_num(c, &counts_path, i + 1, "count")?,
            )),
            _ => return Err(Error::parse(&counts_path, i + 1, "expected `doc term count`")),
        }
    }
    let corpus = SparseCorpus::from_entries(num_docs, vocab.len(), entries, author_of, names)?;
    Ok((corpus, vocab))
}

/// `name,score` rows; a header row whose score is not numeric is skipped.
pub fn read_scores(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (name, score) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::parse(path, i + 1, "expected name,score"))?;
        match score.trim().parse::<f64>() {
            Ok(s) => out.push((name.to_string(), s)),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Error::parse(path, i + 1, format!("invalid score {score:?}"))),
        }
    }
    Ok(out)
}

pub fn write_scores(path: &Path, names: &[String], scores: &[f64]) -> Result<()> {
    write_text(path, |w| {
        writeln!(w, "name,score")?;
        for (n, s) in names.iter().zip(scores) {
            writeln!(w, "{n},{s}")?;
        }
        Ok(())
    })
}

/// Votes CSV. A leading header row is skipped; codes other than 1 and 0
/// are dropped.
pub fn read_votes(path: &Path) -> Result<VoteMatrix> {
    let mut lawmakers: HashMap<String, usize> = HashMap::new();
    let mut bills: HashMap<String, usize> = HashMap::new();
    let mut names = Vec::new();
    let mut bill_ids = Vec::new();
    let mut entries = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if line.trim().is_empty() || (i == 0 && fields.first() == Some(&"lawmaker_name")) {
            continue;
        }
        let [name, bill, vote] = fields.as_slice() else {
            return Err(Error::parse(path, i + 1, "expected lawmaker_name,bill_id,vote"));
        };
        let yea = match *vote {
            "1" => true,
            "0" => false,
            _ => continue,
        };
        let next = names.len();
        let li = *lawmakers.entry(name.to_string()).or_insert_with(|| {
            names.push(name.to_string());
            next
        });
        let next = bill_ids.len();
        let bj = *bills.entry(bill.to_string()).or_insert_with(|| {
            bill_ids.push(bill.to_string());
            next
        });
        entries.push((li, bj, yea));
    }
    VoteMatrix::new(names, bill_ids, &entries)
}

pub fn write_votes(path: &Path, votes: &VoteMatrix) -> Result<()> {
    write_text(path, |w| {
        writeln!(w, "lawmaker_name,bill_id,vote")?;
        for (i, j, yea) in votes.entries() {
            writeln!(w, "{},{},{}", votes.lawmaker_names()[i], votes.bill_ids()[j], yea as u8)?;
        }
        Ok(())
    })
}

pub fn read_debates(path: &Path, corpus: SparseCorpus) -> Result<DebateLabeledCorpus> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut names = Vec::new();
    let mut labels = vec![None; corpus.num_docs()];
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (doc, debate) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, i + 1, "expected doc_index,debate_id"))?;
        let doc: usize = match doc.trim().parse() {
            Ok(d) => d,
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Error::parse(path, i + 1, format!("invalid document index {doc:?}"))),
        };
        if doc >= labels.len() {
            return Err(Error::parse(path, i + 1, format!("document {doc} out of range")));
        }
        let next = names.len();
        let j = *index.entry(debate.trim().to_string()).or_insert_with(|| {
            names.push(debate.trim().to_string());
            next
        });
        labels[doc] = Some(j);
    }
    let debate_of = labels
        .into_iter()
        .enumerate()
        .map(|(d, l)| l.ok_or_else(|| Error::Invalid(format!("document {d} has no debate label"))))
        .collect::<Result<Vec<_>>>()?;
    DebateLabeledCorpus::new(corpus, debate_of, names)
}

pub fn write_debates(path: &Path, data: &DebateLabeledCorpus) -> Result<()> {
    write_text(path, |w| {
        writeln!(w, "doc_index,debate_id")?;
        for (d, &j) in data.debate_of.iter().enumerate() {
            writeln!(w, "{d},{}", data.debate_names[j])?;
        }
        Ok(())
    })
}

/// A named, shaped array of a fit dump.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ArrayEntry {
    shape: Vec<usize>,
    file: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FitManifest {
    kind: String,
    seed: u64,
    dims: BTreeMap<String, usize>,
    config: serde_json::Value,
    author_names: Vec<String>,
    arrays: BTreeMap<String, ArrayEntry>,
}

/// Model-agnostic fit directory contents.
#[derive(Clone, Debug, PartialEq)]
pub struct FitDump {
    pub kind: String,
    pub seed: u64,
    pub dims: BTreeMap<String, usize>,
    pub config: serde_json::Value,
    pub author_names: Vec<String>,
    pub arrays: BTreeMap<String, NamedArray>,
    pub elbo_trace: Vec<(usize, f64)>,
}

impl FitDump {
    pub fn array(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("fit of kind {:?} has no array {name:?}", self.kind)))
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.arrays.insert(name.to_string(), NamedArray { shape, data });
    }
}

pub fn write_fit_dump(dir: &Path, dump: &FitDump) -> Result<()> {
    create_dir(dir)?;
    let mut arrays = BTreeMap::new();
    for (name, arr) in &dump.arrays {
        let file = format!("{name}.bin");
        let bytes: Vec<u8> = arr.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        write_atomic(&dir.join(&file), &bytes)?;
        arrays.insert(
            name.clone(),
            ArrayEntry {
                shape: arr.shape.clone(),
                file,
            },
        );
    }
    write_text(&dir.join(ELBO_FILE), |w| {
        writeln!(w, "step,elbo")?;
        for (s, e) in &dump.elbo_trace {
            writeln!(w, "{s},{e}")?;
        }
        Ok(())
    })?;
    let manifest = FitManifest {
        kind: dump.kind.clone(),
        seed: dump.seed,
        dims: dump.dims.clone(),
        config: dump.config.clone(),
        author_names: dump.author_names.clone(),
        arrays,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&dir.join(FIT_MANIFEST), &json)
}

pub fn read_fit_dump(dir: &Path) -> Result<FitDump> {
    let path = dir.join(FIT_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: FitManifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.line(), e.to_string()))?;
    let mut arrays = BTreeMap::new();
    for (name, entry) in manifest.arrays {
        let p = dir.join(&entry.file);
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        let expected: usize = entry.shape.iter().product();
        if bytes.len() != expected * 8 {
            return Err(Error::ShapeMismatch(format!(
                "{} holds {} bytes, shape {:?} needs {}",
                p.display(),
                bytes.len(),
                entry.shape,
                expected * 8
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        arrays.insert(
            name,
            NamedArray {
                shape: entry.shape,
                data,
            },
        );
    }
    let elbo_path = dir.join(ELBO_FILE);
    let mut elbo_trace = Vec::new();
    if elbo_path.exists() {
        for (i, line) in read_lines(&elbo_path)?.iter().enumerate().skip(1) {
            if let Some((s, e)) = line.split_once(',') {
                elbo_trace.push((
                    parse_num(s, &elbo_path, i + 1, "step")?,
                    parse_num(e, &elbo_path, i + 1, "ELBO")?,
                ));
            }
        }
    }
    Ok(FitDump {
        kind: manifest.kind,
        seed: manifest.seed,
        dims: manifest.dims,
        config: manifest.config,
        author_names: manifest.author_names,
        arrays,
        elbo_trace,
    })
}

#[derive(Serialize, Deserialize)]
struct TbipConfigSnapshot {
    train: TrainConfig,
    priors: PriorConfig,
}

impl From<&FitResult> for FitDump {
    fn from(fit: &FitResult) -> Self {
        let (d, v, k, s) = (fit.num_docs, fit.num_terms, fit.num_topics, fit.num_authors());
        let mut dump = FitDump {
            kind: "tbip".into(),
            seed: fit.config.seed,
            dims: [("docs", d), ("terms", v), ("topics", k), ("authors", s)]
                .into_iter()
                .map(|(n, x)| (n.to_string(), x))
                .collect(),
            config: serde_json::to_value(TbipConfigSnapshot {
                train: fit.config.clone(),
                priors: fit.priors,
            })
            .expect("config serializes"),
            author_names: fit.author_names.clone(),
            arrays: BTreeMap::new(),
            elbo_trace: fit.elbo_trace.clone(),
        };
        dump.insert("theta", vec![d, k], fit.theta_hat.clone());
        dump.insert("beta", vec![k, v], fit.beta_hat.clone());
        dump.insert("eta", vec![k, v], fit.eta_hat.clone());
        dump.insert("x", vec![s], fit.x_hat.clone());
        if let Some(sc) = &fit.scales {
            dump.insert("beta_mu", vec![k, v], sc.beta_mu.clone());
            dump.insert("beta_sigma", vec![k, v], sc.beta_sigma.clone());
            dump.insert("eta_sigma", vec![k, v], sc.eta_sigma.clone());
        }
        dump
    }
}

impl TryFrom<FitDump> for FitResult {
    type Error = Error;

    fn try_from(dump: FitDump) -> Result<Self> {
        if dump.kind != "tbip" {
            return Err(Error::Invalid(format!("expected a tbip fit, found {:?}", dump.kind)));
        }
        let snapshot: TbipConfigSnapshot =
            serde_json::from_value(dump.config.clone()).map_err(|e| Error::Invalid(format!("fit config: {e}")))?;
        let theta = dump.array("theta")?;
        let beta = dump.array("beta")?;
        let (d, k) = (theta.shape[0], theta.shape[1]);
        let v = beta.shape[1];
        let take = |n: &str| dump.arrays.get(n).map(|a| a.data.clone());
        let scales = match (take("beta_mu"), take("beta_sigma"), take("eta_sigma")) {
            (Some(beta_mu), Some(beta_sigma), Some(eta_sigma)) => Some(VariationalScales {
                beta_mu,
                beta_sigma,
                eta_sigma,
            }),
            _ => None,
        };
        let fit = FitResult {
            num_docs: d,
            num_terms: v,
            num_topics: k,
            theta_hat: theta.data.clone(),
            beta_hat: beta.data.clone(),
            eta_hat: dump.array("eta")?.data.clone(),
            x_hat: dump.array("x")?.data.clone(),
            author_names: dump.author_names.clone(),
            elbo_trace: dump.elbo_trace.clone(),
            config: snapshot.train,
            priors: snapshot.priors,
            scales,
        };
        if fit.eta_hat.len() != k * v || fit.x_hat.len() != fit.author_names.len() {
            return Err(Error::ShapeMismatch("fit arrays are inconsistent".into()));
        }
        Ok(fit)
    }
}

pub fn write_fit(dir: &Path, fit: &FitResult) -> Result<()> {
    write_fit_dump(dir, &FitDump::from(fit))
}

pub fn read_fit(dir: &Path) -> Result<FitResult> {
    FitResult::try_from(read_fit_dump(dir)?)
}

/// Ideal points and author names of any fit kind.
pub fn fit_ideal_points(dump: &FitDump) -> Result<(Vec<String>, Vec<f64>)> {
    let x = dump.array("x")?;
    if x.data.len() != dump.author_names.len() {
        return Err(Error::ShapeMismatch("ideal points do not match author names".into()));
    }
    Ok((dump.author_names.clone(), x.data.clone()))
}

pub fn path_list(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}
