//! Document ingestion, vocabulary construction and sparse count matrices.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One raw input document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawDocument {
    #[serde(rename = "id")]
    pub doc_id: String,
    #[serde(rename = "author")]
    pub author_id: String,
    pub text: String,
}

/// Ordered list of terms with a reverse index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(terms: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate vocabulary term {t:?}")));
            }
        }
        Ok(Vocabulary { terms, index })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

/// Document-by-term count matrix in compressed row form, with the author of
/// every document.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCorpus {
    num_terms: usize,
    row_ptr: Vec<usize>,
    terms: Vec<usize>,
    counts: Vec<u32>,
    author_of: Vec<usize>,
    author_names: Vec<String>,
}

impl SparseCorpus {
    /// Build from `(doc, term, count)` triples. Zero counts are dropped and
    /// duplicate `(doc, term)` pairs are rejected.
    pub fn from_entries(
        num_docs: usize,
        num_terms: usize,
        entries: impl IntoIterator<Item = (usize, usize, u32)>,
        author_of: Vec<usize>,
        author_names: Vec<String>,
    ) -> Result<Self> {
        if author_of.len() != num_docs {
            return Err(Error::ShapeMismatch(format!(
                "{} author labels for {num_docs} documents",
                author_of.len()
            )));
        }
        if let Some(&a) = author_of.iter().find(|&&a| a >= author_names.len()) {
            return Err(Error::Invalid(format!(
                "author index {a} out of range for {} authors",
                author_names.len()
            )));
        }
        let mut rows: Vec<Vec<(usize, u32)>> = vec![Vec::new(); num_docs];
        for (d, v, c) in entries {
            if d >= num_docs || v >= num_terms {
                return Err(Error::Invalid(format!(
                    "entry ({d}, {v}) outside a {num_docs}x{num_terms} matrix"
                )));
            }
            if c > 0 {
                rows[d].push((v, c));
            }
        }
        let mut row_ptr = Vec::with_capacity(num_docs + 1);
        let mut terms = Vec::new();
        let mut counts = Vec::new();
        row_ptr.push(0);
        for (d, mut row) in rows.into_iter().enumerate() {
            row.sort_unstable_by_key(|&(v, _)| v);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Invalid(format!("duplicate term entry in document {d}")));
            }
            for (v, c) in row {
                terms.push(v);
                counts.push(c);
            }
            row_ptr.push(terms.len());
        }
        Ok(SparseCorpus {
            num_terms,
            row_ptr,
            terms,
            counts,
            author_of,
            author_names,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.author_of.len()
    }

    pub fn num_terms(&self) -> usize {
        self.num_terms
    }

    pub fn num_authors(&self) -> usize {
        self.author_names.len()
    }

    pub fn nnz(&self) -> usize {
        self.terms.len()
    }

    /// Term indices and counts of document `d`, sorted by term.
    pub fn row(&self, d: usize) -> (&[usize], &[u32]) {
        let (lo, hi) = (self.row_ptr[d], self.row_ptr[d + 1]);
        (&self.terms[lo..hi], &self.counts[lo..hi])
    }

    pub fn dense_row(&self, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_terms];
        let (terms, counts) = self.row(d);
        for (&v, &c) in terms.iter().zip(counts) {
            out[v] = c as f64;
        }
        out
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        (0..self.num_docs()).flat_map(move |d| {
            let (t, c) = self.row(d);
            t.iter().zip(c).map(move |(&v, &c)| (d, v, c))
        })
    }

    pub fn author_of(&self, d: usize) -> usize {
        self.author_of[d]
    }

    pub fn authors(&self) -> &[usize] {
        &self.author_of
    }

    pub fn author_names(&self) -> &[String] {
        &self.author_names
    }

    /// Total token count of every document.
    pub fn doc_lengths(&self) -> Vec<u64> {
        (0..self.num_docs())
            .map(|d| self.row(d).1.iter().map(|&c| c as u64).sum())
            .collect()
    }

    /// Documents grouped by author, in author order.
    pub fn docs_by_author(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_authors()];
        for (d, &a) in self.author_of.iter().enumerate() {
            out[a].push(d);
        }
        out
    }

    /// Pool the documents of each author into one row; row `s` belongs to
    /// author `s`.
    pub fn aggregate_by_author(&self) -> SparseCorpus {
        let mut pooled: Vec<BTreeMap<usize, u32>> = vec![BTreeMap::new(); self.num_authors()];
        for (d, v, c) in self.entries() {
            *pooled[self.author_of[d]].entry(v).or_default() += c;
        }
        let entries = pooled
            .into_iter()
            .enumerate()
            .flat_map(|(s, row)| row.into_iter().map(move |(v, c)| (s, v, c)))
            .collect::<Vec<_>>();
        SparseCorpus::from_entries(
            self.num_authors(),
            self.num_terms,
            entries,
            (0..self.num_authors()).collect(),
            self.author_names.clone(),
        )
        .expect("aggregation preserves validity")
    }

    /// Restrict to the given documents, keeping the author and term index
    /// spaces unchanged.
    pub fn select_docs(&self, docs: &[usize]) -> SparseCorpus {
        let entries = docs
            .iter()
            .enumerate()
            .flat_map(|(i, &d)| {
                let (t, c) = self.row(d);
                t.iter().zip(c).map(move |(&v, &c)| (i, v, c))
            })
            .collect::<Vec<_>>();
        SparseCorpus::from_entries(
            docs.len(),
            self.num_terms,
            entries,
            docs.iter().map(|&d| self.author_of[d]).collect(),
            self.author_names.clone(),
        )
        .expect("selection preserves validity")
    }

    fn map_counts(&self, f: impl Fn(u32) -> u32) -> SparseCorpus {
        let entries = self.entries().map(|(d, v, c)| (d, v, f(c))).collect::<Vec<_>>();
        SparseCorpus::from_entries(
            self.num_docs(),
            self.num_terms,
            entries,
            self.author_of.clone(),
            self.author_names.clone(),
        )
        .expect("count mapping preserves validity")
    }
}

/// Preprocessing thresholds. Defaults follow the settings used for
/// Senate speeches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub min_doc_frequency: f64,
    pub max_doc_frequency: f64,
    pub min_authors_per_term: usize,
    pub min_docs_per_author: usize,
    pub stopwords: BTreeSet<String>,
    pub max_ngram: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            min_doc_frequency: 0.001,
            max_doc_frequency: 0.3,
            min_authors_per_term: 10,
            min_docs_per_author: 1,
            stopwords: BTreeSet::new(),
            max_ngram: 3,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.min_doc_frequency, self.max_doc_frequency);
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::Invalid(format!(
                "document frequency bounds must satisfy 0 <= min < max <= 1, got [{lo}, {hi}]"
            )));
        }
        if !(1..=3).contains(&self.max_ngram) {
            return Err(Error::Invalid(format!(
                "max_ngram must be 1..=3, got {}",
                self.max_ngram
            )));
        }
        Ok(())
    }
}

/// Per-author multipliers on the Poisson rate that absorb differences in
/// document length.
#[derive(Clone, Debug, PartialEq)]
pub struct VerbosityWeights(pub Vec<f64>);

impl VerbosityWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn uniform(num_authors: usize) -> Self {
        VerbosityWeights(vec![1.0; num_authors])
    }
}

/// Lowercased alphabetic tokens with stopwords removed, plus all n-grams up
/// to `max_ngram` formed from the surviving token sequence.
pub fn tokenize(text: &str, max_ngram: usize, stopwords: &BTreeSet<String>) -> BTreeMap<String, u32> {
    let tokens: Vec<String> = text
        .split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !stopwords.contains(t))
        .collect();
    let mut out = BTreeMap::new();
    for n in 1..=max_ngram.min(3) {
        for window in tokens.windows(n) {
            *out.entry(window.join(" ")).or_insert(0) += 1;
        }
    }
    out
}

/// Tokenize, filter and index a document collection.
pub fn build_corpus(docs: &[RawDocument], cfg: &PreprocessConfig) -> Result<(SparseCorpus, Vocabulary)> {
    cfg.validate()?;
    if docs.is_empty() {
        return Err(Error::Invalid("no documents supplied".into()));
    }
    let mut seen = HashSet::with_capacity(docs.len());
    for doc in docs {
        if doc.author_id.is_empty() {
            return Err(Error::Invalid(format!("document {:?} has an empty author", doc.doc_id)));
        }
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(Error::Invalid(format!("duplicate document id {:?}", doc.doc_id)));
        }
    }

    let mut docs_per_author: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        *docs_per_author.entry(&doc.author_id).or_default() += 1;
    }
    let kept: Vec<&RawDocument> = docs
        .iter()
        .filter(|d| docs_per_author[d.author_id.as_str()] >= cfg.min_docs_per_author)
        .collect();
    if kept.is_empty() {
        return Err(Error::AllDocumentsFiltered);
    }

    let bags: Vec<BTreeMap<String, u32>> = kept
        .iter()
        .map(|d| tokenize(&d.text, cfg.max_ngram, &cfg.stopwords))
        .collect();

    let mut doc_freq: BTreeMap<&str, usize> = BTreeMap::new();
    let mut term_authors: HashMap<&str, HashSet<&str>> = HashMap::new();
    for (doc, bag) in kept.iter().zip(&bags) {
        for term in bag.keys() {
            *doc_freq.entry(term).or_default() += 1;
            term_authors.entry(term).or_default().insert(&doc.author_id);
        }
    }
    let total = kept.len() as f64;
    let terms: Vec<String> = doc_freq
        .iter()
        .filter(|(term, &df)| {
            let frac = df as f64 / total;
            frac >= cfg.min_doc_frequency
                && frac <= cfg.max_doc_frequency
                && term_authors[*term].len() >= cfg.min_authors_per_term
        })
        .map(|(term, _)| term.to_string())
        .collect();
    let vocab = Vocabulary::new(terms)?;

    let mut author_index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut author_names = Vec::new();
    let mut author_of = Vec::new();
    let mut entries = Vec::new();
    for (doc, bag) in kept.iter().zip(&bags) {
        let row: Vec<(usize, u32)> = bag
            .iter()
            .filter_map(|(t, &c)| vocab.index_of(t).map(|v| (v, c)))
            .collect();
        if row.is_empty() {
            continue;
        }
        let next = author_index.len();
        let a = *author_index.entry(&doc.author_id).or_insert_with(|| {
            author_names.push(doc.author_id.clone());
            next
        });
        let d = author_of.len();
        author_of.push(a);
        entries.extend(row.into_iter().map(|(v, c)| (d, v, c)));
    }
    if author_of.is_empty() {
        return Err(Error::AllDocumentsFiltered);
    }
    let corpus = SparseCorpus::from_entries(author_of.len(), vocab.len(), entries, author_of, author_names)?;
    Ok((corpus, vocab))
}

/// `w_s = n_s / mean(n)` with `n_s` the average document length of author `s`.
pub fn compute_weights(corpus: &SparseCorpus) -> Result<VerbosityWeights> {
    let s = corpus.num_authors();
    let mut totals = vec![0.0f64; s];
    let mut docs = vec![0usize; s];
    for (d, len) in corpus.doc_lengths().into_iter().enumerate() {
        let a = corpus.author_of(d);
        totals[a] += len as f64;
        docs[a] += 1;
    }
    if let Some(a) = docs.iter().position(|&n| n == 0) {
        return Err(Error::Invalid(format!(
            "author {:?} has no documents",
            corpus.author_names()[a]
        )));
    }
    let avg: Vec<f64> = totals.iter().zip(&docs).map(|(t, &n)| t / n as f64).collect();
    let mean = avg.iter().sum::<f64>() / s as f64;
    if mean <= 0.0 {
        return Err(Error::Invalid("corpus has no tokens".into()));
    }
    Ok(VerbosityWeights(avg.into_iter().map(|n| n / mean).collect()))
}

/// Count after the `round(ln(1 + y))` transform, rounding halves up.
pub fn log_count(y: u32) -> u32 {
    ((y as f64).ln_1p() + 0.5).floor() as u32
}

/// Apply [`log_count`] to every entry, dropping entries that become zero.
pub fn log_transform(corpus: &SparseCorpus) -> SparseCorpus {
    corpus.map_counts(log_count)
}

/// Median total token count per document.
pub fn median_doc_length(corpus: &SparseCorpus) -> f64 {
    let mut lens = corpus.doc_lengths();
    if lens.is_empty() {
        return 0.0;
    }
    lens.sort_unstable();
    let n = lens.len();
    if n % 2 == 1 {
        lens[n / 2] as f64
    } else {
        (lens[n / 2 - 1] + lens[n / 2]) as f64 / 2.0
    }
}
