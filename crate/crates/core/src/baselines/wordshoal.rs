use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::wordfish::train_wordfish_pooled;
use crate::corpus::SparseCorpus;
use crate::error::{Error, Result};
use crate::grad_engine::{run_svi, Family, Likelihood, Prior, VariationalState};
use crate::math::{derive_seed, seeded_rng, LN_2PI};
use crate::tbip::TrainConfig;

const X: usize = 0;
const INTERCEPT: usize = 1;
const LOADING: usize = 2;
const NOISE_VAR: usize = 3;

const NOISE_PRIOR: Prior = Prior::Gamma { shape: 1.0, rate: 1.0 };

/// A corpus whose documents each belong to one debate.
#[derive(Clone, Debug, PartialEq)]
pub struct DebateLabeledCorpus {
    pub corpus: SparseCorpus,
    pub debate_of: Vec<usize>,
    pub debate_names: Vec<String>,
}

impl DebateLabeledCorpus {
    pub fn new(corpus: SparseCorpus, debate_of: Vec<usize>, debate_names: Vec<String>) -> Result<Self> {
        if debate_of.len() != corpus.num_docs() {
            return Err(Error::ShapeMismatch(format!(
                "{} debate labels for {} documents",
                debate_of.len(),
                corpus.num_docs()
            )));
        }
        if debate_of.iter().any(|&j| j >= debate_names.len()) {
            return Err(Error::Invalid("debate label out of range".into()));
        }
        Ok(DebateLabeledCorpus {
            corpus,
            debate_of,
            debate_names,
        })
    }
}

/// Stage-one positions of the authors who spoke in one debate.
#[derive(Clone, Debug, PartialEq)]
pub struct DebatePositions {
    pub debate: String,
    pub authors: Vec<usize>,
    /// Wordfish positions, parallel to `authors`.
    pub positions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WordshoalFit {
    pub x_hat: Vec<f64>,
    pub debates: Vec<DebatePositions>,
    pub elbo_trace: Vec<(usize, f64)>,
    pub state: VariationalState,
}

/// Rows of the debate's documents pooled per participating author.
fn pool_debate(corpus: &SparseCorpus, docs: &[usize]) -> (Vec<usize>, SparseCorpus) {
    let mut pooled: BTreeMap<usize, BTreeMap<usize, u32>> = BTreeMap::new();
    for &d in docs {
        let row = pooled.entry(corpus.author_of(d)).or_default();
        let (terms, counts) = corpus.row(d);
        for (&v, &c) in terms.iter().zip(counts) {
            *row.entry(v).or_default() += c;
        }
    }
    let authors: Vec<usize> = pooled.keys().copied().collect();
    let entries: Vec<(usize, usize, u32)> = pooled
        .values()
        .enumerate()
        .flat_map(|(i, row)| row.iter().map(move |(&v, &c)| (i, v, c)))
        .collect();
    let names = authors.iter().map(|&s| corpus.author_names()[s].clone()).collect();
    let sub = SparseCorpus::from_entries(
        authors.len(),
        corpus.num_terms(),
        entries,
        (0..authors.len()).collect(),
        names,
    )
    .expect("pooling preserves validity");
    (authors, sub)
}

fn name_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a, stable across runs and platforms
    let h = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    });
    derive_seed(seed, h)
}

fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    values.iter().map(|v| (v - mean) / sd).collect()
}

/// Gaussian one-factor model over stage-one positions:
/// `psi_sj ~ N(a_j + b_j * x_s, sigma^2)`. Units are debates. Sample blocks
/// are `[x, a, b, sigma^2]`.
pub struct FactorLikelihood<'a> {
    debates: &'a [DebatePositions],
}

impl<'a> FactorLikelihood<'a> {
    pub fn new(debates: &'a [DebatePositions]) -> Self {
        FactorLikelihood { debates }
    }
}

impl Likelihood for FactorLikelihood<'_> {
    fn num_units(&self) -> usize {
        self.debates.len()
    }

    fn log_likelihood(&self, samples: &[Vec<f64>], batch: &[usize], mut grad: Option<&mut [Vec<f64>]>) -> Result<f64> {
        let (x, a, b) = (&samples[X], &samples[INTERCEPT], &samples[LOADING]);
        let var = samples[NOISE_VAR][0];
        let mut total = 0.0;
        for &j in batch {
            let deb = &self.debates[j];
            for (&s, &psi) in deb.authors.iter().zip(&deb.positions) {
                let r = psi - a[j] - b[j] * x[s];
                total += -0.5 * (LN_2PI + var.ln()) - r * r / (2.0 * var);
                if let Some(g) = grad.as_deref_mut() {
                    g[INTERCEPT][j] += r / var;
                    g[LOADING][j] += r * x[s] / var;
                    g[X][s] += r * b[j] / var;
                    g[NOISE_VAR][0] += -0.5 / var + r * r / (2.0 * var * var);
                }
            }
        }
        Ok(total)
    }
}

/// Closed-form coordinate update of q(x) given the other factors. The
/// model is conditionally Gaussian in `x`, so this is the exact optimum of
/// the ELBO over q(x) and removes the Monte Carlo noise from the estimate.
fn refine_positions(state: &mut VariationalState, debates: &[DebatePositions]) {
    let noise = &state.blocks[NOISE_VAR].family;
    let precision_scale = (-noise.mu[0] + 0.5 * (2.0 * noise.log_sigma[0]).exp()).exp();
    let a = state.blocks[INTERCEPT].family.mu.clone();
    let b = state.blocks[LOADING].family.mu.clone();
    let b_var = state.blocks[LOADING]
        .family
        .sigma()
        .iter()
        .map(|s| s * s)
        .collect::<Vec<_>>();
    let n = state.blocks[X].family.len();
    let mut precision = vec![1.0; n];
    let mut linear = vec![0.0; n];
    for (j, deb) in debates.iter().enumerate() {
        for (&s, &psi) in deb.authors.iter().zip(&deb.positions) {
            precision[s] += precision_scale * (b[j] * b[j] + b_var[j]);
            linear[s] += precision_scale * b[j] * (psi - a[j]);
        }
    }
    let fam = &mut state.blocks[X].family;
    for s in 0..n {
        fam.mu[s] = linear[s] / precision[s];
        fam.log_sigma[s] = -0.5 * precision[s].ln();
    }
}

/// Wordfish per debate, then a one-dimensional factor analysis of the
/// per-debate positions.
pub fn train_wordshoal(data: &DebateLabeledCorpus, cfg: &TrainConfig) -> Result<WordshoalFit> {
    cfg.validate()?;
    let corpus = &data.corpus;
    let mut docs_of = vec![Vec::new(); data.debate_names.len()];
    for (d, &j) in data.debate_of.iter().enumerate() {
        docs_of[j].push(d);
    }

    let mut too_small = Vec::new();
    let mut pooled = Vec::new();
    for (j, docs) in docs_of.iter().enumerate() {
        if docs.is_empty() {
            continue;
        }
        let (authors, sub) = pool_debate(corpus, docs);
        let mut term_used = vec![false; sub.num_terms()];
        for (_, v, _) in sub.entries() {
            term_used[v] = true;
        }
        if authors.len() < 2 || term_used.iter().filter(|&&u| u).count() < 2 {
            too_small.push(data.debate_names[j].clone());
        } else {
            pooled.push((j, authors, sub));
        }
    }
    if !too_small.is_empty() {
        return Err(Error::DebateTooSmall(too_small));
    }
    if pooled.is_empty() {
        return Err(Error::Invalid("no debates to scale".into()));
    }

    let debates: Vec<DebatePositions> = pooled
        .par_iter()
        .map(|(j, authors, sub)| {
            let name = &data.debate_names[*j];
            let stage_cfg = TrainConfig {
                seed: name_seed(cfg.seed, name),
                ..cfg.clone()
            };
            let fit = train_wordfish_pooled(sub, &stage_cfg)?;
            Ok(DebatePositions {
                debate: name.clone(),
                authors: authors.clone(),
                positions: fit.x_hat,
            })
        })
        .collect::<Result<_>>()?;

    let (x_hat, elbo_trace, state) = fit_positions(&debates, corpus.num_authors(), cfg)?;
    Ok(WordshoalFit {
        x_hat,
        debates,
        elbo_trace,
        state,
    })
}

/// Ideal points, ELBO trace and the final variational state of stage two.
pub type StageTwoFit = (Vec<f64>, Vec<(usize, f64)>, VariationalState);

/// Stage two: one-factor analysis of per-debate positions. Positions are
/// standardized within each debate first, since wordfish identifies them
/// only up to location, scale and sign.
pub fn fit_positions(debates: &[DebatePositions], num_authors: usize, cfg: &TrainConfig) -> Result<StageTwoFit> {
    if debates.is_empty() {
        return Err(Error::Invalid("no debates to scale".into()));
    }
    if debates
        .iter()
        .any(|d| d.authors.len() != d.positions.len() || d.authors.iter().any(|&s| s >= num_authors))
    {
        return Err(Error::ShapeMismatch(
            "debate positions do not match the author list".into(),
        ));
    }
    let debates: Vec<DebatePositions> = debates
        .iter()
        .map(|d| DebatePositions {
            positions: standardize(&d.positions),
            ..d.clone()
        })
        .collect();
    let mut rng = seeded_rng(derive_seed(cfg.seed, 2));
    let log_sd = 0.1f64.ln();
    let nj = debates.len();
    let mut small = |n: usize| -> Vec<f64> { (0..n).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect() };
    let x0 = small(num_authors);
    let a0 = small(nj);
    let b0: Vec<f64> = small(nj).into_iter().map(|v| v + 1.0).collect();
    let mut state = VariationalState::default();
    state.push(
        "x",
        Family::gaussian(x0, vec![log_sd; num_authors])?,
        Prior::STANDARD_NORMAL,
    );
    state.push("a", Family::gaussian(a0, vec![log_sd; nj])?, Prior::STANDARD_NORMAL);
    state.push("b", Family::gaussian(b0, vec![log_sd; nj])?, Prior::STANDARD_NORMAL);
    state.push("noise_var", Family::lognormal(vec![0.0], vec![log_sd])?, NOISE_PRIOR);

    let lik = FactorLikelihood { debates: &debates };
    let mut rng = seeded_rng(derive_seed(cfg.seed, 3));
    let trace = run_svi(&mut state, &lik, &cfg.svi(), &mut rng)?;
    refine_positions(&mut state, &debates);
    Ok((state.blocks[X].family.mean(), trace, state))
}
