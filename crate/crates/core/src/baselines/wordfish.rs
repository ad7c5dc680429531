use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::corpus::SparseCorpus;
use crate::error::{Error, Result};
use crate::grad_engine::{run_svi, Family, Likelihood, Prior, VariationalState};
use crate::math::{derive_seed, ln_gamma, seeded_rng};
use crate::tbip::TrainConfig;

const ALPHA: usize = 0;
const PSI: usize = 1;
const B: usize = 2;
const X: usize = 3;

/// `lambda_v = exp(alpha + psi_v + b_v * x)` for one author.
pub fn wordfish_rate(alpha: f64, psi: &[f64], b: &[f64], x: f64) -> Result<Vec<f64>> {
    if psi.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} psi for {} b", psi.len(), b.len())));
    }
    psi.iter()
        .zip(b)
        .map(|(p, bv)| {
            let r = (alpha + p + bv * x).exp();
            if r.is_finite() {
                Ok(r)
            } else {
                Err(Error::RateOverflow {
                    x,
                    max_abs_eta: b.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                })
            }
        })
        .collect()
}

/// Poisson likelihood of author-pooled counts. Sample blocks are
/// `[alpha, psi, b, x]`; units are authors (rows).
pub struct WordfishLikelihood<'a> {
    pooled: &'a SparseCorpus,
}

impl<'a> WordfishLikelihood<'a> {
    pub fn new(pooled: &'a SparseCorpus) -> Self {
        WordfishLikelihood { pooled }
    }
}

impl Likelihood for WordfishLikelihood<'_> {
    fn num_units(&self) -> usize {
        self.pooled.num_docs()
    }

    fn log_likelihood(&self, samples: &[Vec<f64>], batch: &[usize], mut grad: Option<&mut [Vec<f64>]>) -> Result<f64> {
        let (alpha, psi, b, x) = (&samples[ALPHA], &samples[PSI], &samples[B], &samples[X]);
        let nv = self.pooled.num_terms();
        if psi.len() != nv || b.len() != nv || alpha.len() != self.pooled.num_docs() || x.len() != alpha.len() {
            return Err(Error::ShapeMismatch("samples do not match the pooled corpus".into()));
        }
        let mut total = 0.0;
        for &s in batch {
            let rate = wordfish_rate(alpha[s], psi, b, x[s])?;
            let y = self.pooled.dense_row(s);
            for v in 0..nv {
                total += if y[v] == 0.0 {
                    -rate[v]
                } else {
                    y[v] * (alpha[s] + psi[v] + b[v] * x[s]) - rate[v] - ln_gamma(y[v] + 1.0)
                };
            }
            if let Some(g) = grad.as_deref_mut() {
                for v in 0..nv {
                    let r = y[v] - rate[v];
                    g[ALPHA][s] += r;
                    g[PSI][v] += r;
                    g[B][v] += r * x[s];
                    g[X][s] += r * b[v];
                }
            }
        }
        Ok(total)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WordfishFit {
    pub x_hat: Vec<f64>,
    pub alpha_hat: Vec<f64>,
    pub psi_hat: Vec<f64>,
    pub b_hat: Vec<f64>,
    pub elbo_trace: Vec<(usize, f64)>,
    pub state: VariationalState,
}

fn init_state(pooled: &SparseCorpus, seed: u64) -> Result<VariationalState> {
    let (ns, nv) = (pooled.num_docs(), pooled.num_terms());
    let mut term_totals = vec![0.0; nv];
    let mut row_totals = vec![0.0; ns];
    for (s, v, c) in pooled.entries() {
        term_totals[v] += c as f64;
        row_totals[s] += c as f64;
    }
    let mean_row = row_totals.iter().sum::<f64>() / ns as f64;
    // log of the average per-author count of each term, and each author's
    // length relative to the mean
    let psi: Vec<f64> = term_totals.iter().map(|t| ((t + 0.5) / ns as f64).ln()).collect();
    let alpha: Vec<f64> = row_totals.iter().map(|t| ((t + 0.5) / (mean_row + 0.5)).ln()).collect();

    let mut rng = seeded_rng(seed);
    let mut small = |n: usize| -> Vec<f64> { (0..n).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect() };
    let log_sd = 0.1f64.ln();
    let b = small(nv);
    let x = small(ns);
    let mut state = VariationalState::default();
    state.push(
        "alpha",
        Family::gaussian(alpha, vec![log_sd; ns])?,
        Prior::STANDARD_NORMAL,
    );
    state.push("psi", Family::gaussian(psi, vec![log_sd; nv])?, Prior::STANDARD_NORMAL);
    state.push("b", Family::gaussian(b, vec![log_sd; nv])?, Prior::STANDARD_NORMAL);
    state.push("x", Family::gaussian(x, vec![log_sd; ns])?, Prior::STANDARD_NORMAL);
    Ok(state)
}

/// Fit wordfish to a corpus whose rows are already pooled per author.
pub fn train_wordfish_pooled(pooled: &SparseCorpus, cfg: &TrainConfig) -> Result<WordfishFit> {
    cfg.validate()?;
    if pooled.num_docs() < 2 || pooled.num_terms() == 0 {
        return Err(Error::Invalid(
            "wordfish needs at least two authors and one term".into(),
        ));
    }
    let mut state = init_state(pooled, derive_seed(cfg.seed, 2))?;
    let lik = WordfishLikelihood::new(pooled);
    let mut rng = seeded_rng(derive_seed(cfg.seed, 3));
    let trace = run_svi(&mut state, &lik, &cfg.svi(), &mut rng)?;
    Ok(WordfishFit {
        alpha_hat: state.blocks[ALPHA].family.mean(),
        psi_hat: state.blocks[PSI].family.mean(),
        b_hat: state.blocks[B].family.mean(),
        x_hat: state.blocks[X].family.mean(),
        elbo_trace: trace,
        state,
    })
}

/// Pool each author's documents and fit wordfish; `x_hat[s]` is author `s`.
pub fn train_wordfish(corpus: &SparseCorpus, cfg: &TrainConfig) -> Result<WordfishFit> {
    train_wordfish_pooled(&corpus.aggregate_by_author(), cfg)
}
