//! The text-based ideal point model.
//!
//! Counts follow `y_dv ~ Pois(w_a * sum_k theta_dk * beta_kv * exp(x_a * eta_kv))`
//! where `a` is the author of document `d` and `w_a` the author's verbosity
//! weight. The variational family is lognormal for `theta` and `beta` and
//! Gaussian for `eta` and `x`.

use std::borrow::Cow;
use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{compute_weights, log_transform, SparseCorpus};
use crate::error::{Error, Result};
use crate::grad_engine::{run_svi, AdamConfig, Family, Likelihood, Prior, SviConfig, VariationalState};
use crate::math::{derive_seed, ln_gamma, seeded_rng};
use crate::pf;

pub const THETA: usize = 0;
pub const BETA: usize = 1;
pub const ETA: usize = 2;
pub const X: usize = 3;

/// Gamma(a, b) prior on document intensities and neutral topics. The
/// priors on `eta` and `x` are standard normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub a: f64,
    pub b: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig { a: 0.3, b: 0.3 }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.a > 0.0 && self.b > 0.0 {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "Gamma prior parameters must be positive, got ({}, {})",
                self.a, self.b
            )))
        }
    }

    fn gamma(&self) -> Prior {
        Prior::Gamma {
            shape: self.a,
            rate: self.b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub num_topics: usize,
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub mc_samples: usize,
    pub use_log_transform: bool,
    pub elbo_report_interval: usize,
    /// Sweep budget of the Poisson factorization used for initialization.
    pub pretrain_sweeps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_topics: 50,
            batch_size: 512,
            max_steps: 50_000,
            seed: 0,
            adam: AdamConfig::default(),
            mc_samples: 1,
            use_log_transform: false,
            elbo_report_interval: 100,
            pretrain_sweeps: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_topics == 0 || self.batch_size == 0 || self.mc_samples == 0 {
            return Err(Error::Invalid(
                "topics, batch size and Monte Carlo samples must all be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn svi(&self) -> SviConfig {
        SviConfig {
            batch_size: self.batch_size,
            max_steps: self.max_steps,
            adam: self.adam,
            mc_samples: self.mc_samples,
            report_interval: self.elbo_report_interval,
        }
    }
}

/// Variational parameters kept next to the posterior means so that exact
/// lognormal-Gaussian expectations can be formed after fitting.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalScales {
    pub beta_mu: Vec<f64>,
    pub beta_sigma: Vec<f64>,
    pub eta_sigma: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub num_docs: usize,
    pub num_terms: usize,
    pub num_topics: usize,
    /// D x K, row-major
    pub theta_hat: Vec<f64>,
    /// K x V, row-major
    pub beta_hat: Vec<f64>,
    /// K x V, row-major
    pub eta_hat: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub author_names: Vec<String>,
    pub elbo_trace: Vec<(usize, f64)>,
    pub config: TrainConfig,
    pub priors: PriorConfig,
    pub scales: Option<VariationalScales>,
}

impl FitResult {
    pub fn num_authors(&self) -> usize {
        self.x_hat.len()
    }

    pub fn theta_row(&self, d: usize) -> &[f64] {
        &self.theta_hat[d * self.num_topics..(d + 1) * self.num_topics]
    }
}

/// `lambda_v = w * sum_k theta_k * beta_kv * exp(x * eta_kv)`.
pub fn tbip_rate(theta_d: &[f64], beta: &[f64], eta: &[f64], x: f64, w: f64) -> Result<Vec<f64>> {
    let k = theta_d.len();
    if k == 0 || !beta.len().is_multiple_of(k) || eta.len() != beta.len() {
        return Err(Error::ShapeMismatch(format!(
            "theta has {k} topics, beta {} entries, eta {} entries",
            beta.len(),
            eta.len()
        )));
    }
    if !(w > 0.0) {
        return Err(Error::Invalid(format!("verbosity weight must be positive, got {w}")));
    }
    let nv = beta.len() / k;
    let mut rate = vec![0.0; nv];
    for (v, r) in rate.iter_mut().enumerate() {
        let mut sum = 0.0;
        for t in 0..k {
            sum += theta_d[t] * beta[t * nv + v] * (x * eta[t * nv + v]).exp();
        }
        *r = w * sum;
        if !r.is_finite() {
            return Err(overflow(x, eta));
        }
    }
    Ok(rate)
}

/// The plain factorization rate `sum_k theta_k * beta_kv`.
pub fn pf_rate(theta_d: &[f64], beta: &[f64]) -> Vec<f64> {
    let k = theta_d.len();
    let nv = beta.len() / k;
    (0..nv)
        .map(|v| {
            let mut sum = 0.0;
            for t in 0..k {
                sum += theta_d[t] * beta[t * nv + v];
            }
            sum
        })
        .collect()
}

fn overflow(x: f64, eta: &[f64]) -> Error {
    Error::RateOverflow {
        x,
        max_abs_eta: eta.iter().fold(0.0f64, |m, e| m.max(e.abs())),
    }
}

/// `sum_v log Pois(y_v | rate_v)` over every term, zeros included.
pub fn log_likelihood_doc(counts: &[f64], rate: &[f64]) -> Result<f64> {
    if counts.len() != rate.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} counts for {} rates",
            counts.len(),
            rate.len()
        )));
    }
    Ok(counts
        .iter()
        .zip(rate)
        .map(|(&y, &l)| {
            if y == 0.0 {
                -l
            } else {
                y * l.ln() - l - ln_gamma(y + 1.0)
            }
        })
        .sum())
}

/// Poisson likelihood of the model over documents, for use with the
/// gradient engine. Sample blocks are `[theta, beta, eta, x]`.
pub struct TbipLikelihood<'a> {
    corpus: &'a SparseCorpus,
    weights: &'a [f64],
    num_topics: usize,
    log_factorial: Vec<f64>,
}

impl<'a> TbipLikelihood<'a> {
    pub fn new(corpus: &'a SparseCorpus, weights: &'a [f64], num_topics: usize) -> Result<Self> {
        if weights.len() != corpus.num_authors() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} authors",
                weights.len(),
                corpus.num_authors()
            )));
        }
        let max_count = corpus.entries().map(|(_, _, c)| c).max().unwrap_or(0);
        let log_factorial = (0..=max_count).map(|c| ln_gamma(c as f64 + 1.0)).collect();
        Ok(TbipLikelihood {
            corpus,
            weights,
            num_topics,
            log_factorial,
        })
    }
}

impl Likelihood for TbipLikelihood<'_> {
    fn num_units(&self) -> usize {
        self.corpus.num_docs()
    }

    fn log_likelihood(&self, samples: &[Vec<f64>], batch: &[usize], mut grad: Option<&mut [Vec<f64>]>) -> Result<f64> {
        let k = self.num_topics;
        let nv = self.corpus.num_terms();
        let (theta, beta, eta, x) = (&samples[THETA], &samples[BETA], &samples[ETA], &samples[X]);
        if theta.len() != self.corpus.num_docs() * k
            || beta.len() != k * nv
            || eta.len() != k * nv
            || x.len() != self.corpus.num_authors()
        {
            return Err(Error::ShapeMismatch(
                "samples do not match the corpus dimensions".into(),
            ));
        }

        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &d in batch {
            groups.entry(self.corpus.author_of(d)).or_default().push(d);
        }

        let mut total = 0.0;
        let mut ex = vec![0.0; k * nv];
        let mut e = vec![0.0; k * nv];
        let mut col = vec![0.0; k];
        let mut theta_sum = vec![0.0; k];
        let mut lam_buf = Vec::new();

        for (s, docs) in groups {
            let xs = x[s];
            let w = self.weights[s];
            ex.par_chunks_mut(nv)
                .zip(e.par_chunks_mut(nv))
                .enumerate()
                .for_each(|(t, (ex_row, e_row))| {
                    for v in 0..nv {
                        let f = (xs * eta[t * nv + v]).exp();
                        ex_row[v] = f;
                        e_row[v] = beta[t * nv + v] * f;
                    }
                });
            for t in 0..k {
                col[t] = e[t * nv..(t + 1) * nv].iter().sum();
                if !col[t].is_finite() {
                    return Err(overflow(xs, eta));
                }
            }
            theta_sum.fill(0.0);

            for &d in &docs {
                let th = &theta[d * k..(d + 1) * k];
                let (terms, counts) = self.corpus.row(d);
                lam_buf.clear();
                let mut ll = 0.0;
                for (&v, &y) in terms.iter().zip(counts) {
                    let mut lam = 0.0;
                    for t in 0..k {
                        lam += th[t] * e[t * nv + v];
                    }
                    lam *= w;
                    ll += y as f64 * lam.ln() - self.log_factorial[y as usize];
                    lam_buf.push(lam);
                }
                for t in 0..k {
                    ll -= w * th[t] * col[t];
                }
                total += ll;

                if let Some(g) = grad.as_deref_mut() {
                    let [g_theta, g_beta, g_eta, g_x] = g else {
                        return Err(Error::ShapeMismatch("gradient needs four blocks".into()));
                    };
                    for t in 0..k {
                        theta_sum[t] += w * th[t];
                        g_theta[d * k + t] -= w * col[t];
                    }
                    for ((&v, &y), &lam) in terms.iter().zip(counts).zip(&lam_buf) {
                        let r = w * y as f64 / lam;
                        for t in 0..k {
                            let i = t * nv + v;
                            g_theta[d * k + t] += r * e[i];
                            let re = r * th[t] * e[i];
                            g_beta[i] += r * th[t] * ex[i];
                            g_eta[i] += re * xs;
                            g_x[s] += re * eta[i];
                        }
                    }
                }
            }

            if let Some(g) = grad.as_deref_mut() {
                let [_, g_beta, g_eta, g_x] = g else {
                    return Err(Error::ShapeMismatch("gradient needs four blocks".into()));
                };
                let (ex, e, theta_sum) = (&ex, &e, &theta_sum);
                let dx: Vec<f64> = g_beta
                    .par_chunks_mut(nv)
                    .zip(g_eta.par_chunks_mut(nv))
                    .enumerate()
                    .map(|(t, (gb, ge))| {
                        let ts = theta_sum[t];
                        let mut acc = 0.0;
                        for v in 0..nv {
                            let i = t * nv + v;
                            gb[v] -= ts * ex[i];
                            ge[v] -= ts * e[i] * xs;
                            acc += e[i] * eta[i];
                        }
                        ts * acc
                    })
                    .collect();
                g_x[s] -= dx.iter().sum::<f64>();
            }
        }
        Ok(total)
    }
}

/// Variational state initialized from a factorization fit: lognormal
/// locations at the log of the estimates, every scale at 0.1, and locations
/// of `eta` and `x` drawn from N(0, 0.1^2).
pub fn init_state(
    theta_hat: &[f64],
    beta_hat: &[f64],
    num_authors: usize,
    priors: &PriorConfig,
    seed: u64,
) -> Result<VariationalState> {
    if theta_hat.iter().chain(beta_hat).any(|&v| !(v > 0.0)) {
        return Err(Error::Invalid("initial factorization must be strictly positive".into()));
    }
    let mut rng = seeded_rng(seed);
    let log_sd = 0.1f64.ln();
    let mut normal = |n: usize| -> Vec<f64> { (0..n).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect() };
    let eta_mu = normal(beta_hat.len());
    let x_mu = normal(num_authors);

    let mut state = VariationalState::default();
    state.push(
        "theta",
        Family::lognormal(
            theta_hat.iter().map(|v| v.ln()).collect(),
            vec![log_sd; theta_hat.len()],
        )?,
        priors.gamma(),
    );
    state.push(
        "beta",
        Family::lognormal(beta_hat.iter().map(|v| v.ln()).collect(), vec![log_sd; beta_hat.len()])?,
        priors.gamma(),
    );
    state.push(
        "eta",
        Family::gaussian(eta_mu, vec![log_sd; beta_hat.len()])?,
        Prior::STANDARD_NORMAL,
    );
    state.push(
        "x",
        Family::gaussian(x_mu, vec![log_sd; num_authors])?,
        Prior::STANDARD_NORMAL,
    );
    Ok(state)
}

/// Pretrained factorization used to initialize training: `theta` (D x K)
/// and `beta` (K x V).
#[derive(Clone, Debug, PartialEq)]
pub struct Initialization {
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Fit the model: pretrain (unless an initialization is supplied), compute
/// verbosity weights, then run stochastic gradient ascent on the ELBO.
pub fn train_tbip(
    corpus: &SparseCorpus,
    cfg: &TrainConfig,
    priors: &PriorConfig,
    init: Option<&Initialization>,
) -> Result<FitResult> {
    cfg.validate()?;
    priors.validate()?;
    if corpus.num_docs() == 0 || corpus.num_terms() == 0 || corpus.num_authors() == 0 {
        return Err(Error::Invalid("corpus has no documents, terms or authors".into()));
    }
    let corpus: Cow<SparseCorpus> = if cfg.use_log_transform {
        Cow::Owned(log_transform(corpus))
    } else {
        Cow::Borrowed(corpus)
    };
    let k = cfg.num_topics;
    let (d, v) = (corpus.num_docs(), corpus.num_terms());

    let pretrained;
    let init = match init {
        Some(init) => {
            if init.theta.len() != d * k || init.beta.len() != k * v {
                return Err(Error::ShapeMismatch(format!(
                    "initialization has {} theta and {} beta entries, expected {} and {}",
                    init.theta.len(),
                    init.beta.len(),
                    d * k,
                    k * v
                )));
            }
            init
        }
        None => {
            let fit = pf::pretrain(
                &corpus,
                k,
                priors.a,
                priors.b,
                cfg.pretrain_sweeps,
                derive_seed(cfg.seed, 1),
            )?;
            pretrained = Initialization {
                theta: fit.theta,
                beta: fit.beta,
            };
            &pretrained
        }
    };

    let weights = compute_weights(&corpus)?;
    let mut state = init_state(
        &init.theta,
        &init.beta,
        corpus.num_authors(),
        priors,
        derive_seed(cfg.seed, 2),
    )?;
    let lik = TbipLikelihood::new(&corpus, weights.as_slice(), k)?;
    let mut rng = seeded_rng(derive_seed(cfg.seed, 3));
    let trace = run_svi(&mut state, &lik, &cfg.svi(), &mut rng)?;

    let fam = |i: usize| &state.blocks[i].family;
    let x_hat = fam(X).mean();
    if x_hat.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteElbo { step: cfg.max_steps });
    }
    Ok(FitResult {
        num_docs: d,
        num_terms: v,
        num_topics: k,
        theta_hat: fam(THETA).mean(),
        beta_hat: fam(BETA).mean(),
        eta_hat: fam(ETA).mean(),
        x_hat,
        author_names: corpus.author_names().to_vec(),
        elbo_trace: trace,
        config: cfg.clone(),
        priors: *priors,
        scales: Some(VariationalScales {
            beta_mu: fam(BETA).mu.clone(),
            beta_sigma: fam(BETA).sigma(),
            eta_sigma: fam(ETA).sigma(),
        }),
    })
}
