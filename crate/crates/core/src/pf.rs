//! Gamma-Poisson matrix factorization fitted by coordinate ascent.
//!
//! `y_dv ~ Pois(sum_k theta_dk beta_kv)` with `Gamma(a, b)` priors on both
//! factors. The fit supplies the initial document intensities and neutral
//! topics for the ideal point model.

use rand::Rng as _;
use rayon::prelude::*;

use crate::corpus::SparseCorpus;
use crate::error::{Error, Result};
use crate::math::{digamma, ln_gamma, seeded_rng, Rng};

/// Elementwise Gamma(shape, rate) factors.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaFamily {
    pub shape: Vec<f64>,
    pub rate: Vec<f64>,
}

impl GammaFamily {
    fn random(n: usize, a: f64, b: f64, rng: &mut Rng) -> Self {
        let mut shape = Vec::with_capacity(n);
        let mut rate = Vec::with_capacity(n);
        for _ in 0..n {
            shape.push(a + rng.random::<f64>());
            rate.push(b + rng.random::<f64>());
        }
        GammaFamily { shape, rate }
    }

    pub fn mean(&self) -> Vec<f64> {
        self.shape.iter().zip(&self.rate).map(|(s, r)| s / r).collect()
    }

    /// E[log x] = digamma(shape) - ln(rate)
    pub fn mean_log(&self) -> Vec<f64> {
        self.shape
            .iter()
            .zip(&self.rate)
            .map(|(s, r)| digamma(*s) - r.ln())
            .collect()
    }

    fn len(&self) -> usize {
        self.shape.len()
    }
}

/// Variational factors of the document intensities (D x K, row-major) and
/// topics (K x V, row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct PfState {
    pub num_topics: usize,
    pub q_theta: GammaFamily,
    pub q_beta: GammaFamily,
    pub a: f64,
    pub b: f64,
}

impl PfState {
    pub fn random(num_docs: usize, num_terms: usize, num_topics: usize, a: f64, b: f64, rng: &mut Rng) -> Self {
        PfState {
            num_topics,
            q_theta: GammaFamily::random(num_docs * num_topics, a, b, rng),
            q_beta: GammaFamily::random(num_topics * num_terms, a, b, rng),
            a,
            b,
        }
    }

    pub fn num_docs(&self) -> usize {
        self.q_theta.len() / self.num_topics
    }

    pub fn num_terms(&self) -> usize {
        self.q_beta.len() / self.num_topics
    }

    fn check(&self, corpus: &SparseCorpus) -> Result<()> {
        let k = self.num_topics;
        if k == 0 || self.q_theta.len() != corpus.num_docs() * k || self.q_beta.len() != corpus.num_terms() * k {
            return Err(Error::ShapeMismatch(format!(
                "state of {} docs x {} terms x {k} topics does not fit a {}x{} corpus",
                self.num_docs(),
                self.num_terms(),
                corpus.num_docs(),
                corpus.num_terms()
            )));
        }
        Ok(())
    }

    /// Permute topic labels: new topic `j` is old topic `perm[j]`.
    pub fn permute_topics(&self, perm: &[usize]) -> PfState {
        let k = self.num_topics;
        let (d, v) = (self.num_docs(), self.num_terms());
        let mut out = self.clone();
        for (j, &p) in perm.iter().enumerate() {
            for i in 0..d {
                out.q_theta.shape[i * k + j] = self.q_theta.shape[i * k + p];
                out.q_theta.rate[i * k + j] = self.q_theta.rate[i * k + p];
            }
            out.q_beta.shape[j * v..(j + 1) * v].copy_from_slice(&self.q_beta.shape[p * v..(p + 1) * v]);
            out.q_beta.rate[j * v..(j + 1) * v].copy_from_slice(&self.q_beta.rate[p * v..(p + 1) * v]);
        }
        out
    }
}

/// Normalized allocation probabilities `phi_k ∝ exp(elog_theta_k + elog_beta_kv)`.
fn allocate(elog_theta_row: &[f64], elog_beta: &[f64], v: usize, num_terms: usize, phi: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (k, p) in phi.iter_mut().enumerate() {
        *p = elog_theta_row[k] + elog_beta[k * num_terms + v];
        max = max.max(*p);
    }
    let mut total = 0.0;
    for p in phi.iter_mut() {
        *p = (*p - max).exp();
        total += *p;
    }
    for p in phi.iter_mut() {
        *p /= total;
    }
}

/// Allocation of count `(d, v)` across topics under the current state.
pub fn responsibilities(state: &PfState, d: usize, v: usize) -> Vec<f64> {
    let k = state.num_topics;
    let et = state.q_theta.mean_log();
    let eb = state.q_beta.mean_log();
    let mut phi = vec![0.0; k];
    allocate(&et[d * k..(d + 1) * k], &eb, v, state.num_terms(), &mut phi);
    phi
}

/// One sweep of closed-form updates: allocations then document factors,
/// allocations again then topic factors.
pub fn cavi_step(state: &mut PfState, corpus: &SparseCorpus) -> Result<()> {
    state.check(corpus)?;
    let k = state.num_topics;
    let nv = corpus.num_terms();
    let (a, b) = (state.a, state.b);

    // document factors
    let elog_beta = state.q_beta.mean_log();
    let beta_mean = state.q_beta.mean();
    let beta_totals: Vec<f64> = (0..k).map(|t| beta_mean[t * nv..(t + 1) * nv].iter().sum()).collect();
    let elog_theta = state.q_theta.mean_log();
    state
        .q_theta
        .shape
        .par_chunks_mut(k)
        .zip(state.q_theta.rate.par_chunks_mut(k))
        .enumerate()
        .for_each(|(d, (shape, rate))| {
            let mut phi = vec![0.0; k];
            shape.fill(a);
            let (terms, counts) = corpus.row(d);
            for (&v, &y) in terms.iter().zip(counts) {
                allocate(&elog_theta[d * k..(d + 1) * k], &elog_beta, v, nv, &mut phi);
                for t in 0..k {
                    shape[t] += y as f64 * phi[t];
                }
            }
            for t in 0..k {
                rate[t] = b + beta_totals[t];
            }
        });

    // topic factors
    let elog_theta = state.q_theta.mean_log();
    let theta_mean = state.q_theta.mean();
    let mut theta_totals = vec![0.0; k];
    for row in theta_mean.chunks(k) {
        for t in 0..k {
            theta_totals[t] += row[t];
        }
    }
    let mut shape = vec![a; k * nv];
    let mut phi = vec![0.0; k];
    for d in 0..corpus.num_docs() {
        let (terms, counts) = corpus.row(d);
        for (&v, &y) in terms.iter().zip(counts) {
            allocate(&elog_theta[d * k..(d + 1) * k], &elog_beta, v, nv, &mut phi);
            for t in 0..k {
                shape[t * nv + v] += y as f64 * phi[t];
            }
        }
    }
    state.q_beta.shape = shape;
    for (row, total) in state.q_beta.rate.chunks_mut(nv).zip(&theta_totals) {
        row.fill(b + total);
    }
    Ok(())
}

/// E_q[log Gamma(x; a, b)] - E_q[log q(x)] summed over a Gamma family.
fn gamma_prior_minus_entropy(q: &GammaFamily, a: f64, b: f64) -> f64 {
    let log_norm_prior = a * b.ln() - ln_gamma(a);
    q.shape
        .iter()
        .zip(&q.rate)
        .map(|(&s, &r)| {
            let elog = digamma(s) - r.ln();
            let mean = s / r;
            let prior = log_norm_prior + (a - 1.0) * elog - b * mean;
            let log_q = s * r.ln() - ln_gamma(s) + (s - 1.0) * elog - r * mean;
            prior - log_q
        })
        .sum()
}

/// Closed-form ELBO with the multinomial allocations at their optimum.
pub fn pf_elbo(state: &PfState, corpus: &SparseCorpus) -> Result<f64> {
    state.check(corpus)?;
    let k = state.num_topics;
    let nv = corpus.num_terms();
    let elog_theta = state.q_theta.mean_log();
    let elog_beta = state.q_beta.mean_log();

    let mut data = 0.0;
    let mut terms_buf = vec![0.0; k];
    for d in 0..corpus.num_docs() {
        let (terms, counts) = corpus.row(d);
        for (&v, &y) in terms.iter().zip(counts) {
            let mut max = f64::NEG_INFINITY;
            for t in 0..k {
                terms_buf[t] = elog_theta[d * k + t] + elog_beta[t * nv + v];
                max = max.max(terms_buf[t]);
            }
            let lse = max + terms_buf.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            let y = y as f64;
            data += y * lse - ln_gamma(y + 1.0);
        }
    }
    let theta_mean = state.q_theta.mean();
    let beta_mean = state.q_beta.mean();
    for t in 0..k {
        let theta_total: f64 = theta_mean.iter().skip(t).step_by(k).sum();
        let beta_total: f64 = beta_mean[t * nv..(t + 1) * nv].iter().sum();
        data -= theta_total * beta_total;
    }

    Ok(data
        + gamma_prior_minus_entropy(&state.q_theta, state.a, state.b)
        + gamma_prior_minus_entropy(&state.q_beta, state.a, state.b))
}

/// Posterior means of a converged (or budget-exhausted) fit.
#[derive(Clone, Debug, PartialEq)]
pub struct Pretrained {
    pub num_topics: usize,
    /// D x K, row-major
    pub theta: Vec<f64>,
    /// K x V, row-major
    pub beta: Vec<f64>,
    pub elbo_trace: Vec<(usize, f64)>,
}

const CONVERGENCE_TOL: f64 = 1e-6;

pub fn pretrain(
    corpus: &SparseCorpus,
    num_topics: usize,
    a: f64,
    b: f64,
    sweeps: usize,
    seed: u64,
) -> Result<Pretrained> {
    if num_topics == 0 || sweeps == 0 {
        return Err(Error::Invalid(
            "pretraining needs at least one topic and one sweep".into(),
        ));
    }
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Invalid(format!(
            "Gamma prior parameters must be positive, got ({a}, {b})"
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut state = PfState::random(corpus.num_docs(), corpus.num_terms(), num_topics, a, b, &mut rng);
    let mut trace = Vec::with_capacity(sweeps);
    let mut prev = f64::NAN;
    for sweep in 0..sweeps {
        cavi_step(&mut state, corpus)?;
        let elbo = pf_elbo(&state, corpus)?;
        trace.push((sweep, elbo));
        if ((elbo - prev) / prev.abs()).abs() < CONVERGENCE_TOL {
            break;
        }
        prev = elbo;
    }
    Ok(Pretrained {
        num_topics,
        theta: state.q_theta.mean(),
        beta: state.q_beta.mean(),
        elbo_trace: trace,
    })
}
