//! Reparameterized Monte Carlo ELBO estimates and their exact gradients.
//!
//! A [`VariationalState`] is a list of named blocks. Each block holds a
//! mean-field family (Gaussian or lognormal, scales stored as `log_sigma`)
//! together with the prior of the latent variables it approximates. Models
//! contribute only a [`Likelihood`]: the log-likelihood of a batch of units
//! and its derivative with respect to the sampled latent values. Everything
//! else (priors, entropy, the chain rule through the reparameterization) is
//! handled here.
//!
//! For a fixed noise draw `z` the single-sample estimate is
//!
//! ```text
//! elbo(z) = log p(s) + (N / |B|) * sum_{d in B} log p(y_d | s) - log q(s)
//! ```
//!
//! with `s = mu + sigma * z` (Gaussian) or `s = exp(mu + sigma * z)`
//! (lognormal). [`elbo_and_gradient`] returns the exact derivative of this
//! function of `(mu, log_sigma)`.

mod adam;
mod svi;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use svi::{run_svi, sample_batch, SviConfig};

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ln_gamma, Rng, LN_2PI};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyKind {
    Gaussian,
    LogNormal,
}

/// A fully factorized Gaussian or lognormal family over an array of latents.
#[derive(Clone, Debug, PartialEq)]
pub struct Family {
    pub kind: FamilyKind,
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl Family {
    pub fn new(kind: FamilyKind, mu: Vec<f64>, log_sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != log_sigma.len() {
            return Err(Error::ShapeMismatch(format!(
                "location has {} entries but scale has {}",
                mu.len(),
                log_sigma.len()
            )));
        }
        Ok(Family { kind, mu, log_sigma })
    }

    pub fn gaussian(mu: Vec<f64>, log_sigma: Vec<f64>) -> Result<Self> {
        Self::new(FamilyKind::Gaussian, mu, log_sigma)
    }

    pub fn lognormal(mu: Vec<f64>, log_sigma: Vec<f64>) -> Result<Self> {
        Self::new(FamilyKind::LogNormal, mu, log_sigma)
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|l| l.exp()).collect()
    }

    /// Posterior means: `mu` for Gaussians, `exp(mu + sigma^2 / 2)` for lognormals.
    pub fn mean(&self) -> Vec<f64> {
        match self.kind {
            FamilyKind::Gaussian => self.mu.clone(),
            FamilyKind::LogNormal => self
                .mu
                .iter()
                .zip(&self.log_sigma)
                .map(|(m, l)| (m + 0.5 * (2.0 * l).exp()).exp())
                .collect(),
        }
    }

    /// `z * sigma + mu`, exponentiated for lognormal families.
    pub fn reparameterize(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "noise has {} entries, family has {}",
                z.len(),
                self.len()
            )));
        }
        let it = self
            .mu
            .iter()
            .zip(&self.log_sigma)
            .zip(z)
            .map(|((m, l), z)| z * l.exp() + m);
        Ok(match self.kind {
            FamilyKind::Gaussian => it.collect(),
            FamilyKind::LogNormal => it.map(f64::exp).collect(),
        })
    }

    /// Log density of the family at `sample`. The lognormal density
    /// includes the `-log(sample)` Jacobian.
    pub fn log_density(&self, sample: &[f64]) -> Result<f64> {
        if sample.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "sample has {} entries, family has {}",
                sample.len(),
                self.len()
            )));
        }
        let mut total = 0.0;
        for ((&m, &l), &s) in self.mu.iter().zip(&self.log_sigma).zip(sample) {
            let (value, jac) = match self.kind {
                FamilyKind::Gaussian => (s, 0.0),
                FamilyKind::LogNormal => {
                    if s <= 0.0 {
                        return Err(Error::OutOfSupport { value: s });
                    }
                    let ls = s.ln();
                    (ls, ls)
                }
            };
            let u = (value - m) / l.exp();
            total += -0.5 * LN_2PI - l - 0.5 * u * u - jac;
        }
        Ok(total)
    }
}

/// Free function form of [`Family::reparameterize`].
pub fn reparameterize(family: &Family, z: &[f64]) -> Result<Vec<f64>> {
    family.reparameterize(z)
}

/// Prior over every element of a block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Prior {
    Gamma { shape: f64, rate: f64 },
    Normal { mean: f64, sd: f64 },
}

impl Prior {
    pub const STANDARD_NORMAL: Prior = Prior::Normal { mean: 0.0, sd: 1.0 };

    pub fn log_density(&self, s: f64) -> Result<f64> {
        match *self {
            Prior::Gamma { shape, rate } => {
                if s <= 0.0 {
                    return Err(Error::OutOfSupport { value: s });
                }
                Ok(shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * s.ln() - rate * s)
            }
            Prior::Normal { mean, sd } => {
                let u = (s - mean) / sd;
                Ok(-0.5 * LN_2PI - sd.ln() - 0.5 * u * u)
            }
        }
    }

    /// d/ds log p(s)
    pub fn grad_log_density(&self, s: f64) -> f64 {
        match *self {
            Prior::Gamma { shape, rate } => (shape - 1.0) / s - rate,
            Prior::Normal { mean, sd } => -(s - mean) / (sd * sd),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub name: String,
    pub family: Family,
    pub prior: Prior,
}

/// Mean-field variational parameters, one [`Block`] per latent array.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VariationalState {
    pub blocks: Vec<Block>,
}

/// One standard-normal draw per latent, block by block.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseDraw(pub Vec<Vec<f64>>);

impl NoiseDraw {
    pub fn zeros(state: &VariationalState) -> Self {
        NoiseDraw(state.blocks.iter().map(|b| vec![0.0; b.family.len()]).collect())
    }
}

impl VariationalState {
    pub fn push(&mut self, name: impl Into<String>, family: Family, prior: Prior) {
        self.blocks.push(Block {
            name: name.into(),
            family,
            prior,
        });
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }

    pub fn block(&self, name: &str) -> &Block {
        &self.blocks[self.index_of(name).unwrap_or_else(|| panic!("no block named {name}"))]
    }

    pub fn block_mut(&mut self, name: &str) -> &mut Block {
        let i = self.index_of(name).unwrap_or_else(|| panic!("no block named {name}"));
        &mut self.blocks[i]
    }

    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(|b| 2 * b.family.len()).sum()
    }

    pub fn sample_noise(&self, rng: &mut Rng) -> NoiseDraw {
        NoiseDraw(
            self.blocks
                .iter()
                .map(|b| (0..b.family.len()).map(|_| rng.sample(StandardNormal)).collect())
                .collect(),
        )
    }

    pub fn reparameterize(&self, z: &NoiseDraw) -> Result<Vec<Vec<f64>>> {
        if z.0.len() != self.blocks.len() {
            return Err(Error::ShapeMismatch(format!(
                "noise has {} blocks, state has {}",
                z.0.len(),
                self.blocks.len()
            )));
        }
        self.blocks
            .iter()
            .zip(&z.0)
            .map(|(b, z)| b.family.reparameterize(z))
            .collect()
    }

    /// Parameter arrays in the order `mu_0, log_sigma_0, mu_1, ...`.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.blocks
            .iter_mut()
            .flat_map(|b| [b.family.mu.as_mut_slice(), b.family.log_sigma.as_mut_slice()])
            .collect()
    }

    pub fn param_lens(&self) -> Vec<usize> {
        self.blocks.iter().flat_map(|b| [b.family.len(); 2]).collect()
    }
}

/// Observation model plugged into the ELBO.
pub trait Likelihood: Sync {
    /// Number of exchangeable units (documents, bills, ...) minibatches are drawn from.
    fn num_units(&self) -> usize;

    /// Sum of the log-likelihoods of the units in `batch` at the sampled
    /// latents. When `grad` is given, the derivative with respect to every
    /// sampled value is added into it (same layout as `samples`).
    fn log_likelihood(&self, samples: &[Vec<f64>], batch: &[usize], grad: Option<&mut [Vec<f64>]>) -> Result<f64>;
}

/// `(log p(s), log q(s))` summed over all blocks.
pub fn entropy_and_prior(state: &VariationalState, samples: &[Vec<f64>]) -> Result<(f64, f64)> {
    let mut log_prior = 0.0;
    let mut log_q = 0.0;
    for (b, s) in state.blocks.iter().zip(samples) {
        for &v in s {
            log_prior += b.prior.log_density(v)?;
        }
        log_q += b.family.log_density(s)?;
    }
    Ok((log_prior, log_q))
}

/// The three parts of a single-sample ELBO estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboTerms {
    pub log_prior: f64,
    /// Log-likelihood of the batch already multiplied by `N / |batch|`.
    pub log_likelihood: f64,
    pub log_q: f64,
}

impl ElboTerms {
    pub fn value(&self) -> f64 {
        self.log_prior + self.log_likelihood - self.log_q
    }
}

/// Derivatives of the estimate with respect to every `mu` and `log_sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub mu: Vec<Vec<f64>>,
    pub log_sigma: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn zeros_like(state: &VariationalState) -> Self {
        Gradient {
            mu: state.blocks.iter().map(|b| vec![0.0; b.family.len()]).collect(),
            log_sigma: state.blocks.iter().map(|b| vec![0.0; b.family.len()]).collect(),
        }
    }

    /// Arrays in the same order as [`VariationalState::params_mut`].
    pub fn as_slices(&self) -> Vec<&[f64]> {
        self.mu
            .iter()
            .zip(&self.log_sigma)
            .flat_map(|(m, l)| [m.as_slice(), l.as_slice()])
            .collect()
    }

    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        for (a, b) in self
            .mu
            .iter_mut()
            .chain(&mut self.log_sigma)
            .zip(other.mu.iter().chain(&other.log_sigma))
        {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mu
            .iter()
            .chain(&self.log_sigma)
            .all(|a| a.iter().all(|x| x.is_finite()))
    }
}

fn check_batch(batch: &[usize], n_total: usize) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty minibatch".into()));
    }
    if n_total < batch.len() {
        return Err(Error::Invalid(format!(
            "population size {n_total} smaller than batch size {}",
            batch.len()
        )));
    }
    Ok(n_total as f64 / batch.len() as f64)
}

/// Single-sample ELBO estimate split into its terms.
pub fn elbo_terms(
    state: &VariationalState,
    lik: &dyn Likelihood,
    batch: &[usize],
    n_total: usize,
    z: &NoiseDraw,
) -> Result<ElboTerms> {
    let scale = check_batch(batch, n_total)?;
    let samples = state.reparameterize(z)?;
    let (log_prior, log_q) = entropy_and_prior(state, &samples)?;
    let ll = lik.log_likelihood(&samples, batch, None)?;
    Ok(ElboTerms {
        log_prior,
        log_likelihood: scale * ll,
        log_q,
    })
}

pub fn elbo_estimate(
    state: &VariationalState,
    lik: &dyn Likelihood,
    batch: &[usize],
    n_total: usize,
    z: &NoiseDraw,
) -> Result<f64> {
    elbo_terms(state, lik, batch, n_total, z).map(|t| t.value())
}

/// ELBO estimate and its exact gradient for the fixed draw `z`.
pub fn elbo_and_gradient(
    state: &VariationalState,
    lik: &dyn Likelihood,
    batch: &[usize],
    n_total: usize,
    z: &NoiseDraw,
) -> Result<(f64, Gradient)> {
    let scale = check_batch(batch, n_total)?;
    let samples = state.reparameterize(z)?;
    let (log_prior, log_q) = entropy_and_prior(state, &samples)?;

    let mut d_sample: Vec<Vec<f64>> = samples.iter().map(|s| vec![0.0; s.len()]).collect();
    let ll = lik.log_likelihood(&samples, batch, Some(&mut d_sample))?;

    let mut grad = Gradient::zeros_like(state);
    for (i, b) in state.blocks.iter().enumerate() {
        let f = &b.family;
        let (gm, gl) = (&mut grad.mu[i], &mut grad.log_sigma[i]);
        for j in 0..f.len() {
            let s = samples[i][j];
            let zs = z.0[i][j] * f.log_sigma[j].exp();
            // d/ds of log p(s) + scale * log p(y | s)
            let g = b.prior.grad_log_density(s) + scale * d_sample[i][j];
            match f.kind {
                FamilyKind::Gaussian => {
                    // -log q = const + log_sigma
                    gm[j] = g;
                    gl[j] = g * zs + 1.0;
                }
                FamilyKind::LogNormal => {
                    // -log q = const + log_sigma + log s, with log s = mu + zs
                    gm[j] = g * s + 1.0;
                    gl[j] = (g * s + 1.0) * zs + 1.0;
                }
            }
        }
    }
    Ok((log_prior + scale * ll - log_q, grad))
}

pub fn gradient(
    state: &VariationalState,
    lik: &dyn Likelihood,
    batch: &[usize],
    n_total: usize,
    z: &NoiseDraw,
) -> Result<Gradient> {
    elbo_and_gradient(state, lik, batch, n_total, z).map(|(_, g)| g)
}
