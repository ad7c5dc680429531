use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{elbo_and_gradient, AdamConfig, AdamState, Gradient, Likelihood, VariationalState};
use crate::error::{Error, Result};
use crate::math::Rng;

/// Settings of the stochastic gradient ascent loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SviConfig {
    pub batch_size: usize,
    pub max_steps: usize,
    pub adam: AdamConfig,
    pub mc_samples: usize,
    pub report_interval: usize,
}

/// A minibatch of distinct unit indices in increasing order; the full
/// population when `batch_size >= n`.
pub fn sample_batch(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<usize> {
    if batch_size >= n {
        return (0..n).collect();
    }
    let mut batch = index::sample(rng, n, batch_size).into_vec();
    batch.sort_unstable();
    batch
}

/// Run Adam on reparameterized ELBO gradients. Returns the ELBO estimates
/// recorded every `report_interval` steps and at the final step.
pub fn run_svi(
    state: &mut VariationalState,
    lik: &dyn Likelihood,
    cfg: &SviConfig,
    rng: &mut Rng,
) -> Result<Vec<(usize, f64)>> {
    if cfg.batch_size == 0 || cfg.mc_samples == 0 {
        return Err(Error::Invalid(
            "batch size and Monte Carlo samples must be positive".into(),
        ));
    }
    let n = lik.num_units();
    let mut adam = AdamState::for_state(cfg.adam, state);
    let mut trace = Vec::new();
    let interval = cfg.report_interval.max(1);
    for step in 0..cfg.max_steps {
        let batch = sample_batch(n, cfg.batch_size, rng);
        let mut elbo = 0.0;
        let mut grad = Gradient::zeros_like(state);
        let w = 1.0 / cfg.mc_samples as f64;
        for _ in 0..cfg.mc_samples {
            let z = state.sample_noise(rng);
            let (e, g) = match elbo_and_gradient(state, lik, &batch, n, &z) {
                Ok(r) => r,
                Err(Error::RateOverflow { .. }) | Err(Error::OutOfSupport { .. }) => {
                    return Err(Error::NonFiniteElbo { step })
                }
                Err(e) => return Err(e),
            };
            elbo += w * e;
            grad.add_scaled(&g, w);
        }
        if !elbo.is_finite() || !grad.is_finite() {
            return Err(Error::NonFiniteElbo { step });
        }
        if step % interval == 0 || step + 1 == cfg.max_steps {
            trace.push((step, elbo));
        }
        adam.step_state(state, &grad)?;
    }
    Ok(trace)
}
