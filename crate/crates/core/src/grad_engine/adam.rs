use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Gradient, VariationalState};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for a list of parameter arrays. Updates
/// ascend the objective.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

const PAR_THRESHOLD: usize = 1 << 14;

impl AdamState {
    pub fn new(config: AdamConfig, lens: &[usize]) -> Self {
        AdamState {
            config,
            t: 0,
            m: lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_state(config: AdamConfig, state: &VariationalState) -> Self {
        Self::new(config, &state.param_lens())
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer tracks {} arrays, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::ShapeMismatch(format!("array {i} changed length")));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p += lr * m_hat / (v_hat.sqrt() + eps);
        };
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.len() >= PAR_THRESHOLD {
                p.par_iter_mut()
                    .zip(g.par_iter())
                    .zip(m.par_iter_mut().zip(v.par_iter_mut()))
                    .for_each(|((p, &g), (m, v))| update(p, g, m, v));
            } else {
                for ((p, &g), (m, v)) in p.iter_mut().zip(g.iter()).zip(m.iter_mut().zip(v.iter_mut())) {
                    update(p, g, m, v);
                }
            }
        }
        Ok(())
    }

    pub fn step_state(&mut self, state: &mut VariationalState, grad: &Gradient) -> Result<()> {
        let grads = grad.as_slices();
        let mut params = state.params_mut();
        self.step(&mut params, &grads)
    }
}

/// One Adam ascent step on raw arrays.
pub fn adam_step(adam: &mut AdamState, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
    adam.step(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(config: AdamConfig, start: &[f64], grads: &[&[f64]]) -> Vec<f64> {
        let mut p = start.to_vec();
        let mut adam = AdamState::new(config, &[p.len()]);
        for g in grads {
            adam.step(&mut [&mut p], &[g]).unwrap();
        }
        p
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig {
            lr: 0.001,
            ..Default::default()
        };
        let p = run(cfg, &[0.0, 5.0], &[&[1.0, 1.0]]);
        assert!((p[0] - 0.001).abs() < 1e-10);
        assert!((p[1] - 5.001).abs() < 1e-10);
    }

    #[test]
    fn zero_gradient_does_not_move() {
        let p = run(AdamConfig::default(), &[1.5, -2.0], &[&[0.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(p, vec![1.5, -2.0]);
    }

    #[test]
    fn moment_free_limit_is_sign_scaling() {
        let cfg = AdamConfig {
            lr: 0.1,
            beta1: 0.0,
            beta2: 0.0,
            eps: 1e-8,
        };
        let g = [2.0, -0.5];
        let p = run(cfg, &[0.0, 0.0], &[&g, &g]);
        for i in 0..2 {
            let expected = 2.0 * 0.1 * g[i] / (g[i].abs() + 1e-8);
            assert!((p[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut adam = AdamState::new(AdamConfig::default(), &[2]);
        let mut p = vec![0.0; 3];
        assert!(adam.step(&mut [&mut p], &[&[0.0, 0.0, 0.0]]).is_err());
    }

    proptest! {
        #[test]
        fn zero_learning_rate_is_identity(
            start in prop::collection::vec(-10.0f64..10.0, 1..8),
            scale in -100.0f64..100.0,
        ) {
            let g: Vec<f64> = start.iter().map(|x| x * scale + 1.0).collect();
            let cfg = AdamConfig { lr: 0.0, ..Default::default() };
            let p = run(cfg, &start, &[&g, &g, &g]);
            prop_assert_eq!(p, start);
        }
    }
}
