#![allow(dead_code)]

use rand::Rng as _;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, Discrete, Gamma, LogNormal, Normal, Poisson};
use tbip::corpus::SparseCorpus;
use tbip::grad_engine::{elbo_estimate, Likelihood, NoiseDraw, VariationalState};
use tbip::math::{seeded_rng, Rng};
use tbip::tbip::{init_state, PriorConfig, BETA, ETA, THETA, X};

/// Physicists' Gauss-Hermite nodes and weights (weight function exp(-x^2)),
/// by Newton iteration on the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Nodes and weights for expectations under N(0, 1).
pub fn standard_normal_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_hermite(n);
    let sqrt_pi = std::f64::consts::PI.sqrt();
    (
        x.iter().map(|v| v * std::f64::consts::SQRT_2).collect(),
        w.iter().map(|v| v / sqrt_pi).collect(),
    )
}

pub fn normals(rng: &mut Rng, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Dense random count corpus with every document non-empty.
pub fn random_corpus(
    num_docs: usize,
    num_terms: usize,
    authors: &[usize],
    num_authors: usize,
    seed: u64,
) -> SparseCorpus {
    let mut rng = seeded_rng(seed);
    let mut entries = Vec::new();
    for d in 0..num_docs {
        for v in 0..num_terms {
            let c = rng.random_range(0..4u32);
            entries.push((d, v, if v == 0 { c.max(1) } else { c }));
        }
    }
    let names = (0..num_authors).map(|s| format!("s{s}")).collect();
    SparseCorpus::from_entries(num_docs, num_terms, entries, authors.to_vec(), names).unwrap()
}

/// Largest relative discrepancy between the analytic gradient and central
/// finite differences of the single-sample ELBO, over every parameter.
/// Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn max_fd_error(
    state: &VariationalState,
    lik: &dyn Likelihood,
    batch: &[usize],
    n_total: usize,
    z: &NoiseDraw,
    h: f64,
    floor: f64,
) -> f64 {
    let grad = tbip::grad_engine::gradient(state, lik, batch, n_total, z).unwrap();
    let f = |s: &VariationalState| elbo_estimate(s, lik, batch, n_total, z).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..state.blocks.len() {
        for j in 0..state.blocks[i].family.len() {
            for which in 0..2 {
                let mut plus = state.clone();
                let mut minus = state.clone();
                {
                    let (p, m) = (&mut plus.blocks[i].family, &mut minus.blocks[i].family);
                    if which == 0 {
                        p.mu[j] += h;
                        m.mu[j] -= h;
                    } else {
                        p.log_sigma[j] += h;
                        m.log_sigma[j] -= h;
                    }
                }
                let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
                let analytic = if which == 0 {
                    grad.mu[i][j]
                } else {
                    grad.log_sigma[i][j]
                };
                let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
                worst = worst.max(err);
            }
        }
    }
    worst
}

pub fn pearson_abs(a: &[f64], b: &[f64]) -> f64 {
    tbip::analysis::pearson(a, b).unwrap().abs()
}

pub fn letters(i: usize) -> String {
    let a = (b'a' + (i / 26) as u8) as char;
    let b = (b'a' + (i % 26) as u8) as char;
    format!("{a}{b}")
}

/// JSONL speeches from `num_authors` speakers spread evenly over [-1, 1].
/// Each speech is about one of three topics. Half of its words are the
/// topic's neutral terms; the rest are the topic's left or right framing,
/// left with probability `sigmoid(-2.5 x)`. Returns the positions.
pub fn write_text_corpus(path: &std::path::Path, num_authors: usize, docs_per_author: usize, seed: u64) -> Vec<f64> {
    use std::fmt::Write as _;
    let mut rng = seeded_rng(seed);
    let xs: Vec<f64> = (0..num_authors)
        .map(|s| -1.0 + 2.0 * s as f64 / (num_authors - 1) as f64)
        .collect();
    let mut out = String::new();
    for (s, &x) in xs.iter().enumerate() {
        let p_left = 1.0 / (1.0 + (2.5 * x).exp());
        for d in 0..docs_per_author {
            let topic = letters(rng.random_range(0..3));
            let words: Vec<String> = (0..60)
                .map(|_| {
                    if rng.random::<f64>() < 0.5 {
                        format!("topic{topic}word{}", letters(rng.random_range(0..10)))
                    } else if rng.random::<f64>() < p_left {
                        format!("topic{topic}left{}", letters(rng.random_range(0..5)))
                    } else {
                        format!("topic{topic}right{}", letters(rng.random_range(0..5)))
                    }
                })
                .collect();
            let line = serde_json::json!({
                "id": format!("s{s}_d{d}"),
                "author": format!("speaker{}", letters(s)),
                "text": words.join(" "),
            });
            writeln!(out, "{line}").unwrap();
        }
    }
    std::fs::write(path, out).unwrap();
    xs
}

pub fn one_cell_corpus(y: u32) -> SparseCorpus {
    SparseCorpus::from_entries(1, 1, vec![(0, 0, y)], vec![0], vec!["s".into()]).unwrap()
}

/// `(mu, sigma)` of theta, beta, eta and x.
pub const Q: [(f64, f64); 4] = [(0.2, 0.3), (-0.1, 0.25), (0.4, 0.5), (-0.6, 0.4)];

pub fn one_cell_state(priors: &PriorConfig) -> VariationalState {
    let mut state = init_state(&[1.0], &[1.0], 1, priors, 0).unwrap();
    for (i, &(mu, sigma)) in [THETA, BETA, ETA, X].iter().zip(&Q) {
        state.blocks[*i].family.mu[0] = mu;
        state.blocks[*i].family.log_sigma[0] = sigma.ln();
    }
    state
}

/// Expected ELBO by a 4-dimensional tensor Gauss-Hermite rule, with every
/// density taken from statrs.
pub fn quadrature_elbo(y: u64, w: f64, priors: &PriorConfig, nodes: usize) -> f64 {
    let (z, wt) = standard_normal_rule(nodes);
    let gamma = Gamma::new(priors.a, priors.b).unwrap();
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let q_theta = LogNormal::new(Q[0].0, Q[0].1).unwrap();
    let q_beta = LogNormal::new(Q[1].0, Q[1].1).unwrap();
    let q_eta = Normal::new(Q[2].0, Q[2].1).unwrap();
    let q_x = Normal::new(Q[3].0, Q[3].1).unwrap();
    let mut total = 0.0;
    for (i, &zt) in z.iter().enumerate() {
        let theta = (Q[0].0 + Q[0].1 * zt).exp();
        let ft = gamma.ln_pdf(theta) - q_theta.ln_pdf(theta);
        for (j, &zb) in z.iter().enumerate() {
            let beta = (Q[1].0 + Q[1].1 * zb).exp();
            let fb = gamma.ln_pdf(beta) - q_beta.ln_pdf(beta);
            for (k, &ze) in z.iter().enumerate() {
                let eta = Q[2].0 + Q[2].1 * ze;
                let fe = std_normal.ln_pdf(eta) - q_eta.ln_pdf(eta);
                for (l, &zx) in z.iter().enumerate() {
                    let x = Q[3].0 + Q[3].1 * zx;
                    let fx = std_normal.ln_pdf(x) - q_x.ln_pdf(x);
                    let rate = w * theta * beta * (x * eta).exp();
                    let ll = Poisson::new(rate).unwrap().ln_pmf(y);
                    total += wt[i] * wt[j] * wt[k] * wt[l] * (ft + fb + fe + fx + ll);
                }
            }
        }
    }
    total
}
