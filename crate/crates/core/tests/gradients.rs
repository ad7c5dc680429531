mod common;

use common::{max_fd_error, normals, random_corpus};
use proptest::prelude::*;
use tbip::baselines::{DebatePositions, FactorLikelihood, WordfishLikelihood};
use tbip::grad_engine::{
    elbo_and_gradient, elbo_estimate, elbo_terms, gradient, Family, Likelihood, Prior, VariationalState,
};
use tbip::math::seeded_rng;
use tbip::tbip::{init_state, PriorConfig, TbipLikelihood, ETA, X};
use tbip::vote::{VoteLikelihood, VoteMatrix};

const H: f64 = 1e-5;
const FLOOR: f64 = 1e-3;

fn tbip_instance(seed: u64) -> (tbip::corpus::SparseCorpus, VariationalState) {
    let (d, v, k, s) = (3, 5, 2, 2);
    let corpus = random_corpus(d, v, &[0, 1, 0], s, seed);
    let mut rng = seeded_rng(seed + 100);
    let theta: Vec<f64> = normals(&mut rng, d * k, 0.3).iter().map(|z| z.exp()).collect();
    let beta: Vec<f64> = normals(&mut rng, k * v, 0.3).iter().map(|z| z.exp()).collect();
    let mut state = init_state(&theta, &beta, s, &PriorConfig::default(), seed).unwrap();
    for b in &mut state.blocks {
        let n = b.family.len();
        b.family.log_sigma = normals(&mut rng, n, 0.3).iter().map(|z| z + 0.2f64.ln()).collect();
    }
    state.blocks[ETA].family.mu = normals(&mut rng, k * v, 0.5);
    state.blocks[X].family.mu = normals(&mut rng, s, 0.8);
    (corpus, state)
}

#[test]
fn tbip_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let (corpus, state) = tbip_instance(seed);
        let weights = [0.8, 1.2];
        let lik = TbipLikelihood::new(&corpus, &weights, 2).unwrap();
        let z = state.sample_noise(&mut seeded_rng(seed + 7));
        let err = max_fd_error(&state, &lik, &[0, 1, 2], 3, &z, H, FLOOR);
        assert!(err <= 1e-4, "seed {seed}: max relative error {err}");
        let err = max_fd_error(&state, &lik, &[0, 2], 3, &z, H, FLOOR);
        assert!(err <= 1e-4, "seed {seed} minibatch: max relative error {err}");
    }
}

#[test]
fn vote_gradient_matches_finite_differences() {
    let names: Vec<String> = (0..4).map(|i| format!("l{i}")).collect();
    let bills: Vec<String> = (0..6).map(|j| format!("b{j}")).collect();
    let entries: Vec<(usize, usize, bool)> = (0..4)
        .flat_map(|i| (0..6).map(move |j| (i, j, (i * 7 + j * 3) % 5 < 2)))
        .filter(|&(i, j, _)| (i + j) % 7 != 3)
        .collect();
    let votes = VoteMatrix::new(names, bills, &entries).unwrap();
    let lik = VoteLikelihood::new(&votes);
    let mut state = tbip::vote::init_vote_state(&votes, 3).unwrap();
    let mut rng = seeded_rng(11);
    for b in &mut state.blocks {
        let n = b.family.len();
        b.family.mu = normals(&mut rng, n, 1.0);
    }
    let z = state.sample_noise(&mut rng);
    assert!(max_fd_error(&state, &lik, &[0, 1, 2, 3, 4, 5], 6, &z, H, FLOOR) <= 1e-4);
    assert!(max_fd_error(&state, &lik, &[1, 4], 6, &z, H, FLOOR) <= 1e-4);
}

#[test]
fn wordfish_gradient_matches_finite_differences() {
    let corpus = random_corpus(4, 6, &[0, 1, 2, 3], 4, 5);
    let lik = WordfishLikelihood::new(&corpus);
    let mut rng = seeded_rng(3);
    let mut state = VariationalState::default();
    for (name, n) in [("alpha", 4), ("psi", 6), ("b", 6), ("x", 4)] {
        let fam = Family::gaussian(normals(&mut rng, n, 0.5), vec![0.2f64.ln(); n]).unwrap();
        state.push(name, fam, Prior::STANDARD_NORMAL);
    }
    let z = state.sample_noise(&mut rng);
    assert!(max_fd_error(&state, &lik, &[0, 1, 2, 3], 4, &z, H, FLOOR) <= 1e-4);
}

#[test]
fn factor_model_gradient_matches_finite_differences() {
    let debates = vec![
        DebatePositions {
            debate: "a".into(),
            authors: vec![0, 1, 2],
            positions: vec![-1.0, 0.2, 0.9],
        },
        DebatePositions {
            debate: "b".into(),
            authors: vec![1, 2, 3],
            positions: vec![0.4, -0.3, 1.1],
        },
    ];
    let lik = FactorLikelihood::new(&debates);
    let mut rng = seeded_rng(9);
    let mut state = VariationalState::default();
    for (name, n) in [("x", 4), ("a", 2), ("b", 2)] {
        let fam = Family::gaussian(normals(&mut rng, n, 0.5), vec![0.3f64.ln(); n]).unwrap();
        state.push(name, fam, Prior::STANDARD_NORMAL);
    }
    state.push(
        "noise_var",
        Family::lognormal(vec![-0.5], vec![0.2f64.ln()]).unwrap(),
        Prior::Gamma { shape: 1.0, rate: 1.0 },
    );
    let z = state.sample_noise(&mut rng);
    assert!(max_fd_error(&state, &lik, &[0, 1], 2, &z, H, FLOOR) <= 1e-4);
}

#[test]
fn full_batch_needs_no_scaling() {
    let (corpus, state) = tbip_instance(1);
    let weights = [1.0, 1.0];
    let lik = TbipLikelihood::new(&corpus, &weights, 2).unwrap();
    let z = state.sample_noise(&mut seeded_rng(2));
    let samples = state.reparameterize(&z).unwrap();
    let ll = lik.log_likelihood(&samples, &[0, 1, 2], None).unwrap();
    let terms = elbo_terms(&state, &lik, &[0, 1, 2], 3, &z).unwrap();
    assert_eq!(terms.log_likelihood, ll);
}

#[test]
fn x_gradient_is_prior_only_when_eta_is_zero() {
    let (corpus, mut state) = tbip_instance(2);
    let weights = [1.0, 1.0];
    let lik = TbipLikelihood::new(&corpus, &weights, 2).unwrap();
    state.blocks[ETA].family.mu.iter_mut().for_each(|m| *m = 0.0);
    let mut z = state.sample_noise(&mut seeded_rng(4));
    z.0[ETA].iter_mut().for_each(|v| *v = 0.0);
    let g = gradient(&state, &lik, &[0, 1, 2], 3, &z).unwrap();
    let fam = &state.blocks[X].family;
    for s in 0..2 {
        let sample = fam.mu[s] + fam.log_sigma[s].exp() * z.0[X][s];
        assert!((g.mu[X][s] + sample).abs() < 1e-14);
    }
}

/// Likelihood part of the gradient: total minus the gradient with no data.
fn likelihood_gradient(
    state: &VariationalState,
    lik: &dyn Likelihood,
    n_total: usize,
    z: &tbip::grad_engine::NoiseDraw,
) -> Vec<f64> {
    struct NoData(usize);
    impl Likelihood for NoData {
        fn num_units(&self) -> usize {
            self.0
        }
        fn log_likelihood(&self, _: &[Vec<f64>], _: &[usize], _: Option<&mut [Vec<f64>]>) -> tbip::Result<f64> {
            Ok(0.0)
        }
    }
    let full = gradient(state, lik, &[0, 1], n_total, z).unwrap();
    let none = gradient(state, &NoData(n_total), &[0, 1], n_total, z).unwrap();
    let flat =
        |g: &tbip::grad_engine::Gradient| -> Vec<f64> { g.mu.iter().chain(&g.log_sigma).flatten().copied().collect() };
    flat(&full).iter().zip(flat(&none)).map(|(a, b)| a - b).collect()
}

#[test]
fn doubling_population_doubles_likelihood_gradient() {
    let (corpus, state) = tbip_instance(0);
    let weights = [1.0, 1.0];
    let lik = TbipLikelihood::new(&corpus, &weights, 2).unwrap();
    let z = state.sample_noise(&mut seeded_rng(5));
    let g2 = likelihood_gradient(&state, &lik, 2, &z);
    let g4 = likelihood_gradient(&state, &lik, 4, &z);
    for (a, b) in g2.iter().zip(&g4) {
        assert!((2.0 * a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} {b}");
    }
}

#[test]
fn standard_error_shrinks_with_more_draws() {
    let (corpus, state) = tbip_instance(0);
    let weights = [1.0, 1.0];
    let lik = TbipLikelihood::new(&corpus, &weights, 2).unwrap();
    let mut rng = seeded_rng(8);
    let mut se_of_mean = |m: usize| {
        let means: Vec<f64> = (0..30)
            .map(|_| {
                (0..m)
                    .map(|_| elbo_estimate(&state, &lik, &[0, 1, 2], 3, &state.sample_noise(&mut rng)).unwrap())
                    .sum::<f64>()
                    / m as f64
            })
            .collect();
        let mu = means.iter().sum::<f64>() / 30.0;
        (means.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 29.0).sqrt()
    };
    let se_small = se_of_mean(100);
    let se_large = se_of_mean(10_000);
    assert!(se_large < se_small, "{se_large} vs {se_small}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gradient_matches_finite_differences_on_random_instances(seed in 0u64..1_000_000) {
        let (corpus, state) = tbip_instance(seed);
        let weights = [0.7, 1.3];
        let lik = TbipLikelihood::new(&corpus, &weights, 2).unwrap();
        let z = state.sample_noise(&mut seeded_rng(seed ^ 0xabc));
        prop_assert!(max_fd_error(&state, &lik, &[0, 1, 2], 3, &z, H, FLOOR) <= 1e-4);
    }

    #[test]
    fn reparameterization_is_deterministic(seed in 0u64..1_000_000) {
        let (corpus, state) = tbip_instance(seed);
        let weights = [1.0, 1.0];
        let lik = TbipLikelihood::new(&corpus, &weights, 2).unwrap();
        let z = state.sample_noise(&mut seeded_rng(seed));
        prop_assert_eq!(state.reparameterize(&z).unwrap(), state.reparameterize(&z).unwrap());
        let a = elbo_and_gradient(&state, &lik, &[0, 1, 2], 3, &z).unwrap();
        let b = elbo_and_gradient(&state, &lik, &[0, 1, 2], 3, &z).unwrap();
        prop_assert_eq!(a.0.to_bits(), b.0.to_bits());
    }
}
