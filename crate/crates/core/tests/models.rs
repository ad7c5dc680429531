mod common;

use common::{normals, pearson_abs, random_corpus};
use proptest::prelude::*;
use rand::Rng as _;
use tbip::analysis::align;
use tbip::baselines::{
    fit_positions, train_wordfish, train_wordshoal, wordfish_rate, DebateLabeledCorpus, DebatePositions,
};
use tbip::corpus::SparseCorpus;
use tbip::grad_engine::{elbo_estimate, elbo_terms, Likelihood};
use tbip::math::{log_poisson, seeded_rng};
use tbip::pf::{cavi_step, pf_elbo, pretrain, PfState};
use tbip::synth::{
    self, sample_tbip, sample_votes, sample_wordfish, sample_wordshoal, SynthSpec, VoteSynthSpec, WordfishSynthSpec,
    WordshoalSynthSpec,
};
use tbip::tbip::{init_state, pf_rate, tbip_rate, train_tbip, PriorConfig, TbipLikelihood, TrainConfig, ETA, X};
use tbip::vote::{init_vote_state, train_vote, vote_prob, VoteLikelihood, VoteMatrix};

fn small_cfg(steps: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        num_topics: 3,
        batch_size: 64,
        max_steps: steps,
        seed,
        elbo_report_interval: 10,
        pretrain_sweeps: 50,
        ..TrainConfig::default()
    }
}

#[test]
fn pinned_ideology_reduces_to_poisson_factorization() {
    let corpus = random_corpus(6, 7, &[0, 1, 2, 0, 1, 2], 3, 4);
    let mut rng = seeded_rng(1);
    let k = 2;
    let theta: Vec<f64> = normals(&mut rng, 6 * k, 0.4).iter().map(|z| z.exp()).collect();
    let beta: Vec<f64> = normals(&mut rng, k * 7, 0.4).iter().map(|z| z.exp()).collect();
    let mut state = init_state(&theta, &beta, 3, &PriorConfig::default(), 2).unwrap();
    state.blocks[ETA].family.mu.iter_mut().for_each(|m| *m = 0.0);
    state.blocks[ETA].family.log_sigma.iter_mut().for_each(|l| *l = -40.0);
    let weights = [1.0; 3];
    let lik = TbipLikelihood::new(&corpus, &weights, k).unwrap();
    for draw in 0..5 {
        let z = state.sample_noise(&mut rng);
        let samples = state.reparameterize(&z).unwrap();
        assert!(samples[ETA].iter().all(|&e| e.abs() < 1e-15));
        let (ts, bs) = (&samples[0], &samples[1]);
        let mut expected = 0.0;
        for d in 0..6 {
            let rate = pf_rate(&ts[d * k..(d + 1) * k], bs);
            for (v, y) in corpus.dense_row(d).into_iter().enumerate() {
                expected += log_poisson(y, rate[v]);
            }
        }
        let terms = elbo_terms(&state, &lik, &[0, 1, 2, 3, 4, 5], 6, &z).unwrap();
        let tol = 1e-10 * expected.abs();
        assert!(
            (terms.log_likelihood - expected).abs() < tol,
            "draw {draw}: {} vs {expected}",
            terms.log_likelihood
        );
    }
}

#[test]
fn tbip_training_is_deterministic() {
    let (corpus, _) = sample_tbip(&SynthSpec {
        num_docs: 60,
        num_terms: 30,
        num_authors: 4,
        num_topics: 3,
        ..SynthSpec::default()
    })
    .unwrap();
    let a = train_tbip(&corpus, &small_cfg(200, 3), &PriorConfig::default(), None).unwrap();
    let b = train_tbip(&corpus, &small_cfg(200, 3), &PriorConfig::default(), None).unwrap();
    assert_eq!(a, b);
    assert!(a.theta_hat.iter().chain(&a.beta_hat).all(|&v| v > 0.0));
    assert!(a.x_hat.iter().all(|x| x.is_finite()));
}

#[test]
fn smoothed_elbo_rises_early_in_training() {
    let (corpus, _) = sample_tbip(&SynthSpec::default()).unwrap();
    let cfg = TrainConfig {
        num_topics: 5,
        batch_size: 256,
        max_steps: 1000,
        elbo_report_interval: 1,
        ..TrainConfig::default()
    };
    let fit = train_tbip(&corpus, &cfg, &PriorConfig::default(), None).unwrap();
    let window: Vec<f64> = fit
        .elbo_trace
        .chunks(100)
        .map(|c| c.iter().map(|e| e.1).sum::<f64>() / c.len() as f64)
        .collect();
    for pair in window.windows(2) {
        assert!(pair[1] >= pair[0] - 0.01 * pair[0].abs(), "{window:?}");
    }
}

#[test]
fn log_count_training_uses_transformed_corpus() {
    let (corpus, _) = sample_tbip(&SynthSpec {
        num_docs: 40,
        num_terms: 20,
        num_authors: 4,
        num_topics: 2,
        ..SynthSpec::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        use_log_transform: true,
        num_topics: 2,
        ..small_cfg(20, 0)
    };
    let fit = train_tbip(&corpus, &cfg, &PriorConfig::default(), None).unwrap();
    assert!(fit.config.use_log_transform);
    assert_eq!(fit.num_docs, 40);
}

#[test]
fn overflowing_training_reports_step() {
    let (corpus, _) = sample_tbip(&SynthSpec {
        num_docs: 40,
        num_terms: 20,
        num_authors: 4,
        num_topics: 2,
        ..SynthSpec::default()
    })
    .unwrap();
    let mut cfg = small_cfg(500, 0);
    cfg.adam.lr = 50.0;
    match train_tbip(&corpus, &cfg, &PriorConfig::default(), None) {
        Err(tbip::Error::NonFiniteElbo { step }) => assert!(step < 500),
        other => panic!("expected divergence, got {:?}", other.map(|f| f.x_hat)),
    }
}

#[test]
fn pf_recovers_rates() {
    let spec = SynthSpec {
        num_docs: 200,
        num_terms: 50,
        num_authors: 10,
        num_topics: 3,
        polarity_scale: 0.0,
        seed: 5,
        ..SynthSpec::default()
    };
    let (corpus, truth) = sample_tbip(&spec).unwrap();
    let fit = pretrain(&corpus, 3, 0.3, 0.3, 500, 1).unwrap();
    let (mut fitted, mut true_rates) = (Vec::new(), Vec::new());
    for d in 0..corpus.num_docs() {
        fitted.extend(pf_rate(&fit.theta[d * 3..(d + 1) * 3], &fit.beta));
        true_rates.extend(pf_rate(&truth.theta[d * 3..(d + 1) * 3], &truth.beta));
    }
    let r = tbip::analysis::pearson(&fitted, &true_rates).unwrap();
    assert!(r > 0.9, "rate correlation {r}");
}

#[test]
fn pf_elbo_is_monotone_on_random_matrix() {
    let mut rng = seeded_rng(77);
    let entries: Vec<(usize, usize, u32)> = (0..20)
        .flat_map(|d| (0..50).map(move |v| (d, v)))
        .map(|(d, v)| {
            (
                d,
                v,
                if rng.random::<f64>() < 0.4 {
                    rng.random_range(1..6)
                } else {
                    0
                },
            )
        })
        .collect();
    let corpus = SparseCorpus::from_entries(20, 50, entries, vec![0; 20], vec!["s".into()]).unwrap();
    let mut state = PfState::random(20, 50, 3, 0.3, 0.3, &mut seeded_rng(3));
    let mut prev = pf_elbo(&state, &corpus).unwrap();
    for sweep in 0..50 {
        cavi_step(&mut state, &corpus).unwrap();
        let next = pf_elbo(&state, &corpus).unwrap();
        assert!(next >= prev - 1e-9 * prev.abs(), "sweep {sweep}: {prev} -> {next}");
        prev = next;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sign_flip_leaves_rates_unchanged(
        k in 1usize..4,
        v in 1usize..6,
        seed in 0u64..1_000_000,
        x in -3.0f64..3.0,
        w in 0.1f64..3.0,
    ) {
        let mut rng = seeded_rng(seed);
        let theta: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..5.0)).collect();
        let beta: Vec<f64> = (0..k * v).map(|_| rng.random_range(0.01..5.0)).collect();
        let eta = normals(&mut rng, k * v, 1.0);
        let neg: Vec<f64> = eta.iter().map(|e| -e).collect();
        let a = tbip_rate(&theta, &beta, &eta, x, w).unwrap();
        let b = tbip_rate(&theta, &beta, &neg, -x, w).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        let zero = vec![0.0; k * v];
        let pf: Vec<f64> = pf_rate(&theta, &beta).iter().map(|r| w * r).collect();
        prop_assert_eq!(tbip_rate(&theta, &beta, &zero, x, w).unwrap(), pf);
        let alpha = rng.random_range(-3.0..3.0);
        prop_assert_eq!(vote_prob(alpha, eta[0], x).to_bits(), vote_prob(alpha, -eta[0], -x).to_bits());
        let psi = normals(&mut rng, v, 1.0);
        let bw = normals(&mut rng, v, 1.0);
        let nbw: Vec<f64> = bw.iter().map(|e| -e).collect();
        prop_assert_eq!(wordfish_rate(alpha, &psi, &bw, x).unwrap(), wordfish_rate(alpha, &psi, &nbw, -x).unwrap());
    }

    #[test]
    fn synthetic_corpora_are_valid(seed in 0u64..1000, polarity in 0.0f64..1.5) {
        let spec = SynthSpec { num_docs: 30, num_terms: 15, num_authors: 3, num_topics: 2, polarity_scale: polarity, seed, ..SynthSpec::default() };
        let (corpus, truth) = sample_tbip(&spec).unwrap();
        prop_assert_eq!(corpus.num_terms(), 15);
        prop_assert_eq!(corpus.num_authors(), 3);
        prop_assert!(corpus.entries().all(|(_, _, c)| c > 0));
        prop_assert_eq!(truth.theta.len(), corpus.num_docs() * 2);
        prop_assert_eq!(truth.beta.len(), 30);
    }
}

#[test]
fn zero_polarity_gives_factorization_counts() {
    let spec = SynthSpec {
        num_docs: 20,
        num_terms: 10,
        num_authors: 2,
        num_topics: 2,
        polarity_scale: 0.0,
        ..SynthSpec::default()
    };
    let (_, truth) = sample_tbip(&spec).unwrap();
    assert!(truth.eta.iter().all(|&e| e == 0.0));
    assert_eq!(sample_tbip(&spec).unwrap(), sample_tbip(&spec).unwrap());
}

#[test]
fn count_draws_match_rate() {
    let mut rng = seeded_rng(12);
    for lambda in [0.3, 2.5, 17.0] {
        let n = 100_000;
        let draws = synth::draw_counts(&vec![lambda; n], &mut rng);
        let mean = draws.iter().map(|&c| c as f64).sum::<f64>() / n as f64;
        let se = (lambda / n as f64).sqrt();
        assert!((mean - lambda).abs() <= 3.0 * se, "lambda {lambda}: mean {mean}");
    }
}

#[test]
fn vote_draws_match_probability() {
    let mut rng = seeded_rng(13);
    for (alpha, eta, x) in [(0.0, 1.0, 0.5), (-1.0, 2.0, 1.0), (0.5, -1.0, -0.3)] {
        let p = vote_prob(alpha, eta, x);
        let n = 100_000;
        let yeas = synth::draw_votes(&vec![p; n], &mut rng).iter().filter(|&&y| y).count();
        let rate = yeas as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((rate - p).abs() <= 3.0 * se, "p {p}: rate {rate}");
    }
}

#[test]
fn vote_recovery() {
    let (votes, truth) = sample_votes(&VoteSynthSpec::default()).unwrap();
    let fit = train_vote(
        &votes,
        &TrainConfig {
            max_steps: 3000,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert!(pearson_abs(&fit.x_hat, &truth.x) >= 0.95);
    let again = train_vote(
        &votes,
        &TrainConfig {
            max_steps: 3000,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert_eq!(fit.elbo_trace, again.elbo_trace);
}

#[test]
fn unanimous_votes_do_not_separate_lawmakers() {
    let names: Vec<String> = (0..10).map(|i| format!("l{i}")).collect();
    let bills: Vec<String> = (0..20).map(|j| format!("b{j}")).collect();
    let entries: Vec<_> = (0..10).flat_map(|i| (0..20).map(move |j| (i, j, true))).collect();
    let votes = VoteMatrix::new(names, bills, &entries).unwrap();
    let fit = train_vote(
        &votes,
        &TrainConfig {
            max_steps: 3000,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert!(fit.alpha_hat.iter().all(|&a| a > 0.0), "{:?}", fit.alpha_hat);
    // the shared intercept may be split between alpha and x * eta, but
    // every lawmaker must look the same
    let mean = fit.x_hat.iter().sum::<f64>() / 10.0;
    let sd = (fit.x_hat.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 10.0).sqrt();
    assert!(sd < 0.1 * mean.abs().max(1.0), "x {:?}", fit.x_hat);
    for j in 0..20 {
        let p: Vec<f64> = fit
            .x_hat
            .iter()
            .map(|&x| vote_prob(fit.alpha_hat[j], fit.eta_hat[j], x))
            .collect();
        assert!(p.iter().all(|&q| q > 0.9));
        let spread = p.iter().fold(0.0f64, |m, &q| m.max(q)) - p.iter().fold(1.0f64, |m, &q| m.min(q));
        assert!(spread < 0.02, "bill {j}: {p:?}");
    }
}

#[test]
fn shifting_ideal_points_lowers_the_elbo() {
    let (votes, _) = sample_votes(&VoteSynthSpec::default()).unwrap();
    let fit = train_vote(
        &votes,
        &TrainConfig {
            max_steps: 2000,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let lik = VoteLikelihood::new(&votes);
    let mut shifted = fit.state.clone();
    shifted.blocks[tbip::vote::X]
        .family
        .mu
        .iter_mut()
        .for_each(|x| *x += 5.0);
    let all: Vec<usize> = (0..votes.num_bills()).collect();
    let mut rng = seeded_rng(4);
    let (mut base, mut moved) = (0.0, 0.0);
    for _ in 0..200 {
        let z = fit.state.sample_noise(&mut rng);
        base += elbo_estimate(&fit.state, &lik, &all, all.len(), &z).unwrap();
        moved += elbo_estimate(&shifted, &lik, &all, all.len(), &z).unwrap();
    }
    assert!(moved < base, "{moved} vs {base}");
    assert!(init_vote_state(&votes, 0).unwrap().num_params() == 2 * (50 + 600));
}

#[test]
fn wordfish_recovery_and_null() {
    let (corpus, truth) = sample_wordfish(&WordfishSynthSpec::default()).unwrap();
    let cfg = TrainConfig {
        max_steps: 3000,
        ..TrainConfig::default()
    };
    let fit = train_wordfish(&corpus, &cfg).unwrap();
    assert!(pearson_abs(&fit.x_hat, &truth.x) >= 0.9);

    let mean_null: f64 = (0..3)
        .map(|seed| {
            let (c, t) = sample_wordfish(&WordfishSynthSpec {
                polarity_scale: 0.0,
                seed,
                ..WordfishSynthSpec::default()
            })
            .unwrap();
            let f = train_wordfish(&c, &TrainConfig { seed, ..cfg.clone() }).unwrap();
            pearson_abs(&f.x_hat, &t.x)
        })
        .sum::<f64>()
        / 3.0;
    assert!(mean_null < 0.3, "null correlation {mean_null}");
}

#[test]
fn wordshoal_recovery() {
    let (data, x) = sample_wordshoal(&WordshoalSynthSpec::default()).unwrap();
    let fit = train_wordshoal(
        &data,
        &TrainConfig {
            max_steps: 3000,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert!(pearson_abs(&fit.x_hat, &x) >= 0.85);
}

#[test]
fn single_debate_reproduces_stage_one() {
    let (data, _) = sample_wordshoal(&WordshoalSynthSpec {
        num_debates: 1,
        participation: 1.0,
        ..WordshoalSynthSpec::default()
    })
    .unwrap();
    let fit = train_wordshoal(
        &data,
        &TrainConfig {
            max_steps: 2000,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let deb = &fit.debates[0];
    let x: Vec<f64> = deb.authors.iter().map(|&s| fit.x_hat[s]).collect();
    let r = pearson_abs(&x, &deb.positions);
    assert!((1.0 - r).abs() <= 1e-6, "|corr| = {r}");
}

#[test]
fn stage_two_is_invariant_to_affine_rescaling() {
    let (data, _) = sample_wordshoal(&WordshoalSynthSpec::default()).unwrap();
    let cfg = TrainConfig {
        max_steps: 2000,
        ..TrainConfig::default()
    };
    let fit = train_wordshoal(&data, &cfg).unwrap();
    let transformed: Vec<DebatePositions> = fit
        .debates
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let (scale, shift) = (if j % 2 == 0 { -3.0 } else { 0.5 }, j as f64 - 2.0);
            DebatePositions {
                positions: d.positions.iter().map(|p| scale * p + shift).collect(),
                ..d.clone()
            }
        })
        .collect();
    let (x2, _, _) = fit_positions(&transformed, data.corpus.num_authors(), &cfg).unwrap();
    assert!(pearson_abs(&fit.x_hat, &x2) >= 0.99);
}

#[test]
fn debate_order_does_not_change_stage_one() {
    let (data, _) = sample_wordshoal(&WordshoalSynthSpec {
        num_debates: 4,
        ..WordshoalSynthSpec::default()
    })
    .unwrap();
    let n = data.debate_names.len();
    let reversed = DebateLabeledCorpus::new(
        data.corpus.clone(),
        data.debate_of.iter().map(|&j| n - 1 - j).collect(),
        data.debate_names.iter().rev().cloned().collect(),
    )
    .unwrap();
    let cfg = TrainConfig {
        max_steps: 500,
        ..TrainConfig::default()
    };
    let a = train_wordshoal(&data, &cfg).unwrap();
    let b = train_wordshoal(&reversed, &cfg).unwrap();
    for d in &a.debates {
        let other = b.debates.iter().find(|e| e.debate == d.debate).unwrap();
        assert_eq!(d, other);
    }
}

#[test]
fn aligned_recovery_is_sign_free() {
    let truth = [1.0, -1.0, 1.0, -1.0, 0.5];
    let est = [-0.9, 1.1, -1.2, 0.8, -0.4];
    let a = align(&est, Some(&truth)).unwrap();
    assert!(a.sign_flipped);
    assert!(tbip::analysis::pearson(&a.values, &truth).unwrap() > 0.9);
}

#[test]
fn likelihood_units_match_model() {
    let corpus = random_corpus(5, 4, &[0, 1, 0, 1, 0], 2, 1);
    let weights = [1.0, 1.0];
    let lik = TbipLikelihood::new(&corpus, &weights, 2).unwrap();
    assert_eq!(lik.num_units(), 5);
    let state = init_state(&[1.0; 10], &[1.0; 8], 2, &PriorConfig::default(), 0).unwrap();
    assert_eq!(state.blocks[X].family.len(), 2);
}
