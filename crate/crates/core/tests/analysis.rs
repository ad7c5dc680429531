mod common;

use common::{normals, random_corpus};
use rand::Rng as _;
use statrs::distribution::{Discrete, Poisson};
use tbip::analysis::{expected_count_ratio, influence, topic_report, PoleIntensity};
use tbip::corpus::{SparseCorpus, Vocabulary};
use tbip::math::seeded_rng;
use tbip::tbip::{tbip_rate, FitResult, PriorConfig, TrainConfig};

fn random_fit(corpus: &SparseCorpus, k: usize, eta_scale: f64, seed: u64) -> FitResult {
    let mut rng = seeded_rng(seed);
    let (d, v, s) = (corpus.num_docs(), corpus.num_terms(), corpus.num_authors());
    FitResult {
        num_docs: d,
        num_terms: v,
        num_topics: k,
        theta_hat: (0..d * k).map(|_| rng.random_range(0.05..2.0)).collect(),
        beta_hat: (0..k * v).map(|_| rng.random_range(0.05..2.0)).collect(),
        eta_hat: normals(&mut rng, k * v, eta_scale),
        x_hat: normals(&mut rng, s, 1.0),
        author_names: corpus.author_names().to_vec(),
        elbo_trace: Vec::new(),
        config: TrainConfig::default(),
        priors: PriorConfig::default(),
        scales: None,
    }
}

/// Author weights straight from the definition: mean document length of
/// the author over the mean of those averages.
fn direct_weights(corpus: &SparseCorpus) -> Vec<f64> {
    let s = corpus.num_authors();
    let (mut total, mut docs) = (vec![0.0; s], vec![0.0; s]);
    for d in 0..corpus.num_docs() {
        let a = corpus.author_of(d);
        total[a] += corpus.dense_row(d).iter().sum::<f64>();
        docs[a] += 1.0;
    }
    let avg: Vec<f64> = total.iter().zip(&docs).map(|(t, n)| t / n).collect();
    let mean = avg.iter().sum::<f64>() / s as f64;
    avg.iter().map(|a| a / mean).collect()
}

fn direct_log_lik(fit: &FitResult, corpus: &SparseCorpus, doc: usize, x: f64, w: f64) -> f64 {
    let (k, nv) = (fit.num_topics, fit.num_terms);
    corpus
        .dense_row(doc)
        .iter()
        .enumerate()
        .map(|(v, &y)| {
            let mut rate = 0.0;
            for t in 0..k {
                rate += fit.theta_hat[doc * k + t] * fit.beta_hat[t * nv + v] * (x * fit.eta_hat[t * nv + v]).exp();
            }
            Poisson::new(w * rate).unwrap().ln_pmf(y as u64)
        })
        .sum()
}

#[test]
fn influence_matches_poisson_pmf_oracle() {
    let corpus = random_corpus(6, 8, &[0, 1, 2, 0, 1, 1], 3, 21);
    let fit = random_fit(&corpus, 3, 0.5, 4);
    let w = direct_weights(&corpus);
    let xmax = fit.x_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let xmin = fit.x_hat.iter().copied().fold(f64::INFINITY, f64::min);
    for doc in 0..6 {
        let a = corpus.author_of(doc);
        let own = direct_log_lik(&fit, &corpus, doc, fit.x_hat[a], w[a]);
        let score = influence(&fit, &corpus, doc).unwrap();
        for (got, alt) in [
            (score.ratio_vs_zero, 0.0),
            (score.ratio_vs_max, xmax),
            (score.ratio_vs_min, xmin),
        ] {
            let expected = own - direct_log_lik(&fit, &corpus, doc, alt, w[a]);
            assert!(
                (got - expected).abs() <= 1e-12 * own.abs().max(1.0),
                "doc {doc}: {got} vs {expected}"
            );
        }
    }
}

#[test]
fn influence_without_ideology_is_zero() {
    let corpus = random_corpus(5, 6, &[0, 1, 0, 1, 0], 2, 3);
    let mut fit = random_fit(&corpus, 2, 0.0, 1);
    assert!(fit.eta_hat.iter().all(|&e| e == 0.0));
    for doc in 0..5 {
        let s = influence(&fit, &corpus, doc).unwrap();
        assert_eq!((s.ratio_vs_zero, s.ratio_vs_max, s.ratio_vs_min), (0.0, 0.0, 0.0));
    }
    fit.eta_hat = normals(&mut seeded_rng(2), 12, 1.0);
    fit.x_hat[0] = 0.0;
    assert_eq!(influence(&fit, &corpus, 0).unwrap().ratio_vs_zero, 0.0);
    assert!(influence(&fit, &corpus, 5).is_err());
}

#[test]
fn influence_is_invariant_to_document_order() {
    let corpus = random_corpus(5, 6, &[0, 1, 2, 1, 0], 3, 8);
    let fit = random_fit(&corpus, 2, 0.7, 9);
    let perm = [3, 0, 4, 1, 2];
    let entries: Vec<(usize, usize, u32)> = perm
        .iter()
        .enumerate()
        .flat_map(|(new, &old)| {
            let (terms, counts) = corpus.row(old);
            terms
                .iter()
                .zip(counts)
                .map(move |(&v, &c)| (new, v, c))
                .collect::<Vec<_>>()
        })
        .collect();
    let authors: Vec<usize> = perm.iter().map(|&old| corpus.author_of(old)).collect();
    let permuted = SparseCorpus::from_entries(5, 6, entries, authors, corpus.author_names().to_vec()).unwrap();
    let mut pfit = fit.clone();
    pfit.theta_hat = perm.iter().flat_map(|&old| fit.theta_row(old).to_vec()).collect();
    for (new, &old) in perm.iter().enumerate() {
        let a = influence(&fit, &corpus, old).unwrap();
        let b = influence(&pfit, &permuted, new).unwrap();
        assert_eq!(
            (a.ratio_vs_zero, a.ratio_vs_max, a.ratio_vs_min),
            (b.ratio_vs_zero, b.ratio_vs_max, b.ratio_vs_min)
        );
    }
}

fn vocab(n: usize) -> Vocabulary {
    Vocabulary::new((0..n).map(|v| format!("w{v}")).collect()).unwrap()
}

#[test]
fn topics_without_ideology_share_one_ordering() {
    let corpus = random_corpus(4, 12, &[0, 1, 0, 1], 2, 2);
    let fit = random_fit(&corpus, 3, 0.0, 5);
    let report = topic_report(&fit, &vocab(12), 8, PoleIntensity::PlugIn).unwrap();
    assert_eq!(report.topics.len(), 3);
    for t in &report.topics {
        assert_eq!(t.neutral.len(), 8);
        assert_eq!(t.negative, t.neutral);
        assert_eq!(t.positive, t.neutral);
    }
    let md = report.to_markdown();
    assert_eq!(md.lines().count(), 2 + 3 * 3);
    assert!(md.lines().nth(2).unwrap().split(", ").count() == 8);
}

#[test]
fn positive_polarity_breaks_ties_upward() {
    let corpus = random_corpus(2, 3, &[0, 1], 2, 2);
    let mut fit = random_fit(&corpus, 1, 0.0, 5);
    fit.beta_hat = vec![1.0, 1.0, 0.5];
    fit.eta_hat = vec![0.0, 0.3, 0.0];
    let report = topic_report(&fit, &vocab(3), 3, PoleIntensity::PlugIn).unwrap();
    let t = &report.topics[0];
    assert_eq!(t.neutral, ["w0", "w1", "w2"]);
    assert_eq!(t.positive, ["w1", "w0", "w2"]);
    assert_eq!(t.negative, ["w0", "w1", "w2"]);
    assert!(topic_report(&fit, &vocab(3), 3, PoleIntensity::Exact).is_err());
}

#[test]
fn count_ratio_examples() {
    let corpus = random_corpus(2, 3, &[0, 1], 2, 2);
    let mut fit = random_fit(&corpus, 2, 0.0, 5);
    assert_eq!(expected_count_ratio(&fit, 1, 2, -1.0, 1.0).unwrap(), 1.0);
    fit.eta_hat[1] = 2f64.ln();
    assert!((expected_count_ratio(&fit, 0, 1, -1.0, 1.0).unwrap() - 4.0).abs() < 1e-12);
    fit.eta_hat = normals(&mut seeded_rng(3), 6, 1.0);
    for (k, v) in [(0, 0), (1, 2), (0, 1)] {
        let mut theta = vec![0.0; 2];
        theta[k] = 1.0;
        let hi = tbip_rate(&theta, &fit.beta_hat, &fit.eta_hat, 0.7, 1.0).unwrap()[v];
        let lo = tbip_rate(&theta, &fit.beta_hat, &fit.eta_hat, -0.4, 1.0).unwrap()[v];
        let r = expected_count_ratio(&fit, k, v, -0.4, 0.7).unwrap();
        assert!((hi / lo - r).abs() <= 1e-12 * r, "{} vs {r}", hi / lo);
    }
}
