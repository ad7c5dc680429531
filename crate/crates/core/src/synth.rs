//! Ancestral samplers for the generative models, with ground truth.

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::DebateLabeledCorpus;
use crate::corpus::SparseCorpus;
use crate::error::{Error, Result};
use crate::math::{derive_seed, seeded_rng, sigmoid, Rng};
use crate::tbip::tbip_rate;
use crate::vote::VoteMatrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdealPointLayout {
    /// Authors alternate between -1 and +1.
    #[default]
    TwoCluster,
    /// Evenly spaced on [-1, 1].
    Uniform,
}

impl IdealPointLayout {
    pub fn positions(self, n: usize) -> Vec<f64> {
        match self {
            IdealPointLayout::TwoCluster => (0..n).map(|s| if s % 2 == 0 { -1.0 } else { 1.0 }).collect(),
            IdealPointLayout::Uniform if n == 1 => vec![0.0],
            IdealPointLayout::Uniform => (0..n).map(|s| -1.0 + 2.0 * s as f64 / (n - 1) as f64).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DocsPerAuthor {
    /// Documents assigned round-robin.
    #[default]
    Equal,
    /// Each document's author drawn uniformly at random.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_docs: usize,
    pub num_terms: usize,
    pub num_authors: usize,
    pub num_topics: usize,
    pub layout: IdealPointLayout,
    pub a: f64,
    pub b: f64,
    /// Standard deviation of the ideological offsets; 0 removes all polarity.
    pub polarity_scale: f64,
    pub docs_per_author: DocsPerAuthor,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_docs: 1000,
            num_terms: 300,
            num_authors: 20,
            num_topics: 5,
            layout: IdealPointLayout::TwoCluster,
            a: 0.3,
            b: 0.3,
            polarity_scale: 1.0,
            docs_per_author: DocsPerAuthor::Equal,
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.num_docs == 0 || self.num_terms == 0 || self.num_authors == 0 || self.num_topics == 0 {
            return Err(Error::Invalid("synthetic dimensions must all be at least 1".into()));
        }
        if !(self.polarity_scale >= 0.0) || !(self.a > 0.0 && self.b > 0.0) {
            return Err(Error::Invalid(
                "polarity scale must be >= 0 and Gamma parameters > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Latent values a TBIP corpus was drawn from. `theta` rows follow the
/// surviving documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TbipTruth {
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub eta: Vec<f64>,
    pub x: Vec<f64>,
}

fn gamma_draws(n: usize, a: f64, b: f64, rng: &mut Rng) -> Vec<f64> {
    let g = Gamma::new(a, 1.0 / b).expect("validated parameters");
    (0..n).map(|_| g.sample(rng)).collect()
}

fn normal_draws(n: usize, sd: f64, rng: &mut Rng) -> Vec<f64> {
    if sd == 0.0 {
        return vec![0.0; n];
    }
    (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// One Poisson count per rate.
pub fn draw_counts(rate: &[f64], rng: &mut Rng) -> Vec<u32> {
    rate.iter()
        .map(|&r| match Poisson::new(r) {
            Ok(p) => p.sample(rng) as u32,
            Err(_) => 0,
        })
        .collect()
}

/// One yea (`true`) or nay per probability.
pub fn draw_votes(probs: &[f64], rng: &mut Rng) -> Vec<bool> {
    probs.iter().map(|&p| rng.random::<f64>() < p).collect()
}

pub fn author_names(n: usize) -> Vec<String> {
    (0..n).map(|s| format!("author_{s:03}")).collect()
}

/// Draw a corpus from the ideal point model with unit verbosity weights.
/// Documents whose counts are all zero are redrawn once, then dropped.
pub fn sample_tbip(spec: &SynthSpec) -> Result<(SparseCorpus, TbipTruth)> {
    spec.validate()?;
    let (nd, nv, ns, k) = (spec.num_docs, spec.num_terms, spec.num_authors, spec.num_topics);
    let mut rng = seeded_rng(spec.seed);
    let x = spec.layout.positions(ns);
    let beta = gamma_draws(k * nv, spec.a, spec.b, &mut rng);
    let eta = normal_draws(k * nv, spec.polarity_scale, &mut rng);
    let author_of: Vec<usize> = match spec.docs_per_author {
        DocsPerAuthor::Equal => (0..nd).map(|d| d % ns).collect(),
        DocsPerAuthor::Random => (0..nd).map(|_| rng.random_range(0..ns)).collect(),
    };

    let docs: Vec<Option<(Vec<f64>, Vec<u32>)>> = (0..nd)
        .into_par_iter()
        .map(|d| {
            let mut rng = seeded_rng(derive_seed(spec.seed, d as u64 + 1));
            let theta = gamma_draws(k, spec.a, spec.b, &mut rng);
            let rate = tbip_rate(&theta, &beta, &eta, x[author_of[d]], 1.0)?;
            for _ in 0..2 {
                let counts = draw_counts(&rate, &mut rng);
                if counts.iter().any(|&c| c > 0) {
                    return Ok(Some((theta, counts)));
                }
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;

    let mut theta = Vec::new();
    let mut authors = Vec::new();
    let mut entries = Vec::new();
    for (d, doc) in docs.into_iter().enumerate() {
        if let Some((t, counts)) = doc {
            let row = authors.len();
            theta.extend(t);
            authors.push(author_of[d]);
            entries.extend(counts.into_iter().enumerate().map(|(v, c)| (row, v, c)));
        }
    }
    let corpus = SparseCorpus::from_entries(authors.len(), nv, entries, authors, author_names(ns))?;
    Ok((corpus, TbipTruth { theta, beta, eta, x }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoteSynthSpec {
    pub num_lawmakers: usize,
    pub num_bills: usize,
    pub layout: IdealPointLayout,
    pub alpha_mean: f64,
    pub alpha_sd: f64,
    pub polarity_scale: f64,
    pub seed: u64,
}

impl Default for VoteSynthSpec {
    fn default() -> Self {
        VoteSynthSpec {
            num_lawmakers: 50,
            num_bills: 300,
            layout: IdealPointLayout::TwoCluster,
            alpha_mean: 0.0,
            alpha_sd: 1.0,
            polarity_scale: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoteTruth {
    pub x: Vec<f64>,
    pub alpha: Vec<f64>,
    pub eta: Vec<f64>,
}

/// Draw a complete yea/nay matrix from the vote model.
pub fn sample_votes(spec: &VoteSynthSpec) -> Result<(VoteMatrix, VoteTruth)> {
    if spec.num_lawmakers == 0 || spec.num_bills == 0 || !(spec.polarity_scale >= 0.0) || !(spec.alpha_sd >= 0.0) {
        return Err(Error::Invalid("invalid vote generator settings".into()));
    }
    let mut rng = seeded_rng(spec.seed);
    let x = spec.layout.positions(spec.num_lawmakers);
    let alpha: Vec<f64> = normal_draws(spec.num_bills, spec.alpha_sd, &mut rng)
        .into_iter()
        .map(|a| a + spec.alpha_mean)
        .collect();
    let eta = normal_draws(spec.num_bills, spec.polarity_scale, &mut rng);
    let mut entries = Vec::with_capacity(spec.num_lawmakers * spec.num_bills);
    for j in 0..spec.num_bills {
        let probs: Vec<f64> = x.iter().map(|&xi| sigmoid(alpha[j] + xi * eta[j])).collect();
        entries.extend(
            draw_votes(&probs, &mut rng)
                .into_iter()
                .enumerate()
                .map(|(i, yea)| (i, j, yea)),
        );
    }
    let names = (0..spec.num_lawmakers).map(|i| format!("lawmaker_{i:03}")).collect();
    let bills = (0..spec.num_bills).map(|j| format!("bill_{j:04}")).collect();
    let votes = VoteMatrix::new(names, bills, &entries)?;
    Ok((votes, VoteTruth { x, alpha, eta }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordfishSynthSpec {
    pub num_authors: usize,
    pub num_terms: usize,
    /// Mean of the term fixed effects; sets the overall count level.
    pub psi_mean: f64,
    /// Standard deviation of term polarities; 0 removes all signal.
    pub polarity_scale: f64,
    pub seed: u64,
}

impl Default for WordfishSynthSpec {
    fn default() -> Self {
        WordfishSynthSpec {
            num_authors: 30,
            num_terms: 200,
            psi_mean: 1.0,
            polarity_scale: 0.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordfishTruth {
    pub x: Vec<f64>,
    pub alpha: Vec<f64>,
    pub psi: Vec<f64>,
    pub b: Vec<f64>,
}

fn wordfish_counts(alpha: f64, psi: &[f64], b: &[f64], x: f64, rng: &mut Rng) -> Vec<u32> {
    let rate: Vec<f64> = psi.iter().zip(b).map(|(p, bv)| (alpha + p + bv * x).exp()).collect();
    draw_counts(&rate, rng)
}

/// One pooled document per author from `Pois(exp(alpha_s + psi_v + b_v x_s))`
/// with standard normal ideal points.
pub fn sample_wordfish(spec: &WordfishSynthSpec) -> Result<(SparseCorpus, WordfishTruth)> {
    if spec.num_authors < 2 || spec.num_terms == 0 || !(spec.polarity_scale >= 0.0) {
        return Err(Error::Invalid("invalid wordfish generator settings".into()));
    }
    let mut rng = seeded_rng(spec.seed);
    let (ns, nv) = (spec.num_authors, spec.num_terms);
    let x = normal_draws(ns, 1.0, &mut rng);
    let alpha = normal_draws(ns, 0.3, &mut rng);
    let psi: Vec<f64> = normal_draws(nv, 1.0, &mut rng)
        .into_iter()
        .map(|p| p + spec.psi_mean)
        .collect();
    let b = normal_draws(nv, spec.polarity_scale, &mut rng);
    let mut entries = Vec::new();
    for s in 0..ns {
        let counts = wordfish_counts(alpha[s], &psi, &b, x[s], &mut rng);
        entries.extend(counts.into_iter().enumerate().map(|(v, c)| (s, v, c)));
    }
    let corpus = SparseCorpus::from_entries(ns, nv, entries, (0..ns).collect(), author_names(ns))?;
    Ok((corpus, WordfishTruth { x, alpha, psi, b }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordshoalSynthSpec {
    pub num_authors: usize,
    pub num_debates: usize,
    pub num_terms: usize,
    /// Probability that an author speaks in a given debate.
    pub participation: f64,
    /// Noise of per-debate positions around `a_j + b_j x_s`.
    pub position_noise: f64,
    pub psi_mean: f64,
    pub polarity_scale: f64,
    pub seed: u64,
}

impl Default for WordshoalSynthSpec {
    fn default() -> Self {
        WordshoalSynthSpec {
            num_authors: 30,
            num_debates: 8,
            num_terms: 100,
            participation: 0.8,
            position_noise: 0.3,
            psi_mean: 1.0,
            polarity_scale: 0.6,
            seed: 0,
        }
    }
}

/// Two-stage generator: per-debate positions `psi_sj = a_j + b_j x_s + noise`,
/// then one wordfish document per participating author and debate.
pub fn sample_wordshoal(spec: &WordshoalSynthSpec) -> Result<(DebateLabeledCorpus, Vec<f64>)> {
    if spec.num_authors < 2 || spec.num_debates == 0 || spec.num_terms < 2 {
        return Err(Error::Invalid("invalid wordshoal generator settings".into()));
    }
    let mut rng = seeded_rng(spec.seed);
    let (ns, nv) = (spec.num_authors, spec.num_terms);
    let x = normal_draws(ns, 1.0, &mut rng);
    let noise = Normal::new(0.0, spec.position_noise.max(0.0)).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut entries = Vec::new();
    let mut author_of = Vec::new();
    let mut debate_of = Vec::new();
    for j in 0..spec.num_debates {
        let a = 0.3 * rng.sample::<f64, _>(StandardNormal);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let b = sign * rng.random_range(0.5..1.5);
        let psi: Vec<f64> = normal_draws(nv, 1.0, &mut rng)
            .into_iter()
            .map(|p| p + spec.psi_mean)
            .collect();
        let bv = normal_draws(nv, spec.polarity_scale, &mut rng);
        let mut speakers: Vec<usize> = (0..ns).filter(|_| rng.random::<f64>() < spec.participation).collect();
        if speakers.len() < 2 {
            speakers = (0..ns).collect();
        }
        for s in speakers {
            let position = a + b * x[s] + noise.sample(&mut rng);
            let counts = wordfish_counts(0.0, &psi, &bv, position, &mut rng);
            let d = author_of.len();
            author_of.push(s);
            debate_of.push(j);
            entries.extend(counts.into_iter().enumerate().map(|(v, c)| (d, v, c)));
        }
    }
    let corpus = SparseCorpus::from_entries(author_of.len(), nv, entries, author_of, author_names(ns))?;
    let names = (0..spec.num_debates).map(|j| format!("debate_{j:02}")).collect();
    Ok((DebateLabeledCorpus::new(corpus, debate_of, names)?, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_polarity_gives_zero_offsets() {
        let spec = SynthSpec {
            num_docs: 30,
            num_terms: 10,
            num_authors: 3,
            num_topics: 2,
            polarity_scale: 0.0,
            ..Default::default()
        };
        let (corpus, truth) = sample_tbip(&spec).unwrap();
        assert!(truth.eta.iter().all(|&e| e == 0.0));
        assert!(corpus.entries().all(|(_, _, c)| c > 0));
        assert_eq!(corpus.num_terms(), 10);
        assert_eq!(corpus.num_authors(), 3);
        assert_eq!(truth.theta.len(), corpus.num_docs() * 2);
    }

    #[test]
    fn generators_are_deterministic() {
        let spec = SynthSpec {
            num_docs: 40,
            num_terms: 15,
            num_authors: 4,
            num_topics: 2,
            seed: 9,
            ..Default::default()
        };
        assert_eq!(sample_tbip(&spec).unwrap(), sample_tbip(&spec).unwrap());
        let vspec = VoteSynthSpec {
            num_lawmakers: 5,
            num_bills: 7,
            ..Default::default()
        };
        assert_eq!(sample_votes(&vspec).unwrap(), sample_votes(&vspec).unwrap());
    }

    #[test]
    fn saturated_intercept_gives_yeas() {
        let spec = VoteSynthSpec {
            num_lawmakers: 100,
            num_bills: 200,
            alpha_mean: 10.0,
            alpha_sd: 0.0,
            polarity_scale: 0.0,
            ..Default::default()
        };
        let (votes, _) = sample_votes(&spec).unwrap();
        let yeas = votes.entries().filter(|e| e.2).count() as f64;
        assert!(yeas / votes.num_votes() as f64 >= 0.9999);
    }

    #[test]
    fn layouts() {
        assert_eq!(IdealPointLayout::TwoCluster.positions(4), vec![-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(IdealPointLayout::Uniform.positions(3), vec![-1.0, 0.0, 1.0]);
    }
}
