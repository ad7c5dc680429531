//! Post-fit analysis: ideal point standardization, correlation metrics,
//! ideological topic reports and per-document influence diagnostics.

use serde::{Deserialize, Serialize};

use crate::corpus::{compute_weights, SparseCorpus, Vocabulary};
use crate::error::{Error, Result};
use crate::tbip::{log_likelihood_doc, tbip_rate, FitResult};

/// Ideal points shifted to mean 0 and scaled to unit (population) standard
/// deviation, with the sign chosen to agree with a reference when given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedIdealPoints {
    pub values: Vec<f64>,
    pub sign_flipped: bool,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn align(points: &[f64], reference: Option<&[f64]>) -> Result<AlignedIdealPoints> {
    if points.len() < 2 {
        return Err(Error::Invalid("alignment needs at least two ideal points".into()));
    }
    let (mean, sd) = mean_sd(points);
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let mut values: Vec<f64> = points.iter().map(|v| (v - mean) / sd).collect();
    let mut sign_flipped = false;
    if let Some(reference) = reference {
        if reference.len() != points.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} ideal points but {} reference values",
                points.len(),
                reference.len()
            )));
        }
        if pearson(&values, reference)? < 0.0 {
            values.iter_mut().for_each(|v| *v = -*v);
            sign_flipped = true;
        }
    }
    Ok(AlignedIdealPoints { values, sign_flipped })
}

/// Pearson product-moment correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} values", a.len(), b.len())));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if !(saa > 0.0 && sbb > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties given their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    pearson(&average_ranks(a), &average_ranks(b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub pearson: f64,
    pub spearman: f64,
}

pub fn compare(a: &[f64], b: &[f64]) -> Result<Correlations> {
    if a.len() < 3 {
        return Err(Error::Invalid("comparison needs at least three ideal points".into()));
    }
    Ok(Correlations {
        pearson: pearson(a, b)?,
        spearman: spearman(a, b)?,
    })
}

/// Top terms of one topic at the neutral position and at both poles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicTerms {
    pub topic: usize,
    pub negative: Vec<String>,
    pub neutral: Vec<String>,
    pub positive: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicReport {
    pub topics: Vec<TopicTerms>,
}

impl TopicReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Topic | Ideology | Top terms |\n|---|---|---|\n");
        for t in &self.topics {
            for (label, terms) in [("-1", &t.negative), ("0", &t.neutral), ("+1", &t.positive)] {
                out.push_str(&format!("| {} | {} | {} |\n", t.topic, label, terms.join(", ")));
            }
        }
        out
    }
}

/// Term indices ordered by descending score; equal scores keep term order.
pub fn rank_terms(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    idx
}

/// How pole intensities are formed from the fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoleIntensity {
    /// `beta_hat * exp(±eta_hat)`
    #[default]
    PlugIn,
    /// `E[beta] * E[exp(±eta)]` under the lognormal and Gaussian factors.
    Exact,
}

pub fn topic_report(fit: &FitResult, vocab: &Vocabulary, m: usize, mode: PoleIntensity) -> Result<TopicReport> {
    if m == 0 {
        return Err(Error::Invalid("need at least one term per topic".into()));
    }
    let nv = fit.num_terms;
    if vocab.len() != nv {
        return Err(Error::ShapeMismatch(format!(
            "fit has {nv} terms, vocabulary {}",
            vocab.len()
        )));
    }
    let m = m.min(nv);
    let names = |idx: Vec<usize>| -> Vec<String> {
        idx.into_iter()
            .take(m)
            .map(|v| vocab.term(v).unwrap_or_default().to_string())
            .collect()
    };
    let mut topics = Vec::with_capacity(fit.num_topics);
    for k in 0..fit.num_topics {
        let span = k * nv..(k + 1) * nv;
        let beta = &fit.beta_hat[span.clone()];
        let eta = &fit.eta_hat[span.clone()];
        let (neg, pos): (Vec<f64>, Vec<f64>) = match mode {
            PoleIntensity::PlugIn => beta.iter().zip(eta).map(|(b, e)| (b * (-e).exp(), b * e.exp())).unzip(),
            PoleIntensity::Exact => {
                let scales = fit
                    .scales
                    .as_ref()
                    .ok_or_else(|| Error::Invalid("fit carries no variational scales".into()))?;
                (0..nv)
                    .map(|v| {
                        let i = k * nv + v;
                        let sb = scales.beta_sigma[i];
                        let se = scales.eta_sigma[i];
                        let base = scales.beta_mu[i] + 0.5 * sb * sb + 0.5 * se * se;
                        ((base - eta[v]).exp(), (base + eta[v]).exp())
                    })
                    .unzip()
            }
        };
        topics.push(TopicTerms {
            topic: k,
            negative: names(rank_terms(&neg)),
            neutral: names(rank_terms(beta)),
            positive: names(rank_terms(&pos)),
        });
    }
    Ok(TopicReport { topics })
}

/// Log-likelihood differences of one document between its author's
/// fitted ideal point and a fixed alternative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceScore {
    pub doc: usize,
    pub ratio_vs_zero: f64,
    pub ratio_vs_max: f64,
    pub ratio_vs_min: f64,
}

/// `corpus` must be the (possibly log-transformed) corpus the fit was
/// trained on; verbosity weights are recomputed from it.
pub fn influence(fit: &FitResult, corpus: &SparseCorpus, doc: usize) -> Result<InfluenceScore> {
    if doc >= corpus.num_docs() {
        return Err(Error::Invalid(format!(
            "document {doc} out of range ({} documents)",
            corpus.num_docs()
        )));
    }
    if corpus.num_docs() != fit.num_docs
        || corpus.num_terms() != fit.num_terms
        || corpus.num_authors() != fit.num_authors()
    {
        return Err(Error::ShapeMismatch("corpus does not match the fit".into()));
    }
    let weights = compute_weights(corpus)?;
    let author = corpus.author_of(doc);
    let w = weights.0[author];
    let counts = corpus.dense_row(doc);
    let theta = fit.theta_row(doc);
    let ll = |x: f64| -> Result<f64> {
        let rate = tbip_rate(theta, &fit.beta_hat, &fit.eta_hat, x, w)?;
        log_likelihood_doc(&counts, &rate)
    };
    let own = ll(fit.x_hat[author])?;
    let max = fit.x_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = fit.x_hat.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(InfluenceScore {
        doc,
        ratio_vs_zero: own - ll(0.0)?,
        ratio_vs_max: own - ll(max)?,
        ratio_vs_min: own - ll(min)?,
    })
}

/// Expected count of `term` in `topic` at ideal point `x_hi` relative to `x_lo`.
pub fn expected_count_ratio(fit: &FitResult, topic: usize, term: usize, x_lo: f64, x_hi: f64) -> Result<f64> {
    if topic >= fit.num_topics || term >= fit.num_terms {
        return Err(Error::Invalid(format!("topic {topic} / term {term} out of range")));
    }
    let eta = fit.eta_hat[topic * fit.num_terms + term];
    Ok(((x_hi - x_lo) * eta).exp())
}
