//! Bayesian vote ideal points: `v_ij ~ Bern(sigmoid(alpha_j + x_i * eta_j))`
//! with standard normal priors, fitted with Gaussian mean-field families.

use std::collections::HashSet;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grad_engine::{run_svi, Family, Likelihood, Prior, VariationalState};
use crate::math::{derive_seed, log_sigmoid, seeded_rng, sigmoid};
use crate::tbip::TrainConfig;

pub const X: usize = 0;
pub const ALPHA: usize = 1;
pub const ETA: usize = 2;

/// Yea/nay votes of lawmakers on bills. Abstentions and other codes are
/// simply absent.
#[derive(Clone, Debug, PartialEq)]
pub struct VoteMatrix {
    lawmaker_names: Vec<String>,
    bill_ids: Vec<String>,
    /// (lawmaker, yea) pairs grouped by bill
    by_bill: Vec<Vec<(usize, bool)>>,
}

impl VoteMatrix {
    pub fn new(lawmaker_names: Vec<String>, bill_ids: Vec<String>, entries: &[(usize, usize, bool)]) -> Result<Self> {
        let (ni, nj) = (lawmaker_names.len(), bill_ids.len());
        let mut seen = HashSet::with_capacity(entries.len());
        let mut by_bill = vec![Vec::new(); nj];
        for &(i, j, yea) in entries {
            if i >= ni || j >= nj {
                return Err(Error::Invalid(format!("vote ({i}, {j}) outside a {ni}x{nj} matrix")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::Invalid(format!(
                    "lawmaker {:?} votes twice on bill {:?}",
                    lawmaker_names[i], bill_ids[j]
                )));
            }
            by_bill[j].push((i, yea));
        }
        for votes in &mut by_bill {
            votes.sort_unstable();
        }
        Ok(VoteMatrix {
            lawmaker_names,
            bill_ids,
            by_bill,
        })
    }

    pub fn num_lawmakers(&self) -> usize {
        self.lawmaker_names.len()
    }

    pub fn num_bills(&self) -> usize {
        self.bill_ids.len()
    }

    pub fn num_votes(&self) -> usize {
        self.by_bill.iter().map(Vec::len).sum()
    }

    pub fn lawmaker_names(&self) -> &[String] {
        &self.lawmaker_names
    }

    pub fn bill_ids(&self) -> &[String] {
        &self.bill_ids
    }

    pub fn bill_votes(&self, j: usize) -> &[(usize, bool)] {
        &self.by_bill[j]
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, bool)> + '_ {
        self.by_bill
            .iter()
            .enumerate()
            .flat_map(|(j, v)| v.iter().map(move |&(i, y)| (i, j, y)))
    }
}

/// Probability of a yea vote.
pub fn vote_prob(alpha_j: f64, eta_j: f64, x_i: f64) -> f64 {
    sigmoid(alpha_j + x_i * eta_j)
}

/// Bernoulli likelihood with bills as the minibatch units. Sample blocks
/// are `[x, alpha, eta]`.
pub struct VoteLikelihood<'a> {
    votes: &'a VoteMatrix,
}

impl<'a> VoteLikelihood<'a> {
    pub fn new(votes: &'a VoteMatrix) -> Self {
        VoteLikelihood { votes }
    }
}

impl Likelihood for VoteLikelihood<'_> {
    fn num_units(&self) -> usize {
        self.votes.num_bills()
    }

    fn log_likelihood(&self, samples: &[Vec<f64>], batch: &[usize], mut grad: Option<&mut [Vec<f64>]>) -> Result<f64> {
        let (x, alpha, eta) = (&samples[X], &samples[ALPHA], &samples[ETA]);
        if x.len() != self.votes.num_lawmakers() || alpha.len() != self.votes.num_bills() || eta.len() != alpha.len() {
            return Err(Error::ShapeMismatch("samples do not match the vote matrix".into()));
        }
        let mut total = 0.0;
        for &j in batch {
            for &(i, yea) in self.votes.bill_votes(j) {
                let t = alpha[j] + x[i] * eta[j];
                total += if yea { log_sigmoid(t) } else { log_sigmoid(-t) };
                if let Some(g) = grad.as_deref_mut() {
                    let r = if yea { 1.0 } else { 0.0 } - sigmoid(t);
                    g[X][i] += r * eta[j];
                    g[ALPHA][j] += r;
                    g[ETA][j] += r * x[i];
                }
            }
        }
        Ok(total)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoteFit {
    pub x_hat: Vec<f64>,
    pub alpha_hat: Vec<f64>,
    pub eta_hat: Vec<f64>,
    pub elbo_trace: Vec<(usize, f64)>,
    pub state: VariationalState,
}

pub fn init_vote_state(votes: &VoteMatrix, seed: u64) -> Result<VariationalState> {
    let mut rng = seeded_rng(seed);
    let log_sd = 0.1f64.ln();
    let mut block = |n: usize| -> Result<Family> {
        let mu = (0..n).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        Family::gaussian(mu, vec![log_sd; n])
    };
    let mut state = VariationalState::default();
    state.push("x", block(votes.num_lawmakers())?, Prior::STANDARD_NORMAL);
    state.push("alpha", block(votes.num_bills())?, Prior::STANDARD_NORMAL);
    state.push("eta", block(votes.num_bills())?, Prior::STANDARD_NORMAL);
    Ok(state)
}

/// Fit the vote model. Minibatches are drawn over bills; the default batch
/// size covers typical roll-call matrices in one batch.
pub fn train_vote(votes: &VoteMatrix, cfg: &TrainConfig) -> Result<VoteFit> {
    cfg.validate()?;
    let mut lawmaker_votes = vec![0usize; votes.num_lawmakers()];
    for (i, _, _) in votes.entries() {
        lawmaker_votes[i] += 1;
    }
    if let Some(i) = lawmaker_votes.iter().position(|&n| n == 0) {
        return Err(Error::Invalid(format!(
            "lawmaker {:?} cast no votes",
            votes.lawmaker_names()[i]
        )));
    }
    if let Some(j) = (0..votes.num_bills()).find(|&j| votes.bill_votes(j).is_empty()) {
        return Err(Error::Invalid(format!(
            "bill {:?} received no votes",
            votes.bill_ids()[j]
        )));
    }
    let mut state = init_vote_state(votes, derive_seed(cfg.seed, 2))?;
    let lik = VoteLikelihood::new(votes);
    let mut rng = seeded_rng(derive_seed(cfg.seed, 3));
    let trace = run_svi(&mut state, &lik, &cfg.svi(), &mut rng)?;
    Ok(VoteFit {
        x_hat: state.blocks[X].family.mean(),
        alpha_hat: state.blocks[ALPHA].family.mean(),
        eta_hat: state.blocks[ETA].family.mean(),
        elbo_trace: trace,
        state,
    })
}
