//! Text-based ideal point estimation.
//!
//! The crate fits the text-based ideal point model (TBIP) to bag-of-words
//! corpora with per-document author labels. Each document's word counts are
//! Poisson with rate `w_a * sum_k theta_dk * beta_kv * exp(x_a * eta_kv)`,
//! where `theta` are document intensities, `beta` neutral topics, `eta`
//! ideological topic offsets and `x_a` the author's ideal point. Posterior
//! inference is mean-field variational inference with reparameterization
//! gradients and Adam, initialized from a Poisson factorization fitted by
//! coordinate ascent.
//!
//! Alongside the model the crate ships a vote-based ideal point model, the
//! wordfish and wordshoal text-scaling baselines, post-fit analysis tools and
//! synthetic data generators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod grad_engine;
pub mod io;
pub mod math;
pub mod pf;
pub mod synth;
pub mod tbip;
pub mod vote;

pub use error::{Error, Result};
