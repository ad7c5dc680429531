//! Text-scaling baselines: wordfish and wordshoal, both fitted with the same
//! reparameterized variational machinery as the ideal point model.

mod wordfish;
mod wordshoal;

pub use wordfish::{train_wordfish, train_wordfish_pooled, wordfish_rate, WordfishFit, WordfishLikelihood};
pub use wordshoal::{
    fit_positions, train_wordshoal, DebateLabeledCorpus, DebatePositions, FactorLikelihood, WordshoalFit,
};
