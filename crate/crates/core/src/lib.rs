//! Frogger gridworld, tabular Q-learning agent and a GRU encoder-decoder that
//! turns (state, action) pairs into natural-language rationales.

pub mod agent;
pub mod checkpoint;
pub mod corpus;
pub mod env;
pub mod error;
pub mod eval;
pub mod serialize;
pub mod seq2seq;
pub mod trainer;

pub use error::{Error, Result};
