//! State/action/rationale corpora.

mod jsonl;
mod synth;
mod tokenize;
mod vocab;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, BoardDims, GameState, Position};
use crate::error::{Error, Result};
use crate::serialize::{serialize_full, Snapshot, SymbolAlphabet};

pub use jsonl::{load_jsonl, parse_jsonl, save_jsonl, to_jsonl};
pub use synth::{synth_corpus, template_rationale};
pub use tokenize::tokenize;
pub use vocab::{build_vocab, TokenizedPair, Vocabulary, EOS, PAD, RESERVED, SOS, UNK};

/// One (state, action, rationale) triple. Field names are the on-disk JSONL schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    /// Row-major full-board symbols, frog overlaid.
    pub grid: String,
    /// `[col, row]`
    pub frog: [usize; 2],
    pub lives: u32,
    pub tick: u64,
    pub action: Action,
    pub rationale: String,
    pub participant: Option<String>,
    pub redo_of: Option<String>,
    pub edited: bool,
    /// Milliseconds since the Unix epoch; 0 for synthetic records.
    pub ts: u64,
}

impl CorpusRecord {
    /// Captures the state an action was taken in.
    pub fn from_state(id: impl Into<String>, state: &GameState, action: Action, rationale: impl Into<String>) -> Self {
        let grid: String = serialize_full(&Snapshot::from_state(state), &SymbolAlphabet::default())
            .into_iter()
            .collect();
        CorpusRecord {
            id: id.into(),
            grid,
            frog: [state.frog.col, state.frog.row],
            lives: state.lives,
            tick: state.tick,
            action,
            rationale: rationale.into(),
            participant: None,
            redo_of: None,
            edited: false,
            ts: 0,
        }
    }

    pub fn frog_position(&self) -> Position {
        Position::new(self.frog[0], self.frog[1])
    }

    pub fn snapshot(&self, dims: &BoardDims, alphabet: &SymbolAlphabet) -> Result<Snapshot> {
        Snapshot::from_grid(&self.grid, dims.width, dims.height, self.frog_position(), self.lives, alphabet)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rationale.trim().is_empty() {
            return Err(Error::Config(format!("record {} has an empty rationale", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train: 0.8, val: 0.1, test: 0.1, seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&r| !(r >= 0.0)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios {parts:?} must be non-negative and sum to 1")));
        }
        Ok(())
    }
}

/// Seeded shuffle, then contiguous train/val/test partitions of rounded sizes.
pub fn split<T: Clone>(records: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    spec.validate()?;
    let n = records.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_train = ((n as f64 * spec.train).round() as usize).min(n);
    let n_val = ((n as f64 * spec.val).round() as usize).min(n - n_train);
    let take = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok((
        take(&order[..n_train]),
        take(&order[n_train..n_train + n_val]),
        take(&order[n_train + n_val..]),
    ))
}
