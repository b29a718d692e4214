//! GRU encoder-decoder with general (bilinear) attention, trained with exact
//! backpropagation through time.

mod attention;
mod decode;
mod gru;
mod model;
mod optim;
mod params;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use attention::{attend, softmax};
pub use decode::{generate, DecodeMode};
pub use gru::{gru_cell, GruCache};
pub use model::{backward, encode, forward_loss, ForwardTrace};
pub use optim::{apply_update, clip_factor, clip_global_norm, OptimizerState, BETA1, BETA2, EPSILON};
pub use params::{Gradients, GruParams, ModelParams, INIT_RANGE, TENSOR_NAMES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub hidden_size: usize,
    pub embed_size: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub grad_clip_norm: f64,
    pub teacher_forcing_ratio: f64,
    pub max_decode_len: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            hidden_size: 256,
            embed_size: 128,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 100,
            grad_clip_norm: 5.0,
            teacher_forcing_ratio: 1.0,
            max_decode_len: 40,
            seed: 0,
        }
    }
}

impl Hyperparams {
    /// `epochs = 0` and `max_decode_len = 0` are accepted (an untrained model,
    /// an empty decode); every other size and rate must be positive.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("hyperparams: {m}")));
        if self.hidden_size == 0 || self.embed_size == 0 || self.batch_size == 0 {
            return bad("hidden_size, embed_size and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.grad_clip_norm > 0.0) {
            return bad("grad_clip_norm must be positive");
        }
        if !(0.0..=1.0).contains(&self.teacher_forcing_ratio) {
            return bad("teacher_forcing_ratio must lie in [0, 1]");
        }
        Ok(())
    }
}
