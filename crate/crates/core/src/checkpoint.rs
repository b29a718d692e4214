//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `RGCK` |
//! | 4     | format version (`u32`, currently 1) |
//! | 8     | header length `n` (`u64`) |
//! | n     | UTF-8 JSON header: hyperparams, view, alphabet, board dims, vocabulary tokens, vocabulary hash, tensor names and shapes |
//! | rest  | every tensor in header order, row-major `f64` |

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::env::BoardDims;
use crate::error::{Error, Result};
use crate::serialize::{SymbolAlphabet, ViewConfig};
use crate::seq2seq::{Hyperparams, ModelParams};
use crate::trainer::Generator;

pub const MAGIC: &[u8; 4] = b"RGCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: [usize; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    hyper: Hyperparams,
    view: ViewConfig,
    alphabet: SymbolAlphabet,
    dims: BoardDims,
    vocab: Vec<String>,
    vocab_hash: String,
    tensors: Vec<TensorInfo>,
}

pub fn to_bytes(gen: &Generator) -> Result<Vec<u8>> {
    let named = gen.params.named();
    let header = Header {
        hyper: gen.hyper.clone(),
        view: gen.view.clone(),
        alphabet: gen.alphabet.clone(),
        dims: gen.dims,
        vocab: gen.vocab.tokens().to_vec(),
        vocab_hash: gen.vocab.hash(),
        tensors: named
            .iter()
            .map(|(n, t)| TensorInfo { name: n.to_string(), shape: [t.nrows(), t.ncols()] })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let data_len: usize = named.iter().map(|(_, t)| t.len() * 8).sum();
    let mut out = Vec::with_capacity(16 + json.len() + data_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in named {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn from_bytes(bytes: &[u8]) -> Result<Generator> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("not a checkpoint (bad magic or truncated preamble)"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() < header_len {
        return Err(bad("truncated header"));
    }
    let header: Header =
        serde_json::from_slice(&body[..header_len]).map_err(|e| bad(format!("bad header: {e}")))?;
    let vocab = Vocabulary::from_tokens(header.vocab);
    if vocab.hash() != header.vocab_hash {
        return Err(bad("vocabulary hash does not match stored vocabulary"));
    }
    let mut params = ModelParams::zeros(vocab.len(), header.hyper.embed_size, header.hyper.hidden_size);
    let mut data = &body[header_len..];
    {
        let named = params.named_mut();
        if named.len() != header.tensors.len() {
            return Err(bad("tensor count mismatch"));
        }
        for ((name, t), info) in named.into_iter().zip(&header.tensors) {
            if name != info.name || [t.nrows(), t.ncols()] != info.shape {
                return Err(bad(format!("tensor {} has unexpected name or shape", info.name)));
            }
            let need = t.len() * 8;
            if data.len() < need {
                return Err(bad(format!("truncated data in tensor {name}")));
            }
            for (v, chunk) in t.iter_mut().zip(data[..need].chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().unwrap());
            }
            data = &data[need..];
        }
    }
    if !data.is_empty() {
        return Err(bad(format!("{} trailing bytes", data.len())));
    }
    Ok(Generator { params, vocab, hyper: header.hyper, view: header.view, dims: header.dims, alphabet: header.alphabet })
}

pub fn save_checkpoint(gen: &Generator, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, to_bytes(gen)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Generator> {
    from_bytes(&fs::read(path)?)
}

/// Loads a checkpoint and refuses it unless its vocabulary hash is `expected`.
pub fn load_checkpoint_for(path: impl AsRef<Path>, expected: &str) -> Result<Generator> {
    let gen = load_checkpoint(path)?;
    let found = gen.vocab.hash();
    if found != expected {
        return Err(bad(format!("vocabulary hash mismatch: checkpoint {found}, expected {expected}")));
    }
    Ok(gen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth_corpus;
    use crate::env::EnvConfig;
    use crate::seq2seq::DecodeMode;
    use crate::trainer::{train, TrainConfig};

    fn trained() -> (Generator, Vec<crate::corpus::CorpusRecord>) {
        let env = EnvConfig::default();
        let recs = synth_corpus(&env, 12, 5).unwrap();
        let cfg = TrainConfig {
            hyper: Hyperparams { hidden_size: 12, embed_size: 6, epochs: 3, batch_size: 4, ..Hyperparams::default() },
            ..TrainConfig::default()
        };
        (train(&recs, &[], env.dims(), &cfg).unwrap().0, recs)
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let (g, recs) = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/model.ckpt");
        save_checkpoint(&g, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, g);
        for r in &recs {
            assert_eq!(back.rationale_for(r, DecodeMode::Greedy).unwrap(), g.rationale_for(r, DecodeMode::Greedy).unwrap());
        }
        assert!(load_checkpoint_for(&path, &g.vocab.hash()).is_ok());
    }

    #[test]
    fn truncation_and_garbage_rejected() {
        let (g, _) = trained();
        let bytes = to_bytes(&g).unwrap();
        for cut in [0, 3, 15, 40, bytes.len() - 1] {
            assert!(matches!(from_bytes(&bytes[..cut]), Err(Error::Checkpoint(_))), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(from_bytes(&extra), Err(Error::Checkpoint(_))));
        let mut wrong_version = bytes;
        wrong_version[4] = 9;
        assert!(matches!(from_bytes(&wrong_version), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn different_vocab_refused() {
        let (g, _) = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&g, &path).unwrap();
        let other = Vocabulary::from_tokens(["<pad>", "<sos>", "<eos>", "<unk>", "x"]);
        assert!(matches!(load_checkpoint_for(&path, &other.hash()), Err(Error::Checkpoint(_))));
    }
}
