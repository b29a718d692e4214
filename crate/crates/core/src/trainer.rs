//! Corpus to trained generator: view-specific inputs, shuffled mini-batches,
//! best-validation selection.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{build_vocab, synth_corpus, tokenize, CorpusRecord, TokenizedPair, Vocabulary};
use crate::env::{Action, BoardDims, EnvConfig};
use crate::error::{Error, Result};
use crate::serialize::{build_input, Snapshot, SymbolAlphabet, ViewConfig};
use crate::seq2seq::{
    apply_update, backward, forward_loss, generate, DecodeMode, Gradients, Hyperparams, ModelParams, OptimizerState,
};

/// A trained (or freshly initialized) model together with everything needed
/// to turn a game state into its input ids and ids back into text.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub hyper: Hyperparams,
    pub view: ViewConfig,
    pub dims: BoardDims,
    pub alphabet: SymbolAlphabet,
}

impl Generator {
    /// Input ids for a snapshot; noise is drawn from `rng` when `training`.
    pub fn input_ids<R: rand::Rng + ?Sized>(
        &self,
        snapshot: &Snapshot,
        action: Action,
        training: bool,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        let input = build_input(snapshot, action, &self.view, &self.alphabet, training, rng)?;
        Ok(self.vocab.encode_tokens(&input.tokens()))
    }

    /// Clean (noise-free) training pair for a record.
    pub fn pair(&self, record: &CorpusRecord) -> Result<TokenizedPair> {
        self.pair_with(record, false, &mut ChaCha8Rng::seed_from_u64(0))
    }

    fn pair_with<R: rand::Rng + ?Sized>(&self, record: &CorpusRecord, training: bool, rng: &mut R) -> Result<TokenizedPair> {
        let snap = record.snapshot(&self.dims, &self.alphabet)?;
        let input = build_input(&snap, record.action, &self.view, &self.alphabet, training, rng)?;
        Ok(self.vocab.encode(&input.tokens(), &tokenize(&record.rationale)))
    }

    pub fn generate_ids(&self, snapshot: &Snapshot, action: Action, mode: DecodeMode) -> Result<Vec<usize>> {
        let ids = self.input_ids(snapshot, action, false, &mut ChaCha8Rng::seed_from_u64(0))?;
        generate(&ids, &self.params, mode, self.hyper.max_decode_len)
    }

    pub fn rationale(&self, snapshot: &Snapshot, action: Action, mode: DecodeMode) -> Result<String> {
        let ids = self.generate_ids(snapshot, action, mode)?;
        self.vocab.decode(&ids)
    }

    pub fn rationale_for(&self, record: &CorpusRecord, mode: DecodeMode) -> Result<String> {
        self.rationale(&record.snapshot(&self.dims, &self.alphabet)?, record.action, mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub view: ViewConfig,
    pub hyper: Hyperparams,
    /// Rationale tokens rarer than this map to `<unk>`.
    pub min_freq: usize,
    pub alphabet: SymbolAlphabet,
    /// Where the best checkpoint is written, if anywhere.
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            view: ViewConfig::focused(),
            hyper: Hyperparams::default(),
            min_freq: 1,
            alphabet: SymbolAlphabet::default(),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub view: ViewConfig,
    pub hyper: Hyperparams,
    /// Token-weighted mean training loss of each epoch.
    pub loss_curve: Vec<f64>,
    /// Clean validation loss after each epoch; empty without a validation split.
    pub val_curve: Vec<f64>,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub corpus_fingerprint: String,
    pub vocab_hash: String,
}

impl TrainRun {
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (i, l) in self.loss_curve.iter().enumerate() {
            let v = self.val_curve.get(i).map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{l},{v}\n", i + 1));
        }
        out
    }
}

/// SHA-256 over the records' canonical JSON lines.
pub fn corpus_fingerprint(records: &[CorpusRecord]) -> Result<String> {
    let mut h = Sha256::new();
    for r in records {
        h.update(serde_json::to_vec(r)?);
        h.update(b"\n");
    }
    Ok(format!("{:x}", h.finalize()))
}

/// Groups example indices by input length (stable), then cuts batches.
fn batches(lengths: &[usize], order: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in order {
        groups.entry(lengths[i]).or_default().push(i);
    }
    groups
        .into_values()
        .flat_map(|g| g.chunks(size).map(<[usize]>::to_vec).collect::<Vec<_>>())
        .collect()
}

/// Token-weighted mean loss under teacher forcing, in fixed batches.
pub fn mean_loss(params: &ModelParams, pairs: &[TokenizedPair], batch_size: usize) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("loss over zero pairs"));
    }
    let hyper = Hyperparams { teacher_forcing_ratio: 1.0, ..Hyperparams::default() };
    let lengths: Vec<usize> = pairs.iter().map(|p| p.input_ids.len()).collect();
    let order: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut total, mut tokens) = (0.0, 0);
    for b in batches(&lengths, &order, batch_size.max(1)) {
        let refs: Vec<&TokenizedPair> = b.iter().map(|&i| &pairs[i]).collect();
        let (_, trace) = forward_loss(params, &refs, &hyper, &mut rng)?;
        total += trace.total;
        tokens += trace.tokens;
    }
    Ok(total / tokens as f64)
}

pub fn train(train: &[CorpusRecord], val: &[CorpusRecord], dims: BoardDims, cfg: &TrainConfig) -> Result<(Generator, TrainRun)> {
    train_with_hook(train, val, dims, cfg, |_| {})
}

/// Like [`train`], with `hook` applied to every batch gradient before the
/// update (used to test that training actually depends on the gradient).
pub fn train_with_hook<F: FnMut(&mut Gradients)>(
    train: &[CorpusRecord],
    val: &[CorpusRecord],
    dims: BoardDims,
    cfg: &TrainConfig,
    mut hook: F,
) -> Result<(Generator, TrainRun)> {
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    cfg.hyper.validate()?;
    cfg.view.validate()?;
    cfg.alphabet.validate()?;
    let hyper = &cfg.hyper;
    let vocab = build_vocab(train, cfg.min_freq, &dims, &cfg.alphabet);
    let params = ModelParams::init(vocab.len(), hyper);
    let mut gen = Generator {
        params,
        vocab,
        hyper: hyper.clone(),
        view: cfg.view.clone(),
        dims,
        alphabet: cfg.alphabet.clone(),
    };
    let snapshots = train
        .iter()
        .map(|r| r.snapshot(&dims, &cfg.alphabet))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<Vec<String>> = train.iter().map(|r| tokenize(&r.rationale)).collect();
    let clean: Vec<TokenizedPair> = train.iter().map(|r| gen.pair(r)).collect::<Result<_>>()?;
    let val_pairs: Vec<TokenizedPair> = val.iter().map(|r| gen.pair(r)).collect::<Result<_>>()?;
    let lengths: Vec<usize> = clean.iter().map(|p| p.input_ids.len()).collect();
    let noisy = cfg.view.mode == crate::serialize::ViewMode::Complete && cfg.view.noise_prob > 0.0;

    let mut opt = OptimizerState::new(&gen.params);
    let mut loss_curve = Vec::with_capacity(hyper.epochs);
    let mut val_curve = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 0..hyper.epochs {
        let epoch_seed = hyper.seed.wrapping_add(epoch as u64);
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(epoch_seed);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(epoch_seed);
        noise_rng.set_stream(1);
        let mut tf_rng = ChaCha8Rng::seed_from_u64(epoch_seed);
        tf_rng.set_stream(2);

        let pairs: Vec<TokenizedPair> = if noisy {
            (0..train.len())
                .map(|i| {
                    let input = build_input(&snapshots[i], train[i].action, &gen.view, &gen.alphabet, true, &mut noise_rng)?;
                    Ok(gen.vocab.encode(&input.tokens(), &targets[i]))
                })
                .collect::<Result<_>>()?
        } else {
            clean.clone()
        };
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let mut batch_list = batches(&lengths, &order, hyper.batch_size);
        batch_list.shuffle(&mut shuffle_rng);

        let (mut total, mut tokens) = (0.0, 0usize);
        for b in &batch_list {
            let refs: Vec<&TokenizedPair> = b.iter().map(|&i| &pairs[i]).collect();
            let (loss, trace) = forward_loss(&gen.params, &refs, hyper, &mut tf_rng)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {}", epoch + 1)));
            }
            total += trace.total;
            tokens += trace.tokens;
            let mut grads = backward(&trace, &gen.params);
            hook(&mut grads);
            apply_update(&mut gen.params, &grads, &mut opt, hyper)?;
        }
        loss_curve.push(total / tokens as f64);

        if !val_pairs.is_empty() {
            let v = mean_loss(&gen.params, &val_pairs, hyper.batch_size)?;
            if !v.is_finite() {
                return Err(Error::Training(format!("non-finite validation loss at epoch {}", epoch + 1)));
            }
            val_curve.push(v);
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch, gen.params.clone()));
            }
        }
    }

    let best_epoch = match best {
        Some((_, epoch, params)) => {
            gen.params = params;
            Some(epoch)
        }
        None => hyper.epochs.checked_sub(1),
    };
    let run = TrainRun {
        view: cfg.view.clone(),
        hyper: hyper.clone(),
        loss_curve,
        val_curve,
        best_epoch,
        checkpoint: cfg.checkpoint.clone(),
        corpus_fingerprint: corpus_fingerprint(train)?,
        vocab_hash: gen.vocab.hash(),
    };
    if let Some(path) = &cfg.checkpoint {
        crate::checkpoint::save_checkpoint(&gen, path)?;
    }
    Ok((gen, run))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverfitReport {
    pub n: usize,
    pub epochs: usize,
    pub final_loss: f64,
    pub reproduced: usize,
    pub passed: bool,
    pub loss_curve: Vec<f64>,
}

/// Hyperparameters of the memorization check: a small model and a high
/// learning rate so 500 epochs over a handful of pairs run in seconds.
pub fn overfit_hyperparams(seed: u64) -> Hyperparams {
    Hyperparams {
        hidden_size: 64,
        embed_size: 32,
        learning_rate: 1e-2,
        batch_size: 10,
        epochs: 500,
        seed,
        ..Hyperparams::default()
    }
}

/// Trains on `n` synthetic pairs and counts exact greedy reproductions.
/// Passes with at least `n - 1` reproduced (all of them when `n = 1`).
pub fn overfit_sanity(n: usize, seed: u64) -> Result<OverfitReport> {
    overfit_sanity_with(n, seed, overfit_hyperparams(seed), |_| {})
}

pub fn overfit_sanity_with<F: FnMut(&mut Gradients)>(n: usize, seed: u64, hyper: Hyperparams, hook: F) -> Result<OverfitReport> {
    let env = EnvConfig::default();
    let records = synth_corpus(&env, n, seed)?;
    let cfg = TrainConfig { hyper, ..TrainConfig::default() };
    let (gen, run) = train_with_hook(&records, &[], env.dims(), &cfg, hook)?;
    let mut reproduced = 0;
    for r in &records {
        let pair = gen.pair(r)?;
        let out = gen.generate_ids(&r.snapshot(&gen.dims, &gen.alphabet)?, r.action, DecodeMode::Greedy)?;
        if out[..] == pair.target_ids[1..pair.target_ids.len() - 1] {
            reproduced += 1;
        }
    }
    let final_loss = run.loss_curve.last().copied().unwrap_or(f64::NAN);
    let need = if n <= 1 { n } else { n - 1 };
    Ok(OverfitReport {
        n,
        epochs: run.loss_curve.len(),
        final_loss,
        reproduced,
        passed: reproduced >= need,
        loss_curve: run.loss_curve,
    })
}
