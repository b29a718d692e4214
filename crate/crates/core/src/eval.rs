//! Automatic metrics for trained generators and study stimulus export.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, CorpusRecord, TokenizedPair};
use crate::error::{Error, Result};
use crate::serialize::{serialize_full, Snapshot};
use crate::seq2seq::{DecodeMode, ModelParams};
use crate::trainer::{mean_loss, Generator};

pub const MAX_ORDER: usize = 4;

/// `exp` of the token-mean cross-entropy under teacher forcing.
pub fn perplexity(params: &ModelParams, pairs: &[TokenizedPair]) -> Result<f64> {
    Ok(mean_loss(params, pairs, 32)?.exp())
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped n-gram matches and candidate n-gram totals for orders `1..=max_n`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BleuStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub cand_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn new<S: AsRef<str>, T: AsRef<str>>(candidate: &[S], reference: &[T], max_n: usize) -> Self {
        let mut s = BleuStats {
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            cand_len: candidate.len(),
            ref_len: reference.len(),
        };
        for n in 1..=max_n {
            let refs = ngram_counts(reference, n);
            for (g, c) in ngram_counts(candidate, n) {
                s.matches[n - 1] += c.min(refs.get(&g).copied().unwrap_or(0));
            }
            s.totals[n - 1] = candidate.len().saturating_sub(n - 1);
        }
        s
    }

    pub fn add(&mut self, other: &BleuStats) {
        for (a, b) in self.matches.iter_mut().zip(&other.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        self.cand_len += other.cand_len;
        self.ref_len += other.ref_len;
    }

    /// Geometric mean of the n-gram precisions times the brevity penalty.
    /// Unigram precision is unsmoothed; higher orders use `(m + 1) / (t + 1)`.
    pub fn score(&self) -> f64 {
        if self.cand_len == 0 || self.matches.is_empty() || self.matches[0] == 0 {
            return 0.0;
        }
        let max_n = self.matches.len();
        let log_p: f64 = (0..max_n)
            .map(|i| {
                let (m, t) = (self.matches[i] as f64, self.totals[i] as f64);
                if i == 0 {
                    (m / t).ln()
                } else {
                    ((m + 1.0) / (t + 1.0)).ln()
                }
            })
            .sum::<f64>()
            / max_n as f64;
        let (c, r) = (self.cand_len as f64, self.ref_len as f64);
        let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
        bp * log_p.exp()
    }
}

/// Sentence BLEU with n-grams up to `max_n`.
pub fn bleu<S: AsRef<str>, T: AsRef<str>>(candidate: &[S], reference: &[T], max_n: usize) -> f64 {
    BleuStats::new(candidate, reference, max_n).score()
}

pub fn bleu4<S: AsRef<str>, T: AsRef<str>>(candidate: &[S], reference: &[T]) -> f64 {
    bleu(candidate, reference, MAX_ORDER)
}

/// Corpus BLEU-4: statistics are summed over all pairs before scoring.
pub fn corpus_bleu4<S: AsRef<str>, T: AsRef<str>>(candidates: &[Vec<S>], references: &[Vec<T>]) -> f64 {
    let mut total = BleuStats { matches: vec![0; MAX_ORDER], totals: vec![0; MAX_ORDER], ..BleuStats::default() };
    for (c, r) in candidates.iter().zip(references) {
        total.add(&BleuStats::new(c, r, MAX_ORDER));
    }
    total.score()
}

/// A uniformly drawn rationale from `corpus`.
pub fn random_baseline<'a, R: Rng + ?Sized>(corpus: &'a [CorpusRecord], rng: &mut R) -> Result<&'a str> {
    if corpus.is_empty() {
        return Err(Error::Empty("random baseline corpus"));
    }
    Ok(&corpus[rng.random_range(0..corpus.len())].rationale)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleOutput {
    pub id: String,
    pub action: String,
    pub reference: String,
    pub candidate: String,
    pub random: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub view: String,
    pub count: usize,
    pub perplexity: f64,
    pub bleu4: f64,
    pub random_baseline_bleu4: f64,
    pub examples: Vec<ExampleOutput>,
}

/// Scores `gen` on `test` with clean inputs. The random baseline draws one
/// rationale per test record from `corpus` with a generator seeded by `seed`.
pub fn evaluate(
    gen: &Generator,
    test: &[CorpusRecord],
    corpus: &[CorpusRecord],
    mode: DecodeMode,
    seed: u64,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let pairs = test.iter().map(|r| gen.pair(r)).collect::<Result<Vec<_>>>()?;
    let ppl = perplexity(&gen.params, &pairs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(test.len());
    let (mut cands, mut randoms, mut refs) = (Vec::new(), Vec::new(), Vec::new());
    for r in test {
        let candidate = gen.rationale_for(r, mode)?;
        let random = random_baseline(corpus, &mut rng)?.to_string();
        cands.push(tokenize(&candidate));
        randoms.push(tokenize(&random));
        refs.push(tokenize(&r.rationale));
        examples.push(ExampleOutput {
            id: r.id.clone(),
            action: r.action.name().to_string(),
            reference: r.rationale.clone(),
            candidate,
            random,
        });
    }
    Ok(EvalReport {
        view: format!("{:?}", gen.view.mode).to_lowercase(),
        count: test.len(),
        perplexity: ppl,
        bleu4: corpus_bleu4(&cands, &refs),
        random_baseline_bleu4: corpus_bleu4(&randoms, &refs),
        examples,
    })
}

/// Paired reports for the two configurations over the same test records and
/// the same baseline draws. Both models must share one vocabulary.
pub fn compare_configs(
    focused: &Generator,
    complete: &Generator,
    test: &[CorpusRecord],
    corpus: &[CorpusRecord],
    mode: DecodeMode,
    seed: u64,
) -> Result<(EvalReport, EvalReport)> {
    if focused.vocab.hash() != complete.vocab.hash() {
        return Err(Error::Checkpoint("the two checkpoints were trained with different vocabularies".into()));
    }
    Ok((
        evaluate(focused, test, corpus, mode, seed)?,
        evaluate(complete, test, corpus, mode, seed)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Candidate,
    Random,
    Exemplary,
}

/// Rows 0-2 and rows 3-5 are each a Latin square on the three slots; together
/// every slot follows every other slot equally often.
pub const SLOT_ORDERS: [[Slot; 3]; 6] = {
    use Slot::*;
    [
        [Candidate, Random, Exemplary],
        [Random, Exemplary, Candidate],
        [Exemplary, Candidate, Random],
        [Candidate, Exemplary, Random],
        [Exemplary, Random, Candidate],
        [Random, Candidate, Exemplary],
    ]
};

pub const PERCEPTION_LABELS: [&str; 4] = ["confidence", "human_likeness", "adequate_justification", "understandability"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub index: usize,
    pub record_id: String,
    pub action: String,
    /// One line per board row.
    pub board: String,
    pub candidate_rationale: String,
    pub random_rationale: String,
    /// Left empty for human curation.
    pub exemplary_rationale: Option<String>,
    pub order: [Slot; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusSet {
    pub seed: u64,
    pub view: String,
    pub perception_labels: Vec<String>,
    pub stimuli: Vec<Stimulus>,
}

fn board_text(snapshot: &Snapshot, gen: &Generator) -> String {
    serialize_full(snapshot, &gen.alphabet)
        .chunks(snapshot.width)
        .map(|row| row.iter().collect::<String>())
        .collect::<Vec<_>>()
        .join("\n")
}

/// One stimulus per action record. Slot orders walk [`SLOT_ORDERS`] from a
/// seed-chosen starting square.
pub fn export_stimuli(
    actions: &[CorpusRecord],
    gen: &Generator,
    corpus: &[CorpusRecord],
    mode: DecodeMode,
    seed: u64,
) -> Result<StimulusSet> {
    if actions.is_empty() {
        return Err(Error::Empty("stimulus actions"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = 3 * rng.random_range(0..2usize);
    let mut stimuli = Vec::with_capacity(actions.len());
    for (i, r) in actions.iter().enumerate() {
        let snap = r.snapshot(&gen.dims, &gen.alphabet)?;
        stimuli.push(Stimulus {
            index: i,
            record_id: r.id.clone(),
            action: r.action.name().to_string(),
            board: board_text(&snap, gen),
            candidate_rationale: gen.rationale(&snap, r.action, mode)?,
            random_rationale: random_baseline(corpus, &mut rng)?.to_string(),
            exemplary_rationale: None,
            order: SLOT_ORDERS[(offset + i) % SLOT_ORDERS.len()],
        });
    }
    Ok(StimulusSet {
        seed,
        view: format!("{:?}", gen.view.mode).to_lowercase(),
        perception_labels: PERCEPTION_LABELS.iter().map(|s| s.to_string()).collect(),
        stimuli,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth_corpus;
    use crate::env::EnvConfig;
    use crate::seq2seq::Hyperparams;
    use crate::trainer::{train, TrainConfig};

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn bleu_identity_empty_and_brevity() {
        let r = toks("i moved up to avoid the car");
        assert!((bleu4(&r, &r) - 1.0).abs() < 1e-12);
        assert_eq!(bleu4(&Vec::<String>::new(), &r), 0.0);
        let b1 = bleu(&toks("i moved up"), &toks("i moved up to avoid"), 1);
        assert!((b1 - (1.0f64 - 5.0 / 3.0).exp()).abs() < 1e-12);
        assert!((b1 - 0.5134).abs() < 1e-4);
    }

    #[test]
    fn bleu4_hand_computed() {
        // Candidate "a b c x" vs reference "a b c d": matches 3/4, 2/3, 1/2, 0/1.
        let c = ["a", "b", "c", "x"];
        let r = ["a", "b", "c", "d"];
        let expected = ((0.75f64).ln() + (3.0f64 / 4.0).ln() + (2.0f64 / 3.0).ln() + (1.0f64 / 2.0).ln()) / 4.0;
        assert!((bleu4(&c, &r) - expected.exp()).abs() < 1e-12);
        // No shared unigram: zero regardless of smoothing.
        assert_eq!(bleu4(&["q"], &r), 0.0);
        // Clipping: repeated candidate words only match as often as in the reference.
        let s = BleuStats::new(&["a", "a", "a"], &["a", "b"], 1);
        assert_eq!((s.matches[0], s.totals[0]), (1, 3));
    }

    #[test]
    fn corpus_bleu_pools_statistics() {
        let cands = vec![toks("a b"), toks("c d e f")];
        let refs = vec![toks("a b"), toks("c d e g")];
        let mut pooled = BleuStats::new(&cands[0], &refs[0], 4);
        pooled.add(&BleuStats::new(&cands[1], &refs[1], 4));
        assert_eq!(pooled.matches, vec![5, 3, 1, 0]);
        assert_eq!(pooled.totals, vec![6, 4, 2, 1]);
        assert_eq!(corpus_bleu4(&cands, &refs), pooled.score());
        assert_eq!(corpus_bleu4(&refs, &refs), 1.0);
    }

    #[test]
    fn random_baseline_is_uniform_and_seeded() {
        let env = EnvConfig::default();
        let mut corpus = synth_corpus(&env, 10, 0).unwrap();
        for (i, r) in corpus.iter_mut().enumerate() {
            r.rationale = format!("r{i}");
        }
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(random_baseline(&corpus, &mut a).unwrap(), random_baseline(&corpus, &mut b).unwrap());
        let mut counts = HashMap::new();
        let n = 100_000;
        for _ in 0..n {
            *counts.entry(random_baseline(&corpus, &mut a).unwrap()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 10);
        for c in counts.values() {
            assert!((*c as f64 / n as f64 - 0.1).abs() <= 0.01);
        }
        assert_eq!(random_baseline(&corpus[..1], &mut a).unwrap(), "r0");
        assert!(matches!(random_baseline(&[], &mut a), Err(Error::Empty(_))));
    }

    #[test]
    fn uniform_model_perplexity_is_vocab_size() {
        let p = ModelParams::zeros(100, 4, 4);
        let pairs = vec![
            TokenizedPair { input_ids: vec![5, 6], target_ids: vec![1, 7, 8, 2] },
            TokenizedPair { input_ids: vec![9], target_ids: vec![1, 2] },
        ];
        assert!((perplexity(&p, &pairs).unwrap() - 100.0).abs() < 1e-9);
        assert!(matches!(perplexity(&p, &[]), Err(Error::Empty(_))));
    }

    fn small_generator() -> (Generator, Vec<CorpusRecord>) {
        let env = EnvConfig::default();
        let recs = synth_corpus(&env, 20, 9).unwrap();
        let cfg = TrainConfig {
            hyper: Hyperparams { hidden_size: 10, embed_size: 6, epochs: 2, batch_size: 8, ..Hyperparams::default() },
            ..TrainConfig::default()
        };
        (train(&recs, &[], env.dims(), &cfg).unwrap().0, recs)
    }

    #[test]
    fn reports_are_paired_and_deterministic() {
        let (g, recs) = small_generator();
        let (a, b) = compare_configs(&g, &g, &recs[..7], &recs, DecodeMode::Greedy, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.count, 7);
        assert_eq!(a.examples.len(), 7);
        assert!(a.perplexity >= 1.0);
        assert!((0.0..=1.0).contains(&a.bleu4));

        let mut other = g.clone();
        other.vocab = crate::corpus::Vocabulary::from_tokens(["<pad>", "<sos>", "<eos>", "<unk>"]);
        assert!(compare_configs(&g, &other, &recs[..2], &recs, DecodeMode::Greedy, 4).is_err());
    }

    #[test]
    fn stimuli_are_counterbalanced() {
        let (g, recs) = small_generator();
        let set = export_stimuli(&recs[..6], &g, &recs, DecodeMode::Greedy, 11).unwrap();
        assert_eq!(set.stimuli.len(), 6);
        assert!(set.stimuli.iter().all(|s| s.exemplary_rationale.is_none()));
        for pos in 0..3 {
            for slot in [Slot::Candidate, Slot::Random, Slot::Exemplary] {
                assert_eq!(set.stimuli.iter().filter(|s| s.order[pos] == slot).count(), 2);
            }
        }
        let mut orders: Vec<_> = set.stimuli.iter().map(|s| s.order).collect();
        orders.dedup();
        assert_eq!(orders.len(), 6);
        // Any aligned block of three is a Latin square.
        let first = &set.stimuli[..3];
        for pos in 0..3 {
            let mut col: Vec<_> = first.iter().map(|s| s.order[pos] as u8).collect();
            col.sort();
            assert_eq!(col, vec![0, 1, 2]);
        }
        assert_eq!(set, export_stimuli(&recs[..6], &g, &recs, DecodeMode::Greedy, 11).unwrap());
        assert_eq!(set.stimuli[0].board.lines().count(), g.dims.height);
    }

    #[test]
    fn five_actions_give_five_stimuli() {
        let (g, recs) = small_generator();
        let set = export_stimuli(&recs[..5], &g, &recs, DecodeMode::Greedy, 0).unwrap();
        assert_eq!(set.stimuli.len(), 5);
        let mut orders: Vec<_> = set.stimuli.iter().map(|s| s.order).collect();
        orders.sort_by_key(|o| o.map(|s| s as u8));
        orders.dedup();
        assert_eq!(orders.len(), 5);
    }
}
