//! Deterministic synthetic corpora for desk-scale experiments.
//!
//! Two generators: bag sentences (inversion benchmarks) and entity triples
//! (leakage audits). Both are pure functions of their config + seed.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::corpus::{DatasetId, SentenceRecord, Split};

/// `prefix00 .. prefixNN`, zero-padded so lexicographic = numeric order.
pub fn numbered_words(prefix: &str, n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(2);
    (0..n).map(|i| format!("{prefix}{i:0width$}")).collect()
}

/// Bag-sentence corpus: i.i.d. words with replacement, optionally emitted in
/// canonical sorted order (a deterministic surface order the generative
/// attacker can exploit but order-blind set predictors cannot).
#[derive(Debug, Clone)]
pub struct BagConfig {
    pub vocab_size: usize,
    pub sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub canonical: bool,
    pub seed: u64,
}

impl Default for BagConfig {
    fn default() -> Self {
        Self { vocab_size: 50, sentences: 2000, min_len: 3, max_len: 8, canonical: true, seed: 7 }
    }
}

pub fn bag_sentences(cfg: &BagConfig) -> (Vec<String>, Vec<SentenceRecord>) {
    let vocab = numbered_words("w", cfg.vocab_size);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.sentences);
    for i in 0..cfg.sentences {
        let len = rng.gen_range(cfg.min_len..=cfg.max_len);
        let mut words: Vec<&str> = (0..len)
            .map(|_| vocab[rng.gen_range(0..vocab.len())].as_str())
            .collect();
        if cfg.canonical {
            words.sort_unstable();
        }
        records.push(SentenceRecord {
            id: format!("syn-bag-{i}"),
            text: words.join(" "),
            dataset: DatasetId::Synthetic,
            split: Split::Test,
        });
    }
    (vocab, records)
}

/// The placeholder used by the synthetic masking world.
pub const ENTITY_PLACEHOLDER: &str = "<ENTITY>";

/// One masked/original/alternative sample for the leakage audit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityTriple {
    pub original: String,
    pub masked: String,
    pub alternative: String,
    pub entity_original: String,
    pub entity_alternative: String,
}

/// A closed vocabulary split into context words and entity words.
#[derive(Debug, Clone)]
pub struct TripleWorld {
    pub context_vocab: Vec<String>,
    pub entity_vocab: Vec<String>,
}

impl TripleWorld {
    pub fn new(context_words: usize, entity_words: usize) -> Self {
        Self {
            context_vocab: numbered_words("ctx", context_words),
            entity_vocab: numbered_words("ent", entity_words),
        }
    }

    pub fn full_vocab(&self) -> Vec<String> {
        let mut v = self.context_vocab.clone();
        v.extend(self.entity_vocab.iter().cloned());
        v
    }

    fn sample_sentence(
        &self,
        rng: &mut ChaCha12Rng,
        min_ctx: usize,
        max_ctx: usize,
    ) -> (Vec<String>, usize) {
        let n_ctx = rng.gen_range(min_ctx..=max_ctx);
        let mut words: Vec<String> = (0..n_ctx)
            .map(|_| self.context_vocab[rng.gen_range(0..self.context_vocab.len())].clone())
            .collect();
        let pos = rng.gen_range(0..=n_ctx);
        words.insert(pos, String::new()); // entity slot, filled by caller
        (words, pos)
    }

    /// Audit triples: original and alternative share every context token and
    /// differ only in the entity filling the placeholder slot.
    pub fn sample_triples(
        &self,
        n: usize,
        min_ctx: usize,
        max_ctx: usize,
        seed: u64,
    ) -> Vec<EntityTriple> {
        assert!(self.entity_vocab.len() >= 2, "need at least two entity words");
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let (mut words, pos) = self.sample_sentence(&mut rng, min_ctx, max_ctx);
            let i_orig = rng.gen_range(0..self.entity_vocab.len());
            let mut i_alt = rng.gen_range(0..self.entity_vocab.len() - 1);
            if i_alt >= i_orig {
                i_alt += 1;
            }
            let e_orig = self.entity_vocab[i_orig].clone();
            let e_alt = self.entity_vocab[i_alt].clone();
            let render = |slot: &str, words: &mut Vec<String>, pos: usize| {
                words[pos] = slot.to_string();
                words.join(" ")
            };
            let original = render(&e_orig, &mut words, pos);
            let alternative = render(&e_alt, &mut words, pos);
            let masked = render(ENTITY_PLACEHOLDER, &mut words, pos);
            out.push(EntityTriple {
                original,
                masked,
                alternative,
                entity_original: e_orig,
                entity_alternative: e_alt,
            });
        }
        out
    }

    /// Auxiliary training corpus: same sentence shape with a concrete entity,
    /// skipping any text in `avoid` (disjointness from the audit set).
    pub fn sample_aux(
        &self,
        n: usize,
        min_ctx: usize,
        max_ctx: usize,
        seed: u64,
        avoid: &BTreeSet<String>,
    ) -> Vec<SentenceRecord> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        let mut i = 0usize;
        while out.len() < n {
            let (mut words, pos) = self.sample_sentence(&mut rng, min_ctx, max_ctx);
            let ent = self.entity_vocab[rng.gen_range(0..self.entity_vocab.len())].clone();
            words[pos] = ent;
            let text = words.join(" ");
            if avoid.contains(&text) {
                continue;
            }
            out.push(SentenceRecord {
                id: format!("syn-aux-{i}"),
                text,
                dataset: DatasetId::Synthetic,
                split: Split::Train,
            });
            i += 1;
        }
        out
    }
}
