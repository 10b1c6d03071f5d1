//! Tokenization, word-level normalization, stopwords, and the NER port.
//!
//! All spans in this crate are **char offsets** (`[start, end)` counted in
//! Unicode scalar values), never byte offsets; masked-span bookkeeping in the
//! leakage audit depends on one consistent convention.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Reserved token ids shared by every tokenizer in the crate.
pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;

/// Number of reserved ids before content tokens start.
pub const N_SPECIALS: u32 = 4;

/// A tokenized text: ids plus the char span each token covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    /// `[start, end)` char offsets into the source text, one per id.
    pub offsets: Vec<(usize, usize)>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Tokenizer port. Deterministic: same text, same output.
pub trait Tokenizer {
    /// Stable identifier recorded in checkpoints and manifests.
    fn id(&self) -> &str;

    /// Tokenize; every token carries its `[start, end)` char span.
    fn tokenize(&self, text: &str) -> TokenSequence;

    /// Inverse of `tokenize` modulo the tokenizer's documented
    /// normalization (whitespace collapsing, unknown-token replacement).
    fn decode(&self, ids: &[u32]) -> String;

    /// Total vocabulary size including the reserved specials.
    fn vocab_size(&self) -> usize;

    /// Surface form of a token id.
    fn token_str(&self, id: u32) -> Option<&str>;
}

/// Whitespace word tokenizer over a fixed vocabulary.
///
/// Content ids start at [`N_SPECIALS`] and follow the lexicographic order of
/// the vocabulary, so the mapping is a pure function of the word set.
/// Out-of-vocabulary words map to [`UNK_ID`]. Normalization documented for
/// `decode`: tokens are joined with single spaces and unknown words decode to
/// `"<unk>"`.
#[derive(Debug, Clone)]
pub struct WordTokenizer {
    id: String,
    words: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl WordTokenizer {
    /// Build from an explicit word list (deduplicated, sorted).
    pub fn new(vocab: impl IntoIterator<Item = String>) -> Self {
        let mut words: Vec<String> = vocab.into_iter().collect();
        words.sort();
        words.dedup();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), N_SPECIALS + i as u32))
            .collect();
        let mut hasher = Sha256::new();
        for w in &words {
            hasher.update(w.as_bytes());
            hasher.update([0u8]);
        }
        let digest = hasher.finalize();
        let id = format!("word-{:02x}{:02x}{:02x}{:02x}", digest[0], digest[1], digest[2], digest[3]);
        Self { id, words, index }
    }

    /// Build from the whitespace words of a text corpus.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab: Vec<String> = Vec::new();
        for t in texts {
            vocab.extend(t.split_whitespace().map(|w| w.to_string()));
        }
        Self::new(vocab)
    }

    /// Content words in id order (offset by [`N_SPECIALS`]).
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word_id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }
}

impl Tokenizer for WordTokenizer {
    fn id(&self) -> &str {
        &self.id
    }

    fn tokenize(&self, text: &str) -> TokenSequence {
        let mut ids = Vec::new();
        let mut offsets = Vec::new();
        let mut pos = 0usize; // char cursor
        let mut current_start = None::<usize>;
        let mut current = String::new();
        for ch in text.chars().chain(std::iter::once(' ')) {
            if ch.is_whitespace() {
                if let Some(start) = current_start.take() {
                    ids.push(self.index.get(&current).copied().unwrap_or(UNK_ID));
                    offsets.push((start, pos));
                    current.clear();
                }
            } else {
                if current_start.is_none() {
                    current_start = Some(pos);
                }
                current.push(ch);
            }
            pos += 1;
        }
        TokenSequence { ids, offsets }
    }

    fn decode(&self, ids: &[u32]) -> String {
        let mut out: Vec<&str> = Vec::new();
        for &id in ids {
            match id {
                PAD_ID | BOS_ID | EOS_ID => {}
                UNK_ID => out.push("<unk>"),
                _ => {
                    if let Some(w) = self.words.get((id - N_SPECIALS) as usize) {
                        out.push(w);
                    }
                }
            }
        }
        out.join(" ")
    }

    fn vocab_size(&self) -> usize {
        N_SPECIALS as usize + self.words.len()
    }

    fn token_str(&self, id: u32) -> Option<&str> {
        match id {
            PAD_ID => Some("<pad>"),
            BOS_ID => Some("<bos>"),
            EOS_ID => Some("<eos>"),
            UNK_ID => Some("<unk>"),
            _ => self.words.get((id - N_SPECIALS) as usize).map(|s| s.as_str()),
        }
    }
}

/// Lowercased words with leading/trailing punctuation stripped.
///
/// This is the granularity every lexical metric runs on. Tokens that are
/// punctuation-only vanish: `"I like, to read."` → `["i","like","to","read"]`.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty() {
                None
            } else {
                Some(trimmed.to_lowercase())
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Stopwords
// ---------------------------------------------------------------------------

/// Pinned English stopword list (179 entries).
pub const STOPWORDS_EN: &str = include_str!("../data/stopwords_en.txt");

/// SHA-256 of the stopword file; [`stopword_set`] refuses a drifted lexicon.
pub const STOPWORDS_EN_SHA256: &str =
    "019f104ba2ed07436d05f9cdd3383034ad66014edc27fc651f837e1a038b6451";

/// The stopword lexicon, checksum-verified.
pub fn stopword_set() -> Result<std::collections::BTreeSet<&'static str>> {
    let mut hasher = Sha256::new();
    hasher.update(STOPWORDS_EN.as_bytes());
    let digest = format!("{:x}", hasher.finalize());
    if digest != STOPWORDS_EN_SHA256 {
        return Err(Error::Data(format!(
            "stopword lexicon checksum mismatch: {digest}"
        )));
    }
    Ok(STOPWORDS_EN.lines().filter(|l| !l.is_empty()).collect())
}

// ---------------------------------------------------------------------------
// NER port
// ---------------------------------------------------------------------------

/// Entity labels form a closed set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityLabel {
    Person,
    Location,
    Organization,
    Entity,
    Other,
}

/// A recognized entity: surface text plus its char span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub surface: String,
    pub label: EntityLabel,
    /// `[start, end)` char offsets.
    pub span: (usize, usize),
}

/// Named-entity recognizer port.
pub trait NerPort {
    fn id(&self) -> &str;
    /// Non-overlapping entity spans in ascending order.
    fn recognize(&self, text: &str) -> Vec<EntitySpan>;
}

/// Dictionary-based recognizer: case-insensitive, word-boundary anchored,
/// overlaps resolved leftmost-longest.
#[derive(Debug, Clone)]
pub struct DictionaryNer {
    id: String,
    /// (lowercase surface chars, label), longest first for the greedy scan.
    entries: Vec<(Vec<char>, EntityLabel)>,
}

impl DictionaryNer {
    pub fn new(entries: impl IntoIterator<Item = (String, EntityLabel)>) -> Self {
        let mut entries: Vec<(Vec<char>, EntityLabel)> = entries
            .into_iter()
            .filter(|(s, _)| !s.trim().is_empty())
            .map(|(s, l)| (s.to_lowercase().chars().collect(), l))
            .collect();
        // longest-first so the scan below tries longer surfaces first
        entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        entries.dedup_by(|a, b| a.0 == b.0);
        Self { id: "dictionary".into(), entries }
    }

    fn boundary(chars: &[char], idx: usize) -> bool {
        // true if position idx sits on a word boundary (start/end of text or
        // adjacent to a non-alphanumeric char)
        if idx == 0 || idx >= chars.len() {
            return true;
        }
        !chars[idx - 1].is_alphanumeric() || !chars[idx].is_alphanumeric()
    }
}

impl NerPort for DictionaryNer {
    fn id(&self) -> &str {
        &self.id
    }

    fn recognize(&self, text: &str) -> Vec<EntitySpan> {
        let chars: Vec<char> = text.chars().collect();
        let lower: Vec<char> = text.to_lowercase().chars().collect();
        // NB: to_lowercase can change char counts for exotic scripts; guard by
        // lowercasing per-char instead when lengths diverge.
        let lower = if lower.len() == chars.len() {
            lower
        } else {
            chars
                .iter()
                .map(|c| c.to_lowercase().next().unwrap_or(*c))
                .collect()
        };
        let mut out = Vec::new();
        let mut i = 0usize;
        while i < lower.len() {
            if !Self::boundary(&lower, i) {
                i += 1;
                continue;
            }
            let mut matched = None;
            for (surface, label) in &self.entries {
                let end = i + surface.len();
                if end <= lower.len()
                    && &lower[i..end] == surface.as_slice()
                    && Self::boundary(&lower, end)
                {
                    matched = Some((end, *label));
                    break; // entries are longest-first
                }
            }
            if let Some((end, label)) = matched {
                out.push(EntitySpan {
                    surface: chars[i..end].iter().collect(),
                    label,
                    span: (i, end),
                });
                i = end;
            } else {
                i += 1;
            }
        }
        out
    }
}
