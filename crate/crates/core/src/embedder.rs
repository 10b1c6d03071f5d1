//! Victim sentence-embedding models behind a uniform port.
//!
//! The attackers only ever see a victim through [`Victim`]: batch text-in,
//! vector-out, plus a frozen descriptor. Three toy families make desk-scale
//! experiments self-contained:
//!
//! - `ToyAdditive` — sum of seeded per-token vectors; compositional, so a
//!   trained attacker genuinely has something to invert.
//! - `ToyBlind` — embeds exactly the text it is given (additive semantics,
//!   no side channel): the null oracle for the leakage audit.
//! - `ToyLeaky` — consults a side-channel map and embeds the *original*
//!   sentence when handed a known masked variant: the leaky oracle.
//!
//! Pretrained checkpoints are referenced by external id only; the
//! [`PrecomputedVictim`] adapter serves vectors exported by whatever produced
//! them. Nothing here downloads anything.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Victim family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VictimFamily {
    ToyAdditive,
    ToyBlind,
    ToyLeaky,
    Precomputed,
}

/// Frozen victim metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VictimDescriptor {
    pub victim_id: String,
    pub family: VictimFamily,
    pub dim: usize,
    /// Victims are inference-only throughout; always true.
    pub frozen: bool,
}

/// Sentence-embedding model port: batch of texts in, one vector per text out.
pub trait Victim {
    fn descriptor(&self) -> &VictimDescriptor;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>>;

    /// Hash of all internal state; tests assert it never changes.
    fn fingerprint(&self) -> String;

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        Ok(self.embed_batch(&[text])?.pop().expect("one output per input"))
    }
}

/// Deterministic per-token vector: seeded by (seed, token surface).
fn token_vector(seed: u64, token: &str, dim: usize) -> Vec<f32> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(token.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha12Rng::from_seed(key);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Additive bag-of-words embedding with fixed random token vectors.
///
/// Known vocabulary words get vectors drawn once at construction; unseen
/// tokens fall back to a hash-seeded vector so the map stays total and
/// deterministic.
#[derive(Debug, Clone)]
pub struct ToyAdditive {
    descriptor: VictimDescriptor,
    seed: u64,
    vectors: BTreeMap<String, Vec<f32>>,
}

impl ToyAdditive {
    pub fn new(victim_id: &str, vocab: &[String], dim: usize, seed: u64) -> Self {
        Self::with_family(victim_id, VictimFamily::ToyAdditive, vocab, dim, seed)
    }

    fn with_family(
        victim_id: &str,
        family: VictimFamily,
        vocab: &[String],
        dim: usize,
        seed: u64,
    ) -> Self {
        let vectors = vocab
            .iter()
            .map(|w| (w.clone(), token_vector(seed, w, dim)))
            .collect();
        Self {
            descriptor: VictimDescriptor {
                victim_id: victim_id.to_string(),
                family,
                dim,
                frozen: true,
            },
            seed,
            vectors,
        }
    }

    /// Test helper: pin exact token vectors.
    pub fn with_vectors(
        victim_id: &str,
        vectors: BTreeMap<String, Vec<f32>>,
        dim: usize,
    ) -> Self {
        Self {
            descriptor: VictimDescriptor {
                victim_id: victim_id.to_string(),
                family: VictimFamily::ToyAdditive,
                dim,
                frozen: true,
            },
            seed: 0,
            vectors,
        }
    }

    fn embed_text(&self, text: &str) -> Vec<f32> {
        let dim = self.descriptor.dim;
        let mut acc = vec![0.0f32; dim];
        for tok in text.split_whitespace() {
            let v = self
                .vectors
                .get(tok)
                .cloned()
                .unwrap_or_else(|| token_vector(self.seed, tok, dim));
            for (a, b) in acc.iter_mut().zip(v.iter()) {
                *a += b;
            }
        }
        acc
    }

    fn state_fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        for (w, v) in &self.vectors {
            hasher.update(w.as_bytes());
            for x in v {
                hasher.update(x.to_le_bytes());
            }
        }
        format!("{:x}", hasher.finalize())
    }
}

impl Victim for ToyAdditive {
    fn descriptor(&self) -> &VictimDescriptor {
        &self.descriptor
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }

    fn fingerprint(&self) -> String {
        self.state_fingerprint()
    }
}

/// Null oracle: embeds exactly the text it is given.
#[derive(Debug, Clone)]
pub struct ToyBlind {
    inner: ToyAdditive,
}

impl ToyBlind {
    pub fn new(victim_id: &str, vocab: &[String], dim: usize, seed: u64) -> Self {
        Self {
            inner: ToyAdditive::with_family(victim_id, VictimFamily::ToyBlind, vocab, dim, seed),
        }
    }
}

impl Victim for ToyBlind {
    fn descriptor(&self) -> &VictimDescriptor {
        &self.inner.descriptor
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        self.inner.embed_batch(texts)
    }

    fn fingerprint(&self) -> String {
        self.inner.state_fingerprint()
    }
}

/// Leaky oracle: a side-channel map routes known masked texts to the
/// embedding of their original sentence, modeling a victim that memorized
/// its pre-training data.
#[derive(Debug, Clone)]
pub struct ToyLeaky {
    inner: ToyAdditive,
    side_channel: BTreeMap<String, String>,
}

impl ToyLeaky {
    pub fn new(
        victim_id: &str,
        vocab: &[String],
        dim: usize,
        seed: u64,
        leak_pairs: impl IntoIterator<Item = (String, String)>,
    ) -> Self {
        Self {
            inner: ToyAdditive::with_family(victim_id, VictimFamily::ToyLeaky, vocab, dim, seed),
            side_channel: leak_pairs.into_iter().collect(),
        }
    }
}

impl Victim for ToyLeaky {
    fn descriptor(&self) -> &VictimDescriptor {
        &self.inner.descriptor
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        Ok(texts
            .iter()
            .map(|t| {
                let effective = self.side_channel.get(*t).map(|s| s.as_str()).unwrap_or(t);
                self.inner.embed_text(effective)
            })
            .collect())
    }

    fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.inner.state_fingerprint().as_bytes());
        for (k, v) in &self.side_channel {
            hasher.update(k.as_bytes());
            hasher.update([0u8]);
            hasher.update(v.as_bytes());
            hasher.update([1u8]);
        }
        format!("{:x}", hasher.finalize())
    }
}

/// Serves embeddings exported by an external encoder.
///
/// File format: JSONL lines `{"text": "...", "vector": [...]}`. This is the
/// adapter for pretrained victims referenced by external id: inference
/// happens elsewhere, this side only replays the vectors.
pub struct PrecomputedVictim {
    descriptor: VictimDescriptor,
    table: BTreeMap<String, Vec<f32>>,
}

impl PrecomputedVictim {
    pub fn load(victim_id: &str, path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            text: String,
            vector: Vec<f32>,
        }
        let data = std::fs::read_to_string(path.as_ref())?;
        let mut table = BTreeMap::new();
        let mut dim = None;
        for (i, line) in data.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
                line: i + 1,
                msg: e.to_string(),
            })?;
            match dim {
                None => dim = Some(row.vector.len()),
                Some(d) if d != row.vector.len() => {
                    return Err(Error::MalformedLine {
                        line: i + 1,
                        msg: format!("vector dim {} != {}", row.vector.len(), d),
                    })
                }
                _ => {}
            }
            table.insert(row.text, row.vector);
        }
        let dim = dim.ok_or_else(|| Error::Data("empty embedding table".into()))?;
        Ok(Self {
            descriptor: VictimDescriptor {
                victim_id: victim_id.to_string(),
                family: VictimFamily::Precomputed,
                dim,
                frozen: true,
            },
            table,
        })
    }
}

impl Victim for PrecomputedVictim {
    fn descriptor(&self) -> &VictimDescriptor {
        &self.descriptor
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        texts
            .iter()
            .map(|t| {
                self.table.get(*t).cloned().ok_or_else(|| {
                    Error::Data(format!(
                        "no precomputed embedding for text: {:.60}…",
                        t
                    ))
                })
            })
            .collect()
    }

    fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in &self.table {
            hasher.update(k.as_bytes());
            for x in v {
                hasher.update(x.to_le_bytes());
            }
        }
        format!("{:x}", hasher.finalize())
    }
}

/// Which toy family to register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyKind {
    Additive,
    Blind,
    Leaky,
}

/// Holds registered victims; ids are unique.
#[derive(Default)]
pub struct VictimRegistry {
    victims: BTreeMap<String, Box<dyn Victim>>,
}

impl VictimRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, victim: Box<dyn Victim>) -> Result<VictimDescriptor> {
        let desc = victim.descriptor().clone();
        if self.victims.contains_key(&desc.victim_id) {
            return Err(Error::Registry(format!(
                "duplicate victim_id {:?}",
                desc.victim_id
            )));
        }
        self.victims.insert(desc.victim_id.clone(), victim);
        Ok(desc)
    }

    /// Register a toy victim (leaky gets an empty side channel; use
    /// [`ToyLeaky::new`] + [`Self::register`] to prime one).
    pub fn register_toy(
        &mut self,
        kind: ToyKind,
        victim_id: &str,
        vocab: &[String],
        dim: usize,
        seed: u64,
    ) -> Result<VictimDescriptor> {
        let victim: Box<dyn Victim> = match kind {
            ToyKind::Additive => Box::new(ToyAdditive::new(victim_id, vocab, dim, seed)),
            ToyKind::Blind => Box::new(ToyBlind::new(victim_id, vocab, dim, seed)),
            ToyKind::Leaky => Box::new(ToyLeaky::new(victim_id, vocab, dim, seed, [])),
        };
        self.register(victim)
    }

    pub fn get(&self, victim_id: &str) -> Result<&dyn Victim> {
        self.victims
            .get(victim_id)
            .map(|v| v.as_ref())
            .ok_or_else(|| Error::Registry(format!("unknown victim_id {victim_id:?}")))
    }
}

/// Cosine similarity. Errors on dimension mismatch or a zero-norm input.
pub fn similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch { expected: a.len(), got: b.len() });
    }
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        dot += *x as f64 * *y as f64;
        na += (*x as f64).powi(2);
        nb += (*y as f64).powi(2);
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity("zero-norm vector".into()));
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

// ---------------------------------------------------------------------------
// Embedding cache
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Serialize, Deserialize)]
struct CacheManifest {
    /// victim_id → text sha256 → (file stem, dim)
    entries: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

/// Content-addressed on-disk cache of embedding vectors.
///
/// Layout: `<dir>/manifest.json` plus one little-endian f32 `.bin` per
/// (victim, text) pair, named by the text's SHA-256.
pub struct EmbeddingCache {
    dir: PathBuf,
    manifest: CacheManifest,
}

impl EmbeddingCache {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let manifest_path = dir.join("manifest.json");
        let manifest = if manifest_path.exists() {
            serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?
        } else {
            CacheManifest::default()
        };
        Ok(Self { dir, manifest })
    }

    fn text_key(text: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        format!("{:x}", hasher.finalize())
    }

    pub fn get(&self, victim_id: &str, text: &str) -> Result<Option<Vec<f32>>> {
        let key = Self::text_key(text);
        let Some((stem, dim)) = self
            .manifest
            .entries
            .get(victim_id)
            .and_then(|m| m.get(&key))
        else {
            return Ok(None);
        };
        let bytes = std::fs::read(self.dir.join(format!("{stem}.bin")))?;
        if bytes.len() != dim * 4 {
            return Err(Error::Data(format!("cache entry {stem} has wrong size")));
        }
        Ok(Some(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ))
    }

    pub fn put(&mut self, victim_id: &str, text: &str, vector: &[f32]) -> Result<()> {
        let key = Self::text_key(text);
        let stem = format!("{victim_id}-{key}");
        let mut bytes = Vec::with_capacity(vector.len() * 4);
        for x in vector {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        std::fs::write(self.dir.join(format!("{stem}.bin")), bytes)?;
        self.manifest
            .entries
            .entry(victim_id.to_string())
            .or_default()
            .insert(key, (stem, vector.len()));
        Ok(())
    }

    /// Persist the manifest.
    pub fn flush(&self) -> Result<()> {
        let mut f = std::fs::File::create(self.dir.join("manifest.json"))?;
        f.write_all(serde_json::to_string_pretty(&self.manifest)?.as_bytes())?;
        Ok(())
    }

    /// Embed through the cache: hits are replayed, misses computed and stored.
    pub fn embed_all(&mut self, victim: &dyn Victim, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let vid = victim.descriptor().victim_id.clone();
        let mut out: Vec<Option<Vec<f32>>> = Vec::with_capacity(texts.len());
        let mut misses: Vec<usize> = Vec::new();
        for (i, t) in texts.iter().enumerate() {
            let hit = self.get(&vid, t)?;
            if hit.is_none() {
                misses.push(i);
            }
            out.push(hit);
        }
        if !misses.is_empty() {
            let miss_texts: Vec<&str> = misses.iter().map(|&i| texts[i]).collect();
            let vectors = victim.embed_batch(&miss_texts)?;
            for (&i, v) in misses.iter().zip(vectors.into_iter()) {
                self.put(&vid, texts[i], &v)?;
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled")).collect())
    }
}

/// Embed texts with no cache (convenience for tests and small runs).
pub fn embed_texts(victim: &dyn Victim, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
    victim.embed_batch(texts)
}
