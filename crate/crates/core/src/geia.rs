//! Generative embedding-inversion attacker.
//!
//! A decoder-only transformer LM is conditioned on the victim embedding: the
//! embedding is mapped by an affine projection into the decoder width and
//! occupies input position 0, followed by the BOS embedding and the token
//! embeddings of the sentence. Training minimizes next-token cross-entropy
//! over `w_0..w_{n-1}, EOS`; the conditioning block (positions 0 and 1) is
//! never a target and padding is excluded. Inversion decodes from the
//! conditioning block with beam search over cumulative log-probability;
//! teacher-forced scoring exposes per-token log-likelihoods with or without
//! the embedding prefix (without = the slot holds a zero vector, so the
//! context carries no information beyond BOS).

use ndarray::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::SentenceRecord;
use crate::embedder::Victim;
use crate::error::{Error, Result};
use crate::nn::transformer::{TransformerConfig, TransformerLm};
use crate::nn::{Adam, Tensor};
use crate::textops::{TokenSequence, Tokenizer, WordTokenizer, BOS_ID, EOS_ID, PAD_ID};

/// Decoder architecture knobs (vocabulary size comes from the tokenizer).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub layers: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    /// Maximum sentence length in tokens (inputs add 2 conditioning slots).
    pub max_len: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { layers: 2, hidden_dim: 64, heads: 2, max_len: 32 }
    }
}

impl DecoderConfig {
    fn transformer_config(&self, vocab_size: usize) -> TransformerConfig {
        TransformerConfig {
            layers: self.layers,
            dim: self.hidden_dim,
            heads: self.heads,
            max_positions: self.max_len + 2,
            vocab_size,
        }
    }
}

/// Optimization knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 64, learning_rate: 3e-4, seed: 42 }
    }
}

/// Affine map from victim space into the decoder width.
///
/// Bypass (exact identity, no parameters) iff the dimensions already match
/// and `force` was not set.
pub struct Projection {
    pub victim_dim: usize,
    pub decoder_dim: usize,
    weight: Option<Tensor>,
    bias: Option<Tensor>,
}

impl Projection {
    pub fn new(victim_dim: usize, decoder_dim: usize, force: bool, rng: &mut ChaCha12Rng) -> Self {
        if victim_dim == decoder_dim && !force {
            Self { victim_dim, decoder_dim, weight: None, bias: None }
        } else {
            Self {
                victim_dim,
                decoder_dim,
                weight: Some(Tensor::normal(&[victim_dim, decoder_dim], 0.02, rng)),
                bias: Some(Tensor::zeros(&[decoder_dim])),
            }
        }
    }

    pub fn bypass(&self) -> bool {
        self.weight.is_none()
    }

    pub fn apply(&self, emb: &[f32]) -> Result<Array1<f32>> {
        if emb.len() != self.victim_dim {
            return Err(Error::DimMismatch { expected: self.victim_dim, got: emb.len() });
        }
        match (&self.weight, &self.bias) {
            (Some(w), Some(b)) => {
                let x = ArrayView1::from(emb);
                Ok(x.dot(&w.v2()) + &b.v1())
            }
            _ => Ok(ArrayView1::from(emb).to_owned()),
        }
    }

    /// Accumulate parameter gradients for one sample (no input gradient: the
    /// victim embedding is data).
    fn backward(&mut self, emb: &[f32], dout: ArrayView1<f32>) {
        let (Some(w), Some(b)) = (&mut self.weight, &mut self.bias) else {
            return;
        };
        let x = ArrayView1::from(emb);
        let mut wg = w.g.view_mut().into_dimensionality::<Ix2>().expect("2-d");
        for (i, xi) in x.iter().enumerate() {
            let mut row = wg.row_mut(i);
            azip_add(&mut row, &dout, *xi);
        }
        let mut bg = b.g.view_mut().into_dimensionality::<Ix1>().expect("1-d");
        bg += &dout;
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match (&mut self.weight, &mut self.bias) {
            (Some(w), Some(b)) => vec![w, b],
            _ => vec![],
        }
    }

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        match (&self.weight, &self.bias) {
            (Some(w), Some(b)) => vec![("proj_w".into(), w), ("proj_b".into(), b)],
            _ => vec![],
        }
    }
}

fn azip_add(row: &mut ArrayViewMut1<f32>, dout: &ArrayView1<f32>, scale: f32) {
    for (r, d) in row.iter_mut().zip(dout.iter()) {
        *r += scale * d;
    }
}

/// The trained attacker: decoder LM + projection + tokenizer, tied to the
/// victim it was trained against.
pub struct AttackerModel {
    pub decoder_cfg: DecoderConfig,
    pub lm: TransformerLm,
    pub projection: Projection,
    pub tokenizer: WordTokenizer,
    pub victim_id: String,
}

/// Beam-search knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub beam_size: usize,
    pub max_len: usize,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self { beam_size: 5, max_len: 32 }
    }
}

/// Result of inverting one embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub text: String,
    pub token_ids: Vec<u32>,
    /// Cumulative log-probability of the emitted tokens (EOS included when
    /// the hypothesis terminated on EOS).
    pub logprob: f64,
}

/// Teacher-forced scores for one text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    /// Tokenization of the text; offsets align 1:1 with `token_logprobs`.
    pub tokens: TokenSequence,
    /// log p(w_i | context, w_<i) per token.
    pub token_logprobs: Vec<f64>,
    pub eos_logprob: f64,
}

impl ScoredSequence {
    pub fn mean_logprob(&self) -> f64 {
        if self.token_logprobs.is_empty() {
            return f64::NAN;
        }
        self.token_logprobs.iter().sum::<f64>() / self.token_logprobs.len() as f64
    }
}

/// Per-epoch training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Token-weighted mean loss before any update.
    pub initial_loss: f64,
    /// Token-weighted mean loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub supervised_tokens: usize,
}

impl AttackerModel {
    /// Fresh attacker with seeded initialization.
    pub fn init(
        decoder_cfg: DecoderConfig,
        tokenizer: WordTokenizer,
        victim_dim: usize,
        victim_id: &str,
        force_projection: bool,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let lm = TransformerLm::new(decoder_cfg.transformer_config(tokenizer.vocab_size()), &mut rng);
        let projection = Projection::new(victim_dim, decoder_cfg.hidden_dim, force_projection, &mut rng);
        Self {
            decoder_cfg,
            lm,
            projection,
            tokenizer,
            victim_id: victim_id.to_string(),
        }
    }

    pub fn tokenizer_id(&self) -> &str {
        self.tokenizer.id()
    }

    fn truncate_ids(&self, seq: &TokenSequence) -> TokenSequence {
        let n = seq.ids.len().min(self.decoder_cfg.max_len);
        TokenSequence { ids: seq.ids[..n].to_vec(), offsets: seq.offsets[..n].to_vec() }
    }

    /// Assemble the input tensor `[slot, BOS, w_0..]` (positions are added by
    /// the LM). `slots[b] = None` fills position 0 with zeros.
    fn assemble_inputs(&self, slots: &[Option<Array1<f32>>], ids: &[&[u32]]) -> Array3<f32> {
        let batch = ids.len();
        let seq = 2 + ids.iter().map(|s| s.len()).max().unwrap_or(0);
        let dim = self.decoder_cfg.hidden_dim;
        let mut x = Array3::<f32>::zeros((batch, seq, dim));
        for (b, toks) in ids.iter().enumerate() {
            if let Some(slot) = &slots[b] {
                x.slice_mut(s![b, 0, ..]).assign(slot);
            }
            x.slice_mut(s![b, 1, ..]).assign(&self.lm.token_embedding(BOS_ID));
            for (j, &t) in toks.iter().enumerate() {
                x.slice_mut(s![b, 2 + j, ..]).assign(&self.lm.token_embedding(t));
            }
            for p in (2 + toks.len())..seq {
                x.slice_mut(s![b, p, ..]).assign(&self.lm.token_embedding(PAD_ID));
            }
        }
        x
    }

    /// Targets aligned to input positions: the conditioning block predicts
    /// `w_0` from position 1, each token position predicts its successor,
    /// and the final token position predicts EOS. Position 0 and padding are
    /// never targets.
    fn assemble_targets(ids: &[&[u32]], seq: usize) -> Vec<Vec<Option<u32>>> {
        ids.iter()
            .map(|toks| {
                let mut row = vec![None; seq];
                for (j, &t) in toks.iter().enumerate() {
                    row[1 + j] = Some(t);
                }
                row[1 + toks.len()] = Some(EOS_ID);
                row
            })
            .collect()
    }

    /// Teacher-forced log-probabilities of `text` given an optional victim
    /// embedding. `prefix = None` scores with a zero conditioning slot, i.e.
    /// the context is BOS alone.
    pub fn score_sequence(&self, text: &str, prefix: Option<&[f32]>) -> Result<ScoredSequence> {
        let tokens = self.truncate_ids(&self.tokenizer.tokenize(text));
        if tokens.ids.is_empty() {
            return Err(Error::Data(format!("no tokens to score in {text:?}")));
        }
        let slot = match prefix {
            Some(emb) => Some(self.projection.apply(emb)?),
            None => None,
        };
        let x = self.assemble_inputs(&[slot], &[&tokens.ids]);
        let (logits, _) = self.lm.forward(&x);
        let n = tokens.ids.len();
        let mut token_logprobs = Vec::with_capacity(n);
        for (i, &t) in tokens.ids.iter().enumerate() {
            let row = logits.slice(s![0, 1 + i, ..]).to_owned();
            let logp = crate::nn::log_softmax_row(row.as_slice().expect("contiguous"));
            token_logprobs.push(logp[t as usize]);
        }
        let last = logits.slice(s![0, 1 + n, ..]).to_owned();
        let eos_logprob =
            crate::nn::log_softmax_row(last.as_slice().expect("contiguous"))[EOS_ID as usize];
        Ok(ScoredSequence { tokens, token_logprobs, eos_logprob })
    }

    /// Invert an embedding with beam search.
    ///
    /// Cumulative log-probability scoring, finished hypotheses kept aside,
    /// exact ties broken toward the lexicographically smaller token-id
    /// sequence, hypotheses capped at `max_len` tokens. The greedy rollout is
    /// always evaluated as a floor, so the returned score is never below it.
    pub fn invert(&self, embedding: &[f32], params: &DecodeParams) -> Result<InversionResult> {
        if params.beam_size == 0 {
            return Err(Error::Config("beam_size must be positive".into()));
        }
        let max_len = params.max_len.min(self.decoder_cfg.max_len);
        let slot = self.projection.apply(embedding)?;
        let beam = self.beam_search(&slot, params.beam_size, max_len);
        let greedy = self.greedy_rollout(&slot, max_len);
        let best = match cmp_hyp(&beam, &greedy) {
            std::cmp::Ordering::Less => greedy,
            _ => beam,
        };
        Ok(InversionResult {
            text: self.tokenizer.decode(&best.0),
            token_ids: best.0,
            logprob: best.1,
        })
    }

    fn candidate_ids(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.tokenizer.vocab_size() as u32).filter(|&id| id != PAD_ID && id != BOS_ID)
    }

    /// EOS competes inside the beam: a hypothesis ending on EOS survives only
    /// if it ranks within the top `beam_size` candidates of its step. This
    /// makes beam_size=1 trace the greedy path exactly.
    fn beam_search(&self, slot: &Array1<f32>, beam_size: usize, max_len: usize) -> (Vec<u32>, f64) {
        let mut active: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 0.0)];
        let mut finished: Vec<(Vec<u32>, f64)> = Vec::new();
        for _depth in 0..max_len {
            if active.is_empty() {
                break;
            }
            // one batched forward over all active hypotheses
            let ids: Vec<&[u32]> = active.iter().map(|(t, _)| t.as_slice()).collect();
            let slots: Vec<Option<Array1<f32>>> = ids.iter().map(|_| Some(slot.clone())).collect();
            let x = self.assemble_inputs(&slots, &ids);
            let logps = self.lm.next_token_logprobs(&x);
            // (tokens, score, ended) — EOS ends the hypothesis without
            // appending a token
            let mut candidates: Vec<(Vec<u32>, f64, bool)> = Vec::new();
            for ((tokens, score), logp) in active.iter().zip(logps.iter()) {
                for cand in self.candidate_ids() {
                    let s = score + logp[cand as usize];
                    if cand == EOS_ID {
                        candidates.push((tokens.clone(), s, true));
                    } else {
                        let mut t = tokens.clone();
                        t.push(cand);
                        candidates.push((t, s, false));
                    }
                }
            }
            candidates.sort_by(|a, b| cmp_parts(&b.0, b.1, &a.0, a.1));
            candidates.truncate(beam_size);
            active = Vec::new();
            for (tokens, score, ended) in candidates {
                if ended {
                    finished.push((tokens, score));
                } else {
                    active.push((tokens, score));
                }
            }
        }
        // anything still active is length-capped; its score stands as-is
        finished.extend(active);
        finished
            .into_iter()
            .max_by(|a, b| cmp_hyp(a, b))
            .expect("at least one hypothesis survives")
    }

    fn greedy_rollout(&self, slot: &Array1<f32>, max_len: usize) -> (Vec<u32>, f64) {
        let mut tokens: Vec<u32> = Vec::new();
        let mut score = 0.0f64;
        loop {
            if tokens.len() >= max_len {
                break; // capped hypotheses are scored on their tokens alone
            }
            let x = self.assemble_inputs(&[Some(slot.clone())], &[&tokens]);
            let logp = &self.lm.next_token_logprobs(&x)[0];
            let mut best: Option<(u32, f64)> = None;
            for cand in self.candidate_ids() {
                let s = logp[cand as usize];
                let better = match best {
                    None => true,
                    Some((bid, bs)) => s > bs || (s == bs && cand < bid),
                };
                if better {
                    best = Some((cand, s));
                }
            }
            let (id, s) = best.expect("non-empty candidate set");
            score += s;
            if id == EOS_ID {
                break;
            }
            tokens.push(id);
        }
        (tokens, score)
    }

    /// Parameters in checkpoint order: projection first, then the LM.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.projection.named_params();
        out.extend(self.lm.named_params());
        out
    }

    fn all_params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.projection.params_mut();
        out.extend(self.lm.params_mut());
        out
    }

    /// Overwrite parameter values from flat f32 buffers in `named_params`
    /// order (checkpoint loading).
    pub fn load_param_values(&mut self, values: &[Vec<f32>]) -> Result<()> {
        let mut params = self.all_params_mut();
        if params.len() != values.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, got {}",
                params.len(),
                values.len()
            )));
        }
        for (p, v) in params.iter_mut().zip(values.iter()) {
            if p.v.len() != v.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor size mismatch: {} vs {}",
                    p.v.len(),
                    v.len()
                )));
            }
            p.v.as_slice_mut()
                .expect("standard layout")
                .copy_from_slice(v);
        }
        Ok(())
    }
}

/// Hypothesis order: higher score wins; exact ties go to the
/// lexicographically smaller token-id sequence.
fn cmp_parts(ta: &[u32], sa: f64, tb: &[u32], sb: f64) -> std::cmp::Ordering {
    sa.partial_cmp(&sb)
        .expect("finite scores")
        .then_with(|| tb.cmp(ta))
}

fn cmp_hyp(a: &(Vec<u32>, f64), b: &(Vec<u32>, f64)) -> std::cmp::Ordering {
    cmp_parts(&a.0, a.1, &b.0, b.1)
}

/// Mean teacher-forced loss of the attacker over records (no updates).
pub fn eval_attacker_loss(
    model: &AttackerModel,
    records: &[SentenceRecord],
    embeddings: &[Vec<f32>],
) -> Result<f64> {
    let mut total = 0.0f64;
    let mut count = 0usize;
    for (r, e) in records.iter().zip(embeddings.iter()) {
        let scored = model.score_sequence(&r.text, Some(e))?;
        total -= scored.token_logprobs.iter().sum::<f64>() + scored.eos_logprob;
        count += scored.token_logprobs.len() + 1;
    }
    if count == 0 {
        return Err(Error::Data("no supervised tokens".into()));
    }
    Ok(total / count as f64)
}

/// Train a fresh attacker against `victim` on the given records.
///
/// The victim is inference-only: its embeddings are computed once up front
/// and treated as data. Batches are shuffled per epoch from a single seeded
/// stream, so the whole trace is reproducible from `cfg.seed`.
pub fn train_attacker(
    records: &[SentenceRecord],
    victim: &dyn Victim,
    tokenizer: WordTokenizer,
    decoder_cfg: DecoderConfig,
    cfg: TrainConfig,
    force_projection: bool,
) -> Result<(AttackerModel, TrainLog)> {
    if records.is_empty() {
        return Err(Error::Data("no training records".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Config("epochs and batch_size must be positive".into()));
    }
    let desc = victim.descriptor().clone();
    let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
    let embeddings = victim.embed_batch(&texts)?;

    let mut model = AttackerModel::init(
        decoder_cfg,
        tokenizer,
        desc.dim,
        &desc.victim_id,
        force_projection,
        cfg.seed,
    );
    let token_ids: Vec<Vec<u32>> = texts
        .iter()
        .map(|t| model.truncate_ids(&model.tokenizer.tokenize(t)).ids)
        .collect();
    if token_ids.iter().any(|t| t.is_empty()) {
        return Err(Error::Data("training record tokenized to zero tokens".into()));
    }

    let initial_loss = eval_attacker_loss(&model, records, &embeddings)?;

    let mut opt = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut steps = 0usize;
    let mut supervised_tokens = 0usize;

    for _epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut epoch_ce = 0.0f64;
        let mut epoch_tokens = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let ids: Vec<&[u32]> = chunk.iter().map(|&i| token_ids[i].as_slice()).collect();
            let mut slots = Vec::with_capacity(chunk.len());
            for &i in chunk {
                slots.push(Some(model.projection.apply(&embeddings[i])?));
            }
            let x = model.assemble_inputs(&slots, &ids);
            let seq = x.dim().1;
            let targets = AttackerModel::assemble_targets(&ids, seq);
            let (loss_sum, n_sup, dx) = model.lm.loss_and_backward(&x, &targets);
            // scatter input-embedding gradients
            for (b, &i) in chunk.iter().enumerate() {
                model
                    .projection
                    .backward(&embeddings[i], dx.slice(s![b, 0, ..]));
                model.lm.accumulate_token_grad(BOS_ID, dx.slice(s![b, 1, ..]));
                for (j, &t) in ids[b].iter().enumerate() {
                    model.lm.accumulate_token_grad(t, dx.slice(s![b, 2 + j, ..]));
                }
                for p in (2 + ids[b].len())..seq {
                    model.lm.accumulate_token_grad(PAD_ID, dx.slice(s![b, p, ..]));
                }
            }
            opt.step(&mut model.all_params_mut());
            epoch_ce += loss_sum;
            epoch_tokens += n_sup;
            steps += 1;
        }
        supervised_tokens += epoch_tokens;
        epoch_losses.push(epoch_ce / epoch_tokens as f64);
    }

    Ok((
        model,
        TrainLog { initial_loss, epoch_losses, steps, supervised_tokens },
    ))
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    schema_version: u32,
    family: String,
    victim_id: String,
    victim_dim: usize,
    tokenizer_id: String,
    tokenizer_words: Vec<String>,
    decoder: DecoderConfig,
    force_projection: bool,
    params: Vec<(String, Vec<usize>)>,
}

/// Serialize the attacker into `dir` (header JSON + flat f32 weights).
pub fn save_attacker(dir: impl AsRef<std::path::Path>, model: &AttackerModel) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let named = model.named_params();
    let header = CheckpointHeader {
        schema_version: 1,
        family: "geia".into(),
        victim_id: model.victim_id.clone(),
        victim_dim: model.projection.victim_dim,
        tokenizer_id: model.tokenizer.id().to_string(),
        tokenizer_words: model.tokenizer.words().to_vec(),
        decoder: model.decoder_cfg,
        force_projection: !model.projection.bypass()
            && model.projection.victim_dim == model.decoder_cfg.hidden_dim,
        params: named
            .iter()
            .map(|(n, t)| (n.clone(), t.v.shape().to_vec()))
            .collect(),
    };
    std::fs::write(dir.join("attacker.json"), serde_json::to_string_pretty(&header)?)?;
    let mut bytes = Vec::new();
    for (_, t) in &named {
        for x in t.v.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(dir.join("weights.bin"), bytes)?;
    Ok(())
}

/// Load an attacker checkpoint written by [`save_attacker`].
pub fn load_attacker(dir: impl AsRef<std::path::Path>) -> Result<AttackerModel> {
    let dir = dir.as_ref();
    let header: CheckpointHeader =
        serde_json::from_str(&std::fs::read_to_string(dir.join("attacker.json"))?)?;
    if header.schema_version != 1 {
        return Err(Error::Checkpoint(format!(
            "unsupported schema_version {}",
            header.schema_version
        )));
    }
    if header.family != "geia" {
        return Err(Error::Checkpoint(format!(
            "expected family \"geia\", found {:?}",
            header.family
        )));
    }
    let tokenizer = WordTokenizer::new(header.tokenizer_words.clone());
    if tokenizer.id() != header.tokenizer_id {
        return Err(Error::Checkpoint("tokenizer id mismatch".into()));
    }
    let mut model = AttackerModel::init(
        header.decoder,
        tokenizer,
        header.victim_dim,
        &header.victim_id,
        header.force_projection,
        0,
    );
    let bytes = std::fs::read(dir.join("weights.bin"))?;
    let mut values: Vec<Vec<f32>> = Vec::with_capacity(header.params.len());
    let mut cursor = 0usize;
    for (name, shape) in &header.params {
        let n: usize = shape.iter().product();
        let end = cursor + n * 4;
        if end > bytes.len() {
            return Err(Error::Checkpoint(format!("weights.bin truncated at {name}")));
        }
        values.push(
            bytes[cursor..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        );
        cursor = end;
    }
    if cursor != bytes.len() {
        return Err(Error::Checkpoint("weights.bin has trailing bytes".into()));
    }
    model.load_param_values(&values)?;
    Ok(model)
}
