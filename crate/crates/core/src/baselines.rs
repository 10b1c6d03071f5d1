//! Non-generative comparison attackers: multi-label classification (MLC) and
//! multi-set prediction (MSP).
//!
//! Both consume only the victim embedding — no token order reaches them. The
//! prediction vocabulary is the word tokens observed in the training split.

use std::collections::BTreeMap;

use ndarray::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::SentenceRecord;
use crate::embedder::Victim;
use crate::error::{Error, Result};
use crate::geia::TrainConfig;
use crate::metrics::micro_prf1;
use crate::nn::gru::{GruCell, GruStepCache};
use crate::nn::{linear_backward, linear_forward, sigmoid, softmax_rows, Adam, Tensor};
use crate::textops::word_tokens;

/// Word vocabulary observed in a training split, in sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordVocab {
    words: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl WordVocab {
    pub fn new(mut words: Vec<String>) -> Self {
        words.sort();
        words.dedup();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Self { words, index }
    }

    pub fn from_records(records: &[SentenceRecord]) -> Self {
        Self::new(records.iter().flat_map(|r| word_tokens(&r.text)).collect())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn id(&self, w: &str) -> Option<usize> {
        self.index.get(w).copied()
    }

    /// Multi-hot presence vector (out-of-vocabulary words are dropped).
    pub fn multi_hot(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.words.len()];
        for w in word_tokens(text) {
            if let Some(i) = self.id(&w) {
                v[i] = 1.0;
            }
        }
        v
    }

    /// In-vocabulary word indices with multiplicity.
    pub fn indices(&self, text: &str) -> Vec<usize> {
        word_tokens(text).iter().filter_map(|w| self.id(w)).collect()
    }
}

/// Per-epoch loss trace shared by both baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineTrainLog {
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    /// Records dropped before training (e.g. zero-word sentences for MSP).
    pub skipped_records: usize,
}

// ---------------------------------------------------------------------------
// MLC
// ---------------------------------------------------------------------------

/// One hidden layer as wide as the victim dimension, logistic outputs over
/// the word vocabulary.
pub struct MlcModel {
    pub vocab: WordVocab,
    pub victim_id: String,
    pub victim_dim: usize,
    pub threshold: f64,
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

/// Default decision-threshold grid: 0.05, 0.10, …, 0.95.
pub fn default_threshold_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

impl MlcModel {
    pub fn init(vocab: WordVocab, victim_dim: usize, victim_id: &str, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let d = victim_dim;
        let v = vocab.len();
        Self {
            vocab,
            victim_id: victim_id.to_string(),
            victim_dim,
            threshold: 0.5,
            w1: Tensor::normal(&[d, d], 0.02, &mut rng),
            b1: Tensor::zeros(&[d]),
            w2: Tensor::normal(&[d, v], 0.02, &mut rng),
            b2: Tensor::zeros(&[v]),
        }
    }

    fn forward(&self, x: &Array2<f32>) -> (Array2<f32>, Array2<f32>) {
        let pre = linear_forward(x, &self.w1, &self.b1);
        let h = pre.mapv(|v| v.max(0.0));
        let logits = linear_forward(&h, &self.w2, &self.b2);
        (h, logits)
    }

    /// Per-word probabilities for one embedding.
    pub fn probabilities(&self, embedding: &[f32]) -> Result<Vec<f64>> {
        if embedding.len() != self.victim_dim {
            return Err(Error::DimMismatch { expected: self.victim_dim, got: embedding.len() });
        }
        let x = Array2::from_shape_vec((1, self.victim_dim), embedding.to_vec())
            .expect("shape matches length");
        let (_, logits) = self.forward(&x);
        Ok(logits.row(0).iter().map(|&l| sigmoid(l) as f64).collect())
    }

    /// Words whose probability clears the threshold, sorted (a set).
    pub fn predict(&self, embedding: &[f32]) -> Result<Vec<String>> {
        self.predict_at(embedding, self.threshold)
    }

    pub fn predict_at(&self, embedding: &[f32], threshold: f64) -> Result<Vec<String>> {
        Ok(self
            .probabilities(embedding)?
            .iter()
            .enumerate()
            .filter(|(_, &p)| p >= threshold)
            .map(|(i, _)| self.vocab.word(i).to_string())
            .collect())
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w1".into(), &self.w1),
            ("b1".into(), &self.b1),
            ("w2".into(), &self.w2),
            ("b2".into(), &self.b2),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

/// Summed-over-vocabulary binary cross-entropy, averaged over the batch.
/// Targets are multi-hot rows.
fn mlc_batch_loss(logits: &Array2<f32>, targets: &Array2<f32>) -> (f64, Array2<f32>) {
    let batch = logits.nrows() as f64;
    let mut loss = 0.0f64;
    let mut dlogits = Array2::<f32>::zeros(logits.raw_dim());
    for ((l, y), d) in logits.iter().zip(targets.iter()).zip(dlogits.iter_mut()) {
        let p = sigmoid(*l) as f64;
        let pc = p.clamp(1e-7, 1.0 - 1e-7);
        let yf = *y as f64;
        loss -= yf * pc.ln() + (1.0 - yf) * (1.0 - pc).ln();
        *d = ((p - yf) / batch) as f32;
    }
    (loss / batch, dlogits)
}

fn embed_records(victim: &dyn Victim, records: &[SentenceRecord]) -> Result<Vec<Vec<f32>>> {
    let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
    victim.embed_batch(&texts)
}

fn batch_matrix(embeddings: &[Vec<f32>], idx: &[usize], dim: usize) -> Array2<f32> {
    let mut x = Array2::<f32>::zeros((idx.len(), dim));
    for (b, &i) in idx.iter().enumerate() {
        x.row_mut(b).assign(&ArrayView1::from(&embeddings[i][..]));
    }
    x
}

/// Train an MLC attacker against `victim` (embeddings precomputed once; the
/// victim stays frozen).
pub fn train_mlc(
    records: &[SentenceRecord],
    victim: &dyn Victim,
    cfg: TrainConfig,
) -> Result<(MlcModel, BaselineTrainLog)> {
    if records.is_empty() {
        return Err(Error::Data("no training records".into()));
    }
    let desc = victim.descriptor().clone();
    let vocab = WordVocab::from_records(records);
    if vocab.is_empty() {
        return Err(Error::Data("training records contain no words".into()));
    }
    let embeddings = embed_records(victim, records)?;
    let targets: Vec<Vec<f32>> = records.iter().map(|r| vocab.multi_hot(&r.text)).collect();

    let mut model = MlcModel::init(vocab, desc.dim, &desc.victim_id, cfg.seed);
    let v = model.vocab.len();

    let eval = |m: &MlcModel| -> f64 {
        let all: Vec<usize> = (0..records.len()).collect();
        let x = batch_matrix(&embeddings, &all, desc.dim);
        let mut y = Array2::<f32>::zeros((records.len(), v));
        for (b, t) in targets.iter().enumerate() {
            y.row_mut(b).assign(&ArrayView1::from(&t[..]));
        }
        let (_, logits) = m.forward(&x);
        mlc_batch_loss(&logits, &y).0
    };
    let initial_loss = eval(&model);

    let mut opt = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut steps = 0usize;

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0f64;
        let mut epoch_n = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let x = batch_matrix(&embeddings, chunk, desc.dim);
            let mut y = Array2::<f32>::zeros((chunk.len(), v));
            for (b, &i) in chunk.iter().enumerate() {
                y.row_mut(b).assign(&ArrayView1::from(&targets[i][..]));
            }
            let pre = linear_forward(&x, &model.w1, &model.b1);
            let h = pre.mapv(|v| v.max(0.0));
            let logits = linear_forward(&h, &model.w2, &model.b2);
            let (loss, dlogits) = mlc_batch_loss(&logits, &y);
            let dh = linear_backward(&h, &mut model.w2, &mut model.b2, &dlogits);
            let dpre = &dh * &pre.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            linear_backward(&x, &mut model.w1, &mut model.b1, &dpre);
            opt.step(&mut model.params_mut());
            epoch_sum += loss * chunk.len() as f64;
            epoch_n += chunk.len();
            steps += 1;
        }
        epoch_losses.push(epoch_sum / epoch_n as f64);
    }

    Ok((
        model,
        BaselineTrainLog { initial_loss, epoch_losses, steps, skipped_records: 0 },
    ))
}

/// Pick the grid threshold maximizing micro-F1 on the dev split; exact ties
/// go to the smaller threshold.
pub fn tune_threshold(
    model: &MlcModel,
    dev_records: &[SentenceRecord],
    victim: &dyn Victim,
    grid: &[f64],
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Config("empty threshold grid".into()));
    }
    if dev_records.is_empty() {
        return Err(Error::Data("empty dev split".into()));
    }
    let embeddings = embed_records(victim, dev_records)?;
    let gold: Vec<Vec<String>> = dev_records.iter().map(|r| word_tokens(&r.text)).collect();
    let probs: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| model.probabilities(e))
        .collect::<Result<_>>()?;
    let mut best = (f64::NEG_INFINITY, f64::INFINITY); // (f1, threshold)
    for &t in grid {
        let preds: Vec<Vec<String>> = probs
            .iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .filter(|(_, &x)| x >= t)
                    .map(|(i, _)| model.vocab.word(i).to_string())
                    .collect()
            })
            .collect();
        let (_, _, f1) = micro_prf1(&preds, &gold)?;
        if f1 > best.0 || (f1 == best.0 && t < best.1) {
            best = (f1, t);
        }
    }
    Ok(best.1)
}

// ---------------------------------------------------------------------------
// MSP
// ---------------------------------------------------------------------------

/// Multi-set prediction: a uni-directional GRU emits one word per step for a
/// fixed number of steps, initialized from the victim embedding.
pub struct MspModel {
    pub vocab: WordVocab,
    pub victim_id: String,
    pub victim_dim: usize,
    pub steps: usize,
    pub recurrent_dim: usize,
    w_init: Tensor,
    embed: Tensor,
    start: Tensor,
    gru: GruCell,
    out_w: Tensor,
    out_b: Tensor,
}

/// Gold-removal policy identifier recorded in reports/checkpoints: at each
/// step the most probable remaining gold token is removed and teacher-fed;
/// after exhaustion the argmax token is fed.
pub const MSP_POLICY: &str = "remove-most-probable-gold";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MspConfig {
    pub recurrent_dim: usize,
    pub steps: usize,
}

impl Default for MspConfig {
    fn default() -> Self {
        Self { recurrent_dim: 64, steps: 10 }
    }
}

impl MspModel {
    pub fn init(
        vocab: WordVocab,
        victim_dim: usize,
        victim_id: &str,
        cfg: MspConfig,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let h = cfg.recurrent_dim;
        let v = vocab.len();
        Self {
            vocab,
            victim_id: victim_id.to_string(),
            victim_dim,
            steps: cfg.steps,
            recurrent_dim: h,
            w_init: Tensor::normal(&[victim_dim, h], 0.02, &mut rng),
            embed: Tensor::normal(&[v, h], 0.02, &mut rng),
            start: Tensor::zeros(&[h]),
            gru: GruCell::new(h, h, 0.02, &mut rng),
            out_w: Tensor::normal(&[h, v], 0.02, &mut rng),
            out_b: Tensor::zeros(&[v]),
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("w_init".into(), &self.w_init),
            ("embed".into(), &self.embed),
            ("start".into(), &self.start),
        ];
        out.extend(
            self.gru
                .named_params()
                .into_iter()
                .map(|(n, t)| (format!("gru.{n}"), t)),
        );
        out.push(("out_w".into(), &self.out_w));
        out.push(("out_b".into(), &self.out_b));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.w_init, &mut self.embed, &mut self.start];
        out.extend(self.gru.params_mut());
        out.push(&mut self.out_w);
        out.push(&mut self.out_b);
        out
    }

    fn h0(&self, x: &Array2<f32>) -> Array2<f32> {
        x.dot(&self.w_init.v2()).mapv(f32::tanh)
    }

    /// Emit exactly `steps` word tokens (repetitions allowed).
    pub fn predict(&self, embedding: &[f32]) -> Result<Vec<String>> {
        if embedding.len() != self.victim_dim {
            return Err(Error::DimMismatch { expected: self.victim_dim, got: embedding.len() });
        }
        let x = Array2::from_shape_vec((1, self.victim_dim), embedding.to_vec())
            .expect("shape matches length");
        let mut h = self.h0(&x);
        let mut inp = self
            .start
            .v1()
            .to_owned()
            .insert_axis(Axis(0));
        let mut out = Vec::with_capacity(self.steps);
        for _ in 0..self.steps {
            let (h_new, _) = self.gru.forward_step(&inp, &h);
            h = h_new;
            let logits = linear_forward(&h, &self.out_w, &self.out_b);
            let p = softmax_rows(&logits);
            let row = p.row(0);
            let mut best = 0usize;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            out.push(self.vocab.word(best).to_string());
            inp = self
                .embed
                .v2()
                .row(best)
                .to_owned()
                .insert_axis(Axis(0));
        }
        Ok(out)
    }
}

/// |R_t| trace for one sentence: sizes of the remaining gold multiset at each
/// step under the removal policy (independent of model state only in length).
pub fn remaining_sizes(word_count: usize, steps: usize) -> Vec<usize> {
    (0..steps).map(|t| word_count.saturating_sub(t)).collect()
}

struct MspBatchResult {
    loss: f64,
    caches: Vec<GruStepCache>,
    hs: Vec<Array2<f32>>,
    dlogits: Vec<Array2<f32>>,
    fed: Vec<Vec<Option<usize>>>, // per step, per sample: token index fed as next input
}

impl MspModel {
    /// Run `steps` teacher-forced rounds over a batch; returns per-step
    /// caches for BPTT. `golds[b]` is the gold multiset as vocab indices.
    fn run_batch(&self, x: &Array2<f32>, golds: &[Vec<usize>]) -> MspBatchResult {
        let batch = x.nrows();
        let v = self.vocab.len();
        let mut remaining: Vec<BTreeMap<usize, usize>> = golds
            .iter()
            .map(|g| {
                let mut m = BTreeMap::new();
                for &i in g {
                    *m.entry(i).or_insert(0usize) += 1;
                }
                m
            })
            .collect();
        let mut h = self.h0(x);
        let mut inp = Array2::<f32>::zeros((batch, self.recurrent_dim));
        for b in 0..batch {
            inp.row_mut(b).assign(&self.start.v1());
        }
        let mut caches = Vec::with_capacity(self.steps);
        let mut hs = vec![h.clone()];
        let mut dlogits_steps = Vec::with_capacity(self.steps);
        let mut fed: Vec<Vec<Option<usize>>> = Vec::with_capacity(self.steps);
        let mut loss = 0.0f64;
        let denom = (self.steps * batch) as f64;

        for _t in 0..self.steps {
            let (h_new, cache) = self.gru.forward_step(&inp, &h);
            h = h_new;
            let logits = linear_forward(&h, &self.out_w, &self.out_b);
            let p = softmax_rows(&logits);
            let mut dlog = Array2::<f32>::zeros((batch, v));
            let mut fed_t: Vec<Option<usize>> = vec![None; batch];
            for b in 0..batch {
                let row = p.row(b);
                let r = &mut remaining[b];
                let r_size: usize = r.values().sum();
                if r_size > 0 {
                    // loss over the remaining multiset
                    let mut sample_loss = 0.0f64;
                    for (&w, &m) in r.iter() {
                        let pw = (row[w] as f64).max(1e-12);
                        sample_loss -= m as f64 * pw.ln();
                    }
                    sample_loss /= r_size as f64;
                    loss += sample_loss / (self.steps as f64) / batch as f64;
                    for j in 0..v {
                        let mj = r.get(&j).copied().unwrap_or(0) as f64;
                        dlog[[b, j]] =
                            ((row[j] as f64 - mj / r_size as f64) / denom) as f32;
                    }
                    // remove the most probable remaining gold token
                    let mut pick = usize::MAX;
                    let mut pick_p = f64::NEG_INFINITY;
                    for &w in r.keys() {
                        let pw = row[w] as f64;
                        if pw > pick_p {
                            pick = w;
                            pick_p = pw;
                        }
                    }
                    let m = r.get_mut(&pick).expect("picked from keys");
                    *m -= 1;
                    if *m == 0 {
                        r.remove(&pick);
                    }
                    fed_t[b] = Some(pick);
                } else {
                    // exhausted: zero loss, feed the argmax prediction
                    let mut best = 0usize;
                    for (i, &pv) in row.iter().enumerate() {
                        if pv > row[best] {
                            best = i;
                        }
                    }
                    fed_t[b] = Some(best);
                }
            }
            caches.push(cache);
            hs.push(h.clone());
            dlogits_steps.push(dlog);
            // next input
            let mut next = Array2::<f32>::zeros((batch, self.recurrent_dim));
            for b in 0..batch {
                let idx = fed_t[b].expect("always fed");
                next.row_mut(b).assign(&self.embed.v2().row(idx));
            }
            fed.push(fed_t);
            inp = next;
        }
        MspBatchResult { loss, caches, hs, dlogits: dlogits_steps, fed }
    }

    fn backward_batch(&mut self, x: &Array2<f32>, res: &MspBatchResult) {
        let batch = x.nrows();
        let mut dh = Array2::<f32>::zeros((batch, self.recurrent_dim));
        // gradient that flows into the input fed at step t+1 (an embedding row)
        for t in (0..self.steps).rev() {
            // output head at step t reads hs[t+1]
            let dh_out = linear_backward(&res.hs[t + 1], &mut self.out_w, &mut self.out_b, &res.dlogits[t]);
            dh += &dh_out;
            let (dx, dh_prev) = self.gru.backward_step(&res.caches[t], &dh);
            // dx is the gradient of the input at step t: start (t=0) or the
            // embedding of the token fed after step t−1
            if t == 0 {
                let mut sg = self
                    .start
                    .g
                    .view_mut()
                    .into_dimensionality::<Ix1>()
                    .expect("1-d");
                for b in 0..batch {
                    sg += &dx.row(b);
                }
            } else {
                let mut eg = self
                    .embed
                    .g
                    .view_mut()
                    .into_dimensionality::<Ix2>()
                    .expect("2-d");
                for b in 0..batch {
                    let idx = res.fed[t - 1][b].expect("always fed");
                    let mut row = eg.row_mut(idx);
                    row += &dx.row(b);
                }
            }
            dh = dh_prev;
        }
        // through h0 = tanh(x · w_init)
        let h0 = &res.hs[0];
        let dpre = h0.mapv(|v| 1.0 - v * v) * &dh;
        let mut wg = self
            .w_init
            .g
            .view_mut()
            .into_dimensionality::<Ix2>()
            .expect("2-d");
        wg += &x.t().dot(&dpre);
    }
}

/// Train an MSP attacker. Zero-word sentences are skipped and counted.
pub fn train_msp(
    records: &[SentenceRecord],
    victim: &dyn Victim,
    msp_cfg: MspConfig,
    cfg: TrainConfig,
) -> Result<(MspModel, BaselineTrainLog)> {
    if msp_cfg.steps == 0 {
        return Err(Error::Config("MSP needs at least one step".into()));
    }
    let vocab = WordVocab::from_records(records);
    if vocab.is_empty() {
        return Err(Error::Data("training records contain no words".into()));
    }
    let desc = victim.descriptor().clone();
    let kept: Vec<&SentenceRecord> = records
        .iter()
        .filter(|r| !word_tokens(&r.text).is_empty())
        .collect();
    let skipped_records = records.len() - kept.len();
    if kept.is_empty() {
        return Err(Error::Data("no trainable records after skipping empty texts".into()));
    }
    let texts: Vec<&str> = kept.iter().map(|r| r.text.as_str()).collect();
    let embeddings = victim.embed_batch(&texts)?;
    let golds: Vec<Vec<usize>> = kept.iter().map(|r| vocab.indices(&r.text)).collect();

    let mut model = MspModel::init(vocab, desc.dim, &desc.victim_id, msp_cfg, cfg.seed);

    let eval = |m: &MspModel| -> f64 {
        let all: Vec<usize> = (0..kept.len()).collect();
        let x = batch_matrix(&embeddings, &all, desc.dim);
        m.run_batch(&x, &golds).loss
    };
    let initial_loss = eval(&model);

    let mut opt = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..kept.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut steps = 0usize;

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0f64;
        let mut epoch_n = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let x = batch_matrix(&embeddings, chunk, desc.dim);
            let batch_golds: Vec<Vec<usize>> =
                chunk.iter().map(|&i| golds[i].clone()).collect();
            let res = model.run_batch(&x, &batch_golds);
            model.backward_batch(&x, &res);
            opt.step(&mut model.params_mut());
            epoch_sum += res.loss * chunk.len() as f64;
            epoch_n += chunk.len();
            steps += 1;
        }
        epoch_losses.push(epoch_sum / epoch_n as f64);
    }

    Ok((
        model,
        BaselineTrainLog { initial_loss, epoch_losses, steps, skipped_records },
    ))
}

// ---------------------------------------------------------------------------
// Checkpointing (same layout as the generative attacker: header + flat f32)
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct BaselineHeader {
    schema_version: u32,
    family: String,
    victim_id: String,
    victim_dim: usize,
    vocab: Vec<String>,
    threshold: Option<f64>,
    msp: Option<MspConfig>,
    policy: Option<String>,
    params: Vec<(String, Vec<usize>)>,
}

fn write_weights(dir: &std::path::Path, named: &[(String, &Tensor)]) -> Result<()> {
    let mut bytes = Vec::new();
    for (_, t) in named {
        for x in t.v.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(dir.join("weights.bin"), bytes)?;
    Ok(())
}

fn read_weights(dir: &std::path::Path, params: &[(String, Vec<usize>)]) -> Result<Vec<Vec<f32>>> {
    let bytes = std::fs::read(dir.join("weights.bin"))?;
    let mut values = Vec::with_capacity(params.len());
    let mut cursor = 0usize;
    for (name, shape) in params {
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
    Ok(values)
}

fn load_values(params: &mut [&mut Tensor], values: &[Vec<f32>]) -> Result<()> {
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
        p.v.as_slice_mut().expect("standard layout").copy_from_slice(v);
    }
    Ok(())
}

pub fn save_mlc(dir: impl AsRef<std::path::Path>, model: &MlcModel) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let named = model.named_params();
    let header = BaselineHeader {
        schema_version: 1,
        family: "mlc".into(),
        victim_id: model.victim_id.clone(),
        victim_dim: model.victim_dim,
        vocab: model.vocab.words().to_vec(),
        threshold: Some(model.threshold),
        msp: None,
        policy: None,
        params: named.iter().map(|(n, t)| (n.clone(), t.v.shape().to_vec())).collect(),
    };
    std::fs::write(dir.join("attacker.json"), serde_json::to_string_pretty(&header)?)?;
    write_weights(dir, &named)
}

pub fn load_mlc(dir: impl AsRef<std::path::Path>) -> Result<MlcModel> {
    let dir = dir.as_ref();
    let header: BaselineHeader =
        serde_json::from_str(&std::fs::read_to_string(dir.join("attacker.json"))?)?;
    if header.family != "mlc" {
        return Err(Error::Checkpoint(format!("expected family \"mlc\", found {:?}", header.family)));
    }
    let mut model = MlcModel::init(
        WordVocab::new(header.vocab.clone()),
        header.victim_dim,
        &header.victim_id,
        0,
    );
    model.threshold = header.threshold.unwrap_or(0.5);
    let values = read_weights(dir, &header.params)?;
    load_values(&mut model.params_mut(), &values)?;
    Ok(model)
}

pub fn save_msp(dir: impl AsRef<std::path::Path>, model: &MspModel) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let named = model.named_params();
    let header = BaselineHeader {
        schema_version: 1,
        family: "msp".into(),
        victim_id: model.victim_id.clone(),
        victim_dim: model.victim_dim,
        vocab: model.vocab.words().to_vec(),
        threshold: None,
        msp: Some(MspConfig { recurrent_dim: model.recurrent_dim, steps: model.steps }),
        policy: Some(MSP_POLICY.to_string()),
        params: named.iter().map(|(n, t)| (n.clone(), t.v.shape().to_vec())).collect(),
    };
    std::fs::write(dir.join("attacker.json"), serde_json::to_string_pretty(&header)?)?;
    write_weights(dir, &named)
}

pub fn load_msp(dir: impl AsRef<std::path::Path>) -> Result<MspModel> {
    let dir = dir.as_ref();
    let header: BaselineHeader =
        serde_json::from_str(&std::fs::read_to_string(dir.join("attacker.json"))?)?;
    if header.family != "msp" {
        return Err(Error::Checkpoint(format!("expected family \"msp\", found {:?}", header.family)));
    }
    let msp_cfg = header
        .msp
        .ok_or_else(|| Error::Checkpoint("missing msp config".into()))?;
    let mut model = MspModel::init(
        WordVocab::new(header.vocab.clone()),
        header.victim_dim,
        &header.victim_id,
        msp_cfg,
        0,
    );
    let values = read_weights(dir, &header.params)?;
    load_values(&mut model.params_mut(), &values)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DatasetId, SentenceRecord, Split};
    use crate::embedder::ToyAdditive;

    fn record(id: &str, text: &str) -> SentenceRecord {
        SentenceRecord {
            id: id.into(),
            text: text.into(),
            dataset: DatasetId::Synthetic,
            split: Split::Train,
        }
    }

    fn records(texts: &[&str]) -> Vec<SentenceRecord> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| record(&format!("r{i}"), t))
            .collect()
    }

    fn victim_for(records: &[SentenceRecord], dim: usize) -> ToyAdditive {
        let vocab: Vec<String> = records
            .iter()
            .flat_map(|r| word_tokens(&r.text))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        ToyAdditive::new("toy-additive", &vocab, dim, 7)
    }

    #[test]
    fn vocab_sorts_and_dedups() {
        let v = WordVocab::new(vec!["b".into(), "a".into(), "b".into()]);
        assert_eq!(v.words(), ["a", "b"]);
        assert_eq!(v.id("a"), Some(0));
        assert_eq!(v.id("b"), Some(1));
        assert_eq!(v.id("z"), None);
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn multi_hot_drops_oov_and_ignores_repeats() {
        let v = WordVocab::new(vec!["a".into(), "b".into(), "c".into()]);
        assert_eq!(v.multi_hot("a b b z"), vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn indices_keep_order_and_multiplicity() {
        let v = WordVocab::new(vec!["a".into(), "b".into()]);
        assert_eq!(v.indices("b a b"), vec![1, 0, 1]);
    }

    #[test]
    fn threshold_grid_spans_5_to_95_percent() {
        let g = default_threshold_grid();
        assert_eq!(g.len(), 19);
        assert!((g[0] - 0.05).abs() < 1e-12);
        assert!((g[18] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn mlc_initial_loss_near_vocab_times_ln2() {
        // fresh logits sit near zero, so every label costs about ln 2
        let recs = records(&["red dog", "blue cat", "red cat"]);
        let victim = victim_for(&recs, 16);
        let cfg = TrainConfig { epochs: 0, batch_size: 4, learning_rate: 1e-3, seed: 3 };
        let (model, log) = train_mlc(&recs, &victim, cfg).unwrap();
        let expected = model.vocab.len() as f64 * std::f64::consts::LN_2;
        assert!(
            (log.initial_loss - expected).abs() / expected < 0.05,
            "initial {} vs uniform {}",
            log.initial_loss,
            expected
        );
        assert!(log.epoch_losses.is_empty());
    }

    #[test]
    fn mlc_predictions_shrink_as_threshold_rises() {
        let recs = records(&["red dog", "blue cat"]);
        let victim = victim_for(&recs, 8);
        let cfg = TrainConfig { epochs: 2, batch_size: 2, learning_rate: 1e-3, seed: 5 };
        let (model, _) = train_mlc(&recs, &victim, cfg).unwrap();
        let e = victim.embed("red dog").unwrap();
        let grid = default_threshold_grid();
        let mut prev = model.predict_at(&e, grid[0]).unwrap();
        for &t in &grid[1..] {
            let cur = model.predict_at(&e, t).unwrap();
            assert!(
                cur.iter().all(|w| prev.contains(w)),
                "higher threshold produced a word the lower one did not"
            );
            prev = cur;
        }
    }

    #[test]
    fn mlc_overfits_tiny_corpus() {
        let recs = records(&["red dog", "blue cat", "red cat", "blue dog"]);
        let victim = victim_for(&recs, 16);
        let cfg = TrainConfig { epochs: 300, batch_size: 4, learning_rate: 1e-2, seed: 11 };
        let (model, log) = train_mlc(&recs, &victim, cfg).unwrap();
        assert!(log.epoch_losses.last().unwrap() < &0.1, "loss stuck at {:?}", log.epoch_losses.last());
        for r in &recs {
            let e = victim.embed(&r.text).unwrap();
            let mut gold = word_tokens(&r.text);
            gold.sort();
            assert_eq!(model.predict(&e).unwrap(), gold, "failed on {:?}", r.text);
        }
    }

    #[test]
    fn tuned_threshold_is_smallest_maximizer() {
        let recs = records(&["red dog", "blue cat", "red cat", "blue dog"]);
        let victim = victim_for(&recs, 16);
        let cfg = TrainConfig { epochs: 300, batch_size: 4, learning_rate: 1e-2, seed: 11 };
        let (model, _) = train_mlc(&recs, &victim, cfg).unwrap();
        let grid = default_threshold_grid();
        let picked = tune_threshold(&model, &recs, &victim, &grid).unwrap();

        // recompute the expected winner independently
        let gold: Vec<Vec<String>> = recs.iter().map(|r| word_tokens(&r.text)).collect();
        let mut best = (f64::NEG_INFINITY, f64::INFINITY);
        for &t in &grid {
            let preds: Vec<Vec<String>> = recs
                .iter()
                .map(|r| model.predict_at(&victim.embed(&r.text).unwrap(), t).unwrap())
                .collect();
            let (_, _, f1) = micro_prf1(&preds, &gold).unwrap();
            if f1 > best.0 {
                best = (f1, t);
            }
        }
        assert_eq!(picked, best.1);
        // the overfit model should admit a perfect threshold somewhere
        assert_eq!(best.0, 1.0);
    }

    #[test]
    fn tune_threshold_rejects_empty_inputs() {
        let recs = records(&["red dog"]);
        let victim = victim_for(&recs, 8);
        let cfg = TrainConfig { epochs: 1, batch_size: 1, learning_rate: 1e-3, seed: 1 };
        let (model, _) = train_mlc(&recs, &victim, cfg).unwrap();
        assert!(matches!(
            tune_threshold(&model, &recs, &victim, &[]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            tune_threshold(&model, &[], &victim, &[0.5]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn mlc_rejects_wordless_training_data() {
        let recs = records(&["...", "!!"]);
        let victim = victim_for(&recs, 8);
        let cfg = TrainConfig::default();
        assert!(matches!(train_mlc(&recs, &victim, cfg), Err(Error::Data(_))));
        assert!(matches!(train_mlc(&[], &victim, TrainConfig::default()), Err(Error::Data(_))));
    }

    #[test]
    fn remaining_sizes_count_down_and_floor_at_zero() {
        assert_eq!(remaining_sizes(3, 6), vec![3, 2, 1, 0, 0, 0]);
        assert_eq!(remaining_sizes(0, 2), vec![0, 0]);
        assert_eq!(remaining_sizes(5, 3), vec![5, 4, 3]);
    }

    #[test]
    fn msp_emits_exactly_configured_steps() {
        let recs = records(&["red dog", "blue cat"]);
        let victim = victim_for(&recs, 8);
        let msp = MspConfig { recurrent_dim: 16, steps: 7 };
        let cfg = TrainConfig { epochs: 1, batch_size: 2, learning_rate: 1e-3, seed: 2 };
        let (model, _) = train_msp(&recs, &victim, msp, cfg).unwrap();
        let out = model.predict(&victim.embed("red dog").unwrap()).unwrap();
        assert_eq!(out.len(), 7);
        for w in &out {
            assert!(model.vocab.id(w).is_some(), "prediction {w:?} outside vocabulary");
        }
    }

    #[test]
    fn msp_initial_loss_matches_uniform_hand_value() {
        // one 2-word sentence, vocab 2, 10 steps: only the first two steps
        // carry loss (≈ ln 2 each), normalized by steps·batch
        let recs = records(&["a b"]);
        let victim = victim_for(&recs, 8);
        let msp = MspConfig { recurrent_dim: 16, steps: 10 };
        let cfg = TrainConfig { epochs: 0, batch_size: 1, learning_rate: 1e-3, seed: 4 };
        let (_, log) = train_msp(&recs, &victim, msp, cfg).unwrap();
        let expected = 2.0 * std::f64::consts::LN_2 / 10.0;
        assert!(
            (log.initial_loss - expected).abs() / expected < 0.07,
            "initial {} vs uniform {}",
            log.initial_loss,
            expected
        );
    }

    #[test]
    fn msp_overfits_tiny_corpus() {
        let recs = records(&["red dog", "blue cat"]);
        let victim = victim_for(&recs, 16);
        let msp = MspConfig { recurrent_dim: 32, steps: 4 };
        let cfg = TrainConfig { epochs: 400, batch_size: 2, learning_rate: 1e-2, seed: 9 };
        let (model, log) = train_msp(&recs, &victim, msp, cfg).unwrap();
        assert!(
            log.epoch_losses.last().unwrap() < &log.initial_loss,
            "loss did not improve"
        );
        let mut recovered = 0usize;
        let mut total = 0usize;
        for r in &recs {
            let pred = model.predict(&victim.embed(&r.text).unwrap()).unwrap();
            for g in word_tokens(&r.text) {
                total += 1;
                if pred.contains(&g) {
                    recovered += 1;
                }
            }
        }
        assert!(
            recovered * 4 >= total * 3,
            "recovered only {recovered}/{total} gold words"
        );
    }

    #[test]
    fn msp_skips_wordless_records() {
        let recs = records(&["red dog", "...", "blue cat"]);
        let victim = victim_for(&recs, 8);
        let msp = MspConfig { recurrent_dim: 16, steps: 3 };
        let cfg = TrainConfig { epochs: 1, batch_size: 2, learning_rate: 1e-3, seed: 6 };
        let (_, log) = train_msp(&recs, &victim, msp, cfg).unwrap();
        assert_eq!(log.skipped_records, 1);
    }

    #[test]
    fn msp_rejects_zero_steps() {
        let recs = records(&["red dog"]);
        let victim = victim_for(&recs, 8);
        let msp = MspConfig { recurrent_dim: 16, steps: 0 };
        assert!(matches!(
            train_msp(&recs, &victim, msp, TrainConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn mlc_checkpoint_round_trip() {
        let recs = records(&["red dog", "blue cat"]);
        let victim = victim_for(&recs, 8);
        let cfg = TrainConfig { epochs: 3, batch_size: 2, learning_rate: 1e-3, seed: 8 };
        let (mut model, _) = train_mlc(&recs, &victim, cfg).unwrap();
        model.threshold = 0.35;
        let dir = tempfile::tempdir().unwrap();
        save_mlc(dir.path(), &model).unwrap();
        let loaded = load_mlc(dir.path()).unwrap();
        assert_eq!(loaded.threshold, 0.35);
        assert_eq!(loaded.victim_id, model.victim_id);
        assert_eq!(loaded.vocab.words(), model.vocab.words());
        let e = victim.embed("red dog").unwrap();
        assert_eq!(loaded.probabilities(&e).unwrap(), model.probabilities(&e).unwrap());
    }

    #[test]
    fn msp_checkpoint_round_trip() {
        let recs = records(&["red dog", "blue cat"]);
        let victim = victim_for(&recs, 8);
        let msp = MspConfig { recurrent_dim: 16, steps: 5 };
        let cfg = TrainConfig { epochs: 3, batch_size: 2, learning_rate: 1e-3, seed: 10 };
        let (model, _) = train_msp(&recs, &victim, msp, cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_msp(dir.path(), &model).unwrap();
        let loaded = load_msp(dir.path()).unwrap();
        assert_eq!(loaded.steps, 5);
        assert_eq!(loaded.recurrent_dim, 16);
        let e = victim.embed("blue cat").unwrap();
        assert_eq!(loaded.predict(&e).unwrap(), model.predict(&e).unwrap());
    }

    #[test]
    fn checkpoints_reject_wrong_family() {
        let recs = records(&["red dog"]);
        let victim = victim_for(&recs, 8);
        let cfg = TrainConfig { epochs: 1, batch_size: 1, learning_rate: 1e-3, seed: 1 };
        let (model, _) = train_mlc(&recs, &victim, cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_mlc(dir.path(), &model).unwrap();
        assert!(matches!(load_msp(dir.path()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn training_is_seed_deterministic() {
        let recs = records(&["red dog", "blue cat", "red cat"]);
        let victim = victim_for(&recs, 8);
        let cfg = TrainConfig { epochs: 5, batch_size: 2, learning_rate: 1e-3, seed: 21 };
        let (a, _) = train_mlc(&recs, &victim, cfg).unwrap();
        let (b, _) = train_mlc(&recs, &victim, cfg).unwrap();
        let e = victim.embed("red cat").unwrap();
        assert_eq!(a.probabilities(&e).unwrap(), b.probabilities(&e).unwrap());

        let cfg2 = TrainConfig { seed: 22, ..cfg };
        let (c, _) = train_mlc(&recs, &victim, cfg2).unwrap();
        assert_ne!(a.probabilities(&e).unwrap(), c.probabilities(&e).unwrap());
    }
}
