//! Decoder-only transformer LM (pre-norm, causal, learned positions).
//!
//! The model consumes *input embeddings* rather than token ids so that a
//! conditioning vector can occupy position 0; token/position lookup helpers
//! and their scatter-gradients live here too.

use ndarray::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    cross_entropy_rows, gelu, gelu_backward, layernorm_backward, layernorm_forward,
    linear_backward, linear_forward, log_softmax_row, softmax_rows, LnCache, Tensor,
};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub layers: usize,
    pub dim: usize,
    pub heads: usize,
    /// Maximum input positions (conditioning slot + BOS + tokens).
    pub max_positions: usize,
    pub vocab_size: usize,
}

impl TransformerConfig {
    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.dim == 0 || self.heads == 0 || self.layers == 0 {
            return Err("layers, dim and heads must be positive".into());
        }
        if self.dim % self.heads != 0 {
            return Err(format!("dim {} not divisible by heads {}", self.dim, self.heads));
        }
        if self.vocab_size < 2 || self.max_positions < 2 {
            return Err("vocab_size and max_positions must be at least 2".into());
        }
        Ok(())
    }
}

const INIT_STD: f32 = 0.02;

struct Block {
    ln1_g: Tensor,
    ln1_b: Tensor,
    wqkv: Tensor,
    bqkv: Tensor,
    wo: Tensor,
    bo: Tensor,
    ln2_g: Tensor,
    ln2_b: Tensor,
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

impl Block {
    fn new(dim: usize, rng: &mut impl Rng) -> Self {
        let mut ln1_g = Tensor::zeros(&[dim]);
        ln1_g.v.fill(1.0);
        let mut ln2_g = Tensor::zeros(&[dim]);
        ln2_g.v.fill(1.0);
        Self {
            ln1_g,
            ln1_b: Tensor::zeros(&[dim]),
            wqkv: Tensor::normal(&[dim, 3 * dim], INIT_STD, rng),
            bqkv: Tensor::zeros(&[3 * dim]),
            wo: Tensor::normal(&[dim, dim], INIT_STD, rng),
            bo: Tensor::zeros(&[dim]),
            ln2_g,
            ln2_b: Tensor::zeros(&[dim]),
            w1: Tensor::normal(&[dim, 4 * dim], INIT_STD, rng),
            b1: Tensor::zeros(&[4 * dim]),
            w2: Tensor::normal(&[4 * dim, dim], INIT_STD, rng),
            b2: Tensor::zeros(&[dim]),
        }
    }
}

struct BlockCache {
    ln1: LnCache,
    x1: Array2<f32>,
    qkv: Array2<f32>,
    /// Attention weights per (batch, head), row-major in that order.
    att: Vec<Array2<f32>>,
    o: Array2<f32>,
    ln2: LnCache,
    x2: Array2<f32>,
    a1: Array2<f32>,
    g: Array2<f32>,
}

/// Forward cache for one batch.
pub struct ForwardCache {
    batch: usize,
    seq: usize,
    blocks: Vec<BlockCache>,
    lnf: LnCache,
    xf: Array2<f32>,
}

/// The LM itself. All parameters are f32; `params_mut` exposes them in a
/// fixed order for the optimizer and the checkpoint writer.
pub struct TransformerLm {
    pub cfg: TransformerConfig,
    tok_emb: Tensor,
    pos_emb: Tensor,
    blocks: Vec<Block>,
    lnf_g: Tensor,
    lnf_b: Tensor,
    head_w: Tensor,
    head_b: Tensor,
}

impl TransformerLm {
    pub fn new(cfg: TransformerConfig, rng: &mut impl Rng) -> Self {
        cfg.validate().expect("valid transformer config");
        let mut lnf_g = Tensor::zeros(&[cfg.dim]);
        lnf_g.v.fill(1.0);
        Self {
            tok_emb: Tensor::normal(&[cfg.vocab_size, cfg.dim], INIT_STD, rng),
            pos_emb: Tensor::normal(&[cfg.max_positions, cfg.dim], INIT_STD, rng),
            blocks: (0..cfg.layers).map(|_| Block::new(cfg.dim, rng)).collect(),
            lnf_g,
            lnf_b: Tensor::zeros(&[cfg.dim]),
            head_w: Tensor::normal(&[cfg.dim, cfg.vocab_size], INIT_STD, rng),
            head_b: Tensor::zeros(&[cfg.vocab_size]),
            cfg,
        }
    }

    pub fn token_embedding(&self, id: u32) -> ArrayView1<'_, f32> {
        self.tok_emb.v2().index_axis_move(Axis(0), id as usize)
    }

    pub fn accumulate_token_grad(&mut self, id: u32, grad: ArrayView1<f32>) {
        let mut g = self
            .tok_emb
            .g
            .view_mut()
            .into_dimensionality::<Ix2>()
            .expect("2-d");
        let mut row = g.index_axis_mut(Axis(0), id as usize);
        row += &grad;
    }

    /// Parameters in checkpoint order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("tok_emb".into(), &self.tok_emb),
            ("pos_emb".into(), &self.pos_emb),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            for (name, t) in [
                ("ln1_g", &b.ln1_g),
                ("ln1_b", &b.ln1_b),
                ("wqkv", &b.wqkv),
                ("bqkv", &b.bqkv),
                ("wo", &b.wo),
                ("bo", &b.bo),
                ("ln2_g", &b.ln2_g),
                ("ln2_b", &b.ln2_b),
                ("w1", &b.w1),
                ("b1", &b.b1),
                ("w2", &b.w2),
                ("b2", &b.b2),
            ] {
                out.push((format!("block{i}.{name}"), t));
            }
        }
        out.push(("lnf_g".into(), &self.lnf_g));
        out.push(("lnf_b".into(), &self.lnf_b));
        out.push(("head_w".into(), &self.head_w));
        out.push(("head_b".into(), &self.head_b));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.tok_emb, &mut self.pos_emb];
        for b in &mut self.blocks {
            out.extend([
                &mut b.ln1_g,
                &mut b.ln1_b,
                &mut b.wqkv,
                &mut b.bqkv,
                &mut b.wo,
                &mut b.bo,
                &mut b.ln2_g,
                &mut b.ln2_b,
                &mut b.w1,
                &mut b.b1,
                &mut b.w2,
                &mut b.b2,
            ]);
        }
        out.extend([
            &mut self.lnf_g,
            &mut self.lnf_b,
            &mut self.head_w,
            &mut self.head_b,
        ]);
        out
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Forward pass over raw input embeddings `(batch, seq, dim)`.
    ///
    /// Positional embeddings are added internally. Returns logits
    /// `(batch, seq, vocab)` and the cache `backward` needs.
    pub fn forward(&self, x: &Array3<f32>) -> (Array3<f32>, ForwardCache) {
        let (batch, seq, dim) = x.dim();
        assert_eq!(dim, self.cfg.dim);
        assert!(
            seq <= self.cfg.max_positions,
            "sequence length {seq} exceeds max positions {}",
            self.cfg.max_positions
        );
        let heads = self.cfg.heads;
        let hd = self.cfg.head_dim();
        let scale = 1.0 / (hd as f32).sqrt();

        // flatten to (batch*seq, dim) and add positions
        let mut xf = Array2::<f32>::zeros((batch * seq, dim));
        let pos = self.pos_emb.v2();
        for b in 0..batch {
            for t in 0..seq {
                let mut row = xf.row_mut(b * seq + t);
                row.assign(&x.slice(s![b, t, ..]));
                row += &pos.row(t);
            }
        }
        let mut caches = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let (x1, ln1) = layernorm_forward(&xf, &blk.ln1_g, &blk.ln1_b);
            let qkv = linear_forward(&x1, &blk.wqkv, &blk.bqkv);
            let mut o = Array2::<f32>::zeros((batch * seq, dim));
            let mut att_cache = Vec::with_capacity(batch * heads);
            for b in 0..batch {
                let rows = s![b * seq..(b + 1) * seq, ..];
                let q_all = qkv.slice(s![b * seq..(b + 1) * seq, 0..dim]);
                let k_all = qkv.slice(s![b * seq..(b + 1) * seq, dim..2 * dim]);
                let v_all = qkv.slice(s![b * seq..(b + 1) * seq, 2 * dim..3 * dim]);
                for h in 0..heads {
                    let cols = s![.., h * hd..(h + 1) * hd];
                    let q = q_all.slice(cols);
                    let k = k_all.slice(cols);
                    let v = v_all.slice(cols);
                    let mut scores = q.dot(&k.t());
                    scores *= scale;
                    for i in 0..seq {
                        for j in (i + 1)..seq {
                            scores[[i, j]] = f32::NEG_INFINITY;
                        }
                    }
                    let att = softmax_rows(&scores);
                    let o_bh = att.dot(&v);
                    o.slice_mut(rows)
                        .slice_mut(cols)
                        .assign(&o_bh);
                    att_cache.push(att);
                }
            }
            let attn_out = linear_forward(&o, &blk.wo, &blk.bo);
            xf += &attn_out;

            let (x2, ln2) = layernorm_forward(&xf, &blk.ln2_g, &blk.ln2_b);
            let a1 = linear_forward(&x2, &blk.w1, &blk.b1);
            let g = gelu(&a1);
            let mlp_out = linear_forward(&g, &blk.w2, &blk.b2);
            xf += &mlp_out;

            caches.push(BlockCache { ln1, x1, qkv, att: att_cache, o, ln2, x2, a1, g });
        }

        let (x_final, lnf) = layernorm_forward(&xf, &self.lnf_g, &self.lnf_b);
        let logits_flat = linear_forward(&x_final, &self.head_w, &self.head_b);
        let logits = logits_flat
            .into_shape_with_order((batch, seq, self.cfg.vocab_size))
            .expect("reshape");
        (
            logits,
            ForwardCache { batch, seq, blocks: caches, lnf, xf: x_final },
        )
    }

    /// Backprop: accumulates parameter gradients and returns the gradient on
    /// the raw input embeddings `(batch, seq, dim)`.
    pub fn backward(&mut self, cache: &ForwardCache, dlogits: &Array3<f32>) -> Array3<f32> {
        let (batch, seq) = (cache.batch, cache.seq);
        let dim = self.cfg.dim;
        let heads = self.cfg.heads;
        let hd = self.cfg.head_dim();
        let scale = 1.0 / (hd as f32).sqrt();

        let dlogits_flat = dlogits
            .to_owned()
            .into_shape_with_order((batch * seq, self.cfg.vocab_size))
            .expect("reshape");
        let dxf = linear_backward(&cache.xf, &mut self.head_w, &mut self.head_b, &dlogits_flat);
        let mut dx = layernorm_backward(&dxf, &cache.lnf, &mut self.lnf_g, &mut self.lnf_b);

        for (blk, c) in self.blocks.iter_mut().zip(cache.blocks.iter()).rev() {
            // MLP branch
            let dg = linear_backward(&c.g, &mut blk.w2, &mut blk.b2, &dx);
            let da1 = gelu_backward(&c.a1, &dg);
            let dx2 = linear_backward(&c.x2, &mut blk.w1, &mut blk.b1, &da1);
            let dmid_mlp = layernorm_backward(&dx2, &c.ln2, &mut blk.ln2_g, &mut blk.ln2_b);
            let dmid = &dx + &dmid_mlp;

            // attention branch
            let do_ = linear_backward(&c.o, &mut blk.wo, &mut blk.bo, &dmid);
            let mut dqkv = Array2::<f32>::zeros((batch * seq, 3 * dim));
            for b in 0..batch {
                let rows = s![b * seq..(b + 1) * seq, ..];
                let q_all = c.qkv.slice(s![b * seq..(b + 1) * seq, 0..dim]);
                let k_all = c.qkv.slice(s![b * seq..(b + 1) * seq, dim..2 * dim]);
                let v_all = c.qkv.slice(s![b * seq..(b + 1) * seq, 2 * dim..3 * dim]);
                for h in 0..heads {
                    let cols = s![.., h * hd..(h + 1) * hd];
                    let att = &c.att[b * heads + h];
                    let q = q_all.slice(cols);
                    let k = k_all.slice(cols);
                    let v = v_all.slice(cols);
                    let do_bh = do_.slice(rows).slice(cols).to_owned();

                    let datt = do_bh.dot(&v.t());
                    let dv = att.t().dot(&do_bh);
                    // softmax backward (rows)
                    let inner = (&datt * att).sum_axis(Axis(1));
                    let mut ds = &datt - &inner.view().insert_axis(Axis(1));
                    ds *= att;
                    ds *= scale;
                    let dq = ds.dot(&k);
                    let dk = ds.t().dot(&q);

                    let mut dq_slot = dqkv.slice_mut(s![b * seq..(b + 1) * seq, h * hd..(h + 1) * hd]);
                    dq_slot += &dq;
                    let mut dk_slot = dqkv
                        .slice_mut(s![b * seq..(b + 1) * seq, dim + h * hd..dim + (h + 1) * hd]);
                    dk_slot += &dk;
                    let mut dv_slot = dqkv.slice_mut(s![
                        b * seq..(b + 1) * seq,
                        2 * dim + h * hd..2 * dim + (h + 1) * hd
                    ]);
                    dv_slot += &dv;
                }
            }
            let dx1 = linear_backward(&c.x1, &mut blk.wqkv, &mut blk.bqkv, &dqkv);
            let din_attn = layernorm_backward(&dx1, &c.ln1, &mut blk.ln1_g, &mut blk.ln1_b);
            dx = dmid + din_attn;
        }

        // positional gradient, then unflatten
        {
            let mut pg = self
                .pos_emb
                .g
                .view_mut()
                .into_dimensionality::<Ix2>()
                .expect("2-d");
            for b in 0..batch {
                for t in 0..seq {
                    let mut row = pg.row_mut(t);
                    row += &dx.row(b * seq + t);
                }
            }
        }
        dx.into_shape_with_order((batch, seq, dim)).expect("reshape")
    }

    /// Loss + gradients for one batch; returns (summed CE, supervised count).
    ///
    /// `targets` is (batch, seq) aligned with input positions; `None` marks
    /// unsupervised positions (conditioning slot, padding). The input-embed
    /// gradient is returned for the caller to scatter.
    pub fn loss_and_backward(
        &mut self,
        x: &Array3<f32>,
        targets: &[Vec<Option<u32>>],
    ) -> (f64, usize, Array3<f32>) {
        let (logits, cache) = self.forward(x);
        let (batch, seq, vocab) = logits.dim();
        let flat_targets: Vec<Option<u32>> = targets.iter().flatten().copied().collect();
        let logits_flat = logits
            .into_shape_with_order((batch * seq, vocab))
            .expect("reshape");
        let (loss_sum, n_sup, dl_flat) = cross_entropy_rows(&logits_flat, &flat_targets);
        let dlogits = dl_flat
            .into_shape_with_order((batch, seq, vocab))
            .expect("reshape");
        let dx = self.backward(&cache, &dlogits);
        (loss_sum, n_sup, dx)
    }

    /// Log-probabilities of the next token after each position (batch of 1).
    pub fn next_token_logprobs(&self, x: &Array3<f32>) -> Vec<Vec<f64>> {
        let (logits, _) = self.forward(x);
        let (batch, seq, _) = logits.dim();
        let mut out = Vec::with_capacity(batch);
        for b in 0..batch {
            let row = logits.slice(s![b, seq - 1, ..]).to_owned();
            out.push(log_softmax_row(row.as_slice().expect("contiguous")));
        }
        out
    }
}
