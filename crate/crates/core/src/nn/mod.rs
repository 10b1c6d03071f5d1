//! Minimal neural-net building blocks with hand-written backward passes.
//!
//! Everything is f32, single-threaded, and seeded — a training run is a pure
//! function of (init seed, data order). No autograd: each layer's `backward`
//! consumes the caches its `forward` produced. Correctness is pinned by
//! finite-difference gradient checks in the tests.

pub mod gru;
pub mod transformer;

use ndarray::azip;
use ndarray::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

/// A parameter tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Tensor {
    pub v: ArrayD<f32>,
    pub g: ArrayD<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { v: ArrayD::zeros(shape), g: ArrayD::zeros(shape) }
    }

    pub fn normal(shape: &[usize], std: f32, rng: &mut impl Rng) -> Self {
        let n: usize = shape.iter().product();
        let data: Vec<f32> = (0..n)
            .map(|_| {
                let x: f32 = rng.sample(StandardNormal);
                x * std
            })
            .collect();
        Self {
            v: ArrayD::from_shape_vec(shape, data).expect("shape matches data"),
            g: ArrayD::zeros(shape),
        }
    }

    pub fn zero_grad(&mut self) {
        self.g.fill(0.0);
    }

    pub fn v2(&self) -> ArrayView2<'_, f32> {
        self.v.view().into_dimensionality().expect("2-d tensor")
    }

    pub fn v1(&self) -> ArrayView1<'_, f32> {
        self.v.view().into_dimensionality().expect("1-d tensor")
    }
}

/// Adam optimizer; state rows follow the order params are handed in, which
/// must be stable across steps.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    t: u64,
    m: Vec<ArrayD<f32>>,
    s: Vec<ArrayD<f32>>,
}

impl Adam {
    pub fn new(lr: f32) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), s: Vec::new() }
    }

    /// One update over the parameter list; gradients are consumed (zeroed).
    pub fn step(&mut self, params: &mut [&mut Tensor]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| ArrayD::zeros(p.v.shape())).collect();
            self.s = params.iter().map(|p| ArrayD::zeros(p.v.shape())).collect();
        }
        assert_eq!(self.m.len(), params.len(), "param list changed between steps");
        self.t += 1;
        let (lr, beta1, beta2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        let b1t = 1.0 - beta1.powi(self.t as i32);
        let b2t = 1.0 - beta2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let m = &mut self.m[i];
            let s = &mut self.s[i];
            azip!((m in m, s in s, v in &mut p.v, g in &p.g) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *s = beta2 * *s + (1.0 - beta2) * g * g;
                let mhat = *m / b1t;
                let shat = *s / b2t;
                *v -= lr * mhat / (shat.sqrt() + eps);
            });
            p.g.fill(0.0);
        }
    }
}

// ---------------------------------------------------------------------------
// Primitive ops
// ---------------------------------------------------------------------------

/// `y = x·W + b`; x is (N, Din), W (Din, Dout), b (Dout).
pub fn linear_forward(x: &Array2<f32>, w: &Tensor, b: &Tensor) -> Array2<f32> {
    let mut y = x.dot(&w.v2());
    y += &b.v1();
    y
}

/// Accumulates dW, db into the tensors and returns dx.
pub fn linear_backward(
    x: &Array2<f32>,
    w: &mut Tensor,
    b: &mut Tensor,
    dy: &Array2<f32>,
) -> Array2<f32> {
    let dw = x.t().dot(dy);
    w.g += &dw.into_dyn();
    let db = dy.sum_axis(Axis(0));
    b.g += &db.into_dyn();
    dy.dot(&w.v2().t())
}

pub const LN_EPS: f32 = 1e-5;

/// Row-wise layer norm cache: normalized activations and 1/std per row.
pub struct LnCache {
    pub xhat: Array2<f32>,
    pub inv_std: Array1<f32>,
}

pub fn layernorm_forward(x: &Array2<f32>, gain: &Tensor, bias: &Tensor) -> (Array2<f32>, LnCache) {
    let d = x.ncols() as f32;
    let mean = x.mean_axis(Axis(1)).expect("non-empty rows");
    let mut xhat = x - &mean.view().insert_axis(Axis(1));
    let var = xhat.mapv(|v| v * v).mean_axis(Axis(1)).expect("non-empty rows");
    let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    xhat *= &inv_std.view().insert_axis(Axis(1));
    let y = &xhat * &gain.v1() + &bias.v1();
    let _ = d;
    (y, LnCache { xhat, inv_std })
}

pub fn layernorm_backward(
    dy: &Array2<f32>,
    cache: &LnCache,
    gain: &mut Tensor,
    bias: &mut Tensor,
) -> Array2<f32> {
    let d = dy.ncols() as f32;
    gain.g += &(dy * &cache.xhat).sum_axis(Axis(0)).into_dyn();
    bias.g += &dy.sum_axis(Axis(0)).into_dyn();
    let dxhat = dy * &gain.v1();
    let row_dot = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / d;
    let row_mean = dxhat.sum_axis(Axis(1)) / d;
    let mut dx = dxhat;
    dx -= &row_mean.view().insert_axis(Axis(1));
    dx -= &(&cache.xhat * &row_dot.view().insert_axis(Axis(1)));
    dx *= &cache.inv_std.view().insert_axis(Axis(1));
    dx
}

const GELU_C: f32 = 0.797_884_6; // sqrt(2/pi)

/// GELU, tanh approximation.
pub fn gelu(x: &Array2<f32>) -> Array2<f32> {
    x.mapv(|v| {
        let u = GELU_C * (v + 0.044715 * v * v * v);
        0.5 * v * (1.0 + u.tanh())
    })
}

pub fn gelu_backward(x: &Array2<f32>, dy: &Array2<f32>) -> Array2<f32> {
    let mut dx = x.clone();
    azip!((dx in &mut dx, dy in dy) {
        let v = *dx;
        let u = GELU_C * (v + 0.044715 * v * v * v);
        let t = u.tanh();
        let du = GELU_C * (1.0 + 3.0 * 0.044715 * v * v);
        *dx = dy * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
    });
    dx
}

pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(x: &Array2<f32>) -> Array2<f32> {
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        let max = row.fold(f32::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    y
}

/// Stable log-softmax of one row in f64.
pub fn log_softmax_row(row: &[f32]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let logsum: f64 = row
        .iter()
        .map(|&v| ((v as f64) - max).exp())
        .sum::<f64>()
        .ln()
        + max;
    row.iter().map(|&v| v as f64 - logsum).collect()
}

/// Mean next-token cross-entropy over supervised positions.
///
/// `targets[n] == None` marks an unsupervised row. Returns (summed loss,
/// supervised count, dlogits for the *mean* loss).
pub fn cross_entropy_rows(
    logits: &Array2<f32>,
    targets: &[Option<u32>],
) -> (f64, usize, Array2<f32>) {
    assert_eq!(logits.nrows(), targets.len());
    let n_sup = targets.iter().filter(|t| t.is_some()).count();
    let mut dlogits = Array2::<f32>::zeros(logits.raw_dim());
    if n_sup == 0 {
        return (0.0, 0, dlogits);
    }
    let mut loss_sum = 0.0f64;
    let scale = 1.0 / n_sup as f32;
    for (i, target) in targets.iter().enumerate() {
        let Some(t) = target else { continue };
        let row = logits.row(i);
        let logp = log_softmax_row(row.as_slice().expect("contiguous row"));
        loss_sum -= logp[*t as usize];
        let mut drow = dlogits.row_mut(i);
        for (j, lp) in logp.iter().enumerate() {
            drow[j] = (lp.exp() as f32) * scale;
        }
        drow[*t as usize] -= scale;
    }
    (loss_sum, n_sup, dlogits)
}
