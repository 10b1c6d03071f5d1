//! GRU cell with explicit BPTT, used by the multi-set prediction baseline.

use ndarray::prelude::*;
use rand::Rng;

use super::Tensor;

/// Single GRU cell: `h' = (1-z)⊙h + z⊙c`.
pub struct GruCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub wz: Tensor,
    pub uz: Tensor,
    pub bz: Tensor,
    pub wr: Tensor,
    pub ur: Tensor,
    pub br: Tensor,
    pub wc: Tensor,
    pub uc: Tensor,
    pub bc: Tensor,
}

/// Per-step activations needed for the backward pass.
pub struct GruStepCache {
    pub x: Array2<f32>,
    pub h_prev: Array2<f32>,
    pub z: Array2<f32>,
    pub r: Array2<f32>,
    pub c: Array2<f32>,
}

fn sigmoid_arr(x: &Array2<f32>) -> Array2<f32> {
    x.mapv(|v| 1.0 / (1.0 + (-v).exp()))
}

impl GruCell {
    pub fn new(input_dim: usize, hidden_dim: usize, std: f32, rng: &mut impl Rng) -> Self {
        Self {
            input_dim,
            hidden_dim,
            wz: Tensor::normal(&[input_dim, hidden_dim], std, rng),
            uz: Tensor::normal(&[hidden_dim, hidden_dim], std, rng),
            bz: Tensor::zeros(&[hidden_dim]),
            wr: Tensor::normal(&[input_dim, hidden_dim], std, rng),
            ur: Tensor::normal(&[hidden_dim, hidden_dim], std, rng),
            br: Tensor::zeros(&[hidden_dim]),
            wc: Tensor::normal(&[input_dim, hidden_dim], std, rng),
            uc: Tensor::normal(&[hidden_dim, hidden_dim], std, rng),
            bc: Tensor::zeros(&[hidden_dim]),
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("wz".into(), &self.wz),
            ("uz".into(), &self.uz),
            ("bz".into(), &self.bz),
            ("wr".into(), &self.wr),
            ("ur".into(), &self.ur),
            ("br".into(), &self.br),
            ("wc".into(), &self.wc),
            ("uc".into(), &self.uc),
            ("bc".into(), &self.bc),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.wz,
            &mut self.uz,
            &mut self.bz,
            &mut self.wr,
            &mut self.ur,
            &mut self.br,
            &mut self.wc,
            &mut self.uc,
            &mut self.bc,
        ]
    }

    /// One step over a batch: x (B, Din), h (B, Dh) → h' (B, Dh).
    pub fn forward_step(&self, x: &Array2<f32>, h: &Array2<f32>) -> (Array2<f32>, GruStepCache) {
        let z = sigmoid_arr(&(x.dot(&self.wz.v2()) + h.dot(&self.uz.v2()) + &self.bz.v1()));
        let r = sigmoid_arr(&(x.dot(&self.wr.v2()) + h.dot(&self.ur.v2()) + &self.br.v1()));
        let rh = &r * h;
        let c = (x.dot(&self.wc.v2()) + rh.dot(&self.uc.v2()) + &self.bc.v1()).mapv(f32::tanh);
        let h_new = (1.0 - &z) * h + &z * &c;
        (
            h_new,
            GruStepCache { x: x.clone(), h_prev: h.clone(), z, r, c },
        )
    }

    /// Backward through one step; accumulates parameter grads and returns
    /// (dx, dh_prev).
    pub fn backward_step(
        &mut self,
        cache: &GruStepCache,
        dh_new: &Array2<f32>,
    ) -> (Array2<f32>, Array2<f32>) {
        let GruStepCache { x, h_prev, z, r, c } = cache;

        let dz = (c - h_prev) * dh_new;
        let dc = z * dh_new;
        let mut dh_prev = (1.0 - z) * dh_new;
        let mut dx = Array2::<f32>::zeros(x.raw_dim());

        // candidate gate
        let dc_pre = (1.0 - c * c) * &dc;
        self.wc.g += &x.t().dot(&dc_pre).into_dyn();
        let rh = r * h_prev;
        self.uc.g += &rh.t().dot(&dc_pre).into_dyn();
        self.bc.g += &dc_pre.sum_axis(Axis(0)).into_dyn();
        let drh = dc_pre.dot(&self.uc.v2().t());
        let dr = &drh * h_prev;
        dh_prev += &(&drh * r);
        dx += &dc_pre.dot(&self.wc.v2().t());

        // update gate
        let dz_pre = z * &(1.0 - z) * &dz;
        self.wz.g += &x.t().dot(&dz_pre).into_dyn();
        self.uz.g += &h_prev.t().dot(&dz_pre).into_dyn();
        self.bz.g += &dz_pre.sum_axis(Axis(0)).into_dyn();
        dx += &dz_pre.dot(&self.wz.v2().t());
        dh_prev += &dz_pre.dot(&self.uz.v2().t());

        // reset gate
        let dr_pre = r * &(1.0 - r) * &dr;
        self.wr.g += &x.t().dot(&dr_pre).into_dyn();
        self.ur.g += &h_prev.t().dot(&dr_pre).into_dyn();
        self.br.g += &dr_pre.sum_axis(Axis(0)).into_dyn();
        dx += &dr_pre.dot(&self.wr.v2().t());
        dh_prev += &dr_pre.dot(&self.ur.v2().t());

        (dx, dh_prev)
    }
}
