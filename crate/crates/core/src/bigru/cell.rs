use serde::{Deserialize, Serialize};

use crate::nn::linalg::{add_outer, sigmoid, Matrix};
use crate::rng::DetRng;

/// One GRU cell. Every gate weight maps `[h_{t-1}, x_t]` (length `H + D`)
/// to `H` outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruCellParams {
    pub w_z: Matrix,
    pub b_z: Vec<f64>,
    pub w_r: Matrix,
    pub b_r: Vec<f64>,
    pub w_h: Matrix,
    pub b_h: Vec<f64>,
}

/// Values saved from one step for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub candidate: Vec<f64>,
    pub h: Vec<f64>,
}

impl GruCellParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let m = || Matrix::zeros(hidden, hidden + input);
        Self {
            w_z: m(),
            b_z: vec![0.0; hidden],
            w_r: m(),
            b_r: vec![0.0; hidden],
            w_h: m(),
            b_h: vec![0.0; hidden],
        }
    }

    /// Glorot-uniform gate weights, zero biases.
    pub fn glorot(hidden: usize, input: usize, rng: &mut DetRng) -> Self {
        let limit = (6.0 / (2 * hidden + input) as f64).sqrt();
        let mut m = || Matrix::uniform(hidden, hidden + input, limit, rng);
        let (w_z, w_r, w_h) = (m(), m(), m());
        Self {
            w_z,
            b_z: vec![0.0; hidden],
            w_r,
            b_r: vec![0.0; hidden],
            w_h,
            b_h: vec![0.0; hidden],
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.rows
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols - self.w_z.rows
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            &self.w_z.data,
            &self.b_z,
            &self.w_r.data,
            &self.b_r,
            &self.w_h.data,
            &self.b_h,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            &mut self.w_z.data,
            &mut self.b_z,
            &mut self.w_r.data,
            &mut self.b_r,
            &mut self.w_h.data,
            &mut self.b_h,
        ]
    }

    pub fn param_count(&self) -> usize {
        let h = self.hidden_dim();
        3 * (h * self.w_z.cols + h)
    }

    /// z = σ(W_z[h,x] + b_z), r = σ(W_r[h,x] + b_r),
    /// h̃ = tanh(W_h[r⊙h, x] + b_h), h' = (1 − z)⊙h + z⊙h̃.
    pub fn step(&self, h_prev: &[f64], x: &[f64]) -> StepCache {
        let h = self.hidden_dim();
        let mut a = Vec::with_capacity(self.w_z.cols);
        a.extend_from_slice(h_prev);
        a.extend_from_slice(x);

        let mut z = self.b_z.clone();
        self.w_z.matvec_into(&a, &mut z, true);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));
        let mut r = self.b_r.clone();
        self.w_r.matvec_into(&a, &mut r, true);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));

        for i in 0..h {
            a[i] = r[i] * h_prev[i];
        }
        let mut candidate = self.b_h.clone();
        self.w_h.matvec_into(&a, &mut candidate, true);
        candidate.iter_mut().for_each(|v| *v = v.tanh());

        let out = (0..h)
            .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * candidate[i])
            .collect();
        StepCache {
            h_prev: h_prev.to_vec(),
            z,
            r,
            candidate,
            h: out,
        }
    }

    /// Backpropagate `dh` through one step. Parameter gradients are added to
    /// `grad` (laid out as [`Self::tensors`]); the gradient with respect to
    /// `h_prev` is written to `dh_prev`.
    pub fn backward_step(
        &self,
        x: &[f64],
        c: &StepCache,
        dh: &[f64],
        grad: &mut [f64],
        dh_prev: &mut [f64],
    ) {
        let h = self.hidden_dim();
        let cols = self.w_z.cols;
        let nw = h * cols;

        let mut dz = vec![0.0; h];
        let mut dn = vec![0.0; h];
        for i in 0..h {
            dz[i] = dh[i] * (c.candidate[i] - c.h_prev[i]) * c.z[i] * (1.0 - c.z[i]);
            dn[i] = dh[i] * c.z[i] * (1.0 - c.candidate[i] * c.candidate[i]);
            dh_prev[i] = dh[i] * (1.0 - c.z[i]);
        }

        // d(r ⊙ h_prev) from the candidate path
        let mut drh = vec![0.0; h];
        for (row, &d) in dn.iter().enumerate() {
            if d != 0.0 {
                for (o, &w) in drh.iter_mut().zip(&self.w_h.row(row)[..h]) {
                    *o += w * d;
                }
            }
        }
        let mut dr = vec![0.0; h];
        for i in 0..h {
            dr[i] = drh[i] * c.h_prev[i] * c.r[i] * (1.0 - c.r[i]);
            dh_prev[i] += drh[i] * c.r[i];
        }
        for (row, (&dzi, &dri)) in dz.iter().zip(&dr).enumerate() {
            let wz = &self.w_z.row(row)[..h];
            let wr = &self.w_r.row(row)[..h];
            for ((o, &a), &b) in dh_prev.iter_mut().zip(wz).zip(wr) {
                *o += a * dzi + b * dri;
            }
        }

        let mut a = Vec::with_capacity(cols);
        a.extend_from_slice(&c.h_prev);
        a.extend_from_slice(x);
        let (g_wz, rest) = grad.split_at_mut(nw);
        let (g_bz, rest) = rest.split_at_mut(h);
        let (g_wr, rest) = rest.split_at_mut(nw);
        let (g_br, rest) = rest.split_at_mut(h);
        let (g_wh, rest) = rest.split_at_mut(nw);
        let g_bh = &mut rest[..h];

        add_outer(g_wz, &dz, &a);
        add_outer(g_wr, &dr, &a);
        for i in 0..h {
            g_bz[i] += dz[i];
            g_br[i] += dr[i];
            g_bh[i] += dn[i];
            a[i] = c.r[i] * c.h_prev[i];
        }
        add_outer(g_wh, &dn, &a);
    }
}

/// One GRU step from `h_prev` on input `x_t`.
pub fn gru_cell_step(cell: &GruCellParams, h_prev: &[f64], x: &[f64]) -> Vec<f64> {
    cell.step(h_prev, x).h
}
