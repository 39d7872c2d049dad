//! Primitive learnable layers with explicit forward caches and hand-written
//! backward passes.

use super::params::{grad, Init, ParamId, ParamStore};
use crate::linalg::{add_bias_rows, col_sum_acc, gelu, gelu_grad, matmul, matmul_at_b_acc, Scalar};
use crate::rng::Stream;

pub const LN_EPS: f64 = 1e-5;

// --- linear ---------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn init<T: Scalar>(
        ps: &mut ParamStore<T>,
        name: &str,
        din: usize,
        dout: usize,
        bias: bool,
        rng: &mut Stream,
    ) -> Self {
        let std = 1.0 / (din as f64).sqrt();
        let w = ps.add(&format!("{name}.w"), &[din, dout], Init::Normal(std), rng);
        let b = if bias {
            Some(ps.add(&format!("{name}.b"), &[dout], Init::Zeros, rng))
        } else {
            None
        };
        Linear { w, b, din, dout }
    }

    pub fn forward<T: Scalar>(&self, values: &[T], x: &[T], rows: usize) -> Vec<T> {
        let w = &values[self.w.offset..self.w.offset + self.w.len];
        let mut y = vec![T::zero(); rows * self.dout];
        matmul(x, w, rows, self.din, self.dout, &mut y);
        if let Some(b) = self.b {
            add_bias_rows(&mut y, &values[b.offset..b.offset + b.len], rows, self.dout);
        }
        y
    }

    /// Returns dx; accumulates dW (and db) into `grads`.
    pub fn backward<T: Scalar>(
        &self,
        values: &[T],
        grads: &mut [T],
        x: &[T],
        dy: &[T],
        rows: usize,
    ) -> Vec<T> {
        matmul_at_b_acc(x, dy, rows, self.din, self.dout, grad(grads, self.w));
        if let Some(b) = self.b {
            col_sum_acc(dy, rows, self.dout, grad(grads, b));
        }
        let w = &values[self.w.offset..self.w.offset + self.w.len];
        let mut dx = vec![T::zero(); rows * self.din];
        // dx = dy * W^T ; W is (din x dout) so W^T rows are W columns
        for i in 0..rows {
            let dyr = &dy[i * self.dout..(i + 1) * self.dout];
            let dxr = &mut dx[i * self.din..(i + 1) * self.din];
            for d in 0..self.din {
                let wrow = &w[d * self.dout..(d + 1) * self.dout];
                dxr[d] = crate::linalg::dot(dyr, wrow);
            }
        }
        dx
    }
}

// --- layer norm -------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

pub struct LayerNormCache<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

impl LayerNorm {
    pub fn init<T: Scalar>(ps: &mut ParamStore<T>, name: &str, dim: usize, rng: &mut Stream) -> Self {
        let gamma = ps.add(&format!("{name}.gamma"), &[dim], Init::Ones, rng);
        let beta = ps.add(&format!("{name}.beta"), &[dim], Init::Zeros, rng);
        LayerNorm { gamma, beta, dim }
    }

    pub fn forward<T: Scalar>(&self, values: &[T], x: &[T], rows: usize) -> (Vec<T>, LayerNormCache<T>) {
        let d = self.dim;
        let gamma = &values[self.gamma.offset..self.gamma.offset + d];
        let beta = &values[self.beta.offset..self.beta.offset + d];
        let mut y = vec![T::zero(); rows * d];
        let mut xhat = vec![T::zero(); rows * d];
        let mut rstd = vec![T::zero(); rows];
        let inv_d = T::of_f64(1.0 / d as f64);
        let eps = T::of_f64(LN_EPS);
        for i in 0..rows {
            let xr = &x[i * d..(i + 1) * d];
            let mut mean = T::zero();
            for &v in xr {
                mean += v;
            }
            mean *= inv_d;
            let mut var = T::zero();
            for &v in xr {
                let c = v - mean;
                var += c * c;
            }
            var *= inv_d;
            let r = (var + eps).sqrt().recip();
            rstd[i] = r;
            for j in 0..d {
                let xh = (xr[j] - mean) * r;
                xhat[i * d + j] = xh;
                y[i * d + j] = xh * gamma[j] + beta[j];
            }
        }
        (y, LayerNormCache { xhat, rstd })
    }

    pub fn backward<T: Scalar>(
        &self,
        values: &[T],
        grads: &mut [T],
        cache: &LayerNormCache<T>,
        dy: &[T],
        rows: usize,
    ) -> Vec<T> {
        let d = self.dim;
        let gamma = &values[self.gamma.offset..self.gamma.offset + d];
        let mut dx = vec![T::zero(); rows * d];
        let inv_d = T::of_f64(1.0 / d as f64);
        {
            let dgamma = grad(grads, self.gamma);
            for i in 0..rows {
                for j in 0..d {
                    dgamma[j] += dy[i * d + j] * cache.xhat[i * d + j];
                }
            }
        }
        {
            let dbeta = grad(grads, self.beta);
            col_sum_acc(dy, rows, d, dbeta);
        }
        for i in 0..rows {
            let xh = &cache.xhat[i * d..(i + 1) * d];
            let dyr = &dy[i * d..(i + 1) * d];
            let mut mean_dxhat = T::zero();
            let mut mean_dxhat_xhat = T::zero();
            for j in 0..d {
                let dxh = dyr[j] * gamma[j];
                mean_dxhat += dxh;
                mean_dxhat_xhat += dxh * xh[j];
            }
            mean_dxhat *= inv_d;
            mean_dxhat_xhat *= inv_d;
            let r = cache.rstd[i];
            for j in 0..d {
                let dxh = dyr[j] * gamma[j];
                dx[i * d + j] = r * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
            }
        }
        dx
    }
}

// --- dropout ----------------------------------------------------------------

/// Inverted dropout: kept activations are scaled by 1/(1-p). An empty mask
/// means the layer ran in inference mode (identity).
pub struct DropoutMask<T> {
    pub scale: T,
    pub kept: Vec<bool>,
}

pub fn dropout_forward<T: Scalar>(x: &mut [T], p: f64, rng: Option<&mut Stream>) -> DropoutMask<T> {
    match rng {
        Some(rng) if p > 0.0 => {
            let scale = T::of_f64(1.0 / (1.0 - p));
            let mut kept = vec![true; x.len()];
            for i in 0..x.len() {
                if rng.next_f64() < p {
                    kept[i] = false;
                    x[i] = T::zero();
                } else {
                    x[i] *= scale;
                }
            }
            DropoutMask { scale, kept }
        }
        _ => DropoutMask {
            scale: T::one(),
            kept: Vec::new(),
        },
    }
}

pub fn dropout_backward<T: Scalar>(mask: &DropoutMask<T>, dy: &mut [T]) {
    if mask.kept.is_empty() {
        return;
    }
    for i in 0..dy.len() {
        if mask.kept[i] {
            dy[i] *= mask.scale;
        } else {
            dy[i] = T::zero();
        }
    }
}

// --- feed-forward -----------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct FeedForward {
    pub lin1: Linear,
    pub lin2: Linear,
}

pub struct FeedForwardCache<T> {
    pub pre: Vec<T>,
    pub act: Vec<T>,
}

impl FeedForward {
    pub fn init<T: Scalar>(
        ps: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        hidden: usize,
        rng: &mut Stream,
    ) -> Self {
        FeedForward {
            lin1: Linear::init(ps, &format!("{name}.lin1"), dim, hidden, true, rng),
            lin2: Linear::init(ps, &format!("{name}.lin2"), hidden, dim, true, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, values: &[T], x: &[T], rows: usize) -> (Vec<T>, FeedForwardCache<T>) {
        let pre = self.lin1.forward(values, x, rows);
        let act: Vec<T> = pre.iter().map(|&v| gelu(v)).collect();
        let y = self.lin2.forward(values, &act, rows);
        (y, FeedForwardCache { pre, act })
    }

    pub fn backward<T: Scalar>(
        &self,
        values: &[T],
        grads: &mut [T],
        x: &[T],
        cache: &FeedForwardCache<T>,
        dy: &[T],
        rows: usize,
    ) -> Vec<T> {
        let mut dact = self.lin2.backward(values, grads, &cache.act, dy, rows);
        for i in 0..dact.len() {
            dact[i] *= gelu_grad(cache.pre[i]);
        }
        self.lin1.backward(values, grads, x, &dact, rows)
    }
}

// re-exported helpers used by sibling modules
pub(crate) use crate::linalg::softmax_rows;
pub(crate) use crate::linalg::softmax_rows_backward;
