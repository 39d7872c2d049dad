//! Multi-head self-attention and the pre-norm transformer block.

use super::layers::{
    dropout_backward, dropout_forward, softmax_rows, softmax_rows_backward, DropoutMask,
    FeedForward, FeedForwardCache, LayerNorm, LayerNormCache, Linear,
};
use super::params::ParamStore;
use crate::linalg::{add_assign, matmul_acc, Scalar};
use crate::rng::Stream;

#[derive(Clone, Copy, Debug)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub dim: usize,
}

pub struct MhaCache<T> {
    pub q: Vec<T>,
    pub k: Vec<T>,
    pub v: Vec<T>,
    /// Row-stochastic attention per head: heads x rows x rows.
    pub attn: Vec<T>,
    pub ctx: Vec<T>,
    pub rows: usize,
}

impl MultiHeadAttention {
    pub fn init<T: Scalar>(
        ps: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut Stream,
    ) -> Self {
        assert!(dim.is_multiple_of(heads), "d_model must be divisible by heads");
        MultiHeadAttention {
            wq: Linear::init(ps, &format!("{name}.wq"), dim, dim, true, rng),
            wk: Linear::init(ps, &format!("{name}.wk"), dim, dim, true, rng),
            wv: Linear::init(ps, &format!("{name}.wv"), dim, dim, true, rng),
            wo: Linear::init(ps, &format!("{name}.wo"), dim, dim, true, rng),
            heads,
            dim,
        }
    }

    pub fn forward<T: Scalar>(&self, values: &[T], x: &[T], rows: usize) -> (Vec<T>, MhaCache<T>) {
        let d = self.dim;
        let h = self.heads;
        let dh = d / h;
        let scale = T::of_f64(1.0 / (dh as f64).sqrt());

        let q = self.wq.forward(values, x, rows);
        let k = self.wk.forward(values, x, rows);
        let v = self.wv.forward(values, x, rows);

        let mut attn = vec![T::zero(); h * rows * rows];
        let mut ctx = vec![T::zero(); rows * d];
        for head in 0..h {
            let off = head * dh;
            let a = &mut attn[head * rows * rows..(head + 1) * rows * rows];
            for i in 0..rows {
                let qi = &q[i * d + off..i * d + off + dh];
                for j in 0..rows {
                    let kj = &k[j * d + off..j * d + off + dh];
                    a[i * rows + j] = crate::linalg::dot(qi, kj) * scale;
                }
            }
            softmax_rows(a, rows, rows);
            for i in 0..rows {
                let out = &mut ctx[i * d + off..i * d + off + dh];
                for j in 0..rows {
                    let w = a[i * rows + j];
                    if w == T::zero() {
                        continue;
                    }
                    let vj = &v[j * d + off..j * d + off + dh];
                    for c in 0..dh {
                        out[c] += w * vj[c];
                    }
                }
            }
        }

        let y = self.wo.forward(values, &ctx, rows);
        (
            y,
            MhaCache {
                q,
                k,
                v,
                attn,
                ctx,
                rows,
            },
        )
    }

    pub fn backward<T: Scalar>(
        &self,
        values: &[T],
        grads: &mut [T],
        x: &[T],
        cache: &MhaCache<T>,
        dy: &[T],
    ) -> Vec<T> {
        let rows = cache.rows;
        let d = self.dim;
        let h = self.heads;
        let dh = d / h;
        let scale = T::of_f64(1.0 / (dh as f64).sqrt());

        let dctx = self.wo.backward(values, grads, &cache.ctx, dy, rows);

        let mut dq = vec![T::zero(); rows * d];
        let mut dk = vec![T::zero(); rows * d];
        let mut dv = vec![T::zero(); rows * d];

        for head in 0..h {
            let off = head * dh;
            let a = &cache.attn[head * rows * rows..(head + 1) * rows * rows];

            // dattn[i][j] = dctx_h[i] . v_h[j] ; dv_h[j] += sum_i attn[i][j] * dctx_h[i]
            let mut dattn = vec![T::zero(); rows * rows];
            for i in 0..rows {
                let dci = &dctx[i * d + off..i * d + off + dh];
                for j in 0..rows {
                    let vj = &cache.v[j * d + off..j * d + off + dh];
                    dattn[i * rows + j] = crate::linalg::dot(dci, vj);
                    let w = a[i * rows + j];
                    if w != T::zero() {
                        let dvj = &mut dv[j * d + off..j * d + off + dh];
                        for c in 0..dh {
                            dvj[c] += w * dci[c];
                        }
                    }
                }
            }

            let mut dlogits = vec![T::zero(); rows * rows];
            softmax_rows_backward(a, &dattn, rows, rows, &mut dlogits);

            // logits = scale * q k^T
            for i in 0..rows {
                let dqi = &mut dq[i * d + off..i * d + off + dh];
                for j in 0..rows {
                    let g = dlogits[i * rows + j] * scale;
                    if g == T::zero() {
                        continue;
                    }
                    let kj = &cache.k[j * d + off..j * d + off + dh];
                    for c in 0..dh {
                        dqi[c] += g * kj[c];
                    }
                }
            }
            for j in 0..rows {
                let dkj = &mut dk[j * d + off..j * d + off + dh];
                for i in 0..rows {
                    let g = dlogits[i * rows + j] * scale;
                    if g == T::zero() {
                        continue;
                    }
                    let qi = &cache.q[i * d + off..i * d + off + dh];
                    for c in 0..dh {
                        dkj[c] += g * qi[c];
                    }
                }
            }
        }

        let mut dx = self.wq.backward(values, grads, x, &dq, rows);
        add_assign(&mut dx, &self.wk.backward(values, grads, x, &dk, rows));
        add_assign(&mut dx, &self.wv.backward(values, grads, x, &dv, rows));
        dx
    }
}

// --- pre-norm transformer block ---------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct Block {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ff: FeedForward,
}

pub struct BlockCache<T> {
    pub ln1: LayerNormCache<T>,
    pub a: Vec<T>,
    pub attn: MhaCache<T>,
    pub drop1: DropoutMask<T>,
    pub h: Vec<T>,
    pub ln2: LayerNormCache<T>,
    pub b: Vec<T>,
    pub ff: FeedForwardCache<T>,
    pub drop2: DropoutMask<T>,
}

impl Block {
    pub fn init<T: Scalar>(
        ps: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        heads: usize,
        ff_mult: usize,
        rng: &mut Stream,
    ) -> Self {
        Block {
            ln1: LayerNorm::init(ps, &format!("{name}.ln1"), dim, rng),
            attn: MultiHeadAttention::init(ps, &format!("{name}.attn"), dim, heads, rng),
            ln2: LayerNorm::init(ps, &format!("{name}.ln2"), dim, rng),
            ff: FeedForward::init(ps, &format!("{name}.ff"), dim, dim * ff_mult, rng),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        values: &[T],
        x: &[T],
        rows: usize,
        dropout: f64,
        mut rng: Option<&mut Stream>,
    ) -> (Vec<T>, BlockCache<T>) {
        let (a, ln1_cache) = self.ln1.forward(values, x, rows);
        let (mut s, attn_cache) = self.attn.forward(values, &a, rows);
        let drop1 = dropout_forward(&mut s, dropout, rng.as_deref_mut());
        let mut h = x.to_vec();
        add_assign(&mut h, &s);

        let (b, ln2_cache) = self.ln2.forward(values, &h, rows);
        let (mut f, ff_cache) = self.ff.forward(values, &b, rows);
        let drop2 = dropout_forward(&mut f, dropout, rng);
        let mut y = h.clone();
        add_assign(&mut y, &f);

        (
            y,
            BlockCache {
                ln1: ln1_cache,
                a,
                attn: attn_cache,
                drop1,
                h,
                ln2: ln2_cache,
                b,
                ff: ff_cache,
                drop2,
            },
        )
    }

    pub fn backward<T: Scalar>(
        &self,
        values: &[T],
        grads: &mut [T],
        cache: &BlockCache<T>,
        dy: &[T],
        rows: usize,
    ) -> Vec<T> {
        // y = h + drop(ff(ln2(h)))
        let mut df = dy.to_vec();
        dropout_backward(&cache.drop2, &mut df);
        let db = self
            .ff
            .backward(values, grads, &cache.b, &cache.ff, &df, rows);
        let mut dh = self.ln2.backward(values, grads, &cache.ln2, &db, rows);
        add_assign(&mut dh, dy);

        // h = x + drop(attn(ln1(x)))
        let mut ds = dh.clone();
        dropout_backward(&cache.drop1, &mut ds);
        let da = self
            .attn
            .backward(values, grads, &cache.a, &cache.attn, &ds);
        let mut dx = self.ln1.backward(values, grads, &cache.ln1, &da, rows);
        add_assign(&mut dx, &dh);
        dx
    }
}

// keep matmul_acc linked for potential fused paths
#[allow(dead_code)]
fn _unused<T: Scalar>(a: &[T], b: &[T], out: &mut [T]) {
    matmul_acc(a, b, 1, a.len(), 1, out);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attention_rows_sum_to_one() {
        let mut rng = Stream::new(14);
        let mut ps: ParamStore<f64> = ParamStore::new();
        let mha = MultiHeadAttention::init(&mut ps, "a", 8, 2, &mut rng);
        let rows = 5;
        let x: Vec<f64> = (0..rows * 8).map(|_| rng.normal()).collect();
        let (_, cache) = mha.forward(&ps.values, &x, rows);
        for head in 0..2 {
            for i in 0..rows {
                let s: f64 = (0..rows)
                    .map(|j| cache.attn[head * rows * rows + i * rows + j])
                    .sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn mha_backward_matches_finite_differences() {
        let mut rng = Stream::new(21);
        let mut ps: ParamStore<f64> = ParamStore::new();
        let mha = MultiHeadAttention::init(&mut ps, "a", 6, 2, &mut rng);
        let rows = 4;
        let x: Vec<f64> = (0..rows * 6).map(|_| rng.normal()).collect();
        let dy: Vec<f64> = (0..rows * 6).map(|_| rng.normal()).collect();

        let (_, cache) = mha.forward(&ps.values, &x, rows);
        let mut grads = vec![0.0; ps.len()];
        let dx = mha.backward(&ps.values, &mut grads, &x, &cache, &dy);

        let loss = |vals: &[f64], xs: &[f64]| -> f64 {
            let (y, _) = mha.forward(vals, xs, rows);
            y.iter().zip(&dy).map(|(a, b)| a * b).sum()
        };

        // input gradient
        for i in 0..x.len() {
            let mut xs = x.clone();
            let eps = 1e-6;
            xs[i] += eps;
            let fp = loss(&ps.values, &xs);
            xs[i] -= 2.0 * eps;
            let fm = loss(&ps.values, &xs);
            let fd = (fp - fm) / (2.0 * eps);
            let denom = fd.abs().max(dx[i].abs()).max(1e-8);
            assert!(((fd - dx[i]) / denom).abs() < 1e-4, "dx[{i}]");
        }
        // a sample of parameter gradients
        for idx in (0..ps.len()).step_by(17) {
            let mut vals = ps.values.clone();
            let eps = 1e-6;
            vals[idx] += eps;
            let fp = loss(&vals, &x);
            vals[idx] -= 2.0 * eps;
            let fm = loss(&vals, &x);
            let fd = (fp - fm) / (2.0 * eps);
            let denom = fd.abs().max(grads[idx].abs()).max(1e-8);
            assert!(((fd - grads[idx]) / denom).abs() < 1e-4, "grad[{idx}]");
        }
    }

    #[test]
    fn block_backward_matches_finite_differences() {
        let mut rng = Stream::new(30);
        let mut ps: ParamStore<f64> = ParamStore::new();
        let block = Block::init(&mut ps, "b", 6, 2, 2, &mut rng);
        let rows = 3;
        let x: Vec<f64> = (0..rows * 6).map(|_| rng.normal()).collect();
        let dy: Vec<f64> = (0..rows * 6).map(|_| rng.normal()).collect();

        let (_, cache) = block.forward(&ps.values, &x, rows, 0.0, None);
        let mut grads = vec![0.0; ps.len()];
        let dx = block.backward(&ps.values, &mut grads, &cache, &dy, rows);

        let loss = |vals: &[f64], xs: &[f64]| -> f64 {
            let (y, _) = block.forward(vals, xs, rows, 0.0, None);
            y.iter().zip(&dy).map(|(a, b)| a * b).sum()
        };
        for i in 0..x.len() {
            let mut xs = x.clone();
            let eps = 1e-6;
            xs[i] += eps;
            let fp = loss(&ps.values, &xs);
            xs[i] -= 2.0 * eps;
            let fm = loss(&ps.values, &xs);
            let fd = (fp - fm) / (2.0 * eps);
            let denom = fd.abs().max(dx[i].abs()).max(1e-8);
            assert!(((fd - dx[i]) / denom).abs() < 1e-4, "dx[{i}]");
        }
        for idx in (0..ps.len()).step_by(23) {
            let mut vals = ps.values.clone();
            let eps = 1e-6;
            vals[idx] += eps;
            let fp = loss(&vals, &x);
            vals[idx] -= 2.0 * eps;
            let fm = loss(&vals, &x);
            let fd = (fp - fm) / (2.0 * eps);
            let denom = fd.abs().max(grads[idx].abs()).max(1e-8);
            assert!(((fd - grads[idx]) / denom).abs() < 1e-4, "grad[{idx}]");
        }
    }

    #[test]
    fn zeroed_residual_branches_make_block_identity() {
        let mut rng = Stream::new(9);
        let mut ps: ParamStore<f64> = ParamStore::new();
        let block = Block::init(&mut ps, "b", 8, 2, 4, &mut rng);
        for v in ps.get_mut(block.attn.wo.w) {
            *v = 0.0;
        }
        for v in ps.get_mut(block.ff.lin2.w) {
            *v = 0.0;
        }
        let x: Vec<f64> = (0..3 * 8).map(|_| rng.normal()).collect();
        let (y, _) = block.forward(&ps.values, &x, 3, 0.0, None);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
