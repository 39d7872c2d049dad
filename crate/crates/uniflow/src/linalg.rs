//! Flat-slice linear algebra for the model core.
//!
//! Matrices are row-major `&[T]` slices with explicit dimensions. Everything
//! is generic over [`Scalar`] so the same forward/backward code runs in f32
//! for training and in f64 for finite-difference gradient verification.

use num_traits::Float;

/// Float scalar the model core is generic over (f32 or f64).
pub trait Scalar:
    Float
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn of_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn of_f32(x: f32) -> Self;
    fn as_f32(self) -> f32;
}

impl Scalar for f32 {
    fn of_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn of_f32(x: f32) -> Self {
        x
    }
    fn as_f32(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    fn of_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn of_f32(x: f32) -> Self {
        x as f64
    }
    fn as_f32(self) -> f32 {
        self as f32
    }
}

/// out = a (m x k) * b (k x n), overwriting out.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(T::zero());
    matmul_acc(a, b, m, k, n, out);
}

/// out += a (m x k) * b (k x n).
pub fn matmul_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let mut s0 = T::zero();
    let mut s1 = T::zero();
    let mut s2 = T::zero();
    let mut s3 = T::zero();
    for c in 0..chunks {
        let i = c * 4;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut tail = T::zero();
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    ((s0 + s1) + (s2 + s3)) + tail
}

/// out = a (m x k) * b^T where b is (n x k).
pub fn matmul_bt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = dot(arow, brow);
        }
    }
}

/// out += a^T (k x m interpreted from a: m x k) * b (m x n); result k x n.
pub fn matmul_at_b_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// y[i] += x[i] for equally sized slices.
pub fn add_assign<T: Scalar>(y: &mut [T], x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += *xi;
    }
}

/// y[i] += s * x[i].
pub fn axpy<T: Scalar>(y: &mut [T], s: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * *xi;
    }
}

/// Adds a length-n bias vector to every row of an (m x n) matrix.
pub fn add_bias_rows<T: Scalar>(x: &mut [T], bias: &[T], m: usize, n: usize) {
    debug_assert_eq!(bias.len(), n);
    for i in 0..m {
        let row = &mut x[i * n..(i + 1) * n];
        for j in 0..n {
            row[j] += bias[j];
        }
    }
}

/// out[j] += sum over rows of x[i*n + j] (the bias gradient of a linear layer).
pub fn col_sum_acc<T: Scalar>(x: &[T], m: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(out.len(), n);
    for i in 0..m {
        let row = &x[i * n..(i + 1) * n];
        for j in 0..n {
            out[j] += row[j];
        }
    }
}

/// Row-wise softmax in place on an (m x n) matrix.
pub fn softmax_rows<T: Scalar>(x: &mut [T], m: usize, n: usize) {
    for i in 0..m {
        let row = &mut x[i * n..(i + 1) * n];
        let mut mx = row[0];
        for &v in row.iter() {
            if v > mx {
                mx = v;
            }
        }
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
}

/// Backward of row-wise softmax: given y = softmax(z) and dL/dy, writes dL/dz.
/// dz = y .* (dy - sum(dy .* y)) per row.
pub fn softmax_rows_backward<T: Scalar>(y: &[T], dy: &[T], m: usize, n: usize, dz: &mut [T]) {
    for i in 0..m {
        let yr = &y[i * n..(i + 1) * n];
        let dyr = &dy[i * n..(i + 1) * n];
        let mut dot = T::zero();
        for j in 0..n {
            dot += dyr[j] * yr[j];
        }
        let dzr = &mut dz[i * n..(i + 1) * n];
        for j in 0..n {
            dzr[j] = yr[j] * (dyr[j] - dot);
        }
    }
}

pub fn relu<T: Scalar>(x: &mut [T]) {
    for v in x.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// dL/dx = dL/dy where pre-activation > 0, else 0.
pub fn relu_backward<T: Scalar>(pre: &[T], dy: &[T], dx: &mut [T]) {
    for i in 0..pre.len() {
        dx[i] = if pre[i] > T::zero() { dy[i] } else { T::zero() };
    }
}

/// GELU (tanh approximation), elementwise.
pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
    let a = T::of_f64(0.044715);
    let half = T::of_f64(0.5);
    let inner = c * (x + a * x * x * x);
    half * x * (T::one() + inner.tanh())
}

/// Derivative of the tanh-approximation GELU.
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of_f64(0.797_884_560_802_865_4);
    let a = T::of_f64(0.044715);
    let half = T::of_f64(0.5);
    let three = T::of_f64(3.0);
    let inner = c * (x + a * x * x * x);
    let t = inner.tanh();
    let sech2 = T::one() - t * t;
    half * (T::one() + t) + half * x * sech2 * c * (T::one() + three * a * x * x)
}

/// Frobenius / L2 norm of a flat slice, accumulated in f64.
pub fn norm2<T: Scalar>(x: &[T]) -> f64 {
    x.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small_known() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0, 2.0, 3.0, 4.0f64];
        let b = [5.0, 6.0, 7.0, 8.0f64];
        let mut out = [0.0f64; 4];
        matmul(&a, &b, 2, 2, 2, &mut out);
        assert_eq!(out, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_bt_matches_explicit_transpose() {
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0f64, 0.0, 2.0, -1.0, 3.0, 1.0]; // 2x3 (used as b^T: 3x2)
        let mut out = [0.0f64; 4];
        matmul_bt(&a, &b, 2, 3, 2, &mut out);
        // row0 . row0 = 1+0+6=7 ; row0 . row1 = -1+6+3=8
        assert_eq!(out, [7.0, 8.0, 16.0, 17.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut x = vec![0.3f64, -1.0, 2.0, 4.0, 4.0, 4.0];
        softmax_rows(&mut x, 2, 3);
        for i in 0..2 {
            let s: f64 = x[i * 3..(i + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        // constant row is uniform
        for j in 0..3 {
            assert!((x[3 + j] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_backward_matches_finite_difference() {
        let z = [0.2f64, -0.4, 0.9, 0.1];
        let dy = [0.3f64, -1.0, 0.5, 0.2];
        let mut y = z.to_vec();
        softmax_rows(&mut y, 1, 4);
        let mut dz = vec![0.0; 4];
        softmax_rows_backward(&y, &dy, 1, 4, &mut dz);
        let eps = 1e-7;
        for i in 0..4 {
            let mut zp = z.to_vec();
            zp[i] += eps;
            softmax_rows(&mut zp, 1, 4);
            let mut zm = z.to_vec();
            zm[i] -= eps;
            softmax_rows(&mut zm, 1, 4);
            let fd: f64 = (0..4).map(|j| dy[j] * (zp[j] - zm[j]) / (2.0 * eps)).sum();
            assert!((fd - dz[i]).abs() < 1e-6, "i={i} fd={fd} dz={}", dz[i]);
        }
    }

    #[test]
    fn gelu_grad_matches_finite_difference() {
        for &x in &[-2.0f64, -0.5, 0.0, 0.3, 1.7] {
            let eps = 1e-6;
            let fd = (gelu(x + eps) - gelu(x - eps)) / (2.0 * eps);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }
}
