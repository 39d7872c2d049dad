//! Discrete Fourier transforms: iterative radix-2 for power-of-two lengths,
//! Bluestein's chirp-z algorithm for everything else.
//!
//! Twiddle factors are always evaluated in f64 before conversion to the
//! working scalar, so the f64 instantiation is accurate enough to compare
//! against a naive DFT at 1e-9 absolute tolerance.

use crate::linalg::Scalar;
use num_complex::Complex;

fn twiddle<T: Scalar>(num: f64, den: f64) -> Complex<T> {
    // e^{-2*pi*i * num/den}
    let angle = -std::f64::consts::TAU * num / den;
    Complex::new(T::of_f64(angle.cos()), T::of_f64(angle.sin()))
}

/// Forward DFT convention: X_k = sum_t x_t e^{-2 pi i k t / n}. In place.
pub fn fft<T: Scalar>(data: &mut [Complex<T>]) {
    let n = data.len();
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        radix2(data, false);
    } else {
        bluestein(data);
    }
}

/// Inverse DFT with 1/n scaling. In place.
pub fn ifft<T: Scalar>(data: &mut [Complex<T>]) {
    let n = data.len();
    if n == 0 {
        return;
    }
    for v in data.iter_mut() {
        *v = v.conj();
    }
    fft(data);
    let scale = T::of_f64(1.0 / n as f64);
    for v in data.iter_mut() {
        *v = Complex::new(v.re * scale, -(v.im) * scale);
    }
}

/// Forward DFT of a real signal; returns the n/2+1 non-redundant bins.
pub fn rfft<T: Scalar>(x: &[T]) -> Vec<Complex<T>> {
    let n = x.len();
    let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
    fft(&mut buf);
    buf.truncate(n / 2 + 1);
    buf
}

/// Number of non-redundant spectrum bins for a length-n real signal.
pub fn rfft_bins(n: usize) -> usize {
    n / 2 + 1
}

fn radix2<T: Scalar>(data: &mut [Complex<T>], inverse: bool) {
    let n = data.len();
    debug_assert!(n.is_power_of_two());

    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            data.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let mut w: Complex<T> = twiddle(k as f64, len as f64);
                if inverse {
                    w = w.conj();
                }
                let a = data[start + k];
                let b = data[start + k + half] * w;
                data[start + k] = a + b;
                data[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// Bluestein's algorithm: expresses an arbitrary-length DFT as a circular
/// convolution of chirp-modulated sequences, evaluated with radix-2 FFTs.
fn bluestein<T: Scalar>(data: &mut [Complex<T>]) {
    let n = data.len();
    let m = (2 * n - 1).next_power_of_two();

    // chirp[k] = e^{-pi i k^2 / n}; k^2 taken mod 2n keeps the angle exact.
    let chirp: Vec<Complex<T>> = (0..n)
        .map(|k| {
            let sq = (k * k) % (2 * n);
            twiddle(sq as f64, 2.0 * n as f64)
        })
        .collect();

    let mut a: Vec<Complex<T>> = vec![Complex::new(T::zero(), T::zero()); m];
    for k in 0..n {
        a[k] = data[k] * chirp[k];
    }

    let mut b: Vec<Complex<T>> = vec![Complex::new(T::zero(), T::zero()); m];
    b[0] = chirp[0].conj();
    for k in 1..n {
        let c = chirp[k].conj();
        b[k] = c;
        b[m - k] = c;
    }

    radix2(&mut a, false);
    radix2(&mut b, false);
    for i in 0..m {
        a[i] = a[i] * b[i];
    }
    radix2(&mut a, true);
    let scale = T::of_f64(1.0 / m as f64);
    for k in 0..n {
        data[k] = a[k] * Complex::new(scale, T::zero()) * chirp[k];
    }
}
