//! Adam optimizer over the flat parameter vector. Moments are kept in f64
//! regardless of the model scalar type.

use crate::linalg::Scalar;

pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Adam {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step<T: Scalar>(&mut self, values: &mut [T], grads: &[T], lr: f64) {
        debug_assert_eq!(values.len(), grads.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..values.len() {
            let g = grads[i].as_f64();
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            let update = lr * mhat / (vhat.sqrt() + self.eps);
            values[i] = T::of_f64(values[i].as_f64() - update);
        }
    }
}

/// Scales gradients so their global L2 norm is at most `clip`.
pub fn clip_global_norm<T: Scalar>(grads: &mut [T], clip: f64) -> f64 {
    let norm = crate::linalg::norm2(grads);
    if norm > clip && norm > 0.0 {
        let scale = T::of_f64(clip / norm);
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}
