use serde::{Deserialize, Serialize};

use super::linalg::Real;

/// Adaptive moment estimation with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub hyper: AdamHyper,
    pub t: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> Adam<T> {
    pub fn new(len: usize, lr: f64) -> Self {
        Adam {
            hyper: AdamHyper { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 },
            t: 0,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let h = self.hyper;
        let b1 = T::of_f64(h.beta1);
        let b2 = T::of_f64(h.beta2);
        let one = T::one();
        let step = T::of_f64(h.lr * (1.0 - h.beta2.powf(self.t as f64)).sqrt() / (1.0 - h.beta1.powf(self.t as f64)));
        let eps = T::of_f64(h.eps);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            *p = *p - step * *m / (v.sqrt() + eps);
        }
    }
}
