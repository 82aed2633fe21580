//! Adaptive moment estimation.

use alloc::vec::Vec;

use super::Real;

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(size: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: alloc::vec![T::zero(); size],
            v: alloc::vec![T::zero(); size],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update with learning rate `lr`.
    pub fn update(&mut self, params: &mut [T], grad: &[T], lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = 1.0 - libm::pow(self.beta1, t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, t as f64);
        let step = T::lit(lr * libm::sqrt(c2) / c1);
        let eps = T::lit(self.eps * libm::sqrt(c2));
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            *p -= step * *m / (v.sqrt() + eps);
        }
    }
}
