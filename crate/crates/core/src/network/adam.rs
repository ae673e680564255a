//! Adam with bias correction.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn new(len: usize) -> Self {
        Moments {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// Applies one update; `step` is the 1-based step count after increment.
    pub fn apply(&mut self, params: &mut [f64], grads: &[f64], lr: f64, (b1, b2): (f64, f64), step: u64) {
        debug_assert_eq!(params.len(), grads.len());
        let c1 = 1.0 - libm::pow(b1, step as f64);
        let c2 = 1.0 - libm::pow(b2, step as f64);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (libm::sqrt(v_hat) + EPSILON);
        }
    }
}

/// Optimizer state for a whole network: one [`Moments`] per tensor, in
/// the network's tensor order, and the shared step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub moments: Vec<Moments>,
}

impl AdamState {
    pub fn new(tensor_lens: impl Iterator<Item = usize>) -> Self {
        AdamState {
            step: 0,
            moments: tensor_lens.map(Moments::new).collect(),
        }
    }
}
