//! Adam over a flat parameter vector.
//!
//! First/second moment estimates with bias correction, driven full-batch by
//! the trainer. The canonical constants are the defaults; only the learning
//! rate is usually tuned.

use crate::num::Scalar;
use serde::{Deserialize, Serialize};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> AdamConfig<T> {
    pub fn with_learning_rate(learning_rate: T) -> Self {
        Self {
            learning_rate,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            epsilon: T::of(1e-8),
        }
    }
}

/// Moment state for one parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    config: AdamConfig<T>,
    m: Vec<T>,
    v: Vec<T>,
    step: u32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig<T>, dim: usize) -> Self {
        Self {
            config,
            m: vec![T::zero(); dim],
            v: vec![T::zero(); dim],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u32 {
        self.step
    }

    /// One descent step on `params` along `grad` (the gradient of the loss
    /// being minimized).
    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let lr_t =
            c.learning_rate * (T::one() - c.beta2.powi(t)).sqrt() / (T::one() - c.beta1.powi(t));
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = c.beta1 * self.m[i] + (T::one() - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (T::one() - c.beta2) * g * g;
            params[i] -= lr_t * self.m[i] / (self.v[i].sqrt() + c.epsilon);
        }
    }
}
