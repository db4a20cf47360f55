use serde::{Deserialize, Serialize};

use super::{AutodiffError, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment buffers, one per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, m: Vec::new(), v: Vec::new(), t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update of every parameter.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>], lr: f64) -> Result<(), AutodiffError> {
        if !(lr > 0.0) {
            return Err(AutodiffError::InvalidArgument(format!("learning rate {lr} must be positive")));
        }
        if params.len() != grads.len() {
            return Err(AutodiffError::ShapeMismatch(format!("{} parameters, {} gradients", params.len(), grads.len())));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(AutodiffError::ShapeMismatch(format!("parameter {:?} vs gradient {:?}", p.shape(), g.shape())));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
            return Err(AutodiffError::ShapeMismatch("parameter set changed between steps".into()));
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let step = self.t as i32;
        let c1 = 1.0 - beta1.powi(step);
        let c2 = 1.0 - beta2.powi(step);
        let (b1, b2, e) = (T::of(beta1), T::of(beta2), T::of(eps));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let (lr_t, c1, c2) = (T::of(lr), T::of(c1), T::of(c2));
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((theta, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + one_b1 * gi;
                *vi = b2 * *vi + one_b2 * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *theta -= lr_t * m_hat / (v_hat.sqrt() + e);
            }
        }
        Ok(())
    }
}
