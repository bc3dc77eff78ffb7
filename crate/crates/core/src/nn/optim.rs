use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First-order optimizer with per-tensor state.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    cfg: OptimizerConfig,
    step: u64,
    moments: Vec<(Matrix<T>, Matrix<T>)>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(cfg: OptimizerConfig) -> Result<Self> {
        if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", cfg.lr)));
        }
        if !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) || cfg.eps <= 0.0 {
            return Err(Error::Config("Adam betas must lie in [0, 1) and eps be positive".into()));
        }
        Ok(Self {
            cfg,
            step: 0,
            moments: Vec::new(),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. `names` only feed the diagnostic for non-finite
    /// gradients, which abort the step before any parameter changes.
    pub fn step(&mut self, names: &[&str], params: &mut [&mut Matrix<T>], grads: &[Matrix<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("optimizer", format!("{} params, {} grads", params.len(), grads.len())));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::shape("optimizer", format!("tensor {k}: {:?} vs {:?}", p.shape(), g.shape())));
            }
            if !g.is_finite() {
                let name = names.get(k).copied().unwrap_or("?");
                return Err(Error::NonFinite(format!("gradient of {name} at step {}", self.step + 1)));
            }
        }
        self.step += 1;
        let lr = T::of(self.cfg.lr);
        match self.cfg.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    p.add_scaled(-lr, g)?;
                }
            }
            OptimizerKind::Adam => {
                if self.moments.is_empty() {
                    self.moments = grads
                        .iter()
                        .map(|g| (Matrix::zeros(g.rows(), g.cols()), Matrix::zeros(g.rows(), g.cols())))
                        .collect();
                }
                let (b1, b2, eps) = (T::of(self.cfg.beta1), T::of(self.cfg.beta2), T::of(self.cfg.eps));
                let t = self.step as i32;
                let bc1 = T::one() - b1.powi(t);
                let bc2 = T::one() - b2.powi(t);
                for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.moments.iter_mut()) {
                    for (((pi, &gi), mi), vi) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut().iter_mut())
                        .zip(v.data_mut().iter_mut())
                    {
                        *mi = b1 * *mi + (T::one() - b1) * gi;
                        *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                        let m_hat = *mi / bc1;
                        let v_hat = *vi / bc2;
                        *pi -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
