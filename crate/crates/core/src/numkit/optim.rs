use serde::{Deserialize, Serialize};

use super::{Matrix, ParamStore};
use crate::{Error, Result};

/// Plain gradient descent: `p ← p − lr·∇p`, then gradients are zeroed.
pub fn sgd_step(params: &mut ParamStore, lr: f64) -> Result<()> {
    check_finite(params)?;
    for (_, value, grad) in params.slots_mut() {
        for (p, g) in value.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *p -= lr * g;
        }
        grad.fill(0.0);
    }
    Ok(())
}

fn check_finite(params: &ParamStore) -> Result<()> {
    for id in params.ids() {
        if !params.grad(id).is_finite() {
            return Err(Error::Training {
                slot: params.name(id).to_string(),
                reason: "non-finite gradient".into(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Stateful optimizer over one [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    moments: Vec<(Matrix, Matrix)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// Applies one update and zeroes the gradients.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd => sgd_step(params, self.lr),
            OptimizerKind::Adam { beta1, beta2, eps } => {
                check_finite(params)?;
                if self.moments.is_empty() {
                    self.moments = params
                        .ids()
                        .map(|id| {
                            let (r, c) = params.value(id).shape();
                            (Matrix::zeros(r, c), Matrix::zeros(r, c))
                        })
                        .collect();
                }
                self.step += 1;
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for ((_, value, grad), (m, v)) in params.slots_mut().zip(&mut self.moments) {
                    let it = value
                        .as_mut_slice()
                        .iter_mut()
                        .zip(grad.as_slice())
                        .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice()));
                    for ((p, &g), (mi, vi)) in it {
                        *mi = beta1 * *mi + (1.0 - beta1) * g;
                        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                        let mhat = *mi / c1;
                        let vhat = *vi / c2;
                        *p -= self.lr * mhat / (vhat.sqrt() + eps);
                    }
                    grad.fill(0.0);
                }
                Ok(())
            }
        }
    }
}
