use crate::numkit::matrix::{axpy, dot, matvec_bias, matvec_t_acc, outer_acc};
use crate::numkit::{sigmoid, ParamStore, Rng, SlotId};
use crate::{Error, Result};

/// Single logistic unit on the last hidden state.
#[derive(Debug, Clone, Copy)]
pub struct LogisticHead {
    pub w: SlotId,
    pub b: SlotId,
}

impl LogisticHead {
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            w: store.add_glorot(format!("{prefix}.w"), 1, input, rng)?,
            b: store.add_zeros(format!("{prefix}.b"), 1, 1)?,
        })
    }

    pub fn bind(store: &ParamStore, prefix: &str) -> Result<Self> {
        Ok(Self {
            w: slot(store, &format!("{prefix}.w"))?,
            b: slot(store, &format!("{prefix}.b"))?,
        })
    }

    pub fn logit(&self, store: &ParamStore, h: &[f64]) -> f64 {
        dot(store.value(self.w).as_slice(), h) + store.value(self.b).get(0, 0)
    }

    /// Accumulates parameter gradients; returns dL/dh.
    pub fn backward(&self, store: &mut ParamStore, h: &[f64], dlogit: f64) -> Vec<f64> {
        axpy(dlogit, h, store.grad_mut(self.w).as_mut_slice());
        store.grad_mut(self.b).as_mut_slice()[0] += dlogit;
        store.value(self.w).as_slice().iter().map(|w| w * dlogit).collect()
    }
}

pub(crate) fn slot(store: &ParamStore, name: &str) -> Result<SlotId> {
    store.id(name).ok_or_else(|| Error::Format(format!("missing parameter {name}")))
}

/// Text encoder and joint layer of the multimodal network:
///
/// ```text
/// h_e = W_e·[e₁, e₂] + b_e
/// h_j = W_j·[h_T, h_e] + b_j
/// ŷ   = σ(W_y·h_j + b_y)
/// ```
#[derive(Debug, Clone, Copy)]
pub struct FusionHead {
    pub we: SlotId,
    pub be: SlotId,
    pub wj: SlotId,
    pub bj: SlotId,
    pub wy: SlotId,
    pub by: SlotId,
    pub lstm_hidden: usize,
    pub emb_dim: usize,
    pub text_hidden: usize,
    pub joint_hidden: usize,
}

/// Fusion forward values kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutput {
    pub y_hat: f64,
    pub logit: f64,
    pub text_input: Vec<f64>,
    pub h_e: Vec<f64>,
    pub joint_input: Vec<f64>,
    pub h_j: Vec<f64>,
}

impl FusionHead {
    pub fn new(
        store: &mut ParamStore,
        lstm_hidden: usize,
        emb_dim: usize,
        text_hidden: usize,
        joint_hidden: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Self {
            we: store.add_glorot("fusion.we", text_hidden, 2 * emb_dim, rng)?,
            be: store.add_zeros("fusion.be", 1, text_hidden)?,
            wj: store.add_glorot("fusion.wj", joint_hidden, lstm_hidden + text_hidden, rng)?,
            bj: store.add_zeros("fusion.bj", 1, joint_hidden)?,
            wy: store.add_glorot("fusion.wy", 1, joint_hidden, rng)?,
            by: store.add_zeros("fusion.by", 1, 1)?,
            lstm_hidden,
            emb_dim,
            text_hidden,
            joint_hidden,
        })
    }

    pub fn bind(store: &ParamStore) -> Result<Self> {
        let we = slot(store, "fusion.we")?;
        let wj = slot(store, "fusion.wj")?;
        let (text_hidden, two_d) = store.value(we).shape();
        let (joint_hidden, cols) = store.value(wj).shape();
        Ok(Self {
            we,
            be: slot(store, "fusion.be")?,
            wj,
            bj: slot(store, "fusion.bj")?,
            wy: slot(store, "fusion.wy")?,
            by: slot(store, "fusion.by")?,
            lstm_hidden: cols - text_hidden,
            emb_dim: two_d / 2,
            text_hidden,
            joint_hidden,
        })
    }

    pub fn forward(&self, store: &ParamStore, h_t: &[f64], e1: &[f64], e2: &[f64]) -> Result<FusionOutput> {
        if h_t.len() != self.lstm_hidden || e1.len() != self.emb_dim || e2.len() != self.emb_dim {
            return Err(Error::Dimension {
                op: "fusion forward",
                left: (self.lstm_hidden, self.emb_dim),
                right: (h_t.len(), e1.len().max(e2.len())),
            });
        }
        let mut text_input = e1.to_vec();
        text_input.extend_from_slice(e2);
        let mut h_e = vec![0.0; self.text_hidden];
        matvec_bias(store.value(self.we).as_slice(), store.value(self.be).as_slice(), &text_input, &mut h_e);
        let mut joint_input = h_t.to_vec();
        joint_input.extend_from_slice(&h_e);
        let mut h_j = vec![0.0; self.joint_hidden];
        matvec_bias(store.value(self.wj).as_slice(), store.value(self.bj).as_slice(), &joint_input, &mut h_j);
        let logit = dot(store.value(self.wy).as_slice(), &h_j) + store.value(self.by).get(0, 0);
        Ok(FusionOutput {
            y_hat: sigmoid(logit),
            logit,
            text_input,
            h_e,
            joint_input,
            h_j,
        })
    }

    /// Accumulates parameter gradients; returns dL/dh_T.
    pub fn backward(&self, store: &mut ParamStore, out: &FusionOutput, dlogit: f64) -> Vec<f64> {
        axpy(dlogit, &out.h_j, store.grad_mut(self.wy).as_mut_slice());
        store.grad_mut(self.by).as_mut_slice()[0] += dlogit;
        let dh_j: Vec<f64> = store.value(self.wy).as_slice().iter().map(|w| w * dlogit).collect();

        outer_acc(&dh_j, &out.joint_input, store.grad_mut(self.wj).as_mut_slice());
        axpy(1.0, &dh_j, store.grad_mut(self.bj).as_mut_slice());
        let mut djoint = vec![0.0; out.joint_input.len()];
        matvec_t_acc(store.value(self.wj).as_slice(), &dh_j, &mut djoint);

        let dh_e = &djoint[self.lstm_hidden..];
        outer_acc(dh_e, &out.text_input, store.grad_mut(self.we).as_mut_slice());
        axpy(1.0, dh_e, store.grad_mut(self.be).as_mut_slice());
        djoint.truncate(self.lstm_hidden);
        djoint
    }
}
