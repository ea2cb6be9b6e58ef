use serde::{Deserialize, Serialize};

use super::heads::{FusionHead, FusionOutput, LogisticHead};
use super::lstm::{LstmCache, LstmLayer};
use crate::numkit::{binary_cross_entropy, sigmoid, Matrix, ParamStore, Rng};
use crate::vitals::NUM_STEPS;
use crate::{Error, Result};

/// Network structure, one of the two columns of the results table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Lstm,
    Multimodal,
}

impl Structure {
    pub fn as_str(self) -> &'static str {
        match self {
            Structure::Lstm => "lstm",
            Structure::Multimodal => "multimodal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lstm" => Some(Structure::Lstm),
            "multimodal" => Some(Structure::Multimodal),
            _ => None,
        }
    }
}

/// When the concatenation model first sees each day's embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingVisibility {
    /// e₁ at steps 1–12, e₂ at steps 13–24.
    #[default]
    FromStart,
    /// Zero until step 12, e₁ at steps 12–23, e₂ at step 24.
    EndOfDay,
}

/// Everything needed to rebuild a classifier's parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub structure: Structure,
    pub input_dim: usize,
    /// Dimension of each daily text embedding; 0 for the vitals-only model.
    pub emb_dim: usize,
    pub hidden: usize,
    pub text_hidden: usize,
    pub joint_hidden: usize,
    #[serde(default)]
    pub visibility: EmbeddingVisibility,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.input_dim == 0 {
            return Err(Error::config("model.hidden", "sizes must be ≥ 1"));
        }
        if self.structure == Structure::Multimodal && (self.emb_dim == 0 || self.text_hidden == 0 || self.joint_hidden == 0) {
            return Err(Error::config("model.structure", "multimodal needs text embeddings and nonzero text/joint sizes"));
        }
        Ok(())
    }
}

/// One stay as seen by a classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub stay_id: u64,
    /// T × L standardized vitals.
    pub x: Matrix,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub label: u8,
}

#[derive(Debug, Clone, Copy)]
enum Head {
    Logistic(LogisticHead),
    Fusion(FusionHead),
}

/// Benchmark LSTM (`emb_dim = 0`), concatenation LSTM, or multimodal
/// fusion network, selected by the [`ModelSpec`].
#[derive(Debug, Clone)]
pub struct Classifier {
    pub spec: ModelSpec,
    pub params: ParamStore,
    lstm: LstmLayer,
    head: Head,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub lstm: LstmCache,
    pub fusion: Option<FusionOutput>,
    pub logit: f64,
    pub y_hat: f64,
}

impl Classifier {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = Rng::new(seed);
        let mut params = ParamStore::new();
        let lstm_in = match spec.structure {
            Structure::Lstm => spec.input_dim + spec.emb_dim,
            Structure::Multimodal => spec.input_dim,
        };
        let lstm = LstmLayer::new(&mut params, "lstm", lstm_in, spec.hidden, &mut rng)?;
        let head = match spec.structure {
            Structure::Lstm => Head::Logistic(LogisticHead::new(&mut params, "out", spec.hidden, &mut rng)?),
            Structure::Multimodal => Head::Fusion(FusionHead::new(
                &mut params,
                spec.hidden,
                spec.emb_dim,
                spec.text_hidden,
                spec.joint_hidden,
                &mut rng,
            )?),
        };
        Ok(Self {
            spec,
            params,
            lstm,
            head,
        })
    }

    /// Rebuilds a classifier around existing parameters, checking shapes.
    pub fn from_params(spec: ModelSpec, params: ParamStore) -> Result<Self> {
        let fresh = Self::new(spec.clone(), 0)?;
        for (name, m) in fresh.params.named_values() {
            let id = params.id(name).ok_or_else(|| Error::Format(format!("missing parameter {name}")))?;
            if params.value(id).shape() != m.shape() {
                return Err(Error::Format(format!("parameter {name} has the wrong shape")));
            }
        }
        let lstm = LstmLayer::bind(&params, "lstm")?;
        let head = match spec.structure {
            Structure::Lstm => Head::Logistic(LogisticHead::bind(&params, "out")?),
            Structure::Multimodal => Head::Fusion(FusionHead::bind(&params)?),
        };
        Ok(Self {
            spec,
            params,
            lstm,
            head,
        })
    }

    pub fn lstm(&self) -> &LstmLayer {
        &self.lstm
    }

    pub fn fusion_head(&self) -> Option<&FusionHead> {
        match &self.head {
            Head::Fusion(f) => Some(f),
            Head::Logistic(_) => None,
        }
    }

    pub fn logistic_head(&self) -> Option<&LogisticHead> {
        match &self.head {
            Head::Logistic(h) => Some(h),
            Head::Fusion(_) => None,
        }
    }

    /// Flat LSTM input sequence for a sample.
    pub fn lstm_inputs(&self, s: &Sample) -> Result<Vec<f64>> {
        let (t, l) = s.x.shape();
        if l != self.spec.input_dim || t == 0 {
            return Err(Error::Dimension {
                op: "classifier input",
                left: (NUM_STEPS, self.spec.input_dim),
                right: (t, l),
            });
        }
        if self.spec.structure == Structure::Multimodal || self.spec.emb_dim == 0 {
            return Ok(s.x.as_slice().to_vec());
        }
        check_emb(s, self.spec.emb_dim)?;
        Ok(concat_inputs(&s.x, &s.e1, &s.e2, self.spec.visibility))
    }

    pub fn forward_with(&self, store: &ParamStore, s: &Sample) -> Result<ForwardPass> {
        let xs = self.lstm_inputs(s)?;
        let lstm = self.lstm.forward(store, &xs, s.x.rows())?;
        let (fusion, logit) = match &self.head {
            Head::Logistic(h) => (None, h.logit(store, lstm.last_h())),
            Head::Fusion(f) => {
                check_emb(s, self.spec.emb_dim)?;
                let out = f.forward(store, lstm.last_h(), &s.e1, &s.e2)?;
                let logit = out.logit;
                (Some(out), logit)
            }
        };
        Ok(ForwardPass {
            lstm,
            fusion,
            logit,
            y_hat: sigmoid(logit),
        })
    }

    pub fn forward(&self, s: &Sample) -> Result<ForwardPass> {
        self.forward_with(&self.params, s)
    }

    pub fn predict(&self, s: &Sample) -> Result<f64> {
        Ok(self.forward(s)?.y_hat)
    }

    /// Accumulates dL/dθ for `dlogit = dL/dlogit` into `store`.
    pub fn backward_with(&self, store: &mut ParamStore, pass: &ForwardPass, dlogit: f64) {
        let dh_last = match (&self.head, &pass.fusion) {
            (Head::Logistic(h), _) => h.backward(store, pass.lstm.last_h(), dlogit),
            (Head::Fusion(f), Some(out)) => f.backward(store, out, dlogit),
            (Head::Fusion(_), None) => unreachable!("fusion pass without fusion output"),
        };
        let hdim = self.spec.hidden;
        let mut dh = vec![0.0; pass.lstm.steps * hdim];
        dh[(pass.lstm.steps - 1) * hdim..].copy_from_slice(&dh_last);
        self.lstm.backward(store, &pass.lstm, &dh);
    }

    /// Summed BCE over `samples`; gradients accumulated when `want_grad`.
    pub fn objective(&self, store: &mut ParamStore, samples: &[&Sample], want_grad: bool) -> Result<f64> {
        let mut total = 0.0;
        for s in samples {
            let pass = self.forward_with(store, s)?;
            total += binary_cross_entropy(pass.y_hat, s.label)?;
            if want_grad {
                self.backward_with(store, &pass, pass.y_hat - f64::from(s.label));
            }
        }
        Ok(total)
    }

    pub fn mean_loss(&self, samples: &[Sample]) -> Result<f64> {
        let mut total = 0.0;
        for s in samples {
            total += binary_cross_entropy(self.predict(s)?, s.label)?;
        }
        Ok(total / samples.len().max(1) as f64)
    }
}

fn check_emb(s: &Sample, dim: usize) -> Result<()> {
    if s.e1.len() != dim || s.e2.len() != dim {
        return Err(Error::Dimension {
            op: "text embedding",
            left: (2, dim),
            right: (s.e1.len(), s.e2.len()),
        });
    }
    Ok(())
}

/// Day (0 or 1) whose embedding step `t` (0-based) sees, or `None`.
pub fn embedding_day(t: usize, steps: usize, visibility: EmbeddingVisibility) -> Option<usize> {
    let half = steps / 2;
    match visibility {
        EmbeddingVisibility::FromStart => Some(usize::from(t >= half)),
        EmbeddingVisibility::EndOfDay => {
            if t + 1 >= steps {
                Some(1)
            } else if t + 1 >= half {
                Some(0)
            } else {
                None
            }
        }
    }
}

/// Per-step input `[x_t ; e_day(t)]`, flattened T × (L + d).
pub fn concat_inputs(x: &Matrix, e1: &[f64], e2: &[f64], visibility: EmbeddingVisibility) -> Vec<f64> {
    let (t_steps, _) = x.shape();
    let d = e1.len();
    let mut out = Vec::with_capacity(t_steps * (x.cols() + d));
    for t in 0..t_steps {
        out.extend_from_slice(x.row(t));
        match embedding_day(t, t_steps, visibility) {
            Some(0) => out.extend_from_slice(e1),
            Some(_) => out.extend_from_slice(e2),
            None => out.extend(std::iter::repeat_n(0.0, d)),
        }
    }
    out
}
