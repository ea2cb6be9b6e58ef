//! Document vectors through corruption.
//!
//! Skip-gram with negative sampling where every predictor is augmented by
//! the mean input embedding of a randomly corrupted copy of its document.
//! At inference a document is the average of its words' input embeddings.

mod io;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::numkit::matrix::{axpy, dot};
use crate::numkit::{sigmoid, Matrix, Rng};
use crate::{Error, Result};

pub use io::{read_embeddings, write_embeddings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    /// Probability that a word is dropped from the document context.
    pub corruption: f64,
    pub subsample: f64,
    pub epochs: usize,
    pub lr: f64,
    pub min_count: u64,
    /// How documents are embedded after training.
    pub inference: InferenceMode,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            negatives: 5,
            corruption: 0.9,
            subsample: 1e-4,
            epochs: 10,
            lr: 0.025,
            min_count: crate::corpus::DEFAULT_MIN_COUNT,
            inference: InferenceMode::Exact,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("embedding.dim", "must be ≥ 1"));
        }
        if !(0.0..1.0).contains(&self.corruption) {
            return Err(Error::config("embedding.corruption", "must lie in [0, 1)"));
        }
        if self.window == 0 {
            return Err(Error::config("embedding.window", "must be ≥ 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("embedding.lr", "must be finite and ≥ 0"));
        }
        if self.subsample < 0.0 {
            return Err(Error::config("embedding.subsample", "must be ≥ 0"));
        }
        if let InferenceMode::Sampled { q } = self.inference {
            if !(0.0..1.0).contains(&q) {
                return Err(Error::config("embedding.inference.q", "must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

/// Positions kept after corruption, with the unbiasedness scale 1/(1−q).
#[derive(Debug, Clone, PartialEq)]
pub struct Corruption {
    pub retained: Vec<usize>,
    pub scale: f64,
}

/// Keeps each of `len` positions independently with probability 1−q.
pub fn corrupt(len: usize, q: f64, rng: &mut Rng) -> Corruption {
    let retained = if q == 0.0 {
        (0..len).collect()
    } else {
        (0..len).filter(|_| !rng.bernoulli(q)).collect()
    };
    Corruption {
        retained,
        scale: 1.0 / (1.0 - q),
    }
}

/// Sampler proportional to counts^0.75.
#[derive(Debug, Clone)]
pub struct UnigramTable {
    cumulative: Vec<f64>,
}

impl UnigramTable {
    pub fn new(counts: &[u64]) -> Result<Self> {
        let mut acc = 0.0;
        let cumulative: Vec<f64> = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        if acc <= 0.0 {
            return Err(Error::config("embedding", "negative-sampling table has no mass"));
        }
        Ok(Self { cumulative })
    }

    pub fn weight(&self, index: usize) -> f64 {
        let prev = if index == 0 { 0.0 } else { self.cumulative[index - 1] };
        self.cumulative[index] - prev
    }
}

pub fn negative_sample(rng: &mut Rng, table: &UnigramTable) -> usize {
    let total = *table.cumulative.last().expect("nonempty table");
    let u = rng.uniform() * total;
    let i = table.cumulative.partition_point(|&c| c <= u);
    // zero-weight entries share a cumulative value with their predecessor and
    // are never returned; clamp guards the u ≈ total rounding case
    i.min(table.cumulative.len() - 1)
}

/// One skip-gram training example with its corrupted document context.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub context: usize,
    pub target: usize,
    pub negatives: Vec<usize>,
    /// Vocabulary indices of the retained document words.
    pub doc: Vec<usize>,
    /// 1/((1−q)·T) for a document of length T.
    pub doc_scale: f64,
}

/// Negative-sampling loss of one pair; gradients are accumulated into
/// `grads = (dU, dV)` when given.
pub fn pair_loss(input: &Matrix, output: &Matrix, pair: &Pair, grads: Option<(&mut Matrix, &mut Matrix)>) -> f64 {
    let d = input.cols();
    let mut h = input.row(pair.context).to_vec();
    for &w in &pair.doc {
        axpy(pair.doc_scale, input.row(w), &mut h);
    }
    let mut loss = 0.0;
    let mut dh = vec![0.0; d];
    let mut coefs = Vec::with_capacity(1 + pair.negatives.len());
    for (k, &j) in std::iter::once(&pair.target).chain(&pair.negatives).enumerate() {
        let s = dot(output.row(j), &h);
        let (l, g) = sgns_term(s, k == 0);
        loss += l;
        axpy(g, output.row(j), &mut dh);
        coefs.push((j, g));
    }
    if let Some((du, dv)) = grads {
        for (j, g) in coefs {
            axpy(g, &h, dv.row_mut(j));
        }
        axpy(1.0, &dh, du.row_mut(pair.context));
        for &w in &pair.doc {
            axpy(pair.doc_scale, &dh, du.row_mut(w));
        }
    }
    loss
}

/// Loss and d(loss)/d(score) of one logistic term.
#[inline]
fn sgns_term(score: f64, positive: bool) -> (f64, f64) {
    let p = sigmoid(score);
    if positive {
        (-log_sigmoid(score), p - 1.0)
    } else {
        (-log_sigmoid(-score), p)
    }
}

#[inline]
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    pub vocab: Vocabulary,
    pub config: EmbeddingConfig,
    /// U, |V|×d; rows are the word vectors averaged at inference.
    pub input: Matrix,
    /// Output (context-prediction) embeddings, |V|×d.
    pub output: Matrix,
    /// Mean pair loss of each training epoch.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InferenceMode {
    Exact,
    Sampled { q: f64 },
}

/// A daily document embedding (e_1 for day 0, e_2 for day 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocEmbedding {
    pub stay_id: u64,
    pub day: u8,
    pub vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub empty: bool,
}

impl EmbeddingModel {
    /// Initial parameters: U uniform in ±0.5/d, output embeddings zero.
    pub fn init(vocab: Vocabulary, config: EmbeddingConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(Error::config("embedding.min_count", "vocabulary is empty"));
        }
        let (n, d) = (vocab.len(), config.dim);
        let r = 0.5 / d as f64;
        let data = (0..n * d).map(|_| rng.uniform_range(-r, r)).collect();
        Ok(Self {
            input: Matrix::from_vec(n, d, data)?,
            output: Matrix::zeros(n, d),
            vocab,
            config,
            loss_history: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn encode(&self, tokens: &[impl AsRef<str>]) -> Vec<usize> {
        tokens.iter().map(|t| self.vocab.encode(t.as_ref())).collect()
    }

    /// Mean input embedding of the document. Returns the vector and whether
    /// the document was empty (zero vector).
    pub fn embed_document(&self, tokens: &[impl AsRef<str>], mode: InferenceMode, rng: &mut Rng) -> (Vec<f64>, bool) {
        let d = self.dim();
        if tokens.is_empty() {
            return (vec![0.0; d], true);
        }
        let ids = self.encode(tokens);
        let mut sum = vec![0.0; d];
        match mode {
            InferenceMode::Exact => {
                for &w in &ids {
                    axpy(1.0, self.input.row(w), &mut sum);
                }
            }
            InferenceMode::Sampled { q } => {
                let c = corrupt(ids.len(), q, rng);
                for &p in &c.retained {
                    axpy(1.0, self.input.row(ids[p]), &mut sum);
                }
                sum.iter_mut().for_each(|v| *v *= c.scale);
            }
        }
        let n = ids.len() as f64;
        (sum.into_iter().map(|v| v / n).collect(), false)
    }

    pub fn is_finite(&self) -> bool {
        self.input.is_finite() && self.output.is_finite()
    }
}

/// Trains a model on `documents` (token sequences) over `vocab`.
pub fn train(documents: &[Vec<String>], vocab: Vocabulary, config: EmbeddingConfig, rng: &mut Rng) -> Result<EmbeddingModel> {
    let mut model = EmbeddingModel::init(vocab, config, rng)?;
    let cfg = model.config.clone();
    let docs: Vec<Vec<usize>> = documents.iter().map(|d| model.encode(d)).collect();
    let total_tokens: usize = docs.iter().map(Vec::len).sum();
    if total_tokens == 0 {
        return Err(Error::config("embedding", "corpus has no tokens"));
    }
    let table = UnigramTable::new(model.vocab.counts())?;
    let corpus_count: u64 = model.vocab.counts().iter().sum();
    let keep_prob: Vec<f64> = model
        .vocab
        .counts()
        .iter()
        .map(|&c| {
            if cfg.subsample <= 0.0 || c == 0 {
                return 1.0;
            }
            let f = c as f64 / corpus_count as f64;
            (((f / cfg.subsample).sqrt() + 1.0) * cfg.subsample / f).min(1.0)
        })
        .collect();

    let d = cfg.dim;
    let schedule = (cfg.epochs * total_tokens).max(1) as f64;
    let mut processed = 0usize;
    let mut h = vec![0.0; d];
    let mut dh = vec![0.0; d];
    let mut docv = vec![0.0; d];
    let mut ddoc = vec![0.0; d];
    for _epoch in 0..cfg.epochs {
        let (mut loss_sum, mut pairs) = (0.0, 0usize);
        for doc in &docs {
            let lr = cfg.lr * (1.0 - processed as f64 / schedule).max(1e-4);
            processed += doc.len();
            if doc.is_empty() {
                continue;
            }
            let c = corrupt(doc.len(), cfg.corruption, rng);
            let doc_scale = c.scale / doc.len() as f64;
            docv.fill(0.0);
            for &p in &c.retained {
                axpy(doc_scale, model.input.row(doc[p]), &mut docv);
            }
            ddoc.fill(0.0);
            for (i, &target) in doc.iter().enumerate() {
                if keep_prob[target] < 1.0 && !rng.bernoulli(keep_prob[target]) {
                    continue;
                }
                let b = 1 + rng.below(cfg.window);
                let lo = i.saturating_sub(b);
                let hi = (i + b).min(doc.len() - 1);
                for (j, &context) in doc.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    h.copy_from_slice(model.input.row(context));
                    axpy(1.0, &docv, &mut h);
                    dh.fill(0.0);
                    for k in 0..=cfg.negatives {
                        let (j_out, positive) = if k == 0 {
                            (target, true)
                        } else {
                            let n = negative_sample(rng, &table);
                            if n == target {
                                continue;
                            }
                            (n, false)
                        };
                        let row = model.output.row_mut(j_out);
                        let (l, g) = sgns_term(dot(row, &h), positive);
                        loss_sum += l;
                        axpy(g, row, &mut dh);
                        axpy(-lr * g, &h, row);
                    }
                    pairs += 1;
                    axpy(-lr, &dh, model.input.row_mut(context));
                    axpy(1.0, &dh, &mut ddoc);
                }
            }
            for &p in &c.retained {
                axpy(-lr * doc_scale, &ddoc, model.input.row_mut(doc[p]));
            }
        }
        model.loss_history.push(if pairs == 0 { 0.0 } else { loss_sum / pairs as f64 });
        if !model.is_finite() {
            return Err(Error::Training {
                slot: "embedding".into(),
                reason: "non-finite embeddings".into(),
            });
        }
    }
    Ok(model)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn vocab_of(docs: &[Vec<String>]) -> Vocabulary {
        build_vocab(docs.iter().map(|d| d.iter().map(String::as_str)), 1)
    }

    #[test]
    fn corruption_extremes_and_determinism() {
        let mut rng = Rng::new(1);
        let c = corrupt(7, 0.0, &mut rng);
        assert_eq!(c.retained, (0..7).collect::<Vec<_>>());
        assert_eq!(c.scale, 1.0);
        let a = corrupt(50, 0.5, &mut Rng::new(9));
        let b = corrupt(50, 0.5, &mut Rng::new(9));
        assert_eq!(a, b);
    }

    #[test]
    fn corruption_count_is_binomial() {
        let c = corrupt(10_000, 0.9, &mut Rng::new(4));
        // sd = sqrt(10000·0.1·0.9) = 30
        assert!((c.retained.len() as i64 - 1000).abs() <= 90, "{}", c.retained.len());
        assert!((c.scale - 10.0).abs() < 1e-12);
    }

    #[test]
    fn sampler_single_token() {
        let t = UnigramTable::new(&[0, 7]).unwrap();
        let mut rng = Rng::new(2);
        assert!((0..1000).all(|_| negative_sample(&mut rng, &t) == 1));
    }

    #[test]
    fn exact_embedding_is_token_mean() {
        let docs = vec![toks("a b")];
        let mut m = EmbeddingModel::init(vocab_of(&docs), EmbeddingConfig { dim: 2, ..Default::default() }, &mut Rng::new(0)).unwrap();
        let (a, b) = (m.vocab.encode("a"), m.vocab.encode("b"));
        m.input.row_mut(a).copy_from_slice(&[1.0, 0.0]);
        m.input.row_mut(b).copy_from_slice(&[0.0, 1.0]);
        let (v, empty) = m.embed_document(&toks("a b"), InferenceMode::Exact, &mut Rng::new(0));
        assert_eq!(v, vec![0.5, 0.5]);
        assert!(!empty);
        let (z, empty) = m.embed_document(&Vec::<String>::new(), InferenceMode::Exact, &mut Rng::new(0));
        assert_eq!(z, vec![0.0, 0.0]);
        assert!(empty);
    }

    #[test]
    fn zero_lr_keeps_initialization() {
        let docs = vec![toks("a b c a b"), toks("c c a")];
        let cfg = EmbeddingConfig {
            dim: 4,
            epochs: 1,
            lr: 0.0,
            ..Default::default()
        };
        let m = train(&docs, vocab_of(&docs), cfg.clone(), &mut Rng::new(5)).unwrap();
        let init = EmbeddingModel::init(vocab_of(&docs), cfg, &mut Rng::new(5)).unwrap();
        assert_eq!(m.input, init.input);
        assert_eq!(m.output, init.output);
    }

    #[test]
    fn empty_vocabulary_is_config_error() {
        let v = build_vocab(Vec::<Vec<&str>>::new(), 1);
        let r = train(&[toks("x")], v, EmbeddingConfig::default(), &mut Rng::new(0));
        assert!(matches!(r, Err(Error::Config { .. })));
    }

    #[test]
    fn q_out_of_range_is_rejected() {
        let cfg = EmbeddingConfig {
            corruption: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
