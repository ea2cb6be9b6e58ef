//! Hierarchical neural tagger: character CNN word features, a word-level
//! LSTM encoder and an LSTM tag decoder fed with the previous tag.
//!
//! Negation is tagged jointly through the negated B/I variants of
//! [`Tag`], so a span's negation flag comes straight out of decoding.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::tags::{validate_bio, Tag, NUM_TAGS};
use crate::models::{LstmCache, LstmLayer};
use crate::numkit::matrix::{axpy, dot, matvec_bias, matvec_t_acc, outer_acc};
use crate::numkit::{softmax, Matrix, Optimizer, OptimizerKind, ParamStore, Rng, SlotId};
use crate::{Error, Result};

const UNK: usize = 0;
const GO: usize = NUM_TAGS;

/// One line of the tagged-corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

impl TaggedSentence {
    pub fn parsed_tags(&self) -> Result<Vec<Tag>> {
        self.tags
            .iter()
            .map(|t| Tag::parse(t).ok_or_else(|| Error::Data(format!("unknown tag `{t}`"))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaggerConfig {
    pub char_dim: usize,
    pub char_filters: usize,
    pub char_width: usize,
    pub char_layers: usize,
    pub char_dropout: f64,
    pub word_dim: usize,
    pub word_dropout: f64,
    pub encoder_hidden: usize,
    pub tag_dim: usize,
    pub decoder_hidden: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub max_epochs: usize,
    pub target_accuracy: f64,
    pub seed: u64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        Self {
            char_dim: 16,
            char_filters: 32,
            char_width: 3,
            char_layers: 2,
            char_dropout: 0.25,
            word_dim: 32,
            word_dropout: 0.5,
            encoder_hidden: 32,
            tag_dim: 16,
            decoder_hidden: 32,
            optimizer: OptimizerKind::adam(),
            lr: 0.005,
            max_epochs: 200,
            target_accuracy: 0.99,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvLayer {
    w: SlotId,
    b: SlotId,
    in_dim: usize,
    residual: bool,
}

/// Parameter layout. All tensors live in a [`ParamStore`] passed alongside.
#[derive(Debug, Clone)]
struct Layout {
    filters: usize,
    width: usize,
    char_dropout: f64,
    word_dropout: f64,
    tag_dim: usize,
    char_emb: SlotId,
    convs: Vec<ConvLayer>,
    word_emb: SlotId,
    encoder: LstmLayer,
    tag_emb: SlotId,
    decoder: LstmLayer,
    out_w: SlotId,
    out_b: SlotId,
}

/// A sentence mapped to vocabulary indices.
#[derive(Debug, Clone)]
pub struct EncodedSentence {
    words: Vec<usize>,
    chars: Vec<Vec<usize>>,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

struct CharCache {
    len: usize,
    chars: Vec<usize>,
    /// Input of each layer, `len × in_dim` row-major; `inputs[0]` holds the
    /// character embeddings.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
    top: Vec<f64>,
    argmax: Vec<usize>,
}

struct ForwardCache {
    words: Vec<usize>,
    char_caches: Vec<CharCache>,
    encoder: LstmCache,
    prev_tags: Vec<usize>,
    decoder: LstmCache,
    probs: Vec<Vec<f64>>,
    gold: Vec<usize>,
}

/// Training-time stochasticity; `None` disables both dropouts.
type Noise<'a> = Option<&'a mut Rng>;

impl Layout {
    fn char_feature(&self, store: &ParamStore, chars: &[usize], mut noise: Noise) -> CharCache {
        let chars = if chars.is_empty() { vec![UNK] } else { chars.to_vec() };
        let len = chars.len();
        let emb = store.value(self.char_emb);
        let mut x: Vec<f64> = chars.iter().flat_map(|&c| emb.row(c).iter().copied()).collect();
        let f = self.filters;
        let half = self.width / 2;
        let mut cache = CharCache {
            len,
            chars,
            inputs: Vec::new(),
            pre: Vec::new(),
            masks: Vec::new(),
            top: Vec::new(),
            argmax: Vec::new(),
        };
        let n_layers = self.convs.len();
        for (l, conv) in self.convs.iter().enumerate() {
            let w = store.value(conv.w).as_slice();
            let b = store.value(conv.b).as_slice();
            let mut z = vec![0.0; len * f];
            let span = self.width * conv.in_dim;
            for p in 0..len {
                for (fi, zf) in z[p * f..(p + 1) * f].iter_mut().enumerate() {
                    let wf = &w[fi * span..(fi + 1) * span];
                    let mut s = b[fi];
                    for k in 0..self.width {
                        let q = p + k;
                        if q < half || q - half >= len {
                            continue;
                        }
                        let q = q - half;
                        s += dot(&wf[k * conv.in_dim..(k + 1) * conv.in_dim], &x[q * conv.in_dim..(q + 1) * conv.in_dim]);
                    }
                    *zf = s;
                }
            }
            let mut out: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
            if conv.residual {
                axpy(1.0, &x, &mut out);
            }
            let mask = match noise.as_deref_mut() {
                Some(rng) if l + 1 < n_layers && self.char_dropout > 0.0 => {
                    let keep = 1.0 - self.char_dropout;
                    let m: Vec<f64> = (0..out.len())
                        .map(|_| if rng.bernoulli(keep) { 1.0 / keep } else { 0.0 })
                        .collect();
                    out.iter_mut().zip(&m).for_each(|(o, s)| *o *= s);
                    Some(m)
                }
                _ => None,
            };
            cache.inputs.push(x);
            cache.pre.push(z);
            cache.masks.push(mask);
            x = out;
        }
        let mut feature = vec![f64::NEG_INFINITY; f];
        let mut argmax = vec![0; f];
        for p in 0..len {
            for fi in 0..f {
                if x[p * f + fi] > feature[fi] {
                    feature[fi] = x[p * f + fi];
                    argmax[fi] = p;
                }
            }
        }
        cache.top = feature;
        cache.argmax = argmax;
        cache
    }

    fn char_backward(&self, store: &mut ParamStore, cache: &CharCache, dfeature: &[f64]) {
        let f = self.filters;
        let half = self.width / 2;
        let len = cache.len;
        let mut dout = vec![0.0; len * f];
        for fi in 0..f {
            dout[cache.argmax[fi] * f + fi] += dfeature[fi];
        }
        for (l, conv) in self.convs.iter().enumerate().rev() {
            if let Some(mask) = &cache.masks[l] {
                dout.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
            }
            let x = &cache.inputs[l];
            let z = &cache.pre[l];
            let mut dx = if conv.residual { dout.clone() } else { vec![0.0; len * conv.in_dim] };
            let dz: Vec<f64> = dout.iter().zip(z).map(|(&d, &zv)| if zv > 0.0 { d } else { 0.0 }).collect();
            let span = self.width * conv.in_dim;
            let w = store.value(conv.w).clone();
            {
                let dw = store.grad_mut(conv.w).as_mut_slice();
                for p in 0..len {
                    for fi in 0..f {
                        let g = dz[p * f + fi];
                        if g == 0.0 {
                            continue;
                        }
                        for k in 0..self.width {
                            let q = p + k;
                            if q < half || q - half >= len {
                                continue;
                            }
                            let q = q - half;
                            let off = fi * span + k * conv.in_dim;
                            axpy(g, &x[q * conv.in_dim..(q + 1) * conv.in_dim], &mut dw[off..off + conv.in_dim]);
                            axpy(g, &w.as_slice()[off..off + conv.in_dim], &mut dx[q * conv.in_dim..(q + 1) * conv.in_dim]);
                        }
                    }
                }
            }
            let db = store.grad_mut(conv.b).as_mut_slice();
            for p in 0..len {
                axpy(1.0, &dz[p * f..(p + 1) * f], db);
            }
            dout = dx;
        }
        let dim = self.convs[0].in_dim;
        let demb = store.grad_mut(self.char_emb);
        for (p, &c) in cache.chars.iter().enumerate() {
            axpy(1.0, &dout[p * dim..(p + 1) * dim], demb.row_mut(c));
        }
    }

    /// Encoder states for a sentence (words already dropout-substituted).
    fn encode(
        &self,
        store: &ParamStore,
        words: &[usize],
        chars: &[Vec<usize>],
        mut noise: Noise,
    ) -> Result<(Vec<CharCache>, LstmCache)> {
        let n = words.len();
        let in_dim = self.encoder.input;
        let mut xs = Vec::with_capacity(n * in_dim);
        let mut char_caches = Vec::with_capacity(n);
        let emb = store.value(self.word_emb);
        for (i, &w) in words.iter().enumerate() {
            let cc = self.char_feature(store, &chars[i], noise.as_deref_mut());
            xs.extend_from_slice(&cc.top);
            xs.extend_from_slice(emb.row(w));
            char_caches.push(cc);
        }
        let enc = self.encoder.forward(store, &xs, n)?;
        Ok((char_caches, enc))
    }

    fn decoder_input(&self, store: &ParamStore, prev_tag: usize, h_enc: &[f64]) -> Vec<f64> {
        let mut x = store.value(self.tag_emb).row(prev_tag).to_vec();
        x.extend_from_slice(h_enc);
        x
    }

    fn logits(&self, store: &ParamStore, h_dec: &[f64]) -> Vec<f64> {
        let w = store.value(self.out_w).as_slice();
        let b = store.value(self.out_b).as_slice();
        let mut out = vec![0.0; NUM_TAGS];
        matvec_bias(w, b, h_dec, &mut out);
        out
    }

    /// Teacher-forced forward pass; returns the mean token cross-entropy.
    fn forward_teacher(
        &self,
        store: &ParamStore,
        sent: &EncodedSentence,
        gold: &[usize],
        mut noise: Noise,
    ) -> Result<(f64, ForwardCache)> {
        let n = sent.len();
        let mut words = sent.words.clone();
        if let Some(rng) = noise.as_deref_mut() {
            for w in &mut words {
                if rng.bernoulli(self.word_dropout) {
                    *w = UNK;
                }
            }
        }
        let (char_caches, encoder) = self.encode(store, &words, &sent.chars, noise)?;
        let prev_tags: Vec<usize> = std::iter::once(GO).chain(gold[..n - 1].iter().copied()).collect();
        let mut xs = Vec::with_capacity(n * self.decoder.input);
        for (i, &prev) in prev_tags.iter().enumerate() {
            xs.extend(self.decoder_input(store, prev, encoder.h(i)));
        }
        let decoder = self.decoder.forward(store, &xs, n)?;
        let mut loss = 0.0;
        let mut probs = Vec::with_capacity(n);
        for (i, &g) in gold.iter().enumerate() {
            let p = softmax(&self.logits(store, decoder.h(i)));
            loss -= p[g].max(1e-300).ln();
            probs.push(p);
        }
        Ok((
            loss / n as f64,
            ForwardCache {
                words,
                char_caches,
                encoder,
                prev_tags,
                decoder,
                probs,
                gold: gold.to_vec(),
            },
        ))
    }

    fn backward(&self, store: &mut ParamStore, cache: &ForwardCache) {
        let n = cache.gold.len();
        let scale = 1.0 / n as f64;
        let hd = self.decoder.hidden;
        let mut dh_dec = vec![0.0; n * hd];
        for i in 0..n {
            let mut dlogits = cache.probs[i].clone();
            dlogits[cache.gold[i]] -= 1.0;
            dlogits.iter_mut().for_each(|v| *v *= scale);
            outer_acc(&dlogits, cache.decoder.h(i), store.grad_mut(self.out_w).as_mut_slice());
            axpy(1.0, &dlogits, store.grad_mut(self.out_b).as_mut_slice());
            matvec_t_acc(store.value(self.out_w).as_slice(), &dlogits, &mut dh_dec[i * hd..(i + 1) * hd]);
        }
        let dx_dec = self.decoder.backward(store, &cache.decoder, &dh_dec);
        let he = self.encoder.hidden;
        let dec_in = self.decoder.input;
        let mut dh_enc = vec![0.0; n * he];
        for i in 0..n {
            let row = &dx_dec[i * dec_in..(i + 1) * dec_in];
            axpy(1.0, &row[..self.tag_dim], store.grad_mut(self.tag_emb).row_mut(cache.prev_tags[i]));
            dh_enc[i * he..(i + 1) * he].copy_from_slice(&row[self.tag_dim..]);
        }
        let dx_enc = self.encoder.backward(store, &cache.encoder, &dh_enc);
        let enc_in = self.encoder.input;
        for i in 0..n {
            let row = &dx_enc[i * enc_in..(i + 1) * enc_in];
            axpy(1.0, &row[self.filters..], store.grad_mut(self.word_emb).row_mut(cache.words[i]));
            self.char_backward(store, &cache.char_caches[i], &row[..self.filters]);
        }
    }

    /// Greedy decoding; returns the tag distribution at every word.
    fn decode(&self, store: &ParamStore, sent: &EncodedSentence) -> Result<Vec<Vec<f64>>> {
        if sent.is_empty() {
            return Err(Error::Domain("tagger input sentence is empty".into()));
        }
        let (_, enc) = self.encode(store, &sent.words, &sent.chars, None)?;
        let hd = self.decoder.hidden;
        let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
        let mut prev = GO;
        let mut out = Vec::with_capacity(sent.len());
        for i in 0..sent.len() {
            let x = self.decoder_input(store, prev, enc.h(i));
            (h, c) = self.decoder.step(store, &x, &h, &c);
            let p = softmax(&self.logits(store, &h));
            prev = argmax(&p);
            out.push(p);
        }
        Ok(out)
    }
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Trained tagger: vocabularies, layout and parameters.
#[derive(Debug, Clone)]
pub struct Tagger {
    config: TaggerConfig,
    words: HashMap<String, usize>,
    chars: HashMap<char, usize>,
    layout: Layout,
    params: ParamStore,
}

/// Per-epoch record of tagger training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaggerHistory {
    /// Teacher-forced mean loss without dropout; entry 0 is before training.
    pub loss: Vec<f64>,
    /// Greedy-decoding token accuracy; entry 0 is before training.
    pub accuracy: Vec<f64>,
}

impl Tagger {
    /// Fresh tagger with vocabularies from `sentences` (index 0 is UNK in
    /// both the word and character vocabularies).
    pub fn init(sentences: &[TaggedSentence], config: TaggerConfig) -> Result<Self> {
        if config.char_layers == 0 || config.char_width.is_multiple_of(2) {
            return Err(Error::config("tagger.char_width", "need ≥1 layer and an odd width"));
        }
        let word_set: BTreeSet<&str> = sentences.iter().flat_map(|s| s.tokens.iter().map(String::as_str)).collect();
        let char_set: BTreeSet<char> = word_set.iter().flat_map(|w| w.chars()).collect();
        let words: HashMap<String, usize> = word_set.iter().enumerate().map(|(i, w)| (w.to_string(), i + 1)).collect();
        let chars: HashMap<char, usize> = char_set.iter().enumerate().map(|(i, &c)| (c, i + 1)).collect();

        let mut rng = Rng::new(config.seed);
        let mut store = ParamStore::new();
        let c = &config;
        let char_emb = store.add_uniform("char_emb", chars.len() + 1, c.char_dim, 0.5, &mut rng)?;
        let mut convs = Vec::with_capacity(c.char_layers);
        let mut in_dim = c.char_dim;
        for l in 0..c.char_layers {
            let w = store.add_glorot(format!("conv{l}.w"), c.char_filters, c.char_width * in_dim, &mut rng)?;
            let b = store.add_zeros(format!("conv{l}.b"), 1, c.char_filters)?;
            convs.push(ConvLayer {
                w,
                b,
                in_dim,
                residual: in_dim == c.char_filters,
            });
            in_dim = c.char_filters;
        }
        let word_emb = store.add_uniform("word_emb", words.len() + 1, c.word_dim, 0.5, &mut rng)?;
        let encoder = LstmLayer::new(&mut store, "enc", c.char_filters + c.word_dim, c.encoder_hidden, &mut rng)?;
        let tag_emb = store.add_uniform("tag_emb", NUM_TAGS + 1, c.tag_dim, 0.5, &mut rng)?;
        let decoder = LstmLayer::new(&mut store, "dec", c.tag_dim + c.encoder_hidden, c.decoder_hidden, &mut rng)?;
        let out_w = store.add_glorot("out.w", NUM_TAGS, c.decoder_hidden, &mut rng)?;
        let out_b = store.add_zeros("out.b", 1, NUM_TAGS)?;
        let layout = Layout {
            filters: c.char_filters,
            width: c.char_width,
            char_dropout: c.char_dropout,
            word_dropout: c.word_dropout,
            tag_dim: c.tag_dim,
            char_emb,
            convs,
            word_emb,
            encoder,
            tag_emb,
            decoder,
            out_w,
            out_b,
        };
        Ok(Self {
            config,
            words,
            chars,
            layout,
            params: store,
        })
    }

    pub fn config(&self) -> &TaggerConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn encode(&self, tokens: &[String]) -> EncodedSentence {
        EncodedSentence {
            words: tokens.iter().map(|t| self.words.get(t).copied().unwrap_or(UNK)).collect(),
            chars: tokens
                .iter()
                .map(|t| t.chars().map(|c| self.chars.get(&c).copied().unwrap_or(UNK)).collect())
                .collect(),
        }
    }

    /// Per-word tag distributions under greedy decoding.
    pub fn forward(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>> {
        self.layout.decode(&self.params, &self.encode(tokens))
    }

    pub fn predict(&self, tokens: &[String]) -> Vec<Tag> {
        if tokens.is_empty() {
            return Vec::new();
        }
        self.forward(tokens)
            .expect("nonempty sentence")
            .iter()
            .map(|p| Tag::from_index(argmax(p)).expect("tag index"))
            .collect()
    }

    /// Teacher-forced mean token loss without dropout.
    pub fn loss(&self, tokens: &[String], gold: &[Tag]) -> Result<f64> {
        let gold: Vec<usize> = gold.iter().map(|t| t.index()).collect();
        Ok(self.layout.forward_teacher(&self.params, &self.encode(tokens), &gold, None)?.0)
    }

    /// Teacher-forced loss of `sentences` summed over sentences, with
    /// gradients accumulated into `store` when `want_grad`. Deterministic
    /// (no dropout); used by gradient checks.
    pub fn batch_objective(&self, store: &mut ParamStore, batch: &[(Vec<String>, Vec<Tag>)], want_grad: bool) -> f64 {
        let mut total = 0.0;
        for (tokens, tags) in batch {
            let gold: Vec<usize> = tags.iter().map(|t| t.index()).collect();
            let (loss, cache) = self
                .layout
                .forward_teacher(store, &self.encode(tokens), &gold, None)
                .expect("valid sentence");
            if want_grad {
                self.layout.backward(store, &cache);
            }
            total += loss;
        }
        total
    }

    /// Replaces each word index by UNK with the configured probability.
    pub fn dropout_words(&self, words: &mut [usize], rng: &mut Rng) {
        for w in words {
            if rng.bernoulli(self.config.word_dropout) {
                *w = UNK;
            }
        }
    }

    fn mean_loss_and_accuracy(&self, data: &[(EncodedSentence, Vec<usize>)]) -> Result<(f64, f64)> {
        let (mut loss, mut correct, mut total) = (0.0, 0usize, 0usize);
        for (sent, gold) in data {
            loss += self.layout.forward_teacher(&self.params, sent, gold, None)?.0;
            let dists = self.layout.decode(&self.params, sent)?;
            correct += dists.iter().zip(gold).filter(|(p, &g)| argmax(p) == g).count();
            total += gold.len();
        }
        Ok((loss / data.len() as f64, correct as f64 / total.max(1) as f64))
    }
}

/// Trains a tagger with teacher forcing, one sentence per update, until the
/// greedy token accuracy reaches `target_accuracy` or `max_epochs` run out.
pub fn train_tagger(sentences: &[TaggedSentence], config: TaggerConfig) -> Result<(Tagger, TaggerHistory)> {
    let mut gold_tags = Vec::with_capacity(sentences.len());
    for (i, s) in sentences.iter().enumerate() {
        let tags = s.parsed_tags().map_err(|e| Error::Data(format!("sentence {i}: {e}")))?;
        if tags.len() != s.tokens.len() || tags.is_empty() {
            return Err(Error::Data(format!("sentence {i}: {} tokens but {} tags", s.tokens.len(), tags.len())));
        }
        validate_bio(&tags).map_err(|e| Error::Data(format!("sentence {i}: {e}")))?;
        gold_tags.push(tags);
    }
    let mut tagger = Tagger::init(sentences, config.clone())?;
    let data: Vec<(EncodedSentence, Vec<usize>)> = sentences
        .iter()
        .zip(&gold_tags)
        .map(|(s, t)| (tagger.encode(&s.tokens), t.iter().map(|t| t.index()).collect()))
        .collect();

    let mut history = TaggerHistory::default();
    let (l0, a0) = tagger.mean_loss_and_accuracy(&data)?;
    history.loss.push(l0);
    history.accuracy.push(a0);
    let mut rng = Rng::new(crate::numkit::derive_seed(config.seed, 1));
    let mut opt = Optimizer::new(config.optimizer, config.lr);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..config.max_epochs {
        if history.accuracy.last().copied().unwrap_or(0.0) >= config.target_accuracy {
            break;
        }
        rng.shuffle(&mut order);
        for &k in &order {
            let (sent, gold) = &data[k];
            let (_, cache) = tagger.layout.forward_teacher(&tagger.params, sent, gold, Some(&mut rng))?;
            tagger.layout.backward(&mut tagger.params, &cache);
            opt.step(&mut tagger.params)?;
        }
        let (l, a) = tagger.mean_loss_and_accuracy(&data)?;
        history.loss.push(l);
        history.accuracy.push(a);
    }
    Ok((tagger, history))
}

/// Row-major copy of a parameter, for tests comparing against oracles.
pub fn param_matrix(tagger: &Tagger, name: &str) -> Option<Matrix> {
    tagger.params.id(name).map(|id| tagger.params.value(id).clone())
}
