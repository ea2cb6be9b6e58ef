//! Stage functions shared by the command-line driver and in-memory runs:
//! preprocess → embed → build samples → train rows → evaluate.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::protocol::{run_protocol, ProtocolOutcome, TrainedRun};
use super::report::{bootstrap_eval, check_row, predict_all, EvalReport, FeatureSet};
use crate::cohort::{read_jsonl, write_jsonl, Split, StayRecord};
use crate::corpus::{aggregate_daily, build_vocab, read_documents, write_documents, DayDocument};
use crate::doc2vecc::{self, DocEmbedding, EmbeddingConfig, EmbeddingModel};
use crate::entity::tagger::{train_tagger, TaggedSentence, TaggerConfig};
use crate::entity::{EntityBackend, EntityExtractor, Lexicon, NegationConfig};
use crate::models::{fit, Classifier, EmbeddingVisibility, ModelSpec, Sample, Structure, TrainConfig};
use crate::numkit::{derive_seed, Matrix, Rng};
use crate::vitals::{
    discretize, impute, impute_day_vectors, read_matrix_file, split_cohort, standardize, write_matrix_file, PopulationStats, VitalSequence, NUM_SIGNALS,
};
use crate::{Error, Result};

// Seed streams derived from the master seed.
const STREAM_SPLIT: u64 = 1;
const STREAM_EMBED: u64 = 2;
const STREAM_PROTOCOL: u64 = 3;
const STREAM_BOOTSTRAP: u64 = 4;

pub fn split_seed(master: u64) -> u64 {
    derive_seed(master, STREAM_SPLIT)
}

pub fn embed_seed(master: u64) -> u64 {
    derive_seed(master, STREAM_EMBED)
}

pub fn bootstrap_seed(master: u64) -> u64 {
    derive_seed(master, STREAM_BOOTSTRAP)
}

/// Initialization seeds of the protocol's runs.
pub fn run_seeds(master: u64, n: usize) -> Vec<u64> {
    let base = derive_seed(master, STREAM_PROTOCOL);
    (0..n as u64).map(|k| derive_seed(base, k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Train / val / test fractions.
    pub split: [f64; 3],
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { split: [0.7, 0.15, 0.15] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedStay {
    pub stay_id: u64,
    pub patient_id: u64,
    pub label: u8,
    pub split: Split,
}

/// Output of preprocessing, one entry per stay in cohort order.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub stays: Vec<PreparedStay>,
    /// Imputed and standardized 24 × 17 matrices.
    pub vitals: Vec<Matrix>,
    pub stats: PopulationStats,
    /// Day 0 and day 1 documents; no tokens means no notes that day.
    pub documents: Vec<[DayDocument; 2]>,
}

pub const PREP_STAYS_FILE: &str = "stays.jsonl";
pub const PREP_STATS_FILE: &str = "stats.json";
pub const PREP_DOCUMENTS_FILE: &str = "documents.jsonl";

fn vitals_files(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    (dir.join(format!("vitals_{}.bin", split.as_str())), dir.join(format!("vitals_{}.ids", split.as_str())))
}

impl Prepared {
    /// Writes stays with their split tags, population statistics, day
    /// documents, and one matrix file plus stay-id index per split.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_jsonl(&dir.join(PREP_STAYS_FILE), &self.stays)?;
        fs::write(dir.join(PREP_STATS_FILE), serde_json::to_string_pretty(&self.stats)? + "\n")?;
        write_documents(&dir.join(PREP_DOCUMENTS_FILE), &self.documents.iter().flatten().cloned().collect::<Vec<_>>())?;
        for split in Split::ALL {
            let idx = self.indices(split);
            let (bin, ids) = vitals_files(dir, split);
            write_matrix_file(&bin, idx.iter().map(|&i| &self.vitals[i]))?;
            let text: String = idx.iter().map(|&i| format!("{}\n", self.stays[i].stay_id)).collect();
            fs::write(ids, text)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let stays: Vec<PreparedStay> = read_jsonl(&dir.join(PREP_STAYS_FILE))?;
        let stats: PopulationStats = serde_json::from_str(&fs::read_to_string(dir.join(PREP_STATS_FILE))?)?;
        let mut vitals_by_id: HashMap<u64, Matrix> = HashMap::new();
        for split in Split::ALL {
            let (bin, ids) = vitals_files(dir, split);
            let mats = read_matrix_file(&bin)?;
            let ids: Vec<u64> = fs::read_to_string(&ids)?
                .lines()
                .map(|l| l.trim().parse().map_err(|_| Error::Format(format!("{}: bad stay id {l:?}", ids.display()))))
                .collect::<Result<_>>()?;
            if ids.len() != mats.len() {
                return Err(Error::Format(format!("{}: {} ids for {} matrices", bin.display(), ids.len(), mats.len())));
            }
            vitals_by_id.extend(ids.into_iter().zip(mats));
        }
        let mut docs: HashMap<(u64, u32), DayDocument> =
            read_documents(&dir.join(PREP_DOCUMENTS_FILE))?.into_iter().map(|d| ((d.stay_id, d.day), d)).collect();
        let mut vitals = Vec::with_capacity(stays.len());
        let mut documents = Vec::with_capacity(stays.len());
        for s in &stays {
            vitals.push(vitals_by_id.remove(&s.stay_id).ok_or_else(|| Error::Format(format!("no vitals for stay {}", s.stay_id)))?);
            let mut day = |d: u32| docs.remove(&(s.stay_id, d)).ok_or_else(|| Error::Format(format!("no day {d} document for stay {}", s.stay_id)));
            documents.push([day(0)?, day(1)?]);
        }
        Ok(Self {
            stays,
            vitals,
            stats,
            documents,
        })
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.stays.len()).filter(|&i| self.stays[i].split == split).collect()
    }
}

pub fn preprocess(stays: &[StayRecord], cfg: &PreprocessConfig, master_seed: u64) -> Result<Prepared> {
    let ids: Vec<(u64, u64)> = stays.iter().map(|s| (s.stay_id, s.patient_id)).collect();
    let splits = split_cohort(&ids, cfg.split, split_seed(master_seed))?;
    let raw: Vec<VitalSequence> = stays.iter().map(|s| discretize(s.stay_id, &s.vitals)).collect::<Result<_>>()?;
    let stats = PopulationStats::from_train(splits.iter().zip(&raw).filter(|(s, _)| **s == Split::Train).map(|(s, r)| (*s, r)))?;
    let vitals = raw.iter().map(|r| standardize(&impute(r, &stats), &stats).values).collect();
    let documents = stays
        .iter()
        .map(|s| aggregate_daily(&s.notes, s.stay_id).map(|(a, b)| [a, b]))
        .collect::<Result<_>>()?;
    let prepared = stays
        .iter()
        .zip(&splits)
        .map(|(s, &split)| PreparedStay {
            stay_id: s.stay_id,
            patient_id: s.patient_id,
            label: s.label,
            split,
        })
        .collect();
    Ok(Prepared {
        stays: prepared,
        vitals,
        stats,
        documents,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMode {
    Note,
    Entity,
}

impl EmbedMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbedMode::Note => "note",
            EmbedMode::Entity => "entity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "note" => Some(EmbedMode::Note),
            "entity" => Some(EmbedMode::Entity),
            _ => None,
        }
    }

    pub fn for_feature_set(fs: FeatureSet) -> Option<Self> {
        match fs {
            FeatureSet::Vital => None,
            FeatureSet::NoteEmb => Some(EmbedMode::Note),
            FeatureSet::EntityEmb => Some(EmbedMode::Entity),
        }
    }
}

/// Where entity spans come from in the pipeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Longest-match lexicon plus rule-based negation scope.
    #[default]
    Lexicon,
    /// Neural tagger trained on the gold tagged corpus.
    Tagger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntityConfig {
    pub backend: BackendKind,
    pub filter_negated: bool,
    pub negation_window: usize,
    pub tagger: TaggerConfig,
}

impl Default for EntityConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Lexicon,
            filter_negated: true,
            negation_window: 5,
            tagger: TaggerConfig::default(),
        }
    }
}

impl EntityConfig {
    /// Lexicon-backed extractor; `triggers` replaces the default trigger
    /// list.
    pub fn extractor(&self, lexicon: Lexicon, triggers: Option<&str>) -> EntityExtractor {
        let mut negation = NegationConfig {
            window: self.negation_window,
            ..NegationConfig::default()
        };
        if let Some(t) = triggers {
            negation = negation.with_triggers(t);
        }
        let mut ex = EntityExtractor::lexicon(lexicon, negation);
        ex.filter_negated = self.filter_negated;
        ex
    }

    /// Extractor for the configured backend. The tagger backend trains on
    /// `gold` and fails if it is missing.
    pub fn build_extractor(&self, lexicon: Lexicon, triggers: Option<&str>, gold: Option<&[TaggedSentence]>) -> Result<EntityExtractor> {
        let mut ex = self.extractor(lexicon, triggers);
        if self.backend == BackendKind::Tagger {
            let gold = gold.ok_or_else(|| Error::config("entity.backend", "the tagger backend needs a gold tagged corpus"))?;
            let (tagger, history) = train_tagger(gold, self.tagger.clone())?;
            log::info!(
                "tagger trained for {} epochs, token accuracy {:.4}",
                history.accuracy.len() - 1,
                history.accuracy.last().copied().unwrap_or(0.0)
            );
            ex.backend = EntityBackend::Tagger(Box::new(tagger));
        }
        Ok(ex)
    }
}

/// Token sequences the embedding sees for each (stay, day); `None` marks a
/// day without notes.
pub fn corpus_documents(prepared: &Prepared, mode: EmbedMode, extractor: Option<&EntityExtractor>) -> Result<Vec<[Option<Vec<String>>; 2]>> {
    if mode == EmbedMode::Entity && extractor.is_none() {
        return Err(Error::config("entity", "entity mode needs a lexicon"));
    }
    Ok(prepared
        .documents
        .iter()
        .map(|days| {
            days.each_ref().map(|d| {
                if d.tokens.is_empty() {
                    return None;
                }
                Some(match mode {
                    EmbedMode::Note => d.word_tokens(),
                    EmbedMode::Entity => extractor.expect("checked above").entity_document(d).tokens,
                })
            })
        })
        .collect())
}

pub struct EmbedOutput {
    pub model: EmbeddingModel,
    /// One record per (stay, day) with notes; empty entity documents get
    /// the zero vector and the empty flag.
    pub embeddings: Vec<DocEmbedding>,
    pub empty_documents: usize,
}

/// Trains the document embedding on training-split documents (vocabulary
/// included) and embeds every day that has notes.
pub fn embed(prepared: &Prepared, corpus: &[[Option<Vec<String>>; 2]], cfg: &EmbeddingConfig, master_seed: u64) -> Result<EmbedOutput> {
    let train_docs: Vec<Vec<String>> = prepared
        .indices(Split::Train)
        .into_iter()
        .flat_map(|i| corpus[i].iter().flatten().cloned())
        .filter(|d| !d.is_empty())
        .collect();
    let vocab = build_vocab(train_docs.iter().map(|d| d.iter().map(String::as_str)), cfg.min_count);
    let mut rng = Rng::new(embed_seed(master_seed));
    let model = doc2vecc::train(&train_docs, vocab, cfg.clone(), &mut rng)?;
    let mut embeddings = Vec::new();
    let mut empty_documents = 0;
    for (stay, days) in prepared.stays.iter().zip(corpus) {
        for (day, doc) in days.iter().enumerate() {
            let Some(doc) = doc else { continue };
            let mut rng = Rng::new(derive_seed(embed_seed(master_seed), stay.stay_id * 2 + day as u64));
            let (vector, empty) = model.embed_document(doc, cfg.inference, &mut rng);
            if empty {
                empty_documents += 1;
                log::debug!("stay {} day {day}: empty document, using the zero vector", stay.stay_id);
            }
            embeddings.push(DocEmbedding {
                stay_id: stay.stay_id,
                day: day as u8,
                vector,
                empty,
            });
        }
    }
    if empty_documents > 0 {
        log::warn!("{empty_documents} day documents were empty and embed to the zero vector");
    }
    Ok(EmbedOutput {
        model,
        embeddings,
        empty_documents,
    })
}

/// Samples per split, with day vectors imputed: a day without notes copies
/// the previous day, a missing first day is zero.
#[derive(Debug, Clone, Default)]
pub struct SplitSamples {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl SplitSamples {
    pub fn get(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

pub fn build_samples(prepared: &Prepared, embeddings: Option<(&[DocEmbedding], usize)>) -> Result<SplitSamples> {
    let mut by_key: HashMap<(u64, u8), &[f64]> = HashMap::new();
    let dim = embeddings.map_or(0, |(_, d)| d);
    if let Some((embs, d)) = embeddings {
        for e in embs {
            if e.vector.len() != d || e.day > 1 {
                return Err(Error::Data(format!("embedding for stay {} day {} has the wrong shape", e.stay_id, e.day)));
            }
            by_key.insert((e.stay_id, e.day), &e.vector);
        }
    }
    let mut out = SplitSamples::default();
    for (stay, x) in prepared.stays.iter().zip(&prepared.vitals) {
        let [e1, e2] = if embeddings.is_some() {
            let get = |day| by_key.get(&(stay.stay_id, day)).map(|v| v.to_vec());
            impute_day_vectors(get(0), get(1), dim)
        } else {
            [Vec::new(), Vec::new()]
        };
        let s = Sample {
            stay_id: stay.stay_id,
            x: x.clone(),
            e1,
            e2,
            label: stay.label,
        };
        match stay.split {
            Split::Train => out.train.push(s),
            Split::Val => out.val.push(s),
            Split::Test => out.test.push(s),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub text_hidden: usize,
    pub joint_hidden: usize,
    pub embedding_visibility: EmbeddingVisibility,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            text_hidden: 100,
            joint_hidden: 300,
            embedding_visibility: EmbeddingVisibility::FromStart,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, structure: Structure, emb_dim: usize) -> ModelSpec {
        ModelSpec {
            structure,
            input_dim: NUM_SIGNALS,
            emb_dim,
            hidden: self.hidden,
            text_hidden: self.text_hidden,
            joint_hidden: self.joint_hidden,
            visibility: self.embedding_visibility,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub n_seeds: usize,
    pub f1_threshold: f64,
    pub jobs: usize,
    pub n_resamples: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            n_seeds: 20,
            f1_threshold: 0.5,
            jobs: 1,
            n_resamples: 100,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::config("protocol.n_seeds", "must be ≥ 1"));
        }
        if self.n_resamples == 0 {
            return Err(Error::config("protocol.n_resamples", "must be ≥ 1"));
        }
        if !(0.0..=1.0).contains(&self.f1_threshold) {
            return Err(Error::config("protocol.f1_threshold", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Runs the multi-seed protocol for one model spec.
pub fn train_row(spec: &ModelSpec, samples: &SplitSamples, train: &TrainConfig, protocol: &ProtocolConfig, master_seed: u64) -> Result<ProtocolOutcome<Classifier>> {
    protocol.validate()?;
    spec.validate()?;
    let val_labels: Vec<u8> = samples.val.iter().map(|s| s.label).collect();
    let seeds = run_seeds(master_seed, protocol.n_seeds);
    run_protocol(&seeds, &val_labels, protocol.f1_threshold, protocol.jobs.max(1), |seed| {
        let mut model = Classifier::new(spec.clone(), seed)?;
        let history = fit(&mut model, &samples.train, &samples.val, train, derive_seed(seed, 1))?;
        let val_scores = predict_all(&model, &samples.val)?;
        Ok(TrainedRun {
            model,
            history,
            val_scores,
        })
    })
}

/// Every section of an experiment except file locations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub entity: EntityConfig,
    pub embedding: EmbeddingConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub protocol: ProtocolConfig,
}

/// One row of an in-memory experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowSpec {
    pub feature_set: FeatureSet,
    pub structure: Structure,
    /// Overrides `entity.filter_negated` for entity rows.
    pub filter_negated: bool,
}

impl RowSpec {
    pub fn new(feature_set: FeatureSet, structure: Structure) -> Self {
        Self {
            feature_set,
            structure,
            filter_negated: true,
        }
    }
}

/// Runs preprocessing once and each row's embedding, protocol and
/// bootstrap evaluation in memory. Embeddings are shared between rows that
/// need the same corpus.
pub fn run_rows(stays: &[StayRecord], lexicon: &Lexicon, cfg: &PipelineConfig, rows: &[RowSpec], master_seed: u64) -> Result<Vec<EvalReport>> {
    for r in rows {
        check_row(r.feature_set, r.structure)?;
    }
    let prepared = preprocess(stays, &cfg.preprocess, master_seed)?;
    let mut cache: HashMap<(EmbedMode, bool), SplitSamples> = HashMap::new();
    let mut reports = Vec::with_capacity(rows.len());
    for r in rows {
        let mode = EmbedMode::for_feature_set(r.feature_set);
        let filter = mode == Some(EmbedMode::Entity) && r.filter_negated;
        let key = mode.map(|m| (m, filter));
        let emb_dim = if mode.is_some() { cfg.embedding.dim } else { 0 };
        let samples = match key {
            None => build_samples(&prepared, None)?,
            Some(k) => {
                if let std::collections::hash_map::Entry::Vacant(slot) = cache.entry(k) {
                    let entity = EntityConfig {
                        filter_negated: filter,
                        ..cfg.entity.clone()
                    };
                    let ex = entity.extractor(lexicon.clone(), None);
                    let corpus = corpus_documents(&prepared, k.0, Some(&ex))?;
                    let out = embed(&prepared, &corpus, &cfg.embedding, master_seed)?;
                    slot.insert(build_samples(&prepared, Some((&out.embeddings, emb_dim)))?);
                }
                cache[&k].clone()
            }
        };
        let spec = cfg.model.spec(r.structure, emb_dim);
        let outcome = train_row(&spec, &samples, &cfg.train, &cfg.protocol, master_seed)?;
        let report = bootstrap_eval(&outcome.model, &samples.test, r.feature_set, cfg.protocol.n_resamples, bootstrap_seed(master_seed))?;
        log::info!(
            "{} (filter_negated={}): test AUROC {:.4}",
            report.model_id,
            r.filter_negated,
            report.test_auroc
        );
        reports.push(report);
    }
    Ok(reports)
}
