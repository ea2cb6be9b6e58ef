//! Synthetic ICU cohort with planted signal in both modalities.
//!
//! Each stay has two standard-normal latents: `z_v` drives the vital-sign
//! drift and `z_t` drives which entities the notes mention. The label is
//! Bernoulli(σ(α + β_v·z_v + β_t·z_t)), so the Bayes-optimal score is known
//! exactly. Negated decoy mentions are independent of everything.

mod text;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::{write_cohort, write_jsonl, StayRecord};
use crate::corpus::NoteEvent;
use crate::entity::DEFAULT_TRIGGERS;
use crate::numkit::{derive_seed, sigmoid, Rng};
use crate::vitals::{VitalEvent, NUM_SIGNALS, WINDOW_HOURS};
use crate::{Error, Result};

pub use text::{decoy_sentence, filler_sentence, gold_sentences, mention_sentence, EntityInventory, GoldSentence, DECOY_TRIGGERS};

pub const TRUTH_FILE: &str = "truth.jsonl";
pub const GENERATOR_FILE: &str = "generator.json";
pub const LEXICON_FILE: &str = "lexicon.tsv";
pub const TRIGGERS_FILE: &str = "negation_triggers.txt";
pub const GOLD_TAGGED_FILE: &str = "gold_tagged.jsonl";

/// Signals 0..8 are charted hourly-ish; the rest behave like sparse labs.
const FREQUENT_SIGNALS: usize = 8;
const AR_COEF: f64 = 0.8;
const CATEGORIES: [&str; 3] = ["nursing", "physician", "radiology"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub seed: u64,
    pub n_patients: usize,
    /// Weights for 1, 2, 3, ... stays per patient.
    pub stays_per_patient: Vec<f64>,
    pub base_rate: f64,
    pub beta_v: f64,
    /// Text effect; `None` calibrates it so the Bayes gap hits `bayes_gap`.
    pub beta_t: Option<f64>,
    pub bayes_gap: f64,
    pub n_risk_entities: usize,
    pub n_benign_entities: usize,
    /// Poisson mean of affirmed entity mentions per day.
    pub mentions_per_day: f64,
    /// Logit of a mention being a risk entity: intercept + slope·z_t.
    pub risk_intercept: f64,
    pub risk_slope: f64,
    /// Poisson mean of negated decoy sentences per day.
    pub decoys_per_day: f64,
    /// Share of decoys that name a risk entity.
    pub decoy_risk_share: f64,
    pub filler_per_day: f64,
    /// Per-signal loading of the vital drift on z_v.
    pub vital_loading: f64,
    /// Probability that an hourly vital measurement is missing.
    pub vital_missingness: f64,
    /// Probability that an hourly lab measurement is missing.
    pub lab_missingness: f64,
    /// Probability of an extra date-only ECG note per day.
    pub date_only_rate: f64,
    /// Probability of a note charted after the 48 h window.
    pub late_note_rate: f64,
    pub discharge_notes: bool,
    pub gold_sentences: usize,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_patients: 1600,
            stays_per_patient: vec![0.8, 0.15, 0.05],
            base_rate: 0.2,
            beta_v: 1.6,
            beta_t: None,
            bayes_gap: 0.05,
            n_risk_entities: 12,
            n_benign_entities: 16,
            mentions_per_day: 6.0,
            risk_intercept: -1.0,
            risk_slope: 1.5,
            decoys_per_day: 4.0,
            decoy_risk_share: 0.6,
            filler_per_day: 4.0,
            vital_loading: 0.6,
            vital_missingness: 0.4,
            lab_missingness: 0.85,
            date_only_rate: 0.15,
            late_note_rate: 0.2,
            discharge_notes: true,
            gold_sentences: 50,
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        let rate = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(name, format!("{v} is not in [0, 1]")))
            }
        };
        rate("cohort.base_rate", self.base_rate)?;
        rate("cohort.vital_missingness", self.vital_missingness)?;
        rate("cohort.lab_missingness", self.lab_missingness)?;
        rate("cohort.decoy_risk_share", self.decoy_risk_share)?;
        rate("cohort.date_only_rate", self.date_only_rate)?;
        rate("cohort.late_note_rate", self.late_note_rate)?;
        if self.base_rate <= 0.0 || self.base_rate >= 1.0 {
            return Err(Error::config("cohort.base_rate", "must lie strictly between 0 and 1"));
        }
        if self.beta_v < 0.0 || self.beta_t.is_some_and(|b| b < 0.0) {
            return Err(Error::config("cohort.beta_v", "effect sizes must be ≥ 0"));
        }
        for (name, v) in [
            ("cohort.mentions_per_day", self.mentions_per_day),
            ("cohort.decoys_per_day", self.decoys_per_day),
            ("cohort.filler_per_day", self.filler_per_day),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be finite and ≥ 0"));
            }
        }
        if self.n_patients == 0 {
            return Err(Error::config("cohort.n_patients", "must be ≥ 1"));
        }
        if self.stays_per_patient.is_empty() || self.stays_per_patient.iter().any(|&w| w < 0.0) || self.stays_per_patient.iter().sum::<f64>() <= 0.0 {
            return Err(Error::config("cohort.stays_per_patient", "needs nonnegative weights with positive sum"));
        }
        if self.n_risk_entities == 0 || self.n_benign_entities == 0 {
            return Err(Error::config("cohort.n_risk_entities", "need at least one risk and one benign entity"));
        }
        if !(0.0..0.5).contains(&self.bayes_gap) {
            return Err(Error::config("cohort.bayes_gap", "must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

/// Resolved generative parameters, written to the ground-truth sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeParams {
    pub alpha: f64,
    pub beta_v: f64,
    pub beta_t: f64,
    /// Population AUC of the full latent score.
    pub bayes_auc: f64,
    /// Population AUC of z_v alone.
    pub vital_bayes_auc: f64,
    pub signal_loadings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayTruth {
    pub stay_id: u64,
    pub patient_id: u64,
    pub z_v: f64,
    pub z_t: f64,
    /// P(label = 1 | latents).
    pub bayes_score: f64,
    pub label: u8,
}

#[derive(Debug, Clone)]
pub struct Cohort {
    pub config: CohortConfig,
    pub params: GenerativeParams,
    pub inventory: EntityInventory,
    pub stays: Vec<StayRecord>,
    pub truth: Vec<StayTruth>,
}

/// Normal-weighted grid for one-dimensional expectations.
fn normal_grid() -> Vec<(f64, f64)> {
    let n = 4001;
    let (lo, hi) = (-8.0, 8.0);
    let h = (hi - lo) / (n - 1) as f64;
    let raw: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let z = lo + i as f64 * h;
            (z, (-0.5 * z * z).exp())
        })
        .collect();
    let total: f64 = raw.iter().map(|p| p.1).sum();
    raw.into_iter().map(|(z, w)| (z, w / total)).collect()
}

/// Intercept α with E[σ(α + s·Z)] = base rate for Z ~ N(0, 1).
pub fn calibrate_alpha(scale: f64, base_rate: f64) -> f64 {
    let grid = normal_grid();
    let mean = |a: f64| grid.iter().map(|&(z, w)| w * sigmoid(a + scale * z)).sum::<f64>();
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < base_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Expected AUC of `scores` when item i is positive with probability p_i.
fn soft_auc(scores: &[f64], p: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut neg_below, mut num) = (0.0, 0.0);
    for &i in &idx {
        num += p[i] * neg_below;
        neg_below += 1.0 - p[i];
    }
    let pos: f64 = p.iter().sum();
    let neg = p.len() as f64 - pos;
    num / (pos * neg)
}

const MC_DRAWS: usize = 40_000;

/// Population AUCs (full score, z_v only) for the given effects.
pub fn bayes_aucs(beta_v: f64, beta_t: f64, base_rate: f64) -> (f64, f64, f64) {
    let alpha = calibrate_alpha((beta_v * beta_v + beta_t * beta_t).sqrt(), base_rate);
    let mut rng = Rng::new(0x5eed);
    let (mut zv, mut full, mut p) = (Vec::with_capacity(MC_DRAWS), Vec::with_capacity(MC_DRAWS), Vec::with_capacity(MC_DRAWS));
    for _ in 0..MC_DRAWS {
        let (a, b) = (rng.normal(), rng.normal());
        let s = alpha + beta_v * a + beta_t * b;
        zv.push(a);
        full.push(s);
        p.push(sigmoid(s));
    }
    (alpha, soft_auc(&full, &p), soft_auc(&zv, &p))
}

/// Smallest β_t whose Bayes gap reaches `gap` (bisection).
pub fn calibrate_beta_t(beta_v: f64, base_rate: f64, gap: f64) -> f64 {
    if gap <= 0.0 {
        return 0.0;
    }
    let gap_at = |bt: f64| {
        let (_, full, vital) = bayes_aucs(beta_v, bt, base_rate);
        full - vital
    };
    let (mut lo, mut hi) = (0.0, 8.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if gap_at(mid) < gap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn signal_loadings(loading: f64) -> Vec<f64> {
    (0..NUM_SIGNALS)
        .map(|s| {
            let mag = loading * (0.6 + 0.8 * s as f64 / (NUM_SIGNALS - 1) as f64);
            if s % 2 == 0 {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

fn signal_scale(s: usize) -> (f64, f64) {
    (60.0 + 7.0 * s as f64, 4.0 + 0.5 * s as f64)
}

fn gen_vitals(stay_id: u64, z_v: f64, loadings: &[f64], cfg: &CohortConfig, rng: &mut Rng) -> Vec<VitalEvent> {
    let hours = WINDOW_HOURS as usize + 6;
    let innov = (1.0 - AR_COEF * AR_COEF).sqrt();
    let mut events = Vec::new();
    for (s, &k) in loadings.iter().enumerate() {
        let (mean, sd) = signal_scale(s);
        let miss = if s < FREQUENT_SIGNALS { cfg.vital_missingness } else { cfg.lab_missingness };
        let mut a = rng.normal();
        for h in 0..hours {
            if h > 0 {
                a = AR_COEF * a + innov * rng.normal();
            }
            // drift grows over the window
            let drift = k * z_v * (0.5 + h as f64 / WINDOW_HOURS);
            if rng.bernoulli(miss) {
                continue;
            }
            events.push(VitalEvent {
                stay_id,
                signal: s,
                time: h as f64 + rng.uniform(),
                value: mean + sd * (drift + a),
            });
        }
    }
    events
}

fn pick<'a>(pool: &'a [(String, crate::entity::EntityType)], rng: &mut Rng) -> &'a (String, crate::entity::EntityType) {
    &pool[rng.below(pool.len())]
}

fn sentence_text(s: &GoldSentence) -> String {
    format!("{}.", s.text())
}

fn gen_notes(stay_id: u64, z_t: f64, label: u8, inv: &EntityInventory, cfg: &CohortConfig, rng: &mut Rng) -> Vec<NoteEvent> {
    let mut notes = Vec::new();
    let p_risk = sigmoid(cfg.risk_intercept + cfg.risk_slope * z_t);
    for day in 0..2u32 {
        let mut sentences = Vec::new();
        for _ in 0..rng.poisson(cfg.mentions_per_day) {
            let pool = if rng.bernoulli(p_risk) { &inv.risk } else { &inv.benign };
            let (s, ty) = pick(pool, rng);
            sentences.push(sentence_text(&mention_sentence(s, *ty, rng)));
        }
        for _ in 0..rng.poisson(cfg.decoys_per_day) {
            let pool = if rng.bernoulli(cfg.decoy_risk_share) { &inv.risk } else { &inv.benign };
            let (s, ty) = pick(pool, rng);
            sentences.push(sentence_text(&decoy_sentence(s, *ty, rng)));
        }
        for _ in 0..rng.poisson(cfg.filler_per_day) {
            sentences.push(sentence_text(&filler_sentence(rng)));
        }
        rng.shuffle(&mut sentences);
        let n_notes = (1 + rng.below(3)).min(sentences.len().max(1));
        let mut times: Vec<f64> = (0..n_notes).map(|_| 24.0 * f64::from(day) + 0.5 + 23.0 * rng.uniform()).collect();
        times.sort_by(f64::total_cmp);
        let per = sentences.len().div_ceil(n_notes).max(1);
        for (k, t) in times.iter().enumerate() {
            let chunk: Vec<String> = sentences.iter().skip(k * per).take(per).cloned().collect();
            if chunk.is_empty() {
                continue;
            }
            notes.push(NoteEvent {
                stay_id,
                category: CATEGORIES[rng.below(CATEGORIES.len())].to_string(),
                charttime: Some(*t),
                chartdate: day,
                text: chunk.join(" "),
            });
        }
        if rng.bernoulli(cfg.date_only_rate) {
            notes.push(NoteEvent {
                stay_id,
                category: "ecg".into(),
                charttime: None,
                chartdate: day,
                text: format!("Sinus rhythm, rate {}. No acute ST changes.", 60 + rng.below(40)),
            });
        }
    }
    // outside the window: mentions track the label, so any leak is visible
    if rng.bernoulli(cfg.late_note_rate) {
        let (s, ty) = if label == 1 { pick(&inv.risk, rng) } else { pick(&inv.benign, rng) };
        notes.push(NoteEvent {
            stay_id,
            category: "physician".into(),
            charttime: Some(WINDOW_HOURS + 1.0 + 20.0 * rng.uniform()),
            chartdate: 2,
            text: sentence_text(&mention_sentence(s, *ty, rng)),
        });
    }
    if cfg.discharge_notes {
        let text = if label == 1 {
            "Discharge summary: patient expired despite maximal support."
        } else {
            "Discharge summary: patient discharged home in stable condition."
        };
        notes.push(NoteEvent {
            stay_id,
            category: "discharge".into(),
            charttime: Some(24.0 * 3.0 + 10.0 * rng.uniform()),
            chartdate: 3,
            text: text.into(),
        });
    }
    notes
}

/// Generates the cohort; a pure function of `config`.
pub fn generate(config: &CohortConfig) -> Result<Cohort> {
    config.validate()?;
    let beta_t = config
        .beta_t
        .unwrap_or_else(|| calibrate_beta_t(config.beta_v, config.base_rate, config.bayes_gap));
    let (alpha, bayes_auc, vital_bayes_auc) = bayes_aucs(config.beta_v, beta_t, config.base_rate);
    let loadings = signal_loadings(config.vital_loading);
    let inventory = EntityInventory::new(config.n_risk_entities, config.n_benign_entities);

    let mut stays = Vec::new();
    let mut truth = Vec::new();
    let mut next_stay = 100_000u64;
    for patient in 0..config.n_patients as u64 {
        let mut rng = Rng::new(derive_seed(config.seed, patient));
        let n_stays = 1 + rng.categorical(&config.stays_per_patient);
        for _ in 0..n_stays {
            let stay_id = next_stay;
            next_stay += 1;
            let (z_v, z_t) = (rng.normal(), rng.normal());
            let p = sigmoid(alpha + config.beta_v * z_v + beta_t * z_t);
            let label = u8::from(rng.bernoulli(p));
            let vitals = gen_vitals(stay_id, z_v, &loadings, config, &mut rng);
            let notes = gen_notes(stay_id, z_t, label, &inventory, config, &mut rng);
            stays.push(StayRecord {
                stay_id,
                patient_id: patient,
                label,
                vitals,
                notes,
                split: None,
            });
            truth.push(StayTruth {
                stay_id,
                patient_id: patient,
                z_v,
                z_t,
                bayes_score: p,
                label,
            });
        }
    }
    Ok(Cohort {
        config: config.clone(),
        params: GenerativeParams {
            alpha,
            beta_v: config.beta_v,
            beta_t,
            bayes_auc,
            vital_bayes_auc,
            signal_loadings: loadings,
        },
        inventory,
        stays,
        truth,
    })
}

impl Cohort {
    /// Gold tagged sentences for the toy tagger.
    pub fn gold_tagged_sentences(&self) -> Vec<GoldSentence> {
        gold_sentences(&self.inventory, self.config.gold_sentences, derive_seed(self.config.seed, u64::MAX))
    }

    /// Writes the cohort files, the ground-truth sidecar, the lexicon, the
    /// negation triggers and the gold tagged corpus into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_cohort(dir, &self.stays)?;
        write_jsonl(&dir.join(TRUTH_FILE), &self.truth)?;
        let meta = serde_json::json!({ "config": self.config, "params": self.params });
        fs::write(dir.join(GENERATOR_FILE), serde_json::to_string_pretty(&meta)? + "\n")?;
        self.inventory.lexicon().save(&dir.join(LEXICON_FILE))?;
        fs::write(dir.join(TRIGGERS_FILE), DEFAULT_TRIGGERS)?;
        write_jsonl(&dir.join(GOLD_TAGGED_FILE), self.gold_tagged_sentences().iter().map(GoldSentence::tagged))?;
        Ok(())
    }
}

pub fn read_truth(dir: &Path) -> Result<Vec<StayTruth>> {
    crate::cohort::read_jsonl(&dir.join(TRUTH_FILE))
}
