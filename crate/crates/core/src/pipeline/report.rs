use std::fmt;

use serde::{Deserialize, Serialize};

use super::metrics::{auprc, auroc, bootstrap};
use crate::models::{Classifier, Sample, Structure};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "vital")]
    Vital,
    #[serde(rename = "vital+note_emb")]
    NoteEmb,
    #[serde(rename = "vital+entity_emb")]
    EntityEmb,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 3] = [FeatureSet::Vital, FeatureSet::NoteEmb, FeatureSet::EntityEmb];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Vital => "vital",
            FeatureSet::NoteEmb => "vital+note_emb",
            FeatureSet::EntityEmb => "vital+entity_emb",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }

    pub fn label(self) -> &'static str {
        match self {
            FeatureSet::Vital => "Vital",
            FeatureSet::NoteEmb => "Vital + NoteEmb",
            FeatureSet::EntityEmb => "Vital + EntityEmb",
        }
    }

    pub fn uses_text(self) -> bool {
        self != FeatureSet::Vital
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The five (feature set, structure) rows of the results table, in order.
pub const TABLE_ROWS: [(FeatureSet, Structure); 5] = [
    (FeatureSet::Vital, Structure::Lstm),
    (FeatureSet::NoteEmb, Structure::Lstm),
    (FeatureSet::NoteEmb, Structure::Multimodal),
    (FeatureSet::EntityEmb, Structure::Lstm),
    (FeatureSet::EntityEmb, Structure::Multimodal),
];

/// Rejects combinations outside the table (multimodal needs text).
pub fn check_row(feature_set: FeatureSet, structure: Structure) -> Result<()> {
    if structure == Structure::Multimodal && !feature_set.uses_text() {
        return Err(Error::config("structure", "multimodal requires a text feature set"));
    }
    Ok(())
}

pub fn model_id(feature_set: FeatureSet, structure: Structure) -> String {
    format!("{}/{}", feature_set.as_str(), structure.as_str())
}

/// Bootstrap test-set evaluation of one selected model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub feature_set: FeatureSet,
    pub structure: Structure,
    /// Point metrics on the full test set.
    pub test_auroc: f64,
    pub test_auprc: f64,
    pub auroc_mean: f64,
    /// Population standard deviation across resamples.
    pub auroc_std: f64,
    pub auprc_mean: f64,
    pub auprc_std: f64,
    pub n_resamples: usize,
    pub redraws: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

pub fn predict_all(model: &Classifier, samples: &[Sample]) -> Result<Vec<f64>> {
    samples.iter().map(|s| model.predict(s)).collect()
}

pub fn bootstrap_eval(model: &Classifier, test: &[Sample], feature_set: FeatureSet, n: usize, seed: u64) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Data("empty test set".into()));
    }
    let scores = predict_all(model, test)?;
    let labels: Vec<u8> = test.iter().map(|s| s.label).collect();
    let stats = bootstrap(&scores, &labels, n, seed)?;
    let structure = model.spec.structure;
    Ok(EvalReport {
        model_id: model_id(feature_set, structure),
        feature_set,
        structure,
        test_auroc: auroc(&scores, &labels)?,
        test_auprc: auprc(&scores, &labels)?,
        auroc_mean: stats.auroc_mean,
        auroc_std: stats.auroc_std,
        auprc_mean: stats.auprc_mean,
        auprc_std: stats.auprc_std,
        n_resamples: stats.n_resamples,
        redraws: stats.redraws,
        n_test: test.len(),
        seed,
    })
}

fn structure_label(fs: FeatureSet, s: Structure) -> &'static str {
    match (fs, s) {
        (FeatureSet::Vital, Structure::Lstm) => "LSTM",
        (_, Structure::Lstm) => "LSTM (concat)",
        (_, Structure::Multimodal) => "Multimodal",
    }
}

/// Plain-text results table: feature set, structure, AU-ROC and AU-PRC as
/// bootstrap mean ± std in percent.
pub fn format_table(reports: &[EvalReport]) -> String {
    let header = ["Feature Set", "Structure", "AU-ROC (%)", "AU-PRC (%)"];
    let rows: Vec<[String; 4]> = reports
        .iter()
        .map(|r| {
            [
                r.feature_set.label().to_string(),
                structure_label(r.feature_set, r.structure).to_string(),
                format!("{:.2} ± {:.2}", 100.0 * r.auroc_mean, 100.0 * r.auroc_std),
                format!("{:.2} ± {:.2}", 100.0 * r.auprc_mean, 100.0 * r.auprc_std),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[&str]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(&header);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for r in &rows {
        out.push_str(&line(&r.iter().map(String::as_str).collect::<Vec<_>>()));
    }
    if let Some(r) = reports.first() {
        out.push_str(&format!("± is the standard deviation over {} bootstrap resamples of the test set.\n", r.n_resamples));
    }
    out
}
