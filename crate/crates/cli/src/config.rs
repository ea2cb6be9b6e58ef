//! Experiment configuration: a TOML file with one section per stage, plus
//! `section.key=value` overrides from the command line.

use std::path::{Path, PathBuf};

use clinfuse::doc2vecc::EmbeddingConfig;
use clinfuse::models::{Structure, TrainConfig};
use clinfuse::pipeline::{check_row, EntityConfig, FeatureSet, ModelConfig, PreprocessConfig, ProtocolConfig, TsneConfig};
use clinfuse::synthgen::CohortConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Synthetic cohort files (written by `synth`).
    pub data_dir: PathBuf,
    /// Root of every derived artifact.
    pub work_dir: PathBuf,
    /// Entity lexicon; defaults to `<data_dir>/lexicon.tsv`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    /// Negation trigger list; defaults to `<data_dir>/negation_triggers.txt`
    /// and then to the built-in list.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negation_triggers: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            work_dir: "work".into(),
            lexicon: None,
            negation_triggers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneSection {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    /// Stays embedded, test split first, then validation and training.
    pub max_points: usize,
}

impl Default for TsneSection {
    fn default() -> Self {
        let d = TsneConfig::default();
        Self {
            perplexity: d.perplexity,
            iterations: d.iterations,
            learning_rate: d.learning_rate,
            early_exaggeration: d.early_exaggeration,
            exaggeration_iters: d.exaggeration_iters,
            max_points: 1000,
        }
    }
}

impl TsneSection {
    pub fn params(&self, seed: u64) -> TsneConfig {
        TsneConfig {
            perplexity: self.perplexity,
            iterations: self.iterations,
            learning_rate: self.learning_rate,
            early_exaggeration: self.early_exaggeration,
            exaggeration_iters: self.exaggeration_iters,
            seed,
        }
    }
}

/// One experiment row with all of its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub feature_set: FeatureSet,
    pub structure: Structure,
    pub paths: Paths,
    pub cohort: CohortConfig,
    pub preprocess: PreprocessConfig,
    pub entity: EntityConfig,
    pub embedding: EmbeddingConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub protocol: ProtocolConfig,
    pub tsne: TsneSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            feature_set: FeatureSet::EntityEmb,
            structure: Structure::Multimodal,
            paths: Paths::default(),
            cohort: CohortConfig::default(),
            preprocess: PreprocessConfig::default(),
            entity: EntityConfig::default(),
            embedding: EmbeddingConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            protocol: ProtocolConfig::default(),
            tsne: TsneSection::default(),
        }
    }
}

/// Parses a `--set` value as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(assignment, "override must look like section.key=value"))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(key, "empty key segment"));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| CliError::config(key, format!("`{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    /// Reads `path` (if any), applies overrides in order, and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::from_io(p, e))?;
                text.parse::<toml::Table>().map_err(|e| CliError::config(p.display().to_string(), e.to_string().trim()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
            log::info!("override: {o}");
        }
        Self::from_table(table)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let table = text.parse::<toml::Table>().map_err(|e| CliError::config("<config>", e.to_string().trim()))?;
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self, CliError> {
        let mut cfg: Self = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let field = e.path().to_string();
            CliError::config(if field == "." { "<root>".into() } else { field }, e.into_inner().message().trim())
        })?;
        // the cohort follows the master seed
        cfg.cohort.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        check_row(self.feature_set, self.structure)?;
        self.cohort.validate()?;
        self.embedding.validate()?;
        self.train.validate()?;
        self.protocol.validate()?;
        self.model.spec(self.structure, self.embedding.dim).validate()?;
        if self.model.hidden == 0 {
            return Err(CliError::config("model.hidden", "must be ≥ 1"));
        }
        if self.tsne.perplexity <= 0.0 {
            return Err(CliError::config("tsne.perplexity", "must be > 0"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn lexicon_path(&self) -> PathBuf {
        self.paths.lexicon.clone().unwrap_or_else(|| self.paths.data_dir.join(clinfuse::synthgen::LEXICON_FILE))
    }

    pub fn triggers_path(&self) -> Option<PathBuf> {
        match &self.paths.negation_triggers {
            Some(p) => Some(p.clone()),
            None => {
                let p = self.paths.data_dir.join(clinfuse::synthgen::TRIGGERS_FILE);
                p.exists().then_some(p)
            }
        }
    }
}
