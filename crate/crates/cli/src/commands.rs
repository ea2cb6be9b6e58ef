//! One function per subcommand. Each reads its inputs from the directories
//! of earlier stages and writes only into its own output directory.

use std::fs;
use std::path::{Path, PathBuf};

use clinfuse::cohort::{read_cohort, read_jsonl, Split, STAYS_FILE};
use clinfuse::doc2vecc::{read_embeddings, write_embeddings, DocEmbedding};
use clinfuse::entity::tagger::TaggedSentence;
use clinfuse::entity::{EntityExtractor, Lexicon};
use clinfuse::models::{load_checkpoint, save_checkpoint, Structure};
use clinfuse::numkit::{derive_seed, Matrix};
use clinfuse::pipeline::experiment::{bootstrap_seed, PREP_STAYS_FILE};
use clinfuse::pipeline::{
    bootstrap_eval, build_samples, corpus_documents, embed as embed_stage, format_table, preprocess as preprocess_stage, train_row, tsne as run_tsne,
    tsne_csv, tsne_svg, BackendKind, EmbedMode, EvalReport, FeatureSet, Prepared, SplitSamples, TABLE_ROWS,
};
use clinfuse::synthgen::{generate, GOLD_TAGGED_FILE};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{require, CliError};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";
pub const MODEL_FILE: &str = "model.bin";
pub const VECTORS_FILE: &str = "vectors.txt";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const RUNS_FILE: &str = "runs.json";
pub const EVAL_FILE: &str = "eval.json";
pub const TABLE_FILE: &str = "table.txt";
pub const REPORTS_FILE: &str = "reports.json";

type Result<T> = std::result::Result<T, CliError>;

/// Output directory of every stage under `work_dir`.
pub struct Layout {
    pub data: PathBuf,
    pub work: PathBuf,
}

impl Layout {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            data: cfg.paths.data_dir.clone(),
            work: cfg.paths.work_dir.clone(),
        }
    }

    pub fn prep(&self) -> PathBuf {
        self.work.join("prep")
    }

    pub fn embed(&self, mode: EmbedMode) -> PathBuf {
        self.work.join(format!("embed_{}", mode.as_str()))
    }

    pub fn row_name(fs: FeatureSet, structure: Structure) -> String {
        format!("{}_{}", fs.as_str(), structure.as_str())
    }

    pub fn runs(&self, fs: FeatureSet, structure: Structure) -> PathBuf {
        self.work.join("runs").join(Self::row_name(fs, structure))
    }

    pub fn eval_root(&self) -> PathBuf {
        self.work.join("eval")
    }

    pub fn eval(&self, fs: FeatureSet, structure: Structure) -> PathBuf {
        self.eval_root().join(Self::row_name(fs, structure))
    }

    pub fn tsne(&self, mode: EmbedMode) -> PathBuf {
        self.work.join(format!("tsne_{}", mode.as_str()))
    }

    pub fn report(&self) -> PathBuf {
        self.work.join("report")
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::from_io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::from_io(dir, e))
}

/// Logs the resolved config and echoes it into the output directory.
fn start(cfg: &ExperimentConfig, command: &str, out: &Path) -> Result<()> {
    log::info!("{command}: resolved config\n{}", cfg.to_toml());
    create_dir(out)?;
    write(&out.join(RESOLVED_CONFIG_FILE), cfg.to_toml())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn synth(cfg: &ExperimentConfig) -> Result<()> {
    let out = &cfg.paths.data_dir;
    start(cfg, "synth", out)?;
    let cohort = generate(&cfg.cohort)?;
    cohort.write(out)?;
    log::info!(
        "synth: {} stays, prevalence {:.3}, Bayes AUROC {:.4} (vitals only {:.4})",
        cohort.stays.len(),
        cohort.stays.iter().map(|s| f64::from(s.label)).sum::<f64>() / cohort.stays.len().max(1) as f64,
        cohort.params.bayes_auc,
        cohort.params.vital_bayes_auc
    );
    Ok(())
}

pub fn preprocess(cfg: &ExperimentConfig) -> Result<()> {
    let layout = Layout::new(cfg);
    require(&layout.data.join(STAYS_FILE))?;
    let stays = read_cohort(&layout.data)?;
    start(cfg, "preprocess", &layout.prep())?;
    let prepared = preprocess_stage(&stays, &cfg.preprocess, cfg.seed)?;
    prepared.save(&layout.prep())?;
    for split in Split::ALL {
        log::info!("preprocess: {} stays in {}", prepared.indices(split).len(), split.as_str());
    }
    Ok(())
}

fn load_prepared(layout: &Layout) -> Result<Prepared> {
    require(&layout.prep().join(PREP_STAYS_FILE))?;
    Ok(Prepared::load(&layout.prep())?)
}

/// Entity extractor for the configured backend, from the lexicon and
/// trigger files.
pub fn load_extractor(cfg: &ExperimentConfig) -> Result<EntityExtractor> {
    let lex_path = cfg.lexicon_path();
    require(&lex_path)?;
    let lexicon = Lexicon::load(&lex_path)?;
    let triggers = match cfg.triggers_path() {
        Some(p) => Some(fs::read_to_string(&p).map_err(|e| CliError::from_io(&p, e))?),
        None => None,
    };
    let gold = if cfg.entity.backend == BackendKind::Tagger {
        let p = cfg.paths.data_dir.join(GOLD_TAGGED_FILE);
        require(&p)?;
        Some(read_jsonl::<TaggedSentence>(&p)?)
    } else {
        None
    };
    Ok(cfg.entity.build_extractor(lexicon, triggers.as_deref(), gold.as_deref())?)
}

pub fn embed(cfg: &ExperimentConfig, mode: EmbedMode) -> Result<()> {
    let layout = Layout::new(cfg);
    let prepared = load_prepared(&layout)?;
    let extractor = match mode {
        EmbedMode::Entity => Some(load_extractor(cfg)?),
        EmbedMode::Note => None,
    };
    let out = layout.embed(mode);
    start(cfg, "embed", &out)?;
    let corpus = corpus_documents(&prepared, mode, extractor.as_ref())?;
    let result = embed_stage(&prepared, &corpus, &cfg.embedding, cfg.seed)?;
    result.model.save(&out.join(MODEL_FILE))?;
    result.model.export_text(&out.join(VECTORS_FILE))?;
    result.model.vocab.save(&out.join(VOCAB_FILE))?;
    write_embeddings(&out.join(EMBEDDINGS_FILE), &result.embeddings)?;
    log::info!(
        "embed --mode {}: vocabulary {}, {} day documents, {} empty",
        mode.as_str(),
        result.model.vocab.len(),
        result.embeddings.len(),
        result.empty_documents
    );
    Ok(())
}

fn load_embeddings(layout: &Layout, mode: EmbedMode) -> Result<Vec<DocEmbedding>> {
    let p = layout.embed(mode).join(EMBEDDINGS_FILE);
    require(&p)?;
    Ok(read_embeddings(&p)?)
}

/// Samples for the configured feature set; text rows read the stage's
/// embeddings.
fn load_samples(cfg: &ExperimentConfig, layout: &Layout) -> Result<(SplitSamples, usize)> {
    let prepared = load_prepared(layout)?;
    match EmbedMode::for_feature_set(cfg.feature_set) {
        None => Ok((build_samples(&prepared, None)?, 0)),
        Some(mode) => {
            let embs = load_embeddings(layout, mode)?;
            let dim = embs.first().map_or(cfg.embedding.dim, |e| e.vector.len());
            if dim != cfg.embedding.dim {
                return Err(CliError::config(
                    "embedding.dim",
                    format!("embeddings on disk have dimension {dim}, config says {}", cfg.embedding.dim),
                ));
            }
            Ok((build_samples(&prepared, Some((&embs, dim)))?, dim))
        }
    }
}

#[derive(Serialize)]
struct RunsFile<'a> {
    model_id: String,
    selected: usize,
    selected_seed: u64,
    runs: &'a [clinfuse::pipeline::RunResult],
}

pub fn train(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<()> {
    let layout = Layout::new(cfg);
    let (samples, dim) = load_samples(cfg, &layout)?;
    let mut protocol = cfg.protocol.clone();
    if let Some(j) = jobs {
        protocol.jobs = j.max(1);
    }
    let out = layout.runs(cfg.feature_set, cfg.structure);
    start(cfg, "train", &out)?;
    let spec = cfg.model.spec(cfg.structure, dim);
    let outcome = train_row(&spec, &samples, &cfg.train, &protocol, cfg.seed)?;
    let echo = serde_json::to_value(cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    save_checkpoint(&out.join(CHECKPOINT_FILE), &outcome.model, &echo)?;
    let sel = outcome.selected_run();
    write(
        &out.join(RUNS_FILE),
        to_json(&RunsFile {
            model_id: clinfuse::pipeline::model_id(cfg.feature_set, cfg.structure),
            selected: outcome.selected,
            selected_seed: sel.seed,
            runs: &outcome.runs,
        })?,
    )?;
    log::info!("train: selected seed {} with validation F1 {:.4}, AUROC {:.4}", sel.seed, sel.val_f1, sel.val_auroc);
    Ok(())
}

pub fn evaluate(cfg: &ExperimentConfig) -> Result<EvalReport> {
    let layout = Layout::new(cfg);
    let ckpt = layout.runs(cfg.feature_set, cfg.structure).join(CHECKPOINT_FILE);
    require(&ckpt)?;
    let (samples, dim) = load_samples(cfg, &layout)?;
    let (model, _) = load_checkpoint(&ckpt)?;
    if model.spec.structure != cfg.structure || model.spec.emb_dim != dim {
        return Err(CliError::Runtime(format!("{}: checkpoint does not match the configured row", ckpt.display())));
    }
    let out = layout.eval(cfg.feature_set, cfg.structure);
    start(cfg, "evaluate", &out)?;
    let report = bootstrap_eval(&model, &samples.test, cfg.feature_set, cfg.protocol.n_resamples, bootstrap_seed(cfg.seed))?;
    write(&out.join(EVAL_FILE), report.to_json()?)?;
    log::info!(
        "evaluate {}: test AUROC {:.4}, AUPRC {:.4}",
        report.model_id,
        report.test_auroc,
        report.test_auprc
    );
    Ok(report)
}

#[derive(Serialize)]
struct KlFile {
    n_points: usize,
    kl_after_exaggeration: f64,
    final_kl: f64,
}

pub fn tsne(cfg: &ExperimentConfig, mode: EmbedMode) -> Result<()> {
    let layout = Layout::new(cfg);
    let prepared = load_prepared(&layout)?;
    let embs = load_embeddings(&layout, mode)?;
    let dim = embs.first().map_or(cfg.embedding.dim, |e| e.vector.len());
    let samples = build_samples(&prepared, Some((&embs, dim)))?;
    let out = layout.tsne(mode);
    start(cfg, "tsne", &out)?;
    let points: Vec<_> = [Split::Test, Split::Val, Split::Train]
        .into_iter()
        .flat_map(|s| samples.get(s))
        .take(cfg.tsne.max_points)
        .collect();
    let ids: Vec<u64> = points.iter().map(|s| s.stay_id).collect();
    let labels: Vec<u8> = points.iter().map(|s| s.label).collect();
    let rows: Vec<Vec<f64>> = points.iter().map(|s| [s.e1.as_slice(), s.e2.as_slice()].concat()).collect();
    let x = Matrix::from_rows(&rows)?;
    let result = run_tsne(&x, &cfg.tsne.params(derive_seed(cfg.seed, 5)))?;
    write(&out.join("coords.csv"), tsne_csv(&ids, &result.coords, &labels))?;
    write(&out.join("plot.svg"), tsne_svg(&result.coords, &labels, &format!("{} embeddings", mode.as_str())))?;
    write(
        &out.join("kl.json"),
        to_json(&KlFile {
            n_points: ids.len(),
            kl_after_exaggeration: result.kl_after_exaggeration,
            final_kl: result.final_kl,
        })?,
    )?;
    log::info!("tsne --mode {}: {} points, final KL {:.4}", mode.as_str(), ids.len(), result.final_kl);
    Ok(())
}

/// Collects every `eval/*/eval.json`, ordered as the result table and then
/// by model id, and writes the table.
pub fn report(cfg: &ExperimentConfig) -> Result<String> {
    let layout = Layout::new(cfg);
    let root = layout.eval_root();
    require(&root)?;
    let mut reports = Vec::new();
    let entries = fs::read_dir(&root).map_err(|e| CliError::from_io(&root, e))?;
    for entry in entries {
        let p = entry.map_err(|e| CliError::from_io(&root, e))?.path().join(EVAL_FILE);
        if p.is_file() {
            let text = fs::read_to_string(&p).map_err(|e| CliError::from_io(&p, e))?;
            let r: EvalReport = serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
            reports.push(r);
        }
    }
    if reports.is_empty() {
        return Err(CliError::MissingFile(root.join("*").join(EVAL_FILE)));
    }
    let rank = |r: &EvalReport| {
        TABLE_ROWS
            .iter()
            .position(|&(f, s)| f == r.feature_set && s == r.structure)
            .unwrap_or(TABLE_ROWS.len())
    };
    reports.sort_by(|a, b| rank(a).cmp(&rank(b)).then_with(|| a.model_id.cmp(&b.model_id)));
    let out = layout.report();
    start(cfg, "report", &out)?;
    let table = format_table(&reports);
    write(&out.join(TABLE_FILE), &table)?;
    write(&out.join(REPORTS_FILE), to_json(&reports)?)?;
    Ok(table)
}
