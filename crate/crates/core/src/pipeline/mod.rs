//! Experiment protocol: multi-seed training with F1 selection, bootstrap
//! evaluation, result tables and t-SNE export.

pub mod experiment;
pub mod metrics;
pub mod protocol;
pub mod report;
pub mod tsne;

pub use experiment::{
    build_samples, corpus_documents, BackendKind, embed, preprocess, run_rows, train_row, EmbedMode, EmbedOutput, EntityConfig, ModelConfig,
    PipelineConfig, PreparedStay, Prepared, PreprocessConfig, ProtocolConfig, RowSpec, SplitSamples,
};
pub use metrics::{auprc, auroc, bootstrap, f1, BootstrapStats};
pub use protocol::{run_protocol, select, ProtocolOutcome, RunResult, RunStatus, TrainedRun};
pub use report::{bootstrap_eval, check_row, format_table, model_id, predict_all, EvalReport, FeatureSet, TABLE_ROWS};
pub use tsne::{tsne, tsne_csv, tsne_svg, TsneConfig, TsneResult};
