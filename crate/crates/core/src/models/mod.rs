//! Mortality classifiers: the vitals-only peephole LSTM, the LSTM over
//! vitals concatenated with daily text embeddings, and the multimodal
//! fusion network.

mod checkpoint;
mod classifier;
mod heads;
mod lstm;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use classifier::{
    concat_inputs, embedding_day, Classifier, EmbeddingVisibility, ForwardPass, ModelSpec, Sample, Structure,
};
pub use heads::{FusionHead, FusionOutput, LogisticHead};
pub use lstm::{LstmCache, LstmLayer};
pub use train::{fit, EpochRecord, FitHistory, TrainConfig};
