use serde::{Deserialize, Serialize};

use super::metrics::{auprc, auroc, f1};
use crate::models::FitHistory;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    #[serde(flatten)]
    pub status: RunStatus,
    pub val_f1: f64,
    pub val_auroc: f64,
    pub val_auprc: f64,
    pub history: FitHistory,
}

/// What one training run hands back to the protocol.
pub struct TrainedRun<M> {
    pub model: M,
    pub history: FitHistory,
    /// Predicted probabilities on the validation split.
    pub val_scores: Vec<f64>,
}

pub struct ProtocolOutcome<M> {
    pub runs: Vec<RunResult>,
    /// Index into `runs` of the selected run.
    pub selected: usize,
    pub model: M,
}

impl<M> ProtocolOutcome<M> {
    pub fn selected_run(&self) -> &RunResult {
        &self.runs[self.selected]
    }
}

/// Trains one run per seed and selects the successful run with the highest
/// validation F1, ties going to the lower seed. Runs that fail with a
/// training error (non-finite loss) are recorded and excluded. With
/// `jobs > 1` seeds run on worker threads; the outcome does not depend on
/// `jobs`.
pub fn run_protocol<M, F>(seeds: &[u64], val_labels: &[u8], threshold: f64, jobs: usize, train_one: F) -> Result<ProtocolOutcome<M>>
where
    M: Send,
    F: Fn(u64) -> Result<TrainedRun<M>> + Sync,
{
    if seeds.is_empty() {
        return Err(Error::Protocol("no seeds to run".into()));
    }
    let results: Vec<Result<TrainedRun<M>>> = if jobs <= 1 {
        seeds.iter().map(|&s| train_one(s)).collect()
    } else {
        let mut slots: Vec<Option<Result<TrainedRun<M>>>> = (0..seeds.len()).map(|_| None).collect();
        for (chunk_seeds, chunk_slots) in seeds.chunks(jobs).zip(slots.chunks_mut(jobs)) {
            std::thread::scope(|scope| {
                let train_one = &train_one;
                let handles: Vec<_> = chunk_seeds.iter().map(|&s| scope.spawn(move || train_one(s))).collect();
                for (slot, h) in chunk_slots.iter_mut().zip(handles) {
                    *slot = Some(h.join().unwrap_or_else(|_| Err(Error::Protocol("training worker panicked".into()))));
                }
            });
        }
        slots.into_iter().map(|s| s.expect("every seed ran")).collect()
    };

    let mut runs = Vec::with_capacity(seeds.len());
    let mut models: Vec<Option<M>> = Vec::with_capacity(seeds.len());
    for (&seed, res) in seeds.iter().zip(results) {
        match res {
            Ok(tr) => {
                let r = RunResult {
                    seed,
                    status: RunStatus::Ok,
                    val_f1: f1(&tr.val_scores, val_labels, threshold)?,
                    val_auroc: auroc(&tr.val_scores, val_labels)?,
                    val_auprc: auprc(&tr.val_scores, val_labels)?,
                    history: tr.history,
                };
                runs.push(r);
                models.push(Some(tr.model));
            }
            Err(Error::Training { slot, reason }) => {
                log::warn!("run with seed {seed} failed: {slot}: {reason}");
                runs.push(RunResult {
                    seed,
                    status: RunStatus::Failed {
                        reason: format!("{slot}: {reason}"),
                    },
                    val_f1: 0.0,
                    val_auroc: 0.0,
                    val_auprc: 0.0,
                    history: FitHistory::default(),
                });
                models.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let selected = select(&runs).ok_or_else(|| Error::Protocol("every run failed".into()))?;
    let model = models[selected].take().expect("selected run succeeded");
    Ok(ProtocolOutcome { runs, selected, model })
}

/// Highest validation F1 among successful runs; ties → lower seed.
pub fn select(runs: &[RunResult]) -> Option<usize> {
    runs.iter()
        .enumerate()
        .filter(|(_, r)| r.status == RunStatus::Ok)
        .max_by(|(_, a), (_, b)| a.val_f1.total_cmp(&b.val_f1).then_with(|| b.seed.cmp(&a.seed)))
        .map(|(i, _)| i)
}
