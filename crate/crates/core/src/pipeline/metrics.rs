use serde::{Deserialize, Serialize};

use crate::numkit::Rng;
use crate::{Error, Result};

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Metric(format!("label {l} is not 0 or 1")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("NaN score".into()));
    }
    Ok(())
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half (Mann–Whitney U via midranks).
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("AUROC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * idx[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision: the mean of precision@k over the ranks k of the
/// positives, ranking by descending score. Tied scores keep their input
/// order (stable sort), so earlier items rank higher.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 {
        return Err(Error::Metric("AUPRC needs at least one positive".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (k, &i) in idx.iter().enumerate() {
        if labels[i] == 1 {
            tp += 1;
            sum += tp as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / pos as f64)
}

/// F1 of the rule `score ≥ threshold`; 0 when precision + recall is 0.
pub fn f1(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    check_lengths(scores, labels)?;
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    Ok(if tp == 0 || denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 })
}

/// Bootstrap summary of AUROC and AUPRC on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapStats {
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub auprc_mean: f64,
    pub auprc_std: f64,
    pub n_resamples: usize,
    /// Resamples discarded and redrawn because they lacked a class.
    pub redraws: usize,
    pub auroc_min: f64,
    pub auroc_max: f64,
}

/// `n` resamples with replacement of size |test|. A resample missing a
/// class is redrawn so exactly `n` are used. Reports the mean and the
/// population standard deviation across resamples.
pub fn bootstrap(scores: &[f64], labels: &[u8], n: usize, seed: u64) -> Result<BootstrapStats> {
    check_lengths(scores, labels)?;
    if scores.is_empty() || n == 0 {
        return Err(Error::Metric("bootstrap needs a nonempty test set and n ≥ 1".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::Metric("bootstrap needs both classes in the test set".into()));
    }
    let mut rng = Rng::new(seed);
    let m = scores.len();
    let (mut rocs, mut prcs) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut redraws = 0;
    let mut s = vec![0.0; m];
    let mut l = vec![0u8; m];
    while rocs.len() < n {
        for k in 0..m {
            let i = rng.below(m);
            s[k] = scores[i];
            l[k] = labels[i];
        }
        let p = l.iter().filter(|&&v| v == 1).count();
        if p == 0 || p == m {
            redraws += 1;
            log::debug!("bootstrap resample lacked a class; redrawing");
            continue;
        }
        rocs.push(auroc(&s, &l)?);
        prcs.push(auprc(&s, &l)?);
    }
    if redraws > 0 {
        log::info!("bootstrap redrew {redraws} single-class resamples");
    }
    let (am, asd) = mean_std(&rocs);
    let (pm, psd) = mean_std(&prcs);
    Ok(BootstrapStats {
        auroc_mean: am,
        auroc_std: asd,
        auprc_mean: pm,
        auprc_std: psd,
        n_resamples: n,
        redraws,
        auroc_min: rocs.iter().copied().fold(f64::INFINITY, f64::min),
        auroc_max: rocs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
