//! Benchmark vital-sign features: 48 h window, 2 h bins over 17 signals,
//! forward-fill imputation with population defaults, standardization.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::Split;
use crate::numkit::{Matrix, Rng};
use crate::{Error, Result};

pub const NUM_SIGNALS: usize = 17;
pub const NUM_STEPS: usize = 24;
pub const STEP_HOURS: f64 = 2.0;
pub const WINDOW_HOURS: f64 = 48.0;
const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalEvent {
    pub stay_id: u64,
    pub signal: usize,
    /// Hours since admission.
    pub time: f64,
    pub value: f64,
}

/// The T×L feature matrix of one stay plus its observation mask.
///
/// Unobserved cells hold 0.0 until [`impute`] fills them; the mask keeps
/// recording which cells were measured.
#[derive(Debug, Clone, PartialEq)]
pub struct VitalSequence {
    pub stay_id: u64,
    pub values: Matrix,
    pub mask: Vec<bool>,
}

impl VitalSequence {
    pub fn observed(&self, step: usize, signal: usize) -> bool {
        self.mask[step * NUM_SIGNALS + signal]
    }
}

/// Bins one stay's events into 24 two-hour steps; the last event by time
/// wins within a bin (input order breaks exact ties).
pub fn discretize(stay_id: u64, events: &[VitalEvent]) -> Result<VitalSequence> {
    let mut values = Matrix::zeros(NUM_STEPS, NUM_SIGNALS);
    let mut mask = vec![false; NUM_STEPS * NUM_SIGNALS];
    let mut latest = vec![f64::NEG_INFINITY; NUM_STEPS * NUM_SIGNALS];
    for e in events {
        if e.time.is_nan() || e.time < 0.0 {
            return Err(Error::Data(format!(
                "stay {stay_id}: vital event at negative time {}",
                e.time
            )));
        }
        if e.signal >= NUM_SIGNALS {
            return Err(Error::Data(format!(
                "stay {stay_id}: signal index {} out of range",
                e.signal
            )));
        }
        if !e.value.is_finite() {
            return Err(Error::Data(format!("stay {stay_id}: non-finite vital value")));
        }
        if e.time >= WINDOW_HOURS {
            continue;
        }
        let step = ((e.time / STEP_HOURS).floor() as usize).min(NUM_STEPS - 1);
        let cell = step * NUM_SIGNALS + e.signal;
        if e.time >= latest[cell] {
            latest[cell] = e.time;
            values.set(step, e.signal, e.value);
            mask[cell] = true;
        }
    }
    Ok(VitalSequence {
        stay_id,
        values,
        mask,
    })
}

/// Per-signal statistics over observed training cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub impute_default: Vec<f64>,
}

impl PopulationStats {
    /// Computes statistics from training sequences only; any sequence tagged
    /// with another split is rejected.
    pub fn from_train<'a>(tagged: impl IntoIterator<Item = (Split, &'a VitalSequence)>) -> Result<Self> {
        let mut sum = [0.0; NUM_SIGNALS];
        let mut sum_sq = [0.0; NUM_SIGNALS];
        let mut n = [0usize; NUM_SIGNALS];
        for (split, seq) in tagged {
            if split != Split::Train {
                return Err(Error::Data(format!(
                    "population statistics accept training stays only; stay {} is {}",
                    seq.stay_id,
                    split.as_str()
                )));
            }
            for t in 0..NUM_STEPS {
                for s in 0..NUM_SIGNALS {
                    if seq.observed(t, s) {
                        let v = seq.values.get(t, s);
                        sum[s] += v;
                        sum_sq[s] += v * v;
                        n[s] += 1;
                    }
                }
            }
        }
        let mut mean = vec![0.0; NUM_SIGNALS];
        let mut std = vec![0.0; NUM_SIGNALS];
        for s in 0..NUM_SIGNALS {
            if n[s] > 0 {
                let m = sum[s] / n[s] as f64;
                mean[s] = m;
                std[s] = (sum_sq[s] / n[s] as f64 - m * m).max(0.0).sqrt();
            }
        }
        Ok(Self {
            impute_default: mean.clone(),
            mean,
            std,
        })
    }
}

/// Forward-fills each signal from its most recent observed bin; bins before
/// the first observation take the population default. The mask is kept.
pub fn impute(seq: &VitalSequence, stats: &PopulationStats) -> VitalSequence {
    let mut out = seq.clone();
    for s in 0..NUM_SIGNALS {
        let mut last = stats.impute_default[s];
        for t in 0..NUM_STEPS {
            if seq.observed(t, s) {
                last = seq.values.get(t, s);
            } else {
                out.values.set(t, s, last);
            }
        }
    }
    out
}

/// `(v − mean) / max(std, 1e-6)` per signal.
pub fn standardize(seq: &VitalSequence, stats: &PopulationStats) -> VitalSequence {
    let mut out = seq.clone();
    for t in 0..NUM_STEPS {
        for s in 0..NUM_SIGNALS {
            let v = (seq.values.get(t, s) - stats.mean[s]) / stats.std[s].max(STD_FLOOR);
            out.values.set(t, s, v);
        }
    }
    out
}

/// Forward-fills the two day embeddings of a stay: a missing day 1 copies
/// day 0, a missing day 0 is the zero vector.
pub fn impute_day_vectors(day0: Option<Vec<f64>>, day1: Option<Vec<f64>>, dim: usize) -> [Vec<f64>; 2] {
    let d0 = day0.unwrap_or_else(|| vec![0.0; dim]);
    let d1 = day1.unwrap_or_else(|| d0.clone());
    [d0, d1]
}

/// Assigns train/val/test tags with every stay of a patient in one split.
///
/// Patients are shuffled by `seed`. Multi-stay patients are placed first,
/// each into the split with the largest remaining relative deficit; the
/// single-stay patients then fill the remaining capacity contiguously in
/// shuffled order. Stay targets are `round(f_train·n)`, `round(f_val·n)` and
/// the remainder.
pub fn split_cohort(stays: &[(u64, u64)], fractions: [f64; 3], seed: u64) -> Result<Vec<Split>> {
    if stays.len() < 3 {
        return Err(Error::config("split", "need at least 3 stays"));
    }
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config("split.fractions", "must lie in [0,1] and sum to 1"));
    }
    let n = stays.len();
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let targets = [n_train, n_val, n - n_train - n_val];

    let mut by_patient: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &(_, patient)) in stays.iter().enumerate() {
        by_patient.entry(patient).or_default().push(i);
    }
    let mut patients: Vec<Vec<usize>> = by_patient.into_values().collect();
    Rng::new(seed).shuffle(&mut patients);
    let (multi, single): (Vec<_>, Vec<_>) = patients.into_iter().partition(|p| p.len() > 1);

    let mut counts = [0usize; 3];
    let mut tags = vec![Split::Train; n];
    for group in &multi {
        let k = (0..3)
            .max_by(|&a, &b| {
                let da = deficit(targets[a], counts[a]);
                let db = deficit(targets[b], counts[b]);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("three splits");
        for &i in group {
            tags[i] = Split::ALL[k];
        }
        counts[k] += group.len();
    }
    let mut k = 0;
    for group in &single {
        while k < 2 && counts[k] >= targets[k] {
            k += 1;
        }
        tags[group[0]] = Split::ALL[k];
        counts[k] += 1;
    }
    Ok(tags)
}

fn deficit(target: usize, count: usize) -> f64 {
    if target == 0 {
        return f64::NEG_INFINITY;
    }
    (target as f64 - count as f64) / target as f64
}

/// Writes `n_stays, T, L` as little-endian u64 followed by the row-major
/// little-endian f64 values of every T × L matrix.
pub fn write_matrix_file<'a>(path: &Path, matrices: impl ExactSizeIterator<Item = &'a Matrix>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for h in [matrices.len(), NUM_STEPS, NUM_SIGNALS] {
        w.write_all(&(h as u64).to_le_bytes())?;
    }
    for m in matrices {
        if m.shape() != (NUM_STEPS, NUM_SIGNALS) {
            return Err(Error::Dimension {
                op: "write_matrix_file",
                left: m.shape(),
                right: (NUM_STEPS, NUM_SIGNALS),
            });
        }
        for v in m.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_file(path: &Path) -> Result<Vec<Matrix>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut word = [0u8; 8];
    let mut header = [0usize; 3];
    for h in &mut header {
        r.read_exact(&mut word)?;
        *h = u64::from_le_bytes(word) as usize;
    }
    let [n, t, l] = header;
    if t != NUM_STEPS || l != NUM_SIGNALS {
        return Err(Error::Format(format!("matrix file has shape {t}x{l}")));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut data = Vec::with_capacity(t * l);
        for _ in 0..t * l {
            r.read_exact(&mut word)?;
            data.push(f64::from_le_bytes(word));
        }
        out.push(Matrix::from_vec(t, l, data)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(signal: usize, time: f64, value: f64) -> VitalEvent {
        VitalEvent {
            stay_id: 1,
            signal,
            time,
            value,
        }
    }

    fn stats(default: f64) -> PopulationStats {
        PopulationStats {
            mean: vec![0.0; NUM_SIGNALS],
            std: vec![1.0; NUM_SIGNALS],
            impute_default: vec![default; NUM_SIGNALS],
        }
    }

    #[test]
    fn bin_arithmetic() {
        let seq = discretize(1, &[ev(0, 3.5, 1.0)]).unwrap();
        assert!(seq.observed(1, 0));
        assert_eq!(seq.values.get(1, 0), 1.0);
    }

    #[test]
    fn last_event_wins() {
        let seq = discretize(1, &[ev(2, 3.9, 9.0), ev(2, 2.0, 5.0)]).unwrap();
        assert_eq!(seq.values.get(1, 2), 9.0);
    }

    #[test]
    fn unobserved_signal_fully_masked_and_late_events_dropped() {
        let seq = discretize(1, &[ev(0, 1.0, 1.0), ev(3, 48.0, 2.0)]).unwrap();
        assert!((0..NUM_STEPS).all(|t| !seq.observed(t, 5)));
        assert!((0..NUM_STEPS).all(|t| !seq.observed(t, 3)));
        assert_eq!(seq.values.shape(), (NUM_STEPS, NUM_SIGNALS));
    }

    #[test]
    fn negative_time_is_data_error() {
        assert!(matches!(discretize(1, &[ev(0, -0.1, 1.0)]), Err(Error::Data(_))));
    }

    #[test]
    fn impute_forward_fill_and_default() {
        // column [_, 7, _, _, ...]
        let seq = discretize(1, &[ev(0, 2.0, 7.0)]).unwrap();
        let out = impute(&seq, &stats(-1.0));
        assert_eq!(out.values.get(0, 0), -1.0);
        for t in 1..NUM_STEPS {
            assert_eq!(out.values.get(t, 0), 7.0);
        }
        assert!((0..NUM_STEPS).all(|t| out.values.get(t, 4) == -1.0));
        assert_eq!(out.mask, seq.mask);
    }

    #[test]
    fn fully_observed_column_unchanged() {
        let events: Vec<_> = (0..NUM_STEPS).map(|t| ev(3, t as f64 * 2.0, t as f64)).collect();
        let seq = discretize(1, &events).unwrap();
        let out = impute(&seq, &stats(100.0));
        for t in 0..NUM_STEPS {
            assert_eq!(out.values.get(t, 3), t as f64);
        }
    }

    #[test]
    fn standardize_cases() {
        let seq = discretize(1, &[ev(0, 0.0, 5.0), ev(1, 0.0, 7.0), ev(2, 0.0, 3.0)]).unwrap();
        let mut st = stats(0.0);
        st.mean[0] = 5.0;
        st.mean[1] = 5.0;
        st.std[1] = 2.0;
        st.mean[2] = 3.0;
        st.std[2] = 0.0;
        let out = standardize(&seq, &st);
        assert_eq!(out.values.get(0, 0), 0.0);
        assert_eq!(out.values.get(0, 1), 1.0);
        assert_eq!(out.values.get(0, 2), 0.0);
        assert_eq!(out.mask, seq.mask);
    }

    #[test]
    fn stats_reject_non_train() {
        let seq = discretize(1, &[]).unwrap();
        assert!(PopulationStats::from_train([(Split::Val, &seq)]).is_err());
        assert!(PopulationStats::from_train([(Split::Train, &seq)]).is_ok());
    }

    #[test]
    fn stats_use_observed_cells() {
        let a = discretize(1, &[ev(0, 0.0, 1.0), ev(0, 2.0, 3.0)]).unwrap();
        let st = PopulationStats::from_train([(Split::Train, &a)]).unwrap();
        assert_eq!(st.mean[0], 2.0);
        assert_eq!(st.std[0], 1.0);
        assert_eq!(st.impute_default[0], 2.0);
    }

    #[test]
    fn split_single_stay_patients_exact() {
        let stays: Vec<(u64, u64)> = (0..100).map(|i| (i, i)).collect();
        let tags = split_cohort(&stays, [0.7, 0.15, 0.15], 1).unwrap();
        let count = |s| tags.iter().filter(|&&t| t == s).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (70, 15, 15));
        assert_eq!(tags, split_cohort(&stays, [0.7, 0.15, 0.15], 1).unwrap());
        assert_ne!(tags, split_cohort(&stays, [0.7, 0.15, 0.15], 2).unwrap());
    }

    #[test]
    fn split_keeps_patients_together() {
        let mut stays: Vec<(u64, u64)> = (0..60).map(|i| (i, i)).collect();
        stays.extend([(100, 7), (101, 7), (102, 7)]);
        let tags = split_cohort(&stays, [0.7, 0.15, 0.15], 3).unwrap();
        let patient7: Vec<_> = stays
            .iter()
            .zip(&tags)
            .filter(|((_, p), _)| *p == 7)
            .map(|(_, t)| *t)
            .collect();
        assert_eq!(patient7.len(), 4);
        assert!(patient7.iter().all(|t| *t == patient7[0]));
    }

    #[test]
    fn split_needs_three_stays() {
        assert!(matches!(
            split_cohort(&[(0, 0), (1, 1)], [0.7, 0.15, 0.15], 0),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn matrix_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let seq = impute(&discretize(9, &[ev(1, 5.0, 2.5)]).unwrap(), &stats(0.5));
        let path = dir.path().join("m.bin");
        write_matrix_file(&path, [&seq.values, &seq.values].into_iter()).unwrap();
        let back = read_matrix_file(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1], seq.values);
    }

    #[test]
    fn day_vector_imputation() {
        let [a, b] = impute_day_vectors(None, None, 3);
        assert_eq!((a, b), (vec![0.0; 3], vec![0.0; 3]));
        let [a, b] = impute_day_vectors(Some(vec![1.0, 2.0]), None, 2);
        assert_eq!(a, b);
        let [a, b] = impute_day_vectors(None, Some(vec![4.0, 4.0]), 2);
        assert_eq!((a, b), (vec![0.0, 0.0], vec![4.0, 4.0]));
    }

    fn arb_events() -> impl Strategy<Value = Vec<VitalEvent>> {
        proptest::collection::vec((0..NUM_SIGNALS, 0.0..60.0f64, -5.0..5.0f64), 0..200)
            .prop_map(|v| v.into_iter().map(|(s, t, x)| ev(s, t, x)).collect())
    }

    proptest! {
        #[test]
        fn shape_mask_and_idempotence(events in arb_events(), default in -3.0..3.0f64) {
            let seq = discretize(1, &events).unwrap();
            prop_assert_eq!(seq.values.shape(), (NUM_STEPS, NUM_SIGNALS));
            let st = stats(default);
            let once = impute(&seq, &st);
            let twice = impute(&once, &st);
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(&once.mask, &seq.mask);
            let z = standardize(&once, &st);
            prop_assert_eq!(&z.mask, &seq.mask);
            prop_assert!(z.values.is_finite());
        }

        #[test]
        fn grouped_split_within_one_stay_of_targets(
            sizes in proptest::collection::vec(prop_oneof![8 => Just(1usize), 1 => Just(2usize), 1 => Just(3usize)], 30..200),
            seed in 0u64..50,
        ) {
            let mut stays = Vec::new();
            for (p, &k) in sizes.iter().enumerate() {
                for j in 0..k {
                    stays.push(((p * 10 + j) as u64, p as u64));
                }
            }
            let n = stays.len();
            let tags = split_cohort(&stays, [0.7, 0.15, 0.15], seed).unwrap();
            let singles = sizes.iter().filter(|&&k| k == 1).count();
            let n_train = (0.7 * n as f64).round() as usize;
            let n_val = (0.15 * n as f64).round() as usize;
            let count = |s| tags.iter().filter(|&&t| t == s).count();
            // enough single-stay patients to absorb any grouping overshoot
            if singles * 2 > n {
                prop_assert!(count(Split::Train).abs_diff(n_train) <= 1);
                prop_assert!(count(Split::Val).abs_diff(n_val) <= 1);
            }
            let mut by_patient: BTreeMap<u64, Split> = BTreeMap::new();
            for ((_, p), t) in stays.iter().zip(&tags) {
                prop_assert_eq!(*by_patient.entry(*p).or_insert(*t), *t);
            }
        }
    }
}
