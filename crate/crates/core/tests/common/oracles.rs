//! Straight-line reference implementations, written without the crate's
//! helpers, used to cross-check the optimized code paths.
#![allow(dead_code, clippy::needless_range_loop)]

use clinfuse::numkit::Matrix;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Peephole LSTM over rows of `x`; returns (h_t, c_t) per step.
pub fn lstm(x: &Matrix, wx: &Matrix, wh: &Matrix, peep: &Matrix, bias: &Matrix) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let hn = wh.cols();
    let mut h = vec![0.0; hn];
    let mut c = vec![0.0; hn];
    let mut hs = Vec::new();
    let mut cs = Vec::new();
    for t in 0..x.rows() {
        let mut pre = vec![0.0; 4 * hn];
        for r in 0..4 * hn {
            let mut s = bias.get(0, r);
            for j in 0..x.cols() {
                s += wx.get(r, j) * x.get(t, j);
            }
            for j in 0..hn {
                s += wh.get(r, j) * h[j];
            }
            pre[r] = s;
        }
        let mut h_new = vec![0.0; hn];
        let mut c_new = vec![0.0; hn];
        for k in 0..hn {
            let i = sig(pre[k] + peep.get(0, k) * c[k]);
            let f = sig(pre[hn + k] + peep.get(1, k) * c[k]);
            let g = pre[2 * hn + k].tanh();
            c_new[k] = f * c[k] + i * g;
            let o = sig(pre[3 * hn + k] + peep.get(2, k) * c_new[k]);
            h_new[k] = o * c_new[k].tanh();
        }
        h = h_new;
        c = c_new;
        hs.push(h.clone());
        cs.push(c.clone());
    }
    (hs, cs)
}

/// Multimodal head: returns ŷ.
#[allow(clippy::too_many_arguments)]
pub fn fusion(
    h_t: &[f64],
    e1: &[f64],
    e2: &[f64],
    we: &Matrix,
    be: &Matrix,
    wj: &Matrix,
    bj: &Matrix,
    wy: &Matrix,
    by: &Matrix,
) -> f64 {
    let e: Vec<f64> = e1.iter().chain(e2).copied().collect();
    let mut h_e = vec![0.0; we.rows()];
    for r in 0..we.rows() {
        h_e[r] = be.get(0, r);
        for j in 0..e.len() {
            h_e[r] += we.get(r, j) * e[j];
        }
    }
    let joint: Vec<f64> = h_t.iter().chain(&h_e).copied().collect();
    let mut h_j = vec![0.0; wj.rows()];
    for r in 0..wj.rows() {
        h_j[r] = bj.get(0, r);
        for j in 0..joint.len() {
            h_j[r] += wj.get(r, j) * joint[j];
        }
    }
    let mut z = by.get(0, 0);
    for j in 0..h_j.len() {
        z += wy.get(0, j) * h_j[j];
    }
    sig(z)
}

/// Mann–Whitney AUROC by explicit pair counting.
pub fn auroc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Average precision by sweeping the cut over every prefix of the stable
/// descending order and summing precision × recall increment.
pub fn auprc_sweep(scores: &[f64], labels: &[u8]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 1..=idx.len() {
        let tp = idx[..k].iter().filter(|&&i| labels[i] == 1).count() as f64;
        let precision = tp / k as f64;
        let recall = tp / pos;
        ap += precision * (recall - prev_recall);
        prev_recall = recall;
    }
    ap
}
