//! Exact t-SNE for desk-scale embedding figures.

use serde::{Deserialize, Serialize};

use crate::numkit::{Matrix, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    /// n × 2 coordinates.
    pub coords: Matrix,
    /// KL(P‖Q) with the unexaggerated P right after the exaggeration phase.
    pub kl_after_exaggeration: f64,
    pub final_kl: f64,
}

const PERPLEXITY_TOL: f64 = 1e-5;

fn squared_distances(x: &Matrix) -> Vec<f64> {
    let n = x.rows();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = s;
            d[j * n + i] = s;
        }
    }
    d
}

/// Conditional row distribution for precision `beta`; returns entropy (nats).
fn row_distribution(dist: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        *o = if j == i { 0.0 } else { (-(dist[j] - min) * beta).exp() };
        z += *o;
    }
    let mut h = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        *o /= z;
        if j != i && *o > 0.0 {
            h -= *o * o.ln();
        }
    }
    h
}

/// Symmetrized joint affinities P with each row's perplexity matched by
/// binary search on the Gaussian precision.
pub fn joint_probabilities(x: &Matrix, perplexity: f64) -> Result<Matrix> {
    let n = x.rows();
    let d = squared_distances(x);
    let target = perplexity.ln();
    let mut cond = vec![0.0; n * n];
    for i in 0..n {
        let row = &d[i * n..(i + 1) * n];
        let out = &mut cond[i * n..(i + 1) * n];
        let (mut lo, mut hi, mut beta) = (0.0f64, f64::INFINITY, 1.0);
        let mut converged = false;
        for _ in 0..200 {
            let h = row_distribution(row, i, beta, out);
            let diff = h - target;
            if diff.abs() < PERPLEXITY_TOL {
                converged = true;
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        if !converged {
            log::warn!("t-SNE: perplexity search for point {i} did not converge");
        }
    }
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            p.set(i, j, ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12));
        }
        p.set(i, i, 0.0);
    }
    let total: f64 = p.as_slice().iter().sum();
    p.scale(1.0 / total);
    Ok(p)
}

/// KL(P‖Q) for the Student-t embedding `y` and its gradient, with P scaled
/// by `exaggeration` inside the gradient only.
pub fn kl_and_gradient(p: &Matrix, y: &Matrix, exaggeration: f64) -> (f64, Matrix) {
    let n = y.rows();
    let dims = y.cols();
    let mut w = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = y.row(i).iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = 1.0 / (1.0 + d2);
            w[i * n + j] = v;
            w[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    let mut kl = 0.0;
    let mut grad = Matrix::zeros(n, dims);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p.get(i, j);
            let q = (w[i * n + j] / z).max(1e-300);
            if pij > 0.0 {
                kl += pij * (pij / q).ln();
            }
            let m = 4.0 * (exaggeration * pij - q) * w[i * n + j];
            for k in 0..dims {
                let g = m * (y.get(i, k) - y.get(j, k));
                grad.as_mut_slice()[i * dims + k] += g;
            }
        }
    }
    (kl, grad)
}

pub fn tsne(x: &Matrix, cfg: &TsneConfig) -> Result<TsneResult> {
    let n = x.rows();
    if (n as f64) <= 3.0 * cfg.perplexity {
        return Err(Error::Domain(format!(
            "t-SNE needs more than 3·perplexity = {} points, got {n}",
            3.0 * cfg.perplexity
        )));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut x = x.clone();
    let d = squared_distances(&x);
    if (0..n).any(|i| (i + 1..n).any(|j| d[i * n + j] == 0.0)) {
        log::warn!("t-SNE: duplicate points; adding 1e-10 jitter");
        for v in x.as_mut_slice() {
            *v += 1e-10 * rng.normal();
        }
    }
    let p = joint_probabilities(&x, cfg.perplexity)?;
    let mut y = Matrix::from_vec(n, 2, (0..2 * n).map(|_| 1e-4 * rng.normal()).collect())?;
    let mut update = Matrix::zeros(n, 2);
    let mut gains = Matrix::filled(n, 2, 1.0);
    let mut kl_after = f64::NAN;
    for it in 0..cfg.iterations {
        let exaggerate = it < cfg.exaggeration_iters;
        let (_, grad) = kl_and_gradient(&p, &y, if exaggerate { cfg.early_exaggeration } else { 1.0 });
        let momentum = if it < cfg.exaggeration_iters { 0.5 } else { 0.8 };
        let g = grad.as_slice();
        let u = update.as_mut_slice();
        let gn = gains.as_mut_slice();
        for k in 0..g.len() {
            gn[k] = if (g[k] > 0.0) != (u[k] > 0.0) { gn[k] + 0.2 } else { (gn[k] * 0.8).max(0.01) };
            u[k] = momentum * u[k] - cfg.learning_rate * gn[k] * g[k];
        }
        y.add_assign(&update)?;
        for c in 0..2 {
            let mean = (0..n).map(|i| y.get(i, c)).sum::<f64>() / n as f64;
            for i in 0..n {
                y.set(i, c, y.get(i, c) - mean);
            }
        }
        if it + 1 == cfg.exaggeration_iters {
            kl_after = kl_and_gradient(&p, &y, 1.0).0;
        }
    }
    if !y.is_finite() {
        return Err(Error::Training {
            slot: "tsne".into(),
            reason: "non-finite coordinates".into(),
        });
    }
    let final_kl = kl_and_gradient(&p, &y, 1.0).0;
    Ok(TsneResult {
        coords: y,
        kl_after_exaggeration: kl_after,
        final_kl,
    })
}

/// `stay_id,x,y,label` rows.
pub fn tsne_csv(ids: &[u64], coords: &Matrix, labels: &[u8]) -> String {
    let mut s = String::from("stay_id,x,y,label\n");
    for (i, (id, l)) in ids.iter().zip(labels).enumerate() {
        s.push_str(&format!("{id},{},{},{l}\n", coords.get(i, 0), coords.get(i, 1)));
    }
    s
}

/// Self-contained scatter plot colored by label.
pub fn tsne_svg(coords: &Matrix, labels: &[u8], title: &str) -> String {
    let (w, h, pad) = (480.0, 480.0, 24.0);
    let xs: Vec<f64> = (0..coords.rows()).map(|i| coords.get(i, 0)).collect();
    let ys: Vec<f64> = (0..coords.rows()).map(|i| coords.get(i, 1)).collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, if hi > lo { hi - lo } else { 1.0 })
    };
    let ((x0, xr), (y0, yr)) = (range(&xs), range(&ys));
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <title>{}</title>\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        escape(title)
    );
    for (i, &l) in labels.iter().enumerate() {
        let cx = pad + (xs[i] - x0) / xr * (w - 2.0 * pad);
        let cy = h - pad - (ys[i] - y0) / yr * (h - 2.0 * pad);
        let color = if l == 1 { "#d62728" } else { "#1f77b4" };
        s.push_str(&format!("<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"2.5\" fill=\"{color}\" fill-opacity=\"0.7\"/>\n"));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
