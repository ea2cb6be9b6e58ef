use crate::{Error, Result};

/// Probability clamp used by [`binary_cross_entropy`].
pub const BCE_EPS: f64 = 1e-12;

/// Logistic function, evaluated on the branch that never overflows `exp`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn binary_cross_entropy(p: f64, y: u8) -> Result<f64> {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    match y {
        1 => Ok(-p.ln()),
        0 => Ok(-(1.0 - p).ln()),
        other => Err(Error::Domain(format!("label must be 0 or 1, got {other}"))),
    }
}

/// Numerically stable softmax of one row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// `-log softmax(logits)[target]` with max subtraction.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::Domain(format!(
            "target index {target} out of range for {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[target])
}
