use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                op: "Matrix::from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::Dimension {
                    op: "Matrix::from_rows",
                    left: (rows.len(), cols),
                    right: (1, row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// A single-row matrix.
    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension {
                op: "add_assign",
                left: self.shape(),
                right: other.shape(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `x · Wᵀ + b` for a batch `x` (n × in), weights `W` (out × in) and bias `b`
/// (1 × out), broadcast over rows.
pub fn affine(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    if x.cols() != w.cols() {
        return Err(Error::Dimension {
            op: "affine (x, W)",
            left: x.shape(),
            right: w.shape(),
        });
    }
    if b.len() != w.rows() {
        return Err(Error::Dimension {
            op: "affine (W, b)",
            left: w.shape(),
            right: b.shape(),
        });
    }
    let (n, out) = (x.rows(), w.rows());
    let mut y = Matrix::zeros(n, out);
    for i in 0..n {
        let xi = x.row(i);
        let yi = y.row_mut(i);
        for (o, yo) in yi.iter_mut().enumerate() {
            *yo = b.as_slice()[o] + dot(w.row(o), xi);
        }
    }
    Ok(y)
}

/// Backward pass of [`affine`]: accumulates `dW += dyᵀ x`, `db += Σ_rows dy`
/// and returns `dx = dy · W`.
pub fn affine_backward(
    x: &Matrix,
    w: &Matrix,
    dy: &Matrix,
    dw: &mut Matrix,
    db: &mut Matrix,
) -> Result<Matrix> {
    if dy.shape() != (x.rows(), w.rows()) {
        return Err(Error::Dimension {
            op: "affine_backward (dy)",
            left: dy.shape(),
            right: (x.rows(), w.rows()),
        });
    }
    if dw.shape() != w.shape() || db.len() != w.rows() {
        return Err(Error::Dimension {
            op: "affine_backward (grad buffers)",
            left: dw.shape(),
            right: w.shape(),
        });
    }
    let mut dx = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let xi = x.row(i);
        for o in 0..w.rows() {
            let g = dy.get(i, o);
            if g == 0.0 {
                continue;
            }
            db.as_mut_slice()[o] += g;
            axpy(g, xi, dw.row_mut(o));
            axpy(g, w.row(o), dx.row_mut(i));
        }
    }
    Ok(dx)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a · x`
#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `out = W · x + b` for a single vector with row-major `W` of shape out × in.
#[inline]
pub(crate) fn matvec_bias(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (o, yo) in out.iter_mut().enumerate() {
        *yo = b[o] + dot(&w[o * n_in..(o + 1) * n_in], x);
    }
}

/// `out += Wᵀ · g` for row-major `W` of shape g.len() × out.len().
#[inline]
pub(crate) fn matvec_t_acc(w: &[f64], g: &[f64], out: &mut [f64]) {
    let n_in = out.len();
    for (o, &go) in g.iter().enumerate() {
        if go != 0.0 {
            axpy(go, &w[o * n_in..(o + 1) * n_in], out);
        }
    }
}

/// `dW += g ⊗ x` for row-major `dW` of shape g.len() × x.len().
#[inline]
pub(crate) fn outer_acc(g: &[f64], x: &[f64], dw: &mut [f64]) {
    let n_in = x.len();
    for (o, &go) in g.iter().enumerate() {
        if go != 0.0 {
            axpy(go, x, &mut dw[o * n_in..(o + 1) * n_in]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    fn naive_affine(x: &Matrix, w: &Matrix, b: &Matrix) -> Matrix {
        let mut y = Matrix::zeros(x.rows(), w.rows());
        for i in 0..x.rows() {
            for o in 0..w.rows() {
                let mut s = 0.0;
                for k in 0..x.cols() {
                    s += x.get(i, k) * w.get(o, k);
                }
                y.set(i, o, s + b.get(0, o));
            }
        }
        y
    }

    fn random(rng: &mut Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.uniform_range(-1.0, 1.0)).collect())
            .unwrap()
    }

    #[test]
    fn affine_zero_and_identity() {
        let x = Matrix::row_vector(&[1.0, 2.0]);
        let y = affine(&x, &Matrix::zeros(2, 2), &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 0.0]);
        let x = Matrix::row_vector(&[1.0, 0.0]);
        let y = affine(&x, &Matrix::identity(2), &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn affine_matches_triple_loop() {
        let mut rng = Rng::new(11);
        for _ in 0..5 {
            let x = random(&mut rng, 3, 4);
            let w = random(&mut rng, 5, 4);
            let b = random(&mut rng, 1, 5);
            let fast = affine(&x, &w, &b).unwrap();
            let slow = naive_affine(&x, &w, &b);
            for (a, e) in fast.as_slice().iter().zip(slow.as_slice()) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let err = affine(&Matrix::zeros(1, 3), &Matrix::zeros(2, 2), &Matrix::zeros(1, 2))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(1, 3)") && msg.contains("(2, 2)"), "{msg}");
    }

    #[test]
    fn affine_backward_matches_finite_differences() {
        let mut rng = Rng::new(3);
        let x = random(&mut rng, 3, 4);
        let w = random(&mut rng, 2, 4);
        let b = random(&mut rng, 1, 2);
        let dy = random(&mut rng, 3, 2);
        let loss = |w: &Matrix, b: &Matrix| -> f64 {
            let y = affine(&x, w, b).unwrap();
            y.as_slice().iter().zip(dy.as_slice()).map(|(a, g)| a * g).sum()
        };
        let mut dw = Matrix::zeros(2, 4);
        let mut db = Matrix::zeros(1, 2);
        affine_backward(&x, &w, &dy, &mut dw, &mut db).unwrap();
        let eps = 1e-6;
        for k in 0..w.len() {
            let mut wp = w.clone();
            wp.as_mut_slice()[k] += eps;
            let mut wm = w.clone();
            wm.as_mut_slice()[k] -= eps;
            let num = (loss(&wp, &b) - loss(&wm, &b)) / (2.0 * eps);
            assert!((num - dw.as_slice()[k]).abs() < 1e-8);
        }
        for k in 0..2 {
            let expected: f64 = (0..3).map(|i| dy.get(i, k)).sum();
            assert!((db.as_slice()[k] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_dimension_error() {
        assert!(Matrix::zeros(2, 3).matmul(&Matrix::zeros(2, 3)).is_err());
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let p = a.matmul(&Matrix::identity(2)).unwrap();
        assert_eq!(p, a);
        assert_eq!(a.transpose().get(0, 1), 3.0);
    }
}
