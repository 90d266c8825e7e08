//! Small dense linear algebra used by the model, the certifier and the trainer.
//!
//! Matrices here are tiny (a few dozen rows at most), so everything is a
//! straightforward row-major loop over `f64`. No BLAS.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
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

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from a row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                operand: "matrix buffer".into(),
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. All rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Dimension {
                    operand: format!("matrix row {r}"),
                    expected: cols,
                    found: row.len(),
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `out = self * x`
    #[inline]
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(r), x);
        }
    }

    /// `out += self * x`
    #[inline]
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(r), x);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        out
    }

    /// `out += selfᵀ * x`
    #[inline]
    pub fn matvec_t_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += a * xr;
            }
        }
    }

    /// `self += alpha * a bᵀ`
    #[inline]
    pub fn add_outer(&mut self, alpha: f64, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        let cols = self.cols;
        for (r, &ar) in a.iter().enumerate() {
            let s = alpha * ar;
            if s == 0.0 {
                continue;
            }
            for (x, &bc) in self.data[r * cols..(r + 1) * cols].iter_mut().zip(b) {
                *x += s * bc;
            }
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension {
                operand: "matmul inner dimension".into(),
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Gram matrix `selfᵀ self`.
    pub fn gram(&self) -> Matrix {
        let n = self.cols;
        let mut g = Matrix::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let a = row[i];
                if a == 0.0 {
                    continue;
                }
                for j in i..n {
                    g[(i, j)] += a * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g[(i, j)] = g[(j, i)];
            }
        }
        g
    }

    /// Induced ∞-norm: max absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Matrix::from_rows(&rows).map_err(D::Error::custom)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[inline]
pub fn inf_norm_vec(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Induced ∞-norm of the horizontal concatenation `[W U b]`.
pub fn inf_norm_augmented(w: &Matrix, u: &Matrix, b: &[f64]) -> Result<f64> {
    Ok(augmented_row_argmax(w, u, b)?.1)
}

/// Returns `(row index, row abs-sum)` of the row of `[W U b]` attaining the
/// ∞-norm. Ties resolve to the lowest row index.
pub fn augmented_row_argmax(w: &Matrix, u: &Matrix, b: &[f64]) -> Result<(usize, f64)> {
    if u.rows() != w.rows() {
        return Err(Error::Dimension {
            operand: "U rows (augmented norm)".into(),
            expected: w.rows(),
            found: u.rows(),
        });
    }
    if b.len() != w.rows() {
        return Err(Error::Dimension {
            operand: "b length (augmented norm)".into(),
            expected: w.rows(),
            found: b.len(),
        });
    }
    let mut best = (0, 0.0);
    for r in 0..w.rows() {
        let s = w.row(r).iter().map(|x| x.abs()).sum::<f64>()
            + u.row(r).iter().map(|x| x.abs()).sum::<f64>()
            + b[r].abs();
        if s > best.1 {
            best = (r, s);
        }
    }
    Ok(best)
}

/// Largest singular value together with its left and right singular vectors.
#[derive(Debug, Clone)]
pub struct SingularTriple {
    pub sigma: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 10_000;
const SVD_FALLBACK_DIM: usize = 64;

/// Largest singular value of `m`.
pub fn spectral_norm(m: &Matrix) -> f64 {
    top_singular(m).sigma
}

/// Top singular triple of `m` via power iteration on `mᵀm`.
///
/// Falls back to a Jacobi eigendecomposition of the Gram matrix when the
/// iteration stalls (close top singular values) and the matrix is small.
pub fn top_singular(m: &Matrix) -> SingularTriple {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 || m.as_slice().iter().all(|&x| x == 0.0) {
        let mut v = vec![0.0; cols];
        if let Some(v0) = v.first_mut() {
            *v0 = 1.0;
        }
        return SingularTriple {
            sigma: 0.0,
            u: vec![0.0; rows],
            v,
        };
    }
    let gram = m.gram();
    match power_iteration(&gram) {
        Some(v) => finish_triple(m, v),
        None if rows.max(cols) <= SVD_FALLBACK_DIM => {
            let v = jacobi_top_eigvec(&gram);
            finish_triple(m, v)
        }
        None => {
            // Large and not converged: take the last iterate anyway.
            let v = power_iteration_unchecked(&gram);
            finish_triple(m, v)
        }
    }
}

fn start_vector(n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|j| 1.0 + 0.1 * (j as f64 + 1.0) / n as f64).collect();
    normalize(&mut v);
    v
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = norm2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn power_iteration(gram: &Matrix) -> Option<Vec<f64>> {
    let n = gram.rows();
    let mut v = start_vector(n);
    let mut next = vec![0.0; n];
    for _ in 0..POWER_MAX_ITER {
        gram.matvec_into(&v, &mut next);
        // Rayleigh quotient and eigen-residual ‖Gv − ρv‖ at the current iterate
        let rho = dot(&v, &next);
        if rho <= 0.0 {
            return None;
        }
        let resid = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (b - rho * a) * (b - rho * a))
            .sum::<f64>()
            .sqrt();
        if resid <= POWER_TOL * rho {
            return Some(v);
        }
        normalize(&mut next);
        std::mem::swap(&mut v, &mut next);
    }
    None
}

fn power_iteration_unchecked(gram: &Matrix) -> Vec<f64> {
    let n = gram.rows();
    let mut v = start_vector(n);
    let mut next = vec![0.0; n];
    for _ in 0..POWER_MAX_ITER {
        gram.matvec_into(&v, &mut next);
        normalize(&mut next);
        std::mem::swap(&mut v, &mut next);
    }
    v
}

fn finish_triple(m: &Matrix, v: Vec<f64>) -> SingularTriple {
    let mut u = m.matvec(&v);
    let sigma = normalize(&mut u);
    SingularTriple { sigma, u, v }
}

/// Eigenvector of the largest eigenvalue of a symmetric matrix (cyclic Jacobi).
fn jacobi_top_eigvec(sym: &Matrix) -> Vec<f64> {
    let n = sym.rows();
    let mut a = sym.clone();
    let mut vecs = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let scale: f64 = a.as_slice().iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = vecs[(k, p)];
                    let vkq = vecs[(k, q)];
                    vecs[(k, p)] = c * vkp - s * vkq;
                    vecs[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let top = (0..n)
        .max_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]))
        .unwrap_or(0);
    let mut v: Vec<f64> = (0..n).map(|k| vecs[(k, top)]).collect();
    normalize(&mut v);
    v
}

/// Solves `a x = b` for square `a` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Dimension {
            operand: "solve: square system".into(),
            expected: n,
            found: a.cols(),
        });
    }
    if b.rows() != n {
        return Err(Error::Dimension {
            operand: "solve: right-hand side rows".into(),
            expected: n,
            found: b.rows(),
        });
    }
    let mut a = a.clone();
    let mut x = b.clone();
    let m = x.cols();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .unwrap_or(col);
        if a[(pivot, col)].abs() < 1e-300 {
            return Err(Error::Singular);
        }
        if pivot != col {
            for k in 0..n {
                a.data.swap(pivot * n + k, col * n + k);
            }
            for k in 0..m {
                x.data.swap(pivot * m + k, col * m + k);
            }
        }
        let d = a[(col, col)];
        for r in (col + 1)..n {
            let f = a[(r, col)] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[(r, k)] -= f * a[(col, k)];
            }
            for k in 0..m {
                x[(r, k)] -= f * x[(col, k)];
            }
        }
    }
    for col in (0..n).rev() {
        let d = a[(col, col)];
        for k in 0..m {
            let mut s = x[(col, k)];
            for j in (col + 1)..n {
                s -= a[(col, j)] * x[(j, k)];
            }
            x[(col, k)] = s / d;
        }
    }
    Ok(x)
}

/// Moduli of the eigenvalues of a real 2×2 matrix.
pub fn eig2_moduli(a: f64, b: f64, c: f64, d: f64) -> [f64; 2] {
    let tr = a + d;
    let det = a * d - b * c;
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [(tr / 2.0 + s).abs(), (tr / 2.0 - s).abs()]
    } else {
        // complex pair, |λ|² = det
        let m = det.sqrt();
        [m, m]
    }
}
