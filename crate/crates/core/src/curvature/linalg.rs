//! Dense small-scale vectors and matrices in 64-bit floats.
//!
//! Everything here is immutable after construction and sized for parameter
//! dimensions up to a few hundred; no attempt is made at cache blocking or
//! sparsity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use rand::Rng;

/// Flat real vector. Holds parameters, displacements, gradients and rank-1
/// directions alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Builds a vector, rejecting NaN and infinities.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "vector entries",
            });
        }
        Ok(Vector(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    /// Standard basis vector e_i.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Vector(v)
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> f64) -> Self {
        Vector((0..dim).map(f).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn add(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector(self.0.iter().map(|a| a * s).collect())
    }

    /// self += s * other, in place. The one mutating helper; trainers own
    /// their parameter vector.
    pub fn axpy(&mut self, s: f64, other: &Vector) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += s * b;
        }
    }

    pub fn normalized(&self) -> Result<Vector> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidValue("cannot normalize a zero vector".into()));
        }
        Ok(self.scale(1.0 / n))
    }

    /// Unit vector with entries drawn from the stream keyed by `parts`.
    pub fn random_unit(dim: usize, parts: &[u64]) -> Vector {
        let mut rng = stream(parts);
        loop {
            let v = Vector::from_fn(dim, |_| rng.random::<f64>() * 2.0 - 1.0);
            let n = v.norm();
            if n > 1e-3 {
                return v.scale(1.0 / n);
            }
        }
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for Vector {
    /// Convenience for literals; panics on non-finite entries.
    fn from(v: Vec<f64>) -> Self {
        Vector::new(v).expect("finite entries")
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || rows * cols != data.len() {
            return Err(Error::InvalidValue(format!(
                "matrix shape {rows}x{cols} does not match {} entries",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "matrix entries",
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Outer product u vᵀ.
    pub fn outer(u: &Vector, v: &Vector) -> Self {
        Matrix::from_fn(u.dim(), v.dim(), |i, j| u[i] * v[j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn matvec(&self, v: &Vector) -> Result<Vector> {
        if v.dim() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: v.dim(),
            });
        }
        let out: Vec<f64> = self
            .data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v.as_slice()).map(|(a, b)| a * b).sum())
            .collect();
        Ok(Vector(out))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                got: other.rows * other.cols,
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    /// Largest |m_ij - m_ji| over all pairs.
    pub fn asymmetry(&self) -> f64 {
        debug_assert_eq!(self.rows, self.cols);
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// (M + Mᵀ)/2.
    pub fn symmetrized(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| {
            0.5 * (self.get(i, j) + self.get(j, i))
        })
    }

    /// Solves M x = b by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &Vector) -> Result<Vector> {
        if self.rows != self.cols {
            return Err(Error::InvalidValue("solve requires a square matrix".into()));
        }
        if b.dim() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: b.dim(),
            });
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut x: Vec<f64> = b.as_slice().to_vec();
        for col in 0..n {
            let mut pivot = col;
            for r in (col + 1)..n {
                if a[r * n + col].abs() > a[pivot * n + col].abs() {
                    pivot = r;
                }
            }
            if a[pivot * n + col].abs() < 1e-300 {
                return Err(Error::InvalidValue("singular matrix in solve".into()));
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                }
                x.swap(col, pivot);
            }
            let d = a[col * n + col];
            for r in (col + 1)..n {
                let f = a[r * n + col] / d;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
                x[r] -= f * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut acc = x[col];
            for j in (col + 1)..n {
                acc -= a[col * n + j] * x[j];
            }
            x[col] = acc / a[col * n + col];
        }
        Vector::new(x)
    }
}

/// Result of the power iteration in [`top_eigenpair`].
#[derive(Debug, Clone)]
pub struct TopEigen {
    pub value: f64,
    pub vector: Vector,
    /// False when the iteration budget ran out before meeting the tolerance.
    pub converged: bool,
    /// Set for the zero matrix, where any unit vector qualifies.
    pub degenerate: bool,
}

/// Power iteration for the dominant eigenpair of a symmetric PSD matrix.
///
/// Stops when ‖Mv - λv‖ ≤ tol·λ. The start vector comes from a fixed stream
/// so results are reproducible and no axis-aligned input can leave the start
/// orthogonal to the dominant eigenspace by construction.
pub fn top_eigenpair(m: &Matrix, iters: usize, tol: f64) -> Result<TopEigen> {
    if m.rows() != m.cols() {
        return Err(Error::InvalidValue(
            "top_eigenpair requires a square matrix".into(),
        ));
    }
    let n = m.rows();
    let mut v = Vector::random_unit(n, &[0xe16e]);
    if m.frobenius_norm() == 0.0 {
        return Ok(TopEigen {
            value: 0.0,
            vector: Vector::basis(n, 0),
            converged: true,
            degenerate: true,
        });
    }
    let mut lambda = 0.0;
    for _ in 0..iters {
        let mv = m.matvec(&v)?;
        let norm = mv.norm();
        if norm == 0.0 {
            // v landed in the null space; restart off-axis
            v = Vector::random_unit(n, &[0xe16e, 1]);
            continue;
        }
        v = mv.scale(1.0 / norm);
        let mv2 = m.matvec(&v)?;
        lambda = v.dot(&mv2);
        let resid = mv2.sub(&v.scale(lambda)).norm();
        if lambda > 0.0 && resid <= tol * lambda {
            return Ok(TopEigen {
                value: lambda,
                vector: v,
                converged: true,
                degenerate: false,
            });
        }
    }
    Ok(TopEigen {
        value: lambda,
        vector: v,
        converged: false,
        degenerate: false,
    })
}
