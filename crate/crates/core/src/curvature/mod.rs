//! Curvature representations and their algebra.
//!
//! A curvature is a symmetric PSD operator stored either densely, as a
//! diagonal, or as a rank-1 outer product ρ u uᵀ. The rank-1 form is the
//! cheap Fisher surrogate the rest of the crate leans on; its key property
//! is that squaring keeps the representation closed: (ρuuᵀ)² = ρ²uuᵀ.

pub mod linalg;

pub use linalg::{top_eigenpair, Matrix, TopEigen, Vector};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense representations are only allowed up to this parameter dimension.
pub const DENSE_DIM_CAP: usize = 512;

/// Asymmetry above this triggers a warning when constructing a full
/// curvature; the input is symmetrized either way.
const SYMMETRY_WARN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Curvature {
    Full(Matrix),
    Diagonal(Vector),
    RankOne { rho: f64, u: Vector },
}

impl Curvature {
    /// Full curvature from a square matrix. The input is symmetrized as
    /// (M + Mᵀ)/2; finite-difference Hessians are slightly asymmetric and a
    /// warning is logged when the asymmetry exceeds 1e-8.
    pub fn full(m: Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::InvalidValue(
                "full curvature requires a square matrix".into(),
            ));
        }
        if m.rows() > DENSE_DIM_CAP {
            return Err(Error::DimensionCap {
                dim: m.rows(),
                cap: DENSE_DIM_CAP,
            });
        }
        let asym = m.asymmetry();
        if asym > SYMMETRY_WARN_TOL {
            log::warn!("symmetrizing curvature with asymmetry {asym:.3e}");
        }
        Ok(Curvature::Full(m.symmetrized()))
    }

    /// Diagonal curvature; entries must be nonnegative.
    pub fn diagonal(v: Vector) -> Result<Self> {
        if v.as_slice().iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidValue(
                "diagonal curvature entries must be >= 0".into(),
            ));
        }
        Ok(Curvature::Diagonal(v))
    }

    /// Rank-1 curvature ρ u uᵀ. The direction is normalized here; ρ = 0 is
    /// legal and acts as the zero operator.
    pub fn rank_one(rho: f64, u: Vector) -> Result<Self> {
        if rho.is_nan() || !rho.is_finite() || rho < 0.0 {
            return Err(Error::InvalidValue(format!(
                "rank-one rho must be finite and >= 0, got {rho}"
            )));
        }
        let u = u.normalized()?;
        Ok(Curvature::RankOne { rho, u })
    }

    pub fn dim(&self) -> usize {
        match self {
            Curvature::Full(m) => m.rows(),
            Curvature::Diagonal(v) => v.dim(),
            Curvature::RankOne { u, .. } => u.dim(),
        }
    }

    fn check_dim(&self, d: &Vector) -> Result<()> {
        if d.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: d.dim(),
            });
        }
        Ok(())
    }

    /// F·d for the represented operator.
    pub fn apply(&self, d: &Vector) -> Result<Vector> {
        self.check_dim(d)?;
        Ok(match self {
            Curvature::Full(m) => m.matvec(d)?,
            Curvature::Diagonal(v) => Vector::from_fn(d.dim(), |i| v[i] * d[i]),
            Curvature::RankOne { rho, u } => u.scale(rho * u.dot(d)),
        })
    }

    /// Representation of F². Rank-1 stays rank-1 with ρ → ρ²; the direction
    /// is untouched.
    pub fn square(&self) -> Curvature {
        match self {
            Curvature::Full(m) => Curvature::Full(m.matmul(m).expect("square matrix")),
            Curvature::Diagonal(v) => {
                Curvature::Diagonal(Vector::from_fn(v.dim(), |i| v[i] * v[i]))
            }
            Curvature::RankOne { rho, u } => Curvature::RankOne {
                rho: rho * rho,
                u: u.clone(),
            },
        }
    }

    /// dᵀ F d. Nonnegative for PSD representations.
    pub fn quadratic_form(&self, d: &Vector) -> Result<f64> {
        self.check_dim(d)?;
        Ok(match self {
            Curvature::Full(m) => d.dot(&m.matvec(d)?),
            Curvature::Diagonal(v) => d
                .as_slice()
                .iter()
                .zip(v.as_slice())
                .map(|(x, w)| w * x * x)
                .sum(),
            Curvature::RankOne { rho, u } => {
                let s = u.dot(d);
                rho * s * s
            }
        })
    }

    /// Densifies the operator; subject to the same dimension cap as full
    /// construction.
    pub fn to_matrix(&self) -> Result<Matrix> {
        if self.dim() > DENSE_DIM_CAP {
            return Err(Error::DimensionCap {
                dim: self.dim(),
                cap: DENSE_DIM_CAP,
            });
        }
        Ok(match self {
            Curvature::Full(m) => m.clone(),
            Curvature::Diagonal(v) => {
                Matrix::from_fn(v.dim(), v.dim(), |i, j| if i == j { v[i] } else { 0.0 })
            }
            Curvature::RankOne { rho, u } => Matrix::outer(u, u).scale(*rho),
        })
    }
}
