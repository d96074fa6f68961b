//! Dense symmetric matrix kernels.
//!
//! Every spectral operation here (square roots, norms, cone classification,
//! the Sylvester solver) goes through one symmetric eigendecomposition. The
//! matrices involved are small (m up to ~20), so robustness is preferred
//! over speed.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Absolute plus relative tolerance used to decide positivity of a matrix.
///
/// The effective threshold for a matrix `M` is `abs + rel * ‖M‖_op`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-12,
            rel: 1e-10,
        }
    }
}

impl Tolerance {
    pub fn threshold(&self, operator_norm: f64) -> f64 {
        self.abs + self.rel * operator_norm
    }

    pub fn for_matrix(&self, m: &SymMatrix) -> f64 {
        self.threshold(m.norms().operator)
    }
}

/// A real symmetric `m × m` matrix.
///
/// Construction always symmetrizes via `(M + Mᵀ)/2`, so symmetry holds
/// exactly for every value of this type.
#[derive(Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Symmetrizes an arbitrary square matrix.
    ///
    /// Panics if `m` is not square or is empty.
    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "symmetric matrix must be square");
        assert!(m.nrows() >= 1, "symmetric matrix must have dim >= 1");
        let mut s = m;
        let n = s.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        SymMatrix(s)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Domain("matrix must have at least one row".into()));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::Domain(format!(
                "row {bad} has {} entries, expected {n}",
                rows[bad].len()
            )));
        }
        Ok(Self::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j])))
    }

    /// Builds a matrix from its row-major upper triangle.
    pub fn from_upper_triangle(dim: usize, upper: &[f64]) -> Result<Self> {
        if upper.len() != dim * (dim + 1) / 2 {
            return Err(Error::Domain(format!(
                "expected {} upper-triangle entries for dim {dim}, got {}",
                dim * (dim + 1) / 2,
                upper.len()
            )));
        }
        let mut m = DMatrix::zeros(dim, dim);
        let mut k = 0;
        for i in 0..dim {
            for j in i..dim {
                m[(i, j)] = upper[k];
                m[(j, i)] = upper[k];
                k += 1;
            }
        }
        Ok(SymMatrix(m))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1);
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1);
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        Self::identity(dim) * value
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        assert!(!diag.is_empty());
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// `V · diag(values) · Vᵀ`.
    pub fn from_eigen(values: &DVector<f64>, vectors: &DMatrix<f64>) -> Self {
        let scaled = vectors * DMatrix::from_diagonal(values);
        Self::from_matrix(scaled * vectors.transpose())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal().iter().copied().collect()
    }

    /// Symmetric eigendecomposition; eigenvalues in ascending order with
    /// matching eigenvector columns.
    pub fn eigen(&self) -> Eigen {
        Eigen::of(&self.0)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().values.iter().copied().collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().values[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        let e = self.eigen();
        e.values[e.values.len() - 1]
    }

    /// `(A·B + B·A)/2`, the symmetrized product.
    pub fn jordan(&self, other: &SymMatrix) -> SymMatrix {
        let ab = &self.0 * &other.0;
        Self::from_matrix(&ab + ab.transpose()) * 0.5
    }

    /// `B·A·B` for symmetric `B = self`.
    pub fn sandwich(&self, inner: &SymMatrix) -> SymMatrix {
        Self::from_matrix(&self.0 * &inner.0 * &self.0)
    }

    /// `Tr(A·B)`.
    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        self.0.component_mul(&other.0).sum()
    }

    /// `Q·M·Qᵀ` for an arbitrary (typically orthogonal) `Q`.
    pub fn conjugate(&self, q: &DMatrix<f64>) -> SymMatrix {
        Self::from_matrix(q * &self.0 * q.transpose())
    }

    pub fn inverse(&self) -> Result<SymMatrix> {
        let e = self.eigen();
        if e.values.iter().any(|&v| v.abs() <= f64::MIN_POSITIVE) {
            return Err(Error::Domain("matrix is singular".into()));
        }
        Ok(SymMatrix::from_eigen(
            &e.values.map(|v| 1.0 / v),
            &e.vectors,
        ))
    }

    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let e = self.eigen();
        SymMatrix::from_eigen(&e.values.map(f), &e.vectors)
    }

    /// Largest absolute entry difference.
    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        (&self.0 - &other.0).amax()
    }

    pub fn frobenius(&self) -> f64 {
        self.0.norm()
    }

    pub fn norms(&self) -> Norms {
        norms(self)
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("SymMatrix").field(&self.to_rows()).finish()
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        SymMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &rhs.0)
    }
}

impl Add for SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: SymMatrix) -> SymMatrix {
        SymMatrix(self.0 + rhs.0)
    }
}

impl Sub for SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: SymMatrix) -> SymMatrix {
        SymMatrix(self.0 - rhs.0)
    }
}

impl Mul<f64> for SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        SymMatrix(self.0 * rhs)
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        SymMatrix(&self.0 * rhs)
    }
}

impl Neg for SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        SymMatrix(-self.0)
    }
}

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl Eigen {
    pub(crate) fn of(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        if n == 1 {
            return Eigen {
                values: DVector::from_element(1, m[(0, 0)]),
                vectors: DMatrix::identity(1, 1),
            };
        }
        let SymmetricEigen {
            eigenvalues,
            eigenvectors,
        } = SymmetricEigen::new(m.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eigenvalues[i]));
        let vectors = DMatrix::from_fn(n, n, |r, c| eigenvectors[(r, order[c])]);
        Eigen { values, vectors }
    }
}

/// Position of a symmetric matrix relative to the positive cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpdClass {
    PositiveDefinite,
    PositiveSemidefinite,
    Indefinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdCone {
    pub class: SpdClass,
    pub min_eigenvalue: f64,
}

/// Classifies `m` against an absolute tolerance on its smallest eigenvalue.
pub fn classify_spd(m: &SymMatrix, tol: f64) -> SpdCone {
    debug_assert!(tol >= 0.0);
    let min_eigenvalue = m.min_eigenvalue();
    let class = if min_eigenvalue > tol {
        SpdClass::PositiveDefinite
    } else if min_eigenvalue.abs() <= tol {
        SpdClass::PositiveSemidefinite
    } else {
        SpdClass::Indefinite
    };
    SpdCone {
        class,
        min_eigenvalue,
    }
}

/// Same as [`classify_spd`] but with a tolerance scaled to `‖m‖_op`.
pub fn classify_spd_relative(m: &SymMatrix, tol: Tolerance) -> SpdCone {
    let e = m.eigen();
    let op = e.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    classify_spd(m, tol.threshold(op))
}

/// Principal square root of a positive semidefinite matrix.
///
/// Negative eigenvalues within tolerance are clamped to zero; this is the
/// only place clamping happens silently.
pub fn sqrt_spd(m: &SymMatrix) -> Result<SymMatrix> {
    sqrt_spd_with(m, Tolerance::default())
}

pub fn sqrt_spd_with(m: &SymMatrix, tol: Tolerance) -> Result<SymMatrix> {
    let e = m.eigen();
    let op = e.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = e.values[0];
    if min < -tol.threshold(op) {
        return Err(Error::IndefiniteInput {
            min_eigenvalue: min,
        });
    }
    Ok(SymMatrix::from_eigen(
        &e.values.map(|v| v.max(0.0).sqrt()),
        &e.vectors,
    ))
}

/// Solves `A·X + X·A = B` for symmetric `X`, `A` strictly positive definite.
///
/// In the eigenbasis of `A = P·D·Pᵀ` the equation decouples entrywise:
/// `X̃_ij = B̃_ij / (d_i + d_j)` with `B̃ = Pᵀ·B·P`.
pub fn solve_sylvester(a: &SymMatrix, b: &SymMatrix) -> Result<SymMatrix> {
    solve_sylvester_with(a, b, Tolerance::default())
}

pub fn solve_sylvester_with(a: &SymMatrix, b: &SymMatrix, tol: Tolerance) -> Result<SymMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::Domain(format!(
            "Sylvester operands have dims {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let e = a.eigen();
    let op = e.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let min_sum = 2.0 * e.values[0];
    if min_sum <= tol.threshold(op) {
        return Err(Error::SingularPencil { min_sum });
    }
    Ok(sylvester_in_basis(&e, b))
}

/// Sylvester solve given an already computed eigendecomposition of `A`.
pub(crate) fn sylvester_in_basis(e: &Eigen, b: &SymMatrix) -> SymMatrix {
    let p = &e.vectors;
    let mut bt = p.transpose() * b.as_matrix() * p;
    let n = bt.nrows();
    for i in 0..n {
        for j in 0..n {
            bt[(i, j)] /= e.values[i] + e.values[j];
        }
    }
    SymMatrix::from_matrix(p * bt * p.transpose())
}

/// Trace (nuclear), Frobenius and operator norms of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub trace_norm: f64,
    pub frobenius: f64,
    pub operator: f64,
}

pub fn norms(m: &SymMatrix) -> Norms {
    let e = m.eigen();
    let abs = e.values.map(f64::abs);
    Norms {
        trace_norm: abs.sum(),
        frobenius: abs.iter().map(|v| v * v).sum::<f64>().sqrt(),
        operator: abs.max(),
    }
}
