//! Dense symmetric-matrix kernels shared by the estimators and the simulator.
//!
//! Storage is a column-major [`nalgebra::DMatrix`]. [`SymMatrix`] only hands out
//! shared references to its storage, and every constructor symmetrizes, so
//! `m[(i, j)] == m[(j, i)]` holds bit-for-bit.

use std::fmt;
use std::ops::{Add, Index, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Maximum QR sweeps handed to the symmetric eigen solver.
const EIGEN_MAX_ITER: usize = 10_000;

#[derive(Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn zeros(p: usize) -> Self {
        assert!(p >= 1, "dimension must be positive");
        SymMatrix(DMatrix::zeros(p, p))
    }

    pub fn identity(p: usize) -> Self {
        assert!(p >= 1, "dimension must be positive");
        SymMatrix(DMatrix::identity(p, p))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        assert!(!diag.is_empty(), "dimension must be positive");
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Builds the matrix from `f(i, j)` evaluated on the upper triangle only.
    pub fn from_upper_fn(p: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(p);
        for j in 0..p {
            for i in 0..=j {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Wraps a square matrix after replacing it with `(A + Aᵀ) / 2`.
    pub fn symmetrized(a: DMatrix<f64>) -> Self {
        assert!(a.is_square(), "matrix must be square");
        assert!(a.nrows() >= 1, "dimension must be positive");
        let mut a = a;
        let p = a.nrows();
        for j in 0..p {
            for i in 0..j {
                let v = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        SymMatrix(a)
    }

    /// Accepts a square matrix only if it is exactly symmetric.
    pub fn try_from_matrix(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::arg(format!(
                "expected a non-empty square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let p = a.nrows();
        for j in 0..p {
            for i in 0..j {
                if a[(i, j)] != a[(j, i)] {
                    return Err(Error::arg(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(SymMatrix(a))
    }

    pub fn try_from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::arg("rows do not form a square matrix"));
        }
        Self::try_from_matrix(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Sets entries `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.0[(i, j)] = v;
        self.0[(j, i)] = v;
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    pub fn max_abs_off_diagonal(&self) -> f64 {
        let p = self.dim();
        let mut best = 0.0f64;
        for j in 0..p {
            for i in 0..j {
                best = best.max(self.0[(i, j)].abs());
            }
        }
        best
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scale(&self, c: f64) -> Self {
        SymMatrix(&self.0 * c)
    }

    /// Frobenius inner product `tr(A Bᵀ)`.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        self.0.dot(&other.0)
    }

    /// Upper-triangle entries (i < j) with `|m_ij| > threshold`.
    pub fn off_diagonal_support(&self, threshold: f64) -> Vec<(usize, usize)> {
        let p = self.dim();
        let mut out = Vec::new();
        for i in 0..p {
            for j in (i + 1)..p {
                if self.0[(i, j)].abs() > threshold {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn count_nonzero_upper(&self) -> usize {
        self.off_diagonal_support(0.0).len()
    }

    /// Relabels variables: `out[π(i)][π(j)] = self[i][j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let p = self.dim();
        assert_eq!(perm.len(), p);
        let mut out = DMatrix::zeros(p, p);
        for j in 0..p {
            for i in 0..p {
                out[(perm[i], perm[j])] = self.0[(i, j)];
            }
        }
        SymMatrix(out)
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &rhs.0)
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &rhs.0)
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMatrix{}", self.0)
    }
}

/// n×p observation matrix; rows are observations.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 observations, got {}",
                values.nrows()
            )));
        }
        if values.ncols() < 1 {
            return Err(Error::InvalidData("need at least one variable".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::InvalidData(format!(
                "non-finite value at row {}, column {}",
                row + 1,
                col + 1
            )));
        }
        Ok(DataMatrix { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidData("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Copy with every column shifted to mean zero.
    pub fn centered(&self) -> DMatrix<f64> {
        let mut x = self.values.clone();
        for mut col in x.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        x
    }

    /// Column permutation: variable `j` becomes variable `perm[j]`.
    pub fn permuted_columns(&self, perm: &[usize]) -> Self {
        let mut out = DMatrix::zeros(self.n(), self.p());
        for (j, &pj) in perm.iter().enumerate() {
            out.set_column(pj, &self.values.column(j));
        }
        DataMatrix { values: out }
    }
}

/// `(1/n) X̃ᵀX̃`, with `X̃` column-centered when `center` is set.
pub fn sample_covariance(x: &DataMatrix, center: bool) -> SymMatrix {
    let xc = if center {
        x.centered()
    } else {
        x.values().clone()
    };
    let s = xc.tr_mul(&xc) / x.n() as f64;
    SymMatrix::symmetrized(s)
}

#[derive(Clone, Debug)]
pub struct SymEigen {
    /// Ascending.
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors in columns, matching `values`.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// `V diag(f(w)) Vᵀ`, symmetrized.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[k]);
        }
        SymMatrix::symmetrized(scaled * self.vectors.transpose())
    }
}

pub fn sym_eigen(m: &SymMatrix) -> Result<SymEigen> {
    let eig = nalgebra::SymmetricEigen::try_new(m.0.clone(), f64::EPSILON, EIGEN_MAX_ITER).ok_or(
        Error::NoConvergence {
            what: "symmetric eigendecomposition",
            iterations: EIGEN_MAX_ITER,
        },
    )?;
    let p = m.dim();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(p, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEigen { values, vectors })
}

/// Lower-triangular `L` with `L Lᵀ = M`; fails iff `M` is not positive definite.
pub fn cholesky(m: &SymMatrix) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(m.0.clone())
        .map(|c| c.unpack())
        .ok_or(Error::NotPositiveDefinite)
}

pub fn is_positive_definite(m: &SymMatrix) -> bool {
    nalgebra::Cholesky::new(m.0.clone()).is_some()
}

pub fn invert_spd(m: &SymMatrix) -> Result<SymMatrix> {
    let chol = nalgebra::Cholesky::new(m.0.clone()).ok_or(Error::NotPositiveDefinite)?;
    Ok(SymMatrix::symmetrized(chol.inverse()))
}

/// `log det M` from the Cholesky diagonal.
pub fn log_det_spd(m: &SymMatrix) -> Result<f64> {
    let l = cholesky(m)?;
    Ok(2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Entry-wise `sign(m)·max(|m| − t, 0)`; the diagonal is copied through when
/// `skip_diagonal` is set.
pub fn soft_threshold(m: &SymMatrix, t: f64, skip_diagonal: bool) -> Result<SymMatrix> {
    if !(t >= 0.0) {
        return Err(Error::arg(format!("threshold must be nonnegative, got {t}")));
    }
    let p = m.dim();
    let mut out = m.0.clone();
    for j in 0..p {
        for i in 0..p {
            if skip_diagonal && i == j {
                continue;
            }
            out[(i, j)] = shrink(out[(i, j)], t);
        }
    }
    Ok(SymMatrix(out))
}

#[inline]
pub(crate) fn shrink(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}
