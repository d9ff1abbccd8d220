//! Dense symmetric linear algebra with explicit failure modes.
//!
//! Everything downstream works with covariance-like matrices: symmetric,
//! ideally PSD, at most a few hundred rows. This module wraps the dense
//! routines we need (eigendecomposition, PSD square root, SPD solves) and
//! turns silent numerical trouble into typed errors carrying the offending
//! quantity. Matrices are kept exactly symmetric by construction so that
//! identities like `tr(AB) = tr(BA)` and eigenvector orthogonality hold to
//! roundoff instead of drifting.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Relative clamping tolerance used by [`psd_sqrt`]: eigenvalues in
/// `[-tol * lambda_max, 0)` are treated as roundoff and clamped to zero,
/// anything below is a genuine PSD violation.
pub const PSD_CLAMP_TOL: f64 = 1e-10;

/// Relative residual accepted by [`solve_spd`] before it declares the
/// system unsolvable.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

/// A square matrix that is symmetric by construction.
///
/// `new` symmetrizes its input as `(m + m^T) / 2`, so the invariant cannot
/// be broken by accumulated roundoff in the caller. Read access to the
/// underlying [`DMatrix`] goes through `Deref`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Symmetrizes `m`. Errors if `m` is not square.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::ShapeMismatch {
                expected: "square matrix".into(),
                got: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        let mut s = m;
        symmetrize_in_place(&mut s);
        Ok(SymMatrix(s))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &DVector<f64>) -> Self {
        SymMatrix(DMatrix::from_diagonal(d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `self + c * I`, useful for ridge terms.
    pub fn add_scaled_identity(&self, c: f64) -> SymMatrix {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += c;
        }
        SymMatrix(m)
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix(&self.0 * c)
    }
}

impl std::ops::Deref for SymMatrix {
    type Target = DMatrix<f64>;
    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending,
/// `eigenvectors` holding the matching orthonormal columns.
#[derive(Debug, Clone)]
pub struct SpectralDecomp {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomp {
    /// `U diag(lambda) U^T`, symmetrized.
    pub fn reconstruct(&self) -> SymMatrix {
        let scaled = &self.eigenvectors * DMatrix::from_diagonal(&self.eigenvalues);
        let mut m = scaled * self.eigenvectors.transpose();
        symmetrize_in_place(&mut m);
        SymMatrix(m)
    }

    /// Applies `f` to each eigenvalue and reassembles `U diag(f(lambda)) U^T`.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let mapped = self.eigenvalues.map(f);
        let scaled = &self.eigenvectors * DMatrix::from_diagonal(&mapped);
        let mut m = scaled * self.eigenvectors.transpose();
        symmetrize_in_place(&mut m);
        SymMatrix(m)
    }
}

/// Full eigendecomposition of `m`, eigenvalues descending.
pub fn sym_eig(m: &SymMatrix) -> Result<SpectralDecomp> {
    let n = m.dim();
    if n == 0 {
        return Ok(SpectralDecomp {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let max_iter = 1000.max(50 * n);
    let eig = nalgebra::SymmetricEigen::try_new(m.0.clone(), f64::EPSILON, max_iter)
        .ok_or(Error::NoConvergence { dim: n })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("symmetric eigenvalues are finite")
    });

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SpectralDecomp {
        eigenvalues,
        eigenvectors,
    })
}

/// Symmetric PSD square root with the default clamping tolerance.
///
/// Eigenvalues slightly negative from roundoff (within `PSD_CLAMP_TOL`
/// relative to the largest eigenvalue magnitude) are clamped to zero;
/// anything more negative is an error naming the offending eigenvalue.
pub fn psd_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    psd_sqrt_with(m, PSD_CLAMP_TOL)
}

/// [`psd_sqrt`] with an explicit relative clamping tolerance.
pub fn psd_sqrt_with(m: &SymMatrix, clamp_tol: f64) -> Result<SymMatrix> {
    let eig = sym_eig(m)?;
    let lam_max = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let tol_abs = clamp_tol * lam_max;
    let min_eig = if eig.eigenvalues.is_empty() {
        0.0
    } else {
        eig.eigenvalues[eig.eigenvalues.len() - 1]
    };
    if min_eig < -tol_abs {
        return Err(Error::NotPsd {
            min_eig,
            tol: tol_abs,
        });
    }
    Ok(eig.map_eigenvalues(|l| if l > 0.0 { l.sqrt() } else { 0.0 }))
}

/// Solves `a * x = rhs` for SPD `a` via Cholesky, with a residual check.
///
/// If the factorization fails or the relative residual stays above
/// `SOLVE_RESIDUAL_TOL` after one refinement step, the matrix is reported
/// as singular together with its smallest eigenvalue.
pub fn solve_spd(a: &SymMatrix, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.dim() != rhs.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} rows", a.dim()),
            got: format!("{} rows", rhs.nrows()),
        });
    }
    let chol = match nalgebra::Cholesky::new(a.0.clone()) {
        Some(c) => c,
        None => return Err(singular_error(a)),
    };
    let mut x = chol.solve(rhs);

    let scale = a.0.norm() * x.norm() + rhs.norm();
    let mut residual = a.as_matrix() * &x - rhs;
    if residual.norm() > SOLVE_RESIDUAL_TOL * scale {
        // One step of iterative refinement, then give up honestly.
        let correction = chol.solve(&residual);
        x -= correction;
        residual = a.as_matrix() * &x - rhs;
        if residual.norm() > SOLVE_RESIDUAL_TOL * scale {
            return Err(singular_error(a));
        }
    }
    Ok(x)
}

fn singular_error(a: &SymMatrix) -> Error {
    let min_eig = sym_eig(a)
        .map(|e| e.eigenvalues[e.eigenvalues.len() - 1])
        .unwrap_or(f64::NAN);
    Error::Singular { min_eig }
}

/// Solves `a * x = rhs` for a general square `a` via LU.
pub fn solve_square(a: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch {
            expected: "square matrix".into(),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    if a.nrows() != rhs.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} rows", a.nrows()),
            got: format!("{} rows", rhs.nrows()),
        });
    }
    let lu = nalgebra::LU::new(a.clone());
    lu.solve(rhs).ok_or_else(|| {
        let min_sv = a.clone().svd(false, false).singular_values.min();
        Error::Singular { min_eig: min_sv }
    })
}

/// `tr(a * b)` computed as `sum_ij a_ij b_ji` without forming the product.
pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.ncols() != b.nrows() || b.ncols() != a.nrows() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} (transposed shape of a)", a.ncols(), a.nrows()),
            got: format!("{}x{}", b.nrows(), b.ncols()),
        });
    }
    let mut t = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            t += a[(i, j)] * b[(j, i)];
        }
    }
    Ok(t)
}

/// Largest absolute eigenvalue of a symmetric matrix (its operator norm).
pub fn spectral_norm_sym(m: &SymMatrix) -> Result<f64> {
    let eig = sym_eig(m)?;
    Ok(eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs())))
}
