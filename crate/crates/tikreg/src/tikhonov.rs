//! Affine reconstructors, their exact expected risk, and the optimal
//! regularizer.
//!
//! For `y = A x + eps` with prior mean `mu`, prior covariance `Sigma_x` and
//! noise covariance `Sigma_eps`, the generalized Tikhonov estimate with
//! regularizer pair `(h, B)` is the affine map `R(y) = W y + b` with
//!
//! ```text
//! W = B^2 A^T (Sigma_eps + A B^2 A^T)^{-1},    b = (I - W A) h.
//! ```
//!
//! Its expected squared error has the closed form
//!
//! ```text
//! L = tr[(WA - I) Sigma_x (WA - I)^T] + tr[W Sigma_eps W^T]
//!     + ||(WA - I) mu + b||^2,
//! ```
//!
//! minimized exactly by `h = mu`, `B = Sigma_x^{1/2}`, independently of `A`
//! and of the noise. All matrices here live in coefficient space; risks are
//! reported in function-space units by dividing the coefficient-space value
//! by the dimension (the `||u||^2 = (1/N) sum u_i^2` norm convention), which
//! keeps values comparable across grid resolutions.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{psd_sqrt, solve_spd, trace_product, SymMatrix};
use crate::model::{ForwardOp, GridSignal, NoiseModel, PriorModel};
use crate::{Error, Result};

/// A fully specified linear-Gaussian-style inverse problem in coefficient
/// space. `sigma_x` and `sigma_eps` are the coefficient-space covariances
/// (for grid models: `N S S` and `sigma^2 N I`).
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub a: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub sigma_x: SymMatrix,
    pub sigma_eps: SymMatrix,
}

impl ProblemInstance {
    pub fn new(
        a: DMatrix<f64>,
        mean: DVector<f64>,
        sigma_x: SymMatrix,
        sigma_eps: SymMatrix,
    ) -> Result<Self> {
        let n = mean.len();
        if a.nrows() != n || a.ncols() != n || sigma_x.dim() != n || sigma_eps.dim() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}-dimensional operator, covariances and mean"),
                got: format!(
                    "a: {}x{}, sigma_x: {}, sigma_eps: {}",
                    a.nrows(),
                    a.ncols(),
                    sigma_x.dim(),
                    sigma_eps.dim()
                ),
            });
        }
        Ok(ProblemInstance {
            a,
            mean,
            sigma_x,
            sigma_eps,
        })
    }

    /// Builds an instance from covariances stated in operator (function
    /// space) units, scaling both by `N` into coefficient space.
    pub fn from_operator_units(
        a: DMatrix<f64>,
        mean: DVector<f64>,
        sigma_x_op: SymMatrix,
        sigma_eps_op: SymMatrix,
    ) -> Result<Self> {
        let n = mean.len() as f64;
        let sigma_x = sigma_x_op.scale(n);
        let sigma_eps = sigma_eps_op.scale(n);
        ProblemInstance::new(a, mean, sigma_x, sigma_eps)
    }

    /// Assembles the coefficient-space instance for grid-based models:
    /// `sigma_x = N S S` from the prior's covariance square root `S`, and
    /// white noise `sigma_eps = sigma^2 N I`. Requires `sigma > 0` so the
    /// noise covariance is invertible.
    pub fn from_models(forward: &ForwardOp, prior: &PriorModel, noise: &NoiseModel) -> Result<Self> {
        let n = prior.mean.len();
        if forward.dim() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{n} forward operator"),
                got: format!("{}x{}", forward.dim(), forward.dim()),
            });
        }
        if noise.sigma <= 0.0 {
            return Err(Error::InvalidModel(
                "noise level must be positive for an invertible noise covariance".into(),
            ));
        }
        let s = prior.cov_sqrt.as_matrix();
        let sigma_x = SymMatrix::new((s * s) * n as f64)?;
        let grid = prior.grid();
        let sigma_eps = SymMatrix::identity(n).scale(noise.coeff_variance(grid));
        ProblemInstance::new(
            forward.matrix.clone(),
            prior.mean.coeffs.clone(),
            sigma_x,
            sigma_eps,
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// A regularizer pair `(h, B)`: center `h` and PSD square-root factor `B`
/// of the penalty's covariance, both in coefficient space.
#[derive(Debug, Clone)]
pub struct RegPair {
    pub h: DVector<f64>,
    pub b: SymMatrix,
}

/// The affine map `y -> W y + b`.
#[derive(Debug, Clone)]
pub struct AffineReconstructor {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl AffineReconstructor {
    pub fn apply(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.w.ncols() {
            return Err(Error::ShapeMismatch {
                expected: format!("{}-dimensional observation", self.w.ncols()),
                got: format!("{}", y.len()),
            });
        }
        Ok(&self.w * y + &self.b)
    }

    /// Grid-signal convenience wrapper around [`Self::apply`].
    pub fn reconstruct(&self, y: &GridSignal) -> Result<GridSignal> {
        let coeffs = self.apply(&y.coeffs)?;
        GridSignal::new(y.grid, coeffs)
    }
}

/// `W = B^2 A^T (Sigma_eps + A B^2 A^T)^{-1}`, `b = (I - W A) h`.
///
/// The Gram matrix is SPD whenever the noise covariance is, so this form
/// stays valid for singular `B` (in particular `B = 0` returns the constant
/// map `y -> h`).
pub fn build_reconstructor(pair: &RegPair, inst: &ProblemInstance) -> Result<AffineReconstructor> {
    let n = inst.dim();
    if pair.h.len() != n || pair.b.dim() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n}-dimensional regularizer pair"),
            got: format!("h: {}, B: {}x{}", pair.h.len(), pair.b.dim(), pair.b.dim()),
        });
    }
    let b2 = SymMatrix::new(pair.b.as_matrix() * pair.b.as_matrix())?;
    let ab2 = &inst.a * b2.as_matrix();
    let gram = SymMatrix::new(&ab2 * inst.a.transpose() + inst.sigma_eps.as_matrix())?;
    // W^T = G^{-1} A B^2 because G and B^2 are symmetric.
    let wt = solve_spd(&gram, &ab2)?;
    let w = wt.transpose();
    let b = &pair.h - &w * (&inst.a * &pair.h);
    Ok(AffineReconstructor { w, b })
}

/// Exact expected squared error of an affine reconstructor, in
/// function-space units (coefficient-space value divided by the dimension).
/// Tiny negative roundoff (above `-1e-12`) is clamped to zero.
pub fn expected_risk(rec: &AffineReconstructor, inst: &ProblemInstance) -> Result<f64> {
    let n = inst.dim();
    if rec.w.nrows() != n || rec.w.ncols() != n || rec.b.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n}x{n} reconstructor"),
            got: format!("{}x{}", rec.w.nrows(), rec.w.ncols()),
        });
    }
    let mut k = &rec.w * &inst.a;
    for i in 0..n {
        k[(i, i)] -= 1.0;
    }
    let bias = &k * &inst.mean + &rec.b;
    let t1 = (&k * inst.sigma_x.as_matrix()).dot(&k);
    let t2 = (&rec.w * inst.sigma_eps.as_matrix()).dot(&rec.w);
    let t3 = bias.norm_squared();
    let risk = (t1 + t2 + t3) / n as f64;
    Ok(if risk < 0.0 && risk > -1e-12 { 0.0 } else { risk })
}

/// The risk-minimizing pair: prior mean and PSD square root of the prior
/// covariance. Independent of the forward operator and of the noise.
pub fn optimal_pair(inst: &ProblemInstance) -> Result<RegPair> {
    Ok(RegPair {
        h: inst.mean.clone(),
        b: psd_sqrt(&inst.sigma_x)?,
    })
}

/// Risk of the reconstructor induced by `pair`.
pub fn pair_risk(pair: &RegPair, inst: &ProblemInstance) -> Result<f64> {
    expected_risk(&build_reconstructor(pair, inst)?, inst)
}

/// Minimal achievable risk
/// `(1/N) tr[S (S A^T Sigma_eps^{-1} A S + I)^{-1} S]` with
/// `S = Sigma_x^{1/2}`.
pub fn minimal_risk(inst: &ProblemInstance) -> Result<f64> {
    let n = inst.dim();
    let s = psd_sqrt(&inst.sigma_x)?;
    let a_s = &inst.a * s.as_matrix();
    let t = solve_spd(&inst.sigma_eps, &a_s)?;
    let c = SymMatrix::new(a_s.transpose() * &t)?.add_scaled_identity(1.0);
    let d = solve_spd(&c, s.as_matrix())?;
    let risk = trace_product(s.as_matrix(), &d)? / n as f64;
    Ok(risk.max(0.0))
}

/// The optimal gain in its whitened state-space form
/// `S (S A^T Sigma_eps^{-1} A S + I)^{-1} S A^T Sigma_eps^{-1}`.
///
/// Algebraically identical to the data-space form
/// `Sigma_x A^T (A Sigma_x A^T + Sigma_eps)^{-1}` used by
/// [`build_reconstructor`]; exposed separately so the equivalence can be
/// checked numerically.
pub fn optimal_gain_state_form(inst: &ProblemInstance) -> Result<DMatrix<f64>> {
    let s = psd_sqrt(&inst.sigma_x)?;
    let a_s = &inst.a * s.as_matrix();
    let t = solve_spd(&inst.sigma_eps, &a_s)?;
    let c = SymMatrix::new(a_s.transpose() * &t)?.add_scaled_identity(1.0);
    let inner = solve_spd(&c, &t.transpose())?;
    Ok(s.as_matrix() * inner)
}

/// Relative residual of the normal-equation characterization of the optimal
/// gain: `||W (A Sigma_x A^T + Sigma_eps) - Sigma_x A^T||_F / ||Sigma_x A^T||_F`.
pub fn normal_equation_residual(rec: &AffineReconstructor, inst: &ProblemInstance) -> Result<f64> {
    let n = inst.dim();
    if rec.w.nrows() != n || rec.w.ncols() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n}x{n} gain"),
            got: format!("{}x{}", rec.w.nrows(), rec.w.ncols()),
        });
    }
    let rhs = inst.sigma_x.as_matrix() * inst.a.transpose();
    let gram = &inst.a * inst.sigma_x.as_matrix() * inst.a.transpose() + inst.sigma_eps.as_matrix();
    let resid = (&rec.w * gram - &rhs).norm();
    let denom = rhs.norm();
    if denom == 0.0 {
        return Ok(if resid == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(resid / denom)
}
