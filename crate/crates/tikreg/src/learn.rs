//! Learning the regularizer from samples.
//!
//! Two regimes, both reducing to empirical moments:
//!
//! * unsupervised: signal samples `x^1..x^m` give `(mean, cov)`, and the
//!   learned pair is simply `(mu_hat, cov_hat^{1/2})`;
//! * supervised: paired samples `(x^i, y^i)` give the empirical-risk
//!   minimizing affine map `W_hat = Cov(x,y) Cov(y)^{-1}`, `b_hat =
//!   mean_x - W_hat mean_y`, which is then projected back onto the
//!   reconstructor family by extracting the implied prior covariance
//!   `M = (I - W_hat A)^{-1} W_hat Sigma_eps A^{-T}`, symmetrizing and
//!   clamping it PSD, and rebuilding the gain from the clamped matrix.
//!
//! With exact moments both routes return the optimal reconstructor; with
//! `m` samples the moment errors decay like `m^{-1/2}`.
//!
//! Moments are accumulated in fixed-size column blocks with `1/m`
//! normalization, so sweeps never materialize a full training set.

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{psd_sqrt, solve_spd, spectral_norm_sym, sym_eig, trace_product, SymMatrix};
use crate::mix_seed;
use crate::model::PriorModel;
use crate::tikhonov::{expected_risk, AffineReconstructor, ProblemInstance, RegPair};
use crate::{Error, Result};

/// Condition-estimate threshold above which `I - W A` or the forward
/// operator is treated as numerically singular when extracting the
/// implied prior covariance.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Relative eigenvalue threshold below which clamping during the PSD
/// projection counts as a warning rather than roundoff repair.
pub const CLAMP_WARN_TOL: f64 = 1e-8;

/// Number of sample columns pushed through the accumulator at a time.
pub const BLOCK_COLS: usize = 4096;

/// A supervised training set; columns are samples.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub xs: DMatrix<f64>,
    pub ys: DMatrix<f64>,
}

impl TrainingSet {
    pub fn new(xs: DMatrix<f64>, ys: DMatrix<f64>) -> Result<Self> {
        if xs.shape() != ys.shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("matching sample blocks ({}x{})", xs.nrows(), xs.ncols()),
                got: format!("{}x{}", ys.nrows(), ys.ncols()),
            });
        }
        Ok(TrainingSet { xs, ys })
    }

    pub fn len(&self) -> usize {
        self.xs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.xs.nrows()
    }
}

/// First and second empirical moments with `1/m` normalization.
#[derive(Debug, Clone)]
pub struct EmpiricalMoments {
    pub m: usize,
    pub mean_x: DVector<f64>,
    pub mean_y: DVector<f64>,
    pub cov_x: SymMatrix,
    pub cov_y: SymMatrix,
    /// `(1/m) sum (y - mean_y)(x - mean_x)^T`.
    pub cov_yx: DMatrix<f64>,
}

struct CrossSums {
    sum_y: DVector<f64>,
    syy: DMatrix<f64>,
    sxy: DMatrix<f64>,
}

/// Streaming accumulator of raw moment sums over column blocks.
pub struct MomentAccumulator {
    n: usize,
    m: usize,
    sum_x: DVector<f64>,
    sxx: DMatrix<f64>,
    cross: Option<CrossSums>,
}

impl MomentAccumulator {
    /// Tracks `x` moments only.
    pub fn new(n: usize) -> Self {
        MomentAccumulator {
            n,
            m: 0,
            sum_x: DVector::zeros(n),
            sxx: DMatrix::zeros(n, n),
            cross: None,
        }
    }

    /// Tracks `x`, `y` and cross moments.
    pub fn with_cross(n: usize) -> Self {
        MomentAccumulator {
            cross: Some(CrossSums {
                sum_y: DVector::zeros(n),
                syy: DMatrix::zeros(n, n),
                sxy: DMatrix::zeros(n, n),
            }),
            ..MomentAccumulator::new(n)
        }
    }

    pub fn count(&self) -> usize {
        self.m
    }

    pub fn push_x_block(&mut self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.n {
            return Err(Error::ShapeMismatch {
                expected: format!("{} rows", self.n),
                got: format!("{}", x.nrows()),
            });
        }
        let xt = x.transpose();
        self.sxx.gemm_tr(1.0, &xt, &xt, 1.0);
        for col in x.column_iter() {
            self.sum_x += col;
        }
        self.m += x.ncols();
        Ok(())
    }

    pub fn push_block(&mut self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
        if x.shape() != y.shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("matching blocks ({}x{})", x.nrows(), x.ncols()),
                got: format!("{}x{}", y.nrows(), y.ncols()),
            });
        }
        if self.cross.is_none() {
            return Err(Error::InvalidModel(
                "accumulator was created without cross-moment tracking".into(),
            ));
        }
        self.push_x_block(x)?;
        let cross = self.cross.as_mut().expect("checked above");
        let xt = x.transpose();
        let yt = y.transpose();
        cross.syy.gemm_tr(1.0, &yt, &yt, 1.0);
        cross.sxy.gemm_tr(1.0, &xt, &yt, 1.0);
        for col in y.column_iter() {
            cross.sum_y += col;
        }
        Ok(())
    }

    /// Mean and covariance of the `x` stream.
    pub fn finalize_marginal(&self) -> Result<(DVector<f64>, SymMatrix)> {
        if self.m < 2 {
            return Err(Error::InsufficientSample { m: self.m, n: self.n });
        }
        let inv_m = 1.0 / self.m as f64;
        let mean_x = &self.sum_x * inv_m;
        let cov_x = SymMatrix::new(&self.sxx * inv_m - &mean_x * mean_x.transpose())?;
        Ok((mean_x, cov_x))
    }

    pub fn finalize(&self) -> Result<EmpiricalMoments> {
        let (mean_x, cov_x) = self.finalize_marginal()?;
        let cross = self.cross.as_ref().ok_or_else(|| {
            Error::InvalidModel("accumulator was created without cross-moment tracking".into())
        })?;
        let inv_m = 1.0 / self.m as f64;
        let mean_y = &cross.sum_y * inv_m;
        let cov_y = SymMatrix::new(&cross.syy * inv_m - &mean_y * mean_y.transpose())?;
        // sxy holds sum x y^T; center and transpose it into cov(y, x).
        let cov_xy = &cross.sxy * inv_m - &mean_x * mean_y.transpose();
        Ok(EmpiricalMoments {
            m: self.m,
            mean_x,
            mean_y,
            cov_x,
            cov_y,
            cov_yx: cov_xy.transpose(),
        })
    }
}

/// Empirical moments of a supervised training set (`1/m` normalization,
/// needs `m >= 2`).
pub fn empirical_moments(data: &TrainingSet) -> Result<EmpiricalMoments> {
    let mut acc = MomentAccumulator::with_cross(data.dim());
    let m = data.len();
    let mut start = 0;
    while start < m {
        let cols = BLOCK_COLS.min(m - start);
        let x = data.xs.columns(start, cols).into_owned();
        let y = data.ys.columns(start, cols).into_owned();
        acc.push_block(&x, &y)?;
        start += cols;
    }
    acc.finalize()
}

/// Unsupervised pair from raw samples (columns of `xs`).
pub fn unsupervised_pair(xs: &DMatrix<f64>) -> Result<RegPair> {
    let mut acc = MomentAccumulator::new(xs.nrows());
    let m = xs.ncols();
    let mut start = 0;
    while start < m {
        let cols = BLOCK_COLS.min(m - start);
        let x = xs.columns(start, cols).into_owned();
        acc.push_x_block(&x)?;
        start += cols;
    }
    let (mean, cov) = acc.finalize_marginal()?;
    pair_from_moments(mean, &cov)
}

/// `(mu_hat, cov_hat^{1/2})` from already-computed moments.
pub fn pair_from_moments(mean: DVector<f64>, cov: &SymMatrix) -> Result<RegPair> {
    Ok(RegPair {
        h: mean,
        b: psd_sqrt(cov)?,
    })
}

/// The empirical-risk minimizing affine map of a training set.
pub fn erm_affine(data: &TrainingSet) -> Result<AffineReconstructor> {
    erm_from_moments(&empirical_moments(data)?)
}

/// ERM from moments: `W = Cov(x,y) Cov(y)^{-1}` via an SPD solve on the
/// transposed system, `b = mean_x - W mean_y`. A singular empirical
/// observation covariance is reported as an insufficient sample.
pub fn erm_from_moments(mom: &EmpiricalMoments) -> Result<AffineReconstructor> {
    let wt = solve_spd(&mom.cov_y, &mom.cov_yx).map_err(|e| match e {
        Error::Singular { .. } => Error::InsufficientSample {
            m: mom.m,
            n: mom.mean_x.len(),
        },
        other => other,
    })?;
    let w = wt.transpose();
    let b = &mom.mean_x - &w * &mom.mean_y;
    Ok(AffineReconstructor { w, b })
}

/// Average training loss `(1/m) sum ||W y^i + b - x^i||_X^2` of an affine
/// map, evaluated from the moments alone:
/// `tr(W Sy W^T) - 2 tr(W Syx) + tr(Sx) + ||W mean_y + b - mean_x||^2`,
/// all over `n`. The ERM map minimizes this over affine maps.
pub fn empirical_affine_risk(mom: &EmpiricalMoments, rec: &AffineReconstructor) -> f64 {
    let n = mom.mean_x.len() as f64;
    let quad = (&rec.w * mom.cov_y.as_matrix()).dot(&rec.w);
    let cross = trace_product(&rec.w, &mom.cov_yx)
        .expect("moment and reconstructor dimensions agree");
    let center = &rec.w * &mom.mean_y + &rec.b - &mom.mean_x;
    (quad - 2.0 * cross + mom.cov_x.trace() + center.norm_squared()) / n
}

/// Everything produced by the supervised route.
#[derive(Debug, Clone)]
pub struct SupervisedFit {
    /// The raw ERM map.
    pub erm: AffineReconstructor,
    /// Implied prior covariance after symmetrization and PSD clamping.
    pub implied_cov: SymMatrix,
    /// Eigenvalues clamped below `-CLAMP_WARN_TOL * lambda_max`, i.e.
    /// genuinely negative directions, not roundoff.
    pub clamp_warnings: usize,
    /// Reconstructor rebuilt from the clamped implied covariance.
    pub projected: AffineReconstructor,
    /// Exact expected risk of `projected`.
    pub risk: f64,
}

/// Supervised fit from raw data; see [`supervised_fit_from_moments`].
pub fn supervised_fit(data: &TrainingSet, inst: &ProblemInstance) -> Result<SupervisedFit> {
    supervised_fit_from_moments(&empirical_moments(data)?, inst)
}

/// Projects the ERM map onto the reconstructor family.
///
/// Solving `W = M A^T (Sigma_eps + A M A^T)^{-1}` for `M` gives
/// `M = (I - W A)^{-1} W Sigma_eps A^{-T}`; the result is symmetrized,
/// eigenvalue-clamped to PSD, and used to rebuild the gain. The rebuilt
/// reconstructor keeps the empirical centers: `b' = mean_x - W' mean_y`.
pub fn supervised_fit_from_moments(
    mom: &EmpiricalMoments,
    inst: &ProblemInstance,
) -> Result<SupervisedFit> {
    let n = inst.dim();
    if mom.mean_x.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n}-dimensional moments"),
            got: format!("{}", mom.mean_x.len()),
        });
    }
    let erm = erm_from_moments(mom)?;

    // k = I - W A, the matrix whose inversion the projection hinges on.
    let mut k = -(&erm.w * &inst.a);
    for i in 0..n {
        k[(i, i)] += 1.0;
    }
    let lu = nalgebra::LU::new(k.clone());
    let cond = condition_estimate(&k, &lu).ok_or(Error::IllConditioned { cond: f64::INFINITY })?;
    if cond > CONDITION_LIMIT {
        return Err(Error::IllConditioned { cond });
    }

    // W Sigma_eps A^{-T} = (A^{-1} Sigma_eps W^T)^T. The extraction also
    // hinges on the forward operator: a near-singular A (a wide blur whose
    // symbol crosses zero, say) would push unbounded noise into M and
    // surface much later as a mysteriously indefinite Gram matrix, so it
    // gets the same conditioning guard as I - W A.
    let rhs = inst.sigma_eps.as_matrix() * erm.w.transpose();
    let q = if inst.a == DMatrix::identity(n, n) {
        rhs
    } else {
        let lu_a = nalgebra::LU::new(inst.a.clone());
        let cond_a = condition_estimate(&inst.a, &lu_a)
            .ok_or(Error::IllConditioned { cond: f64::INFINITY })?;
        if cond_a > CONDITION_LIMIT {
            return Err(Error::IllConditioned { cond: cond_a });
        }
        lu_a.solve(&rhs)
            .ok_or(Error::IllConditioned { cond: f64::INFINITY })?
    };
    let m_raw = lu
        .solve(&q.transpose())
        .ok_or(Error::IllConditioned { cond: f64::INFINITY })?;

    let m_sym = SymMatrix::new(m_raw)?;
    let eig = sym_eig(&m_sym)?;
    let lam_max = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let clamp_warnings = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l < -CLAMP_WARN_TOL * lam_max)
        .count();
    let implied_cov = eig.map_eigenvalues(|l| l.max(0.0));

    // Rebuild the gain from the clamped covariance; same Gram form as the
    // optimal reconstructor, with M^+ in place of B^2.
    let am = &inst.a * implied_cov.as_matrix();
    let gram = SymMatrix::new(&am * inst.a.transpose() + inst.sigma_eps.as_matrix())?;
    let wt = solve_spd(&gram, &am)?;
    let w_prime = wt.transpose();
    let b_prime = &mom.mean_x - &w_prime * &mom.mean_y;
    let projected = AffineReconstructor {
        w: w_prime,
        b: b_prime,
    };
    let risk = expected_risk(&projected, inst)?;

    Ok(SupervisedFit {
        erm,
        implied_cov,
        clamp_warnings,
        projected,
        risk,
    })
}

/// Expected risk of the projected supervised reconstructor.
pub fn supervised_risk_value(data: &TrainingSet, inst: &ProblemInstance) -> Result<f64> {
    Ok(supervised_fit(data, inst)?.risk)
}

/// Lower bound on the condition number of `k` from a handful of fixed
/// probe solves: `||k||_F * max ||k^{-1} p|| / ||p||`. Returns `None` when
/// the factorization cannot solve at all.
fn condition_estimate(k: &DMatrix<f64>, lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>) -> Option<f64> {
    let n = k.nrows();
    let mut best: f64 = 0.0;
    let probes: [Box<dyn Fn(usize) -> f64>; 3] = [
        Box::new(|_| 1.0),
        Box::new(|i| if i % 2 == 0 { 1.0 } else { -1.0 }),
        Box::new(|i| ((i * 2654435761) % 1000) as f64 / 500.0 - 1.0),
    ];
    for probe in probes {
        let p = DVector::from_fn(n, |i, _| probe(i));
        let sol = lu.solve(&p)?;
        let pn = p.norm();
        if pn > 0.0 {
            best = best.max(sol.norm() / pn);
        }
    }
    Some(k.norm() * best)
}

/// One row of a moment-concentration experiment.
#[derive(Debug, Clone, Copy)]
pub struct ConcentrationRow {
    pub m: usize,
    /// Mean over repetitions of `||mu_hat - mu||` in the function-space norm.
    pub dev_mu: f64,
    /// Mean over repetitions of the operator-unit spectral deviation
    /// `||cov_hat - cov|| / N`.
    pub dev_sigma: f64,
}

/// Measures how fast empirical prior moments approach the truth.
///
/// For each sample size, draws `reps` independent sample sets from the
/// prior, computes the moment deviations, and averages them. Deterministic
/// in `master_seed`; both deviation curves decay like `m^{-1/2}`.
pub fn concentration_curve(
    prior: &PriorModel,
    ms: &[usize],
    reps: usize,
    master_seed: u64,
) -> Result<Vec<ConcentrationRow>> {
    if reps == 0 {
        return Err(Error::Config("concentration needs at least one repetition".into()));
    }
    let n = prior.mean.len();
    let s = prior.cov_sqrt.as_matrix();
    let sigma_x = SymMatrix::new((s * s) * n as f64)?;
    let mut rows = Vec::with_capacity(ms.len());
    for (m_index, &m) in ms.iter().enumerate() {
        if m < 2 {
            return Err(Error::InsufficientSample { m, n });
        }
        let mut sum_mu = 0.0;
        let mut sum_sigma = 0.0;
        for rep in 0..reps {
            let seed = mix_seed(&[master_seed, n as u64, m_index as u64, rep as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut acc = MomentAccumulator::new(n);
            let mut left = m;
            while left > 0 {
                let cols = BLOCK_COLS.min(left);
                let block = prior.sample_block(cols, &mut rng);
                acc.push_x_block(&block)?;
                left -= cols;
            }
            let (mean, cov) = acc.finalize_marginal()?;
            sum_mu += ((&mean - &prior.mean.coeffs).norm_squared() / n as f64).sqrt();
            let diff = SymMatrix::new(cov.as_matrix() - sigma_x.as_matrix())?;
            sum_sigma += spectral_norm_sym(&diff)? / n as f64;
        }
        rows.push(ConcentrationRow {
            m,
            dev_mu: sum_mu / reps as f64,
            dev_sigma: sum_sigma / reps as f64,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn moments_use_one_over_m() {
        // Two samples (1,0) and (-1,0): mean zero, covariance diag(1, 0).
        let xs = DMatrix::from_columns(&[
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![-1.0, 0.0]),
        ]);
        let data = TrainingSet::new(xs.clone(), xs).unwrap();
        let mom = empirical_moments(&data).unwrap();
        assert_abs_diff_eq!(mom.mean_x[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mom.cov_x[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mom.cov_x[(1, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn single_sample_is_insufficient() {
        let xs = DMatrix::from_element(2, 1, 1.0);
        let data = TrainingSet::new(xs.clone(), xs).unwrap();
        match empirical_moments(&data) {
            Err(Error::InsufficientSample { m: 1, n: 2 }) => {}
            other => panic!("expected InsufficientSample, got {other:?}"),
        }
    }

    #[test]
    fn erm_reports_singular_covariance_as_insufficient_sample() {
        // Three copies of the same y leave cov_y singular.
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let ys = DMatrix::from_columns(&[y.clone(), y.clone(), y]);
        let xs = DMatrix::from_columns(&[
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.5, 0.5]),
        ]);
        let data = TrainingSet::new(xs, ys).unwrap();
        match erm_affine(&data) {
            Err(Error::InsufficientSample { m: 3, n: 2 }) => {}
            other => panic!("expected InsufficientSample, got {other:?}"),
        }
    }

    #[test]
    fn blockwise_accumulation_matches_direct_formula() {
        let m = 9001;
        let n = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut xs = DMatrix::zeros(n, m);
        use rand::Rng;
        for v in xs.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let ys = &xs * 2.0;
        let data = TrainingSet::new(xs.clone(), ys).unwrap();
        let mom = empirical_moments(&data).unwrap();

        let mean = xs.column_mean();
        let mut cov = DMatrix::zeros(n, n);
        for j in 0..m {
            let d = xs.column(j) - &mean;
            cov += &d * d.transpose();
        }
        cov /= m as f64;
        assert!((mom.cov_x.as_matrix() - &cov).norm() < 1e-10);
        assert!((&mom.cov_yx - cov * 2.0).norm() < 1e-9);
    }

    #[test]
    fn supervised_extraction_rejects_singular_forwards() {
        let n = 4;
        let mut a = DMatrix::identity(n, n);
        a[(n - 1, n - 1)] = 0.0;
        let inst = ProblemInstance::new(
            a,
            DVector::zeros(n),
            SymMatrix::identity(n).scale(n as f64),
            SymMatrix::identity(n).scale(0.01 * n as f64),
        )
        .unwrap();
        // Exact population moments: the obstruction is the operator.
        let mom = EmpiricalMoments {
            m: 1000,
            mean_x: inst.mean.clone(),
            mean_y: &inst.a * &inst.mean,
            cov_x: inst.sigma_x.clone(),
            cov_y: SymMatrix::new(
                &inst.a * inst.sigma_x.as_matrix() * inst.a.transpose()
                    + inst.sigma_eps.as_matrix(),
            )
            .unwrap(),
            cov_yx: &inst.a * inst.sigma_x.as_matrix(),
        };
        match supervised_fit_from_moments(&mom, &inst) {
            Err(Error::IllConditioned { .. }) => {}
            other => panic!("expected an ill-conditioning error, got {other:?}"),
        }
    }

    #[test]
    fn empirical_risk_matches_direct_average() {
        let m = 40;
        let n = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        use rand::Rng;
        let mut fill = |rows: usize, cols: usize| {
            DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
        };
        let xs = fill(n, m);
        let ys = fill(n, m);
        let data = TrainingSet::new(xs.clone(), ys.clone()).unwrap();
        let mom = empirical_moments(&data).unwrap();
        let rec = AffineReconstructor {
            w: fill(n, n),
            b: DVector::from_iterator(n, (0..n).map(|i| i as f64 * 0.3 - 0.2)),
        };

        let mut direct = 0.0;
        for j in 0..m {
            let r = &rec.w * ys.column(j) + &rec.b - xs.column(j);
            direct += r.norm_squared() / n as f64;
        }
        direct /= m as f64;
        assert_abs_diff_eq!(empirical_affine_risk(&mom, &rec), direct, epsilon = 1e-12);

        // The ERM map beats the probe above on its own training set.
        let erm = erm_from_moments(&mom).unwrap();
        assert!(empirical_affine_risk(&mom, &erm) < direct);
    }
}
