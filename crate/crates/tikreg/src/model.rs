//! Discretized signal models on the unit torus.
//!
//! Signals live in `L^2(0,1)` with periodic boundary; the discretization
//! uses `N` equal cells with L2-normalized indicator functions as basis.
//! A signal is stored through scaled coefficients `u_i = sqrt(N) <u, phi_i>`,
//! which for the midpoint rule are simply point samples `u(t_i)` at the cell
//! midpoints `t_i = (i + 1/2) / N`. Under this scaling the continuum norm is
//! approximated by `||u||^2 = (1/N) sum_i u_i^2`, so norms and risks stay
//! comparable across grid resolutions.
//!
//! Covariance operators are represented by their symmetric square roots in
//! the same operator scaling: if `S` maps coefficients to coefficients, the
//! coefficient-space covariance of `sqrt(N) * S * nu` (i.i.d. unit-variance
//! `nu`) is `N * S * S`, which is what the risk formulas consume.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::linalg::{sym_eig, SymMatrix};
use crate::{Error, Result};

/// A uniform grid of `n >= 2` cells on the unit torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidModel(format!(
                "grid needs at least 2 cells, got {n}"
            )));
        }
        Ok(Grid { n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Midpoint of cell `i`.
    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.n as f64
    }

    /// Torus distance between cell indices, in continuum units.
    pub fn torus_distance(&self, i: usize, j: usize) -> f64 {
        let d = i.abs_diff(j);
        d.min(self.n - d) as f64 / self.n as f64
    }

    fn require_power_of_two(&self) -> Result<()> {
        if !self.n.is_power_of_two() {
            return Err(Error::InvalidModel(format!(
                "Haar transform needs a power-of-two grid, got {}",
                self.n
            )));
        }
        Ok(())
    }
}

/// A signal as scaled basis coefficients on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSignal {
    pub grid: Grid,
    pub coeffs: DVector<f64>,
}

impl GridSignal {
    pub fn new(grid: Grid, coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} coefficients", grid.len()),
                got: format!("{}", coeffs.len()),
            });
        }
        Ok(GridSignal { grid, coeffs })
    }

    pub fn zeros(grid: Grid) -> Self {
        GridSignal {
            grid,
            coeffs: DVector::zeros(grid.len()),
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Discretized `L^2(0,1)` norm: `sqrt((1/N) sum u_i^2)`.
    pub fn norm(&self) -> f64 {
        (self.coeffs.norm_squared() / self.len() as f64).sqrt()
    }

    pub fn dot(&self, other: &GridSignal) -> f64 {
        self.coeffs.dot(&other.coeffs) / self.len() as f64
    }
}

/// Coefficients of a function via the midpoint rule: `u_i = f((i+1/2)/N)`.
pub fn pixel_coeffs(grid: Grid, f: impl Fn(f64) -> f64) -> GridSignal {
    let coeffs = DVector::from_iterator(grid.len(), (0..grid.len()).map(|i| f(grid.midpoint(i))));
    GridSignal { grid, coeffs }
}

/// The triangle profile `1 - |2t - 1|` with exact per-cell averages.
///
/// Cell averages rather than midpoint samples keep the representation exact
/// for this piecewise-linear profile even when a cell straddles the peak.
pub fn triangle_mean(grid: Grid) -> GridSignal {
    let n = grid.len() as f64;
    // Antiderivative of 1 - |2t - 1| on [0,1], split at the peak.
    let anti = |t: f64| -> f64 {
        if t <= 0.5 {
            t * t
        } else {
            2.0 * t - t * t - 0.5
        }
    };
    let coeffs = DVector::from_iterator(
        grid.len(),
        (0..grid.len()).map(|i| {
            let a = i as f64 / n;
            let b = (i + 1) as f64 / n;
            n * (anti(b) - anti(a))
        }),
    );
    GridSignal { grid, coeffs }
}

/// Compactly supported bump kernel on the torus:
/// `k(t) = (1 - exp(-(c/t)^4))` for `0 < |t| < c`, `k(0) = 1`, zero outside.
///
/// Flat to all orders at the origin, discontinuous at `|t| = c`; the jump
/// keeps the spectrum of the induced convolution operator decaying only
/// slowly, which is what makes the covariance genuinely rough.
pub fn bump_kernel(t: f64, c: f64) -> f64 {
    let t = t.abs();
    if t == 0.0 {
        1.0
    } else if t < c {
        1.0 - (-(c / t).powi(4)).exp()
    } else {
        0.0
    }
}

/// Circulant operator from a distance kernel: entries `k(d(i,j)) / N`.
///
/// The `1/N` keeps it a midpoint-rule discretization of the continuum
/// convolution `(Ku)(s) = int k(d(s,t)) u(t) dt`.
pub fn convolution_operator(grid: Grid, kernel: impl Fn(f64) -> f64) -> SymMatrix {
    let n = grid.len();
    let mut m = DMatrix::zeros(n, n);
    // Circulant: compute one row of kernel values, then rotate.
    let row: Vec<f64> = (0..n)
        .map(|d| kernel(grid.torus_distance(0, d)) / n as f64)
        .collect();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = row[i.abs_diff(j)];
        }
    }
    SymMatrix::new(m).expect("square by construction")
}

/// PSD covariance square root of the bump-kernel prior family: the square
/// root of the squared convolution operator.
///
/// The convolution operator itself is symmetric but indefinite (the
/// kernel's jump at `|t| = c` sends roughly half its circulant spectrum
/// negative), so it cannot serve as a covariance square root directly. Its
/// absolute value `|S| = (S^2)^{1/2}` induces the same covariance `N S^2`
/// and, for Gaussian components, the same sampling distribution.
pub fn bump_prior_cov_sqrt(grid: Grid, c: f64) -> Result<SymMatrix> {
    let s = convolution_operator(grid, |t| bump_kernel(t, c));
    let eig = sym_eig(&s)?;
    Ok(eig.map_eigenvalues(f64::abs))
}

/// Covariance square root with Laplacian-power spectrum on the torus.
///
/// Eigenvectors are the real Fourier basis sampled at indices `i/N`;
/// the eigenvalue at integer frequency `k` is `(1 + 4 pi k^2)^(-s/2)`.
/// Requires `s > 1/2` so the continuum covariance has finite trace.
pub fn laplacian_cov_sqrt(grid: Grid, s: f64) -> Result<SymMatrix> {
    if s <= 0.5 {
        return Err(Error::InvalidModel(format!(
            "Laplacian prior needs smoothness s > 1/2, got {s}"
        )));
    }
    let n = grid.len();
    let mut basis = DMatrix::zeros(n, n);
    let mut gains = DVector::zeros(n);
    let gain = |k: f64| (1.0 + 4.0 * std::f64::consts::PI * k * k).powf(-s / 2.0);

    let mut col = 0;
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    for i in 0..n {
        basis[(i, col)] = inv_sqrt_n;
    }
    gains[col] = gain(0.0);
    col += 1;

    let max_pair = (n - 1) / 2;
    let scale = (2.0 / n as f64).sqrt();
    for k in 1..=max_pair {
        for i in 0..n {
            let arg = 2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
            basis[(i, col)] = scale * arg.cos();
            basis[(i, col + 1)] = scale * arg.sin();
        }
        gains[col] = gain(k as f64);
        gains[col + 1] = gain(k as f64);
        col += 2;
    }

    if n % 2 == 0 {
        // Nyquist column: alternating signs, already unit norm.
        for i in 0..n {
            basis[(i, col)] = if i % 2 == 0 { inv_sqrt_n } else { -inv_sqrt_n };
        }
        gains[col] = gain((n / 2) as f64);
        col += 1;
    }
    debug_assert_eq!(col, n);

    let scaled = &basis * DMatrix::from_diagonal(&gains);
    SymMatrix::new(scaled * basis.transpose())
}

/// Component distribution for prior and noise draws; both have unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentDist {
    Gaussian,
    /// Uniform on `(-sqrt(3), sqrt(3))`.
    Uniform,
}

impl ComponentDist {
    fn fill(&self, rng: &mut impl Rng, out: &mut [f64]) {
        match self {
            ComponentDist::Gaussian => {
                for v in out.iter_mut() {
                    *v = StandardNormal.sample(rng);
                }
            }
            ComponentDist::Uniform => {
                let half = 3f64.sqrt();
                let u = Uniform::new(-half, half);
                for v in out.iter_mut() {
                    *v = u.sample(rng);
                }
            }
        }
    }
}

/// Basis in which noise components are drawn independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseBasis {
    Pixel,
    Haar,
}

/// Prior on signals: mean plus covariance square root driving i.i.d.
/// unit-variance components.
#[derive(Debug, Clone)]
pub struct PriorModel {
    pub mean: GridSignal,
    pub cov_sqrt: SymMatrix,
    pub dist: ComponentDist,
}

impl PriorModel {
    pub fn new(mean: GridSignal, cov_sqrt: SymMatrix, dist: ComponentDist) -> Result<Self> {
        if cov_sqrt.dim() != mean.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} covariance square root", mean.len(), mean.len()),
                got: format!("{}x{}", cov_sqrt.dim(), cov_sqrt.dim()),
            });
        }
        let eig = sym_eig(&cov_sqrt)?;
        let lam_max = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
        let min = eig.eigenvalues[eig.eigenvalues.len() - 1];
        if min < -1e-10 * lam_max {
            return Err(Error::NotPsd {
                min_eig: min,
                tol: 1e-10 * lam_max,
            });
        }
        Ok(PriorModel {
            mean,
            cov_sqrt,
            dist,
        })
    }

    pub fn grid(&self) -> Grid {
        self.mean.grid
    }

    /// One draw: `x = mean + sqrt(N) * S * nu`.
    pub fn sample(&self, rng: &mut impl Rng) -> GridSignal {
        let block = self.sample_block(1, rng);
        GridSignal {
            grid: self.grid(),
            coeffs: block.column(0).into_owned(),
        }
    }

    /// `count` draws as columns of an `N x count` matrix.
    pub fn sample_block(&self, count: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let n = self.mean.len();
        let mut nu = DMatrix::zeros(n, count);
        self.dist.fill(rng, nu.as_mut_slice());
        let mut x = self.cov_sqrt.as_matrix() * nu;
        x *= (n as f64).sqrt();
        for mut col in x.column_iter_mut() {
            col += &self.mean.coeffs;
        }
        x
    }
}

/// Centered noise with standard deviation `sigma` per continuum unit,
/// componentwise independent in the chosen basis.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub sigma: f64,
    pub dist: ComponentDist,
    pub basis: NoiseBasis,
}

impl NoiseModel {
    pub fn new(sigma: f64, dist: ComponentDist, basis: NoiseBasis) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidModel(format!(
                "noise level must be finite and nonnegative, got {sigma}"
            )));
        }
        Ok(NoiseModel { sigma, dist, basis })
    }

    /// Coefficient-space covariance is `sigma^2 * N * I` regardless of basis.
    pub fn coeff_variance(&self, grid: Grid) -> f64 {
        self.sigma * self.sigma * grid.len() as f64
    }

    pub fn sample(&self, grid: Grid, rng: &mut impl Rng) -> Result<DVector<f64>> {
        let block = self.sample_block(grid, 1, rng)?;
        Ok(block.column(0).into_owned())
    }

    /// `count` draws as columns; components are drawn in the configured
    /// basis, then synthesized back to pixel coefficients.
    pub fn sample_block(&self, grid: Grid, count: usize, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
        if self.basis == NoiseBasis::Haar {
            grid.require_power_of_two()?;
        }
        let n = grid.len();
        let mut nu = DMatrix::zeros(n, count);
        self.dist.fill(rng, nu.as_mut_slice());
        let scale = self.sigma * (n as f64).sqrt();
        match self.basis {
            NoiseBasis::Pixel => {
                nu *= scale;
                Ok(nu)
            }
            NoiseBasis::Haar => {
                let mut out = DMatrix::zeros(n, count);
                let mut buf = vec![0.0; n];
                for j in 0..count {
                    buf.copy_from_slice(nu.column(j).as_slice());
                    haar_inverse_slice(&mut buf);
                    for i in 0..n {
                        out[(i, j)] = scale * buf[i];
                    }
                }
                Ok(out)
            }
        }
    }
}

/// What a forward operator is, beyond its matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum ForwardKind {
    Identity,
    CirculantBlur { width: f64 },
    Custom,
}

/// The known linear map from signal to (noise-free) observation.
#[derive(Debug, Clone)]
pub struct ForwardOp {
    pub matrix: DMatrix<f64>,
    pub kind: ForwardKind,
}

impl ForwardOp {
    pub fn identity(grid: Grid) -> Self {
        ForwardOp {
            matrix: DMatrix::identity(grid.len(), grid.len()),
            kind: ForwardKind::Identity,
        }
    }

    /// Row-normalized Gaussian blur with the given torus-unit width.
    pub fn circulant_blur(grid: Grid, width: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::InvalidModel(format!(
                "blur width must be positive, got {width}"
            )));
        }
        Ok(ForwardOp {
            matrix: blur_operator(grid, width),
            kind: ForwardKind::CirculantBlur { width },
        })
    }

    pub fn custom(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::ShapeMismatch {
                expected: "square forward operator".into(),
                got: format!("{}x{}", matrix.nrows(), matrix.ncols()),
            });
        }
        Ok(ForwardOp {
            matrix,
            kind: ForwardKind::Custom,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_identity(&self) -> bool {
        self.kind == ForwardKind::Identity
    }
}

/// Circulant Gaussian bump, each row normalized to sum to one, so constants
/// pass through unchanged.
pub fn blur_operator(grid: Grid, width: f64) -> DMatrix<f64> {
    let n = grid.len();
    let row: Vec<f64> = (0..n)
        .map(|d| {
            let t = grid.torus_distance(0, d);
            (-0.5 * (t / width).powi(2)).exp()
        })
        .collect();
    let sum: f64 = row.iter().sum();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = row[i.abs_diff(j)] / sum;
        }
    }
    m
}

/// Orthonormal multi-level Haar transform; length must be a power of two.
///
/// Output ordering is `[approximation, details coarse to fine]`, each level
/// computed with the orthonormal pair `((a+b)/sqrt 2, (a-b)/sqrt 2)`.
pub fn haar_forward(signal: &GridSignal) -> Result<GridSignal> {
    signal.grid.require_power_of_two()?;
    let mut buf: Vec<f64> = signal.coeffs.iter().copied().collect();
    haar_forward_slice(&mut buf);
    Ok(GridSignal {
        grid: signal.grid,
        coeffs: DVector::from_vec(buf),
    })
}

/// Inverse of [`haar_forward`]; exact up to roundoff.
pub fn haar_inverse(coeffs: &GridSignal) -> Result<GridSignal> {
    coeffs.grid.require_power_of_two()?;
    let mut buf: Vec<f64> = coeffs.coeffs.iter().copied().collect();
    haar_inverse_slice(&mut buf);
    Ok(GridSignal {
        grid: coeffs.grid,
        coeffs: DVector::from_vec(buf),
    })
}

fn haar_forward_slice(v: &mut [f64]) {
    let n = v.len();
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut scratch = vec![0.0; n];
    let mut len = n;
    while len > 1 {
        let half = len / 2;
        for i in 0..half {
            let a = v[2 * i];
            let b = v[2 * i + 1];
            scratch[i] = (a + b) * inv_sqrt2;
            scratch[half + i] = (a - b) * inv_sqrt2;
        }
        v[..len].copy_from_slice(&scratch[..len]);
        len = half;
    }
}

fn haar_inverse_slice(v: &mut [f64]) {
    let n = v.len();
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut scratch = vec![0.0; n];
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        for i in 0..half {
            let a = v[i];
            let d = v[half + i];
            scratch[2 * i] = (a + d) * inv_sqrt2;
            scratch[2 * i + 1] = (a - d) * inv_sqrt2;
        }
        v[..len].copy_from_slice(&scratch[..len]);
        len *= 2;
    }
}
