//! Monte-Carlo cross-checks of the closed-form quantities: sampled
//! moments against model moments, sampled reconstruction error against
//! the exact risk, and the risk ordering a denoiser must satisfy.

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tikreg::experiment::{NoiseCase, SweepConfig};
use tikreg::learn::{pair_from_moments, MomentAccumulator, BLOCK_COLS};
use tikreg::model::{ComponentDist, Grid, NoiseBasis, NoiseModel};
use tikreg::tikhonov::{build_reconstructor, expected_risk, optimal_pair, AffineReconstructor};

fn x_norm_sq(v: &DVector<f64>) -> f64 {
    v.norm_squared() / v.len() as f64
}

/// Empirical prior moments at 1e5 draws match the model moments. This is
/// the scaling contract of the sampler: mean `mu`, covariance `N S S`.
#[test]
fn sampled_prior_moments_match_the_model() {
    let cfg = SweepConfig::default();
    let (inst, prior, _) = cfg.build_models(16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut acc = MomentAccumulator::new(16);
    let mut left = 100_000usize;
    while left > 0 {
        let cols = BLOCK_COLS.min(left);
        acc.push_x_block(&prior.sample_block(cols, &mut rng)).unwrap();
        left -= cols;
    }
    let (mean, cov) = acc.finalize_marginal().unwrap();
    let mean_err = (&mean - &inst.mean).norm() / inst.mean.norm();
    let cov_err = (cov.as_matrix() - inst.sigma_x.as_matrix()).norm()
        / inst.sigma_x.as_matrix().norm();
    assert!(mean_err < 0.05, "mean deviates by {mean_err}");
    assert!(cov_err < 0.05, "covariance deviates by {cov_err}");
}

/// All three noise cases produce centered samples with covariance
/// `sigma^2 N I` in coefficient space; case (b) is genuinely bounded.
#[test]
fn noise_cases_share_the_white_covariance() {
    let grid = Grid::new(8).unwrap();
    let sigma = 0.3;
    let want = sigma * sigma * 8.0;
    for case in [
        NoiseCase::GaussGauss,
        NoiseCase::GaussUniform,
        NoiseCase::GaussHaarUniform,
    ] {
        let (dist, basis) = case.noise_parts();
        let noise = NoiseModel::new(sigma, dist, basis).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let mut acc = MomentAccumulator::new(8);
        let mut bound: f64 = 0.0;
        let mut left = 200_000usize;
        while left > 0 {
            let cols = BLOCK_COLS.min(left);
            let block = noise.sample_block(grid, cols, &mut rng).unwrap();
            bound = bound.max(block.amax());
            acc.push_x_block(&block).unwrap();
            left -= cols;
        }
        let (mean, cov) = acc.finalize_marginal().unwrap();
        let target = DMatrix::identity(8, 8) * want;
        let cov_err = (cov.as_matrix() - &target).norm() / target.norm();
        assert!(
            mean.norm() < 0.05 * want.sqrt() * 8.0_f64.sqrt(),
            "case {}: mean norm {}",
            case.label(),
            mean.norm()
        );
        assert!(cov_err < 0.05, "case {}: covariance off by {cov_err}", case.label());
        if case == NoiseCase::GaussUniform {
            let limit = sigma * 8.0_f64.sqrt() * 3.0_f64.sqrt();
            assert!(bound <= limit + 1e-12, "uniform noise exceeded {limit}: {bound}");
        }
    }
}

/// The closed-form expected risk of a learned (non-optimal) pair matches
/// the sampled reconstruction error. This exercises all three terms of
/// the risk formula, including the bias of the learned center.
#[test]
fn expected_risk_matches_monte_carlo_for_a_learned_pair() {
    let cfg = SweepConfig::default();
    let (inst, prior, noise) = cfg.build_models(16).unwrap();
    let grid = prior.grid();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut acc = MomentAccumulator::new(16);
    acc.push_x_block(&prior.sample_block(500, &mut rng)).unwrap();
    let (mean, cov) = acc.finalize_marginal().unwrap();
    let pair = pair_from_moments(mean, &cov).unwrap();
    let rec = build_reconstructor(&pair, &inst).unwrap();
    let exact = expected_risk(&rec, &inst).unwrap();

    let mut rng_x = ChaCha8Rng::seed_from_u64(6);
    let mut rng_eps = ChaCha8Rng::seed_from_u64(7);
    let draws = 20_000usize;
    let mut sum = 0.0;
    let mut left = draws;
    while left > 0 {
        let cols = BLOCK_COLS.min(left);
        let x = prior.sample_block(cols, &mut rng_x);
        let y = &x + noise.sample_block(grid, cols, &mut rng_eps).unwrap();
        for j in 0..cols {
            let xhat = rec.apply(&y.column(j).clone_owned()).unwrap();
            sum += x_norm_sq(&(xhat - x.column(j)));
        }
        left -= cols;
    }
    let sampled = sum / draws as f64;
    let rel = (sampled - exact).abs() / exact;
    assert!(rel < 0.05, "sampled {sampled} vs exact {exact} ({rel:.3} rel)");
}

/// Denoising sanity: over 100 fresh draws the optimal reconstructor beats
/// reading the datum as the signal.
#[test]
fn optimal_reconstruction_beats_the_raw_datum() {
    let cfg = SweepConfig::default();
    let (inst, prior, noise) = cfg.build_models(64).unwrap();
    let grid = prior.grid();
    let rec = build_reconstructor(&optimal_pair(&inst).unwrap(), &inst).unwrap();
    let identity = AffineReconstructor {
        w: DMatrix::identity(64, 64),
        b: DVector::zeros(64),
    };

    let mut rng_x = ChaCha8Rng::seed_from_u64(9);
    let mut rng_eps = ChaCha8Rng::seed_from_u64(10);
    let x = prior.sample_block(100, &mut rng_x);
    let y = &x + noise.sample_block(grid, 100, &mut rng_eps).unwrap();
    let (mut opt_err, mut raw_err) = (0.0, 0.0);
    for j in 0..100 {
        let yj = y.column(j).clone_owned();
        let xj = x.column(j).clone_owned();
        opt_err += x_norm_sq(&(rec.apply(&yj).unwrap() - &xj));
        raw_err += x_norm_sq(&(identity.apply(&yj).unwrap() - &xj));
    }
    assert!(
        opt_err < raw_err,
        "optimal {opt_err} not below identity {raw_err}"
    );
    // And the sampled averages sit near their closed forms.
    let exact_raw = expected_risk(&identity, &inst).unwrap();
    assert!((raw_err / 100.0 - exact_raw).abs() / exact_raw < 0.2);
}
