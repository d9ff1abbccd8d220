//! Frozen numerical oracles: values computed once, independently, and
//! pinned here so regressions surface as exact numbers.

use nalgebra::DMatrix;
use tikreg::experiment::{fit_slope, ForwardChoice, SweepConfig, FULL_SAMPLE_SIZES};
use tikreg::model::{blur_operator, Grid};
use tikreg::tikhonov::{build_reconstructor, minimal_risk, optimal_pair};

/// Published mean unsupervised excesses at N=64 for seven sample sizes.
/// The log-log OLS fit of this table is pinned to 12 digits.
#[test]
fn decay_table_slope_fit_is_frozen() {
    let values = [
        0.00177, 0.00129, 0.00082, 0.00053, 0.00034, 0.00023, 0.00019,
    ];
    let fit = fit_slope(&FULL_SAMPLE_SIZES, &values).unwrap();
    assert!((fit.slope - -0.512968002521).abs() < 1e-9, "slope {}", fit.slope);
    assert!(
        (fit.intercept - -2.222012268161).abs() < 1e-9,
        "intercept {}",
        fit.intercept
    );
    assert!(
        (fit.r_squared - 0.992146003863).abs() < 1e-9,
        "r^2 {}",
        fit.r_squared
    );
}

/// Minimal risk of the default experiment family at N=64, cross-checked
/// against an independent implementation of the closed form.
#[test]
fn default_family_minimal_risk_is_frozen() {
    let cfg = SweepConfig::default();
    let (inst, _, _) = cfg.build_models(64).unwrap();
    let lstar = minimal_risk(&inst).unwrap();
    assert!(
        (lstar - 2.5835226862141198e-2).abs() < 1e-12,
        "minimal risk {lstar}"
    );
}

/// The risk-minimizing pair is (mean, covariance square root) regardless
/// of the forward operator, so changing it must not move the pair at all.
#[test]
fn optimal_pair_ignores_the_forward_operator() {
    let identity = SweepConfig::default();
    let blurred = SweepConfig {
        forward: ForwardChoice::Blur { width: 0.08 },
        ..SweepConfig::default()
    };
    let (inst_id, _, _) = identity.build_models(32).unwrap();
    let (inst_blur, _, _) = blurred.build_models(32).unwrap();
    let p1 = optimal_pair(&inst_id).unwrap();
    let p2 = optimal_pair(&inst_blur).unwrap();
    assert_eq!(p1.h, p2.h);
    assert_eq!(p1.b.as_matrix(), p2.b.as_matrix());
}

/// A noise-free datum at the prior mean is a fixed point: the optimal
/// reconstructor maps A mu back to mu.
#[test]
fn noise_free_prior_mean_is_reconstructed_exactly() {
    let cfg = SweepConfig {
        forward: ForwardChoice::Blur { width: 0.05 },
        ..SweepConfig::default()
    };
    let (inst, _, _) = cfg.build_models(32).unwrap();
    let rec = build_reconstructor(&optimal_pair(&inst).unwrap(), &inst).unwrap();
    let y = &inst.a * &inst.mean;
    let xhat = rec.apply(&y).unwrap();
    let err = (&xhat - &inst.mean).norm() / inst.mean.norm();
    assert!(err < 1e-10, "relative error {err}");
}

/// The blur forward is a symmetric circulant with unit row sums, so it
/// preserves constants and never amplifies the mean level.
#[test]
fn blur_operator_rows_are_normalized_and_symmetric() {
    let grid = Grid::new(48).unwrap();
    let a = blur_operator(grid, 0.07);
    for i in 0..48 {
        let row_sum: f64 = a.row(i).iter().sum();
        assert!((row_sum - 1.0).abs() < 1e-12, "row {i} sums to {row_sum}");
    }
    assert!((&a - a.transpose()).norm() < 1e-12);
    // Circulant: every row is the previous one rotated by one cell.
    for i in 1..48 {
        for j in 0..48 {
            let d = (a[(i, j)] - a[(i - 1, (j + 47) % 48)]).abs();
            assert!(d < 1e-15);
        }
    }
    let ones = DMatrix::from_element(48, 1, 1.0);
    assert!((&a * &ones - &ones).norm() < 1e-12);
}
