//! Property tests for the numerical invariants: PSD square roots,
//! orthonormal transforms, solver residuals and risk inequalities.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use tikreg::learn::{empirical_affine_risk, erm_from_moments, EmpiricalMoments, MomentAccumulator};
use tikreg::linalg::{psd_sqrt, solve_spd, trace_product, SymMatrix};
use tikreg::model::{haar_forward, haar_inverse, Grid, GridSignal};
use tikreg::tikhonov::{minimal_risk, pair_risk, ProblemInstance, RegPair};
use tikreg::mix_seed;

fn entries(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, n)
}

fn psd_from(n: usize, vals: &[f64], ridge: f64) -> SymMatrix {
    let g = DMatrix::from_fn(n, n, |i, j| vals[i * n + j]);
    SymMatrix::new(&g * g.transpose() + DMatrix::identity(n, n) * ridge).unwrap()
}

proptest! {
    #[test]
    fn psd_sqrt_squares_back(n in 1usize..10, vals in entries(100)) {
        let m = psd_from(n, &vals, 0.0);
        let s = psd_sqrt(&m).unwrap();
        let err = (s.as_matrix() * s.as_matrix() - m.as_matrix()).norm();
        prop_assert!(err <= 1e-10 * (1.0 + m.as_matrix().norm()), "residual {err}");
    }

    #[test]
    fn psd_sqrt_commutes_with_scaling(n in 1usize..8, vals in entries(64), c in 0.01f64..100.0) {
        let m = psd_from(n, &vals, 0.1);
        let direct = psd_sqrt(&m.clone().scale(c)).unwrap();
        let scaled = psd_sqrt(&m).unwrap().scale(c.sqrt());
        let err = (direct.as_matrix() - scaled.as_matrix()).norm();
        prop_assert!(err <= 1e-10 * (1.0 + scaled.as_matrix().norm()));
    }

    #[test]
    fn haar_round_trip_preserves_signals(k in 1u32..=8, vals in entries(256)) {
        let n = 1usize << k;
        let grid = Grid::new(n).unwrap();
        let x = GridSignal::new(grid, DVector::from_iterator(n, vals[..n].iter().copied())).unwrap();
        let coeffs = haar_forward(&x).unwrap();
        // Orthonormality: the transform is an isometry of the plain
        // Euclidean coefficient norm.
        prop_assert!((coeffs.coeffs.norm() - x.coeffs.norm()).abs() <= 1e-12 * (1.0 + x.coeffs.norm()));
        let back = haar_inverse(&coeffs).unwrap();
        prop_assert!((back.coeffs - &x.coeffs).norm() <= 1e-12 * (1.0 + x.coeffs.norm()));
    }

    #[test]
    fn spd_solver_residual_is_tiny(n in 1usize..10, vals in entries(100), rhs in entries(10)) {
        let a = psd_from(n, &vals, 0.1);
        let b = DMatrix::from_fn(n, 1, |i, _| rhs[i]);
        let x = solve_spd(&a, &b).unwrap();
        let res = (a.as_matrix() * &x - &b).norm();
        prop_assert!(res <= 1e-10 * (1.0 + b.norm() + a.as_matrix().norm() * x.norm()));
    }

    #[test]
    fn trace_of_products_is_cyclic(n in 1usize..7, m in 1usize..7, av in entries(49), bv in entries(49)) {
        let a = DMatrix::from_fn(n, m, |i, j| av[i * m + j]);
        let b = DMatrix::from_fn(m, n, |i, j| bv[i * n + j]);
        let ab = trace_product(&a, &b).unwrap();
        let ba = trace_product(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab.abs()));
    }

    #[test]
    fn sym_matrix_is_exactly_symmetric(n in 1usize..8, vals in entries(64)) {
        let m = SymMatrix::new(DMatrix::from_fn(n, n, |i, j| vals[i * n + j])).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(m[(i, j)], m[(j, i)]);
            }
        }
    }

    /// No regularization pair can beat the minimal risk.
    #[test]
    fn excess_risk_is_nonnegative(
        n in 1usize..7,
        xv in entries(49),
        ev in entries(49),
        av in entries(49),
        mv in entries(7),
        hv in entries(7),
        bv in entries(49),
    ) {
        let inst = ProblemInstance::new(
            DMatrix::from_fn(n, n, |i, j| av[i * n + j]),
            DVector::from_iterator(n, mv[..n].iter().copied()),
            psd_from(n, &xv, 0.05),
            psd_from(n, &ev, 0.05),
        ).unwrap();
        let pair = RegPair {
            h: DVector::from_iterator(n, hv[..n].iter().copied()),
            b: psd_sqrt(&psd_from(n, &bv, 0.0)).unwrap(),
        };
        let lstar = minimal_risk(&inst).unwrap();
        let risk = pair_risk(&pair, &inst).unwrap();
        prop_assert!(risk >= lstar - 1e-9 * (1.0 + lstar), "risk {risk} < minimal {lstar}");
    }

    /// The closed-form affine minimizer beats random affine perturbations
    /// on its own training set.
    #[test]
    fn erm_beats_perturbations(
        n in 2usize..5,
        m in 24usize..60,
        seed in 0u64..1000,
        dw in entries(25),
        db in entries(5),
        scale in 1e-4f64..1.0,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let xs = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
        let ys = &xs * 0.8 + DMatrix::from_fn(n, m, |_, _| rng.gen_range(-0.3..0.3));
        let mut acc = MomentAccumulator::with_cross(n);
        acc.push_block(&xs, &ys).unwrap();
        let mom: EmpiricalMoments = acc.finalize().unwrap();
        let erm = erm_from_moments(&mom).unwrap();
        let base = empirical_affine_risk(&mom, &erm);

        let mut probe = erm.clone();
        for i in 0..n {
            for j in 0..n {
                probe.w[(i, j)] += scale * dw[i * n + j];
            }
            probe.b[i] += scale * db[i];
        }
        let perturbed = empirical_affine_risk(&mom, &probe);
        prop_assert!(base <= perturbed + 1e-12 * (1.0 + base.abs()),
            "erm {base} beaten by probe {perturbed}");
    }
}

/// Orthonormality of the Haar matrix itself, at every usable size.
#[test]
fn haar_matrix_is_orthonormal() {
    for k in 1..=8u32 {
        let n = 1usize << k;
        let grid = Grid::new(n).unwrap();
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            let col = haar_forward(&GridSignal::new(grid, e).unwrap()).unwrap();
            h.set_column(j, &col.coeffs);
        }
        let gram = h.transpose() * &h;
        let err = (&gram - DMatrix::identity(n, n)).amax();
        assert!(err <= 1e-12, "N={n}: orthonormality defect {err}");
    }
}

/// The cell-seed hash never collides over the index ranges sweeps use.
#[test]
fn cell_seeds_are_distinct() {
    let mut seen = HashSet::new();
    for master in [0u64, 1, 7, u64::MAX] {
        for n in [8u64, 32, 64, 256] {
            for m_index in 0..8u64 {
                for rep in 0..32u64 {
                    assert!(
                        seen.insert(mix_seed(&[master, n, m_index, rep])),
                        "seed collision at ({master}, {n}, {m_index}, {rep})"
                    );
                }
            }
        }
    }
}
