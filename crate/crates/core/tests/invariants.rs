//! Property tests over randomly generated matrices and paths.

use nalgebra::DMatrix;
use proptest::prelude::*;
use wishart_ldp::riccati::{laplace_transform, MatrixMeasure};
use wishart_ldp::{grid, rate, solve_sylvester, SpdPath, SymMatrix};

fn sym(d: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-1.0..1.0f64, d * d)
        .prop_map(move |v| SymMatrix::from_matrix(DMatrix::from_vec(d, d, v)))
}

fn orthogonal(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, d * d).prop_map(move |v| {
        let g = DMatrix::from_vec(d, d, v) + DMatrix::identity(d, d) * 0.1;
        g.qr().q()
    })
}

fn spd(d: usize) -> impl Strategy<Value = SymMatrix> {
    (orthogonal(d), prop::collection::vec(0.1..10.0f64, d))
        .prop_map(|(q, e)| SymMatrix::from_diagonal(&e).conjugate(&q))
}

/// `δtI + t²A` with `‖A‖ < δ`.
fn path(d: usize, delta: f64) -> impl Strategy<Value = SpdPath> {
    sym(d).prop_map(move |a| {
        let a = &a * (0.9 * delta / (1.0 + a.norms().operator));
        SpdPath::from_fn(grid::uniform(1.0, 200), |t| {
            &SymMatrix::scalar(d, delta * t) + &(&a * (t * t))
        })
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sylvester_residual_is_small((a, b) in (1usize..=5).prop_flat_map(|d| (spd(d), sym(d)))) {
        let x = solve_sylvester(&a, &b).unwrap();
        let resid = &x.jordan(&a) * 2.0 - b.clone();
        prop_assert!(resid.frobenius() <= 1e-9 * (1.0 + b.frobenius()));
    }

    #[test]
    fn rate_is_orthogonally_invariant(
        (phi, q) in (1usize..=3).prop_flat_map(|d| (path(d, 2.5), orthogonal(d)))
    ) {
        let a = rate::rate_i(&phi, 2.5).unwrap().expect_finite();
        let b = rate::rate_i(&phi.conjugate(&q), 2.5).unwrap().expect_finite();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a));
    }

    #[test]
    fn rate_is_nonnegative_and_at_least_endpoint_rate(phi in (1usize..=3).prop_flat_map(|d| path(d, 2.0))) {
        let v = rate::rate_i(&phi, 2.0).unwrap().expect_finite();
        let end = rate::rate_k(phi.values.last().unwrap(), 2.0).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!(v >= end - 1e-4, "{} < {}", v, end);
    }

    #[test]
    fn laplace_lies_in_unit_interval(
        (theta, x) in (1usize..=3).prop_flat_map(|d| (spd(d), spd(d))),
        delta in 0.5..5.0f64,
        t in 0.0..1.0f64,
    ) {
        let mu = MatrixMeasure::atom(t, &theta * 0.2);
        let v = laplace_transform(&mu, &(&x * 0.1), delta, 1.0).unwrap();
        prop_assert!(v > 0.0 && v <= 1.0);
    }

    #[test]
    fn k_max_is_below_isotropic_endpoint(a in 0.05..10.0f64, delta in 0.5..5.0f64, m in 1usize..=4) {
        let k = rate::rate_k_max(a, delta, m).unwrap();
        let iso = rate::rate_k(&SymMatrix::scalar(m, a), delta).unwrap();
        prop_assert!(k >= 0.0 && k <= iso + 1e-12);
    }
}
