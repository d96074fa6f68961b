//! End-to-end checks of documented behaviour, each against an oracle written here.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wishart_ldp::harness::{
    self, ExperimentKind, ExperimentSpec, LaplacePayload, RatePayload, RiccatiPayload, Status,
};
use wishart_ldp::riccati::{laplace_transform, solve_riccati, MatrixMeasure};
use wishart_ldp::simulator::{self, SimConfig};
use wishart_ldp::{grid, rate, SpdPath, SymMatrix};

fn random_orthogonal(m: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |_, _| r.sample::<f64, _>(StandardNormal))
        .qr()
        .q()
}

fn random_symmetric(m: usize, r: &mut ChaCha8Rng) -> SymMatrix {
    SymMatrix::from_matrix(DMatrix::from_fn(m, m, |_, _| {
        r.sample::<f64, _>(StandardNormal)
    }))
}

fn within_3se(samples: &[f64], target: f64) -> (bool, f64) {
    let e = harness::mean_estimate(samples);
    let z = (e.mean - target) / e.standard_error;
    (z.abs() <= 3.0, z)
}

#[test]
fn trace_mean_matches_drift() {
    let cfg = SimConfig {
        dim: 2,
        delta: 3.0,
        epsilon: 0.5,
        steps: 2000,
        replicas: 10_000,
        seed: 17,
        ..SimConfig::default()
    };
    let ens = simulator::wishart_terminal_ensemble(&cfg, &SymMatrix::zeros(2)).unwrap();
    let traces: Vec<f64> = ens.terminals.iter().map(SymMatrix::trace).collect();
    let (ok, z) = within_3se(&traces, 6.0);
    assert!(ok, "z = {z}");
}

#[test]
fn besq_exponential_moment() {
    let cfg = SimConfig {
        dim: 1,
        delta: 1.0,
        epsilon: 1.0,
        steps: 1000,
        replicas: 100_000,
        seed: 23,
        ..SimConfig::default()
    };
    let c: f64 = 0.3;
    let ys = simulator::besq_terminal_ensemble(&cfg, 0.0).unwrap();
    let samples: Vec<f64> = ys.iter().map(|y| (2.0 * c * c * y).exp()).collect();
    let (ok, z) = within_3se(&samples, (1.0 - 4.0 * c * c).powf(-0.5));
    assert!(ok, "z = {z}");
}

#[test]
fn besq_mean() {
    let cfg = SimConfig {
        dim: 2,
        delta: 2.0,
        epsilon: 1.0,
        steps: 1000,
        replicas: 20_000,
        seed: 29,
        ..SimConfig::default()
    };
    let ys = simulator::besq_terminal_ensemble(&cfg, 0.0).unwrap();
    let (ok, z) = within_3se(&ys, 4.0);
    assert!(ok, "z = {z}");
}

#[test]
fn repair_rate_is_small_in_the_documented_regime() {
    for m in 2..=3 {
        let cfg = SimConfig {
            dim: m,
            delta: (m + 1) as f64,
            epsilon: 0.5,
            steps: 1000,
            replicas: 500,
            seed: 31,
            ..SimConfig::default()
        };
        let ens = simulator::wishart_terminal_ensemble(&cfg, &SymMatrix::zeros(m)).unwrap();
        assert!(
            ens.repair.repair_rate() < 0.05,
            "m = {m}: {}",
            ens.repair.repair_rate()
        );
    }
}

#[test]
fn additivity_passes() {
    let sim = SimConfig {
        dim: 2,
        replicas: 20_000,
        seed: 37,
        ..SimConfig::default()
    };
    let spec = ExperimentSpec::new(ExperimentKind::Additivity, sim, ()).unwrap();
    let report = harness::run_additivity(&spec).unwrap();
    assert_eq!(report.result.entries.len(), 5);
    assert_eq!(report.status, Status::Pass, "{:?}", report.result.entries);
}

#[test]
fn laplace_check_reference_values() {
    let sim = SimConfig {
        dim: 2,
        delta: 3.0,
        replicas: 20_000,
        seed: 41,
        ..SimConfig::default()
    };
    let payload = LaplacePayload {
        thetas: vec![SymMatrix::scalar(2, 0.3)],
        ..LaplacePayload::default()
    };
    let spec = ExperimentSpec::new(ExperimentKind::LaplaceCheck, sim, payload).unwrap();
    let r = harness::run_laplace_check(&spec).unwrap();
    assert!((r.result.entries[0].analytic - 1.6f64.powi(-3)).abs() < 1e-12);
    assert_eq!(r.status, Status::Pass);

    let theta = 0.7;
    let sim = SimConfig {
        dim: 1,
        delta: 1.0,
        replicas: 20_000,
        seed: 43,
        ..SimConfig::default()
    };
    let payload = LaplacePayload {
        thetas: vec![SymMatrix::scalar(1, theta)],
        ..LaplacePayload::default()
    };
    let spec = ExperimentSpec::new(ExperimentKind::LaplaceCheck, sim, payload).unwrap();
    let r = harness::run_laplace_check(&spec).unwrap();
    assert!((r.result.entries[0].analytic - (1.0 + 2.0 * theta).powf(-0.5)).abs() < 1e-12);
    assert_eq!(r.status, Status::Pass);
}

#[test]
fn tilted_flow_recovers_optimal_path() {
    let delta = 3.0;
    let m = SymMatrix::from_diagonal(&[5.0, 1.0]);
    let g = grid::uniform(1.0, 10_000);
    let phi = rate::optimal_endpoint_path(&m, delta, &g).unwrap().path;
    let k = rate::compute_k_path(&phi, delta).unwrap().full_values();
    let psi = simulator::tilted_flow(delta, &g, &k, &SymMatrix::zeros(2)).unwrap();
    let err = psi
        .values
        .iter()
        .zip(&phi.values)
        .map(|(a, b)| a.max_abs_diff(b))
        .fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn scalar_rate_matches_closed_form() {
    // (φ̇ − 2)²/φ = t / (2 + t/2), whose integral over [0, 1] is 2(1 − 4 ln 1.25).
    let phi = SpdPath::from_fn(grid::uniform(1.0, 4000), |t| {
        SymMatrix::scalar(1, 2.0 * t + 0.5 * t * t)
    })
    .unwrap();
    let exact = (1.0 - 4.0 * 1.25f64.ln()) / 4.0;
    let got = rate::rate_i(&phi, 2.0).unwrap().expect_finite();
    assert!((got - exact).abs() < 1e-6, "{got} vs {exact}");
}

#[test]
fn endpoint_path_beats_perturbations() {
    let delta = 3.0;
    let m = SymMatrix::from_diagonal(&[5.0, 1.0]);
    let target = rate::rate_k(&m, delta).unwrap();
    let g = grid::uniform(1.0, 2000);
    let phi = rate::optimal_endpoint_path(&m, delta, &g).unwrap().path;
    let mut r = ChaCha8Rng::seed_from_u64(47);
    for _ in 0..50 {
        let b = random_symmetric(2, &mut r);
        let b = &b * (0.5 / b.norms().operator);
        let freq = r.random_range(1..4) as f64;
        let psi = SpdPath::new(
            g.clone(),
            g.iter()
                .zip(&phi.values)
                .map(|(&t, p)| p + &(&b * (t * (std::f64::consts::PI * freq * t).sin())))
                .collect(),
        )
        .unwrap();
        let v = rate::rate_i(&psi, delta).unwrap().expect_finite();
        assert!(v >= target - 1e-6, "{v} < {target}");
    }
}

#[test]
fn legendre_matches_grid_search() {
    // The objective is separable over a diagonal Θ, so a 1-D search per entry suffices.
    let (delta, diag) = (3.0, [5.0, 1.0]);
    let n = 2_000_000;
    let search: f64 = diag
        .iter()
        .map(|&mi| {
            (0..n)
                .map(|j| -3.0 + 3.5 * j as f64 / n as f64)
                .map(|th| th * mi + delta / 2.0 * (1.0 - 2.0 * th).ln())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    let leg = wishart_ldp::legendre_k(&SymMatrix::from_diagonal(&diag), delta).unwrap();
    assert!(
        (leg.value - search).abs() < 1e-5,
        "{} vs {search}",
        leg.value
    );
}

#[test]
fn k_path_matches_vectorized_sylvester() {
    let delta = 2.0;
    let a = SymMatrix::from_diagonal(&[1.0, -0.5]);
    let g = grid::uniform(1.0, 50);
    let phi = SpdPath::from_fn(g, |t| &SymMatrix::scalar(2, delta * t) + &(&a * (t * t))).unwrap();
    let k = rate::compute_k_path(&phi, delta).unwrap();
    let id = DMatrix::<f64>::identity(2, 2);
    for ((kv, d), p) in k.k_values.iter().zip(&k.derivatives).zip(&phi.values[1..]) {
        let op = id.kronecker(p.as_matrix()) + p.as_matrix().transpose().kronecker(&id);
        let rhs = (d - &SymMatrix::scalar(2, delta)) * 2.0;
        let v = op
            .lu()
            .solve(&DMatrix::from_column_slice(
                4,
                1,
                rhs.as_matrix().as_slice(),
            ))
            .unwrap();
        let oracle = DMatrix::from_column_slice(2, 2, v.as_slice());
        assert!((kv.as_matrix() - oracle).amax() < 1e-8);
    }
}

#[test]
fn laplace_is_monotone_in_the_measure() {
    let mut r = ChaCha8Rng::seed_from_u64(53);
    for i in 0..20 {
        let m = 1 + i % 3;
        let q = random_orthogonal(m, &mut r);
        let base: Vec<f64> = (0..m).map(|_| r.random_range(0.0..1.0)).collect();
        let extra: Vec<f64> = (0..m).map(|_| r.random_range(0.0..0.5)).collect();
        let w1 = SymMatrix::from_diagonal(&base).conjugate(&q);
        let w2 = &w1 + &SymMatrix::from_diagonal(&extra).conjugate(&random_orthogonal(m, &mut r));
        let dens = SymMatrix::scalar(m, r.random_range(0.0..0.5));
        let mu1 = MatrixMeasure {
            density: MatrixMeasure::constant_density(1.0, dens.clone()).density,
            ..MatrixMeasure::atom(0.5, w1)
        };
        let mu2 = MatrixMeasure {
            density: MatrixMeasure::constant_density(1.0, &dens * 1.5).density,
            ..MatrixMeasure::atom(0.5, w2)
        };
        let x = SymMatrix::scalar(m, 0.4);
        let l1 = laplace_transform(&mu1, &x, 2.0, 1.0).unwrap();
        let l2 = laplace_transform(&mu2, &x, 2.0, 1.0).unwrap();
        assert!(l2 <= l1 && l2 > 0.0 && l1 <= 1.0, "{l1} {l2}");
    }
}

#[test]
fn riccati_residual_between_atoms() {
    let mut r = ChaCha8Rng::seed_from_u64(59);
    for m in 1..=3 {
        let c = random_symmetric(m, &mut r);
        let d = c.as_matrix() * c.as_matrix();
        let mu = MatrixMeasure {
            density: MatrixMeasure::constant_density(1.0, SymMatrix::from_matrix(d)).density,
            ..MatrixMeasure::atom(0.7, SymMatrix::identity(m))
        };
        let sol = solve_riccati(&mu, 1.0, 4000).unwrap();
        assert!(
            sol.max_residual(&mu) <= 1e-6,
            "m = {m}: {}",
            sol.max_residual(&mu)
        );
        assert!(sol.max_eigenvalue() <= 1e-10);
    }
}

#[test]
fn rate_eval_on_endpoint_path_file() {
    let dir = tempfile::tempdir().unwrap();
    let m = SymMatrix::from_diagonal(&[5.0, 1.0]);
    let path = rate::optimal_endpoint_path(&m, 3.0, &grid::uniform(1.0, 10_000))
        .unwrap()
        .path;
    path.write(&dir.path().join("phi.csv")).unwrap();
    let mut spec = ExperimentSpec::new(
        ExperimentKind::RateEval,
        SimConfig {
            delta: 3.0,
            ..SimConfig::default()
        },
        RatePayload {
            path_file: Some("phi.csv".into()),
            ..RatePayload::default()
        },
    )
    .unwrap();
    spec.base_dir = Some(dir.path().to_path_buf());
    let r = harness::run_rate_eval(&spec).unwrap().result;
    let value = r.value.finite().unwrap();
    assert!((value - rate::rate_k(&m, 3.0).unwrap()).abs() < 1e-5);
}

#[test]
fn riccati_eval_on_measure_file() {
    let dir = tempfile::tempdir().unwrap();
    let theta = SymMatrix::from_rows(&[vec![0.5, 0.1], vec![0.1, 0.2]]).unwrap();
    let mu = MatrixMeasure::atom(1.0, &theta * 2.0);
    std::fs::write(
        dir.path().join("mu.json"),
        serde_json::to_string(&mu).unwrap(),
    )
    .unwrap();
    let mut spec = ExperimentSpec::new(
        ExperimentKind::RiccatiEval,
        SimConfig::default(),
        RiccatiPayload {
            measure_file: Some("mu.json".into()),
            ..RiccatiPayload::default()
        },
    )
    .unwrap();
    spec.base_dir = Some(dir.path().to_path_buf());
    let r = harness::run_riccati_eval(&spec).unwrap().result;
    let inner = &SymMatrix::identity(2) + &(&theta * 2.0);
    let expected =
        SymMatrix::from_matrix(theta.as_matrix() * inner.inverse().unwrap().as_matrix()) * -2.0;
    assert!(r.f0.max_abs_diff(&expected) < 1e-8);
}
