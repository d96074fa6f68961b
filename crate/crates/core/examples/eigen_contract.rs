//! Largest eigenvalue from full-matrix paths versus the eigenvalue SDE.

use wishart_ldp::harness::{self, ExperimentKind, ExperimentSpec};
use wishart_ldp::simulator::SimConfig;

fn main() -> wishart_ldp::Result<()> {
    let sim = SimConfig {
        dim: 2,
        delta: 3.0,
        epsilon: 0.4,
        replicas: 4000,
        seed: 11,
        ..SimConfig::default()
    };
    let spec = ExperimentSpec::new(ExperimentKind::EigenContract, sim, ())?;
    let report = harness::run_eigen_contract(&spec)?;
    let r = &report.result;
    println!(
        "KS distance {:.4} (threshold {})",
        r.ks_distance, r.ks_threshold
    );
    println!(
        "mean lambda_max: full {:.4}, eigen SDE {:.4}",
        r.mean_full.mean, r.mean_eigen.mean
    );
    println!(
        "diagonal path: I = {:.8}, J = {:.8}",
        r.diagonal_rate_i, r.diagonal_rate_j
    );
    println!("status {:?}", report.status);
    Ok(())
}
