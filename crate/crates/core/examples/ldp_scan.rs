//! Tube probabilities around a scalar path at decreasing noise levels.

use wishart_ldp::harness::{self, ExperimentKind, ExperimentSpec, LdpPayload, Target};
use wishart_ldp::simulator::SimConfig;
use wishart_ldp::SymMatrix;

fn main() -> wishart_ldp::Result<()> {
    let sim = SimConfig {
        dim: 1,
        delta: 1.0,
        replicas: 20_000,
        seed: 3,
        ..SimConfig::default()
    };
    let payload = LdpPayload {
        target: Target::Polynomial {
            coefficients: vec![
                SymMatrix::scalar(1, 0.0),
                SymMatrix::scalar(1, 1.0),
                SymMatrix::scalar(1, 0.5),
            ],
        },
        tube_radius: 0.3,
        epsilons: vec![0.2, 0.15, 0.12],
        ..LdpPayload::default()
    };
    let spec = ExperimentSpec::new(ExperimentKind::LdpScan, sim, payload)?;
    let r = harness::run_ldp_scan(&spec)?.result;
    for p in &r.points {
        println!(
            "eps {:.2}: {} hits, eps^2 ln P = {:?}",
            p.epsilon, p.hits, p.scaled_log_prob
        );
    }
    println!(
        "target rate {:?}, slope {:?}, bracket {:?}",
        r.target_rate, r.slope_estimate, r.bracket
    );
    Ok(())
}
