//! Monte Carlo check of the Laplace transform against the closed form.

use wishart_ldp::harness::{self, ExperimentKind, ExperimentSpec};
use wishart_ldp::simulator::SimConfig;

fn main() -> wishart_ldp::Result<()> {
    let sim = SimConfig {
        dim: 2,
        delta: 3.0,
        replicas: 20_000,
        seed: 1,
        ..SimConfig::default()
    };
    let spec = ExperimentSpec::new(ExperimentKind::LaplaceCheck, sim, ())?;
    let report = harness::run_laplace_check(&spec)?;
    for e in &report.result.entries {
        println!(
            "empirical {:.5} +- {:.5}  analytic {:.5}  z {:+.2}",
            e.empirical.mean, e.empirical.standard_error, e.analytic, e.z_score
        );
    }
    println!(
        "status {:?}, repair rate {:.2e}",
        report.status,
        report.result.repair.repair_rate()
    );
    Ok(())
}
