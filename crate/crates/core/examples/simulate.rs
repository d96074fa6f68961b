//! Simulate one Wishart path and the matching eigenvalue SDE.

use wishart_ldp::simulator::{self, SimConfig};
use wishart_ldp::SymMatrix;

fn main() -> wishart_ldp::Result<()> {
    let cfg = SimConfig {
        dim: 2,
        delta: 3.0,
        epsilon: 0.4,
        steps: 1000,
        seed: 7,
        ..SimConfig::default()
    };
    let (path, repair) = simulator::simulate_wishart_replica(&cfg, &SymMatrix::zeros(2), 0)?;
    for j in (0..=cfg.steps).step_by(250) {
        println!(
            "t = {:.2}  X = {:?}",
            path.grid[j],
            path.values[j].to_rows()
        );
    }
    println!(
        "repaired steps: {} of {}",
        repair.repaired_steps, repair.steps
    );

    let eig = simulator::simulate_eigenvalues(&cfg, &[0.0, 0.0])?;
    println!(
        "eigenvalue SDE at t = 1: {:.4} {:.4} (sort events {})",
        eig.paths[0].last(),
        eig.paths[1].last(),
        eig.sort_events
    );

    let cfg = SimConfig {
        replicas: 5000,
        ..cfg
    };
    let ens = simulator::wishart_terminal_ensemble(&cfg, &SymMatrix::zeros(2))?;
    let mean = ens.terminals.iter().map(SymMatrix::trace).sum::<f64>() / cfg.replicas as f64;
    println!(
        "mean trace at t = 1 over {} replicas: {mean:.4} (drift gives 6)",
        cfg.replicas
    );
    Ok(())
}
