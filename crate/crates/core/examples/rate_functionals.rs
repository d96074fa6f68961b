//! Rate functionals on a smooth path, its eigenvalue counterpart and the dual bound.

use wishart_ldp::{grid, rate, ScalarPath, SpdPath, SymMatrix};

fn main() -> wishart_ldp::Result<()> {
    let delta = 3.0;
    let g = grid::uniform(1.0, 2000);
    let phi = SpdPath::from_fn(g.clone(), |t| {
        SymMatrix::from_diagonal(&[delta * t + t * t, delta * t - 0.5 * t * t])
    })?;

    let report = rate::rate_i(&phi, delta)?;
    println!(
        "I(phi) = {:.6}  (richardson {:?})",
        report.expect_finite(),
        report.richardson
    );

    let comps = vec![
        ScalarPath::from_fn(g.clone(), |t| delta * t + t * t)?,
        ScalarPath::from_fn(g.clone(), |t| delta * t - 0.5 * t * t)?,
    ];
    println!(
        "J(eigenvalues) = {:.6}",
        rate::rate_j(&comps, delta)?.expect_finite()
    );

    let k = rate::compute_k_path(&phi, delta)?;
    let h: Vec<SymMatrix> = k.full_values().iter().map(|v| v * 0.25).collect();
    println!("dual at h = k/4: {:.6}", rate::dual_phi(&phi, &h, delta)?);
    let h_half: Vec<SymMatrix> = h.iter().map(|v| v * 0.5).collect();
    println!(
        "dual at h = k/8: {:.6}",
        rate::dual_phi(&phi, &h_half, delta)?
    );
    Ok(())
}
