//! Endpoint rate: closed form, Legendre transform and the optimal path.

use wishart_ldp::{grid, legendre_k, rate, riccati, SymMatrix};

fn main() -> wishart_ldp::Result<()> {
    let delta = 3.0;
    let m = SymMatrix::from_diagonal(&[5.0, 1.0]);
    let k = rate::rate_k(&m, delta)?;
    let leg = legendre_k(&m, delta)?;
    println!("K(M) = {k:.10}, Legendre sup = {:.10}", leg.value);
    println!("optimal theta = {:?}", leg.theta.to_rows());

    let opt = rate::optimal_endpoint_path(&m, delta, &grid::uniform(1.0, 10_000))?;
    let i = rate::rate_i(&opt.path, delta)?.expect_finite();
    println!(
        "I(optimal path) = {i:.10}, Euler-Lagrange residual {:e}",
        opt.euler_lagrange_residual
    );
    println!(
        "Riccati correspondence = {:.10}",
        riccati::correspondence_check(&opt.path, delta)?
    );
    Ok(())
}
