//! Backward Riccati solve and the Laplace transform it produces.

use wishart_ldp::riccati::{laplace_transform_with, wishart_laplace_closed_form, MatrixMeasure};
use wishart_ldp::SymMatrix;

fn main() -> wishart_ldp::Result<()> {
    let theta = SymMatrix::from_rows(&[vec![0.4, 0.1], vec![0.1, 0.2]])?;
    let x = SymMatrix::scalar(2, 0.5);
    let delta = 3.0;

    let mu = MatrixMeasure::atom(1.0, &theta * 2.0);
    let (value, sol) = laplace_transform_with(&mu, &x, delta, 1.0, 10_000)?;
    let exact = wishart_laplace_closed_form(&theta, &x, delta, 1.0, 1.0)?;
    println!("Riccati Laplace {value:.10}, closed form {exact:.10}");
    println!("F(0) = {:?}", sol.initial().to_rows());
    println!(
        "max eigenvalue of F over the grid: {:e}",
        sol.max_eigenvalue()
    );

    // An atom plus a constant density.
    let mixed = MatrixMeasure {
        density: MatrixMeasure::constant_density(1.0, SymMatrix::scalar(2, 0.3)).density,
        ..MatrixMeasure::atom(0.5, theta)
    };
    let (value, _) = laplace_transform_with(&mixed, &x, delta, 1.0, 10_000)?;
    println!("atom at 0.5 plus density 0.3 I: {value:.8}");
    Ok(())
}
