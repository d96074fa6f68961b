//! Solve `AX + XA = B` and take a matrix square root.

use wishart_ldp::{norms, solve_sylvester, sqrt_spd, SymMatrix};

fn main() -> wishart_ldp::Result<()> {
    let a = SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]])?;
    let b = SymMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]])?;
    let x = solve_sylvester(&a, &b)?;
    println!("X = {:?}", x.to_rows());
    let resid = &x.jordan(&a) * 2.0 - b;
    println!("residual frobenius = {:e}", resid.frobenius());

    let s = sqrt_spd(&a)?;
    println!("sqrt(A) = {:?}", s.to_rows());
    let n = norms(&a);
    println!(
        "trace norm {}, frobenius {}, operator {}",
        n.trace_norm, n.frobenius, n.operator
    );
    Ok(())
}
