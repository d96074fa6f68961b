//! Rate of the largest eigenvalue: running infimum, path rate, endpoint rate and class check.

use wishart_ldp::{grid, rate, ScalarPath};

fn main() -> wishart_ldp::Result<()> {
    let (delta, m) = (2.0, 3);
    let g = grid::uniform(1.0, 2000);
    let f = ScalarPath::from_fn(g, |t| delta * t + 0.6 * (8.0 * t).sin() * t)?;
    let under = rate::underline_f(&f, delta);
    println!(
        "f(1) = {:.4}, underline f(1) = {:.4}",
        f.last(),
        under.last()
    );

    let report = rate::rate_i_max(&f, delta, m)?;
    println!(
        "I_max(f) = {:?}, not in class F: {}",
        report.value, report.flags.not_in_class_f
    );
    let diag = rate::class_f_diagnostic(&f, delta);
    println!(
        "class F verdict: {:?} ({} contact nodes)",
        diag.verdict, diag.contact_nodes
    );

    for a in [0.5, 1.0, 2.0, 4.0] {
        println!("K_max({a}) = {:.6}", rate::rate_k_max(a, delta, m)?);
    }
    Ok(())
}
