//! Time grids, finite-difference stencils and quadrature helpers.

use crate::error::{Error, Result};

/// `n + 1` equally spaced nodes on `[0, horizon]`.
pub fn uniform(horizon: f64, steps: usize) -> Vec<f64> {
    assert!(steps >= 1 && horizon > 0.0);
    (0..=steps)
        .map(|k| horizon * k as f64 / steps as f64)
        .collect()
}

pub fn validate(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::GridMismatch("grid needs at least 2 points".into()));
    }
    if grid[0] != 0.0 {
        return Err(Error::GridMismatch(format!(
            "grid must start at 0, got {}",
            grid[0]
        )));
    }
    if let Some(w) = grid.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::GridMismatch(format!(
            "grid not strictly increasing at index {}",
            w + 1
        )));
    }
    Ok(())
}

/// Weights of a second-order derivative stencil at node `j`: central in the
/// interior, one-sided three-point at the ends. Two-point grids fall back to
/// the plain difference quotient.
pub fn derivative_stencil(grid: &[f64], j: usize) -> Vec<(usize, f64)> {
    let n = grid.len() - 1;
    debug_assert!(n >= 1 && j <= n);
    if n == 1 {
        let h = grid[1] - grid[0];
        return vec![(0, -1.0 / h), (1, 1.0 / h)];
    }
    if j == 0 {
        let (h1, h2) = (grid[1] - grid[0], grid[2] - grid[1]);
        vec![
            (0, -(2.0 * h1 + h2) / (h1 * (h1 + h2))),
            (1, (h1 + h2) / (h1 * h2)),
            (2, -h1 / (h2 * (h1 + h2))),
        ]
    } else if j == n {
        let (h1, h2) = (grid[n - 1] - grid[n - 2], grid[n] - grid[n - 1]);
        vec![
            (n - 2, h2 / (h1 * (h1 + h2))),
            (n - 1, -(h1 + h2) / (h1 * h2)),
            (n, (2.0 * h2 + h1) / (h2 * (h1 + h2))),
        ]
    } else {
        let (h1, h2) = (grid[j] - grid[j - 1], grid[j + 1] - grid[j]);
        vec![
            (j - 1, -h2 / (h1 * (h1 + h2))),
            (j, (h2 - h1) / (h1 * h2)),
            (j + 1, h1 / (h2 * (h1 + h2))),
        ]
    }
}

/// Derivative of scalar samples at every node.
pub fn derivative(grid: &[f64], values: &[f64]) -> Vec<f64> {
    (0..grid.len())
        .map(|j| {
            derivative_stencil(grid, j)
                .into_iter()
                .map(|(i, w)| w * values[i])
                .sum()
        })
        .collect()
}

/// Per-interval integrals of nodal integrand values on `[t_0, t_n]`.
///
/// The first interval uses the right-endpoint value only (the integrand is
/// not evaluated at `t = 0`, where paths starting at the origin make the
/// rate integrands singular); every other interval is a trapezoid.
pub fn interval_contributions(grid: &[f64], integrand: &[f64]) -> Vec<f64> {
    let n = grid.len() - 1;
    let mut out = Vec::with_capacity(n);
    out.push((grid[1] - grid[0]) * integrand[1]);
    for j in 1..n {
        out.push(0.5 * (grid[j + 1] - grid[j]) * (integrand[j] + integrand[j + 1]));
    }
    out
}

/// Left-to-right sum; fixed order keeps results reproducible.
pub fn ordered_sum(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, v| acc + v)
}

/// Richardson estimate `(4·Q_h − Q_2h)/3` using every other node for the
/// coarse rule. Needs an even number of intervals.
pub fn richardson(grid: &[f64], integrand: &[f64]) -> Option<f64> {
    let n = grid.len() - 1;
    if n < 4 || !n.is_multiple_of(2) {
        return None;
    }
    let fine = ordered_sum(&interval_contributions(grid, integrand));
    let coarse_grid: Vec<f64> = grid.iter().step_by(2).copied().collect();
    let coarse_vals: Vec<f64> = integrand.iter().step_by(2).copied().collect();
    let coarse = ordered_sum(&interval_contributions(&coarse_grid, &coarse_vals));
    Some((4.0 * fine - coarse) / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencils_are_exact_for_quadratics() {
        let grid = vec![0.0, 0.1, 0.25, 0.3, 0.7, 1.0];
        let f: Vec<f64> = grid.iter().map(|t| 2.0 + 3.0 * t - 1.5 * t * t).collect();
        let d = derivative(&grid, &f);
        for (t, dv) in grid.iter().zip(&d) {
            assert!((dv - (3.0 - 3.0 * t)).abs() < 1e-12, "t={t}: {dv}");
        }
    }

    #[test]
    fn validate_rejects_bad_grids() {
        assert!(validate(&[0.0]).is_err());
        assert!(validate(&[0.1, 0.2]).is_err());
        assert!(validate(&[0.0, 0.2, 0.2]).is_err());
        assert!(validate(&uniform(1.0, 4)).is_ok());
    }

    #[test]
    fn richardson_improves_smooth_integral() {
        let grid = uniform(1.0, 64);
        let f: Vec<f64> = grid.iter().map(|t| t * t * t).collect();
        let plain = ordered_sum(&interval_contributions(&grid, &f));
        let rich = richardson(&grid, &f).unwrap();
        assert!((rich - 0.25).abs() < (plain - 0.25).abs());
    }
}
