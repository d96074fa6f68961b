//! Backward matrix Riccati equation `Ḟ + F² = μ`, `F(T) = 0`, and the
//! Laplace functional of the Wishart law it produces:
//!
//! ```text
//! E_x[exp(−½ ∫ Tr(X_s dμ_s))] = exp(½ Tr(F(0) x) + (δ/2) ∫₀ᵀ Tr F(s) ds)
//! ```
//!
//! `μ` is a finite sum of PSD atoms plus a piecewise-constant PSD density.
//! Atoms are applied as exact jumps `F(t−) = F(t) − μ({t})`; between them the
//! equation is integrated backward with classical RK4, carrying `∫ Tr F`
//! along as an extra state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid;
use crate::matrix::{classify_spd_relative, SpdClass, SymMatrix, Tolerance};
use crate::path::{matrix_series_csv, SpdPath};
use crate::rate::compute_k_path;

/// Default number of backward steps used by [`laplace_transform`].
pub const DEFAULT_RICCATI_STEPS: usize = 10_000;

/// Operator norm beyond which the backward sweep is declared to blow up.
pub const BLOW_UP_NORM: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub t: f64,
    pub weight: SymMatrix,
}

/// Piecewise-constant density: `values[i]` holds on `[grid[i], grid[i+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub grid: Vec<f64>,
    pub values: Vec<SymMatrix>,
}

impl Density {
    fn at(&self, t: f64) -> Option<&SymMatrix> {
        if t < self.grid[0] || t >= self.grid[self.grid.len() - 1] {
            return None;
        }
        let i = self.grid.partition_point(|&g| g <= t) - 1;
        self.values.get(i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeasure {
    /// Needed only when the measure has neither atoms nor density.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Density>,
}

impl MatrixMeasure {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim: Some(dim),
            atoms: Vec::new(),
            density: None,
        }
    }

    pub fn atom(t: f64, weight: SymMatrix) -> Self {
        Self {
            dim: None,
            atoms: vec![Atom { t, weight }],
            density: None,
        }
    }

    /// Constant density `c` on `[0, horizon)`.
    pub fn constant_density(horizon: f64, c: SymMatrix) -> Self {
        Self {
            dim: None,
            atoms: Vec::new(),
            density: Some(Density {
                grid: vec![0.0, horizon],
                values: vec![c],
            }),
        }
    }

    pub fn dim(&self) -> Result<usize> {
        self.atoms
            .first()
            .map(|a| a.weight.dim())
            .or_else(|| {
                self.density
                    .as_ref()
                    .and_then(|d| d.values.first())
                    .map(SymMatrix::dim)
            })
            .or(self.dim)
            .ok_or_else(|| Error::Domain("cannot infer dimension of an empty measure".into()))
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        let dim = self.dim()?;
        let psd = |m: &SymMatrix| {
            classify_spd_relative(m, Tolerance::default()).class != SpdClass::Indefinite
        };
        for (i, a) in self.atoms.iter().enumerate() {
            if !(0.0..=horizon).contains(&a.t) {
                return Err(Error::Domain(format!(
                    "atom {i} at t = {} outside [0, {horizon}]",
                    a.t
                )));
            }
            if i > 0 && !(a.t > self.atoms[i - 1].t) {
                return Err(Error::Domain(format!(
                    "atom times not strictly increasing at atom {i}"
                )));
            }
            if a.weight.dim() != dim {
                return Err(Error::Domain(format!(
                    "atom {i} has dim {}",
                    a.weight.dim()
                )));
            }
            if !psd(&a.weight) {
                return Err(Error::Domain(format!(
                    "atom {i} weight is not positive semidefinite"
                )));
            }
        }
        if let Some(d) = &self.density {
            if d.grid.len() < 2 || d.values.len() + 1 != d.grid.len() {
                return Err(Error::Domain(format!(
                    "density needs grid.len() = values.len() + 1, got {} and {}",
                    d.grid.len(),
                    d.values.len()
                )));
            }
            if d.grid.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Domain("density grid not strictly increasing".into()));
            }
            for (i, v) in d.values.iter().enumerate() {
                if v.dim() != dim {
                    return Err(Error::Domain(format!(
                        "density value {i} has dim {}",
                        v.dim()
                    )));
                }
                if !psd(v) {
                    return Err(Error::Domain(format!(
                        "density value {i} is not positive semidefinite"
                    )));
                }
            }
        }
        Ok(())
    }

    fn density_at(&self, t: f64, dim: usize) -> SymMatrix {
        self.density
            .as_ref()
            .and_then(|d| d.at(t))
            .cloned()
            .unwrap_or_else(|| SymMatrix::zeros(dim))
    }

    /// Largest operator norm among atoms and density values.
    pub fn scale(&self) -> f64 {
        let atoms = self.atoms.iter().map(|a| a.weight.norms().operator);
        let dens = self
            .density
            .iter()
            .flat_map(|d| d.values.iter().map(|v| v.norms().operator));
        atoms.chain(dens).fold(0.0, f64::max)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Right-continuous solution on its integration grid, with left limits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiccatiSolution {
    pub grid: Vec<f64>,
    /// `F(t)`, right-continuous.
    pub values: Vec<SymMatrix>,
    /// `F(t−)`; differs from `values` only at atoms.
    pub left_values: Vec<SymMatrix>,
    /// `∫₀ᵀ Tr F(s) ds`.
    pub trace_integral: f64,
}

impl RiccatiSolution {
    /// `F(0−)`: the value seen by the initial condition, including an atom at 0.
    pub fn initial(&self) -> &SymMatrix {
        &self.left_values[0]
    }

    /// Largest eigenvalue over all stored values and left limits.
    pub fn max_eigenvalue(&self) -> f64 {
        self.values
            .iter()
            .chain(&self.left_values)
            .map(SymMatrix::max_eigenvalue)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest finite-difference residual `‖ΔF/h + F̄² − μ‖₂` over intervals
    /// between atoms, relative to `1 + ‖μ‖`.
    pub fn max_residual(&self, mu: &MatrixMeasure) -> f64 {
        let dim = self.values[0].dim();
        let scale = 1.0 + mu.scale();
        (0..self.grid.len() - 1)
            .map(|j| {
                let h = self.grid[j + 1] - self.grid[j];
                let (a, b) = (&self.values[j], &self.left_values[j + 1]);
                let mid = (a + b) * 0.5;
                let dens = mu.density_at(0.5 * (self.grid[j] + self.grid[j + 1]), dim);
                let r = (b - a) * (1.0 / h) + mid.sandwich(&SymMatrix::identity(dim)) - dens;
                r.frobenius() / scale
            })
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        matrix_series_csv(&self.grid, &self.values, "f")
    }
}

fn integration_grid(mu: &MatrixMeasure, horizon: f64, steps: usize) -> Vec<f64> {
    let mut g = grid::uniform(horizon, steps);
    g.extend(mu.atoms.iter().map(|a| a.t));
    if let Some(d) = &mu.density {
        g.extend(d.grid.iter().copied().filter(|&t| t > 0.0 && t < horizon));
    }
    g.sort_by(f64::total_cmp);
    let merge = 1e-12 * horizon;
    let mut out: Vec<f64> = Vec::with_capacity(g.len());
    for t in g {
        match out.last() {
            Some(&last) if t - last <= merge => {}
            _ => out.push(t),
        }
    }
    // Atoms snap onto grid nodes; the horizon itself must be the last node.
    *out.last_mut().expect("non-empty grid") = horizon;
    out
}

/// Integrates `Ḟ + F² = μ`, `F(T) = 0` backward over `steps` uniform steps
/// (plus any atom times and density breakpoints).
pub fn solve_riccati(mu: &MatrixMeasure, horizon: f64, steps: usize) -> Result<RiccatiSolution> {
    if !(horizon > 0.0) || steps == 0 {
        return Err(Error::Config(
            "Riccati needs horizon > 0 and steps >= 1".into(),
        ));
    }
    mu.validate(horizon)?;
    let dim = mu.dim()?;
    let g = integration_grid(mu, horizon, steps);
    let n = g.len() - 1;
    let merge = 1e-12 * horizon;
    let atom_at = |t: f64| {
        mu.atoms
            .iter()
            .find(|a| (a.t - t).abs() <= merge)
            .map(|a| &a.weight)
    };

    let mut values = vec![SymMatrix::zeros(dim); n + 1];
    let mut left_values = vec![SymMatrix::zeros(dim); n + 1];
    let mut f = SymMatrix::zeros(dim);
    let mut trace_integral = 0.0;
    values[n] = f.clone();
    if let Some(w) = atom_at(g[n]) {
        f = &f - w;
    }
    left_values[n] = f.clone();

    let square = |x: &SymMatrix| x.sandwich(&SymMatrix::identity(dim));
    for j in (0..n).rev() {
        let h = g[j + 1] - g[j];
        let dens = mu.density_at(0.5 * (g[j] + g[j + 1]), dim);
        // Backward in time: dF/ds = F² − μ with s = T − t.
        let rhs = |x: &SymMatrix| &square(x) - &dens;
        let k1 = rhs(&f);
        let f2 = &f + &(&k1 * (0.5 * h));
        let k2 = rhs(&f2);
        let f3 = &f + &(&k2 * (0.5 * h));
        let k3 = rhs(&f3);
        let f4 = &f + &(&k3 * h);
        let k4 = rhs(&f4);
        trace_integral += h / 6.0 * (f.trace() + 2.0 * f2.trace() + 2.0 * f3.trace() + f4.trace());
        f = &f + &((k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0));
        let norm = f.norms().operator;
        if !(norm <= BLOW_UP_NORM) {
            return Err(Error::BlowUp { t: g[j], norm });
        }
        values[j] = f.clone();
        if let Some(w) = atom_at(g[j]) {
            f = &f - w;
        }
        left_values[j] = f.clone();
    }
    Ok(RiccatiSolution {
        grid: g,
        values,
        left_values,
        trace_integral,
    })
}

/// `exp(½ Tr(F(0) x) + (δ/2) ∫ Tr F)` with [`DEFAULT_RICCATI_STEPS`] steps.
pub fn laplace_transform(
    mu: &MatrixMeasure,
    x: &SymMatrix,
    delta: f64,
    horizon: f64,
) -> Result<f64> {
    laplace_transform_with(mu, x, delta, horizon, DEFAULT_RICCATI_STEPS).map(|(v, _)| v)
}

/// Like [`laplace_transform`] but with an explicit step count; also returns
/// the Riccati solution used.
pub fn laplace_transform_with(
    mu: &MatrixMeasure,
    x: &SymMatrix,
    delta: f64,
    horizon: f64,
    steps: usize,
) -> Result<(f64, RiccatiSolution)> {
    if classify_spd_relative(x, Tolerance::default()).class == SpdClass::Indefinite {
        return Err(Error::Domain(
            "starting point must be positive semidefinite".into(),
        ));
    }
    if x.dim() != mu.dim()? {
        return Err(Error::Domain(
            "starting point and measure dims differ".into(),
        ));
    }
    let sol = solve_riccati(mu, horizon, steps)?;
    let exponent = 0.5 * sol.initial().trace_product(x) + 0.5 * delta * sol.trace_integral;
    Ok((exponent.exp(), sol))
}

/// `E[exp(−Tr(X_T Θ))]` for the Wishart SDE with noise level `ε`, in closed
/// form: `det(I + 2Tε²Θ)^{−δ/(2ε²)} exp(−Tr(x (I + 2Tε²Θ)⁻¹ Θ))`.
/// At `ε = 0` the process is deterministic and the value is `exp(−Tr((x + δT)Θ))`.
pub fn wishart_laplace_closed_form(
    theta: &SymMatrix,
    x: &SymMatrix,
    delta: f64,
    epsilon: f64,
    horizon: f64,
) -> Result<f64> {
    let dim = theta.dim();
    if epsilon == 0.0 {
        let end = x + &SymMatrix::scalar(dim, delta * horizon);
        return Ok((-end.trace_product(theta)).exp());
    }
    let s = 2.0 * horizon * epsilon * epsilon;
    let inner = &SymMatrix::identity(dim) + &(theta * s);
    let ev = inner.eigenvalues();
    if ev[0] <= 0.0 {
        return Err(Error::Domain("I + 2Tε²Θ must be positive definite".into()));
    }
    let log_det: f64 = ev.iter().map(|v| v.ln()).sum();
    let resolvent = SymMatrix::from_matrix(inner.inverse()?.as_matrix() * theta.as_matrix());
    Ok((-0.5 * delta / (epsilon * epsilon) * log_det - resolvent.trace_product(x)).exp())
}

/// The same expectation through the Riccati solver, by rescaling to unit
/// noise: `X/ε²` is a Wishart process with drift `δ/ε²` started at `x/ε²`.
pub fn wishart_laplace_riccati(
    theta: &SymMatrix,
    x: &SymMatrix,
    delta: f64,
    epsilon: f64,
    horizon: f64,
    steps: usize,
) -> Result<(f64, RiccatiSolution)> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain("Riccati route needs ε > 0".into()));
    }
    let e2 = epsilon * epsilon;
    let mu = MatrixMeasure::atom(horizon, theta * (2.0 * e2));
    laplace_transform_with(&mu, &(x * (1.0 / e2)), delta / e2, horizon, steps)
}

/// Supremum of `Tr(ΘM) + (δ/2) ln det(I − 2Θ)` and its maximizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LegendreK {
    pub value: f64,
    pub theta: SymMatrix,
}

/// Closed-form maximizer `Θ₀ = ½(I − δM⁻¹)`, i.e. `M = δ(I − 2Θ₀)⁻¹`.
pub fn legendre_k(m: &SymMatrix, delta: f64) -> Result<LegendreK> {
    if classify_spd_relative(m, Tolerance::default()).class != SpdClass::PositiveDefinite {
        return Err(Error::Domain(
            "Legendre transform needs a positive definite matrix".into(),
        ));
    }
    let dim = m.dim();
    let id = SymMatrix::identity(dim);
    let theta = (&id - &(m.inverse()? * delta)) * 0.5;
    let gap = &id - &(&theta * 2.0);
    let gap_ev = gap.eigenvalues();
    if gap_ev[0] <= 0.0 {
        return Err(Error::Domain("optimizer left the domain I − 2Θ ≻ 0".into()));
    }
    let log_det: f64 = gap_ev.iter().map(|v| v.ln()).sum();
    let value = theta.trace_product(m) + 0.5 * delta * log_det;
    Ok(LegendreK { value, theta })
}

/// `½∫Tr(F(φ̇ − δI)) − ½∫Tr(F²φ)` at `F = k_φ/2`; equals the path rate.
pub fn correspondence_check(phi: &SpdPath, delta: f64) -> Result<f64> {
    let k = compute_k_path(phi, delta)?;
    let dim = phi.dim();
    let drift = SymMatrix::scalar(dim, delta);
    let mut integrand = vec![0.0; phi.len()];
    for (j, (kj, dj)) in k.k_values.iter().zip(&k.derivatives).enumerate() {
        let f = kj * 0.5;
        let p = &phi.values[j + 1];
        let f2 = f.sandwich(&SymMatrix::identity(dim));
        integrand[j + 1] = 0.5 * f.trace_product(&(dj - &drift)) - 0.5 * f2.trace_product(p);
    }
    Ok(grid::ordered_sum(&grid::interval_contributions(
        &phi.grid, &integrand,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta_closed_form(theta: &SymMatrix, t: f64) -> SymMatrix {
        let dim = theta.dim();
        let inner = &SymMatrix::identity(dim) + &(theta * (2.0 * (1.0 - t)));
        let prod = theta.as_matrix() * inner.inverse().unwrap().as_matrix();
        SymMatrix::from_matrix(prod) * -2.0
    }

    #[test]
    fn zero_measure_gives_zero_solution() {
        let sol = solve_riccati(&MatrixMeasure::zero(2), 1.0, 100).unwrap();
        assert!(sol.values.iter().all(|f| f.frobenius() == 0.0));
        let v =
            laplace_transform(&MatrixMeasure::zero(2), &SymMatrix::identity(2), 2.0, 1.0).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn terminal_atom_closed_form() {
        let theta = SymMatrix::from_rows(&[vec![0.4, 0.1], vec![0.1, 0.2]]).unwrap();
        let mu = MatrixMeasure::atom(1.0, &theta * 2.0);
        let sol = solve_riccati(&mu, 1.0, 1000).unwrap();
        let n = sol.grid.len() - 1;
        assert_eq!(sol.values[n].frobenius(), 0.0);
        assert!(sol.left_values[n].max_abs_diff(&(&theta * -2.0)) < 1e-15);
        for (t, f) in sol.grid[..n].iter().zip(&sol.values) {
            assert!(f.max_abs_diff(&theta_closed_form(&theta, *t)) < 1e-8);
        }
        assert!(sol.max_eigenvalue() <= 1e-12);
    }

    #[test]
    fn constant_density_scalar_closed_form() {
        // F(t) = −c tanh(c(T − t)) solves Ḟ + F² = c².
        let (c, horizon) = (1.3, 1.5);
        let mu = MatrixMeasure::constant_density(horizon, SymMatrix::scalar(1, c * c));
        let sol = solve_riccati(&mu, horizon, 2000).unwrap();
        for (t, f) in sol.grid.iter().zip(&sol.values) {
            let exact = -c * (c * (horizon - t)).tanh();
            assert!((f.get(0, 0) - exact).abs() < 1e-8);
        }
        // ∫₀ᵀ −c tanh(c(T−s)) ds = −ln cosh(cT)
        assert!((sol.trace_integral + (c * horizon).cosh().ln()).abs() < 1e-10);
        assert!(sol.max_residual(&mu) < 1e-6);
    }

    #[test]
    fn laplace_matches_closed_form_with_start_point() {
        let (dim, delta) = (2, 3.0);
        let theta = SymMatrix::scalar(dim, 0.3);
        let x = SymMatrix::from_rows(&[vec![1.0, 0.2], vec![0.2, 0.5]]).unwrap();
        let v = laplace_transform(&MatrixMeasure::atom(1.0, &theta * 2.0), &x, delta, 1.0).unwrap();
        let inner = &SymMatrix::identity(dim) + &(&theta * 2.0);
        let det: f64 = inner.eigenvalues().iter().product();
        let tr = SymMatrix::from_matrix(inner.inverse().unwrap().as_matrix() * theta.as_matrix())
            .trace_product(&x);
        let expected = det.powf(-delta / 2.0) * (-tr).exp();
        assert!((v - expected).abs() < 1e-6);
    }

    #[test]
    fn atom_at_origin_acts_on_start_point() {
        let w = SymMatrix::scalar(1, 0.8);
        let mu = MatrixMeasure::atom(0.0, w.clone());
        let x = SymMatrix::scalar(1, 2.0);
        let v = laplace_transform(&mu, &x, 1.0, 1.0).unwrap();
        // Only X₀ = x is charged: exp(−½·0.8·2).
        assert!((v - (-0.8f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn invalid_measures_rejected() {
        let bad = MatrixMeasure::atom(1.0, SymMatrix::from_diagonal(&[1.0, -1.0]));
        assert!(solve_riccati(&bad, 1.0, 10).is_err());
        let late = MatrixMeasure::atom(2.0, SymMatrix::identity(1));
        assert!(solve_riccati(&late, 1.0, 10).is_err());
        let unsorted = MatrixMeasure {
            dim: None,
            atoms: vec![
                Atom {
                    t: 0.5,
                    weight: SymMatrix::identity(1),
                },
                Atom {
                    t: 0.2,
                    weight: SymMatrix::identity(1),
                },
            ],
            density: None,
        };
        assert!(unsorted.validate(1.0).is_err());
    }

    #[test]
    fn measure_json_schema() {
        let text = r#"{"atoms": [{"t": 1.0, "weight": [[0.6, 0.0], [0.0, 0.6]]}],
                       "density": {"grid": [0.0, 0.5], "values": [[[1.0, 0.0], [0.0, 2.0]]]}}"#;
        let mu = MatrixMeasure::from_json(text).unwrap();
        assert_eq!(mu.dim().unwrap(), 2);
        assert!(mu.validate(1.0).is_ok());
        let back: MatrixMeasure =
            serde_json::from_str(&serde_json::to_string(&mu).unwrap()).unwrap();
        assert_eq!(back, mu);
    }

    #[test]
    fn closed_form_and_riccati_agree_at_small_noise() {
        let theta = SymMatrix::from_rows(&[vec![0.5, -0.1], vec![-0.1, 0.3]]).unwrap();
        let x = SymMatrix::from_diagonal(&[0.4, 0.9]);
        for &eps in &[1.0, 0.5, 0.3] {
            let a = wishart_laplace_closed_form(&theta, &x, 3.0, eps, 1.3).unwrap();
            let (b, sol) = wishart_laplace_riccati(&theta, &x, 3.0, eps, 1.3, 4000).unwrap();
            assert!(
                (a - b).abs() < 1e-9 * a.max(1e-300),
                "eps {eps}: {a} vs {b}"
            );
            assert!(sol.max_eigenvalue() <= 1e-12);
        }
        let d = wishart_laplace_closed_form(&theta, &x, 3.0, 0.0, 1.0).unwrap();
        let end = &x + &SymMatrix::scalar(2, 3.0);
        assert!((d - (-end.trace_product(&theta)).exp()).abs() < 1e-15);
    }

    #[test]
    fn legendre_examples() {
        let r = legendre_k(&SymMatrix::scalar(2, 3.0), 3.0).unwrap();
        assert!(r.value.abs() < 1e-14);
        assert!(r.theta.frobenius() < 1e-14);

        let r = legendre_k(&SymMatrix::scalar(1, 2.0), 1.0).unwrap();
        assert!((r.theta.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((r.value - 0.5 * (1.0 - 2f64.ln())).abs() < 1e-14);

        assert!(legendre_k(&SymMatrix::from_diagonal(&[1.0, 0.0]), 1.0).is_err());
    }
}
