//! Rate functionals of the small-noise Wishart family.
//!
//! * path rate `I(φ) = ⅛ ∫ Tr(k φ k)` with `k φ + φ k = 2(φ̇ − δI)`,
//! * the dual functional `Φ(φ; h)` whose supremum over `h` is `I(φ)`,
//! * eigenvalue rate `J`, endpoint rate `K`, and the largest-eigenvalue
//!   rates `I_max`, `K_max`.
//!
//! Derivatives are second-order finite differences on the path's grid. The
//! node `t = 0` is never used as a Sylvester coefficient (paths start at the
//! zero matrix); the first interval is integrated with the integrand at its
//! right endpoint.

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid;
use crate::matrix::{classify_spd_relative, solve_sylvester_with, SpdClass, SymMatrix, Tolerance};
use crate::path::{ScalarPath, SpdPath};

/// Number of leading grid points inspected by the small-time diagnostic.
pub const SMALL_TIME_POINTS: usize = 10;

/// A rate value; infinity is an explicit variant rather than an `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum RateValue {
    Finite(f64),
    #[serde(deserialize_with = "deserialize_infinite")]
    Infinite,
}

fn deserialize_infinite<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<(), D::Error> {
    let s = String::deserialize(d)?;
    if s == "+inf" {
        Ok(())
    } else {
        Err(serde::de::Error::custom("expected \"+inf\""))
    }
}

impl Serialize for RateValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RateValue::Finite(v) => s.serialize_f64(*v),
            RateValue::Infinite => s.serialize_str("+inf"),
        }
    }
}

impl RateValue {
    pub fn finite(&self) -> Option<f64> {
        match self {
            RateValue::Finite(v) => Some(*v),
            RateValue::Infinite => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, RateValue::Finite(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub struct RateFlags {
    pub small_time_limit_ok: bool,
    pub derivative_clipped: u64,
    pub singular_sylvester_skipped: u64,
    pub not_in_class_f: bool,
    pub infinite: bool,
}

impl Default for RateFlags {
    fn default() -> Self {
        Self {
            small_time_limit_ok: true,
            derivative_clipped: 0,
            singular_sylvester_skipped: 0,
            not_in_class_f: false,
            infinite: false,
        }
    }
}

/// Value of a rate functional with its per-interval breakdown.
///
/// For finite values, `value` is the left-to-right sum of `contributions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub value: RateValue,
    pub contributions: Vec<f64>,
    /// `(4·Q_h − Q_2h)/3`, present when the grid has an even number of intervals.
    pub richardson: Option<f64>,
    pub flags: RateFlags,
}

impl RateReport {
    fn from_integrand(grid: &[f64], integrand: &[f64], flags: RateFlags) -> Self {
        let contributions = grid::interval_contributions(grid, integrand);
        let value = if flags.infinite {
            RateValue::Infinite
        } else {
            RateValue::Finite(grid::ordered_sum(&contributions))
        };
        RateReport {
            value,
            contributions,
            richardson: grid::richardson(grid, integrand),
            flags,
        }
    }

    /// Finite value, panicking on the infinite sentinel. Test convenience.
    pub fn expect_finite(&self) -> f64 {
        self.value.finite().expect("rate is infinite")
    }
}

/// `k_φ` on every grid node after the first, together with the derivative
/// estimate used to build it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KPath {
    /// Full grid of the source path, including `t = 0`.
    pub grid: Vec<f64>,
    /// `k` at `grid[1..]`.
    pub k_values: Vec<SymMatrix>,
    /// `φ̇` at `grid[1..]`.
    pub derivatives: Vec<SymMatrix>,
}

impl KPath {
    /// `k` on the whole grid; the value at `t = 0` is extrapolated linearly
    /// from the next two nodes (or copied when only one is available).
    pub fn full_values(&self) -> Vec<SymMatrix> {
        let mut out = Vec::with_capacity(self.grid.len());
        let k0 = if self.k_values.len() >= 2 {
            let (t1, t2) = (self.grid[1], self.grid[2]);
            let w = t1 / (t2 - t1);
            &self.k_values[0] * (1.0 + w) - &self.k_values[1] * w
        } else {
            self.k_values[0].clone()
        };
        out.push(k0);
        out.extend(self.k_values.iter().cloned());
        out
    }

    /// Largest relative Sylvester residual `‖kφ + φk − 2(φ̇ − δI)‖ / (1 + ‖rhs‖)`.
    pub fn max_residual(&self, phi: &SpdPath, delta: f64) -> f64 {
        let m = phi.dim();
        self.k_values
            .iter()
            .zip(&self.derivatives)
            .zip(&phi.values[1..])
            .map(|((k, d), p)| {
                let rhs = (d - &SymMatrix::scalar(m, delta)) * 2.0;
                let lhs = k.jordan(p) * 2.0;
                (&lhs - &rhs).frobenius() / (1.0 + rhs.frobenius())
            })
            .fold(0.0, f64::max)
    }
}

fn matrix_derivative(grid: &[f64], values: &[SymMatrix], j: usize) -> SymMatrix {
    let m = values[0].dim();
    grid::derivative_stencil(grid, j)
        .into_iter()
        .fold(SymMatrix::zeros(m), |acc, (i, w)| acc + &values[i] * w)
}

/// Solves `k φ + φ k = 2(φ̇ − δI)` at every node with `t > 0`.
pub fn compute_k_path(phi: &SpdPath, delta: f64) -> Result<KPath> {
    let tol = Tolerance::default();
    let m = phi.dim();
    let drift = SymMatrix::scalar(m, delta);
    let n = phi.len() - 1;
    let mut k_values = Vec::with_capacity(n);
    let mut derivatives = Vec::with_capacity(n);
    for j in 1..=n {
        let p = &phi.values[j];
        if classify_spd_relative(p, tol).class != SpdClass::PositiveDefinite {
            return Err(Error::DegeneratePath {
                index: j,
                t: phi.grid[j],
            });
        }
        let d = matrix_derivative(&phi.grid, &phi.values, j);
        let k = solve_sylvester_with(p, &((&d - &drift) * 2.0), tol).map_err(|_| {
            Error::DegeneratePath {
                index: j,
                t: phi.grid[j],
            }
        })?;
        k_values.push(k);
        derivatives.push(d);
    }
    Ok(KPath {
        grid: phi.grid.clone(),
        k_values,
        derivatives,
    })
}

/// Outcome of the `φ(t)/t → δI` check on the first grid points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallTimeCheck {
    pub ok: bool,
    /// Deviation grows toward `t = 0`: the rate is taken to be infinite.
    pub diverging: bool,
}

/// Inspects `‖φ(t)/t − δI‖₁` over the first [`SMALL_TIME_POINTS`] nodes
/// after the origin; the deviation must shrink as `t → 0`.
pub fn small_time_check(phi: &SpdPath, delta: f64) -> SmallTimeCheck {
    let m = phi.dim();
    let drift = SymMatrix::scalar(m, delta);
    let devs: Vec<f64> = (1..phi.len())
        .take(SMALL_TIME_POINTS)
        .map(|j| {
            let t = phi.grid[j];
            (&(&phi.values[j] * (1.0 / t)) - &drift).norms().trace_norm
        })
        .collect();
    trend_toward_zero(&devs, delta * m as f64)
}

fn trend_toward_zero(devs: &[f64], scale: f64) -> SmallTimeCheck {
    let floor = 1e-9 * (1.0 + scale);
    let (first, last) = (devs[0], devs[devs.len() - 1]);
    if first <= floor {
        return SmallTimeCheck {
            ok: true,
            diverging: false,
        };
    }
    let diverging = devs.len() > 1 && first > 2.0 * last + floor;
    SmallTimeCheck {
        ok: devs.len() > 1 && first < last,
        diverging,
    }
}

/// `I(φ) = ⅛ ∫₀ᵀ Tr(k_φ φ k_φ) ds`.
pub fn rate_i(phi: &SpdPath, delta: f64) -> Result<RateReport> {
    let k = compute_k_path(phi, delta)?;
    let mut integrand = vec![0.0; phi.len()];
    for (j, kj) in k.k_values.iter().enumerate() {
        integrand[j + 1] = 0.125 * kj.sandwich(&phi.values[j + 1]).trace();
    }
    let check = small_time_check(phi, delta);
    let flags = RateFlags {
        small_time_limit_ok: check.ok,
        infinite: check.diverging,
        ..RateFlags::default()
    };
    Ok(RateReport::from_integrand(&phi.grid, &integrand, flags))
}

/// Dual functional `Φ(φ; h) = ∫ Tr(h(φ̇ − δI)) − 2 ∫ Tr(h φ h)` for
/// absolutely continuous `φ`. `h` is given on every node of `φ`'s grid;
/// its value at `t = 0` does not enter the quadrature.
pub fn dual_phi(phi: &SpdPath, h: &[SymMatrix], delta: f64) -> Result<f64> {
    if h.len() != phi.len() {
        return Err(Error::GridMismatch(format!(
            "{} h values for {} grid nodes",
            h.len(),
            phi.len()
        )));
    }
    let m = phi.dim();
    let drift = SymMatrix::scalar(m, delta);
    let mut integrand = vec![0.0; phi.len()];
    for j in 1..phi.len() {
        let d = matrix_derivative(&phi.grid, &phi.values, j);
        integrand[j] =
            h[j].trace_product(&(&d - &drift)) - 2.0 * h[j].sandwich(&phi.values[j]).trace();
    }
    Ok(grid::ordered_sum(&grid::interval_contributions(
        &phi.grid, &integrand,
    )))
}

/// Nodal integrand `(ẋ − δ)²/x` of the scalar squared-Bessel rate.
fn scalar_integrand(values: &[f64], derivs: &[f64], delta: f64, flags: &mut RateFlags) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for j in 1..values.len() {
        let excess = derivs[j] - delta;
        let x = values[j];
        if x > 0.0 {
            out[j] = 0.125 * excess * excess / x;
        } else if excess.abs() <= 1e-9 * (1.0 + delta) {
            flags.singular_sylvester_skipped += 1;
        } else {
            flags.infinite = true;
        }
    }
    out
}

fn scalar_small_time(paths: &[&ScalarPath], delta: f64) -> SmallTimeCheck {
    let grid = &paths[0].grid;
    let devs: Vec<f64> = (1..grid.len())
        .take(SMALL_TIME_POINTS)
        .map(|j| {
            paths
                .iter()
                .map(|p| (p.values[j] / grid[j] - delta).abs())
                .sum()
        })
        .collect();
    trend_toward_zero(&devs, delta * paths.len() as f64)
}

fn check_scalar(x: &ScalarPath) -> Result<()> {
    grid::validate(&x.grid)?;
    if x.values.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain("scalar path must be nonnegative".into()));
    }
    Ok(())
}

/// Scalar rate `⅛ ∫ (ẋ − δ)²/x`, the one-dimensional case of [`rate_i`].
pub fn scalar_rate(x: &ScalarPath, delta: f64) -> Result<RateReport> {
    rate_j(std::slice::from_ref(x), delta)
}

/// `J(x) = ⅛ Σᵢ ∫ (ẋᵢ − δ)²/xᵢ`.
pub fn rate_j(x: &[ScalarPath], delta: f64) -> Result<RateReport> {
    let first = x
        .first()
        .ok_or_else(|| Error::Domain("rate_j needs at least one path".into()))?;
    for xi in x {
        check_scalar(xi)?;
        if xi.grid != first.grid {
            return Err(Error::GridMismatch("component grids differ".into()));
        }
    }
    let mut flags = RateFlags::default();
    let mut integrand = vec![0.0; first.len()];
    for xi in x {
        let d = grid::derivative(&xi.grid, &xi.values);
        for (acc, v) in integrand
            .iter_mut()
            .zip(scalar_integrand(&xi.values, &d, delta, &mut flags))
        {
            *acc += v;
        }
    }
    let refs: Vec<&ScalarPath> = x.iter().collect();
    let check = scalar_small_time(&refs, delta);
    flags.small_time_limit_ok = check.ok;
    flags.infinite |= check.diverging;
    Ok(RateReport::from_integrand(&first.grid, &integrand, flags))
}

/// Endpoint rate `K(M) = ½Tr M − (δ/2) ln det M − mδ/2 + (mδ/2) ln δ`.
pub fn rate_k(m: &SymMatrix, delta: f64) -> Result<f64> {
    let ev = m.eigenvalues();
    if ev[0] <= 0.0 {
        return Err(Error::Domain(format!(
            "endpoint rate needs a positive definite matrix (min eigenvalue {:e})",
            ev[0]
        )));
    }
    Ok(ev.iter().map(|&l| scalar_k(l, delta)).sum())
}

/// One-dimensional endpoint rate `a/2 − (δ/2) ln a − δ/2 + (δ/2) ln δ`.
fn scalar_k(a: f64, delta: f64) -> f64 {
    0.5 * a - 0.5 * delta * a.ln() - 0.5 * delta + 0.5 * delta * delta.ln()
}

/// Optimal path to `φ(1) = M` together with the Euler–Lagrange residual
/// `max ‖2k̇ + k²‖₂` over interior nodes.
#[derive(Debug, Clone)]
pub struct OptimalPath {
    pub path: SpdPath,
    pub euler_lagrange_residual: f64,
}

/// `φ(t) = δtI + t²(M − δI)` sampled on `grid` (which should end at 1).
pub fn optimal_endpoint_path(m: &SymMatrix, delta: f64, grid: &[f64]) -> Result<OptimalPath> {
    if classify_spd_relative(m, Tolerance::default()).class != SpdClass::PositiveDefinite {
        return Err(Error::Domain("endpoint must be positive definite".into()));
    }
    let dim = m.dim();
    let a = m - &SymMatrix::scalar(dim, delta);
    let path = SpdPath::from_fn(grid.to_vec(), |t| {
        SymMatrix::scalar(dim, delta * t) + &a * (t * t)
    })?;
    let k = compute_k_path(&path, delta)?;
    let sub_grid = &path.grid[1..];
    let mut residual = 0.0_f64;
    if sub_grid.len() >= 3 {
        for j in 1..sub_grid.len() - 1 {
            let kdot = matrix_derivative(sub_grid, &k.k_values, j);
            let k2 = k.k_values[j].sandwich(&SymMatrix::identity(dim));
            residual = residual.max((kdot * 2.0 + k2).frobenius());
        }
    }
    Ok(OptimalPath {
        path,
        euler_lagrange_residual: residual,
    })
}

/// `f̲(t) = δt + inf_{s≤t}(f(s) − δs)`, one forward pass.
pub fn underline_f(f: &ScalarPath, delta: f64) -> ScalarPath {
    let mut running = f64::INFINITY;
    let values = f
        .grid
        .iter()
        .zip(&f.values)
        .map(|(&t, &v)| {
            running = running.min(v - delta * t);
            delta * t + running
        })
        .collect();
    ScalarPath {
        grid: f.grid.clone(),
        values,
    }
}

fn contact_set(f: &ScalarPath, under: &ScalarPath) -> Vec<bool> {
    f.values
        .iter()
        .zip(&under.values)
        .map(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
        .collect()
}

/// `I_max(f) = ⅛[∫ (ḟ − δ)²/f + (m − 1) ∫ (ḟ̲ − δ)²/f̲]`.
///
/// On the contact set `{f̲ = f}` the derivative of `f̲` is `min(ḟ, δ)`, and
/// `δ` elsewhere; nodes where `ḟ > δ` had to be clipped are counted.
pub fn rate_i_max(f: &ScalarPath, delta: f64, m: usize) -> Result<RateReport> {
    check_scalar(f)?;
    if m == 0 {
        return Err(Error::Domain("dimension must be >= 1".into()));
    }
    let mut flags = RateFlags::default();
    let df = grid::derivative(&f.grid, &f.values);
    let mut integrand = scalar_integrand(&f.values, &df, delta, &mut flags);
    let under = underline_f(f, delta);
    if m > 1 {
        let contact = contact_set(f, &under);
        let d_under: Vec<f64> = df
            .iter()
            .zip(&contact)
            .map(|(&d, &c)| {
                if !c {
                    delta
                } else if d > delta {
                    flags.derivative_clipped += 1;
                    delta
                } else {
                    d
                }
            })
            .collect();
        let extra = scalar_integrand(&under.values, &d_under, delta, &mut flags);
        for (acc, v) in integrand.iter_mut().zip(extra) {
            *acc += (m - 1) as f64 * v;
        }
    }
    let check = scalar_small_time(&[f], delta);
    flags.small_time_limit_ok = check.ok;
    flags.infinite |= check.diverging;
    flags.not_in_class_f = class_f_diagnostic(f, delta).verdict == ClassF::NotInF;
    Ok(RateReport::from_integrand(&f.grid, &integrand, flags))
}

/// Rate of the largest eigenvalue at time 1:
/// `g(a)` for `a > δ` and `m·g(a)` for `a ≤ δ`, with `g` the scalar endpoint rate.
pub fn rate_k_max(a: f64, delta: f64, m: usize) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!(
            "largest eigenvalue must be > 0, got {a}"
        )));
    }
    let g = scalar_k(a, delta);
    Ok(if a > delta { g } else { m as f64 * g })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClassF {
    InF,
    NotInF,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassFReport {
    pub verdict: ClassF,
    /// Smallest density of `μ_f = (Ḣ + H²)/2` on the contact set (`None` if empty).
    pub min_contact_density: Option<f64>,
    /// Terminal atom `−H(T)/2`.
    pub terminal_atom: f64,
    pub contact_nodes: usize,
    pub tolerance: f64,
}

/// Sign test of the measure `μ̃_f` that certifies the `I_max` formula:
/// `H = (ḟ − δ)/(2f)`, density `(Ḣ + H²)/2` plus a terminal atom `−H(T)/2`,
/// restricted to the contact set `{f̲ = f}`.
pub fn class_f_diagnostic(f: &ScalarPath, delta: f64) -> ClassFReport {
    let n = f.len() - 1;
    let inconclusive = |tol| ClassFReport {
        verdict: ClassF::Inconclusive,
        min_contact_density: None,
        terminal_atom: 0.0,
        contact_nodes: 0,
        tolerance: tol,
    };
    if n < 3 || f.values[1..].iter().any(|v| !(*v > 0.0)) {
        return inconclusive(0.0);
    }
    let df = grid::derivative(&f.grid, &f.values);
    let h: Vec<f64> = (1..=n)
        .map(|j| (df[j] - delta) / (2.0 * f.values[j]))
        .collect();
    let sub_grid = &f.grid[1..];
    let dh = grid::derivative(sub_grid, &h);
    let density: Vec<f64> = h.iter().zip(&dh).map(|(h, d)| 0.5 * (d + h * h)).collect();
    let scale = density.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let tol = 1e-6 * (1.0 + scale);
    let terminal_atom = -0.5 * h[n - 1];

    let under = underline_f(f, delta);
    let contact = contact_set(f, &under);
    let mut min_density: Option<f64> = None;
    let mut contact_nodes = 0;
    for j in 1..=n {
        if contact[j] {
            contact_nodes += 1;
            let d = density[j - 1];
            min_density = Some(min_density.map_or(d, |m: f64| m.min(d)));
        }
    }
    let mut worst = min_density.unwrap_or(0.0);
    if contact[n] {
        worst = worst.min(terminal_atom);
    }
    let verdict = if worst >= -tol {
        ClassF::InF
    } else if worst < -10.0 * tol {
        ClassF::NotInF
    } else {
        ClassF::Inconclusive
    };
    ClassFReport {
        verdict,
        min_contact_density: min_density,
        terminal_atom,
        contact_nodes,
        tolerance: tol,
    }
}
