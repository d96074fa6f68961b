//! Time-discretized simulation of the small-noise Wishart SDE
//!
//! ```text
//! dX = ε(√X dB + dBᵀ √X) + δ I dt
//! ```
//!
//! together with its trace (a squared Bessel process of dimension `δm`),
//! the coupled eigenvalue SDE, and the deterministic tilted flow
//! `Ψ̇ = ½(Ψk + kΨ) + δI`.
//!
//! Every replica draws from its own ChaCha stream keyed by `(seed, replica)`,
//! so ensembles give identical per-replica output regardless of scheduling.

use nalgebra::allocator::Allocator;
use nalgebra::{Const, DMatrix, DefaultAllocator, Dim, DimDiff, DimSub, Dyn, OMatrix, OVector, U1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid;
use crate::matrix::{classify_spd_relative, SpdClass, SymMatrix, Tolerance};
use crate::path::{ScalarPath, SpdPath};

/// Maximum number of step halvings before [`Scheme::EulerClamp`] falls back
/// to eigenvalue projection.
pub const MAX_HALVINGS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scheme {
    /// Euler step, then clamp negative eigenvalues to zero.
    #[default]
    EulerProject,
    /// Euler step; on loss of positivity, redo the step as two half steps
    /// (Brownian-bridge split of the increment), recursively.
    EulerClamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dim: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub horizon: f64,
    pub steps: usize,
    pub replicas: usize,
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            delta: 3.0,
            epsilon: 1.0,
            horizon: 1.0,
            steps: 1000,
            replicas: 1,
            seed: 0,
            scheme: Scheme::EulerProject,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be >= 1".into()));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::Config(format!(
                "delta must be > 0, got {}",
                self.delta
            )));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config(format!(
                "horizon must be > 0, got {}",
                self.horizon
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be >= 1".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        grid::uniform(self.horizon, self.steps)
    }
}

/// Independent random stream for one replica.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Positivity-repair bookkeeping for one or more simulated paths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RepairStats {
    pub steps: u64,
    /// Steps whose Euler update left the cone and needed repair.
    pub repaired_steps: u64,
    /// Half-step subdivisions performed (EULER_CLAMP only).
    pub halvings: u64,
    /// Sub-steps that exhausted the halving budget and were projected.
    pub projections: u64,
}

impl RepairStats {
    pub fn repair_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.repaired_steps as f64 / self.steps as f64
        }
    }

    pub fn merge(&mut self, other: &RepairStats) {
        self.steps += other.steps;
        self.repaired_steps += other.repaired_steps;
        self.halvings += other.halvings;
        self.projections += other.projections;
    }
}

type Mat<D> = OMatrix<f64, D, D>;

/// Current state of one Wishart replica; the eigendecomposition of the
/// state is carried along so each step costs one decomposition.
///
/// Generic over the nalgebra dimension so small `m` runs on stack matrices.
struct WishartState<D: Dim>
where
    DefaultAllocator: Allocator<D, D> + Allocator<D>,
{
    x: Mat<D>,
    values: OVector<f64, D>,
    vectors: Mat<D>,
}

impl<D: Dim + DimSub<U1>> WishartState<D>
where
    DefaultAllocator: Allocator<D, D> + Allocator<D> + Allocator<DimDiff<D, U1>>,
{
    fn new(x: Mat<D>) -> Self {
        let e = x.clone().symmetric_eigen();
        Self {
            x,
            values: e.eigenvalues,
            vectors: e.eigenvectors,
        }
    }

    fn min_eigenvalue(&self) -> f64 {
        self.values.min()
    }

    fn rebuild(&self, f: impl Fn(f64) -> f64) -> Mat<D> {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[j]);
        }
        scaled * self.vectors.transpose()
    }

    fn sqrt(&self) -> Mat<D> {
        self.rebuild(|l| l.max(0.0).sqrt())
    }

    fn project(mut self) -> Self {
        let mut x = self.rebuild(|l| l.max(0.0));
        symmetrize(&mut x);
        self.values.apply(|l| *l = l.max(0.0));
        self.x = x;
        self
    }
}

fn symmetrize<D: Dim>(x: &mut Mat<D>)
where
    DefaultAllocator: Allocator<D, D>,
{
    let n = x.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (x[(i, j)] + x[(j, i)]);
            x[(i, j)] = v;
            x[(j, i)] = v;
        }
    }
}

fn to_sym<D: Dim>(x: &Mat<D>) -> SymMatrix
where
    DefaultAllocator: Allocator<D, D>,
{
    SymMatrix::from_matrix(DMatrix::from_iterator(
        x.nrows(),
        x.ncols(),
        x.iter().copied(),
    ))
}

struct WishartStepper<'a> {
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    stats: RepairStats,
}

impl<'a> WishartStepper<'a> {
    fn euler<D: Dim + DimSub<U1>>(
        &self,
        state: &WishartState<D>,
        db: &Mat<D>,
        dt: f64,
    ) -> WishartState<D>
    where
        DefaultAllocator: Allocator<D, D> + Allocator<D> + Allocator<DimDiff<D, U1>>,
    {
        let mut x = state.x.clone();
        if self.cfg.epsilon != 0.0 {
            let p = state.sqrt() * db;
            x += (&p + p.transpose()) * self.cfg.epsilon;
        }
        for i in 0..self.cfg.dim {
            x[(i, i)] += self.cfg.delta * dt;
        }
        WishartState::new(x)
    }

    fn increment<D: Dim>(&mut self, dt: f64) -> Mat<D>
    where
        DefaultAllocator: Allocator<D, D>,
    {
        let d = D::from_usize(self.cfg.dim);
        let sd = dt.sqrt();
        let rng = &mut self.rng;
        Mat::<D>::from_fn_generic(d, d, |_, _| rng.sample::<f64, _>(StandardNormal) * sd)
    }

    fn advance<D: Dim + DimSub<U1>>(
        &mut self,
        state: WishartState<D>,
        db: &Mat<D>,
        dt: f64,
        depth: u32,
    ) -> (WishartState<D>, bool)
    where
        DefaultAllocator: Allocator<D, D> + Allocator<D> + Allocator<DimDiff<D, U1>>,
    {
        let next = self.euler(&state, db, dt);
        if next.min_eigenvalue() >= 0.0 {
            return (next, false);
        }
        match self.cfg.scheme {
            Scheme::EulerProject => (next.project(), true),
            Scheme::EulerClamp if depth >= MAX_HALVINGS => {
                self.stats.projections += 1;
                (next.project(), true)
            }
            Scheme::EulerClamp => {
                self.stats.halvings += 1;
                let half = 0.5 * dt;
                // Brownian bridge: first half-increment given the whole one.
                let bridge = self.increment::<D>(0.5 * half);
                let first = db * 0.5 + bridge;
                let second = db - &first;
                let (mid, _) = self.advance(state, &first, half, depth + 1);
                let (end, _) = self.advance(mid, &second, half, depth + 1);
                (end, true)
            }
        }
    }

    fn step<D: Dim + DimSub<U1>>(&mut self, state: WishartState<D>, dt: f64) -> WishartState<D>
    where
        DefaultAllocator: Allocator<D, D> + Allocator<D> + Allocator<DimDiff<D, U1>>,
    {
        self.stats.steps += 1;
        let db = if self.cfg.epsilon == 0.0 {
            let d = D::from_usize(self.cfg.dim);
            Mat::<D>::zeros_generic(d, d)
        } else {
            self.increment::<D>(dt)
        };
        let (next, repaired) = self.advance(state, &db, dt, 0);
        if repaired {
            self.stats.repaired_steps += 1;
        }
        next
    }
}

fn check_initial(cfg: &SimConfig, x0: &SymMatrix) -> Result<()> {
    cfg.validate()?;
    if x0.dim() != cfg.dim {
        return Err(Error::BadInitialCondition(format!(
            "initial matrix has dim {}, config says {}",
            x0.dim(),
            cfg.dim
        )));
    }
    let cone = classify_spd_relative(x0, Tolerance::default());
    if cone.class == SpdClass::Indefinite {
        return Err(Error::BadInitialCondition(format!(
            "initial matrix is indefinite (min eigenvalue {:e})",
            cone.min_eigenvalue
        )));
    }
    Ok(())
}

fn run_replica<D: Dim + DimSub<U1>>(
    cfg: &SimConfig,
    x0: &SymMatrix,
    replica: u64,
    mut visit: impl FnMut(usize, f64, &Mat<D>) -> bool,
) -> (RepairStats, bool)
where
    DefaultAllocator: Allocator<D, D> + Allocator<D> + Allocator<DimDiff<D, U1>>,
{
    let dt = cfg.dt();
    let d = D::from_usize(cfg.dim);
    let mut stepper = WishartStepper {
        cfg,
        rng: replica_rng(cfg.seed, replica),
        stats: RepairStats::default(),
    };
    let start = Mat::<D>::from_iterator_generic(d, d, x0.as_matrix().iter().copied());
    let mut state = WishartState::new(start);
    if state.min_eigenvalue() < 0.0 {
        state = state.project();
    }
    if !visit(0, 0.0, &state.x) {
        return (stepper.stats, false);
    }
    for k in 1..=cfg.steps {
        state = stepper.step(state, dt);
        let t = cfg.horizon * k as f64 / cfg.steps as f64;
        if !visit(k, t, &state.x) {
            return (stepper.stats, false);
        }
    }
    (stepper.stats, true)
}

fn terminal_replica<D: Dim + DimSub<U1>>(
    cfg: &SimConfig,
    x0: &SymMatrix,
    replica: u64,
) -> (SymMatrix, RepairStats)
where
    DefaultAllocator: Allocator<D, D> + Allocator<D> + Allocator<DimDiff<D, U1>>,
{
    let mut last = None;
    let (stats, _) = run_replica::<D>(cfg, x0, replica, |k, _, x| {
        if k == cfg.steps {
            last = Some(to_sym(x));
        }
        true
    });
    (last.expect("horizon reached"), stats)
}

/// Expands `$body` with `$d` bound to a stack dimension for `m <= 3` and to
/// `Dyn` otherwise.
macro_rules! with_dim {
    ($dim:expr, $d:ident => $body:expr) => {
        match $dim {
            1 => {
                type $d = Const<1>;
                $body
            }
            2 => {
                type $d = Const<2>;
                $body
            }
            3 => {
                type $d = Const<3>;
                $body
            }
            _ => {
                type $d = Dyn;
                $body
            }
        }
    };
}

/// Runs one replica, handing every grid state `(k, t_k, X_k)` to `visit`.
/// Stops early when `visit` returns `false`. Returns the repair statistics
/// and whether the horizon was reached.
pub fn visit_wishart_replica(
    cfg: &SimConfig,
    x0: &SymMatrix,
    replica: u64,
    mut visit: impl FnMut(usize, f64, &SymMatrix) -> bool,
) -> Result<(RepairStats, bool)> {
    check_initial(cfg, x0)?;
    Ok(
        with_dim!(cfg.dim, D => run_replica::<D>(cfg, x0, replica, |k, t, x| visit(k, t, &to_sym(x)))),
    )
}

/// Full path of one replica.
pub fn simulate_wishart_replica(
    cfg: &SimConfig,
    x0: &SymMatrix,
    replica: u64,
) -> Result<(SpdPath, RepairStats)> {
    let mut values = Vec::with_capacity(cfg.steps + 1);
    let (stats, _) = visit_wishart_replica(cfg, x0, replica, |_, _, x| {
        values.push(x.clone());
        true
    })?;
    Ok((SpdPath::new(cfg.grid(), values)?, stats))
}

/// Path of replica 0 under `cfg`.
pub fn simulate_wishart(cfg: &SimConfig, x0: &SymMatrix) -> Result<SpdPath> {
    simulate_wishart_replica(cfg, x0, 0).map(|(p, _)| p)
}

/// Terminal values `X_T` of `cfg.replicas` independent replicas, in replica order.
#[derive(Debug, Clone)]
pub struct WishartEnsemble {
    pub terminals: Vec<SymMatrix>,
    pub repair: RepairStats,
}

pub fn wishart_terminal_ensemble(cfg: &SimConfig, x0: &SymMatrix) -> Result<WishartEnsemble> {
    check_initial(cfg, x0)?;
    let runs: Vec<(SymMatrix, RepairStats)> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| with_dim!(cfg.dim, D => terminal_replica::<D>(cfg, x0, r)))
        .collect();
    let mut terminals = Vec::with_capacity(runs.len());
    let mut repair = RepairStats::default();
    for (x, s) in runs {
        repair.merge(&s);
        terminals.push(x);
    }
    Ok(WishartEnsemble { terminals, repair })
}

/// Whether replica `replica` stays strictly inside the grid tube
/// `max_k ‖X_k − centre_k‖_F < radius`. Simulation stops at the first exit.
/// Returns the verdict and the last grid index simulated.
pub fn stays_in_tube(
    cfg: &SimConfig,
    x0: &SymMatrix,
    centre: &[SymMatrix],
    radius: f64,
    replica: u64,
) -> Result<(bool, usize)> {
    check_initial(cfg, x0)?;
    if centre.len() != cfg.steps + 1 || centre.iter().any(|c| c.dim() != cfg.dim) {
        return Err(Error::GridMismatch(format!(
            "tube centre needs {} matrices of dim {}",
            cfg.steps + 1,
            cfg.dim
        )));
    }
    let r2 = radius * radius;
    let mut last = 0;
    let (_, inside) = with_dim!(cfg.dim, D => run_replica::<D>(cfg, x0, replica, |k, _, x| {
        last = k;
        let c = centre[k].as_matrix();
        let dist2: f64 = x.iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        dist2 < r2
    }));
    Ok((inside, last))
}

/// Euler scheme for `dY = 2ε√Y dβ + δm dt`, clamped at zero.
pub fn simulate_trace_besq_replica(cfg: &SimConfig, y0: f64, replica: u64) -> Result<ScalarPath> {
    cfg.validate()?;
    if !(y0 >= 0.0) {
        return Err(Error::BadInitialCondition(format!(
            "y0 must be >= 0, got {y0}"
        )));
    }
    let dt = cfg.dt();
    let sd = dt.sqrt();
    let drift = cfg.delta * cfg.dim as f64 * dt;
    let mut rng = replica_rng(cfg.seed, replica);
    let mut y = y0;
    let mut values = Vec::with_capacity(cfg.steps + 1);
    values.push(y);
    for _ in 0..cfg.steps {
        let mut next = y;
        if cfg.epsilon != 0.0 {
            let p = y.max(0.0).sqrt() * (rng.sample::<f64, _>(StandardNormal) * sd);
            next += cfg.epsilon * (p + p);
        }
        next += drift;
        y = next.max(0.0);
        values.push(y);
    }
    ScalarPath::new(cfg.grid(), values)
}

pub fn simulate_trace_besq(cfg: &SimConfig, y0: f64) -> Result<ScalarPath> {
    simulate_trace_besq_replica(cfg, y0, 0)
}

pub fn besq_terminal_ensemble(cfg: &SimConfig, y0: f64) -> Result<Vec<f64>> {
    (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| simulate_trace_besq_replica(cfg, y0, r).map(|p| p.last()))
        .collect()
}

/// Options for the eigenvalue SDE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Collision floor: gaps below `gap_floor · √Δt · (1 + mean λ)` are
    /// replaced by that floor, keeping the sign of the gap. Near the one-step
    /// noise scale; much smaller floors let rare near-collisions fire huge
    /// repulsion kicks.
    pub gap_floor: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { gap_floor: 0.3 }
    }
}

#[derive(Debug, Clone)]
pub struct EigenSimulation {
    /// Largest eigenvalue first.
    pub paths: Vec<ScalarPath>,
    /// Steps after which the ordering had to be restored by sorting.
    pub sort_events: u64,
    /// Component updates that went negative and were clamped to zero.
    pub clamp_events: u64,
    /// Interaction terms evaluated at the collision floor.
    pub floor_events: u64,
}

fn check_eigen_initial(cfg: &SimConfig, lambda0: &[f64]) -> Result<()> {
    cfg.validate()?;
    if lambda0.len() != cfg.dim {
        return Err(Error::BadInitialCondition(format!(
            "{} initial eigenvalues for dim {}",
            lambda0.len(),
            cfg.dim
        )));
    }
    if lambda0.iter().any(|&l| !(l >= 0.0)) {
        return Err(Error::BadInitialCondition(
            "eigenvalues must be >= 0".into(),
        ));
    }
    let all_zero = lambda0.iter().all(|&l| l == 0.0);
    let decreasing = lambda0.windows(2).all(|w| w[0] > w[1]);
    if !all_zero && !decreasing {
        return Err(Error::BadInitialCondition(
            "eigenvalues must be strictly decreasing or all zero".into(),
        ));
    }
    Ok(())
}

/// Euler scheme for
///
/// ```text
/// dλᵢ = 2ε√λᵢ dβᵢ + (δ + ε² Σ_{k≠i} (λᵢ+λₖ)/(λᵢ−λₖ)) dt
/// ```
///
/// Exactly coincident eigenvalues exert no mutual force (the sign of a zero
/// gap is zero); this matters only for the all-zero start.
pub fn simulate_eigenvalues_replica(
    cfg: &SimConfig,
    lambda0: &[f64],
    opts: EigenOptions,
    replica: u64,
) -> Result<EigenSimulation> {
    check_eigen_initial(cfg, lambda0)?;
    let m = cfg.dim;
    let dt = cfg.dt();
    let sd = dt.sqrt();
    let eps2 = cfg.epsilon * cfg.epsilon;
    let mut rng = replica_rng(cfg.seed, replica);
    let mut lam = lambda0.to_vec();
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.steps + 1); m];
    for (i, v) in values.iter_mut().enumerate() {
        v.push(lam[i]);
    }
    let mut sim = EigenSimulation {
        paths: Vec::new(),
        sort_events: 0,
        clamp_events: 0,
        floor_events: 0,
    };
    let mut next = vec![0.0; m];
    for _ in 0..cfg.steps {
        let mean = lam.iter().sum::<f64>() / m as f64;
        let floor = opts.gap_floor * sd * (1.0 + mean);
        for i in 0..m {
            let mut interaction = 0.0;
            if eps2 != 0.0 {
                for k in 0..m {
                    if k == i {
                        continue;
                    }
                    let mut gap = lam[i] - lam[k];
                    if gap.abs() < floor {
                        sim.floor_events += 1;
                        gap = floor * sign(gap);
                    }
                    if gap != 0.0 {
                        interaction += (lam[i] + lam[k]) / gap;
                    }
                }
            }
            let mut v = lam[i];
            if cfg.epsilon != 0.0 {
                let p = lam[i].max(0.0).sqrt() * (rng.sample::<f64, _>(StandardNormal) * sd);
                v += cfg.epsilon * (p + p);
            }
            v += (cfg.delta + eps2 * interaction) * dt;
            if v < 0.0 {
                sim.clamp_events += 1;
                v = 0.0;
            }
            next[i] = v;
        }
        if next.windows(2).any(|w| w[0] < w[1]) {
            sim.sort_events += 1;
            next.sort_by(|a, b| b.total_cmp(a));
        }
        lam.copy_from_slice(&next);
        for (i, v) in values.iter_mut().enumerate() {
            v.push(lam[i]);
        }
    }
    let grid = cfg.grid();
    sim.paths = values
        .into_iter()
        .map(|v| ScalarPath::new(grid.clone(), v))
        .collect::<Result<_>>()?;
    Ok(sim)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn simulate_eigenvalues(cfg: &SimConfig, lambda0: &[f64]) -> Result<EigenSimulation> {
    simulate_eigenvalues_replica(cfg, lambda0, EigenOptions::default(), 0)
}

/// Terminal eigenvalues (largest first) of every replica plus pooled
/// sort/clamp counts.
#[derive(Debug, Clone)]
pub struct EigenEnsemble {
    pub terminals: Vec<Vec<f64>>,
    pub sort_events: u64,
    pub clamp_events: u64,
}

pub fn eigen_terminal_ensemble(
    cfg: &SimConfig,
    lambda0: &[f64],
    opts: EigenOptions,
) -> Result<EigenEnsemble> {
    let runs: Vec<Result<EigenSimulation>> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| simulate_eigenvalues_replica(cfg, lambda0, opts, r))
        .collect();
    let mut out = EigenEnsemble {
        terminals: Vec::with_capacity(runs.len()),
        sort_events: 0,
        clamp_events: 0,
    };
    for run in runs {
        let sim = run?;
        out.sort_events += sim.sort_events;
        out.clamp_events += sim.clamp_events;
        out.terminals
            .push(sim.paths.iter().map(ScalarPath::last).collect());
    }
    Ok(out)
}

/// RK4 integration of `Ψ̇ = ½(Ψk + kΨ) + δI`, `Ψ(0) = x0`, with `k` given at
/// every grid node and interpolated linearly at half steps.
pub fn tilted_flow(delta: f64, grid: &[f64], k: &[SymMatrix], x0: &SymMatrix) -> Result<SpdPath> {
    grid::validate(grid)?;
    if k.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} k values for {} grid nodes",
            k.len(),
            grid.len()
        )));
    }
    let m = x0.dim();
    let drift = SymMatrix::scalar(m, delta);
    let rhs = |psi: &SymMatrix, kk: &SymMatrix| psi.jordan(kk) + drift.clone();
    let mut psi = x0.clone();
    let mut values = Vec::with_capacity(grid.len());
    values.push(psi.clone());
    for j in 0..grid.len() - 1 {
        let h = grid[j + 1] - grid[j];
        let k_mid = (&k[j] + &k[j + 1]) * 0.5;
        let s1 = rhs(&psi, &k[j]);
        let s2 = rhs(&(&psi + &(&s1 * (0.5 * h))), &k_mid);
        let s3 = rhs(&(&psi + &(&s2 * (0.5 * h))), &k_mid);
        let s4 = rhs(&(&psi + &(&s3 * h)), &k[j + 1]);
        let incr = (s1 + s2 * 2.0 + s3 * 2.0 + s4) * (h / 6.0);
        psi = &psi + &incr;
        values.push(psi.clone());
    }
    SpdPath::new(grid.to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dim: usize, delta: f64, epsilon: f64, steps: usize) -> SimConfig {
        SimConfig {
            dim,
            delta,
            epsilon,
            horizon: 1.0,
            steps,
            replicas: 1,
            seed: 7,
            scheme: Scheme::EulerProject,
        }
    }

    #[test]
    fn noiseless_flow_is_linear_drift() {
        let c = cfg(2, 2.0, 0.0, 50);
        let p = simulate_wishart(&c, &SymMatrix::zeros(2)).unwrap();
        for (t, v) in p.grid.iter().zip(&p.values) {
            assert!(v.max_abs_diff(&SymMatrix::scalar(2, 2.0 * t)) < 1e-12);
        }
    }

    #[test]
    fn scalar_wishart_matches_besq_on_same_seed() {
        let c = cfg(1, 1.0, 1.0, 400);
        let w = simulate_wishart(&c, &SymMatrix::zeros(1)).unwrap();
        let b = simulate_trace_besq(&c, 0.0).unwrap();
        for (x, y) in w.values.iter().zip(&b.values) {
            assert!((x.get(0, 0) - y).abs() <= 1e-14);
        }
    }

    #[test]
    fn eigen_sde_scalar_case_matches_besq() {
        let c = cfg(1, 1.5, 0.8, 300);
        let e = simulate_eigenvalues(&c, &[0.0]).unwrap();
        let b = simulate_trace_besq(&c, 0.0).unwrap();
        assert_eq!(e.paths[0].values, b.values);
    }

    #[test]
    fn eigen_sde_drift_only() {
        let c = cfg(3, 2.0, 0.0, 20);
        let e = simulate_eigenvalues(&c, &[0.0; 3]).unwrap();
        for path in &e.paths {
            for (t, v) in path.grid.iter().zip(&path.values) {
                assert!((v - 2.0 * t).abs() < 1e-12);
            }
        }
        assert_eq!(e.sort_events, 0);
    }

    #[test]
    fn eigen_sde_rejects_unsorted_start() {
        let c = cfg(2, 3.0, 0.3, 10);
        assert!(matches!(
            simulate_eigenvalues(&c, &[1.0, 2.0]).unwrap_err(),
            Error::BadInitialCondition(_)
        ));
        assert!(simulate_eigenvalues(&c, &[2.0, 1.0]).is_ok());
    }

    #[test]
    fn rejects_indefinite_start() {
        let c = cfg(2, 3.0, 0.3, 10);
        let err = simulate_wishart(&c, &SymMatrix::from_diagonal(&[1.0, -1.0])).unwrap_err();
        assert!(matches!(err, Error::BadInitialCondition(_)));
    }

    #[test]
    fn seed_determinism_and_stream_independence() {
        let c = cfg(2, 3.0, 0.5, 100);
        let (a, _) = simulate_wishart_replica(&c, &SymMatrix::zeros(2), 3).unwrap();
        let (b, _) = simulate_wishart_replica(&c, &SymMatrix::zeros(2), 3).unwrap();
        assert_eq!(a, b);
        let (d, _) = simulate_wishart_replica(&c, &SymMatrix::zeros(2), 4).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn paths_stay_in_cone() {
        for scheme in [Scheme::EulerProject, Scheme::EulerClamp] {
            let mut c = cfg(3, 1.0, 1.0, 200);
            c.scheme = scheme;
            for r in 0..5 {
                let (p, stats) = simulate_wishart_replica(&c, &SymMatrix::zeros(3), r).unwrap();
                for v in &p.values {
                    assert!(v.min_eigenvalue() >= -1e-12);
                }
                assert_eq!(stats.steps, 200);
            }
        }
    }

    #[test]
    fn tilted_flow_zero_k() {
        let g = grid::uniform(1.0, 10);
        let k = vec![SymMatrix::zeros(2); g.len()];
        let p = tilted_flow(1.5, &g, &k, &SymMatrix::zeros(2)).unwrap();
        for (t, v) in p.grid.iter().zip(&p.values) {
            assert!(v.max_abs_diff(&SymMatrix::scalar(2, 1.5 * t)) < 1e-12);
        }
    }

    #[test]
    fn tilted_flow_scalar_closed_form() {
        // ψ̇ = cψ + δ, ψ(0) = 0  ⇒  ψ(t) = (δ/c)(e^{ct} − 1)
        let (c, delta) = (0.7, 2.0);
        let g = grid::uniform(1.0, 200);
        let k = vec![SymMatrix::scalar(1, c); g.len()];
        let p = tilted_flow(delta, &g, &k, &SymMatrix::zeros(1)).unwrap();
        for (t, v) in p.grid.iter().zip(&p.values) {
            let exact = delta / c * ((c * t).exp() - 1.0);
            assert!((v.get(0, 0) - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(2, 3.0, 0.5, 10);
        assert!(c.validate().is_ok());
        c.delta = 0.0;
        assert!(c.validate().is_err());
        c.delta = 1.0;
        c.steps = 0;
        assert!(c.validate().is_err());
    }
}
