//! Experiment harness: Monte Carlo checks of the Laplace identity and of
//! additivity, tube-probability scans over `ε`, the two-pipeline eigenvalue
//! comparison, and batch wrappers around the rate and Riccati solvers.
//!
//! An [`ExperimentSpec`] (JSON or TOML) names the experiment kind, the
//! simulation config and a kind-specific payload. Every run produces a
//! [`Report`] that embeds the spec it ran. Replicas fan out over rayon but
//! are reduced in replica order, so reports are byte-identical across runs
//! apart from `timestamp`.

use std::path::{Path, PathBuf};

use rand::RngCore;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{classify_spd_relative, SpdClass, SymMatrix, Tolerance};
use crate::path::{ScalarPath, SpdPath};
use crate::rate::{self, ClassFReport, RateReport, RateValue};
use crate::riccati::{self, MatrixMeasure, RiccatiSolution};
use crate::simulator::{self, EigenOptions, RepairStats, SimConfig};

/// Steps used for the Riccati cross-check inside Laplace experiments.
pub const RICCATI_CHECK_STEPS: usize = 10_000;
/// Two-sided 95% normal quantile used for Wilson intervals.
pub const WILSON_Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExperimentKind {
    LaplaceCheck,
    Additivity,
    LdpScan,
    EigenContract,
    RateEval,
    RiccatiEval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub payload: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    /// Directory that relative payload paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    kind: Option<ExperimentKind>,
    #[serde(default)]
    sim: SimConfig,
    #[serde(default)]
    payload: serde_json::Value,
    output_path: Option<String>,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, sim: SimConfig, payload: impl Serialize) -> Result<Self> {
        Ok(Self {
            kind,
            sim,
            payload: serde_json::to_value(payload)?,
            output_path: None,
            base_dir: None,
        })
    }

    /// Reads a spec from a `.toml` or `.json` file.
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_as(path, None)
    }

    /// Like [`ExperimentSpec::load`], but a missing `kind` defaults to
    /// `kind`, and a conflicting one is an error.
    pub fn load_as(path: &Path, kind: Option<ExperimentKind>) -> Result<Self> {
        // Parsed straight from text so errors keep their line and column.
        let text = std::fs::read_to_string(path)?;
        let raw: RawSpec = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text)?,
            _ => serde_json::from_str(&text)?,
        };
        let kind = match (raw.kind, kind) {
            (Some(found), Some(expected)) if found != expected => {
                return Err(Error::Config(format!(
                    "config kind {} does not match {}",
                    serde_json::to_value(found)?,
                    serde_json::to_value(expected)?
                )));
            }
            (Some(k), _) | (None, Some(k)) => k,
            (None, None) => return Err(Error::Config("config is missing `kind`".into())),
        };
        Ok(Self {
            kind,
            sim: raw.sim,
            payload: raw.payload,
            output_path: raw.output_path,
            base_dir: path.parent().map(Path::to_path_buf),
        })
    }

    pub fn payload<T: DeserializeOwned + Default>(&self) -> Result<T> {
        if self.payload.is_null() {
            return Ok(T::default());
        }
        serde_json::from_value(self.payload.clone())
            .map_err(|e| Error::Config(format!("{:?} payload: {e}", self.kind)))
    }

    pub fn resolve(&self, file: &str) -> PathBuf {
        let p = PathBuf::from(file);
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p,
        }
    }

    /// Checks the simulation config and the payload for this kind without
    /// running anything.
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        match self.kind {
            ExperimentKind::LaplaceCheck => self
                .payload::<LaplacePayload>()?
                .validate(&self.sim)
                .map(|_| ()),
            ExperimentKind::Additivity => self
                .payload::<AdditivityPayload>()?
                .validate(&self.sim)
                .map(|_| ()),
            ExperimentKind::LdpScan => self
                .payload::<LdpPayload>()?
                .validate(&self.sim)
                .map(|_| ()),
            ExperimentKind::EigenContract => self
                .payload::<EigenPayload>()?
                .validate(&self.sim)
                .map(|_| ()),
            ExperimentKind::RateEval => self.payload::<RatePayload>()?.load(self).map(|_| ()),
            ExperimentKind::RiccatiEval => self.payload::<RiccatiPayload>()?.load(self).map(|_| ()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Pass,
    Fail,
    Complete,
}

impl Status {
    fn gate(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report<T> {
    pub kind: ExperimentKind,
    pub status: Status,
    /// Seconds since the Unix epoch; the only field that varies between reruns.
    pub timestamp: u64,
    pub config: ExperimentSpec,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    fn new(spec: &ExperimentSpec, status: Status, result: T) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            kind: spec.kind,
            status,
            timestamp,
            config: spec.clone(),
            result,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn erase(self) -> Result<Report<serde_json::Value>> {
        Ok(Report {
            kind: self.kind,
            status: self.status,
            timestamp: self.timestamp,
            config: self.config,
            result: serde_json::to_value(self.result)?,
        })
    }
}

/// Runs any experiment kind.
pub fn run(spec: &ExperimentSpec) -> Result<Report<serde_json::Value>> {
    match spec.kind {
        ExperimentKind::LaplaceCheck => run_laplace_check(spec)?.erase(),
        ExperimentKind::Additivity => run_additivity(spec)?.erase(),
        ExperimentKind::LdpScan => run_ldp_scan(spec)?.erase(),
        ExperimentKind::EigenContract => run_eigen_contract(spec)?.erase(),
        ExperimentKind::RateEval => run_rate_eval(spec)?.erase(),
        ExperimentKind::RiccatiEval => run_riccati_eval(spec)?.erase(),
    }
}

/// Independent seed for sub-experiment `tag` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    simulator::replica_rng(seed, u64::MAX - tag).next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub standard_error: f64,
}

/// Sample mean with its normal-approximation standard error.
pub fn mean_estimate(samples: &[f64]) -> MeanEstimate {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    MeanEstimate {
        mean,
        standard_error: (var / n).sqrt(),
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::MAX
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(hits: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

fn check_psd(name: &str, m: &SymMatrix, dim: usize) -> Result<()> {
    if m.dim() != dim {
        return Err(Error::Config(format!(
            "{name} has dim {}, expected {dim}",
            m.dim()
        )));
    }
    if classify_spd_relative(m, Tolerance::default()).class == SpdClass::Indefinite {
        return Err(Error::Config(format!(
            "{name} is not positive semidefinite"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Laplace check

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaplacePayload {
    /// Test matrices; empty means [`default_thetas`] for the configured dim.
    pub thetas: Vec<SymMatrix>,
    /// Starting point; zero when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<SymMatrix>,
    /// `|z|` threshold for PASS; 3 when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_threshold: Option<f64>,
}

impl LaplacePayload {
    fn validate(&self, sim: &SimConfig) -> Result<(Vec<SymMatrix>, SymMatrix, f64)> {
        let thetas = if self.thetas.is_empty() {
            default_thetas(sim.dim)
        } else {
            self.thetas.clone()
        };
        for (i, th) in thetas.iter().enumerate() {
            check_psd(&format!("theta {i}"), th, sim.dim)?;
        }
        let x0 = self.x0.clone().unwrap_or_else(|| SymMatrix::zeros(sim.dim));
        check_psd("x0", &x0, sim.dim)?;
        let z = self.z_threshold.unwrap_or(3.0);
        if !(z > 0.0) {
            return Err(Error::Config("z_threshold must be > 0".into()));
        }
        Ok((thetas, x0, z))
    }
}

/// Five fixed test matrices for dimension `m`: three multiples of the
/// identity, a graded diagonal and a full matrix with off-diagonal mass.
pub fn default_thetas(m: usize) -> Vec<SymMatrix> {
    let graded: Vec<f64> = (0..m).map(|i| 0.5 / (1.0 + i as f64)).collect();
    let full = SymMatrix::from_matrix(nalgebra::DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            0.4
        } else {
            0.15 / (1.0 + (i as f64 - j as f64).abs())
        }
    }));
    vec![
        SymMatrix::scalar(m, 0.1),
        SymMatrix::scalar(m, 0.3),
        SymMatrix::from_diagonal(&graded),
        full,
        SymMatrix::scalar(m, 1.0),
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaplaceEntry {
    pub theta: SymMatrix,
    pub empirical: MeanEstimate,
    pub analytic: f64,
    /// Same expectation through the Riccati solver; absent at `ε = 0`.
    pub riccati: Option<f64>,
    pub riccati_max_eigenvalue: Option<f64>,
    pub z_score: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaplaceCheckResult {
    pub x0: SymMatrix,
    pub z_threshold: f64,
    pub entries: Vec<LaplaceEntry>,
    pub repair: RepairStats,
    pub pass: bool,
}

/// Empirical `E[exp(−Tr(X_T Θ))]` against the closed form, one z-score per Θ.
pub fn run_laplace_check(spec: &ExperimentSpec) -> Result<Report<LaplaceCheckResult>> {
    spec.sim.validate()?;
    let (thetas, x0, z_threshold) = spec.payload::<LaplacePayload>()?.validate(&spec.sim)?;
    let sim = &spec.sim;
    let ens = simulator::wishart_terminal_ensemble(sim, &x0)?;
    let mut entries = Vec::with_capacity(thetas.len());
    for theta in thetas {
        let samples: Vec<f64> = ens
            .terminals
            .iter()
            .map(|x| (-x.trace_product(&theta)).exp())
            .collect();
        let empirical = mean_estimate(&samples);
        let analytic =
            riccati::wishart_laplace_closed_form(&theta, &x0, sim.delta, sim.epsilon, sim.horizon)?;
        let (riccati_value, riccati_max) = if sim.epsilon > 0.0 {
            let (v, sol) = riccati::wishart_laplace_riccati(
                &theta,
                &x0,
                sim.delta,
                sim.epsilon,
                sim.horizon,
                RICCATI_CHECK_STEPS,
            )?;
            (Some(v), Some(sol.max_eigenvalue()))
        } else {
            (None, None)
        };
        let z = z_score(empirical.mean - analytic, empirical.standard_error);
        entries.push(LaplaceEntry {
            theta,
            empirical,
            analytic,
            riccati: riccati_value,
            riccati_max_eigenvalue: riccati_max,
            z_score: z,
            pass: z.abs() <= z_threshold,
        });
    }
    let pass = entries.iter().all(|e| e.pass);
    let result = LaplaceCheckResult {
        x0,
        z_threshold,
        entries,
        repair: ens.repair,
        pass,
    };
    Ok(Report::new(spec, Status::gate(pass), result))
}

/// The standard battery: `m ∈ {1, 2, 3}`, `δ = m + 1`, `ε = 1`, five Θ each.
pub fn default_laplace_battery(replicas: usize, steps: usize, seed: u64) -> Vec<ExperimentSpec> {
    (1..=3)
        .map(|m| ExperimentSpec {
            kind: ExperimentKind::LaplaceCheck,
            sim: SimConfig {
                dim: m,
                delta: m as f64 + 1.0,
                epsilon: 1.0,
                horizon: 1.0,
                steps,
                replicas,
                seed: derive_seed(seed, m as u64),
                ..SimConfig::default()
            },
            payload: serde_json::Value::Null,
            output_path: None,
            base_dir: None,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Additivity

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdditivityPayload {
    /// Dimensions of the two summands; `m + 1` each when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_2: Option<f64>,
    /// Starting points of the two summands; `0.5 I` and `0.25 I` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<SymMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<SymMatrix>,
    pub thetas: Vec<SymMatrix>,
}

struct AdditivitySetup {
    delta_1: f64,
    delta_2: f64,
    x: SymMatrix,
    y: SymMatrix,
    thetas: Vec<SymMatrix>,
}

impl AdditivityPayload {
    fn validate(&self, sim: &SimConfig) -> Result<AdditivitySetup> {
        let m = sim.dim;
        let floor = m as f64 + 1.0;
        let delta_1 = self.delta_1.unwrap_or(floor);
        let delta_2 = self.delta_2.unwrap_or(floor);
        if delta_1 < floor || delta_2 < floor {
            return Err(Error::Config(format!(
                "additivity needs both dimensions >= m + 1 = {floor}, got {delta_1} and {delta_2}"
            )));
        }
        let x = self.x.clone().unwrap_or_else(|| SymMatrix::scalar(m, 0.5));
        let y = self.y.clone().unwrap_or_else(|| SymMatrix::scalar(m, 0.25));
        check_psd("x", &x, m)?;
        check_psd("y", &y, m)?;
        let thetas = if self.thetas.is_empty() {
            default_thetas(m)
        } else {
            self.thetas.clone()
        };
        for (i, th) in thetas.iter().enumerate() {
            check_psd(&format!("theta {i}"), th, m)?;
        }
        Ok(AdditivitySetup {
            delta_1,
            delta_2,
            x,
            y,
            thetas,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdditivityEntry {
    pub theta: SymMatrix,
    /// `X + X′` from two independent simulations.
    pub sum: MeanEstimate,
    /// One simulation with summed dimension and starting point.
    pub direct: MeanEstimate,
    pub analytic: f64,
    pub z_score: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdditivityResult {
    pub delta_1: f64,
    pub delta_2: f64,
    pub x: SymMatrix,
    pub y: SymMatrix,
    pub entries: Vec<AdditivityEntry>,
    pub pass: bool,
}

/// Compares `X + X′` (independent, dimensions `δ₁`, `δ₂`) with a single
/// process of dimension `δ₁ + δ₂` started at `x + y`. `sim.delta` is ignored.
pub fn run_additivity(spec: &ExperimentSpec) -> Result<Report<AdditivityResult>> {
    spec.sim.validate()?;
    let setup = spec.payload::<AdditivityPayload>()?.validate(&spec.sim)?;
    let with = |delta: f64, tag: u64| SimConfig {
        delta,
        seed: derive_seed(spec.sim.seed, tag),
        ..spec.sim.clone()
    };
    let first = simulator::wishart_terminal_ensemble(&with(setup.delta_1, 1), &setup.x)?;
    let second = simulator::wishart_terminal_ensemble(&with(setup.delta_2, 2), &setup.y)?;
    let start = &setup.x + &setup.y;
    let total = setup.delta_1 + setup.delta_2;
    let direct = simulator::wishart_terminal_ensemble(&with(total, 3), &start)?;
    let sums: Vec<SymMatrix> = first
        .terminals
        .iter()
        .zip(&second.terminals)
        .map(|(a, b)| a + b)
        .collect();

    let mut entries = Vec::new();
    for theta in setup.thetas {
        let f = |xs: &[SymMatrix]| -> MeanEstimate {
            let v: Vec<f64> = xs
                .iter()
                .map(|x| (-x.trace_product(&theta)).exp())
                .collect();
            mean_estimate(&v)
        };
        let (s, d) = (f(&sums), f(&direct.terminals));
        let se = (s.standard_error.powi(2) + d.standard_error.powi(2)).sqrt();
        let z = z_score(s.mean - d.mean, se);
        let analytic = riccati::wishart_laplace_closed_form(
            &theta,
            &start,
            total,
            spec.sim.epsilon,
            spec.sim.horizon,
        )?;
        entries.push(AdditivityEntry {
            theta,
            sum: s,
            direct: d,
            analytic,
            z_score: z,
            pass: z.abs() <= 3.0,
        });
    }
    let pass = entries.iter().all(|e| e.pass);
    let result = AdditivityResult {
        delta_1: setup.delta_1,
        delta_2: setup.delta_2,
        x: setup.x,
        y: setup.y,
        entries,
        pass,
    };
    Ok(Report::new(spec, Status::gate(pass), result))
}

// ---------------------------------------------------------------------------
// LDP scan

/// Target path of a tube scan.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum Target {
    /// `φ(t) = x0 + δ t I`.
    #[default]
    ZeroRate,
    /// `φ(t) = Σ_k c_k t^k`; `c_0` must equal the starting point.
    Polynomial { coefficients: Vec<SymMatrix> },
    /// Path file (`.csv` or `.json`) on exactly the simulation grid.
    File { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdpPayload {
    pub target: Target,
    pub tube_radius: f64,
    /// Strictly decreasing noise levels; `sim.epsilon` is ignored.
    pub epsilons: Vec<f64>,
    pub min_hits: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<SymMatrix>,
}

impl Default for LdpPayload {
    fn default() -> Self {
        Self {
            target: Target::ZeroRate,
            tube_radius: 0.5,
            epsilons: vec![0.5, 0.35, 0.25],
            min_hits: 20,
            x0: None,
        }
    }
}

impl LdpPayload {
    fn validate(&self, sim: &SimConfig) -> Result<SymMatrix> {
        if !(self.tube_radius > 0.0) || !self.tube_radius.is_finite() {
            return Err(Error::Config(format!(
                "tube_radius must be > 0 (the tube is empty otherwise), got {}",
                self.tube_radius
            )));
        }
        if self.epsilons.is_empty() {
            return Err(Error::Config("epsilons must not be empty".into()));
        }
        if self.epsilons.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::Config("epsilons must be > 0".into()));
        }
        if self.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("epsilons must be strictly decreasing".into()));
        }
        let x0 = self.x0.clone().unwrap_or_else(|| SymMatrix::zeros(sim.dim));
        check_psd("x0", &x0, sim.dim)?;
        if let Target::Polynomial { coefficients } = &self.target {
            if coefficients.is_empty() || coefficients.iter().any(|c| c.dim() != sim.dim) {
                return Err(Error::Config(format!(
                    "polynomial coefficients must be {0}x{0}",
                    sim.dim
                )));
            }
            if coefficients[0].max_abs_diff(&x0) > 1e-12 {
                return Err(Error::Config("polynomial must start at x0".into()));
            }
        }
        Ok(x0)
    }

    fn target_path(&self, spec: &ExperimentSpec, x0: &SymMatrix) -> Result<SpdPath> {
        let sim = &spec.sim;
        let grid = sim.grid();
        let path = match &self.target {
            Target::ZeroRate => {
                SpdPath::from_fn(grid, |t| x0 + &SymMatrix::scalar(sim.dim, sim.delta * t))?
            }
            Target::Polynomial { coefficients } => SpdPath::from_fn(grid, |t| {
                coefficients
                    .iter()
                    .rev()
                    .fold(SymMatrix::zeros(sim.dim), |acc, c| &(acc * t) + c)
            })?,
            Target::File { path } => {
                let p = SpdPath::read(&spec.resolve(path))?;
                if p.dim() != sim.dim
                    || p.len() != grid.len()
                    || p.grid.iter().zip(&grid).any(|(a, b)| (a - b).abs() > 1e-12)
                {
                    return Err(Error::GridMismatch(
                        "target path must live on the simulation grid".into(),
                    ));
                }
                if p.values[0].max_abs_diff(x0) > 1e-12 {
                    return Err(Error::Config("target path must start at x0".into()));
                }
                p
            }
        };
        Ok(path)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdpPoint {
    pub epsilon: f64,
    pub replicas: u64,
    pub hits: u64,
    pub probability: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// `ln P̂`; absent when there are no hits.
    pub log_prob: Option<f64>,
    /// `ε² ln P̂` with its Wilson band.
    pub scaled_log_prob: Option<f64>,
    pub scaled_log_prob_low: Option<f64>,
    pub scaled_log_prob_high: f64,
    pub low_hits: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdpScanResult {
    pub epsilons: Vec<f64>,
    pub tube_radius: f64,
    pub tube_metric: String,
    pub points: Vec<LdpPoint>,
    /// Least-squares slope of `ln P̂` against `1/ε²` over the points with
    /// hits: the finite-`ε` estimate of `lim ε² ln P`.
    pub slope_estimate: Option<f64>,
    /// Whether `ε² ln P̂` is nondecreasing along the (decreasing) `ε` list;
    /// absent when some point has no hits.
    pub trend_nondecreasing: Option<bool>,
    pub target_rate: RateValue,
    /// `[−I(φ), 0]`: where `lim ε² ln P` must lie.
    pub bracket: [f64; 2],
    pub slope_in_bracket: Option<bool>,
    pub low_hits: bool,
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Direct Monte Carlo estimates of `P(max_k ‖X^ε_k − φ_k‖_F < r)` per `ε`.
pub fn run_ldp_scan(spec: &ExperimentSpec) -> Result<Report<LdpScanResult>> {
    spec.sim.validate()?;
    let payload: LdpPayload = spec.payload()?;
    let x0 = payload.validate(&spec.sim)?;
    let target = payload.target_path(spec, &x0)?;
    let report = rate::rate_i(&target, spec.sim.delta)?;
    let target_rate = report.value;

    let mut points = Vec::with_capacity(payload.epsilons.len());
    for (idx, &eps) in payload.epsilons.iter().enumerate() {
        let cfg = SimConfig {
            epsilon: eps,
            seed: derive_seed(spec.sim.seed, idx as u64),
            ..spec.sim.clone()
        };
        let inside: Vec<bool> = (0..cfg.replicas as u64)
            .into_par_iter()
            .map(|r| {
                simulator::stays_in_tube(&cfg, &x0, &target.values, payload.tube_radius, r)
                    .map(|(h, _)| h)
            })
            .collect::<Result<_>>()?;
        let hits = inside.iter().filter(|&&h| h).count() as u64;
        let n = cfg.replicas as u64;
        let (lo, hi) = wilson_interval(hits, n, WILSON_Z);
        let e2 = eps * eps;
        let log_prob = (hits > 0).then(|| (hits as f64 / n as f64).ln());
        points.push(LdpPoint {
            epsilon: eps,
            replicas: n,
            hits,
            probability: hits as f64 / n as f64,
            wilson_low: lo,
            wilson_high: hi,
            log_prob,
            scaled_log_prob: log_prob.map(|l| e2 * l),
            scaled_log_prob_low: (lo > 0.0).then(|| e2 * lo.ln()),
            scaled_log_prob_high: e2 * hi.ln(),
            low_hits: hits < payload.min_hits,
        });
    }

    let observed: Vec<&LdpPoint> = points.iter().filter(|p| p.hits > 0).collect();
    let inv_e2: Vec<f64> = observed
        .iter()
        .map(|p| 1.0 / (p.epsilon * p.epsilon))
        .collect();
    let logs: Vec<f64> = observed
        .iter()
        .map(|p| p.log_prob.expect("hits > 0"))
        .collect();
    let slope_estimate = ls_slope(&inv_e2, &logs);
    let trend_nondecreasing =
        if observed.len() == points.len() {
            Some(points.windows(2).all(|w| {
                w[1].scaled_log_prob.expect("hits") >= w[0].scaled_log_prob.expect("hits")
            }))
        } else {
            None
        };
    let lower = target_rate.finite().map_or(f64::NEG_INFINITY, |v| -v);
    let bracket = [lower, 0.0];
    let slope_in_bracket = slope_estimate.map(|s| s >= bracket[0] && s <= bracket[1]);
    let low_hits = points.iter().any(|p| p.low_hits);
    let result = LdpScanResult {
        epsilons: payload.epsilons.clone(),
        tube_radius: payload.tube_radius,
        tube_metric: "max over grid nodes of the Frobenius norm".into(),
        points,
        slope_estimate,
        trend_nondecreasing,
        target_rate,
        bracket,
        slope_in_bracket,
        low_hits,
    };
    Ok(Report::new(spec, Status::Complete, result))
}

// ---------------------------------------------------------------------------
// Eigenvalue contraction

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenPayload {
    /// Initial eigenvalues, strictly decreasing or all zero; zeros when empty.
    pub lambda0: Vec<f64>,
    pub ks_threshold: f64,
    /// Curvatures `a_i` of the deterministic diagonal path `δt + a_i t²`.
    pub diagonal_curvature: Vec<f64>,
    pub diagonal_tolerance: f64,
}

impl Default for EigenPayload {
    fn default() -> Self {
        Self {
            lambda0: Vec::new(),
            ks_threshold: 0.05,
            diagonal_curvature: Vec::new(),
            diagonal_tolerance: 1e-8,
        }
    }
}

impl EigenPayload {
    fn validate(&self, sim: &SimConfig) -> Result<(Vec<f64>, Vec<f64>)> {
        let m = sim.dim;
        if m < 2 {
            return Err(Error::Config(
                "eigenvalue contraction needs dim >= 2".into(),
            ));
        }
        let lambda0 = if self.lambda0.is_empty() {
            vec![0.0; m]
        } else {
            self.lambda0.clone()
        };
        if lambda0.len() != m {
            return Err(Error::Config(format!("lambda0 needs {m} entries")));
        }
        let curv = if self.diagonal_curvature.is_empty() {
            (0..m).map(|i| 1.0 - i as f64 / m as f64).collect()
        } else {
            self.diagonal_curvature.clone()
        };
        if curv.len() != m
            || curv.windows(2).any(|w| !(w[1] < w[0]))
            || curv.iter().any(|&a| a < 0.0)
        {
            return Err(Error::Config(format!(
                "diagonal_curvature needs {m} nonnegative strictly decreasing entries"
            )));
        }
        if !(self.ks_threshold > 0.0) || !(self.diagonal_tolerance > 0.0) {
            return Err(Error::Config("thresholds must be > 0".into()));
        }
        Ok((lambda0, curv))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenContractResult {
    pub lambda0: Vec<f64>,
    pub ks_distance: f64,
    pub ks_threshold: f64,
    /// Asymptotic 95% critical value `1.36 √(2/n)` for reference.
    pub ks_critical_95: f64,
    pub mean_full: MeanEstimate,
    pub mean_eigen: MeanEstimate,
    pub sort_events: u64,
    pub clamp_events: u64,
    pub repair: RepairStats,
    pub diagonal_rate_i: f64,
    pub diagonal_rate_j: f64,
    pub diagonal_difference: f64,
    /// Percentiles 1..=99 of `λ_max(T)` from each pipeline.
    pub percentiles_full: Vec<f64>,
    pub percentiles_eigen: Vec<f64>,
    pub pass: bool,
}

fn percentiles(samples: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    (1..=99).map(|p| s[((p * n) / 100).min(n - 1)]).collect()
}

/// Largest terminal eigenvalue from full-matrix paths versus the eigenvalue
/// SDE, plus the rate identity on a deterministic diagonal path.
pub fn run_eigen_contract(spec: &ExperimentSpec) -> Result<Report<EigenContractResult>> {
    spec.sim.validate()?;
    let payload: EigenPayload = spec.payload()?;
    let (lambda0, curv) = payload.validate(&spec.sim)?;
    let sim = &spec.sim;
    let x0 = SymMatrix::from_diagonal(&lambda0);
    let full_cfg = SimConfig {
        seed: derive_seed(sim.seed, 1),
        ..sim.clone()
    };
    let eig_cfg = SimConfig {
        seed: derive_seed(sim.seed, 2),
        ..sim.clone()
    };
    let full = simulator::wishart_terminal_ensemble(&full_cfg, &x0)?;
    let eig = simulator::eigen_terminal_ensemble(&eig_cfg, &lambda0, EigenOptions::default())?;
    let a: Vec<f64> = full
        .terminals
        .iter()
        .map(SymMatrix::max_eigenvalue)
        .collect();
    let b: Vec<f64> = eig.terminals.iter().map(|l| l[0]).collect();
    let ks = ks_distance(&a, &b);
    let n = a.len() as f64;

    let grid = sim.grid();
    let diag = SpdPath::from_fn(grid, |t| {
        let d: Vec<f64> = curv
            .iter()
            .zip(&lambda0)
            .map(|(c, l0)| l0 + sim.delta * t + c * t * t)
            .collect();
        SymMatrix::from_diagonal(&d)
    })?;
    let ri = rate::rate_i(&diag, sim.delta)?.expect_finite();
    let rj = rate::rate_j(&diag.eigenvalue_paths(), sim.delta)?.expect_finite();
    let diff = (ri - rj).abs();
    let pass = ks <= payload.ks_threshold && diff <= payload.diagonal_tolerance;
    let result = EigenContractResult {
        lambda0,
        ks_distance: ks,
        ks_threshold: payload.ks_threshold,
        ks_critical_95: 1.36 * (2.0 / n).sqrt(),
        mean_full: mean_estimate(&a),
        mean_eigen: mean_estimate(&b),
        sort_events: eig.sort_events,
        clamp_events: eig.clamp_events,
        repair: full.repair,
        diagonal_rate_i: ri,
        diagonal_rate_j: rj,
        diagonal_difference: diff,
        percentiles_full: percentiles(&a),
        percentiles_eigen: percentiles(&b),
        pass,
    };
    Ok(Report::new(spec, Status::gate(pass), result))
}

// ---------------------------------------------------------------------------
// Batch evaluation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Functional {
    /// Matrix path rate.
    #[default]
    RateI,
    /// Eigenvalue path rate, on the eigenvalues of the file's path.
    RateJ,
    /// Endpoint rate at the path's terminal value (`T = 1`).
    RateK,
    /// Largest-eigenvalue path rate, on `λ_max` of the file's path.
    RateIMax,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatePayload {
    pub functional: Functional,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<SpdPath>,
}

impl RatePayload {
    fn load(&self, spec: &ExperimentSpec) -> Result<SpdPath> {
        match (&self.path_file, &self.path) {
            (Some(f), None) => SpdPath::read(&spec.resolve(f)),
            (None, Some(p)) => SpdPath::new(p.grid.clone(), p.values.clone()),
            _ => Err(Error::Config(
                "rate payload needs exactly one of path_file and path".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateEvalResult {
    pub functional: Functional,
    /// Grid of the evaluated path; `report.contributions[j]` covers
    /// `[grid[j], grid[j + 1]]`.
    pub grid: Vec<f64>,
    pub value: RateValue,
    pub report: Option<RateReport>,
    pub class_f: Option<ClassFReport>,
}

pub fn run_rate_eval(spec: &ExperimentSpec) -> Result<Report<RateEvalResult>> {
    let payload: RatePayload = spec.payload()?;
    let path = payload.load(spec)?;
    let delta = spec.sim.delta;
    if !(delta > 0.0) {
        return Err(Error::Config("delta must be > 0".into()));
    }
    let (value, report, class_f) = match payload.functional {
        Functional::RateI => {
            let r = rate::rate_i(&path, delta)?;
            (r.value, Some(r), None)
        }
        Functional::RateJ => {
            let r = rate::rate_j(&path.eigenvalue_paths(), delta)?;
            (r.value, Some(r), None)
        }
        Functional::RateK => {
            let end = path.values.last().expect("validated path");
            (RateValue::Finite(rate::rate_k(end, delta)?), None, None)
        }
        Functional::RateIMax => {
            let top: ScalarPath = path.eigenvalue_paths().swap_remove(0);
            let r = rate::rate_i_max(&top, delta, path.dim())?;
            (
                r.value,
                Some(r),
                Some(rate::class_f_diagnostic(&top, delta)),
            )
        }
    };
    let result = RateEvalResult {
        functional: payload.functional,
        grid: path.grid.clone(),
        value,
        report,
        class_f,
    };
    Ok(Report::new(spec, Status::Complete, result))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiccatiPayload {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure: Option<MatrixMeasure>,
    /// Starting point for the Laplace value; zero when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<SymMatrix>,
}

impl RiccatiPayload {
    fn load(&self, spec: &ExperimentSpec) -> Result<(MatrixMeasure, SymMatrix)> {
        let mu = match (&self.measure_file, &self.measure) {
            (Some(f), None) => {
                MatrixMeasure::from_json(&std::fs::read_to_string(spec.resolve(f))?)?
            }
            (None, Some(m)) => m.clone(),
            _ => {
                return Err(Error::Config(
                    "riccati payload needs exactly one of measure_file and measure".into(),
                ))
            }
        };
        mu.validate(spec.sim.horizon)?;
        let dim = mu.dim()?;
        let x0 = self.x0.clone().unwrap_or_else(|| SymMatrix::zeros(dim));
        check_psd("x0", &x0, dim)?;
        Ok((mu, x0))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiccatiEvalResult {
    /// `F(0−)`, including any atom at the origin.
    pub f0: SymMatrix,
    pub trace_integral: f64,
    pub laplace: f64,
    pub max_eigenvalue: f64,
    pub max_residual: f64,
    pub solution: RiccatiSolution,
}

/// Solves the Riccati equation for the payload measure on `[0, sim.horizon]`
/// with `sim.steps` backward steps.
pub fn run_riccati_eval(spec: &ExperimentSpec) -> Result<Report<RiccatiEvalResult>> {
    let payload: RiccatiPayload = spec.payload()?;
    let (mu, x0) = payload.load(spec)?;
    let sim = &spec.sim;
    let (laplace, solution) =
        riccati::laplace_transform_with(&mu, &x0, sim.delta, sim.horizon, sim.steps)?;
    let result = RiccatiEvalResult {
        f0: solution.initial().clone(),
        trace_integral: solution.trace_integral,
        laplace,
        max_eigenvalue: solution.max_eigenvalue(),
        max_residual: solution.max_residual(&mu),
        solution,
    };
    Ok(Report::new(spec, Status::Complete, result))
}
