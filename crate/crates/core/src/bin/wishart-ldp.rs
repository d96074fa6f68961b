use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use wishart_ldp::harness::{self, ExperimentKind, ExperimentSpec, Report, Status};
use wishart_ldp::simulator::{self, EigenOptions, RepairStats, SimConfig};
use wishart_ldp::{Error, Result, SymMatrix};

const CSV_HELP: &str = "\
CSV columns written by --csv:
  simulate        WISHART: replica,t,x_1_1,x_1_2,...,x_m_m (upper triangle, row-major)
                  TRACE:   replica,t,y
                  EIGEN:   replica,t,lambda_1,...,lambda_m (largest first)
  rate            t_left,t_right,contribution
  riccati         t,f_1_1,f_1_2,...,f_m_m (right-continuous F)
  laplace-check   m,theta_index,empirical_mean,standard_error,analytic,z_score,pass
  additivity      theta_index,sum_mean,sum_se,direct_mean,direct_se,analytic,z_score,pass
  ldp-scan        epsilon,replicas,hits,probability,wilson_low,wilson_high,scaled_log_prob
  eigen-contract  percentile,lambda_max_full,lambda_max_eigen

Exit status: 0 on PASS or completion, 2 on a statistical FAIL, 1 on input errors.";

#[derive(Parser)]
#[command(name = "wishart-ldp", version, about = "Wishart process simulation and large deviation experiments", after_help = CSV_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate Wishart, trace or eigenvalue paths.
    Simulate(Common),
    /// Evaluate a rate functional on a path file.
    Rate(Common),
    /// Solve the backward Riccati equation for a measure.
    Riccati(Common),
    /// Monte Carlo check of the Laplace transform (default battery without --config).
    LaplaceCheck(Common),
    /// Monte Carlo check of additivity in the dimension parameter.
    Additivity(Common),
    /// Tube probability scan over decreasing noise levels.
    LdpScan(Common),
    /// Full-matrix versus eigenvalue-SDE comparison of the largest eigenvalue.
    EigenContract(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (.json or .toml).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Matrix dimension.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// Noise level; for ldp-scan a comma-separated decreasing list.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON report destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plottable series destination.
    #[arg(long)]
    csv: Option<PathBuf>,
}

impl Common {
    fn single_eps(&self) -> Result<Option<f64>> {
        match self.eps.as_deref() {
            None => Ok(None),
            Some([e]) => Ok(Some(*e)),
            Some(_) => Err(Error::Config("--eps takes a single value here".into())),
        }
    }

    fn apply(&self, sim: &mut SimConfig) -> Result<()> {
        if let Some(m) = self.m {
            sim.dim = m;
        }
        if let Some(d) = self.delta {
            sim.delta = d;
        }
        if let Some(e) = self.single_eps()? {
            sim.epsilon = e;
        }
        if let Some(s) = self.steps {
            sim.steps = s;
        }
        if let Some(r) = self.replicas {
            sim.replicas = r;
        }
        if let Some(s) = self.seed {
            sim.seed = s;
        }
        Ok(())
    }

    /// Spec from `--config` (or `fallback` without one), with overrides applied.
    fn spec(
        &self,
        kind: ExperimentKind,
        fallback: impl FnOnce() -> Result<ExperimentSpec>,
    ) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::load_as(path, Some(kind))?,
            None => fallback()?,
        };
        if kind == ExperimentKind::LdpScan {
            let mut payload: harness::LdpPayload = spec.payload()?;
            if let Some(list) = &self.eps {
                payload.epsilons = list.clone();
            }
            spec.payload = serde_json::to_value(payload)?;
            let mut sim = spec.sim.clone();
            Common {
                eps: None,
                ..self.clone()
            }
            .apply(&mut sim)?;
            spec.sim = sim;
        } else {
            self.apply(&mut spec.sim)?;
        }
        if let Some(out) = &self.out {
            spec.output_path = Some(out.display().to_string());
        }
        spec.validate()?;
        Ok(spec)
    }

    fn emit(&self, output_path: Option<&str>, json: &str, csv: Option<String>) -> Result<()> {
        match output_path {
            Some(p) => std::fs::write(p, json)?,
            None => println!("{json}"),
        }
        if let (Some(path), Some(text)) = (&self.csv, csv) {
            std::fs::write(path, text)?;
        }
        Ok(())
    }
}

fn needs_config(kind: &str) -> Result<ExperimentSpec> {
    Err(Error::Config(format!("{kind} needs --config")))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
enum Process {
    #[default]
    Wishart,
    Trace,
    Eigen,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateConfig {
    sim: SimConfig,
    process: Process,
    /// Starting matrix (WISHART), or its trace (TRACE) / eigenvalues (EIGEN).
    #[serde(skip_serializing_if = "Option::is_none")]
    x0: Option<SymMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_path: Option<String>,
}

#[derive(Serialize)]
struct SimulateResult {
    /// Terminal value per replica: upper triangle, trace, or eigenvalues.
    terminals: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    repair: Option<RepairStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sort_events: Option<u64>,
}

#[derive(Serialize)]
struct SimulateReport {
    kind: &'static str,
    status: Status,
    timestamp: u64,
    config: SimulateConfig,
    result: SimulateResult,
}

fn simulate(args: &Common) -> Result<Status> {
    let mut cfg: SimulateConfig = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            match p.extension().and_then(|e| e.to_str()) {
                Some("toml") => toml::from_str(&text)?,
                _ => serde_json::from_str(&text)?,
            }
        }
        None => SimulateConfig::default(),
    };
    args.apply(&mut cfg.sim)?;
    if let Some(out) = &args.out {
        cfg.output_path = Some(out.display().to_string());
    }
    let sim = &cfg.sim;
    sim.validate()?;
    let x0 = cfg.x0.clone().unwrap_or_else(|| SymMatrix::zeros(sim.dim));
    let mut csv = String::new();
    let mut terminals = Vec::with_capacity(sim.replicas);
    let (mut repair, mut sort_events) = (None, None);
    match cfg.process {
        Process::Wishart => {
            let mut total = RepairStats::default();
            let header: Vec<String> = (1..=sim.dim)
                .flat_map(|i| (i..=sim.dim).map(move |j| format!("x_{i}_{j}")))
                .collect();
            let _ = writeln!(csv, "replica,t,{}", header.join(","));
            for r in 0..sim.replicas as u64 {
                let mut last = Vec::new();
                let (stats, _) = simulator::visit_wishart_replica(sim, &x0, r, |_, t, x| {
                    last = x.upper_triangle();
                    let cells: Vec<String> = last.iter().map(|v| format!("{v:e}")).collect();
                    let _ = writeln!(csv, "{r},{t:e},{}", cells.join(","));
                    true
                })?;
                total.merge(&stats);
                terminals.push(last);
            }
            repair = Some(total);
        }
        Process::Trace => {
            csv.push_str("replica,t,y\n");
            for r in 0..sim.replicas as u64 {
                let p = simulator::simulate_trace_besq_replica(sim, x0.trace(), r)?;
                for (t, y) in p.grid.iter().zip(&p.values) {
                    let _ = writeln!(csv, "{r},{t:e},{y:e}");
                }
                terminals.push(vec![p.last()]);
            }
        }
        Process::Eigen => {
            let mut lambda0 = x0.eigenvalues();
            lambda0.reverse();
            let header: Vec<String> = (1..=sim.dim).map(|i| format!("lambda_{i}")).collect();
            let _ = writeln!(csv, "replica,t,{}", header.join(","));
            let mut events = 0;
            for r in 0..sim.replicas as u64 {
                let s = simulator::simulate_eigenvalues_replica(
                    sim,
                    &lambda0,
                    EigenOptions::default(),
                    r,
                )?;
                for (k, t) in s.paths[0].grid.iter().enumerate() {
                    let cells: Vec<String> = s
                        .paths
                        .iter()
                        .map(|p| format!("{:e}", p.values[k]))
                        .collect();
                    let _ = writeln!(csv, "{r},{t:e},{}", cells.join(","));
                }
                events += s.sort_events;
                terminals.push(s.paths.iter().map(|p| p.last()).collect());
            }
            sort_events = Some(events);
        }
    }
    let report = SimulateReport {
        kind: "SIMULATE",
        status: Status::Complete,
        timestamp: now(),
        config: cfg.clone(),
        result: SimulateResult {
            terminals,
            repair,
            sort_events,
        },
    };
    args.emit(
        cfg.output_path.as_deref(),
        &serde_json::to_string_pretty(&report)?,
        Some(csv),
    )?;
    Ok(Status::Complete)
}

fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn bool_cell(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}

fn laplace_csv(m: usize, r: &harness::LaplaceCheckResult, out: &mut String) {
    for (i, e) in r.entries.iter().enumerate() {
        let _ = writeln!(
            out,
            "{m},{i},{:e},{:e},{:e},{:e},{}",
            e.empirical.mean,
            e.empirical.standard_error,
            e.analytic,
            e.z_score,
            bool_cell(e.pass)
        );
    }
}

#[derive(Serialize)]
struct BatteryReport {
    kind: ExperimentKind,
    status: Status,
    timestamp: u64,
    runs: Vec<Report<harness::LaplaceCheckResult>>,
}

fn laplace_check(args: &Common) -> Result<Status> {
    let mut csv =
        String::from("m,theta_index,empirical_mean,standard_error,analytic,z_score,pass\n");
    if args.config.is_none() && args.m.is_none() {
        // Default battery: m = 1, 2, 3 with δ = m + 1.
        if args.delta.is_some() || args.eps.is_some() {
            return Err(Error::Config(
                "the default battery fixes delta and eps; pass --m to run one case".into(),
            ));
        }
        let specs = harness::default_laplace_battery(
            args.replicas.unwrap_or(100_000),
            args.steps.unwrap_or(1000),
            args.seed.unwrap_or(0),
        );
        let mut runs = Vec::new();
        for spec in &specs {
            let report = harness::run_laplace_check(spec)?;
            laplace_csv(spec.sim.dim, &report.result, &mut csv);
            runs.push(report);
        }
        let status = if runs.iter().all(|r| r.status == Status::Pass) {
            Status::Pass
        } else {
            Status::Fail
        };
        let report = BatteryReport {
            kind: ExperimentKind::LaplaceCheck,
            status,
            timestamp: now(),
            runs,
        };
        let out = args.out.as_ref().map(|p| p.display().to_string());
        args.emit(
            out.as_deref(),
            &serde_json::to_string_pretty(&report)?,
            Some(csv),
        )?;
        return Ok(status);
    }
    let spec = args.spec(ExperimentKind::LaplaceCheck, || {
        let m = args.m.unwrap_or(2);
        ExperimentSpec::new(
            ExperimentKind::LaplaceCheck,
            SimConfig {
                dim: m,
                delta: m as f64 + 1.0,
                epsilon: 1.0,
                replicas: 100_000,
                ..SimConfig::default()
            },
            (),
        )
    })?;
    let report = harness::run_laplace_check(&spec)?;
    laplace_csv(spec.sim.dim, &report.result, &mut csv);
    args.emit(spec.output_path.as_deref(), &report.to_json()?, Some(csv))?;
    Ok(report.status)
}

fn additivity(args: &Common) -> Result<Status> {
    let spec = args.spec(ExperimentKind::Additivity, || {
        ExperimentSpec::new(
            ExperimentKind::Additivity,
            SimConfig {
                dim: 2,
                replicas: 20_000,
                ..SimConfig::default()
            },
            (),
        )
    })?;
    let report = harness::run_additivity(&spec)?;
    let mut csv =
        String::from("theta_index,sum_mean,sum_se,direct_mean,direct_se,analytic,z_score,pass\n");
    for (i, e) in report.result.entries.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{i},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            e.sum.mean,
            e.sum.standard_error,
            e.direct.mean,
            e.direct.standard_error,
            e.analytic,
            e.z_score,
            bool_cell(e.pass)
        );
    }
    args.emit(spec.output_path.as_deref(), &report.to_json()?, Some(csv))?;
    Ok(report.status)
}

fn ldp_scan(args: &Common) -> Result<Status> {
    let spec = args.spec(ExperimentKind::LdpScan, || {
        ExperimentSpec::new(
            ExperimentKind::LdpScan,
            SimConfig {
                dim: 2,
                delta: 3.0,
                replicas: 100_000,
                ..SimConfig::default()
            },
            (),
        )
    })?;
    let report = harness::run_ldp_scan(&spec)?;
    let mut csv =
        String::from("epsilon,replicas,hits,probability,wilson_low,wilson_high,scaled_log_prob\n");
    for p in &report.result.points {
        let scaled = p
            .scaled_log_prob
            .map_or(String::new(), |v| format!("{v:e}"));
        let _ = writeln!(
            csv,
            "{:e},{},{},{:e},{:e},{:e},{scaled}",
            p.epsilon, p.replicas, p.hits, p.probability, p.wilson_low, p.wilson_high
        );
    }
    if report.result.low_hits {
        eprintln!("warning: LOW_HITS at some epsilon");
    }
    args.emit(spec.output_path.as_deref(), &report.to_json()?, Some(csv))?;
    Ok(report.status)
}

fn eigen_contract(args: &Common) -> Result<Status> {
    let spec = args.spec(ExperimentKind::EigenContract, || {
        ExperimentSpec::new(
            ExperimentKind::EigenContract,
            SimConfig {
                dim: 2,
                delta: 3.0,
                epsilon: 0.4,
                replicas: 10_000,
                ..SimConfig::default()
            },
            (),
        )
    })?;
    let report = harness::run_eigen_contract(&spec)?;
    let r = &report.result;
    let mut csv = String::from("percentile,lambda_max_full,lambda_max_eigen\n");
    for (i, (a, b)) in r
        .percentiles_full
        .iter()
        .zip(&r.percentiles_eigen)
        .enumerate()
    {
        let _ = writeln!(csv, "{},{a:e},{b:e}", i + 1);
    }
    args.emit(spec.output_path.as_deref(), &report.to_json()?, Some(csv))?;
    Ok(report.status)
}

fn rate(args: &Common) -> Result<Status> {
    let spec = args.spec(ExperimentKind::RateEval, || needs_config("rate"))?;
    let report = harness::run_rate_eval(&spec)?;
    let grid = &report.result.grid;
    let csv = report.result.report.as_ref().map(|r| {
        let mut out = String::from("t_left,t_right,contribution\n");
        for (j, c) in r.contributions.iter().enumerate() {
            let _ = writeln!(out, "{:e},{:e},{c:e}", grid[j], grid[j + 1]);
        }
        out
    });
    args.emit(spec.output_path.as_deref(), &report.to_json()?, csv)?;
    Ok(report.status)
}

fn riccati(args: &Common) -> Result<Status> {
    let spec = args.spec(ExperimentKind::RiccatiEval, || needs_config("riccati"))?;
    let report = harness::run_riccati_eval(&spec)?;
    let csv = report.result.solution.to_csv();
    args.emit(spec.output_path.as_deref(), &report.to_json()?, Some(csv))?;
    Ok(report.status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Rate(a) => rate(a),
        Command::Riccati(a) => riccati(a),
        Command::LaplaceCheck(a) => laplace_check(a),
        Command::Additivity(a) => additivity(a),
        Command::LdpScan(a) => ldp_scan(a),
        Command::EigenContract(a) => eigen_contract(a),
    };
    match outcome {
        Ok(Status::Fail) => ExitCode::from(2),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
