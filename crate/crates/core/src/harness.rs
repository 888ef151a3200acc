//! Experiment sweeps over `alpha` and radius policy.
//!
//! Every job builds its own benchmark instance, runs the trust-region method
//! from the zero control and reports one [`ExperimentRow`]. Jobs run on a
//! rayon pool limited by [`ExperimentConfig::jobs`] (falling back to the
//! `SLIP_TR_JOBS` environment variable); results are sorted by
//! `(alpha, policy)` so output does not depend on completion order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::Benchmark;
use crate::control::Control;
use crate::driver::{self, IterationRecord, RadiusPolicy, SolveResult, TrustRegionConfig};
use crate::error::{Error, Result};

pub const JOBS_ENV: &str = "SLIP_TR_JOBS";

pub const DEFAULT_ALPHAS: [f64; 7] = [1e-6, 5e-6, 1e-5, 5e-5, 1e-4, 5e-4, 1e-3];

/// Grid size for quick runs.
pub const DESK_N_CELLS: usize = 512;

/// Grid size of the full-scale protocol.
pub const FULL_N_CELLS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub benchmark: Benchmark,
    pub n_cells: usize,
    pub alphas: Vec<f64>,
    pub policies: Vec<RadiusPolicy>,
    /// Recorded for bookkeeping; the protocol itself is deterministic.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub sigma: Option<f64>,
    pub delta0: Option<f64>,
    pub delta_max: Option<f64>,
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(benchmark: Benchmark) -> Self {
        Self {
            benchmark,
            n_cells: DESK_N_CELLS,
            alphas: DEFAULT_ALPHAS.to_vec(),
            policies: RadiusPolicy::ALL.to_vec(),
            seed: 0,
            output_dir: PathBuf::from("out"),
            sigma: None,
            delta0: None,
            delta_max: None,
            jobs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells < 2 {
            return Err(Error::Config(format!("n_cells must be >= 2, got {}", self.n_cells)));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::Config(format!("alphas must be positive, got {a}")));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "benchmark" => self.benchmark = value.parse()?,
            "n_cells" => self.n_cells = parse_num(key, value)?,
            "alphas" => self.alphas = parse_list(value)?,
            "policies" | "policy" => self.policies = parse_policies(value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "output_dir" | "out" => self.output_dir = PathBuf::from(value),
            "sigma" => self.sigma = Some(parse_num(key, value)?),
            "delta0" => self.delta0 = Some(parse_num(key, value)?),
            "delta_max" => self.delta_max = Some(parse_num(key, value)?),
            "jobs" => self.jobs = Some(parse_num(key, value)?),
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Reads a flat `key = value` file; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected key = value", path.display(), lineno + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Driver settings for one job.
    pub fn driver_config(
        &self,
        problem: &dyn crate::benchmarks::Problem,
        alpha: f64,
        policy: RadiusPolicy,
    ) -> TrustRegionConfig {
        let mut cfg = TrustRegionConfig::for_problem(problem, alpha, policy);
        if let Some(s) = self.sigma {
            cfg.sigma = s;
        }
        if let Some(d) = self.delta0 {
            cfg.delta0 = d;
            if self.delta_max.is_none() {
                cfg.delta_max = cfg.delta_max.max(d);
            }
        }
        if let Some(d) = self.delta_max {
            cfg.delta_max = d;
        }
        cfg
    }

    /// `jobs`, else `SLIP_TR_JOBS`, else the number of available cores.
    pub fn resolved_jobs(&self) -> Result<usize> {
        if let Some(j) = self.jobs {
            return Ok(j);
        }
        match std::env::var(JOBS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(j) if j > 0 => Ok(j),
                _ => Err(Error::Config(format!("{JOBS_ENV} must be a positive integer, got '{v}'"))),
            },
            Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
}

/// Comma-separated reals.
pub fn parse_list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num("alphas", s))
        .collect()
}

/// Comma-separated policy names; `none` or an empty string gives no policies.
pub fn parse_policies(value: &str) -> Result<Vec<RadiusPolicy>> {
    let mut out: Vec<RadiusPolicy> = Vec::new();
    for s in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if s.eq_ignore_ascii_case("none") {
            continue;
        }
        if s.eq_ignore_ascii_case("both") || s.eq_ignore_ascii_case("all") {
            out.extend(RadiusPolicy::ALL);
        } else {
            out.push(s.parse()?);
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub alpha: f64,
    pub policy: RadiusPolicy,
    pub runtime_seconds: f64,
    pub final_objective: f64,
    pub iterations: u64,
    pub accepted_iterations: u64,
    pub final_criticality: f64,
    pub final_tv: u64,
}

/// One finished job with its full log.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub row: ExperimentRow,
    pub result: SolveResult,
}

/// Runs one `(alpha, policy)` job on a fresh benchmark instance.
pub fn run_job(config: &ExperimentConfig, alpha: f64, policy: RadiusPolicy) -> Result<SweepRun> {
    let problem = config.benchmark.build(config.n_cells)?;
    let cfg = config.driver_config(problem.as_ref(), alpha, policy);
    let w0 = problem.zero_control();

    let start = Instant::now();
    let result = driver::run(problem.as_ref(), w0, &cfg)?;
    let runtime_seconds = start.elapsed().as_secs_f64();

    let grad = problem.gradient(&result.final_control);
    let final_criticality = result.final_control.criticality(&grad.interface_values)?;
    let row = ExperimentRow {
        alpha,
        policy,
        runtime_seconds,
        final_objective: result.final_objective,
        iterations: result.iterations() as u64,
        accepted_iterations: result.accepted_iterations() as u64,
        final_criticality,
        final_tv: result.final_control.tv(),
    };
    log::info!(
        "{} alpha={alpha:e} {policy}: J={:.6e} iterations={} ({:.2}s, {:?})",
        config.benchmark,
        row.final_objective,
        row.iterations,
        runtime_seconds,
        result.termination
    );
    Ok(SweepRun { row, result })
}

/// All jobs of the sweep, sorted by `(alpha, policy)`.
pub fn run_sweep_detailed(config: &ExperimentConfig) -> Result<Vec<SweepRun>> {
    config.validate()?;
    let jobs: Vec<(f64, RadiusPolicy)> = config
        .alphas
        .iter()
        .flat_map(|&a| config.policies.iter().map(move |&p| (a, p)))
        .collect();
    if jobs.is_empty() {
        return Ok(Vec::new());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.resolved_jobs()?)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let mut runs = pool.install(|| {
        jobs.par_iter()
            .map(|&(a, p)| run_job(config, a, p))
            .collect::<Result<Vec<_>>>()
    })?;
    runs.sort_by(|x, y| {
        x.row
            .alpha
            .total_cmp(&y.row.alpha)
            .then(x.row.policy.cmp(&y.row.policy))
    });
    Ok(runs)
}

pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    Ok(run_sweep_detailed(config)?.into_iter().map(|r| r.row).collect())
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

fn write_records<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    create_parent(path)?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut wtr = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        wtr.serialize(r).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn write_csv(rows: &[ExperimentRow], path: &Path) -> Result<()> {
    write_records(rows, path)
}

pub fn read_csv(path: &Path) -> Result<Vec<ExperimentRow>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    rdr.deserialize().map(|r| r.map_err(csv_err)).collect()
}

/// Per-iteration log of a run.
pub fn write_history(history: &[IterationRecord], path: &Path) -> Result<()> {
    write_records(history, path)
}

const PLOT_WIDTH: f64 = 800.0;
const PLOT_HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;

/// SVG document for the step plot of `w`.
pub fn control_plot_svg(w: &Control) -> String {
    let grid = w.grid();
    let (lo, hi) = (w.labels().min() as f64, w.labels().max() as f64);
    let pad = 0.05 * (hi - lo);
    let (ylo, yhi) = (lo - pad, hi + pad);
    let x = |t: f64| MARGIN + (t - grid.a()) / grid.length() * (PLOT_WIDTH - 2.0 * MARGIN);
    let y = |v: f64| PLOT_HEIGHT - MARGIN - (v - ylo) / (yhi - ylo) * (PLOT_HEIGHT - 2.0 * MARGIN);
    let (x0, x1) = (x(grid.a()), x(grid.b()));
    let (y0, y1) = (y(ylo), y(yhi));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PLOT_WIDTH}" height="{PLOT_HEIGHT}" viewBox="0 0 {PLOT_WIDTH} {PLOT_HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black" stroke-width="1"><line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/><line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/></g>"#
    );
    let _ = writeln!(
        s,
        r#"<g class="labels" font-family="sans-serif" font-size="14" text-anchor="middle"><text x="{:.2}" y="{:.2}">t</text><text x="{:.2}" y="{:.2}" transform="rotate(-90 {:.2} {:.2})">w(t)</text>"#,
        0.5 * (x0 + x1),
        PLOT_HEIGHT - 15.0,
        20.0,
        0.5 * (y0 + y1),
        20.0,
        0.5 * (y0 + y1)
    );
    for (t, anchor) in [(grid.a(), x0), (grid.b(), x1)] {
        let _ = writeln!(s, r#"<text x="{anchor:.2}" y="{:.2}">{t}</text>"#, y0 + 20.0);
    }
    for v in [lo, hi] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v}</text>"#,
            x0 - 6.0,
            y(v) + 5.0
        );
    }
    let _ = writeln!(s, "</g>");

    let cells = w.cells();
    let n = cells.len();
    let mut plateaus = Vec::new();
    let mut start = 0;
    for i in 1..=n {
        if i == n || cells[i] != cells[start] {
            plateaus.push((start, i, cells[start]));
            start = i;
        }
    }
    let _ = writeln!(s, r#"<g class="control" stroke="steelblue" stroke-width="2" fill="none">"#);
    for &(from, to, v) in &plateaus {
        let yv = y(v as f64);
        let _ = writeln!(
            s,
            r#"<polyline class="plateau" points="{:.2},{yv:.2} {:.2},{yv:.2}"/>"#,
            x(grid.interface(from)),
            x(grid.interface(to))
        );
    }
    for pair in plateaus.windows(2) {
        let xs = x(grid.interface(pair[1].0));
        let _ = writeln!(
            s,
            r#"<line class="riser" x1="{xs:.2}" y1="{:.2}" x2="{xs:.2}" y2="{:.2}"/>"#,
            y(pair[0].2 as f64),
            y(pair[1].2 as f64)
        );
    }
    let _ = writeln!(s, "</g>\n</svg>");
    s
}

/// Writes [`control_plot_svg`] to `path`.
pub fn emit_control_plot(w: &Control, path: &Path) -> Result<()> {
    create_parent(path)?;
    fs::write(path, control_plot_svg(w)).map_err(|e| Error::io(path, e))
}

/// `(t_rt - t_nr) / t_rt`.
pub fn relative_improvement(t_rt: f64, t_nr: f64) -> f64 {
    (t_rt - t_nr) / t_rt
}

/// `(j_nr - j_rt) / |j_rt|`.
pub fn relative_gap(j_nr: f64, j_rt: f64) -> f64 {
    (j_nr - j_rt) / j_rt.abs()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub alpha: f64,
    /// `ok`, or the name of the missing policy.
    pub status: String,
    pub runtime_rt: Option<f64>,
    pub runtime_nr: Option<f64>,
    pub improvement: Option<f64>,
    pub objective_rt: Option<f64>,
    pub objective_nr: Option<f64>,
    pub gap: Option<f64>,
    pub iterations_rt: Option<u64>,
    pub iterations_nr: Option<u64>,
}

impl SummaryRow {
    pub fn is_complete(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

/// Pairs the two policies for each `alpha`.
pub fn summarize(rows: &[ExperimentRow]) -> Summary {
    let mut alphas: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup_by(|a, b| a.to_bits() == b.to_bits());

    let out = alphas
        .into_iter()
        .map(|alpha| {
            let find = |p| {
                rows.iter()
                    .find(|r| r.alpha.to_bits() == alpha.to_bits() && r.policy == p)
            };
            let nr = find(RadiusPolicy::DoubleNoReset);
            let rt = find(RadiusPolicy::ResetOnSuccess);
            let status = match (nr, rt) {
                (Some(_), Some(_)) => "ok".to_string(),
                (None, _) => format!("missing {:?}", RadiusPolicy::DoubleNoReset),
                (_, None) => format!("missing {:?}", RadiusPolicy::ResetOnSuccess),
            };
            if status != "ok" {
                log::warn!("alpha {alpha:e}: {status}, omitted from the comparison");
            }
            let both = nr.zip(rt);
            SummaryRow {
                alpha,
                status,
                runtime_rt: rt.map(|r| r.runtime_seconds),
                runtime_nr: nr.map(|r| r.runtime_seconds),
                improvement: both
                    .map(|(n, r)| relative_improvement(r.runtime_seconds, n.runtime_seconds)),
                objective_rt: rt.map(|r| r.final_objective),
                objective_nr: nr.map(|r| r.final_objective),
                gap: both.map(|(n, r)| relative_gap(n.final_objective, r.final_objective)),
                iterations_rt: rt.map(|r| r.iterations),
                iterations_nr: nr.map(|r| r.iterations),
            }
        })
        .collect();
    Summary { rows: out }
}

fn opt<T: std::fmt::Display>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map_or_else(|| "-".to_string(), f)
}

impl Summary {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from(
            "| alpha | t_RT [s] | t_NR [s] | improvement | J_RT | J_NR | gap | it_RT | it_NR |\n\
             |---|---|---|---|---|---|---|---|---|\n",
        );
        for r in &self.rows {
            if !r.is_complete() {
                let _ = writeln!(s, "| {:e} | warning: {} | | | | | | | |", r.alpha, r.status);
                continue;
            }
            let pct = |v: f64| {
                let p = 100.0 * v;
                format!("{:.1} %", if p.abs() < 0.05 { 0.0 } else { p })
            };
            let _ = writeln!(
                s,
                "| {:e} | {} | {} | {} | {} | {} | {} | {} | {} |",
                r.alpha,
                opt(r.runtime_rt, |v| format!("{v:.3}")),
                opt(r.runtime_nr, |v| format!("{v:.3}")),
                opt(r.improvement, pct),
                opt(r.objective_rt, |v| format!("{v:.4e}")),
                opt(r.objective_nr, |v| format!("{v:.4e}")),
                opt(r.gap, pct),
                opt(r.iterations_rt, |v| v.to_string()),
                opt(r.iterations_nr, |v| v.to_string()),
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_records(&self.rows, path)
    }

    pub fn write_markdown(&self, path: &Path) -> Result<()> {
        create_parent(path)?;
        fs::write(path, self.to_markdown()).map_err(|e| Error::io(path, e))
    }
}
