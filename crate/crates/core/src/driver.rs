//! Trust-region outer loop.
//!
//! Each iteration linearizes `F` at the current control, solves the
//! subproblem exactly, and accepts the candidate when the actual reduction
//! reaches `sigma` times the predicted one. On acceptance the radius is
//! either doubled up to `delta_max` ([`RadiusPolicy::DoubleNoReset`]) or
//! reset to `delta0` ([`RadiusPolicy::ResetOnSuccess`]); on rejection it is
//! halved.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::benchmarks::Problem;
use crate::control::{
    gradient_lipschitz_estimate, pred_bound_c0, Control, LabelSet, TheoryDiagnostics,
};
use crate::error::{Error, Result};
use crate::subproblem::{solve_tr_dp, SubproblemInput};

/// Relative tolerance of the `pred = 0` termination test.
pub const PRED_ZERO_TOL: f64 = 1e-12;

pub const DEFAULT_SIGMA: f64 = 1e-3;

pub const DEFAULT_MAX_ITERATIONS: u64 = 1_000_000;

/// Radius update after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RadiusPolicy {
    /// `delta <- min(2 delta, delta_max)`.
    DoubleNoReset,
    /// `delta <- delta0`.
    ResetOnSuccess,
}

impl RadiusPolicy {
    pub const ALL: [RadiusPolicy; 2] = [RadiusPolicy::DoubleNoReset, RadiusPolicy::ResetOnSuccess];

    pub fn as_str(self) -> &'static str {
        match self {
            RadiusPolicy::DoubleNoReset => "nr",
            RadiusPolicy::ResetOnSuccess => "rt",
        }
    }
}

impl fmt::Display for RadiusPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RadiusPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nr" | "double-no-reset" | "doublenoreset" => Ok(RadiusPolicy::DoubleNoReset),
            "rt" | "reset-on-success" | "resetonsuccess" => Ok(RadiusPolicy::ResetOnSuccess),
            other => Err(Error::Config(format!(
                "unknown radius policy '{other}' (expected nr or rt)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionConfig {
    pub sigma: f64,
    pub delta0: f64,
    /// May be `f64::INFINITY`.
    pub delta_max: f64,
    pub policy: RadiusPolicy,
    pub alpha: f64,
    pub delta_min: f64,
    pub max_iterations: u64,
}

impl TrustRegionConfig {
    /// Defaults for `problem`: `sigma = 1e-3`, `delta0 = delta_max` equal to
    /// the L1 diameter `(b - a) * (max W - min W)`, `delta_min = h`.
    pub fn for_problem(problem: &dyn Problem, alpha: f64, policy: RadiusPolicy) -> Self {
        let grid = problem.grid();
        let diameter = grid.length() * problem.labels().span() as f64;
        Self {
            sigma: DEFAULT_SIGMA,
            delta0: diameter,
            delta_max: diameter,
            policy,
            alpha,
            delta_min: grid.h(),
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return bad(format!("sigma must lie in (0, 1), got {}", self.sigma));
        }
        if !(self.delta0 > 0.0 && self.delta0.is_finite()) {
            return bad(format!("delta0 must be positive and finite, got {}", self.delta0));
        }
        if !(self.delta_max >= self.delta0) {
            return bad(format!(
                "delta_max ({}) must be at least delta0 ({})",
                self.delta_max, self.delta0
            ));
        }
        if !(self.delta_min > 0.0 && self.delta_min.is_finite()) {
            return bad(format!("delta_min must be positive, got {}", self.delta_min));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        Ok(())
    }

    /// Radius after an iteration with the given outcome.
    pub fn next_radius(&self, delta: f64, accepted: bool) -> f64 {
        if !accepted {
            return 0.5 * delta;
        }
        match self.policy {
            RadiusPolicy::DoubleNoReset => (2.0 * delta).min(self.delta_max),
            RadiusPolicy::ResetOnSuccess => self.delta0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub n: u64,
    pub delta_n: f64,
    pub delta_next: f64,
    pub pred: f64,
    pub ared: f64,
    pub accepted: bool,
    /// `J(w_n)`.
    pub objective: f64,
    pub criticality: f64,
    pub tv: u64,
    pub n_switches: u64,
    /// `(1 - sigma) * pred - |ared - pred|`.
    pub r_n: f64,
    pub delta_a: f64,
    pub c1: f64,
    /// L1 units of `h` moved by the candidate.
    pub budget_used: u64,
    /// Seconds since the start of the run, taken at the end of the iteration.
    pub wall_time: f64,
}

impl IterationRecord {
    /// `pred > 0` and `R_n >= 0`, which forces acceptance.
    pub fn has_certificate(&self) -> bool {
        self.pred > 0.0 && self.r_n >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Termination {
    PredZero,
    RadiusBelowMesh,
    IterationCap,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub final_control: Control,
    pub history: Vec<IterationRecord>,
    pub termination: Termination,
    /// Objective of `final_control`.
    pub final_objective: f64,
}

impl SolveResult {
    /// Number of subproblem solves.
    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    pub fn accepted_iterations(&self) -> usize {
        self.history.iter().filter(|r| r.accepted).count()
    }
}

/// `J(w) = F(w) + alpha * TV(w)`.
pub fn objective(problem: &dyn Problem, w: &Control, alpha: f64) -> f64 {
    problem.objective(w) + alpha * w.tv() as f64
}

/// `J(w_bar) - J(w)`.
pub fn ared(problem: &dyn Problem, w_bar: &Control, w: &Control, alpha: f64) -> f64 {
    objective(problem, w_bar, alpha) - objective(problem, w, alpha)
}

/// `(1 - sigma) * pred - |ared - pred|`.
pub fn certificate_margin(pred: f64, ared: f64, sigma: f64) -> f64 {
    (1.0 - sigma) * pred - (ared - pred).abs()
}

/// Runs the trust-region method from `w0`.
pub fn run(problem: &dyn Problem, w0: Control, config: &TrustRegionConfig) -> Result<SolveResult> {
    config.validate()?;
    if w0.grid() != problem.grid() || w0.labels() != problem.labels() {
        return Err(Error::Structure(format!(
            "start control does not live on the grid and labels of '{}'",
            problem.name()
        )));
    }

    let start = Instant::now();
    let alpha = config.alpha;
    let mut w = w0;
    let mut j = objective(problem, &w, alpha);
    let mut delta = config.delta0;
    let mut history = Vec::new();

    for n in 0..config.max_iterations {
        let grad = problem.gradient(&w);
        let criticality = w.criticality(&grad.interface_values)?;
        let input = SubproblemInput::new(&w, &grad.cell_means, delta, alpha)?;
        let sol = solve_tr_dp(&input);

        let mut record = IterationRecord {
            n,
            delta_n: delta,
            delta_next: delta,
            pred: sol.pred,
            ared: 0.0,
            accepted: false,
            objective: j,
            criticality,
            tv: w.tv(),
            n_switches: w.n_switches() as u64,
            r_n: 0.0,
            delta_a: w.min_opposite_switch_distance(),
            c1: gradient_lipschitz_estimate(&grad.interface_values, w.grid().h()),
            budget_used: sol.budget_used,
            wall_time: 0.0,
        };

        if sol.pred <= PRED_ZERO_TOL * (j.abs() + 1.0) {
            record.pred = 0.0;
            record.r_n = 0.0;
            record.wall_time = start.elapsed().as_secs_f64();
            log::debug!("{}: pred = 0 at iteration {n}", problem.name());
            history.push(record);
            return Ok(finish(w, history, Termination::PredZero, j));
        }

        let j_new = objective(problem, &sol.w_star, alpha);
        let ared = j - j_new;
        let accepted = ared >= config.sigma * sol.pred;
        let delta_next = config.next_radius(delta, accepted);
        record.ared = ared;
        record.accepted = accepted;
        record.delta_next = delta_next;
        record.r_n = certificate_margin(sol.pred, ared, config.sigma);

        log::trace!(
            "{} it {n}: delta {delta:.3e} pred {:.3e} ared {ared:.3e} {}",
            problem.name(),
            sol.pred,
            if accepted { "accept" } else { "reject" }
        );

        if accepted {
            w = sol.w_star;
            j = j_new;
        }
        record.wall_time = start.elapsed().as_secs_f64();
        history.push(record);

        if delta_next < config.delta_min {
            return Ok(finish(w, history, Termination::RadiusBelowMesh, j));
        }
        delta = delta_next;
    }
    Ok(finish(w, history, Termination::IterationCap, j))
}

fn finish(w: Control, history: Vec<IterationRecord>, termination: Termination, j: f64) -> SolveResult {
    SolveResult {
        final_control: w,
        history,
        termination,
        final_objective: j,
    }
}

/// Constants of the pred lower bound at the iterate of `record`, with
/// `n_max` taken as the switch count of that iterate.
pub fn diagnostics(
    record: &IterationRecord,
    config: &TrustRegionConfig,
    labels: &LabelSet,
) -> TheoryDiagnostics {
    TheoryDiagnostics {
        delta_a: record.delta_a,
        c0: pred_bound_c0(record.n_switches, labels),
        c1: record.c1,
        n_max: record.n_switches,
        r_n: certificate_margin(record.pred, record.ared, config.sigma),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::Gradient;
    use crate::control::Grid;

    /// `F(w) = h * sum c_i w_i`, for which the model is exact.
    struct Linear {
        grid: Grid,
        labels: LabelSet,
        c: Vec<f64>,
    }

    impl Problem for Linear {
        fn name(&self) -> &str {
            "linear"
        }
        fn grid(&self) -> &Grid {
            &self.grid
        }
        fn labels(&self) -> &LabelSet {
            &self.labels
        }
        fn objective_at(&self, cells: &[f64]) -> f64 {
            let h = self.grid.h();
            cells.iter().zip(&self.c).map(|(w, c)| h * c * w).sum()
        }
        fn gradient_at(&self, _cells: &[f64]) -> Gradient {
            let mut iface = Vec::with_capacity(self.c.len().saturating_sub(1));
            for k in 1..self.c.len() {
                iface.push(0.5 * (self.c[k - 1] + self.c[k]));
            }
            Gradient {
                cell_means: self.c.clone(),
                interface_values: iface,
            }
        }
        fn lower_bound(&self) -> f64 {
            let h = self.grid.h();
            self.c
                .iter()
                .map(|&c| h * (c * self.labels.min() as f64).min(c * self.labels.max() as f64))
                .sum()
        }
    }

    fn linear(c: Vec<f64>) -> Linear {
        Linear {
            grid: Grid::unit(c.len()).unwrap(),
            labels: LabelSet::range(-1, 1).unwrap(),
            c,
        }
    }

    #[test]
    fn ared_of_identical_controls_is_zero() {
        let p = linear(vec![1.0, -2.0, 0.5]);
        let w = p.zero_control();
        assert_eq!(ared(&p, &w, &w, 0.1), 0.0);
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let p = linear(vec![0.0; 8]);
        let cfg = TrustRegionConfig::for_problem(&p, 1e-2, RadiusPolicy::DoubleNoReset);
        let res = run(&p, p.zero_control(), &cfg).unwrap();
        assert_eq!(res.termination, Termination::PredZero);
        assert_eq!(res.history.len(), 1);
        assert_eq!(res.history[0].pred, 0.0);
        assert_eq!(res.final_control, p.zero_control());
    }

    #[test]
    fn linear_objective_accepts_every_productive_step() {
        let c: Vec<f64> = (0..16).map(|i| ((i as f64) * 0.7).sin()).collect();
        let p = linear(c);
        for policy in RadiusPolicy::ALL {
            let mut cfg = TrustRegionConfig::for_problem(&p, 1e-3, policy);
            cfg.delta0 = 4.0 * p.grid().h();
            cfg.delta_max = 64.0 * p.grid().h();
            let res = run(&p, p.zero_control(), &cfg).unwrap();
            assert_eq!(res.termination, Termination::PredZero);
            for r in &res.history {
                if r.pred > 0.0 {
                    assert!(r.accepted, "{policy}: {r:?}");
                    assert!((r.ared - r.pred).abs() <= 1e-12 * (1.0 + r.pred));
                    assert!(r.delta_next >= r.delta_n || policy == RadiusPolicy::ResetOnSuccess);
                }
            }
        }
    }

    #[test]
    fn radius_updates_follow_policy() {
        let mut cfg = TrustRegionConfig {
            sigma: 0.5,
            delta0: 1.0,
            delta_max: 3.0,
            policy: RadiusPolicy::DoubleNoReset,
            alpha: 1.0,
            delta_min: 0.1,
            max_iterations: 10,
        };
        assert_eq!(cfg.next_radius(1.0, true), 2.0);
        assert_eq!(cfg.next_radius(2.0, true), 3.0);
        assert_eq!(cfg.next_radius(2.0, false), 1.0);
        cfg.policy = RadiusPolicy::ResetOnSuccess;
        assert_eq!(cfg.next_radius(0.25, true), 1.0);
        assert_eq!(cfg.next_radius(0.25, false), 0.125);
    }

    #[test]
    fn config_validation() {
        let p = linear(vec![1.0; 4]);
        let good = TrustRegionConfig::for_problem(&p, 1e-3, RadiusPolicy::DoubleNoReset);
        assert!(good.validate().is_ok());
        let mut inf = good.clone();
        inf.delta_max = f64::INFINITY;
        assert!(inf.validate().is_ok());
        for tweak in [
            |c: &mut TrustRegionConfig| c.sigma = 1.0,
            |c: &mut TrustRegionConfig| c.sigma = 0.0,
            |c: &mut TrustRegionConfig| c.delta0 = 0.0,
            |c: &mut TrustRegionConfig| c.delta_max = c.delta0 * 0.5,
            |c: &mut TrustRegionConfig| c.delta_min = 0.0,
            |c: &mut TrustRegionConfig| c.alpha = -1.0,
            |c: &mut TrustRegionConfig| c.max_iterations = 0,
        ] {
            let mut c = good.clone();
            tweak(&mut c);
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn certificate_arithmetic() {
        assert_eq!(certificate_margin(1.0, 0.0, 0.5), -0.5);
        assert_eq!(certificate_margin(2.0, 2.0, 0.25), 1.5);
    }

    #[test]
    fn policy_names_round_trip() {
        for p in RadiusPolicy::ALL {
            assert_eq!(p.as_str().parse::<RadiusPolicy>().unwrap(), p);
        }
        assert!("nope".parse::<RadiusPolicy>().is_err());
    }

    #[test]
    fn rejects_foreign_start_control() {
        let p = linear(vec![1.0; 4]);
        let other = Control::constant(Grid::unit(5).unwrap(), p.labels.clone(), 0).unwrap();
        let cfg = TrustRegionConfig::for_problem(&p, 1e-3, RadiusPolicy::DoubleNoReset);
        assert!(run(&p, other, &cfg).is_err());
    }
}
