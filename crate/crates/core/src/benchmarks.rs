//! Benchmark objectives `F` with adjoint gradients.
//!
//! Two problems are provided:
//!
//! * [`HeatProblem`]: tracking-type control of the steady heat equation
//!   `-u'' = w` on `(0, 1)` with homogeneous Dirichlet conditions, P1 finite
//!   elements for the state and `W = {-2, ..., 23}`. The desired state is
//!   the constant [`HEAT_DESIRED_STATE`], which the zero boundary values
//!   rule out, so `F` stays bounded away from zero.
//! * [`DeconvProblem`]: reconstruction of a signal `f` on `(-1, 1)` from a
//!   Gaussian convolution of the control, `W = {-2, ..., 2}`, discretized with
//!   five-point Gauss-Legendre quadrature per cell.
//!
//! Both expose `F`, the cell means of the `L2` gradient representative
//! (`h * cell_means[i]` is the partial derivative with respect to cell `i`),
//! and the gradient evaluated at the interior cell interfaces.

use std::fmt;
use std::str::FromStr;

use crate::control::{Control, Grid, LabelSet};
use crate::error::{Error, Result};

/// Gradient representative of `F` at a control.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    /// Mean of the gradient over each cell.
    pub cell_means: Vec<f64>,
    /// Gradient at interfaces `1..n_cells`.
    pub interface_values: Vec<f64>,
}

/// Smooth part `F` of the objective.
///
/// The `_at` methods take real-valued cell vectors so that derivative checks
/// can leave the label set.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;

    fn grid(&self) -> &Grid;

    fn labels(&self) -> &LabelSet;

    fn objective_at(&self, cells: &[f64]) -> f64;

    fn gradient_at(&self, cells: &[f64]) -> Gradient;

    /// A lower bound of `F` over all controls.
    fn lower_bound(&self) -> f64 {
        0.0
    }

    fn objective(&self, w: &Control) -> f64 {
        self.objective_at(&w.to_f64())
    }

    fn gradient(&self, w: &Control) -> Gradient {
        self.gradient_at(&w.to_f64())
    }

    /// The constant control `0`, the start point of all sweeps.
    fn zero_control(&self) -> Control {
        Control::constant(*self.grid(), self.labels().clone(), 0)
            .expect("benchmark label sets contain zero")
    }
}

/// Compares `h * cell_means` against central differences of `F` in every
/// cell and returns `max_i |fd_i - h g_i| / max_i |h g_i|`.
pub fn fd_gradient_check(problem: &dyn Problem, w: &Control, probe_scale: f64) -> f64 {
    let h = problem.grid().h();
    let base = w.to_f64();
    let analytic: Vec<f64> = problem
        .gradient_at(&base)
        .cell_means
        .iter()
        .map(|g| h * g)
        .collect();
    let scale = analytic
        .iter()
        .fold(0.0f64, |m, g| m.max(g.abs()))
        .max(f64::MIN_POSITIVE);
    let mut probe = base.clone();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        probe[i] = base[i] + probe_scale;
        let up = problem.objective_at(&probe);
        probe[i] = base[i] - probe_scale;
        let down = problem.objective_at(&probe);
        probe[i] = base[i];
        let fd = (up - down) / (2.0 * probe_scale);
        worst = worst.max((fd - analytic[i]).abs() / scale);
    }
    worst
}

/// Selects one of the built-in benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Benchmark {
    Heat,
    Deconv,
}

impl Benchmark {
    pub fn build(self, n_cells: usize) -> Result<Box<dyn Problem>> {
        Ok(match self {
            Benchmark::Heat => Box::new(HeatProblem::new(n_cells)?),
            Benchmark::Deconv => Box::new(DeconvProblem::new(n_cells)?),
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Benchmark::Heat => "heat",
            Benchmark::Deconv => "deconv",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "heat" => Ok(Benchmark::Heat),
            "deconv" | "deconvolution" => Ok(Benchmark::Deconv),
            other => Err(Error::Config(format!(
                "unknown benchmark '{other}' (expected heat or deconv)"
            ))),
        }
    }
}

/// Version tag of the frozen benchmark data below.
pub const BENCHMARK_DATA_VERSION: u32 = 1;

/// Desired interior temperature of the heat problem.
pub const HEAT_DESIRED_STATE: f64 = 1.0;

/// Control of [`HeatProblem::attainable`]: `(right end, value)` of each
/// plateau on `(0, 1)`.
pub const HEAT_REFERENCE_PLATEAUS: [(f64, i32); 3] = [(0.25, 23), (0.625, -2), (1.0, 9)];

/// Standard deviation of the Gaussian deconvolution kernel.
pub const DECONV_KERNEL_WIDTH: f64 = 0.05;

/// Target signal of the deconvolution problem.
pub fn deconv_target(t: f64) -> f64 {
    0.2 * (2.0 * (t - 1.0) * std::f64::consts::PI - 0.25).cos() * (t - 1.0).exp()
}

/// Tridiagonal stiffness matrix `(1/h) tridiag(-1, 2, -1)` of `-u''` on the
/// interior nodes, with a precomputed Thomas factorization.
#[derive(Debug, Clone)]
struct Stiffness {
    h: f64,
    /// Super-diagonal of the normalized upper factor.
    upper: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl Stiffness {
    fn new(n_interior: usize, h: f64) -> Self {
        let mut upper = Vec::with_capacity(n_interior);
        let mut inv_pivot = Vec::with_capacity(n_interior);
        let mut prev = 0.0;
        for _ in 0..n_interior {
            let pivot = 2.0 + prev;
            inv_pivot.push(1.0 / pivot);
            prev = -1.0 / pivot;
            upper.push(prev);
        }
        Self {
            h,
            upper,
            inv_pivot,
        }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut x = vec![0.0; n];
        let mut carry = 0.0;
        for i in 0..n {
            carry = (self.h * rhs[i] + carry) * self.inv_pivot[i];
            x[i] = carry;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.upper[i] * x[i + 1];
        }
        x
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| {
                let left = if i > 0 { x[i - 1] } else { 0.0 };
                let right = if i + 1 < n { x[i + 1] } else { 0.0 };
                (2.0 * x[i] - left - right) / self.h
            })
            .collect()
    }
}

/// Steady heat equation tracking problem
/// `F(w) = 1/2 ||S w - u_d||^2_{L2}` with `S` the P1 solution operator of
/// `-u'' = w`, `u(0) = u(1) = 0`.
#[derive(Debug, Clone)]
pub struct HeatProblem {
    grid: Grid,
    labels: LabelSet,
    stiffness: Stiffness,
    /// Desired state at the interior nodes.
    target: Vec<f64>,
}

impl HeatProblem {
    /// Heat problem with the constant desired state [`HEAT_DESIRED_STATE`].
    pub fn new(n_cells: usize) -> Result<Self> {
        Self::with_target(n_cells, vec![HEAT_DESIRED_STATE; n_cells.saturating_sub(1)])
    }

    /// Heat problem whose desired state is the state of
    /// [`Self::reference_control`], so that `min F = 0`.
    pub fn attainable(n_cells: usize) -> Result<Self> {
        let mut problem = Self::with_target(n_cells, vec![0.0; n_cells.saturating_sub(1)])?;
        let reference = problem.reference_control().to_f64();
        problem.target = problem.state(&reference);
        Ok(problem)
    }

    /// Heat problem with an explicit desired state on the interior nodes.
    pub fn with_target(n_cells: usize, target: Vec<f64>) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::Config("heat problem needs at least two cells".into()));
        }
        if target.len() != n_cells - 1 {
            return Err(Error::Structure(format!(
                "desired state needs {} interior values, got {}",
                n_cells - 1,
                target.len()
            )));
        }
        let grid = Grid::unit(n_cells)?;
        Ok(Self {
            grid,
            labels: LabelSet::range(-2, 23)?,
            stiffness: Stiffness::new(n_cells - 1, grid.h()),
            target,
        })
    }

    /// The reference control sampled at cell midpoints.
    pub fn reference_control(&self) -> Control {
        let cells = (0..self.grid.n_cells())
            .map(|i| {
                let t = self.grid.midpoint(i);
                HEAT_REFERENCE_PLATEAUS
                    .iter()
                    .find(|(end, _)| t < *end)
                    .map_or(HEAT_REFERENCE_PLATEAUS[2].1, |p| p.1)
            })
            .collect();
        Control::new(self.grid, self.labels.clone(), cells).expect("reference values lie in W")
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// Load vector `b_j = int w phi_j` at the interior nodes.
    fn load(&self, cells: &[f64]) -> Vec<f64> {
        let h = self.grid.h();
        cells.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).collect()
    }

    /// Nodal values of the discrete state at the interior nodes.
    pub fn state(&self, cells: &[f64]) -> Vec<f64> {
        self.stiffness.solve(&self.load(cells))
    }

    /// `max |K u - b| / max |b|` for the state of `cells`.
    pub fn state_residual(&self, cells: &[f64]) -> f64 {
        let b = self.load(cells);
        let u = self.stiffness.solve(&b);
        let ku = self.stiffness.apply(&u);
        let err = ku.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let scale = b.iter().fold(0.0f64, |m, y| m.max(y.abs())).max(f64::MIN_POSITIVE);
        err / scale
    }

    /// `M e` for the P1 mass matrix on the interior nodes.
    fn mass(&self, e: &[f64]) -> Vec<f64> {
        let h = self.grid.h();
        let n = e.len();
        (0..n)
            .map(|j| {
                let left = if j > 0 { e[j - 1] } else { 0.0 };
                let right = if j + 1 < n { e[j + 1] } else { 0.0 };
                h / 6.0 * (left + 4.0 * e[j] + right)
            })
            .collect()
    }

    fn error(&self, cells: &[f64]) -> Vec<f64> {
        let mut e = self.state(cells);
        for (x, t) in e.iter_mut().zip(&self.target) {
            *x -= t;
        }
        e
    }
}

impl Problem for HeatProblem {
    fn name(&self) -> &str {
        "heat"
    }

    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn labels(&self) -> &LabelSet {
        &self.labels
    }

    fn objective_at(&self, cells: &[f64]) -> f64 {
        let e = self.error(cells);
        let me = self.mass(&e);
        0.5 * e.iter().zip(&me).map(|(a, b)| a * b).sum::<f64>()
    }

    fn gradient_at(&self, cells: &[f64]) -> Gradient {
        let e = self.error(cells);
        // Adjoint: K p = M e, i.e. -p'' = S w - u_d in P1.
        let p = self.stiffness.solve(&self.mass(&e));
        let n = self.grid.n_cells();
        let node = |j: usize| if j == 0 || j == n { 0.0 } else { p[j - 1] };
        let cell_means = (0..n).map(|i| 0.5 * (node(i) + node(i + 1))).collect();
        Gradient {
            cell_means,
            interface_values: p,
        }
    }
}

/// Gauss-Legendre nodes on `[-1, 1]`, five points.
const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];

const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];

/// Signal reconstruction problem
/// `F(w) = 1/2 ||K w - f||^2` with `(K w)(t) = int k(t - s) w(s) ds` and a
/// Gaussian kernel `k`. Observations sit at the quadrature nodes and the
/// norm uses the quadrature weights.
#[derive(Debug, Clone)]
pub struct DeconvProblem {
    grid: Grid,
    labels: LabelSet,
    kernel_width: f64,
    /// `conv[q][d + n - 1]`: weight of cell `i` in observation `(j, q)` with
    /// `d = j - i`.
    conv: [Vec<f64>; 5],
    /// `probe[q][d + n - 1]`: kernel between observation `(j, q)` and
    /// interface `k` with `d = j - k`.
    probe: [Vec<f64>; 5],
    target: Vec<f64>,
    obs_weights: Vec<f64>,
}

impl DeconvProblem {
    pub fn new(n_cells: usize) -> Result<Self> {
        Self::with_kernel_width(n_cells, DECONV_KERNEL_WIDTH)
    }

    pub fn with_kernel_width(n_cells: usize, kernel_width: f64) -> Result<Self> {
        if !(kernel_width > 0.0 && kernel_width.is_finite()) {
            return Err(Error::Config(format!("kernel width must be positive, got {kernel_width}")));
        }
        let grid = Grid::new(-1.0, 1.0, n_cells)?;
        let h = grid.h();
        let n = n_cells as i64;
        let kernel = |t: f64| {
            (-(t * t) / (2.0 * kernel_width * kernel_width)).exp()
                / (kernel_width * (2.0 * std::f64::consts::PI).sqrt())
        };
        let conv = std::array::from_fn(|q| {
            (-(n - 1)..n)
                .map(|d| {
                    GL_NODES
                        .iter()
                        .zip(GL_WEIGHTS)
                        .map(|(xs, ws)| {
                            0.5 * h * ws * kernel(h * d as f64 + 0.5 * h * (GL_NODES[q] - xs))
                        })
                        .sum()
                })
                .collect()
        });
        let probe = std::array::from_fn(|q| {
            (-(n - 1)..n)
                .map(|d| kernel(h * d as f64 + 0.5 * h * (1.0 + GL_NODES[q])))
                .collect()
        });
        let mut target = Vec::with_capacity(5 * n_cells);
        let mut obs_weights = Vec::with_capacity(5 * n_cells);
        for j in 0..n_cells {
            for q in 0..5 {
                target.push(deconv_target(Self::node(&grid, j, q)));
                obs_weights.push(0.5 * h * GL_WEIGHTS[q]);
            }
        }
        Ok(Self {
            grid,
            labels: LabelSet::range(-2, 2)?,
            kernel_width,
            conv,
            probe,
            target,
            obs_weights,
        })
    }

    fn node(grid: &Grid, cell: usize, q: usize) -> f64 {
        grid.a() + grid.h() * (cell as f64 + 0.5 * (1.0 + GL_NODES[q]))
    }

    /// Observation abscissae, five per cell.
    pub fn observation_points(&self) -> Vec<f64> {
        (0..self.grid.n_cells())
            .flat_map(|j| (0..5).map(move |q| (j, q)))
            .map(|(j, q)| Self::node(&self.grid, j, q))
            .collect()
    }

    pub fn target_samples(&self) -> &[f64] {
        &self.target
    }

    pub fn kernel_width(&self) -> f64 {
        self.kernel_width
    }

    /// `K w` at the observation points.
    pub fn forward(&self, cells: &[f64]) -> Vec<f64> {
        let n = self.grid.n_cells();
        let mut out = vec![0.0; 5 * n];
        for j in 0..n {
            for (q, row) in self.conv.iter().enumerate() {
                // d = j - i runs from j down to j - n + 1
                let taps = &row[j..j + n];
                out[5 * j + q] = taps.iter().rev().zip(cells).map(|(k, w)| k * w).sum();
            }
        }
        out
    }

    fn weighted_residual(&self, cells: &[f64]) -> Vec<f64> {
        let mut r = self.forward(cells);
        for ((x, f), om) in r.iter_mut().zip(&self.target).zip(&self.obs_weights) {
            *x = (*x - f) * om;
        }
        r
    }
}

impl Problem for DeconvProblem {
    fn name(&self) -> &str {
        "deconv"
    }

    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn labels(&self) -> &LabelSet {
        &self.labels
    }

    fn objective_at(&self, cells: &[f64]) -> f64 {
        let kw = self.forward(cells);
        0.5 * kw
            .iter()
            .zip(&self.target)
            .zip(&self.obs_weights)
            .map(|((k, f), om)| om * (k - f) * (k - f))
            .sum::<f64>()
    }

    fn gradient_at(&self, cells: &[f64]) -> Gradient {
        let n = self.grid.n_cells();
        let h = self.grid.h();
        let r = self.weighted_residual(cells);
        let mut cell_means = vec![0.0; n];
        for (i, g) in cell_means.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (q, row) in self.conv.iter().enumerate() {
                // d = j - i for j = 0..n sits at index j - i + n - 1
                let taps = &row[n - 1 - i..2 * n - 1 - i];
                acc += taps.iter().zip(r.iter().skip(q).step_by(5)).map(|(k, x)| k * x).sum::<f64>();
            }
            *g = acc / h;
        }
        let interface_values = (1..n)
            .map(|k| {
                self.probe
                    .iter()
                    .enumerate()
                    .map(|(q, row)| {
                        let taps = &row[n - 1 - k..2 * n - 1 - k];
                        taps.iter().zip(r.iter().skip(q).step_by(5)).map(|(p, x)| p * x).sum::<f64>()
                    })
                    .sum::<f64>()
            })
            .collect();
        Gradient {
            cell_means,
            interface_values,
        }
    }
}
