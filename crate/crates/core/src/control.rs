//! Piecewise-constant integer controls on a uniform 1D grid.
//!
//! A [`Control`] assigns one label from a finite [`LabelSet`] to every cell
//! of a [`Grid`]. Switches live on cell interfaces `a + i*h`, and the jump at
//! an interface is `right - left`. Total variation is kept as an exact
//! integer; callers scale it by `alpha` when forming objectives.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Uniform partition of `[a, b]` into `n_cells` cells of width `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    a: f64,
    b: f64,
    n_cells: usize,
    h: f64,
}

impl Grid {
    pub fn new(a: f64, b: f64, n_cells: usize) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::Config("grid needs at least one cell".into()));
        }
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::Config(format!("invalid grid interval [{a}, {b}]")));
        }
        Ok(Self {
            a,
            b,
            n_cells,
            h: (b - a) / n_cells as f64,
        })
    }

    /// The unit interval `(0, 1)` with `n_cells` cells.
    pub fn unit(n_cells: usize) -> Result<Self> {
        Self::new(0.0, 1.0, n_cells)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Mesh size.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    /// Coordinate of interface `i` (`0` is `a`, `n_cells` is `b`).
    pub fn interface(&self, i: usize) -> f64 {
        if i == self.n_cells {
            self.b
        } else {
            self.a + i as f64 * self.h
        }
    }

    pub fn midpoint(&self, cell: usize) -> f64 {
        self.a + (cell as f64 + 0.5) * self.h
    }
}

/// Strictly increasing finite set of integer control values.
#[derive(Clone, PartialEq, Eq)]
pub struct LabelSet {
    values: Arc<[i32]>,
}

impl LabelSet {
    pub fn new(values: Vec<i32>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Config("label set needs at least two values".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "label values must be strictly increasing: {values:?}"
            )));
        }
        if values.len() > u8::MAX as usize + 1 {
            return Err(Error::Config("at most 256 labels are supported".into()));
        }
        Ok(Self {
            values: values.into(),
        })
    }

    /// All integers in `lo..=hi`.
    pub fn range(lo: i32, hi: i32) -> Result<Self> {
        Self::new((lo..=hi).collect())
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min(&self) -> i32 {
        self.values[0]
    }

    pub fn max(&self) -> i32 {
        self.values[self.values.len() - 1]
    }

    /// `max W - min W`.
    pub fn span(&self) -> u32 {
        (self.max() - self.min()) as u32
    }

    pub fn index_of(&self, value: i32) -> Option<usize> {
        self.values.binary_search(&value).ok()
    }

    pub fn contains(&self, value: i32) -> bool {
        self.index_of(value).is_some()
    }
}

impl fmt::Debug for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.values.iter()).finish()
    }
}

/// A switch between two neighbouring cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Switch {
    /// Interface index in `1..n_cells`.
    pub interface: usize,
    /// Interface coordinate `a + interface*h`.
    pub position: f64,
    /// `w(t+) - w(t-)`, never zero.
    pub jump: i32,
}

/// Integer-valued piecewise-constant function on a grid.
#[derive(Clone, PartialEq)]
pub struct Control {
    grid: Grid,
    labels: LabelSet,
    cells: Vec<i32>,
}

impl Control {
    pub fn new(grid: Grid, labels: LabelSet, cells: Vec<i32>) -> Result<Self> {
        if cells.len() != grid.n_cells() {
            return Err(Error::Structure(format!(
                "control has {} cells but grid has {}",
                cells.len(),
                grid.n_cells()
            )));
        }
        if let Some((i, v)) = cells.iter().enumerate().find(|(_, v)| !labels.contains(**v)) {
            return Err(Error::Structure(format!(
                "cell {i} has value {v}, not in {labels:?}"
            )));
        }
        Ok(Self {
            grid,
            labels,
            cells,
        })
    }

    pub fn constant(grid: Grid, labels: LabelSet, value: i32) -> Result<Self> {
        let n = grid.n_cells();
        Self::new(grid, labels, vec![value; n])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn cells(&self) -> &[i32] {
        &self.cells
    }

    pub fn into_cells(self) -> Vec<i32> {
        self.cells
    }

    /// Same grid and labels, different cell values.
    pub fn with_cells(&self, cells: Vec<i32>) -> Result<Self> {
        Self::new(self.grid, self.labels.clone(), cells)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.cells.iter().map(|&v| v as f64).collect()
    }

    /// Total variation: the sum of absolute jump heights.
    pub fn tv(&self) -> u64 {
        self.cells
            .windows(2)
            .map(|w| (w[1] - w[0]).unsigned_abs() as u64)
            .sum()
    }

    /// Number of interfaces where the value changes.
    pub fn n_switches(&self) -> usize {
        self.cells.windows(2).filter(|w| w[0] != w[1]).count()
    }

    pub fn switch_points(&self) -> Vec<Switch> {
        self.cells
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] != w[1])
            .map(|(i, w)| Switch {
                interface: i + 1,
                position: self.grid.interface(i + 1),
                jump: w[1] - w[0],
            })
            .collect()
    }

    /// Checks that `other` lives on the same grid with the same labels.
    pub fn check_compatible(&self, other: &Control) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Structure(format!(
                "grids differ: {:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        if self.labels != other.labels {
            return Err(Error::Structure(format!(
                "label sets differ: {:?} vs {:?}",
                self.labels, other.labels
            )));
        }
        Ok(())
    }

    /// `||self - other||_{L1}`.
    pub fn l1_distance(&self, other: &Control) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self.grid.h() * self.l1_units(other) as f64)
    }

    /// L1 distance in units of `h`: `sum |u_i - v_i|`.
    pub fn l1_units(&self, other: &Control) -> u64 {
        self.cells
            .iter()
            .zip(&other.cells)
            .map(|(a, b)| (a - b).unsigned_abs() as u64)
            .sum()
    }

    /// Criticality measure `sum_i |grad(t_i) * jump_i|` over the switches.
    ///
    /// `grad_at_interfaces[k]` holds the gradient at interface `k + 1`.
    pub fn criticality(&self, grad_at_interfaces: &[f64]) -> Result<f64> {
        let expected = self.grid.n_cells() - 1;
        if grad_at_interfaces.len() != expected {
            return Err(Error::Structure(format!(
                "expected {expected} interface gradient values, got {}",
                grad_at_interfaces.len()
            )));
        }
        Ok(self
            .cells
            .windows(2)
            .zip(grad_at_interfaces)
            .filter(|(w, _)| w[0] != w[1])
            .fold(0.0, |acc, (w, g)| acc + (g * (w[1] - w[0]) as f64).abs()))
    }

    /// Smallest distance from a switch to the next switch on its right with
    /// the opposite jump sign, or to the right boundary when there is none.
    /// A constant control returns the domain length.
    pub fn min_opposite_switch_distance(&self) -> f64 {
        let switches = self.switch_points();
        if switches.is_empty() {
            return self.grid.length();
        }
        let n = self.grid.n_cells();
        let mut best = n;
        for (k, s) in switches.iter().enumerate() {
            let end = switches[k + 1..]
                .iter()
                .find(|t| t.jump.signum() != s.jump.signum())
                .map_or(n, |t| t.interface);
            best = best.min(end - s.interface);
        }
        best as f64 * self.grid.h()
    }
}

impl fmt::Debug for Control {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Control")
            .field("grid", &self.grid)
            .field("labels", &self.labels)
            .field("cells", &self.cells)
            .finish()
    }
}

/// Upper bound on the switch count of every iterate of a descent run
/// started with objective value `j0`: `ceil((j0 - f_lower_bound) / alpha)`.
pub fn switch_count_bound(j0: f64, f_lower_bound: f64, alpha: f64) -> Result<u64> {
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
    }
    let margin = (j0 - f_lower_bound).max(0.0);
    Ok((margin / alpha).ceil() as u64)
}

/// Constants of the criticality-based lower bound on the predicted reduction
/// together with the acceptance slack of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryDiagnostics {
    /// Shift window of the switches, see [`Control::min_opposite_switch_distance`].
    pub delta_a: f64,
    /// `1 / (n_max * (max W - min W))`.
    pub c0: f64,
    /// Sup norm of the difference quotients of the interface gradient.
    pub c1: f64,
    pub n_max: u64,
    /// `(1 - sigma) * pred - |ared - pred|`.
    pub r_n: f64,
}

/// `1 / (n_max * span)`; `n_max = 0` is treated as 1.
pub fn pred_bound_c0(n_max: u64, labels: &LabelSet) -> f64 {
    1.0 / (n_max.max(1) as f64 * labels.span() as f64)
}

/// Largest `|g_{k+1} - g_k| / h` over neighbouring interface values.
pub fn gradient_lipschitz_estimate(interface_values: &[f64], h: f64) -> f64 {
    interface_values
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() / h)
        .fold(0.0, f64::max)
}
