//! Exact solver for the discretized trust-region subproblem
//!
//! ```text
//! min  h * sum_i g_i (v_i - wbar_i) + alpha * (TV(v) - TV(wbar))
//! s.t. h * sum_i |v_i - wbar_i| <= delta,   v_i in W
//! ```
//!
//! Every cell contributes an integer number of `h` units to the L1 budget, so
//! the constraint becomes `sum_i |v_i - wbar_i| <= B` with
//! `B = floor(delta / h + eps)`. The solver runs a layered dynamic program
//! over (cell, label of the previous cell, remaining budget), sweeping cells
//! from right to left. Minimizing `D(v) + alpha * |v - v_prev|` over `v` is an
//! L1 distance transform on the sorted labels, done with one forward and one
//! backward pass, which keeps a layer at `O(|W| * B)`.
//!
//! Ties are broken towards the smaller used budget and then towards the
//! lexicographically smallest cell vector, so the result is deterministic.
//! Argmin tables take one byte per state; when they would exceed
//! [`CHOICE_BYTES_LIMIT`] the solver keeps value checkpoints and recomputes
//! block by block during reconstruction.

use crate::control::Control;
use crate::error::{Error, Result};

/// Guard added to `delta / h` before flooring to an integer budget.
pub const ROUND_EPS: f64 = 1e-9;

/// Relative size of negative model values that are clamped to zero in `pred`.
pub const PRED_CLAMP: f64 = 1e-12;

/// Largest candidate count [`solve_tr_bruteforce`] will enumerate.
pub const BRUTEFORCE_LIMIT: u128 = 10_000_000;

/// Memory budget for the argmin tables of one solve.
pub const CHOICE_BYTES_LIMIT: usize = 1 << 26;

/// Data of one trust-region subproblem.
#[derive(Debug, Clone, Copy)]
pub struct SubproblemInput<'a> {
    pub w_bar: &'a Control,
    /// Cell means of the gradient, one per cell.
    pub g_cells: &'a [f64],
    pub delta: f64,
    pub alpha: f64,
}

impl<'a> SubproblemInput<'a> {
    pub fn new(w_bar: &'a Control, g_cells: &'a [f64], delta: f64, alpha: f64) -> Result<Self> {
        if g_cells.len() != w_bar.grid().n_cells() {
            return Err(Error::Structure(format!(
                "gradient has {} entries but grid has {} cells",
                g_cells.len(),
                w_bar.grid().n_cells()
            )));
        }
        if !(delta >= 0.0) {
            return Err(Error::Config(format!("trust-region radius must be >= 0, got {delta}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        if let Some(g) = g_cells.iter().find(|g| !g.is_finite()) {
            return Err(Error::Config(format!("non-finite gradient entry {g}")));
        }
        Ok(Self {
            w_bar,
            g_cells,
            delta,
            alpha,
        })
    }

    /// Largest budget that can ever be used: `n_cells * (max W - min W)`.
    pub fn budget_cap(&self) -> u64 {
        self.w_bar.grid().n_cells() as u64 * self.w_bar.labels().span() as u64
    }

    /// Integer L1 budget in units of `h`, truncated at [`Self::budget_cap`].
    pub fn budget(&self) -> u64 {
        let cap = self.budget_cap();
        let units = self.delta / self.w_bar.grid().h() + ROUND_EPS;
        if units >= cap as f64 {
            cap
        } else {
            units.floor() as u64
        }
    }

    /// Model value of a candidate, summed cell by cell from the left.
    pub fn model_value(&self, cells: &[i32]) -> f64 {
        let h = self.w_bar.grid().h();
        let lin = cells
            .iter()
            .zip(self.w_bar.cells())
            .zip(self.g_cells)
            .fold(0.0, |acc, ((&v, &wb), &g)| acc + h * g * (v - wb) as f64);
        let tv_new = tv_of(cells) as i64;
        let tv_old = self.w_bar.tv() as i64;
        lin + self.alpha * (tv_new - tv_old) as f64
    }

    fn pred_scale(&self) -> f64 {
        let h = self.w_bar.grid().h();
        let span = self.w_bar.labels().span() as f64;
        let g: f64 = self.g_cells.iter().map(|g| g.abs()).sum();
        1.0 + h * g * span + self.alpha * self.w_bar.tv() as f64
    }
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub w_star: Control,
    /// Optimal model value, `<= 0` up to roundoff.
    pub model_value: f64,
    /// Predicted reduction, `-model_value` clamped at zero.
    pub pred: f64,
    /// `sum |w_star - w_bar|` in units of `h`.
    pub budget_used: u64,
}

impl SubproblemSolution {
    fn from_cells(input: &SubproblemInput<'_>, cells: Vec<i32>) -> Self {
        let model_value = input.model_value(&cells);
        let budget_used = l1_units(&cells, input.w_bar.cells());
        let w_star = input
            .w_bar
            .with_cells(cells)
            .expect("solver only produces labels from the label set");
        Self {
            w_star,
            model_value,
            pred: clamp_pred(-model_value, input.pred_scale()),
            budget_used,
        }
    }
}

fn clamp_pred(pred: f64, scale: f64) -> f64 {
    if pred >= 0.0 {
        pred
    } else {
        debug_assert!(
            -pred <= PRED_CLAMP * scale,
            "model value {} above zero beyond roundoff",
            -pred
        );
        0.0
    }
}

fn tv_of(cells: &[i32]) -> u64 {
    cells
        .windows(2)
        .map(|w| (w[1] - w[0]).unsigned_abs() as u64)
        .sum()
}

fn l1_units(a: &[i32], b: &[i32]) -> u64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).unsigned_abs() as u64)
        .sum()
}

/// Predicted reduction `-min (TR)`.
pub fn pred(input: &SubproblemInput<'_>) -> f64 {
    solve_tr_dp(input).pred
}

/// Global minimizer of the subproblem by dynamic programming.
pub fn solve_tr_dp(input: &SubproblemInput<'_>) -> SubproblemSolution {
    let budget = input.budget();
    if budget == 0 {
        return SubproblemSolution::from_cells(input, input.w_bar.cells().to_vec());
    }
    let tables = CellTables::new(input);

    // Without the budget the problem is a plain Viterbi recursion; if its
    // minimizer already fits into the radius it is the answer.
    let (free, free_used) = tables.solve_unconstrained();
    if free_used <= budget {
        return SubproblemSolution::from_cells(input, tables.to_values(&free));
    }

    let cells = tables.solve_budgeted(budget as usize, CHOICE_BYTES_LIMIT);
    SubproblemSolution::from_cells(input, tables.to_values(&cells))
}

/// Reference solver that enumerates every label vector.
pub fn solve_tr_bruteforce(input: &SubproblemInput<'_>) -> Result<SubproblemSolution> {
    let labels = input.w_bar.labels().values();
    let n = input.w_bar.grid().n_cells();
    let count = (labels.len() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if count > BRUTEFORCE_LIMIT {
        return Err(Error::TooLarge {
            count,
            limit: BRUTEFORCE_LIMIT,
        });
    }
    let budget = input.budget();
    let mut idx = vec![0usize; n];
    let mut cells: Vec<i32> = vec![labels[0]; n];
    let mut best: Option<(f64, u64, Vec<i32>)> = None;
    // Odometer over label indices, last cell fastest: lexicographic order.
    loop {
        let used = l1_units(&cells, input.w_bar.cells());
        if used <= budget {
            let value = input.model_value(&cells);
            let better = match &best {
                None => true,
                Some((bv, bu, _)) => value < *bv || (value == *bv && used < *bu),
            };
            if better {
                best = Some((value, used, cells.clone()));
            }
        }
        let mut k = n;
        loop {
            if k == 0 {
                let (_, _, cells) = best.expect("w_bar itself is always feasible");
                return Ok(SubproblemSolution::from_cells(input, cells));
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < labels.len() {
                cells[k] = labels[idx[k]];
                break;
            }
            idx[k] = 0;
            cells[k] = labels[0];
        }
    }
}

/// Per-cell linear costs and budget usage, indexed by label index.
struct CellTables {
    n: usize,
    m: usize,
    labels: Vec<i32>,
    /// `lin[i*m + v] = h * g_i * (label_v - wbar_i)`.
    lin: Vec<f64>,
    /// `dist[i*m + v] = |label_v - wbar_i|`.
    dist: Vec<usize>,
    /// `alpha * (label_{v+1} - label_v)`.
    gap_cost: Vec<f64>,
    alpha: f64,
    /// `tail[i]`: largest budget cells `i..n` can consume.
    tail: Vec<usize>,
}

impl CellTables {
    fn new(input: &SubproblemInput<'_>) -> Self {
        let labels = input.w_bar.labels().values().to_vec();
        let n = input.w_bar.grid().n_cells();
        let m = labels.len();
        let h = input.w_bar.grid().h();
        let mut lin = Vec::with_capacity(n * m);
        let mut dist = Vec::with_capacity(n * m);
        for (&wb, &g) in input.w_bar.cells().iter().zip(input.g_cells) {
            for &v in &labels {
                lin.push(h * g * (v - wb) as f64);
                dist.push((v - wb).unsigned_abs() as usize);
            }
        }
        let gap_cost = labels
            .windows(2)
            .map(|w| input.alpha * (w[1] - w[0]) as f64)
            .collect();
        let mut tail = vec![0usize; n + 1];
        for i in (0..n).rev() {
            let most = dist[i * m..(i + 1) * m].iter().copied().max().unwrap_or(0);
            tail[i] = tail[i + 1] + most;
        }
        Self {
            n,
            m,
            labels,
            lin,
            dist,
            gap_cost,
            alpha: input.alpha,
            tail,
        }
    }

    fn to_values(&self, idx: &[u8]) -> Vec<i32> {
        idx.iter().map(|&k| self.labels[k as usize]).collect()
    }

    /// Unconstrained minimizer under the (model, budget, lexicographic) order.
    /// Returns label indices and the budget they use.
    fn solve_unconstrained(&self) -> (Vec<u8>, u64) {
        let (n, m) = (self.n, self.m);
        // cost-to-go from cell i given the label of cell i-1
        let mut next = vec![(0.0f64, 0u64); m];
        let mut cur = vec![(0.0f64, 0u64); m];
        let mut choice = vec![0u8; n * m];
        for i in (1..n).rev() {
            for vp in 0..m {
                let mut best = (f64::INFINITY, u64::MAX);
                let mut arg = 0;
                for v in 0..m {
                    let jump = (self.labels[v] - self.labels[vp]).unsigned_abs() as f64;
                    let c = self.lin[i * m + v] + next[v].0 + self.alpha * jump;
                    let u = self.dist[i * m + v] as u64 + next[v].1;
                    if c < best.0 || (c == best.0 && u < best.1) {
                        best = (c, u);
                        arg = v;
                    }
                }
                cur[vp] = best;
                choice[i * m + vp] = arg as u8;
            }
            std::mem::swap(&mut cur, &mut next);
        }
        let mut best = (f64::INFINITY, u64::MAX);
        let mut arg = 0;
        for v in 0..m {
            let c = self.lin[v] + next[v].0;
            let u = self.dist[v] as u64 + next[v].1;
            if c < best.0 || (c == best.0 && u < best.1) {
                best = (c, u);
                arg = v;
            }
        }
        let mut out = vec![0u8; n];
        out[0] = arg as u8;
        for i in 1..n {
            out[i] = choice[i * m + out[i - 1] as usize];
        }
        (out, best.1)
    }

    /// Width of the value layer of cell `i` for budget `b`: remaining budgets
    /// beyond `tail[i]` behave like `tail[i]`.
    fn width(&self, i: usize, b: usize) -> usize {
        b.min(self.tail[i]) + 1
    }

    /// Computes the value layer of cell `i >= 1` (indexed by previous label
    /// and remaining budget) from the layer of cell `i + 1`.
    fn layer(&self, i: usize, b: usize, next: &[f64], out: &mut [f64], choice: &mut [u8], scratch: &mut Scratch) {
        let m = self.m;
        let w = self.width(i, b);
        let wn = self.width(i + 1, b);
        self.fill_candidates(i, w, next, wn, &mut scratch.cand);
        let cand = &scratch.cand;

        // Forward pass: best label <= v_prev.
        out[..w].copy_from_slice(&cand[..w]);
        choice[..w].fill(0);
        for v in 1..m {
            let gap = self.gap_cost[v - 1];
            let (lo, hi) = out[..(v + 1) * w].split_at_mut(v * w);
            let (clo, chi) = choice[..(v + 1) * w].split_at_mut(v * w);
            let prev = &lo[(v - 1) * w..];
            let prev_c = &clo[(v - 1) * w..];
            let own = &cand[v * w..(v + 1) * w];
            for r in 0..w {
                let c = prev[r] + gap;
                if c <= own[r] {
                    hi[r] = c;
                    chi[r] = prev_c[r];
                } else {
                    hi[r] = own[r];
                    chi[r] = v as u8;
                }
            }
        }

        // Backward pass: best label >= v_prev; only wins on strict improvement.
        let back = &mut scratch.back;
        let back_c = &mut scratch.back_choice;
        back[(m - 1) * w..m * w].copy_from_slice(&cand[(m - 1) * w..m * w]);
        back_c[(m - 1) * w..m * w].fill((m - 1) as u8);
        for v in (0..m - 1).rev() {
            let gap = self.gap_cost[v];
            let (lo, hi) = back[..m * w].split_at_mut((v + 1) * w);
            let (clo, chi) = back_c[..m * w].split_at_mut((v + 1) * w);
            let above = &hi[..w];
            let above_c = &chi[..w];
            let own = &cand[v * w..(v + 1) * w];
            let dst = &mut lo[v * w..];
            let dst_c = &mut clo[v * w..];
            for r in 0..w {
                let c = above[r] + gap;
                if c < own[r] {
                    dst[r] = c;
                    dst_c[r] = above_c[r];
                } else {
                    dst[r] = own[r];
                    dst_c[r] = v as u8;
                }
            }
        }

        for k in 0..m * w {
            if back[k] < out[k] {
                out[k] = back[k];
                choice[k] = back_c[k];
            }
        }
    }

    /// `cand[v*w + r] = lin(i, v) + next(v, r - dist(i, v))`, `inf` when the
    /// remaining budget `r` cannot pay for label `v`.
    fn fill_candidates(&self, i: usize, w: usize, next: &[f64], wn: usize, cand: &mut [f64]) {
        let m = self.m;
        for v in 0..m {
            let lin = self.lin[i * m + v];
            let d = self.dist[i * m + v];
            let row = &mut cand[v * w..(v + 1) * w];
            let src = &next[v * wn..(v + 1) * wn];
            let lo = d.min(w);
            row[..lo].fill(f64::INFINITY);
            let mid = (d + wn).min(w);
            for r in lo..mid {
                row[r] = lin + src[r - d];
            }
            if mid < w {
                let sat = lin + src[wn - 1];
                row[mid..].fill(sat);
            }
        }
    }

    /// Budget-constrained minimizer for `b >= 1`, as label indices. Argmin
    /// tables are kept for at most `choice_limit` bytes at a time.
    fn solve_budgeted(&self, b: usize, choice_limit: usize) -> Vec<u8> {
        let (n, m) = (self.n, self.m);
        let layer_len = m * self.width(0, b);
        let mut scratch = Scratch::new(layer_len);

        // Cells 1..n carry a previous label; split them into blocks whose
        // argmin tables fit the memory limit.
        let inner = n - 1;
        let block = if inner * layer_len <= choice_limit {
            inner.max(1)
        } else {
            let balanced = ((8 * inner) as f64).sqrt().ceil() as usize;
            (choice_limit / layer_len).max(balanced).clamp(1, inner)
        };
        let n_blocks = inner.div_ceil(block).max(1);
        let block_start = |k: usize| 1 + k * block;
        let block_end = |k: usize| (1 + (k + 1) * block).min(n);

        // A zero layer of width 1 is the terminal cost behind the last cell.
        let mut next = vec![0.0; layer_len];
        let mut cur = vec![0.0; layer_len];
        // checkpoints[k] holds the value layer of cell block_end(k)
        let mut checkpoints: Vec<Option<Vec<f64>>> = vec![None; n_blocks];
        let mut first_choices = vec![0u8; block.min(inner) * layer_len];
        let mut discard = vec![0u8; layer_len];

        for k in (0..n_blocks).rev() {
            if k + 1 < n_blocks {
                let w = self.width(block_end(k), b);
                checkpoints[k] = Some(next[..m * w].to_vec());
            }
            for i in (block_start(k)..block_end(k)).rev() {
                let w = self.width(i, b);
                let dst = if k == 0 {
                    let off = (i - 1) * layer_len;
                    &mut first_choices[off..off + m * w]
                } else {
                    &mut discard[..m * w]
                };
                self.layer(i, b, &next, &mut cur, dst, &mut scratch);
                std::mem::swap(&mut next, &mut cur);
            }
        }

        // Cell 0 has no left neighbour. `top[r]` is the optimal value with
        // remaining budget r; pick the smallest r attaining the optimum.
        let w0 = self.width(0, b);
        let w1 = self.width(1.min(n), b);
        self.fill_candidates(0, w0, &next, w1, &mut scratch.cand);
        let mut top = vec![f64::INFINITY; w0];
        let mut top_arg = vec![0u8; w0];
        for v in 0..m {
            for r in 0..w0 {
                let c = scratch.cand[v * w0 + r];
                if c < top[r] {
                    top[r] = c;
                    top_arg[r] = v as u8;
                }
            }
        }
        let mut r = w0 - 1;
        while r > 0 && top[r - 1] == top[w0 - 1] {
            r -= 1;
        }

        let mut out = vec![0u8; n];
        out[0] = top_arg[r];
        r -= self.dist[out[0] as usize];

        let mut block_choices = Vec::new();
        for k in 0..n_blocks {
            let (start, end) = (block_start(k), block_end(k));
            if start >= end {
                continue;
            }
            let table: &[u8] = if k == 0 {
                &first_choices
            } else {
                block_choices.resize((end - start) * layer_len, 0);
                next.fill(0.0);
                if let Some(saved) = checkpoints[k].take() {
                    next[..saved.len()].copy_from_slice(&saved);
                }
                for i in (start..end).rev() {
                    let w = self.width(i, b);
                    let off = (i - start) * layer_len;
                    let dst = &mut block_choices[off..off + m * w];
                    self.layer(i, b, &next, &mut cur, dst, &mut scratch);
                    std::mem::swap(&mut next, &mut cur);
                }
                &block_choices
            };
            for i in start..end {
                let w = self.width(i, b);
                let vp = out[i - 1] as usize;
                let v = table[(i - start) * layer_len + vp * w + r.min(w - 1)];
                out[i] = v;
                r -= self.dist[i * m + v as usize];
            }
        }
        out
    }
}

struct Scratch {
    cand: Vec<f64>,
    back: Vec<f64>,
    back_choice: Vec<u8>,
}

impl Scratch {
    fn new(len: usize) -> Self {
        Self {
            cand: vec![0.0; len],
            back: vec![0.0; len],
            back_choice: vec![0; len],
        }
    }
}
