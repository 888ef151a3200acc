#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use slip_tr::benchmarks::Problem;
use slip_tr::driver::{self, SolveResult, Termination, TrustRegionConfig};
use slip_tr::{Control, Grid, LabelSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cells(rng: &mut impl Rng, labels: &LabelSet, n: usize) -> Vec<i32> {
    let v = labels.values();
    (0..n).map(|_| v[rng.gen_range(0..v.len())]).collect()
}

/// Piecewise-constant control with up to `max_switches` switches at random
/// interfaces and random neighbouring values.
pub fn random_plateau_control(
    rng: &mut impl Rng,
    grid: Grid,
    labels: &LabelSet,
    max_switches: usize,
) -> Control {
    let n = grid.n_cells();
    let k = rng.gen_range(0..=max_switches.min(n - 1));
    let mut cuts: Vec<usize> = Vec::new();
    while cuts.len() < k {
        let c = rng.gen_range(1..n);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    let v = labels.values();
    let mut cells = Vec::with_capacity(n);
    let mut value = v[rng.gen_range(0..v.len())];
    let mut next_cut = cuts.iter().peekable();
    for i in 0..n {
        if next_cut.peek() == Some(&&i) {
            next_cut.next();
            let mut nv = value;
            while nv == value {
                nv = v[rng.gen_range(0..v.len())];
            }
            value = nv;
        }
        cells.push(value);
    }
    Control::new(grid, labels.clone(), cells).unwrap()
}

/// Maximal runs `(start, end, value)` of equal cells.
pub fn plateaus(cells: &[i32]) -> Vec<(usize, usize, i32)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=cells.len() {
        if i == cells.len() || cells[i] != cells[start] {
            out.push((start, i, cells[start]));
            start = i;
        }
    }
    out
}

/// Every control one switch move away from `cells`: shifting a switch by one
/// cell, inserting a switch inside a plateau (one side of the plateau takes
/// another label), or removing a switch (one adjacent plateau takes the
/// value of the other).
pub fn one_move_neighbours(cells: &[i32], labels: &LabelSet) -> Vec<Vec<i32>> {
    let n = cells.len();
    let mut out = Vec::new();
    for k in 1..n {
        if cells[k - 1] != cells[k] {
            let mut left = cells.to_vec();
            left[k - 1] = cells[k];
            out.push(left);
            let mut right = cells.to_vec();
            right[k] = cells[k - 1];
            out.push(right);
        }
    }
    let runs = plateaus(cells);
    for &(s, e, v) in &runs {
        for k in s + 1..e {
            for &u in labels.values().iter().filter(|&&u| u != v) {
                let mut a = cells.to_vec();
                a[k..e].fill(u);
                out.push(a);
                let mut b = cells.to_vec();
                b[s..k].fill(u);
                out.push(b);
            }
        }
    }
    for pair in runs.windows(2) {
        let ((ls, le, lv), (rs, re, rv)) = (pair[0], pair[1]);
        let mut a = cells.to_vec();
        a[ls..le].fill(rv);
        out.push(a);
        let mut b = cells.to_vec();
        b[rs..re].fill(lv);
        out.push(b);
    }
    out
}

/// Best strict improvement of `J` over [`one_move_neighbours`], if any.
pub fn improving_move(problem: &dyn Problem, w: &Control, alpha: f64) -> Option<(Vec<i32>, f64)> {
    let j = driver::objective(problem, w, alpha);
    let mut best: Option<(Vec<i32>, f64)> = None;
    for cand in one_move_neighbours(w.cells(), w.labels()) {
        let c = w.with_cells(cand).unwrap();
        let jc = driver::objective(problem, &c, alpha);
        if jc < j - 1e-12 * j.abs() && best.as_ref().map_or(true, |b| jc < b.1) {
            best = Some((c.into_cells(), jc));
        }
    }
    best
}

/// Violations of the logged invariants of a finished run.
pub fn log_violations(result: &SolveResult, config: &TrustRegionConfig, f_lower: f64) -> Vec<String> {
    let mut bad = Vec::new();
    let hist = &result.history;
    if hist.is_empty() {
        bad.push("empty history".into());
        return bad;
    }
    let j0 = hist[0].objective;
    for (k, r) in hist.iter().enumerate() {
        let last = k + 1 == hist.len();
        if r.pred < 0.0 {
            bad.push(format!("it {k}: pred {} < 0", r.pred));
        }
        if r.pred > 0.0 && r.accepted != (r.ared >= config.sigma * r.pred) {
            bad.push(format!("it {k}: accepted={} but ared={} pred={}", r.accepted, r.ared, r.pred));
        }
        if r.pred == 0.0 && r.accepted {
            bad.push(format!("it {k}: accepted with pred = 0"));
        }
        if r.has_certificate() && !r.accepted {
            bad.push(format!("it {k}: R_n = {} >= 0 but rejected", r.r_n));
        }
        if config.alpha * r.tv as f64 > j0 - f_lower {
            bad.push(format!("it {k}: alpha*TV = {} exceeds J0 - Flow", config.alpha * r.tv as f64));
        }
        if !(last && result.termination == Termination::PredZero)
            && r.delta_next != config.next_radius(r.delta_n, r.accepted)
        {
            bad.push(format!("it {k}: radius {} -> {}", r.delta_n, r.delta_next));
        }
        if let Some(next) = hist.get(k + 1) {
            if next.delta_n != r.delta_next {
                bad.push(format!("it {k}: next radius {} != logged {}", next.delta_n, r.delta_next));
            }
            if next.objective > r.objective {
                bad.push(format!("it {k}: objective rose {} -> {}", r.objective, next.objective));
            }
            if !r.accepted && next.objective != r.objective {
                bad.push(format!("it {k}: rejected step changed the objective"));
            }
            if r.accepted && r.pred > 0.0 && !(next.objective < r.objective) {
                bad.push(format!("it {k}: accepted step without strict decrease"));
            }
        }
    }
    let last = hist.last().unwrap();
    match result.termination {
        Termination::PredZero => {
            if last.pred != 0.0 {
                bad.push("PredZero with nonzero pred".into());
            }
        }
        Termination::RadiusBelowMesh => {
            if !(last.delta_next < config.delta_min) {
                bad.push("RadiusBelowMesh above delta_min".into());
            }
        }
        Termination::IterationCap => {}
    }
    bad
}
