use std::fs;

use slip_tr::benchmarks::Benchmark;
use slip_tr::driver::RadiusPolicy;
use slip_tr::harness::{self, ExperimentConfig, ExperimentRow};
use slip_tr::{Control, Grid, LabelSet};

fn deconv_config(n: usize, alphas: Vec<f64>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Benchmark::Deconv);
    cfg.n_cells = n;
    cfg.alphas = alphas;
    cfg.jobs = Some(2);
    cfg
}

/// Rows with the timing column blanked.
fn without_runtime(rows: &[ExperimentRow]) -> Vec<ExperimentRow> {
    rows.iter()
        .cloned()
        .map(|mut r| {
            r.runtime_seconds = 0.0;
            r
        })
        .collect()
}

#[test]
fn two_policies_one_alpha_give_two_close_rows() {
    let rows = harness::run_sweep(&deconv_config(128, vec![1e-3])).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].policy, RadiusPolicy::DoubleNoReset);
    assert_eq!(rows[1].policy, RadiusPolicy::ResetOnSuccess);
    let (a, b) = (rows[0].final_objective, rows[1].final_objective);
    assert!((a - b).abs() <= 0.1 * b.abs(), "{a} vs {b}");
    for r in &rows {
        assert!(r.runtime_seconds >= 0.0);
        assert!(r.accepted_iterations <= r.iterations);
    }
}

#[test]
fn empty_policy_list_gives_empty_output() {
    let mut cfg = deconv_config(32, vec![1e-3]);
    cfg.policies.clear();
    assert!(harness::run_sweep(&cfg).unwrap().is_empty());
}

#[test]
fn csv_is_deterministic_apart_from_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = deconv_config(48, vec![1e-3, 1e-4, 5e-4]);
    let mut texts = Vec::new();
    for k in 0..2 {
        let rows = harness::run_sweep(&cfg).unwrap();
        let path = dir.path().join(format!("run{k}.csv"));
        harness::write_csv(&without_runtime(&rows), &path).unwrap();
        texts.push(fs::read_to_string(&path).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    let header = texts[0].lines().next().unwrap();
    assert_eq!(
        header,
        "alpha,policy,runtime_seconds,final_objective,iterations,accepted_iterations,final_criticality,final_tv"
    );
    // sorted by (alpha, policy) regardless of completion order
    let alphas: Vec<f64> = texts[0].lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(alphas.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(alphas.len(), 6);
}

#[test]
fn csv_round_trips_through_reader() {
    let dir = tempfile::tempdir().unwrap();
    let rows = harness::run_sweep(&deconv_config(32, vec![1e-3])).unwrap();
    let path = dir.path().join("nested/rows.csv");
    harness::write_csv(&rows, &path).unwrap();
    assert_eq!(harness::read_csv(&path).unwrap(), rows);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let err = harness::write_csv(&[], &blocker.join("rows.csv")).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
}

#[test]
fn config_file_and_bad_benchmark_name() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.conf");
    fs::write(&path, "# desk run\nbenchmark = heat\nn_cells = 64\nalphas = 1e-4, 1e-3\npolicy = nr\njobs = 1\n").unwrap();
    let mut cfg = ExperimentConfig::new(Benchmark::Deconv);
    cfg.apply_file(&path).unwrap();
    assert_eq!(cfg.benchmark, Benchmark::Heat);
    assert_eq!(cfg.n_cells, 64);
    assert_eq!(cfg.alphas, vec![1e-4, 1e-3]);
    assert_eq!(cfg.policies, vec![RadiusPolicy::DoubleNoReset]);
    assert_eq!(cfg.jobs, Some(1));

    fs::write(&path, "benchmark = cooling\n").unwrap();
    assert!(cfg.apply_file(&path).is_err());
    fs::write(&path, "n_cells 12\n").unwrap();
    assert!(cfg.apply_file(&path).is_err());
}

fn polylines_and_risers(svg: &str) -> (usize, Vec<f64>) {
    let doc = roxmltree::Document::parse(svg).unwrap();
    let polylines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
    let risers = doc
        .descendants()
        .filter(|n| n.has_tag_name("line") && n.attribute("class") == Some("riser"))
        .map(|n| n.attribute("x1").unwrap().parse().unwrap())
        .collect();
    (polylines, risers)
}

#[test]
fn plots_of_simple_controls() {
    let grid = Grid::unit(8).unwrap();
    let labels = LabelSet::range(0, 2).unwrap();
    let flat = Control::constant(grid, labels.clone(), 1).unwrap();
    let (p, r) = polylines_and_risers(&harness::control_plot_svg(&flat));
    assert_eq!((p, r.len()), (1, 0));

    let step = Control::new(grid, labels, vec![0, 0, 0, 2, 2, 2, 2, 2]).unwrap();
    let svg = harness::control_plot_svg(&step);
    let (p, r) = polylines_and_risers(&svg);
    assert_eq!((p, r.len()), (2, 1));
    // the riser sits 3/8 of the way along the x axis
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let axis = doc
        .descendants()
        .find(|n| n.has_tag_name("line") && n.parent().unwrap().attribute("class") == Some("axes"))
        .unwrap();
    let x0: f64 = axis.attribute("x1").unwrap().parse().unwrap();
    let x1: f64 = axis.attribute("x2").unwrap().parse().unwrap();
    assert!((r[0] - (x0 + 0.375 * (x1 - x0))).abs() < 0.01);
    assert!(svg.contains(">t<") && svg.contains(">w(t)<"));
}

#[test]
fn deconvolution_solution_plot_is_valid_svg() {
    let dir = tempfile::tempdir().unwrap();
    let runs = harness::run_sweep_detailed(&{
        let mut c = deconv_config(512, vec![1e-3]);
        c.policies = vec![RadiusPolicy::DoubleNoReset];
        c
    })
    .unwrap();
    let path = dir.path().join("plot.svg");
    harness::emit_control_plot(&runs[0].result.final_control, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let (p, _) = polylines_and_risers(&text);
    assert!(p >= 1);
}

#[test]
fn summary_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let row = |alpha, policy, t, j| ExperimentRow {
        alpha,
        policy,
        runtime_seconds: t,
        final_objective: j,
        iterations: 10,
        accepted_iterations: 5,
        final_criticality: 0.0,
        final_tv: 3,
    };
    let s = harness::summarize(&[
        row(1e-6, RadiusPolicy::ResetOnSuccess, 905.4, 2.0),
        row(1e-6, RadiusPolicy::DoubleNoReset, 295.5, 2.0),
        row(1e-5, RadiusPolicy::ResetOnSuccess, 3.0, 1.0),
    ]);
    assert_eq!(s.rows[0].gap, Some(0.0));
    assert!((s.rows[0].improvement.unwrap() - 0.6736).abs() < 1e-4);
    assert!(!s.rows[1].is_complete());
    let csv = dir.path().join("summary.csv");
    s.write_csv(&csv).unwrap();
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(2).unwrap().contains("missing"));
}
