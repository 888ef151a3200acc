use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use slip_tr::benchmarks::Benchmark;
use slip_tr::driver::RadiusPolicy;
use slip_tr::harness::{self, ExperimentConfig, FULL_N_CELLS};
use slip_tr::Result;

#[derive(Parser)]
#[command(name = "slip-tr", version, about = "Trust-region solver for TV-regularized integer control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run both radius policies over a list of alphas and write CSV, plots and a summary.
    Sweep(SweepArgs),
    /// Solve one instance and write its iteration log and control plot.
    Solve(SolveArgs),
    /// Compare policies from an existing sweep CSV.
    Summarize {
        /// Sweep CSV written by `sweep`.
        input: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// heat or deconv.
    #[arg(long)]
    benchmark: Option<Benchmark>,
    #[arg(long)]
    n_cells: Option<usize>,
    /// Use the full-scale grid (4096 cells).
    #[arg(long)]
    full: bool,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long)]
    delta_max: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Flat key = value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated list.
    #[arg(long)]
    alphas: Option<String>,
    /// nr, rt, both or none (comma-separated).
    #[arg(long)]
    policy: Option<String>,
    /// Worker threads; falls back to SLIP_TR_JOBS.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1e-3)]
    alpha: f64,
    #[arg(long, default_value = "nr")]
    policy: RadiusPolicy,
}

fn build_config(common: &Common, file: Option<&PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::new(Benchmark::Deconv);
    if let Some(path) = file {
        cfg.apply_file(path)?;
    }
    if let Some(b) = common.benchmark {
        cfg.benchmark = b;
    }
    if common.full {
        cfg.n_cells = FULL_N_CELLS;
    }
    if let Some(n) = common.n_cells {
        cfg.n_cells = n;
    }
    if common.sigma.is_some() {
        cfg.sigma = common.sigma;
    }
    if common.delta0.is_some() {
        cfg.delta0 = common.delta0;
    }
    if common.delta_max.is_some() {
        cfg.delta_max = common.delta_max;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = build_config(&args.common, args.config.as_ref())?;
    if let Some(a) = &args.alphas {
        cfg.alphas = harness::parse_list(a)?;
    }
    if let Some(p) = &args.policy {
        cfg.policies = harness::parse_policies(p)?;
    }
    if args.jobs.is_some() {
        cfg.jobs = args.jobs;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }

    let runs = harness::run_sweep_detailed(&cfg)?;
    let dir = &cfg.output_dir;
    let tag = format!("{}_n{}", cfg.benchmark, cfg.n_cells);
    let rows: Vec<_> = runs.iter().map(|r| r.row.clone()).collect();
    harness::write_csv(&rows, &dir.join(format!("sweep_{tag}.csv")))?;
    for run in &runs {
        let name = format!("{tag}_alpha{:e}_{}", run.row.alpha, run.row.policy);
        harness::emit_control_plot(&run.result.final_control, &dir.join(format!("control_{name}.svg")))?;
        harness::write_history(&run.result.history, &dir.join(format!("history_{name}.csv")))?;
    }
    let summary = harness::summarize(&rows);
    summary.write_csv(&dir.join(format!("summary_{tag}.csv")))?;
    summary.write_markdown(&dir.join(format!("summary_{tag}.md")))?;
    print!("{}", summary.to_markdown());
    Ok(())
}

fn solve(args: SolveArgs) -> Result<()> {
    let mut cfg = build_config(&args.common, None)?;
    cfg.alphas = vec![args.alpha];
    cfg.policies = vec![args.policy];
    cfg.validate()?;
    let run = harness::run_job(&cfg, args.alpha, args.policy)?;
    let name = format!(
        "{}_n{}_alpha{:e}_{}",
        cfg.benchmark, cfg.n_cells, args.alpha, args.policy
    );
    harness::write_history(&run.result.history, &cfg.output_dir.join(format!("history_{name}.csv")))?;
    harness::emit_control_plot(
        &run.result.final_control,
        &cfg.output_dir.join(format!("control_{name}.svg")),
    )?;
    let r = &run.row;
    println!(
        "J = {:.8e}  TV = {}  iterations = {} (accepted {})  criticality = {:.3e}  time = {:.3}s  termination = {:?}",
        r.final_objective,
        r.final_tv,
        r.iterations,
        r.accepted_iterations,
        r.final_criticality,
        r.runtime_seconds,
        run.result.termination
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Sweep(args) => sweep(args),
        Command::Solve(args) => solve(args),
        Command::Summarize { input, out } => harness::read_csv(&input).and_then(|rows| {
            let summary = harness::summarize(&rows);
            summary.write_csv(&out.join("summary.csv"))?;
            summary.write_markdown(&out.join("summary.md"))?;
            print!("{}", summary.to_markdown());
            Ok(())
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
