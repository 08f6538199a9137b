use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use kacanov::experiment::{run_experiment, ExperimentConfig, ExperimentReport};
use kacanov::kacanov::TRAILING_WINDOW;
use kacanov::{KacanovError, TriangleMesh};

/// Runs damped Kačanov experiments on the L-shaped domain and writes CSV traces and SVG plots.
#[derive(Debug, Parser)]
#[command(name = "kacanov", version)]
struct Cli {
    /// Configuration file with `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Diffusion model: mu1, mu2, mu3 or constant.
    #[arg(long)]
    model: Option<String>,
    /// Uniform refinement level of the L-shaped mesh (6 * 4^level triangles).
    #[arg(long)]
    level: Option<u32>,
    /// Strategy to run (repeatable): undamped, taylor, prediction_correction.
    #[arg(long = "strategy")]
    strategies: Vec<String>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Stop once the H1-seminorm error to the reference drops below this.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Linear solver: cg or direct.
    #[arg(long)]
    solver: Option<String>,
    /// Maximum number of Zarantonello steps for the reference solution.
    #[arg(long)]
    ref_steps: Option<usize>,
    /// Also write the mesh in plain text to this path.
    #[arg(long)]
    export_mesh: Option<PathBuf>,
}

fn configure(cli: &Cli) -> Result<ExperimentConfig, KacanovError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = &cli.model {
        cfg.set("model", m)?;
    }
    if let Some(l) = cli.level {
        cfg.level = l;
    }
    if !cli.strategies.is_empty() {
        cfg.set("strategies", &cli.strategies.join(","))?;
    }
    if let Some(n) = cli.max_iters {
        cfg.max_iters = n;
    }
    if let Some(t) = cli.tol {
        cfg.tol_error = t;
    }
    if let Some(s) = cli.sigma {
        cfg.sigma = s;
    }
    if let Some(t) = cli.theta {
        cfg.theta = t;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = &cli.solver {
        cfg.set("solver", s)?;
    }
    if let Some(n) = cli.ref_steps {
        cfg.ref_steps = n;
    }
    Ok(cfg)
}

fn summarize(report: &ExperimentReport) {
    let r = &report.reference;
    println!(
        "reference: {} Zarantonello steps (damping {:.4}, dual residual {:.3e}{})",
        r.steps,
        r.damping,
        r.dual_residual,
        if r.from_cache { ", cached" } else { "" }
    );
    println!(
        "{:<22} {:>6} {:>12} {:>14} {:>10} {:>8}",
        "strategy", "steps", "final error", "trailing ratio", "mean delta", "status"
    );
    for run in &report.runs {
        let t = &run.trace;
        let deltas: Vec<f64> = t.records.iter().skip(1).map(|s| s.delta).collect();
        let mean_delta = if deltas.is_empty() { f64::NAN } else { deltas.iter().sum::<f64>() / deltas.len() as f64 };
        let status = if t.non_convergent {
            "diverged"
        } else if t.reached_tolerance {
            "converged"
        } else {
            "running"
        };
        println!(
            "{:<22} {:>6} {:>12.3e} {:>14.4} {:>10.4} {:>8}",
            run.kind.id(),
            t.steps(),
            t.final_error(),
            t.trailing_ratio(TRAILING_WINDOW).unwrap_or(f64::NAN),
            mean_delta,
            status
        );
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
}

fn run(cli: &Cli) -> Result<(), KacanovError> {
    let cfg = configure(cli)?;
    if let Some(path) = &cli.export_mesh {
        let mesh = TriangleMesh::build_lshape(cfg.level)?;
        mesh.write_text(std::io::BufWriter::new(std::fs::File::create(path)?))?;
    }
    let report = run_experiment(&cfg)?;
    summarize(&report);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
