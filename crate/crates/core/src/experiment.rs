//! Experiment harness: builds the problem for a model and refinement level,
//! computes the reference solution, runs the requested strategies and writes
//! CSV traces and SVG plots.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::diffusion::DiffusionModel;
use crate::error::{KacanovError, Result};
use crate::fem::{FeFunction, FeSpace, ManufacturedSolution};
use crate::kacanov::{
    default_zarantonello_damping, zarantonello_reference, DampingStrategy, IterationTrace, Problem, StopCriteria,
};
use crate::linsolve::SolveConfig;
use crate::mesh::TriangleMesh;
use crate::plot::{Chart, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Undamped,
    Taylor,
    PredictionCorrection,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] =
        [StrategyKind::Undamped, StrategyKind::Taylor, StrategyKind::PredictionCorrection];

    pub fn id(self) -> &'static str {
        match self {
            StrategyKind::Undamped => "undamped",
            StrategyKind::Taylor => "taylor",
            StrategyKind::PredictionCorrection => "prediction_correction",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            StrategyKind::Undamped => "Undamped",
            StrategyKind::Taylor => "Taylor",
            StrategyKind::PredictionCorrection => "Prediction-Correction",
        }
    }
}

impl FromStr for StrategyKind {
    type Err = KacanovError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "undamped" => Ok(StrategyKind::Undamped),
            "taylor" => Ok(StrategyKind::Taylor),
            "prediction_correction" | "pc" => Ok(StrategyKind::PredictionCorrection),
            other => Err(KacanovError::Config(format!(
                "unknown strategy `{other}` (expected undamped, taylor or prediction_correction)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model_id: String,
    pub level: u32,
    pub strategies: Vec<StrategyKind>,
    pub max_iters: usize,
    pub tol_error: f64,
    pub sigma: f64,
    pub theta: f64,
    pub solver: SolveConfig,
    pub output_dir: PathBuf,
    /// Only used by randomised checks; the experiments themselves are deterministic.
    pub seed: u64,
    pub ref_steps: usize,
    /// Zarantonello damping; `None` selects `1 / M_mu`.
    pub ref_damping: Option<f64>,
    /// Reuse reference solutions stored under `<output_dir>/.cache`.
    pub cache_reference: bool,
    pub write_plots: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model_id: "mu1".into(),
            level: 5,
            strategies: StrategyKind::ALL.to_vec(),
            max_iters: 50,
            tol_error: 1e-10,
            sigma: 0.9,
            theta: 0.1,
            solver: SolveConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            ref_steps: 1000,
            ref_damping: None,
            cache_reference: true,
            write_plots: true,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| KacanovError::Config(format!("invalid value `{value}` for `{key}`")))
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "model" => self.model_id = value.to_string(),
            "level" => self.level = parse_value(key, value)?,
            "strategy" | "strategies" => {
                self.strategies = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(StrategyKind::from_str)
                    .collect::<Result<_>>()?;
            }
            "max_iters" | "max-iters" => self.max_iters = parse_value(key, value)?,
            "tol" | "tol_error" => self.tol_error = parse_value(key, value)?,
            "sigma" => self.sigma = parse_value(key, value)?,
            "theta" => self.theta = parse_value(key, value)?,
            "out" | "output_dir" => self.output_dir = PathBuf::from(value),
            "solver" => self.solver.method = value.parse()?,
            "solver_tol" => self.solver.rel_tolerance = parse_value(key, value)?,
            "ref_steps" | "ref-steps" => self.ref_steps = parse_value(key, value)?,
            "ref_damping" => self.ref_damping = Some(parse_value(key, value)?),
            "seed" => self.seed = parse_value(key, value)?,
            "cache" => self.cache_reference = parse_value(key, value)?,
            "plots" => self.write_plots = parse_value(key, value)?,
            other => return Err(KacanovError::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    /// Parses the plain `key = value` format; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| KacanovError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(KacanovError::Config("at least one strategy is required".into()));
        }
        if !(self.tol_error >= 0.0) {
            return Err(KacanovError::Config(format!("tolerance must be non-negative, got {}", self.tol_error)));
        }
        if self.level > crate::mesh::MAX_LEVEL {
            return Err(KacanovError::Config(format!("level {} is too large", self.level)));
        }
        self.solver.validate()?;
        let model = DiffusionModel::from_id(&self.model_id)?;
        DampingStrategy::taylor(&model.constants()).with_sigma(self.sigma).with_theta(self.theta).validate()?;
        Ok(())
    }

    pub fn strategy(&self, kind: StrategyKind, problem: &Problem) -> DampingStrategy {
        let c = &problem.constants;
        let base = match kind {
            StrategyKind::Undamped => DampingStrategy::undamped(c),
            StrategyKind::Taylor => DampingStrategy::taylor(c),
            StrategyKind::PredictionCorrection => DampingStrategy::prediction_correction(c),
        };
        base.with_sigma(self.sigma).with_theta(self.theta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceInfo {
    pub steps: usize,
    pub dual_residual: f64,
    pub damping: f64,
    pub from_cache: bool,
}

#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub kind: StrategyKind,
    pub trace: IterationTrace,
    /// `||e_{n+1}|| / ||e_n||`.
    pub error_ratios: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub reference: ReferenceInfo,
    pub runs: Vec<StrategyRun>,
    pub files: Vec<PathBuf>,
}

impl ExperimentReport {
    pub fn run(&self, kind: StrategyKind) -> Option<&StrategyRun> {
        self.runs.iter().find(|r| r.kind == kind)
    }
}

const CACHE_MAGIC: &[u8; 8] = b"KACREF1\n";

fn cache_path(cfg: &ExperimentConfig, damping: f64) -> PathBuf {
    cfg.output_dir.join(".cache").join(format!(
        "ref_{}_L{}_s{}_d{:016x}.bin",
        cfg.model_id,
        cfg.level,
        cfg.ref_steps,
        damping.to_bits()
    ))
}

fn load_reference(path: &Path, n: usize) -> Option<(Vec<f64>, usize, f64)> {
    let mut bytes = Vec::new();
    fs::File::open(path).ok()?.read_to_end(&mut bytes).ok()?;
    let body = bytes.strip_prefix(CACHE_MAGIC)?;
    let word = |i: usize| -> Option<[u8; 8]> { body.get(8 * i..8 * i + 8)?.try_into().ok() };
    if u64::from_le_bytes(word(0)?) as usize != n {
        return None;
    }
    let steps = u64::from_le_bytes(word(1)?) as usize;
    let dual = f64::from_le_bytes(word(2)?);
    let values = (0..n).map(|i| word(3 + i).map(f64::from_le_bytes)).collect::<Option<Vec<_>>>()?;
    (body.len() == 8 * (3 + n)).then_some((values, steps, dual))
}

fn store_reference(path: &Path, values: &[f64], steps: usize, dual: f64) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&(values.len() as u64).to_le_bytes())?;
    out.write_all(&(steps as u64).to_le_bytes())?;
    out.write_all(&dual.to_le_bytes())?;
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Discrete reference solution for the experiment, from the cache when available.
pub fn reference_solution(cfg: &ExperimentConfig, problem: &Problem) -> Result<(FeFunction, ReferenceInfo)> {
    let damping = cfg.ref_damping.unwrap_or_else(|| default_zarantonello_damping(&problem.model));
    let path = cache_path(cfg, damping);
    let tag = problem.space.tag();
    if cfg.cache_reference {
        if let Some((values, steps, dual_residual)) = load_reference(&path, tag.n_free) {
            let info = ReferenceInfo { steps, dual_residual, damping, from_cache: true };
            return Ok((FeFunction::from_values(tag, values)?, info));
        }
    }
    let z = zarantonello_reference(&problem.space, &problem.model, &problem.load, cfg.ref_steps, damping)?;
    if cfg.cache_reference {
        store_reference(&path, z.solution.values(), z.steps, z.dual_residual)?;
    }
    let info = ReferenceInfo { steps: z.steps, dual_residual: z.dual_residual, damping, from_cache: false };
    Ok((z.solution, info))
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    let model = DiffusionModel::from_id(&cfg.model_id)?;
    let space = FeSpace::new(TriangleMesh::build_lshape(cfg.level)?);
    Ok(Problem::new(space, model, &ManufacturedSolution::sine(), cfg.solver))
}

/// Runs every requested strategy against a precomputed reference.
pub fn run_strategies(cfg: &ExperimentConfig, problem: &Problem, reference: &FeFunction) -> Result<Vec<StrategyRun>> {
    let stop = StopCriteria { max_iters: cfg.max_iters, tol_error: cfg.tol_error, reference };
    cfg.strategies
        .par_iter()
        .map(|&kind| {
            let trace = problem.run_iteration(cfg.strategy(kind, problem), &stop)?;
            let error_ratios = trace.error_ratios();
            Ok(StrategyRun { kind, trace, error_ratios })
        })
        .collect()
}

pub fn trace_path(cfg: &ExperimentConfig, kind: StrategyKind) -> PathBuf {
    cfg.output_dir.join(format!("{}_{}.csv", cfg.model_id, kind.id()))
}

/// Builds the problem and reference, runs the strategies and writes
/// `<output_dir>/<model>_<strategy>.csv` plus the plots.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let problem = build_problem(cfg)?;
    let (reference, info) = reference_solution(cfg, &problem)?;
    let runs = run_strategies(cfg, &problem, &reference)?;

    fs::create_dir_all(&cfg.output_dir)?;
    let mut files = Vec::new();
    for run in &runs {
        let path = trace_path(cfg, run.kind);
        let mut out = BufWriter::new(fs::File::create(&path)?);
        run.trace.write_csv(&mut out)?;
        out.flush()?;
        files.push(path);
    }
    let mut report = ExperimentReport { config: cfg.clone(), reference: info, runs, files };
    if cfg.write_plots {
        let plots = emit_plots(&report, &cfg.output_dir)?;
        report.files.extend(plots);
    }
    Ok(report)
}

/// Writes three charts: error decay (log scale), successive error ratios and step sizes.
pub fn emit_plots(report: &ExperimentReport, output_dir: &Path) -> Result<Vec<PathBuf>> {
    if report.runs.is_empty() {
        return Err(KacanovError::Argument("report contains no runs".into()));
    }
    fs::create_dir_all(output_dir)?;
    let model = &report.config.model_id;
    let series = |f: &dyn Fn(&StrategyRun) -> Vec<(f64, f64)>| -> Vec<Series> {
        report
            .runs
            .iter()
            .map(|r| Series { label: r.kind.display_name().to_string(), points: f(r) })
            .collect()
    };
    let charts = [
        (
            "error",
            Chart {
                title: format!("{model}: error decay"),
                x_label: "iteration".into(),
                y_label: "||grad(u_n - u_ref)||".into(),
                log_y: true,
                series: series(&|r| r.trace.records.iter().map(|s| (s.n as f64, s.error)).collect()),
            },
        ),
        (
            "ratio",
            Chart {
                title: format!("{model}: ratio of successive errors"),
                x_label: "iteration".into(),
                y_label: "e_n / e_(n-1)".into(),
                log_y: false,
                series: series(&|r| {
                    r.error_ratios.iter().enumerate().map(|(i, &q)| ((i + 1) as f64, q)).collect()
                }),
            },
        ),
        (
            "delta",
            Chart {
                title: format!("{model}: step sizes"),
                x_label: "iteration".into(),
                y_label: "delta_n".into(),
                log_y: false,
                series: series(&|r| r.trace.records.iter().skip(1).map(|s| (s.n as f64, s.delta)).collect()),
            },
        ),
    ];
    let mut paths = Vec::new();
    for (name, chart) in charts {
        let path = output_dir.join(format!("{model}_{name}.svg"));
        fs::write(&path, chart.to_svg())?;
        paths.push(path);
    }
    Ok(paths)
}
