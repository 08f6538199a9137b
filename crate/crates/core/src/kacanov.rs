//! The damped Kačanov iteration `u <- u - delta * rho`, `A(u) rho = F(u)`,
//! with fixed or adaptive step sizes, and the Zarantonello iteration used to
//! compute reference solutions.
//!
//! Both adaptive controllers enforce the energy decay
//!
//! ```text
//! H(u_n) - H(u_{n+1}) >= theta * min(alpha, L_H) * ||grad(u_{n+1} - u_n)||^2
//! ```
//!
//! at every accepted step.

use std::io::Write;

use crate::diffusion::{AnalysisConstants, DiffusionModel};
use crate::error::{KacanovError, Result};
use crate::fem::{DualVector, FeFunction, FeSpace, ManufacturedSolution};
use crate::linsolve::{solve_spd, RieszMap, SolveConfig};

/// Retry cap of the step-size loops.
pub const MAX_RETRIES: usize = 200;
/// Window for the trailing error-ratio statistics.
pub const TRAILING_WINDOW: usize = 10;
/// Slack used when auditing the decay inequality after the fact.
pub const AUDIT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Fixed(f64),
    Taylor,
    PredictionCorrection,
}

/// State carried from step to step by the prediction-correction controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcState {
    pub delta: f64,
    /// `-1` enlarges the trial step, `+1` shrinks it.
    pub p: i8,
}

impl Default for PcState {
    fn default() -> Self {
        PcState { delta: 1.0, p: -1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingStrategy {
    pub rule: StepRule,
    /// Correction factor in `(1/2, 1)`.
    pub sigma: f64,
    /// Decay parameter in `(0, 1/2]`.
    pub theta: f64,
    pub delta_min: f64,
    pub pc: PcState,
}

impl DampingStrategy {
    fn with_rule(rule: StepRule, constants: &AnalysisConstants) -> Self {
        DampingStrategy { rule, sigma: 0.9, theta: 0.1, delta_min: constants.delta_min, pc: PcState::default() }
    }

    pub fn fixed(delta: f64, constants: &AnalysisConstants) -> Self {
        Self::with_rule(StepRule::Fixed(delta), constants)
    }

    /// The classical scheme, `delta = 1`.
    pub fn undamped(constants: &AnalysisConstants) -> Self {
        Self::fixed(1.0, constants)
    }

    pub fn taylor(constants: &AnalysisConstants) -> Self {
        Self::with_rule(StepRule::Taylor, constants)
    }

    pub fn prediction_correction(constants: &AnalysisConstants) -> Self {
        Self::with_rule(StepRule::PredictionCorrection, constants)
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn is_adaptive(&self) -> bool {
        !matches!(self.rule, StepRule::Fixed(_))
    }

    pub fn label(&self) -> &'static str {
        match self.rule {
            StepRule::Fixed(d) if d == 1.0 => "undamped",
            StepRule::Fixed(_) => "fixed",
            StepRule::Taylor => "taylor",
            StepRule::PredictionCorrection => "prediction_correction",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.5 && self.sigma < 1.0) {
            return Err(KacanovError::Config(format!("sigma must lie in (1/2, 1), got {}", self.sigma)));
        }
        if !(self.theta > 0.0 && self.theta <= 0.5) {
            return Err(KacanovError::Config(format!("theta must lie in (0, 1/2], got {}", self.theta)));
        }
        if !(self.delta_min > 0.0) {
            return Err(KacanovError::Config(format!("delta_min must be positive, got {}", self.delta_min)));
        }
        if let StepRule::Fixed(d) = self.rule {
            if !(d > 0.0) {
                return Err(KacanovError::Config(format!("fixed step must be positive, got {d}")));
            }
        }
        if self.pc.p != 1 && self.pc.p != -1 {
            return Err(KacanovError::Config(format!("exponent p must be +1 or -1, got {}", self.pc.p)));
        }
        Ok(())
    }

    /// Whether a fixed step lies in the range covered by the convergence theorem.
    pub fn has_guarantee(&self, constants: &AnalysisConstants) -> bool {
        match self.rule {
            StepRule::Fixed(d) => d > 0.0 && d < constants.delta_max_admissible,
            _ => true,
        }
    }
}

/// The outcome of one outer step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub u_next: FeFunction,
    /// The step size that produced `u_next`.
    pub delta: f64,
    pub retries: usize,
    /// `H(u) - H(u_next)`.
    pub decrement: f64,
    /// `||grad(u_next - u)||`.
    pub step_norm: f64,
    pub decay_ok: bool,
    /// The prediction-correction loop hit `delta_min` without satisfying the decay inequality.
    pub floor_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub n: usize,
    pub delta: f64,
    pub energy: f64,
    pub error: f64,
    pub decrement: f64,
    pub decay_ok: bool,
    pub retries: usize,
    pub step_norm: f64,
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub strategy: String,
    /// Row 0 describes the initial guess; row `n` the iterate after `n` steps.
    pub records: Vec<StepRecord>,
    /// The error dropped below the requested tolerance.
    pub reached_tolerance: bool,
    /// Trailing geometric-mean error ratio is `>= 1` (or the iterates blew up).
    pub non_convergent: bool,
    pub fallback_steps: usize,
    pub final_iterate: FeFunction,
}

pub const CSV_HEADER: &str = "n,delta,energy,error,decrement,decay_ok,retries";

impl IterationTrace {
    pub fn steps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_error(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.error)
    }

    /// `e_{n+1} / e_n` for consecutive records.
    pub fn error_ratios(&self) -> Vec<f64> {
        self.records.windows(2).map(|w| w[1].error / w[0].error).collect()
    }

    /// Geometric mean of the last `window` error ratios.
    pub fn trailing_ratio(&self, window: usize) -> Option<f64> {
        let ratios: Vec<f64> = self.error_ratios().into_iter().filter(|r| r.is_finite() && *r > 0.0).collect();
        if ratios.is_empty() {
            return None;
        }
        let tail = &ratios[ratios.len().saturating_sub(window)..];
        Some((tail.iter().map(|r| r.ln()).sum::<f64>() / tail.len() as f64).exp())
    }

    /// First step count at which the error is at or below `threshold`.
    pub fn steps_to_reach(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.error <= threshold).map(|r| r.n)
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{},{}",
                r.n,
                r.delta,
                r.energy,
                r.error,
                r.decrement,
                u8::from(r.decay_ok),
                r.retries
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StopCriteria<'a> {
    pub max_iters: usize,
    pub tol_error: f64,
    pub reference: &'a FeFunction,
}

/// Linearisation at an iterate: the residual `F(u)` and the correction `rho`.
#[derive(Debug, Clone)]
pub struct Correction {
    pub residual: DualVector,
    pub rho: FeFunction,
}

/// Everything the iteration needs: discrete space, coefficient, load and solver settings.
#[derive(Debug, Clone)]
pub struct Problem {
    pub space: FeSpace,
    pub model: DiffusionModel,
    pub load: DualVector,
    pub constants: AnalysisConstants,
    pub solver: SolveConfig,
}

impl Problem {
    pub fn new(space: FeSpace, model: DiffusionModel, exact: &ManufacturedSolution, solver: SolveConfig) -> Self {
        let load = space.assemble_load(exact, &model);
        Self::with_load(space, model, load, solver)
    }

    pub fn with_load(space: FeSpace, model: DiffusionModel, load: DualVector, solver: SolveConfig) -> Self {
        let constants = model.constants();
        Problem { space, model, load, constants, solver }
    }

    pub fn energy(&self, u: &FeFunction) -> f64 {
        self.space.energy(&self.model, u, &self.load)
    }

    pub fn residual(&self, u: &FeFunction) -> DualVector {
        self.space.residual(&self.model, u, &self.load)
    }

    /// Solves `A(u) rho = F(u)`.
    pub fn correction(&self, u: &FeFunction) -> Result<Correction> {
        let residual = self.residual(u);
        let a = self.space.assemble_stiffness(&self.model, u);
        let rho = solve_spd(&a, &residual, &self.solver)?;
        Ok(Correction { residual, rho })
    }

    /// One damped Kačanov step with a given `delta`; returns `(u_next, rho)`.
    pub fn kacanov_update(&self, u: &FeFunction, delta: f64) -> Result<(FeFunction, FeFunction)> {
        if !(delta > 0.0) {
            return Err(KacanovError::Argument(format!("step size must be positive, got {delta}")));
        }
        let Correction { rho, .. } = self.correction(u)?;
        Ok((u.sub_scaled(delta, &rho), rho))
    }

    fn taylor_ratio(&self, u: &FeFunction, residual: &DualVector, rho: &FeFunction, delta_min: f64) -> Result<f64> {
        let numerator = residual.apply(rho);
        let curvature = self.space.fprime_form(&self.model, u, rho, rho)?;
        if curvature <= 0.0 || !numerator.is_finite() {
            return Ok(delta_min);
        }
        Ok((numerator / curvature).max(delta_min))
    }

    /// Maximiser of the second-order model of the energy decrement,
    /// `<F(u), rho> / <F'(u) rho, rho>`, bounded below by `delta_min`.
    pub fn taylor_step(&self, u: &FeFunction, rho: &FeFunction, delta_min: f64) -> Result<f64> {
        let residual = self.residual(u);
        self.taylor_ratio(u, &residual, rho, delta_min)
    }

    /// Evaluates the trial `u - delta rho` against the decay inequality with constant `c`.
    fn trial(&self, u: &FeFunction, rho: &FeFunction, rho_norm: f64, delta: f64, c: f64) -> Trial {
        let decrement = self.space.energy_decrement(&self.model, u, rho, delta, &self.load);
        let step_norm = delta * rho_norm;
        Trial { delta, decrement, step_norm, ok: decrement >= c * step_norm * step_norm }
    }

    fn decay_constant(&self, strategy: &DampingStrategy) -> f64 {
        strategy.theta * self.constants.alpha.min(self.constants.lipschitz)
    }

    /// One step with a fixed step size; the decay inequality is recorded but not enforced.
    pub fn fixed_step(&self, u: &FeFunction, delta: f64, strategy: &DampingStrategy) -> Result<StepOutcome> {
        let (u_next, rho) = self.kacanov_update(u, delta)?;
        let rho_norm = self.space.h1_seminorm(&rho);
        let t = self.trial(u, &rho, rho_norm, delta, self.decay_constant(strategy));
        Ok(t.accept(u_next, 0, false))
    }

    /// Step size control via Taylor expansion: start from the Taylor step and
    /// shrink by `sigma` (not below `delta_min`) until the decay inequality holds.
    pub fn algorithm1_step(&self, u: &FeFunction, strategy: &DampingStrategy) -> Result<StepOutcome> {
        let c = self.decay_constant(strategy);
        let Correction { residual, rho } = self.correction(u)?;
        let rho_norm = self.space.h1_seminorm(&rho);
        let mut delta = self.taylor_ratio(u, &residual, &rho, strategy.delta_min)?;
        let mut retries = 0;
        loop {
            let t = self.trial(u, &rho, rho_norm, delta, c);
            let at_floor = delta <= strategy.delta_min;
            delta = (strategy.sigma * delta).max(strategy.delta_min);
            if t.ok {
                return Ok(t.accept(u.sub_scaled(t.delta, &rho), retries, false));
            }
            retries += 1;
            // every further pass would repeat the same delta_min trial
            if at_floor || retries >= MAX_RETRIES {
                return Err(KacanovError::RetryCap { what: "Taylor step-size loop", cap: MAX_RETRIES });
            }
        }
    }

    /// Step size control via prediction and correction: compare the energy
    /// decay of `delta` and `sigma^p delta`, keep the better one and adapt `p`.
    /// Updates `strategy.pc` in place.
    pub fn algorithm2_step(&self, u: &FeFunction, strategy: &mut DampingStrategy) -> Result<StepOutcome> {
        let c = self.decay_constant(strategy);
        let Correction { rho, .. } = self.correction(u)?;
        let rho_norm = self.space.h1_seminorm(&rho);
        let sigma = strategy.sigma;
        let PcState { mut delta, mut p } = strategy.pc;

        if p == 1 && delta < strategy.delta_min / sigma {
            p = -1;
        }
        let delta_trial = sigma.powi(p as i32) * delta;
        let predicted = self.trial(u, &rho, rho_norm, delta_trial, c);

        let mut retries = 0;
        let mut floor_fallback = false;
        let accepted = if predicted.ok {
            let base = self.trial(u, &rho, rho_norm, delta, c);
            if predicted.decrement >= base.decrement || !base.ok {
                delta = delta_trial;
                predicted
            } else {
                p = -p;
                base
            }
        } else {
            p = 1;
            delta = delta_trial;
            let mut current = predicted;
            while !current.ok {
                if delta <= strategy.delta_min {
                    floor_fallback = true;
                    break;
                }
                retries += 1;
                if retries > MAX_RETRIES {
                    return Err(KacanovError::RetryCap { what: "prediction-correction shrink loop", cap: MAX_RETRIES });
                }
                delta = (sigma * delta).max(strategy.delta_min);
                current = self.trial(u, &rho, rho_norm, delta, c);
            }
            current
        };

        strategy.pc = PcState { delta, p };
        Ok(accepted.accept(u.sub_scaled(accepted.delta, &rho), retries, floor_fallback))
    }

    /// Dispatches one outer step according to the strategy.
    pub fn step(&self, u: &FeFunction, strategy: &mut DampingStrategy) -> Result<StepOutcome> {
        match strategy.rule {
            StepRule::Fixed(delta) => self.fixed_step(u, delta, strategy),
            StepRule::Taylor => self.algorithm1_step(u, strategy),
            StepRule::PredictionCorrection => self.algorithm2_step(u, strategy),
        }
    }

    /// Runs the iteration from `u_0 = 0` and records the trace.
    pub fn run_iteration(&self, mut strategy: DampingStrategy, stop: &StopCriteria<'_>) -> Result<IterationTrace> {
        strategy.validate()?;
        let space = &self.space;
        let mut u = space.zero();
        let mut records = vec![StepRecord {
            n: 0,
            delta: 0.0,
            energy: self.energy(&u),
            error: space.h1_distance(&u, stop.reference),
            decrement: 0.0,
            decay_ok: true,
            retries: 0,
            step_norm: 0.0,
        }];
        let mut fallback_steps = 0;
        let mut blew_up = false;

        for n in 1..=stop.max_iters {
            if records.last().unwrap().error < stop.tol_error {
                break;
            }
            let outcome = self.step(&u, &mut strategy)?;
            u = outcome.u_next;
            fallback_steps += usize::from(outcome.floor_fallback);
            let error = space.h1_distance(&u, stop.reference);
            records.push(StepRecord {
                n,
                delta: outcome.delta,
                energy: self.energy(&u),
                error,
                decrement: outcome.decrement,
                decay_ok: outcome.decay_ok,
                retries: outcome.retries,
                step_norm: outcome.step_norm,
            });
            if !error.is_finite() {
                blew_up = true;
                break;
            }
        }

        let reached_tolerance = records.last().unwrap().error < stop.tol_error;
        let mut trace = IterationTrace {
            strategy: strategy.label().to_string(),
            records,
            reached_tolerance,
            non_convergent: false,
            fallback_steps,
            final_iterate: u,
        };
        trace.non_convergent =
            blew_up || (!reached_tolerance && trace.trailing_ratio(TRAILING_WINDOW).is_some_and(|q| q >= 1.0));
        Ok(trace)
    }
}

#[derive(Clone, Copy)]
struct Trial {
    delta: f64,
    decrement: f64,
    step_norm: f64,
    ok: bool,
}

impl Trial {
    fn accept(self, u_next: FeFunction, retries: usize, floor_fallback: bool) -> StepOutcome {
        StepOutcome {
            u_next,
            delta: self.delta,
            retries,
            decrement: self.decrement,
            step_norm: self.step_norm,
            decay_ok: self.ok,
            floor_fallback,
        }
    }
}

/// Contraction factor `q(delta) = 1 - 2 delta nu^2 (alpha - delta L_H / 2) / (beta^2 L_H)`
/// of the energy error for a constant step in `(0, 2 alpha / L_H)`.
pub fn contraction_estimate(constants: &AnalysisConstants, delta: f64) -> Result<f64> {
    let AnalysisConstants { nu, lipschitz, alpha, beta, .. } = *constants;
    if !(delta > 0.0 && delta < 2.0 * alpha / lipschitz) {
        return Err(KacanovError::Argument(format!(
            "step {delta} outside the admissible range (0, {})",
            2.0 * alpha / lipschitz
        )));
    }
    Ok(1.0 - 2.0 * delta * nu * nu * (alpha - 0.5 * delta * lipschitz) / (beta * beta * lipschitz))
}

/// Result of the Zarantonello reference computation.
#[derive(Debug, Clone)]
pub struct ZarantonelloResult {
    pub solution: FeFunction,
    pub steps: usize,
    pub dual_residual: f64,
}

/// Dual residual below which the Zarantonello iteration stops early.
pub const ZARANTONELLO_TOL: f64 = 1e-13;

/// Default Zarantonello damping `1 / M_mu`.
pub fn default_zarantonello_damping(model: &DiffusionModel) -> f64 {
    1.0 / model.M_mu()
}

/// Zarantonello iteration `u <- u - delta_z R^{-1} F(u)` from `u = 0`, where `R`
/// is the Riesz map of `(grad ., grad .)`. Runs `n_steps` steps or until
/// `||F(u)||_{X*} < 1e-13`.
pub fn zarantonello_reference(
    space: &FeSpace,
    model: &DiffusionModel,
    b: &DualVector,
    n_steps: usize,
    delta_z: f64,
) -> Result<ZarantonelloResult> {
    let upper = 2.0 / model.M_mu();
    if !(delta_z > 0.0 && delta_z < upper) {
        return Err(KacanovError::Argument(format!(
            "Zarantonello damping {delta_z} outside (0, {upper})"
        )));
    }
    let riesz = RieszMap::new(space)?;
    let mut u = space.zero();
    let mut dual_residual = f64::INFINITY;
    let mut steps = 0;
    while steps < n_steps {
        let f = space.residual(model, &u, b);
        let r = riesz.lift(&f);
        dual_residual = f.apply(&r).max(0.0).sqrt();
        if dual_residual < ZARANTONELLO_TOL {
            break;
        }
        u = u.sub_scaled(delta_z, &r);
        steps += 1;
    }
    if steps == n_steps && n_steps > 0 {
        dual_residual = riesz.dual_norm(&space.residual(model, &u, b));
    }
    Ok(ZarantonelloResult { solution: u, steps, dual_residual })
}
