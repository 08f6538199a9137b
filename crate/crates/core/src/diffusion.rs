//! Scalar diffusion coefficients `mu(t)` and the quantities derived from them.
//!
//! The coefficient is evaluated at `t = |grad u|^2`. Each model carries the
//! two constants `m_mu <= M_mu` bounding the slope of `t -> mu(t^2) t`, which
//! fix the strong monotonicity and Lipschitz constants of the energy
//! derivative.

use std::fmt;
use std::sync::Arc;

use crate::error::{KacanovError, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type DiffFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Gauss-Legendre nodes and weights of order 8 on [-1, 1].
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_27),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_361_96),
    (0.183_434_642_495_649_8, 0.362_683_783_378_361_96),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_27),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// Width of the uniform panel grid used for the quadrature of `psi`.
const PANEL_WIDTH: f64 = 0.25;
/// Cumulative panel integrals are tabulated on `[0, TABLE_END]`.
const TABLE_END: f64 = 64.0;

fn gauss_legendre(mu: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    gauss_legendre_width(mu, a, b - a)
}

fn gauss_legendre_width(mu: &dyn Fn(f64) -> f64, a: f64, width: f64) -> f64 {
    let half = 0.5 * width;
    let mid = a + half;
    half * GL8.iter().map(|&(x, w)| w * mu(mid + half * x)).sum::<f64>()
}

/// Composite Gauss-Legendre integration of `mu` on a fixed knot grid.
///
/// Knots are the union of a uniform grid of width [`PANEL_WIDTH`] and extra
/// model-supplied knots (breakpoints, grading near singular behaviour). Full
/// panels up to [`TABLE_END`] are integrated once at construction.
#[derive(Clone)]
struct PsiTable {
    knots: Vec<f64>,
    cumulative: Vec<f64>,
}

impl PsiTable {
    fn new(mu: &dyn Fn(f64) -> f64, extra_knots: &[f64]) -> Self {
        let n = (TABLE_END / PANEL_WIDTH).round() as usize;
        let mut knots: Vec<f64> = (0..=n).map(|i| i as f64 * PANEL_WIDTH).collect();
        knots.extend(extra_knots.iter().copied().filter(|&k| k > 0.0 && k < TABLE_END));
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let mut cumulative = Vec::with_capacity(knots.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in knots.windows(2) {
            acc += gauss_legendre(mu, w[0], w[1]);
            cumulative.push(acc);
        }
        PsiTable { knots, cumulative }
    }

    /// Index of the last knot `<= s` (s within the table).
    fn locate(&self, s: f64) -> usize {
        self.knots.partition_point(|&k| k <= s).saturating_sub(1)
    }

    /// `int_0^s mu`.
    fn integral(&self, mu: &dyn Fn(f64) -> f64, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s < TABLE_END {
            let i = self.locate(s);
            return self.cumulative[i] + gauss_legendre(mu, self.knots[i], s);
        }
        let last = *self.cumulative.last().unwrap();
        last + self.span(mu, TABLE_END, s)
    }

    /// `int_a^b mu` for `a <= b`, split at every knot in between.
    fn span(&self, mu: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        self.span_width(mu, a, b - a)
    }

    /// `int_a^{a+width} mu`; the width is carried separately so that short
    /// intervals keep their relative accuracy.
    fn span_width(&self, mu: &dyn Fn(f64) -> f64, a: f64, width: f64) -> f64 {
        let mut total = 0.0;
        let mut lo = a;
        let mut left = width;
        while left > 0.0 {
            let next = self.next_knot(lo);
            let piece = (next - lo).min(left);
            total += gauss_legendre_width(mu, lo, piece);
            if piece == left {
                break;
            }
            left -= piece;
            lo = next;
        }
        total
    }

    fn next_knot(&self, s: f64) -> f64 {
        if s < TABLE_END {
            let i = self.knots.partition_point(|&k| k <= s);
            if i < self.knots.len() {
                return self.knots[i];
            }
        }
        ((s / PANEL_WIDTH).floor() + 1.0) * PANEL_WIDTH
    }
}

#[derive(Clone)]
enum Antiderivative {
    /// Closed form `psi` together with a cancellation-free increment `psi(s + gap) - psi(s)`.
    Closed { psi: ScalarFn, diff: DiffFn },
    Quadrature(Arc<PsiTable>),
}

/// A diffusion coefficient `mu` with its derivative, its antiderivative `psi`
/// and the slope constants `(m_mu, M_mu)`.
#[derive(Clone)]
pub struct DiffusionModel {
    name: String,
    mu: ScalarFn,
    mu_prime: Option<ScalarFn>,
    psi: Antiderivative,
    m_mu: f64,
    big_m_mu: f64,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("name", &self.name)
            .field("m_mu", &self.m_mu)
            .field("M_mu", &self.big_m_mu)
            .field("has_derivative", &self.mu_prime.is_some())
            .finish()
    }
}

/// Constants of the convergence analysis, specialised to the diffusion setting
/// with the norm `||grad .||_{L2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConstants {
    /// Strong monotonicity constant of `H'`, equal to `m_mu`.
    pub nu: f64,
    /// Lipschitz constant of `H'`, `3 M_mu`.
    pub lipschitz: f64,
    /// Coercivity of `a(u; ., .)`, equal to `m_mu`.
    pub alpha: f64,
    /// Boundedness of `a(u; ., .)`, equal to `M_mu`.
    pub beta: f64,
    /// Lower step size bound `alpha / (4 L_H)`.
    pub delta_min: f64,
    /// Fixed step sizes below `2 alpha / L_H` are covered by the convergence theory.
    pub delta_max_admissible: f64,
}

impl DiffusionModel {
    /// Builds a model whose `psi` is computed by composite Gauss-Legendre quadrature.
    ///
    /// `knots` are extra quadrature breakpoints, e.g. where `mu` is only piecewise smooth.
    pub fn new<F>(name: impl Into<String>, mu: F, m_mu: f64, big_m_mu: f64, knots: &[f64]) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(m_mu > 0.0 && big_m_mu >= m_mu && big_m_mu.is_finite()) {
            return Err(KacanovError::Argument(format!(
                "slope constants must satisfy 0 < m_mu <= M_mu < inf, got ({m_mu}, {big_m_mu})"
            )));
        }
        let mu: ScalarFn = Arc::new(mu);
        let table = PsiTable::new(&*mu, knots);
        Ok(DiffusionModel {
            name: name.into(),
            mu,
            mu_prime: None,
            psi: Antiderivative::Quadrature(Arc::new(table)),
            m_mu,
            big_m_mu,
        })
    }

    pub fn with_derivative<F>(mut self, mu_prime: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.mu_prime = Some(Arc::new(mu_prime));
        self
    }

    /// Replaces the quadrature by a closed form `psi` and its increment
    /// `(s, gap) -> psi(s + gap) - psi(s)`.
    pub fn with_antiderivative<P, D>(mut self, psi: P, diff: D) -> Self
    where
        P: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.psi = Antiderivative::Closed { psi: Arc::new(psi), diff: Arc::new(diff) };
        self
    }

    /// `mu(t) = 1/(t+1) + 1/2`, monotonically decreasing.
    pub fn mu1() -> Self {
        DiffusionModel::new("mu1", |t| 1.0 / (t + 1.0) + 0.5, 3.0 / 8.0, 3.0 / 2.0, &[])
            .expect("valid constants")
            .with_derivative(|t| -1.0 / ((t + 1.0) * (t + 1.0)))
            .with_antiderivative(
                |s| 0.5 * s.ln_1p() + 0.25 * s,
                |s, gap| 0.5 * (gap / (1.0 + s)).ln_1p() + 0.25 * gap,
            )
    }

    /// `mu(t) = t exp(-t^2) ln(t + 1e-4) + 1`, neither increasing nor decreasing.
    pub fn mu2() -> Self {
        const EPS: f64 = 1e-4;
        // grade the quadrature towards the log singularity at t = -EPS
        let knots = [1e-6, 1e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1];
        DiffusionModel::new(
            "mu2",
            |t| t * (-t * t).exp() * (t + EPS).ln() + 1.0,
            0.483_503,
            1.735_65,
            &knots,
        )
        .expect("valid constants")
        .with_derivative(|t| {
            let e = (-t * t).exp();
            e * (t + EPS).ln() * (1.0 - 2.0 * t * t) + t * e / (t + EPS)
        })
    }

    /// Piecewise coefficient with a shear-thinning zone followed by a
    /// shear-thickening zone and a plateau.
    pub fn mu3() -> Self {
        // the first branch has complex poles near 0.39 +- 0.14i; refine the panels around them
        let mut knots: Vec<f64> = (0..=24).map(|i| 0.2 + 0.0125 * i as f64).collect();
        knots.push(MU3.t_max);
        DiffusionModel::new("mu3", mu3_value, 1.68, 28.2696, &knots)
            .expect("valid constants")
            .with_derivative(mu3_derivative)
    }

    /// `mu = c`; the problem is linear.
    pub fn constant(c: f64) -> Result<Self> {
        Ok(DiffusionModel::new("constant", move |_| c, c, c, &[])?
            .with_derivative(|_| 0.0)
            .with_antiderivative(move |s| 0.5 * c * s, move |_, gap| 0.5 * c * gap))
    }

    /// Looks up a built-in model by its configuration id.
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "mu1" => Ok(Self::mu1()),
            "mu2" => Ok(Self::mu2()),
            "mu3" => Ok(Self::mu3()),
            "constant" => Self::constant(1.0),
            other => Err(KacanovError::Config(format!(
                "unknown model `{other}` (expected mu1, mu2, mu3 or constant)"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn m_mu(&self) -> f64 {
        self.m_mu
    }

    #[allow(non_snake_case)]
    pub fn M_mu(&self) -> f64 {
        self.big_m_mu
    }

    #[inline]
    pub fn mu(&self, t: f64) -> f64 {
        (self.mu)(t.max(0.0))
    }

    pub fn has_derivative(&self) -> bool {
        self.mu_prime.is_some()
    }

    #[inline]
    pub fn mu_prime(&self, t: f64) -> Option<f64> {
        self.mu_prime.as_ref().map(|d| d(t.max(0.0)))
    }

    /// `psi(s) = 1/2 int_0^s mu(t) dt`.
    pub fn psi(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match &self.psi {
            Antiderivative::Closed { psi, .. } => psi(s),
            Antiderivative::Quadrature(table) => 0.5 * table.integral(&*self.mu, s),
        }
    }

    /// `psi(a) - psi(b)`, integrated directly over `[b, a]` so that nearby
    /// arguments do not lose precision to cancellation.
    pub fn psi_diff(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a.max(0.0), b.max(0.0));
        self.psi_increment(b, a - b)
    }

    /// `psi(s + gap) - psi(s)` for `s, s + gap >= 0`. Passing the gap itself
    /// (rather than both end points) keeps full relative accuracy when it is
    /// tiny compared with `s`.
    pub fn psi_increment(&self, s: f64, gap: f64) -> f64 {
        let s = s.max(0.0);
        let gap = gap.max(-s);
        match &self.psi {
            Antiderivative::Closed { diff, .. } => diff(s, gap),
            Antiderivative::Quadrature(table) => {
                if gap >= 0.0 {
                    0.5 * table.span_width(&*self.mu, s, gap)
                } else {
                    -0.5 * table.span_width(&*self.mu, s + gap, -gap)
                }
            }
        }
    }

    /// `phi(t) = int_0^t mu(s^2) s ds = psi(t^2)`; diagnostic only.
    pub fn phi(&self, t: f64) -> f64 {
        self.psi(t * t)
    }

    /// Derived constants of the convergence analysis.
    pub fn constants(&self) -> AnalysisConstants {
        let alpha = self.m_mu;
        let lipschitz = 3.0 * self.big_m_mu;
        AnalysisConstants {
            nu: self.m_mu,
            lipschitz,
            alpha,
            beta: self.big_m_mu,
            delta_min: alpha / (4.0 * lipschitz),
            delta_max_admissible: 2.0 * alpha / lipschitz,
        }
    }
}

struct Mu3Params {
    t_c: f64,
    t_max: f64,
    mu_0: f64,
    mu_c: f64,
    mu_max: f64,
    mu_inf: f64,
}

const MU3: Mu3Params = Mu3Params { t_c: 0.5, t_max: 2.0, mu_0: 5.0, mu_c: 4.0, mu_max: 10.0, mu_inf: 6.0 };

// Each rational branch is written as `1/(1+r^2)` with the ratio `r` or its
// reciprocal `w = 1/r`, whichever stays bounded, so the breakpoints evaluate
// without overflow.
fn mu3_value(t: f64) -> f64 {
    let p = &MU3;
    if t <= p.t_c {
        let g = if t < 0.5 * p.t_c {
            let q = t * t / (t - p.t_c);
            1.0 / (1.0 + q * q)
        } else {
            let w = (t - p.t_c) / (t * t);
            w * w / (1.0 + w * w)
        };
        p.mu_c + (p.mu_0 - p.mu_c) * g
    } else if t <= p.t_max {
        let g = if t < 0.5 * (p.t_c + p.t_max) {
            let r = (t - p.t_c) / (t - p.t_max);
            1.0 / (1.0 + r * r)
        } else {
            let w = (t - p.t_max) / (t - p.t_c);
            w * w / (1.0 + w * w)
        };
        p.mu_max + (p.mu_c - p.mu_max) * g
    } else {
        let x = t - p.t_max;
        p.mu_inf + (p.mu_max - p.mu_inf) / (1.0 + x * x)
    }
}

fn mu3_derivative(t: f64) -> f64 {
    let p = &MU3;
    if t <= p.t_c {
        let dg = if t < 0.5 * p.t_c {
            let d = t - p.t_c;
            let q = t * t / d;
            let dq = (t * t - 2.0 * t * p.t_c) / (d * d);
            -2.0 * q * dq / (1.0 + q * q).powi(2)
        } else {
            let w = (t - p.t_c) / (t * t);
            let dw = (2.0 * p.t_c - t) / (t * t * t);
            2.0 * w * dw / (1.0 + w * w).powi(2)
        };
        (p.mu_0 - p.mu_c) * dg
    } else if t <= p.t_max {
        let dg = if t < 0.5 * (p.t_c + p.t_max) {
            let d = t - p.t_max;
            let r = (t - p.t_c) / d;
            let dr = (p.t_c - p.t_max) / (d * d);
            -2.0 * r * dr / (1.0 + r * r).powi(2)
        } else {
            let d = t - p.t_c;
            let w = (t - p.t_max) / d;
            let dw = (p.t_max - p.t_c) / (d * d);
            2.0 * w * dw / (1.0 + w * w).powi(2)
        };
        (p.mu_c - p.mu_max) * dg
    } else {
        let x = t - p.t_max;
        -2.0 * (p.mu_max - p.mu_inf) * x / (1.0 + x * x).powi(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slope(model: &DiffusionModel, t: f64, s: f64) -> f64 {
        (model.mu(t * t) * t - model.mu(s * s) * s) / (t - s)
    }

    #[test]
    fn mu1_values_and_constants() {
        let m = DiffusionModel::mu1();
        assert_eq!(m.mu(0.0), 1.5);
        assert_eq!((m.m_mu(), m.M_mu()), (0.375, 1.5));
        assert_eq!(m.psi(0.0), 0.0);
    }

    #[test]
    fn mu2_and_mu3_at_zero() {
        assert_eq!(DiffusionModel::mu2().mu(0.0), 1.0);
        assert_eq!(DiffusionModel::mu3().mu(0.0), 5.0);
        assert_eq!(
            (DiffusionModel::mu2().m_mu(), DiffusionModel::mu2().M_mu()),
            (0.483503, 1.73565)
        );
        assert_eq!((DiffusionModel::mu3().m_mu(), DiffusionModel::mu3().M_mu()), (1.68, 28.2696));
    }

    #[test]
    fn mu3_is_continuous_at_breakpoints() {
        let m = DiffusionModel::mu3();
        for tb in [0.5, 2.0] {
            let left = m.mu(tb - 1e-13);
            let right = m.mu(tb + 1e-13);
            assert!((left - right).abs() < 1e-10, "jump at {tb}: {left} vs {right}");
            let dl = m.mu_prime(tb - 1e-9).unwrap();
            let dr = m.mu_prime(tb + 1e-9).unwrap();
            assert!((dl - dr).abs() < 1e-6, "derivative jump at {tb}: {dl} vs {dr}");
        }
        assert_eq!(m.mu(0.5), 4.0);
        assert_eq!(m.mu(2.0), 10.0);
    }

    #[test]
    fn derivatives_match_central_differences() {
        for model in [DiffusionModel::mu1(), DiffusionModel::mu2(), DiffusionModel::mu3()] {
            for i in 1..400 {
                let t = i as f64 * 0.0123 + 0.001;
                if (t - 0.5).abs() < 1e-3 || (t - 2.0).abs() < 1e-3 {
                    continue;
                }
                let h = 1e-6 * t.max(1e-2);
                let fd = (model.mu(t + h) - model.mu(t - h)) / (2.0 * h);
                let d = model.mu_prime(t).unwrap();
                let scale = d.abs().max(1e-2);
                assert!(
                    (fd - d).abs() <= 1e-6 * scale,
                    "{}: mu'({t}) = {d}, fd = {fd}",
                    model.name()
                );
            }
        }
    }

    #[test]
    fn psi_derivative_is_half_mu() {
        for model in [DiffusionModel::mu1(), DiffusionModel::mu2(), DiffusionModel::mu3()] {
            for s in [0.05, 0.3, 1.1, 3.7, 12.0, 70.0] {
                let h = 1e-5;
                let fd = (model.psi(s + h) - model.psi(s - h)) / (2.0 * h);
                assert!((fd - 0.5 * model.mu(s)).abs() < 1e-7, "{} at {s}", model.name());
            }
        }
    }

    #[test]
    fn psi_diff_agrees_with_difference() {
        for model in [DiffusionModel::mu1(), DiffusionModel::mu2(), DiffusionModel::mu3()] {
            for (a, b) in [(3.0, 1.0), (0.2, 5.5), (80.0, 63.9), (0.5, 0.5)] {
                let direct = model.psi(a) - model.psi(b);
                assert!((model.psi_diff(a, b) - direct).abs() < 1e-11 * (1.0 + direct.abs()));
            }
        }
    }

    #[test]
    fn constants_of_mu1_and_constant_model() {
        let c = DiffusionModel::mu1().constants();
        assert_eq!((c.nu, c.lipschitz, c.alpha), (0.375, 4.5, 0.375));
        assert!((c.delta_min - 0.375 / 18.0).abs() < 1e-15);
        let c3 = DiffusionModel::mu3().constants();
        assert!((c3.lipschitz - 84.8088).abs() < 1e-10);
        let one = DiffusionModel::constant(2.5).unwrap().constants();
        assert!((one.delta_max_admissible - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mu1_satisfies_declared_slope_bounds() {
        let m = DiffusionModel::mu1();
        for i in 0..200 {
            for j in 0..i {
                let (t, s) = (i as f64 * 0.05, j as f64 * 0.05);
                let k = slope(&m, t, s);
                assert!(k >= m.m_mu() - 1e-9 && k <= m.M_mu() + 1e-9);
            }
        }
    }

    #[test]
    fn invalid_constants_are_rejected() {
        assert!(DiffusionModel::new("bad", |_| 1.0, 0.0, 1.0, &[]).is_err());
        assert!(DiffusionModel::new("bad", |_| 1.0, 2.0, 1.0, &[]).is_err());
        assert!(DiffusionModel::from_id("mu9").is_err());
    }
}
