mod common;

use kacanov::DiffusionModel;
use rand::Rng;

fn models() -> [DiffusionModel; 3] {
    [DiffusionModel::mu1(), DiffusionModel::mu2(), DiffusionModel::mu3()]
}

/// `1/2 int_0^s mu` by the trapezoidal rule after substituting `t = s x^2`,
/// which clusters nodes near `t = 0`; Richardson-extrapolated from `n` and `2n` panels.
fn graded_trapezoid(model: &DiffusionModel, s: f64, n: usize) -> f64 {
    let rule = |n: usize| {
        let h = 1.0 / n as f64;
        let f = |x: f64| model.mu(s * x * x) * 2.0 * s * x;
        let inner: f64 = (1..n).map(|i| f(i as f64 * h)).sum();
        0.5 * h * (f(0.0) + f(1.0)) + h * inner
    };
    let (coarse, fine) = (rule(n), rule(2 * n));
    0.5 * (fine + (fine - coarse) / 3.0)
}

#[test]
fn psi_matches_graded_trapezoid_oracle() {
    for model in models() {
        assert_eq!(model.psi(0.0), 0.0);
        for s in [1e-3, 0.05, 0.3, 0.5, 1.0, 2.0, 2.73, 7.5, 30.0, 80.0] {
            let oracle = graded_trapezoid(&model, s, 1 << 17);
            let err = common::rel_err(model.psi(s), oracle);
            assert!(err < 1e-8, "{} psi({s}) = {} vs {oracle} (rel {err:e})", model.name(), model.psi(s));
        }
    }
}

#[test]
fn psi_increment_keeps_relative_accuracy_for_tiny_gaps() {
    for model in models() {
        for s in [0.2, 1.0, 3.0, 70.0] {
            let gap = 1e-9 * s;
            // psi' = mu / 2, so the increment is mu(s + gap/2) gap / 2 up to O(gap^3)
            let oracle = 0.5 * gap * model.mu(s + 0.5 * gap);
            let inc = model.psi_increment(s, gap);
            assert!(common::rel_err(inc, oracle) < 1e-12, "{} at {s}", model.name());
            assert!(common::rel_err(-model.psi_increment(s + gap, -gap), oracle) < 1e-6);
        }
    }
}

/// `xi'(t)` for `xi(t) = mu(t^2) t`.
fn xi_prime(model: &DiffusionModel, t: f64) -> f64 {
    let s = t * t;
    model.mu(s) + 2.0 * s * model.mu_prime(s).unwrap()
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    while b - a > 1e-12 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// `(inf, sup)` of `xi'` on `[0, 12]`: grid bracketing, then golden-section refinement.
fn slope_extrema(model: &DiffusionModel) -> (f64, f64) {
    let h = 1e-3;
    let grid: Vec<f64> = (0..=12_000).map(|i| i as f64 * h).collect();
    let refine = |sign: f64| {
        let f = |t: f64| sign * xi_prime(model, t);
        let best = grid.iter().copied().min_by(|&x, &y| f(x).total_cmp(&f(y))).unwrap();
        sign * golden_min(&f, (best - h).max(0.0), best + h).1.min(f(best))
    };
    (refine(1.0), refine(-1.0))
}

#[test]
fn slope_constants_recomputed() {
    let (lo, hi) = slope_extrema(&DiffusionModel::mu1());
    assert!((lo - 0.375).abs() < 1e-9 && (hi - 1.5).abs() < 1e-9, "{lo} {hi}");

    let (lo, hi) = slope_extrema(&DiffusionModel::mu2());
    assert!((lo - 0.483503).abs() < 1e-4, "{lo}");
    // the declared upper constant 1.73565 is not reproduced; the supremum is about 1.8183 at t = 0.927
    assert!((hi - 1.81830).abs() < 1e-4, "{hi}");

    let (lo, hi) = slope_extrema(&DiffusionModel::mu3());
    assert!((hi - 28.2696).abs() < 1e-3, "{hi}");
    // the declared lower constant 1.68 is not reproduced: xi decreases near t = 1.654
    assert!((lo + 4.961).abs() < 1e-3, "{lo}");
}

fn xi(model: &DiffusionModel, t: f64) -> f64 {
    model.mu(t * t) * t
}

#[test]
fn random_pairs_respect_slope_bounds() {
    let mut rng = common::rng(7);
    // (model, lower, upper): declared constants where they hold, recomputed ones otherwise
    let cases = [
        (DiffusionModel::mu1(), 0.375, 1.5),
        (DiffusionModel::mu2(), 0.483503 - 1e-6, 1.81831),
        (DiffusionModel::mu3(), -4.9611, 28.2696 + 1e-4),
    ];
    for (model, lower, upper) in cases {
        for _ in 0..20_000 {
            let a: f64 = rng.gen_range(0.0..5.0);
            let b: f64 = rng.gen_range(0.0..5.0);
            let (s, t) = if a < b { (a, b) } else { (b, a) };
            if t - s < 1e-9 {
                continue;
            }
            let slope = (xi(&model, t) - xi(&model, s)) / (t - s);
            assert!(slope >= lower - 1e-9 && slope <= upper + 1e-9, "{} secant {slope} on [{s}, {t}]", model.name());
        }
    }
}

#[test]
fn declared_constants_fail_on_targeted_pairs() {
    let mu2 = DiffusionModel::mu2();
    let slope = (xi(&mu2, 0.95) - xi(&mu2, 0.9)) / 0.05;
    assert!(slope > mu2.M_mu());
    let mu3 = DiffusionModel::mu3();
    let slope = (xi(&mu3, 1.7) - xi(&mu3, 1.6)) / 0.1;
    assert!(slope < 0.0 && slope < mu3.m_mu());
}

#[test]
fn analysis_constants() {
    let c = DiffusionModel::mu1().constants();
    assert_eq!((c.nu, c.lipschitz, c.alpha), (0.375, 4.5, 0.375));
    assert!((c.delta_min - 0.375 / 18.0).abs() < 1e-15);
    let c3 = DiffusionModel::mu3().constants();
    assert!((c3.lipschitz - 84.8088).abs() < 1e-10);
    let cc = DiffusionModel::constant(2.5).unwrap().constants();
    assert!((cc.delta_max_admissible - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn second_derivative_of_psi_is_half_mu_prime() {
    for model in models() {
        for s in [0.1, 0.7, 1.3, 3.0, 9.0] {
            let h = 1e-4;
            let fd = (model.psi(s + h) - 2.0 * model.psi(s) + model.psi(s - h)) / (h * h);
            let exact = 0.5 * model.mu_prime(s).unwrap();
            assert!((fd - exact).abs() < 1e-4 * (1.0 + exact.abs()), "{} at {s}: {fd} vs {exact}", model.name());
        }
    }
}
