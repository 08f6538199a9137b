mod common;

use kacanov::fem::SparseSpd;
use kacanov::linsolve::{conjugate_gradient, solve_spd, CholeskyFactor, RieszMap, SolveConfig};
use kacanov::{DiffusionModel, DualVector, FeFunction, KacanovError};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn dense_solve(n: usize, dense: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = DMatrix::from_row_slice(n, n, dense);
    let chol = m.cholesky().expect("SPD");
    chol.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn random_dense_spd_matches_nalgebra_cholesky() {
    let n = 50;
    let mut rng = common::rng(21);
    let g: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut dense = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            dense[i * n + j] = (0..n).map(|k| g[k * n + i] * g[k * n + j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
        }
    }
    let a = SparseSpd::from_dense(n, &dense).unwrap();
    let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let oracle = dense_solve(n, &dense, &rhs);
    let direct = CholeskyFactor::new(&a).unwrap().solve(&rhs);
    assert!(max_abs_diff(&direct, &oracle) < 1e-9);
    let cg = conjugate_gradient(&a, &rhs, 1e-14, 10_000).unwrap();
    assert!(max_abs_diff(&cg, &oracle) < 1e-9);
}

#[test]
fn assembled_stiffness_matches_nalgebra_cholesky() {
    let s = common::space(3);
    let mut rng = common::rng(22);
    let u = common::random_function(&s, &mut rng, 1.0);
    let a = s.assemble_stiffness(&DiffusionModel::mu3(), &u);
    let n = a.dim();
    let mut dense = vec![0.0; n * n];
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            dense[i * n + j] = v;
        }
    }
    let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let oracle = dense_solve(n, &dense, &rhs);
    let b = DualVector::from_values(s.tag(), rhs).unwrap();
    for cfg in [SolveConfig::default(), SolveConfig::direct()] {
        let x = solve_spd(&a, &b, &cfg).unwrap();
        assert!(max_abs_diff(x.values(), &oracle) < 1e-9, "{:?}", cfg.method);
    }
}

#[test]
fn laplacian_recovers_known_solution() {
    let s = common::space(4);
    let lap = s.laplacian();
    let x0 = common::random_function(&s, &mut common::rng(23), 1.0);
    let b = DualVector::from_values(s.tag(), lap.matvec(x0.values())).unwrap();
    for cfg in [SolveConfig { rel_tolerance: 1e-14, ..Default::default() }, SolveConfig::direct()] {
        let x = solve_spd(&lap, &b, &cfg).unwrap();
        assert!(max_abs_diff(x.values(), x0.values()) < 1e-10);
    }
    let zero = solve_spd(&lap, &DualVector::from_values(s.tag(), vec![0.0; s.n_free()]).unwrap(), &SolveConfig::default());
    assert!(zero.unwrap().values().iter().all(|&v| v == 0.0));
}

#[test]
fn riesz_lift_inverts_the_laplacian() {
    let s = common::space(3);
    let riesz = RieszMap::new(&s).unwrap();
    let v = common::random_function(&s, &mut common::rng(24), 1.0);
    let f = DualVector::from_values(s.tag(), s.laplacian().matvec(v.values())).unwrap();
    let lifted: FeFunction = riesz.lift(&f);
    assert!(max_abs_diff(lifted.values(), v.values()) < 1e-10);
    assert!((riesz.dual_norm(&f) - s.h1_seminorm(&v)).abs() < 1e-10);
}

#[test]
fn cg_on_indefinite_matrix_fails() {
    let a = SparseSpd::from_dense(2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
    let err = conjugate_gradient(&a, &[1.0, -1.0], 1e-12, 100).unwrap_err();
    assert!(matches!(err, KacanovError::Indefinite { .. }));
    assert!(matches!(CholeskyFactor::new(&a), Err(KacanovError::Indefinite { .. })));
}

fn tridiagonal(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        // diagonal dominance keeps the matrix SPD
        d[i * n + i] = diag[i] + 2.0;
        if i + 1 < n {
            d[i * n + i + 1] = off[i];
            d[(i + 1) * n + i] = off[i];
        }
    }
    d
}

proptest! {
    #[test]
    fn cg_and_cholesky_agree(
        diag in prop::collection::vec(0.0f64..10.0, 2..40),
        seed in any::<u64>(),
    ) {
        let n = diag.len();
        let mut rng = common::rng(seed);
        let off: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dense = tridiagonal(&diag, &off);
        let a = SparseSpd::from_dense(n, &dense).unwrap();
        let direct = CholeskyFactor::new(&a).unwrap().solve(&rhs);
        let cg = conjugate_gradient(&a, &rhs, 1e-14, 10 * n).unwrap();
        prop_assert!(max_abs_diff(&direct, &cg) < 1e-10);
        prop_assert!(max_abs_diff(&direct, &dense_solve(n, &dense, &rhs)) < 1e-10);
    }
}
