//! Symmetric positive definite solvers for the linearised problems
//! `A(u) rho = F(u)` and for the Riesz map of the `||grad .||` inner product.

use std::collections::VecDeque;

use crate::error::{KacanovError, Result};
use crate::fem::{DualVector, FeFunction, FeSpace, SparseSpd};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Envelope Cholesky factorisation after reverse Cuthill-McKee reordering.
    Direct,
    /// Conjugate gradients with Jacobi preconditioning.
    ConjugateGradient,
}

impl SolveMethod {
    pub fn id(self) -> &'static str {
        match self {
            SolveMethod::Direct => "direct",
            SolveMethod::ConjugateGradient => "cg",
        }
    }
}

impl std::str::FromStr for SolveMethod {
    type Err = KacanovError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(SolveMethod::Direct),
            "cg" | "conjugate_gradient" => Ok(SolveMethod::ConjugateGradient),
            other => Err(KacanovError::Config(format!("unknown solver `{other}` (expected cg or direct)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    pub method: SolveMethod,
    /// Relative residual target for CG.
    pub rel_tolerance: f64,
    /// CG iteration cap; `None` means ten times the system size.
    pub max_iterations: Option<usize>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { method: SolveMethod::ConjugateGradient, rel_tolerance: 1e-12, max_iterations: None }
    }
}

impl SolveConfig {
    pub fn direct() -> Self {
        SolveConfig { method: SolveMethod::Direct, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tolerance > 0.0 && self.rel_tolerance < 1.0) {
            return Err(KacanovError::Config(format!(
                "solver tolerance must lie in (0, 1), got {}",
                self.rel_tolerance
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(KacanovError::Config("solver iteration cap must be at least 1".into()));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = rhs` for a symmetric positive definite `A`.
pub fn solve_spd(a: &SparseSpd, rhs: &DualVector, cfg: &SolveConfig) -> Result<FeFunction> {
    cfg.validate()?;
    let x = match cfg.method {
        SolveMethod::ConjugateGradient => {
            let max_it = cfg.max_iterations.unwrap_or(10 * a.dim().max(1));
            conjugate_gradient(a, rhs.values(), cfg.rel_tolerance, max_it)?
        }
        SolveMethod::Direct => CholeskyFactor::new(a)?.solve(rhs.values()),
    };
    if cfg!(debug_assertions) {
        let r: Vec<f64> = a.matvec(&x).iter().zip(rhs.values()).map(|(ax, b)| ax - b).collect();
        let bound = match cfg.method {
            SolveMethod::ConjugateGradient => cfg.rel_tolerance,
            SolveMethod::Direct => 1e-9,
        };
        debug_assert!(
            norm(&r) <= bound * norm(rhs.values()) * (1.0 + 1e-6),
            "linear solve residual {} exceeds bound",
            norm(&r)
        );
    }
    FeFunction::from_values(rhs.tag(), x)
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
///
/// Stops once `||A x - b|| <= tol ||b||`. A non-positive curvature `p^T A p`
/// reports the matrix as indefinite.
pub fn conjugate_gradient(a: &SparseSpd, b: &[f64], tol: f64, max_iterations: usize) -> Result<Vec<f64>> {
    let n = a.dim();
    let mut x = vec![0.0; n];
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let target = tol * b_norm;

    for it in 0..max_iterations {
        a.matvec_into(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if curvature <= 0.0 {
            return Err(KacanovError::Indefinite { curvature });
        }
        let step = rz / curvature;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let mut r_norm = norm(&r);
        if r_norm <= target {
            // the recursive residual drifts from b - Ax; confirm before returning
            let ax = a.matvec(&x);
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
            r_norm = norm(&r);
            if r_norm <= target {
                return Ok(x);
            }
            for i in 0..n {
                p[i] = 0.0;
            }
            rz = 1.0;
        }
        if it + 1 == max_iterations {
            return Err(KacanovError::NotConverged { iterations: max_iterations, residual: r_norm / b_norm });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(KacanovError::NotConverged { iterations: max_iterations, residual: norm(&r) / b_norm })
}

/// Reverse Cuthill-McKee ordering; `perm[new] = old`.
fn reverse_cuthill_mckee(a: &SparseSpd) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_last = |start: usize, visited: &[bool]| -> usize {
        let mut seen = visited.to_vec();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut last = start;
        while let Some(v) = queue.pop_front() {
            last = v;
            for &w in a.row(v).0 {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        last
    };

    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("unvisited vertex");
        // two sweeps towards a pseudo-peripheral start
        let start = bfs_last(bfs_last(seed, &visited), &visited);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = a.row(v).0.iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// `A = L L^T` stored row-wise over the envelope of the reordered matrix.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    perm: Vec<usize>,
    /// First stored column of each row.
    first: Vec<usize>,
    /// Offset of row `i`'s first stored entry in `values`.
    offset: Vec<usize>,
    values: Vec<f64>,
}

impl CholeskyFactor {
    pub fn new(a: &SparseSpd) -> Result<Self> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inverse = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new_i, &old_i) in perm.iter().enumerate() {
            for &old_j in a.row(old_i).0 {
                let new_j = inverse[old_j];
                if new_j < first[new_i] {
                    first[new_i] = new_j;
                }
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + (i - first[i] + 1));
        }
        let mut values = vec![0.0; offset[n]];
        for (new_i, &old_i) in perm.iter().enumerate() {
            let (cols, vals) = a.row(old_i);
            for (&old_j, &v) in cols.iter().zip(vals) {
                let new_j = inverse[old_j];
                if new_j <= new_i {
                    values[offset[new_i] + new_j - first[new_i]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = values[offset[i] + j - fi];
                let row_i = &values[offset[i] + k0 - fi..offset[i] + j - fi];
                let row_j = &values[offset[j] + k0 - fj..offset[j] + j - fj];
                s -= dot(row_i, row_j);
                let ljj = values[offset[j] + j - fj];
                values[offset[i] + j - fi] = s / ljj;
            }
            let row_i = &values[offset[i]..offset[i] + i - fi];
            let d = values[offset[i] + i - fi] - dot(row_i, row_i);
            if d <= 0.0 {
                return Err(KacanovError::Indefinite { curvature: d });
            }
            values[offset[i] + i - fi] = d.sqrt();
        }
        Ok(CholeskyFactor { perm, first, offset, values })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            let s = y[i] - dot(&row[..i - fi], &y[fi..i]);
            y[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (k, l) in (fi..i).zip(row) {
                y[k] -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Riesz map of the inner product `(grad v, grad w)`: lifts a functional
/// `F` to the function `r` with `A_Lap r = F`.
#[derive(Debug, Clone)]
pub struct RieszMap {
    factor: CholeskyFactor,
}

impl RieszMap {
    pub fn new(space: &FeSpace) -> Result<Self> {
        Ok(RieszMap { factor: CholeskyFactor::new(&space.laplacian())? })
    }

    pub fn lift(&self, f: &DualVector) -> FeFunction {
        FeFunction::from_values(f.tag(), self.factor.solve(f.values())).expect("matching dimension")
    }

    /// Dual norm `||F||_{X*} = sqrt(F^T A_Lap^{-1} F)`.
    pub fn dual_norm(&self, f: &DualVector) -> f64 {
        let r = self.lift(f);
        f.apply(&r).max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::ManufacturedSolution;
    use crate::mesh::TriangleMesh;
    use crate::DiffusionModel;

    #[test]
    fn zero_rhs_gives_zero() {
        let space = FeSpace::new(TriangleMesh::build_lshape(2).unwrap());
        let a = space.laplacian();
        let rhs = DualVector::from_values(space.tag(), vec![0.0; space.n_free()]).unwrap();
        for cfg in [SolveConfig::default(), SolveConfig::direct()] {
            let x = solve_spd(&a, &rhs, &cfg).unwrap();
            assert!(x.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn recovers_known_solution() {
        let space = FeSpace::new(TriangleMesh::build_lshape(4).unwrap());
        let a = space.laplacian();
        let x0 = space.interpolate(|x, y| (x + 2.0 * y).sin());
        let rhs = DualVector::from_values(space.tag(), a.matvec(x0.values())).unwrap();
        for cfg in [SolveConfig::default(), SolveConfig::direct()] {
            let x = solve_spd(&a, &rhs, &cfg).unwrap();
            let err = x.values().iter().zip(x0.values()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "{cfg:?}: {err}");
        }
    }

    #[test]
    fn indefinite_matrix_is_detected() {
        let a = SparseSpd::from_dense(2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(CholeskyFactor::new(&a), Err(KacanovError::Indefinite { .. })));
        let neg = SparseSpd::from_dense(2, &[-1.0, 0.0, 0.0, -2.0]).unwrap();
        assert!(matches!(conjugate_gradient(&neg, &[1.0, 1.0], 1e-12, 10), Err(KacanovError::Indefinite { .. })));
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let space = FeSpace::new(TriangleMesh::build_lshape(4).unwrap());
        let a = space.laplacian();
        let b = vec![1.0; a.dim()];
        match conjugate_gradient(&a, &b, 1e-12, 3) {
            Err(KacanovError::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dual_norm_of_riesz_image() {
        let space = FeSpace::new(TriangleMesh::build_lshape(3).unwrap());
        let riesz = RieszMap::new(&space).unwrap();
        let b = space.assemble_load(&ManufacturedSolution::sine(), &DiffusionModel::mu1());
        let r = riesz.lift(&b);
        assert!((riesz.dual_norm(&b) - space.h1_seminorm(&r)).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let bad = SolveConfig { rel_tolerance: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolveConfig { max_iterations: Some(0), ..Default::default() };
        assert!(bad.validate().is_err());
        assert_eq!("direct".parse::<SolveMethod>().unwrap(), SolveMethod::Direct);
        assert!("lu".parse::<SolveMethod>().is_err());
    }
}
