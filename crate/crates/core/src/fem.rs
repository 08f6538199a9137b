//! Conforming P1 finite elements on a [`TriangleMesh`] with homogeneous
//! Dirichlet data.
//!
//! All gradient-dependent integrands are constant per triangle, so the
//! stiffness matrix, the energy and the residual are integrated exactly with
//! the centroid rule. Only the manufactured load uses a degree-4 rule.

use rayon::prelude::*;

use crate::diffusion::DiffusionModel;
use crate::error::{KacanovError, Result};
use crate::mesh::TriangleMesh;

/// Identifies the discrete space a coefficient vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeshTag {
    pub level: u32,
    pub n_free: usize,
}

impl MeshTag {
    pub fn of(mesh: &TriangleMesh) -> Self {
        MeshTag { level: mesh.level(), n_free: mesh.n_free() }
    }
}

/// A P1 function with zero trace, stored by its values at the interior vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    tag: MeshTag,
    values: Vec<f64>,
}

/// A functional on the P1 space, stored by its action on the nodal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVector {
    tag: MeshTag,
    values: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(tag: MeshTag) -> Self {
        FeFunction { tag, values: vec![0.0; tag.n_free] }
    }

    pub fn from_values(tag: MeshTag, values: Vec<f64>) -> Result<Self> {
        if values.len() != tag.n_free {
            return Err(KacanovError::Argument(format!(
                "expected {} free values, got {}",
                tag.n_free,
                values.len()
            )));
        }
        Ok(FeFunction { tag, values })
    }

    pub fn tag(&self) -> MeshTag {
        self.tag
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `self - scale * other`.
    pub fn sub_scaled(&self, scale: f64, other: &FeFunction) -> FeFunction {
        assert_eq!(self.tag, other.tag, "functions live on different meshes");
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - scale * b).collect();
        FeFunction { tag: self.tag, values }
    }

    pub fn sub(&self, other: &FeFunction) -> FeFunction {
        self.sub_scaled(1.0, other)
    }

    pub fn scaled(&self, scale: f64) -> FeFunction {
        FeFunction { tag: self.tag, values: self.values.iter().map(|v| scale * v).collect() }
    }
}

impl DualVector {
    pub fn from_values(tag: MeshTag, values: Vec<f64>) -> Result<Self> {
        if values.len() != tag.n_free {
            return Err(KacanovError::Argument(format!(
                "expected {} functional values, got {}",
                tag.n_free,
                values.len()
            )));
        }
        Ok(DualVector { tag, values })
    }

    pub fn tag(&self) -> MeshTag {
        self.tag
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Duality pairing `<self, v>`.
    pub fn apply(&self, v: &FeFunction) -> f64 {
        assert_eq!(self.tag, v.tag, "functional and function live on different meshes");
        self.values.iter().zip(&v.values).map(|(a, b)| a * b).sum()
    }

    pub fn sub(&self, other: &DualVector) -> DualVector {
        assert_eq!(self.tag, other.tag);
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        DualVector { tag: self.tag, values }
    }

    pub fn norm_l2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Symmetric sparse matrix over the free DOFs in compressed row storage.
/// Both triangles are stored.
#[derive(Debug, Clone)]
pub struct SparseSpd {
    tag: MeshTag,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSpd {
    /// Builds a matrix from a dense row-major array, dropping exact zeros.
    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n * n {
            return Err(KacanovError::Argument(format!("dense matrix of size {} is not {n}x{n}", dense.len())));
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let a = dense[i * n + j];
                if a != 0.0 || i == j {
                    col_idx.push(j);
                    values.push(a);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseSpd { tag: MeshTag { level: 0, n_free: n }, row_ptr, col_idx, values })
    }

    pub fn tag(&self) -> MeshTag {
        self.tag
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`. Rows are processed in parallel; each row sums in column order.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().with_min_len(512).enumerate().for_each(|(i, yi)| {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &a)| a * x[j]).sum();
        });
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.matvec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim() {
            let (cols, vals) = self.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// A smooth exact solution with homogeneous boundary values, used to build the load.
#[derive(Clone, Copy)]
pub struct ManufacturedSolution {
    pub value: fn(f64, f64) -> f64,
    pub gradient: fn(f64, f64) -> [f64; 2],
}

impl ManufacturedSolution {
    /// `u(x, y) = sin(pi x) sin(pi y)`.
    pub fn sine() -> Self {
        use std::f64::consts::PI;
        ManufacturedSolution {
            value: |x, y| (PI * x).sin() * (PI * y).sin(),
            gradient: |x, y| {
                [PI * (PI * x).cos() * (PI * y).sin(), PI * (PI * x).sin() * (PI * y).cos()]
            },
        }
    }
}

impl std::fmt::Debug for ManufacturedSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ManufacturedSolution")
    }
}

/// Symmetric 6-point rule of degree 4 on triangles: (barycentric point, weight).
const DUNAVANT4: [([f64; 3], f64); 6] = {
    const A: f64 = 0.445_948_490_915_965;
    const B: f64 = 0.091_576_213_509_771;
    const WA: f64 = 0.223_381_589_678_011;
    const WB: f64 = 0.109_951_743_655_322;
    [
        ([A, A, 1.0 - 2.0 * A], WA),
        ([A, 1.0 - 2.0 * A, A], WA),
        ([1.0 - 2.0 * A, A, A], WA),
        ([B, B, 1.0 - 2.0 * B], WB),
        ([B, 1.0 - 2.0 * B, B], WB),
        ([1.0 - 2.0 * B, B, B], WB),
    ]
};

#[derive(Debug, Clone)]
struct Element {
    area: f64,
    /// Gradients of the three barycentric coordinates.
    grads: [[f64; 2]; 3],
    dofs: [Option<usize>; 3],
    /// Position of the local entry (a, b) in the CSR value array.
    slots: [[usize; 3]; 3],
}

const NO_SLOT: usize = usize::MAX;

#[inline]
fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// The P1 space on a mesh: per-element geometry plus the sparsity pattern of
/// the stiffness matrix, computed once.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: TriangleMesh,
    elements: Vec<Element>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl FeSpace {
    pub fn new(mesh: TriangleMesh) -> Self {
        let n = mesh.n_free();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for tri in mesh.triangles() {
            let dofs: Vec<usize> = tri.iter().filter_map(|&v| mesh.free_dof(v)).collect();
            for &i in &dofs {
                rows[i].extend(dofs.iter().copied());
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }

        let elements = mesh
            .triangles()
            .iter()
            .enumerate()
            .map(|(t, tri)| {
                let p = tri.map(|v| mesh.vertices()[v]);
                let area = mesh.signed_area(t);
                let inv = 1.0 / (2.0 * area);
                let grads = [
                    [(p[1][1] - p[2][1]) * inv, (p[2][0] - p[1][0]) * inv],
                    [(p[2][1] - p[0][1]) * inv, (p[0][0] - p[2][0]) * inv],
                    [(p[0][1] - p[1][1]) * inv, (p[1][0] - p[0][0]) * inv],
                ];
                let dofs = tri.map(|v| mesh.free_dof(v));
                let mut slots = [[NO_SLOT; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        if let (Some(i), Some(j)) = (dofs[a], dofs[b]) {
                            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
                            slots[a][b] = row_ptr[i] + cols.binary_search(&j).expect("pattern entry");
                        }
                    }
                }
                Element { area, grads, dofs, slots }
            })
            .collect();
        FeSpace { mesh, elements, row_ptr, col_idx }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn tag(&self) -> MeshTag {
        MeshTag::of(&self.mesh)
    }

    pub fn n_free(&self) -> usize {
        self.mesh.n_free()
    }

    pub fn zero(&self) -> FeFunction {
        FeFunction::zeros(self.tag())
    }

    /// Nodal interpolant of `f` (boundary values discarded).
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> FeFunction {
        FeFunction { tag: self.tag(), values: self.mesh.interpolate(f) }
    }

    /// Restricts one value per vertex to the free DOFs, i.e. forces zero boundary values.
    pub fn boundary_project(&self, nodal_values: &[f64]) -> Result<FeFunction> {
        crate::mesh::boundary_project(&self.mesh, nodal_values)
    }

    fn check(&self, u: &FeFunction) {
        assert_eq!(u.tag, self.tag(), "function is bound to a different mesh");
    }

    #[inline]
    fn local_gradient(&self, e: &Element, values: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (grad, dof) in e.grads.iter().zip(e.dofs) {
            if let Some(i) = dof {
                g[0] += values[i] * grad[0];
                g[1] += values[i] * grad[1];
            }
        }
        g
    }

    /// Constant gradient of `u` on triangle `t`.
    pub fn element_gradient(&self, t: usize, u: &FeFunction) -> [f64; 2] {
        self.check(u);
        self.local_gradient(&self.elements[t], &u.values)
    }

    /// Gradients of `u` on every triangle.
    pub fn gradients(&self, u: &FeFunction) -> Vec<[f64; 2]> {
        self.check(u);
        self.elements.par_iter().map(|e| self.local_gradient(e, &u.values)).collect()
    }

    /// Stiffness matrix with a per-triangle weight: `sum_T w_T int_T grad phi_i . grad phi_j`.
    pub fn assemble_weighted(&self, weights: &[f64]) -> SparseSpd {
        assert_eq!(weights.len(), self.elements.len());
        let mut values = vec![0.0; self.col_idx.len()];
        for (e, &w) in self.elements.iter().zip(weights) {
            for a in 0..3 {
                for b in 0..3 {
                    let slot = e.slots[a][b];
                    if slot != NO_SLOT {
                        values[slot] += w * e.area * dot2(e.grads[a], e.grads[b]);
                    }
                }
            }
        }
        SparseSpd {
            tag: self.tag(),
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values,
        }
    }

    /// Unweighted stiffness matrix, the Gram matrix of `||grad .||_{L2}`.
    pub fn laplacian(&self) -> SparseSpd {
        self.assemble_weighted(&vec![1.0; self.elements.len()])
    }

    /// Matrix of `a(u; v, w) = int mu(|grad u|^2) grad v . grad w`.
    pub fn assemble_stiffness(&self, model: &DiffusionModel, u: &FeFunction) -> SparseSpd {
        self.check(u);
        let weights: Vec<f64> = self
            .elements
            .par_iter()
            .map(|e| {
                let g = self.local_gradient(e, &u.values);
                model.mu(dot2(g, g))
            })
            .collect();
        self.assemble_weighted(&weights)
    }

    /// Adds per-element local vectors into a global vector, in element order.
    fn scatter(&self, locals: &[[f64; 3]]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free()];
        for (e, local) in self.elements.iter().zip(locals) {
            for (dof, val) in e.dofs.iter().zip(local) {
                if let Some(i) = dof {
                    out[*i] += val;
                }
            }
        }
        out
    }

    /// Load `b(v) = a(u*; u*, v)` for a manufactured solution `u*`, so that `u*`
    /// solves the continuous problem exactly.
    pub fn assemble_load(&self, exact: &ManufacturedSolution, model: &DiffusionModel) -> DualVector {
        let verts = self.mesh.vertices();
        let locals: Vec<[f64; 3]> = self
            .mesh
            .triangles()
            .par_iter()
            .zip(self.elements.par_iter())
            .map(|(tri, e)| {
                let p = tri.map(|v| verts[v]);
                let mut flux = [0.0; 2];
                for (bary, w) in DUNAVANT4 {
                    let x = bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0];
                    let y = bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1];
                    let g = (exact.gradient)(x, y);
                    let m = model.mu(dot2(g, g));
                    flux[0] += w * m * g[0];
                    flux[1] += w * m * g[1];
                }
                e.grads.map(|gr| e.area * dot2(flux, gr))
            })
            .collect();
        DualVector { tag: self.tag(), values: self.scatter(&locals) }
    }

    /// Load `int f phi_i` of a source term, with the degree-4 rule.
    pub fn assemble_source(&self, f: impl Fn(f64, f64) -> f64 + Sync) -> DualVector {
        let verts = self.mesh.vertices();
        let locals: Vec<[f64; 3]> = self
            .mesh
            .triangles()
            .par_iter()
            .zip(self.elements.par_iter())
            .map(|(tri, e)| {
                let p = tri.map(|v| verts[v]);
                let mut local = [0.0; 3];
                for (bary, w) in DUNAVANT4 {
                    let x = bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0];
                    let y = bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1];
                    let fx = f(x, y);
                    for a in 0..3 {
                        local[a] += e.area * w * fx * bary[a];
                    }
                }
                local
            })
            .collect();
        DualVector { tag: self.tag(), values: self.scatter(&locals) }
    }

    /// `G(u) = int psi(|grad u|^2)`.
    pub fn nonlinear_energy(&self, model: &DiffusionModel, u: &FeFunction) -> f64 {
        self.check(u);
        let parts: Vec<f64> = self
            .elements
            .par_iter()
            .map(|e| {
                let g = self.local_gradient(e, &u.values);
                e.area * model.psi(dot2(g, g))
            })
            .collect();
        parts.iter().sum()
    }

    /// Energy `H(u) = G(u) - <b, u>`.
    pub fn energy(&self, model: &DiffusionModel, u: &FeFunction, b: &DualVector) -> f64 {
        self.nonlinear_energy(model, u) - b.apply(u)
    }

    /// `H(u) - H(u - delta rho)` evaluated elementwise through `psi(a) - psi(b)`,
    /// which keeps full relative accuracy when the step is tiny.
    pub fn energy_decrement(
        &self,
        model: &DiffusionModel,
        u: &FeFunction,
        rho: &FeFunction,
        delta: f64,
        b: &DualVector,
    ) -> f64 {
        self.check(u);
        self.check(rho);
        let parts: Vec<f64> = self
            .elements
            .par_iter()
            .map(|e| {
                let g = self.local_gradient(e, &u.values);
                let d = self.local_gradient(e, &rho.values);
                let next = [g[0] - delta * d[0], g[1] - delta * d[1]];
                // |g|^2 - |g - delta d|^2 without cancellation
                let gap = delta * (2.0 * dot2(g, d) - delta * dot2(d, d));
                e.area * model.psi_increment(dot2(next, next), gap)
            })
            .collect();
        parts.iter().sum::<f64>() - delta * b.apply(rho)
    }

    /// `F(u) = A(u) u - b`, assembled elementwise.
    pub fn residual(&self, model: &DiffusionModel, u: &FeFunction, b: &DualVector) -> DualVector {
        self.check(u);
        let locals: Vec<[f64; 3]> = self
            .elements
            .par_iter()
            .map(|e| {
                let g = self.local_gradient(e, &u.values);
                let flux = e.area * model.mu(dot2(g, g));
                e.grads.map(|gr| flux * dot2(g, gr))
            })
            .collect();
        let mut values = self.scatter(&locals);
        for (r, bi) in values.iter_mut().zip(&b.values) {
            *r -= bi;
        }
        DualVector { tag: self.tag(), values }
    }

    /// Second derivative of the energy, `<F'(u) v, w>
    /// = int mu(|grad u|^2) grad v . grad w + 2 mu'(|grad u|^2) (grad u . grad v)(grad u . grad w)`.
    pub fn fprime_form(
        &self,
        model: &DiffusionModel,
        u: &FeFunction,
        v: &FeFunction,
        w: &FeFunction,
    ) -> Result<f64> {
        if !model.has_derivative() {
            return Err(KacanovError::Capability { model: model.name().to_string(), what: "mu'" });
        }
        self.check(u);
        self.check(v);
        self.check(w);
        let parts: Vec<f64> = self
            .elements
            .par_iter()
            .map(|e| {
                let gu = self.local_gradient(e, &u.values);
                let gv = self.local_gradient(e, &v.values);
                let gw = self.local_gradient(e, &w.values);
                let s = dot2(gu, gu);
                let dmu = model.mu_prime(s).unwrap_or(0.0);
                e.area * (model.mu(s) * dot2(gv, gw) + 2.0 * dmu * dot2(gu, gv) * dot2(gu, gw))
            })
            .collect();
        Ok(parts.iter().sum())
    }

    /// `||grad u||_{L2}`.
    pub fn h1_seminorm(&self, u: &FeFunction) -> f64 {
        self.check(u);
        let parts: Vec<f64> = self
            .elements
            .par_iter()
            .map(|e| {
                let g = self.local_gradient(e, &u.values);
                e.area * dot2(g, g)
            })
            .collect();
        parts.iter().sum::<f64>().sqrt()
    }

    /// `||grad (u - v)||_{L2}`.
    pub fn h1_distance(&self, u: &FeFunction, v: &FeFunction) -> f64 {
        self.h1_seminorm(&u.sub(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(level: u32) -> FeSpace {
        FeSpace::new(TriangleMesh::build_lshape(level).unwrap())
    }

    #[test]
    fn gradients_of_linear_functions() {
        let s = space(2);
        let zero = s.zero();
        assert_eq!(s.element_gradient(3, &zero), [0.0, 0.0]);
        // pick triangles without boundary vertices so the interpolant is exact
        let interior: Vec<usize> = (0..s.mesh().n_triangles())
            .filter(|&t| s.mesh().triangles()[t].iter().all(|&v| !s.mesh().is_boundary(v)))
            .collect();
        assert!(!interior.is_empty());
        let ux = s.interpolate(|x, _| x);
        let u23 = s.interpolate(|x, y| 2.0 * x + 3.0 * y);
        for &t in &interior {
            let g = s.element_gradient(t, &ux);
            assert!((g[0] - 1.0).abs() < 1e-13 && g[1].abs() < 1e-13);
            let g = s.element_gradient(t, &u23);
            assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_model_gives_laplacian() {
        let s = space(3);
        let u = s.interpolate(|x, y| x * y + 0.3);
        let a = s.assemble_stiffness(&DiffusionModel::constant(1.0).unwrap(), &u);
        let lap = s.laplacian();
        for i in 0..a.dim() {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                assert!((v - lap.get(i, j)).abs() < 1e-14);
            }
        }
        // interior Laplace stencil on a uniform criss-free grid: 4 on the diagonal
        assert!(lap.diagonal().iter().all(|&d| (d - 4.0).abs() < 1e-12));
    }

    #[test]
    fn stiffness_is_symmetric() {
        let s = space(3);
        let u = s.interpolate(|x, y| (3.0 * x).sin() * y);
        let a = s.assemble_stiffness(&DiffusionModel::mu3(), &u);
        assert!(a.asymmetry() < 1e-12);
    }

    #[test]
    fn energy_and_residual_at_zero() {
        let s = space(3);
        let model = DiffusionModel::mu2();
        let b = s.assemble_load(&ManufacturedSolution::sine(), &model);
        let zero = s.zero();
        assert_eq!(s.energy(&model, &zero, &b), 0.0);
        let f = s.residual(&model, &zero, &b);
        for (r, bi) in f.values().iter().zip(b.values()) {
            assert_eq!(*r, -bi);
        }
    }

    #[test]
    fn decrement_matches_energy_difference() {
        let s = space(3);
        let model = DiffusionModel::mu3();
        let b = s.assemble_load(&ManufacturedSolution::sine(), &model);
        let u = s.interpolate(|x, y| (2.0 * x).cos() * y * (1.0 - y * y));
        let rho = s.interpolate(|x, y| x * y);
        for delta in [1e-3, 0.4, 1.7] {
            let direct = s.energy(&model, &u, &b) - s.energy(&model, &u.sub_scaled(delta, &rho), &b);
            let dec = s.energy_decrement(&model, &u, &rho, delta, &b);
            assert!((direct - dec).abs() < 1e-11, "delta {delta}: {direct} vs {dec}");
        }
    }

    #[test]
    fn fprime_requires_derivative() {
        let s = space(1);
        let model = DiffusionModel::new("plain", |t| 1.0 + t, 1.0, 3.0, &[]).unwrap();
        let z = s.zero();
        assert!(matches!(
            s.fprime_form(&model, &z, &z, &z),
            Err(KacanovError::Capability { .. })
        ));
    }

    #[test]
    fn seminorm_matches_laplacian_quadratic_form() {
        let s = space(4);
        let u = s.interpolate(|x, y| x.exp() * y);
        let lap = s.laplacian();
        let q = lap.bilinear(u.values(), u.values()).sqrt();
        assert!((s.h1_seminorm(&u) - q).abs() < 1e-12);
        assert_eq!(s.h1_seminorm(&s.zero()), 0.0);
    }

    #[test]
    fn interpolated_sine_seminorm_converges() {
        // each unit square contributes pi^2 / 2
        let exact = (1.5f64).sqrt() * std::f64::consts::PI;
        let sine = ManufacturedSolution::sine();
        let errs: Vec<f64> = (2..=5)
            .map(|l| {
                let s = space(l);
                (s.h1_seminorm(&s.interpolate(|x, y| (sine.value)(x, y))) - exact).abs()
            })
            .collect();
        for w in errs.windows(2) {
            assert!(w[1] < 0.6 * w[0], "{errs:?}");
        }
        assert!(errs[3] < 1e-2, "{errs:?}");
    }
}
