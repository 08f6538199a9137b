//! Uniformly refined triangulations of the L-shaped domain
//! `(-1,1)^2 \ ([0,1] x [-1,0])`.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use crate::error::{KacanovError, Result};
use crate::fem::{FeFunction, MeshTag};

/// Refinement levels above this are rejected (level 12 has ~100M triangles).
pub const MAX_LEVEL: u32 = 12;

#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    /// `free_dof[v]` is the unknown index of interior vertex `v`.
    free_dof: Vec<Option<usize>>,
    n_free: usize,
    level: u32,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriangleMesh {
    /// Base mesh of three unit squares, two triangles each, refined `level` times.
    pub fn build_lshape(level: u32) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(KacanovError::Config(format!(
                "refinement level {level} exceeds the maximum of {MAX_LEVEL}"
            )));
        }
        let vertices = vec![
            [-1.0, -1.0],
            [0.0, -1.0],
            [-1.0, 0.0],
            [0.0, 0.0],
            [1.0, 0.0],
            [-1.0, 1.0],
            [0.0, 1.0],
            [1.0, 1.0],
        ];
        let triangles = vec![
            // [-1,0] x [-1,0]
            [0, 1, 3],
            [0, 3, 2],
            // [-1,0] x [0,1]
            [2, 3, 6],
            [2, 6, 5],
            // [0,1] x [0,1]
            [3, 4, 7],
            [3, 7, 6],
        ];
        let boundary_edges: HashSet<(usize, usize)> =
            [(0, 1), (1, 3), (3, 4), (4, 7), (7, 6), (6, 5), (5, 2), (2, 0)]
                .into_iter()
                .map(|(a, b)| edge_key(a, b))
                .collect();

        let mut vertices = vertices;
        let mut triangles = triangles;
        let mut boundary_edges = boundary_edges;
        for _ in 0..level {
            (vertices, triangles, boundary_edges) = refine(vertices, &triangles, &boundary_edges);
        }

        let mut boundary = vec![false; vertices.len()];
        for &(a, b) in &boundary_edges {
            boundary[a] = true;
            boundary[b] = true;
        }
        let mut free_dof = vec![None; vertices.len()];
        let mut n_free = 0;
        for (v, slot) in free_dof.iter_mut().enumerate() {
            if !boundary[v] {
                *slot = Some(n_free);
                n_free += 1;
            }
        }
        Ok(TriangleMesh { vertices, triangles, boundary, free_dof, n_free, level })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn free_dof(&self, v: usize) -> Option<usize> {
        self.free_dof[v]
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Signed area of triangle `t` (positive for counterclockwise orientation).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Free-DOF values of the nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free];
        for (v, p) in self.vertices.iter().enumerate() {
            if let Some(i) = self.free_dof[v] {
                out[i] = f(p[0], p[1]);
            }
        }
        out
    }

    /// Expands free-DOF values to one value per vertex, zero on the boundary.
    pub fn expand(&self, free_values: &[f64]) -> Vec<f64> {
        self.free_dof.iter().map(|d| d.map_or(0.0, |i| free_values[i])).collect()
    }

    /// Plain-text export: `nv nt`, then `x y flag` per vertex, then `i j k` per triangle.
    pub fn write_text(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.vertices.len(), self.triangles.len())?;
        for (p, &b) in self.vertices.iter().zip(&self.boundary) {
            writeln!(out, "{:e} {:e} {}", p[0], p[1], u8::from(b))?;
        }
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

/// Zeroes the boundary entries of a per-vertex vector, yielding a function with zero trace.
pub fn boundary_project(mesh: &TriangleMesh, nodal_values: &[f64]) -> Result<FeFunction> {
    if nodal_values.len() != mesh.n_vertices() {
        return Err(KacanovError::Argument(format!(
            "expected {} nodal values, got {}",
            mesh.n_vertices(),
            nodal_values.len()
        )));
    }
    let mut free = vec![0.0; mesh.n_free()];
    for (v, &x) in nodal_values.iter().enumerate() {
        if let Some(i) = mesh.free_dof(v) {
            free[i] = x;
        }
    }
    FeFunction::from_values(MeshTag::of(mesh), free)
}

type Refined = (Vec<[f64; 2]>, Vec<[usize; 3]>, HashSet<(usize, usize)>);

/// One round of red refinement. Each triangle is split into four through its
/// edge midpoints; boundary edges pass their flag on to both halves.
fn refine(
    mut vertices: Vec<[f64; 2]>,
    triangles: &[[usize; 3]],
    boundary_edges: &HashSet<(usize, usize)>,
) -> Refined {
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
        *midpoints.entry(edge_key(a, b)).or_insert_with(|| {
            let (pa, pb) = (vertices[a], vertices[b]);
            vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            vertices.len() - 1
        })
    };

    let mut refined = Vec::with_capacity(triangles.len() * 4);
    for &[a, b, c] in triangles {
        let ab = midpoint(a, b, &mut vertices);
        let bc = midpoint(b, c, &mut vertices);
        let ca = midpoint(c, a, &mut vertices);
        refined.push([a, ab, ca]);
        refined.push([ab, b, bc]);
        refined.push([ca, bc, c]);
        refined.push([ab, bc, ca]);
    }

    let mut new_boundary = HashSet::with_capacity(boundary_edges.len() * 2);
    for &(a, b) in boundary_edges {
        let m = midpoint(a, b, &mut vertices);
        new_boundary.insert(edge_key(a, m));
        new_boundary.insert(edge_key(m, b));
    }
    (vertices, refined, new_boundary)
}
