//! Damped Kačanov iteration for quasilinear diffusion problems
//!
//! ```text
//! -div( mu(|grad u|^2) grad u ) = f   in the L-shaped domain,   u = 0 on the boundary
//! ```
//!
//! discretised with conforming P1 finite elements. The iteration freezes the
//! diffusion coefficient at the current iterate, solves the resulting linear
//! problem for a correction `rho`, and moves by `u <- u - delta * rho`. The step
//! size `delta` is either fixed or chosen adaptively so that the energy
//! `H(u) = int psi(|grad u|^2) - <b, u>` decays by a guaranteed amount.

pub mod diffusion;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod kacanov;
pub mod linsolve;
pub mod mesh;
pub mod plot;

pub use diffusion::{AnalysisConstants, DiffusionModel};
pub use error::{KacanovError, Result};
pub use fem::{DualVector, FeFunction, FeSpace, ManufacturedSolution, SparseSpd};
pub use kacanov::{DampingStrategy, IterationTrace, Problem, StepRecord, StepRule, StopCriteria};
pub use linsolve::{SolveConfig, SolveMethod};
pub use mesh::TriangleMesh;
