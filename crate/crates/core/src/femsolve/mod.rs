//! Mixed Q2/Q1 finite elements for the incompressible Neo-Hookean block.
//!
//! Total-Lagrangian weak form with unknowns (u1, u2, p): the block is
//! clamped in X1 along the left edge, pinned in X2 at the origin and pulled
//! by a uniform traction `(P0, 0)` on the right edge.

mod assembly;
mod band;
mod element;
mod mesh;
mod newton;

use alloc::vec;
use alloc::vec::Vec;

pub use assembly::{Assembled, Discretization};
pub use band::BandMatrix;
pub use element::{quadrature_table, QuadPoint, GAUSS3};
pub use mesh::StructuredMesh;
pub use newton::{newton_solve, ConvergenceReport, FemSolution, NewtonSettings, StepReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FemError {
    #[error("mesh error: {0}")]
    Mesh(&'static str),
    #[error("invalid settings: {0}")]
    Settings(&'static str),
    #[error("state has {got} entries, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("det F = {det:e} at a quadrature point of element {element}")]
    SingularDeformation { element: usize, det: f64 },
    #[error("zero pivot in column {pivot} of the tangent")]
    SingularMatrix { pivot: usize },
    #[error("point ({x1}, {x2}) lies outside the mesh")]
    OutsideMesh { x1: f64, x2: f64 },
    #[error(
        "Newton failed at load {load:.6} after {halvings} halvings \
         ({iterations} iterations, residual {residual:e}, last error: {cause})"
    )]
    NotConverged {
        load: f64,
        halvings: usize,
        iterations: usize,
        residual: f64,
        cause: &'static str,
    },
}

/// Stretch of the homogeneous uniaxial solution: the root `λ ≥ 1` of
/// `μλ⁴ − P0λ³ − μ = 0`, by bisection.
pub fn analytic_uniaxial(mu: f64, p0: f64) -> f64 {
    assert!(mu > 0.0 && p0 >= 0.0, "need mu > 0 and P0 >= 0");
    let g = |l: f64| mu * l * l * l * l - p0 * l * l * l - mu;
    let (mut lo, mut hi) = (1.0, 2.0 + 2.0 * p0 / mu);
    if g(lo) >= 0.0 {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Nodal vector of the homogeneous state `u1 = (λ−1)X1`, `u2 = (1/λ−1)X2`,
/// `p = μ/λ²` (stored as the excess `p − μ`).
pub fn uniaxial_state(mesh: &StructuredMesh, lambda: f64, mu: f64) -> Vec<f64> {
    let mut s = vec![0.0; mesh.dof_count()];
    let nd = mesh.disp_nodes_per_side();
    for j in 0..nd {
        for i in 0..nd {
            let x = mesh.disp_node_coords(mesh.disp_node(i, j));
            s[mesh.u_dof(i, j, 0)] = (lambda - 1.0) * x.x1;
            s[mesh.u_dof(i, j, 1)] = (1.0 / lambda - 1.0) * x.x2;
        }
    }
    let np = mesh.pressure_nodes_per_side();
    for j in 0..np {
        for i in 0..np {
            s[mesh.p_dof(i, j)] = mu / (lambda * lambda) - mu;
        }
    }
    s
}
