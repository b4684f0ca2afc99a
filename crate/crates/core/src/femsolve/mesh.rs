use alloc::vec::Vec;

use super::FemError;
use crate::mechanics::Point2;

/// Uniform Q2/Q1 mesh of the unit square.
///
/// Displacement nodes form a `(2n+1)^2` grid, pressure nodes an `(n+1)^2`
/// grid. Unknowns are numbered row by row along X2 so the global matrix is
/// banded: each displacement row contributes two dofs per node, and every
/// even displacement row is followed by the pressure dofs lying on it.
#[derive(Clone, Debug)]
pub struct StructuredMesh {
    n: usize,
    row_start: Vec<usize>,
    dofs: usize,
}

impl StructuredMesh {
    pub fn new(elements_per_side: usize) -> Result<Self, FemError> {
        if elements_per_side == 0 {
            return Err(FemError::Mesh("need at least one element per side"));
        }
        let n = elements_per_side;
        let nd = 2 * n + 1;
        let mut row_start = Vec::with_capacity(nd + 1);
        let mut next = 0;
        for j in 0..nd {
            row_start.push(next);
            next += 2 * nd;
            if j % 2 == 0 {
                next += n + 1;
            }
        }
        row_start.push(next);
        Ok(StructuredMesh {
            n,
            row_start,
            dofs: next,
        })
    }

    pub fn elements_per_side(&self) -> usize {
        self.n
    }

    pub fn element_size(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn disp_nodes_per_side(&self) -> usize {
        2 * self.n + 1
    }

    pub fn pressure_nodes_per_side(&self) -> usize {
        self.n + 1
    }

    pub fn disp_node_count(&self) -> usize {
        self.disp_nodes_per_side().pow(2)
    }

    pub fn pressure_node_count(&self) -> usize {
        self.pressure_nodes_per_side().pow(2)
    }

    pub fn dof_count(&self) -> usize {
        self.dofs
    }

    /// Displacement node at grid position `(i, j)`, both in `0..=2n`.
    pub fn disp_node(&self, i: usize, j: usize) -> usize {
        j * self.disp_nodes_per_side() + i
    }

    pub fn pressure_node(&self, i: usize, j: usize) -> usize {
        j * self.pressure_nodes_per_side() + i
    }

    pub fn disp_node_coords(&self, node: usize) -> Point2 {
        let nd = self.disp_nodes_per_side();
        let (i, j) = (node % nd, node / nd);
        let d = (nd - 1) as f64;
        Point2::new(i as f64 / d, j as f64 / d)
    }

    pub fn pressure_node_coords(&self, node: usize) -> Point2 {
        let np = self.pressure_nodes_per_side();
        let (i, j) = (node % np, node / np);
        Point2::new(i as f64 / self.n as f64, j as f64 / self.n as f64)
    }

    /// Global dof of displacement component `comp` at node `(i, j)`.
    pub fn u_dof(&self, i: usize, j: usize, comp: usize) -> usize {
        self.row_start[j] + 2 * i + comp
    }

    /// Global dof of the pressure node at `(i, j)` on the pressure grid.
    pub fn p_dof(&self, i: usize, j: usize) -> usize {
        self.row_start[2 * j] + 2 * self.disp_nodes_per_side() + i
    }

    /// Displacement dofs of element `(ex, ey)`: local node `a + 3b` has
    /// components at `2(a + 3b)` and `2(a + 3b) + 1`.
    pub fn element_u_dofs(&self, ex: usize, ey: usize) -> [usize; 18] {
        let mut out = [0; 18];
        for b in 0..3 {
            for a in 0..3 {
                let l = a + 3 * b;
                out[2 * l] = self.u_dof(2 * ex + a, 2 * ey + b, 0);
                out[2 * l + 1] = self.u_dof(2 * ex + a, 2 * ey + b, 1);
            }
        }
        out
    }

    /// Pressure dofs of element `(ex, ey)`, local node `a + 2b`.
    pub fn element_p_dofs(&self, ex: usize, ey: usize) -> [usize; 4] {
        let mut out = [0; 4];
        for b in 0..2 {
            for a in 0..2 {
                out[a + 2 * b] = self.p_dof(ex + a, ey + b);
            }
        }
        out
    }

    /// Half-bandwidth of the assembled system.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for ey in 0..self.n {
            for ex in 0..self.n {
                let u = self.element_u_dofs(ex, ey);
                let p = self.element_p_dofs(ex, ey);
                let (lo, hi) = u
                    .iter()
                    .chain(p.iter())
                    .fold((usize::MAX, 0), |(lo, hi), &d| (lo.min(d), hi.max(d)));
                bw = bw.max(hi - lo);
            }
        }
        bw
    }

    /// Element containing `x` and the local coordinates in `[-1, 1]^2`.
    pub fn locate(&self, x: Point2) -> Result<(usize, usize, f64, f64), FemError> {
        const TOL: f64 = 1e-12;
        if !(x.x1 >= -TOL && x.x1 <= 1.0 + TOL && x.x2 >= -TOL && x.x2 <= 1.0 + TOL) {
            return Err(FemError::OutsideMesh {
                x1: x.x1,
                x2: x.x2,
            });
        }
        let n = self.n as f64;
        let locate1 = |c: f64| {
            let s = (c.clamp(0.0, 1.0)) * n;
            let e = (libm::floor(s) as usize).min(self.n - 1);
            (e, 2.0 * (s - e as f64) - 1.0)
        };
        let (ex, xi) = locate1(x.x1);
        let (ey, eta) = locate1(x.x2);
        Ok((ex, ey, xi, eta))
    }
}
