use alloc::vec;
use alloc::vec::Vec;

use super::band::BandMatrix;
use super::element::{quadrature_table, quad1, GAUSS3, QuadPoint};
use super::mesh::StructuredMesh;
use super::FemError;
use crate::mechanics::{ModulusField, Point2, SINGULARITY_FLOOR};

const NU: usize = 18;
const NE: usize = 22;

/// Mesh plus everything about the problem that does not depend on the
/// current iterate: modulus samples at quadrature points, the unit load
/// vector and the constrained dofs.
#[derive(Clone, Debug)]
pub struct Discretization {
    mesh: StructuredMesh,
    table: [QuadPoint; 9],
    mu: Vec<f64>,
    unit_load: Vec<f64>,
    constrained: Vec<usize>,
    bandwidth: usize,
    mu_nodes: Vec<f64>,
}

/// Residual, and the tangent when requested.
pub struct Assembled {
    pub residual: Vec<f64>,
    pub tangent: Option<BandMatrix>,
}

impl Discretization {
    pub fn new<M: ModulusField>(mesh: StructuredMesh, modulus: &M) -> Result<Self, FemError> {
        let n = mesh.elements_per_side();
        let h = mesh.element_size();
        let table = quadrature_table(h);
        if table.iter().any(|q| !(q.dv > 0.0)) {
            return Err(FemError::Mesh("non-positive element Jacobian"));
        }
        let mut mu = Vec::with_capacity(n * n * 9);
        for ey in 0..n {
            for ex in 0..n {
                for q in &table {
                    let x = Point2::new(
                        h * (ex as f64 + 0.5 * (q.xi + 1.0)),
                        h * (ey as f64 + 0.5 * (q.eta + 1.0)),
                    );
                    mu.push(modulus.value(x));
                }
            }
        }
        // Consistent nodal forces of a unit traction on the right edge.
        let mut unit_load = vec![0.0; mesh.dof_count()];
        let nd = mesh.disp_nodes_per_side();
        for ey in 0..n {
            for &(eta, w) in &GAUSS3 {
                let (l, _) = quad1(eta);
                for (b, lb) in l.iter().enumerate() {
                    unit_load[mesh.u_dof(nd - 1, 2 * ey + b, 0)] += lb * w * 0.5 * h;
                }
            }
        }
        let mut constrained: Vec<usize> = (0..nd).map(|j| mesh.u_dof(0, j, 0)).collect();
        constrained.push(mesh.u_dof(0, 0, 1));
        let bandwidth = mesh.bandwidth();
        let np = mesh.pressure_nodes_per_side();
        let mut mu_nodes = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                mu_nodes.push(modulus.value(mesh.pressure_node_coords(mesh.pressure_node(i, j))));
            }
        }
        Ok(Discretization {
            mu_nodes,
            mesh,
            table,
            mu,
            unit_load,
            constrained,
            bandwidth,
        })
    }

    /// Undeformed, stress-free configuration: all unknowns zero.
    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.dof_count()]
    }

    /// Modulus at the pressure nodes, row-major.
    pub fn nodal_modulus(&self) -> &[f64] {
        &self.mu_nodes
    }

    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn dof_count(&self) -> usize {
        self.mesh.dof_count()
    }

    /// Dofs held fixed: u1 on the left edge, then u2 at the origin.
    pub fn constrained_dofs(&self) -> &[usize] {
        &self.constrained
    }

    /// Nodal forces of a unit right-edge traction in X1.
    pub fn unit_load(&self) -> &[f64] {
        &self.unit_load
    }

    fn gather(&self, state: &[f64], ex: usize, ey: usize) -> ([usize; NE], [f64; NE]) {
        let u = self.mesh.element_u_dofs(ex, ey);
        let p = self.mesh.element_p_dofs(ex, ey);
        let mut dofs = [0; NE];
        dofs[..NU].copy_from_slice(&u);
        dofs[NU..].copy_from_slice(&p);
        (dofs, dofs.map(|d| state[d]))
    }

    /// Element residual and (optionally) tangent; local dofs are the 18
    /// displacement components followed by the 4 pressures.
    fn element(
        &self,
        e: usize,
        local: &[f64; NE],
        re: &mut [f64; NE],
        ke: Option<&mut [[f64; NE]; NE]>,
    ) -> Result<(), FemError> {
        *re = [0.0; NE];
        let mut ke = ke;
        if let Some(k) = ke.as_deref_mut() {
            *k = [[0.0; NE]; NE];
        }
        for (q, qp) in self.table.iter().enumerate() {
            let mu = self.mu[e * 9 + q];
            let mut g = [[0.0; 2]; 2];
            for a in 0..9 {
                for i in 0..2 {
                    for jj in 0..2 {
                        g[i][jj] += local[2 * a + i] * qp.dn[a][jj];
                    }
                }
            }
            // The pressure unknowns are the excess over the modulus, so the
            // undeformed state is exactly stress-free for any field.
            let p: f64 = mu + (0..4).map(|b| local[NU + b] * qp.m[b]).sum::<f64>();
            let f = [[1.0 + g[0][0], g[0][1]], [g[1][0], 1.0 + g[1][1]]];
            let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
            if !(det > SINGULARITY_FLOOR) {
                return Err(FemError::SingularDeformation { element: e, det });
            }
            // A = F^{-T}
            let a = [
                [f[1][1] / det, -f[1][0] / det],
                [-f[0][1] / det, f[0][0] / det],
            ];
            let mut pk = [[0.0; 2]; 2];
            for i in 0..2 {
                for jj in 0..2 {
                    pk[i][jj] = -p * a[i][jj] + mu * f[i][jj];
                }
            }
            let dv = qp.dv;
            // (A dN_a)_i for every node.
            let mut adn = [[0.0; 2]; 9];
            for n in 0..9 {
                for i in 0..2 {
                    adn[n][i] = a[i][0] * qp.dn[n][0] + a[i][1] * qp.dn[n][1];
                }
                for i in 0..2 {
                    re[2 * n + i] += (pk[i][0] * qp.dn[n][0] + pk[i][1] * qp.dn[n][1]) * dv;
                }
            }
            for b in 0..4 {
                re[NU + b] += (det - 1.0) * qp.m[b] * dv;
            }
            let Some(k) = ke.as_deref_mut() else { continue };
            for na in 0..9 {
                for nc in 0..9 {
                    let dd = (qp.dn[na][0] * qp.dn[nc][0] + qp.dn[na][1] * qp.dn[nc][1]) * mu;
                    for i in 0..2 {
                        for kk in 0..2 {
                            let mut v = p * adn[na][kk] * adn[nc][i];
                            if i == kk {
                                v += dd;
                            }
                            k[2 * na + i][2 * nc + kk] += v * dv;
                        }
                    }
                }
                for b in 0..4 {
                    for i in 0..2 {
                        k[2 * na + i][NU + b] -= adn[na][i] * qp.m[b] * dv;
                        k[NU + b][2 * na + i] += qp.m[b] * det * adn[na][i] * dv;
                    }
                }
            }
        }
        Ok(())
    }

    /// Internal force vector (no loads, no constraints).
    pub fn internal_forces(&self, state: &[f64]) -> Result<Vec<f64>, FemError> {
        let mut r = vec![0.0; self.dof_count()];
        let n = self.mesh.elements_per_side();
        let mut re = [0.0; NE];
        for ey in 0..n {
            for ex in 0..n {
                let (dofs, local) = self.gather(state, ex, ey);
                self.element(ey * n + ex, &local, &mut re, None)?;
                for (d, v) in dofs.iter().zip(&re) {
                    r[*d] += v;
                }
            }
        }
        Ok(r)
    }

    /// Residual of the constrained system at load `p0`, with the tangent if
    /// asked. Constrained rows carry the identity, so a Newton update leaves
    /// those dofs at their current (zero) values.
    pub fn assemble(&self, state: &[f64], p0: f64, with_tangent: bool) -> Result<Assembled, FemError> {
        if state.len() != self.dof_count() {
            return Err(FemError::ShapeMismatch {
                expected: self.dof_count(),
                got: state.len(),
            });
        }
        let ndof = self.dof_count();
        let mut residual = vec![0.0; ndof];
        let mut tangent = with_tangent.then(|| BandMatrix::zeros(ndof, self.bandwidth, self.bandwidth));
        let n = self.mesh.elements_per_side();
        let mut re = [0.0; NE];
        let mut ke = [[0.0; NE]; NE];
        for ey in 0..n {
            for ex in 0..n {
                let (dofs, local) = self.gather(state, ex, ey);
                let kref = if tangent.is_some() { Some(&mut ke) } else { None };
                self.element(ey * n + ex, &local, &mut re, kref)?;
                for (d, v) in dofs.iter().zip(&re) {
                    residual[*d] += v;
                }
                if let Some(t) = tangent.as_mut() {
                    for (r, row) in dofs.iter().zip(&ke) {
                        for (c, v) in dofs.iter().zip(row) {
                            t.add(*r, *c, *v);
                        }
                    }
                }
            }
        }
        for (r, l) in residual.iter_mut().zip(&self.unit_load) {
            *r -= p0 * l;
        }
        for &d in &self.constrained {
            residual[d] = 0.0;
            if let Some(t) = tangent.as_mut() {
                t.set_identity_row(d);
            }
        }
        Ok(Assembled { residual, tangent })
    }
}
