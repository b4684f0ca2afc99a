//! Pointwise equilibrium residual, incompressibility defect and boundary
//! traction, expressed on output jets, with hand-written adjoints for the
//! batched objective.
//!
//! With `A = F^{-T}`, `J = det F`, the Piola identity `div(J A) = 0` turns
//! the divergence of `P = -p A + mu F` into
//!
//! ```text
//! f_i = -J A_iK d_K(p / J) + d_K(mu) F_iK + mu lap(u_i)
//! ```
//!
//! which needs only first derivatives of `p`, `mu` and second derivatives of
//! `u`. [`pde_residual_at`] instead builds `P` as a tape graph and
//! differentiates it in `X` directly, so the two are independent.

use alloc::vec::Vec;

use super::PinnError;
use crate::autodiff::{Tape, Var};
use crate::mechanics::{
    deformation_gradient, det2, first_pk_stress, Mat2, MechanicsError, Point2, SINGULARITY_FLOOR,
};
use crate::nets::{forward_generic, NetworkParams};
use crate::real::Real;

/// Network-output jets at an interior point. Displacements carry
/// `[v, d1, d2, d11, d12, d22]`, pressure and modulus `[v, d1, d2]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InteriorJets<T> {
    pub u1: [T; 6],
    pub u2: [T; 6],
    pub p: [T; 3],
    pub mu: [T; 3],
}

/// Jets at a boundary point: displacements to first order, `p` and `mu`
/// values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryJets<T> {
    pub u1: [T; 3],
    pub u2: [T; 3],
    pub p: T,
    pub mu: T,
}

fn check_det(det: f64) -> Result<(), MechanicsError> {
    if libm::fabs(det) >= SINGULARITY_FLOOR {
        Ok(())
    } else {
        Err(MechanicsError::Singular { det })
    }
}

/// `[f1, f2, det F - 1]`.
pub fn interior_residual<T: Real>(j: &InteriorJets<T>) -> Result<[T; 3], MechanicsError> {
    let (u1, u2) = (&j.u1, &j.u2);
    let f11 = u1[1] + 1.0;
    let f12 = u1[2];
    let f21 = u2[1];
    let f22 = u2[2] + 1.0;
    let det = f11 * f22 - f12 * f21;
    check_det(det.value())?;
    let dj1 = u1[3] * f22 + f11 * u2[4] - u1[4] * f21 - f12 * u2[3];
    let dj2 = u1[4] * f22 + f11 * u2[5] - u1[5] * f21 - f12 * u2[4];
    let inv = det.lift(1.0) / det;
    let pj = j.p[0] * inv * inv;
    let g1 = j.p[1] * inv - dj1 * pj;
    let g2 = j.p[2] * inv - dj2 * pj;
    let lap1 = u1[3] + u1[5];
    let lap2 = u2[3] + u2[5];
    let f1 = g2 * f21 - g1 * f22 + j.mu[1] * f11 + j.mu[2] * f12 + j.mu[0] * lap1;
    let f2 = g1 * f12 - g2 * f11 + j.mu[1] * f21 + j.mu[2] * f22 + j.mu[0] * lap2;
    Ok([f1, f2, det - 1.0])
}

/// Reverse sweep of [`interior_residual`]: given the adjoints of
/// `[f1, f2, det F - 1]`, returns the adjoints of the jets.
pub fn interior_adjoint(j: &InteriorJets<f64>, bar: [f64; 3]) -> InteriorJets<f64> {
    let (u1, u2) = (&j.u1, &j.u2);
    let f11 = u1[1] + 1.0;
    let f12 = u1[2];
    let f21 = u2[1];
    let f22 = u2[2] + 1.0;
    let det = f11 * f22 - f12 * f21;
    let dj1 = u1[3] * f22 + f11 * u2[4] - u1[4] * f21 - f12 * u2[3];
    let dj2 = u1[4] * f22 + f11 * u2[5] - u1[5] * f21 - f12 * u2[4];
    let inv = 1.0 / det;
    let inv2 = inv * inv;
    let p = j.p[0];
    let g1 = j.p[1] * inv - dj1 * p * inv2;
    let g2 = j.p[2] * inv - dj2 * p * inv2;
    let mu = &j.mu;
    let [fb1, fb2, detb0] = bar;

    let mut a = InteriorJets {
        u1: [0.0; 6],
        u2: [0.0; 6],
        p: [0.0; 3],
        mu: [0.0; 3],
    };
    let gb1 = -fb1 * f22 + fb2 * f12;
    let gb2 = fb1 * f21 - fb2 * f11;
    let mut fb11 = fb1 * mu[1] - fb2 * g2;
    let mut fb12 = fb1 * mu[2] + fb2 * g1;
    let mut fb21 = fb1 * g2 + fb2 * mu[1];
    let mut fb22 = -fb1 * g1 + fb2 * mu[2];
    a.mu[0] = fb1 * (u1[3] + u1[5]) + fb2 * (u2[3] + u2[5]);
    a.mu[1] = fb1 * f11 + fb2 * f21;
    a.mu[2] = fb1 * f12 + fb2 * f22;
    a.u1[3] += fb1 * mu[0];
    a.u1[5] += fb1 * mu[0];
    a.u2[3] += fb2 * mu[0];
    a.u2[5] += fb2 * mu[0];

    // g_K = p_K / J - p dJ_K / J^2
    a.p[1] = gb1 * inv;
    a.p[2] = gb2 * inv;
    a.p[0] = -(gb1 * dj1 + gb2 * dj2) * inv2;
    let djb1 = -gb1 * p * inv2;
    let djb2 = -gb2 * p * inv2;
    let detb = detb0
        + gb1 * (-j.p[1] * inv2 + 2.0 * p * dj1 * inv2 * inv)
        + gb2 * (-j.p[2] * inv2 + 2.0 * p * dj2 * inv2 * inv);

    // dJ_1 = u1_11 F22 + F11 u2_12 - u1_12 F21 - F12 u2_11
    a.u1[3] += djb1 * f22;
    fb22 += djb1 * u1[3];
    fb11 += djb1 * u2[4];
    a.u2[4] += djb1 * f11;
    a.u1[4] -= djb1 * f21;
    fb21 -= djb1 * u1[4];
    fb12 -= djb1 * u2[3];
    a.u2[3] -= djb1 * f12;
    // dJ_2 = u1_12 F22 + F11 u2_22 - u1_22 F21 - F12 u2_12
    a.u1[4] += djb2 * f22;
    fb22 += djb2 * u1[4];
    fb11 += djb2 * u2[5];
    a.u2[5] += djb2 * f11;
    a.u1[5] -= djb2 * f21;
    fb21 -= djb2 * u1[5];
    fb12 -= djb2 * u2[4];
    a.u2[4] -= djb2 * f12;
    // J = F11 F22 - F12 F21
    fb11 += detb * f22;
    fb22 += detb * f11;
    fb12 -= detb * f21;
    fb21 -= detb * f12;

    a.u1[1] = fb11;
    a.u1[2] = fb12;
    a.u2[1] = fb21;
    a.u2[2] = fb22;
    a
}

/// Traction `P N0` at a boundary point.
pub fn boundary_traction<T: Real>(j: &BoundaryJets<T>, n0: [f64; 2]) -> Result<[T; 2], MechanicsError> {
    let f = deformation_gradient(Mat2::new(j.u1[1], j.u1[2], j.u2[1], j.u2[2]));
    let p = first_pk_stress(&f, j.p, j.mu)?;
    crate::mechanics::traction(&p, n0)
}

/// Reverse sweep of [`boundary_traction`].
pub fn traction_adjoint(j: &BoundaryJets<f64>, n0: [f64; 2], bar: [f64; 2]) -> BoundaryJets<f64> {
    let f11 = j.u1[1] + 1.0;
    let f12 = j.u1[2];
    let f21 = j.u2[1];
    let f22 = j.u2[2] + 1.0;
    let det = f11 * f22 - f12 * f21;
    let inv = 1.0 / det;
    // P_iJ = -p C_iJ / J + mu F_iJ, C = cof(F)
    let c = [[f22, -f21], [-f12, f11]];
    let f = [[f11, f12], [f21, f22]];
    let pb = [
        [bar[0] * n0[0], bar[0] * n0[1]],
        [bar[1] * n0[0], bar[1] * n0[1]],
    ];
    let mut fb = [[0.0; 2]; 2];
    let mut p_bar = 0.0;
    let mut mu_bar = 0.0;
    let mut det_bar = 0.0;
    let mut cb = [[0.0; 2]; 2];
    for i in 0..2 {
        for k in 0..2 {
            p_bar -= pb[i][k] * c[i][k] * inv;
            mu_bar += pb[i][k] * f[i][k];
            fb[i][k] += j.mu * pb[i][k];
            cb[i][k] = -j.p * pb[i][k] * inv;
            det_bar += j.p * pb[i][k] * c[i][k] * inv * inv;
        }
    }
    fb[1][1] += cb[0][0];
    fb[1][0] -= cb[0][1];
    fb[0][1] -= cb[1][0];
    fb[0][0] += cb[1][1];
    fb[0][0] += det_bar * f22;
    fb[1][1] += det_bar * f11;
    fb[0][1] -= det_bar * f21;
    fb[1][0] -= det_bar * f12;
    BoundaryJets {
        u1: [0.0, fb[0][0], fb[0][1]],
        u2: [0.0, fb[1][0], fb[1][1]],
        p: p_bar,
        mu: mu_bar,
    }
}

/// Equilibrium residual and incompressibility defect at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointResidual {
    pub f: [f64; 2],
    pub defect: f64,
}

/// Tape construction of `[f1, f2, det F - 1]` at `x`, differentiable with
/// respect to the parameter leaves `u_params` and `mu_params`.
///
/// `F` comes from a differentiable sweep of the network outputs in `X`, `P`
/// is assembled from it with [`first_pk_stress`], and each `dP_iJ/dX_J` is a
/// further differentiable sweep.
pub fn pde_residual_graph<'t>(
    tape: &'t Tape,
    u_net: &NetworkParams,
    u_params: &[Var<'t>],
    mu_net: &NetworkParams,
    mu_params: &[Var<'t>],
    x: Point2,
) -> Result<[Var<'t>; 3], PinnError> {
    let xs = [tape.leaf(x.x1), tape.leaf(x.x2)];
    let out = forward_generic(u_net.config(), u_params, &xs)?;
    let mu = forward_generic(mu_net.config(), mu_params, &xs)?[0];
    let g1 = out[0].grad_graph(&xs).map_err(|_| PinnError::Config("tape"))?;
    let g2 = out[1].grad_graph(&xs).map_err(|_| PinnError::Config("tape"))?;
    let f = deformation_gradient(Mat2::new(g1[0], g1[1], g2[0], g2[1]));
    let p = first_pk_stress(&f, out[2], mu)?;
    let mut res = Vec::with_capacity(3);
    for i in 0..2 {
        let mut div = None;
        for jj in 0..2 {
            let d = p.get(i, jj).grad_graph(&xs).map_err(|_| PinnError::Config("tape"))?[jj];
            div = Some(match div {
                None => d,
                Some(s) => s + d,
            });
        }
        res.push(div.expect("two terms"));
    }
    res.push(det2(&f) - 1.0);
    Ok([res[0], res[1], res[2]])
}

/// Residual of the networks at `x`, evaluated through the tape.
pub fn pde_residual_at(
    u_net: &NetworkParams,
    mu_net: &NetworkParams,
    x: Point2,
) -> Result<PointResidual, PinnError> {
    let tape = Tape::new();
    let up = tape.leaves(u_net.values());
    let mp = tape.leaves(mu_net.values());
    let r = pde_residual_graph(&tape, u_net, &up, mu_net, &mp, x)?;
    Ok(PointResidual {
        f: [r[0].value(), r[1].value()],
        defect: r[2].value(),
    })
}
