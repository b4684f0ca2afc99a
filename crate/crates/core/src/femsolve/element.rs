//! Reference-element tables for the Q2/Q1 pair on `[-1, 1]^2`.

/// 3-point Gauss rule: (abscissa, weight).
pub const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// 1-D quadratic Lagrange basis on nodes -1, 0, 1 and its derivative.
pub fn quad1(xi: f64) -> ([f64; 3], [f64; 3]) {
    (
        [0.5 * xi * (xi - 1.0), 1.0 - xi * xi, 0.5 * xi * (xi + 1.0)],
        [xi - 0.5, -2.0 * xi, xi + 0.5],
    )
}

/// 1-D linear basis on nodes -1, 1.
pub fn lin1(xi: f64) -> [f64; 2] {
    [0.5 * (1.0 - xi), 0.5 * (1.0 + xi)]
}

/// Biquadratic shape values and reference gradients, node `a + 3b`.
pub fn q2(xi: f64, eta: f64) -> ([f64; 9], [[f64; 2]; 9]) {
    let (lx, dx) = quad1(xi);
    let (ly, dy) = quad1(eta);
    let mut n = [0.0; 9];
    let mut dn = [[0.0; 2]; 9];
    for b in 0..3 {
        for a in 0..3 {
            n[a + 3 * b] = lx[a] * ly[b];
            dn[a + 3 * b] = [dx[a] * ly[b], lx[a] * dy[b]];
        }
    }
    (n, dn)
}

/// Bilinear pressure shape values, node `a + 2b`.
pub fn q1(xi: f64, eta: f64) -> [f64; 4] {
    let lx = lin1(xi);
    let ly = lin1(eta);
    [lx[0] * ly[0], lx[1] * ly[0], lx[0] * ly[1], lx[1] * ly[1]]
}

/// Shape data at one quadrature point of a square element of side `h`.
#[derive(Clone, Copy, Debug)]
pub struct QuadPoint {
    pub xi: f64,
    pub eta: f64,
    /// Weight times the element Jacobian determinant.
    pub dv: f64,
    pub n: [f64; 9],
    /// Physical gradients dN/dX.
    pub dn: [[f64; 2]; 9],
    pub m: [f64; 4],
}

/// 3x3 Gauss table for an axis-aligned square element of side `h`.
///
/// Every element of the structured mesh shares the same geometry, so this
/// table is built once per mesh.
pub fn quadrature_table(h: f64) -> [QuadPoint; 9] {
    let jac = 0.5 * h;
    let det = jac * jac;
    core::array::from_fn(|q| {
        let (xi, wx) = GAUSS3[q % 3];
        let (eta, wy) = GAUSS3[q / 3];
        let (n, dref) = q2(xi, eta);
        let dn = dref.map(|[a, b]| [a / jac, b / jac]);
        QuadPoint {
            xi,
            eta,
            dv: wx * wy * det,
            n,
            dn,
            m: q1(xi, eta),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity() {
        for &(xi, eta) in &[(0.3, -0.7), (-1.0, 1.0), (0.0, 0.0)] {
            let (n, dn) = q2(xi, eta);
            assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            let gx: f64 = dn.iter().map(|d| d[0]).sum();
            let gy: f64 = dn.iter().map(|d| d[1]).sum();
            assert!(gx.abs() < 1e-14 && gy.abs() < 1e-14);
            assert!((q1(xi, eta).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn kronecker_at_nodes() {
        let pos = [-1.0, 0.0, 1.0];
        for b in 0..3 {
            for a in 0..3 {
                let (n, _) = q2(pos[a], pos[b]);
                for (k, v) in n.iter().enumerate() {
                    let want = if k == a + 3 * b { 1.0 } else { 0.0 };
                    assert_eq!(*v, want);
                }
            }
        }
    }

    #[test]
    fn gauss_integrates_quintics() {
        let s: f64 = GAUSS3.iter().map(|(x, w)| w * x.powi(4)).sum();
        assert!((s - 0.4).abs() < 1e-15);
        let area: f64 = quadrature_table(0.25).iter().map(|q| q.dv).sum();
        assert!((area - 0.0625).abs() < 1e-16);
    }
}
