//! Pointwise plane-strain kinematics and constitutive algebra for an
//! incompressible Neo-Hookean solid, written over [`Real`] so the same code
//! runs on plain floats and on autodiff tapes.

use core::ops::{Add, Mul};

use crate::autodiff::Tape;
use crate::real::Real;

/// Below this |det F| a configuration is treated as singular.
pub const SINGULARITY_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error, Clone, Copy, PartialEq)]
pub enum MechanicsError {
    #[error("singular deformation gradient (det F = {det:e})")]
    Singular { det: f64 },
    #[error("normal ({0}, {1}) is not a unit vector")]
    NonUnitNormal(f64, f64),
}

/// Reference (Lagrangian) coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2 {
    pub x1: f64,
    pub x2: f64,
}

impl Point2 {
    pub const fn new(x1: f64, x2: f64) -> Self {
        Point2 { x1, x2 }
    }
}

/// A 2x2 matrix stored by components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2<T> {
    pub m11: T,
    pub m12: T,
    pub m21: T,
    pub m22: T,
}

impl<T: Copy> Mat2<T> {
    pub const fn new(m11: T, m12: T, m21: T, m22: T) -> Self {
        Mat2 { m11, m12, m21, m22 }
    }

    pub fn transpose(&self) -> Self {
        Mat2::new(self.m11, self.m21, self.m12, self.m22)
    }

    /// Component `(i, j)` with zero-based indices.
    pub fn get(&self, i: usize, j: usize) -> T {
        match (i, j) {
            (0, 0) => self.m11,
            (0, 1) => self.m12,
            (1, 0) => self.m21,
            _ => self.m22,
        }
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Mat2<U> {
        Mat2::new(f(self.m11), f(self.m12), f(self.m21), f(self.m22))
    }
}

impl Mat2<f64> {
    pub const IDENTITY: Mat2<f64> = Mat2::new(1.0, 0.0, 0.0, 1.0);
    pub const ZERO: Mat2<f64> = Mat2::new(0.0, 0.0, 0.0, 0.0);

    pub fn diag(a: f64, b: f64) -> Self {
        Mat2::new(a, 0.0, 0.0, b)
    }

    pub fn matmul(&self, o: &Mat2<f64>) -> Mat2<f64> {
        Mat2::new(
            self.m11 * o.m11 + self.m12 * o.m21,
            self.m11 * o.m12 + self.m12 * o.m22,
            self.m21 * o.m11 + self.m22 * o.m21,
            self.m21 * o.m12 + self.m22 * o.m22,
        )
    }

    pub fn max_abs_diff(&self, o: &Mat2<f64>) -> f64 {
        [
            self.m11 - o.m11,
            self.m12 - o.m12,
            self.m21 - o.m21,
            self.m22 - o.m22,
        ]
        .iter()
        .fold(0.0, |m, d| m.max(libm::fabs(*d)))
    }
}

impl<T: Real> Add for Mat2<T> {
    type Output = Mat2<T>;
    fn add(self, o: Mat2<T>) -> Mat2<T> {
        Mat2::new(
            self.m11 + o.m11,
            self.m12 + o.m12,
            self.m21 + o.m21,
            self.m22 + o.m22,
        )
    }
}

impl<T: Real> Mul<T> for Mat2<T> {
    type Output = Mat2<T>;
    fn mul(self, s: T) -> Mat2<T> {
        Mat2::new(self.m11 * s, self.m12 * s, self.m21 * s, self.m22 * s)
    }
}

/// Full pointwise state: kinematics, stress, residual and traction.
#[derive(Clone, Copy, Debug)]
pub struct MechanicalState<T> {
    pub f: Mat2<T>,
    pub det: T,
    pub p: T,
    pub mu: T,
    pub stress: Mat2<T>,
    pub residual: [T; 2],
    pub traction: [T; 2],
}

/// `F = I + grad u`.
pub fn deformation_gradient<T: Real>(grad_u: Mat2<T>) -> Mat2<T> {
    Mat2::new(
        grad_u.m11 + 1.0,
        grad_u.m12,
        grad_u.m21,
        grad_u.m22 + 1.0,
    )
}

pub fn det2<T: Real>(f: &Mat2<T>) -> T {
    f.m11 * f.m22 - f.m12 * f.m21
}

/// Closed-form `F^{-T}`.
pub fn inv_transpose2<T: Real>(f: &Mat2<T>) -> Result<Mat2<T>, MechanicsError> {
    let det = det2(f);
    if !(libm::fabs(det.value()) >= SINGULARITY_FLOOR) {
        return Err(MechanicsError::Singular { det: det.value() });
    }
    Ok(Mat2::new(f.m22 / det, -f.m21 / det, -f.m12 / det, f.m11 / det))
}

/// First Piola-Kirchhoff stress `P = -p F^{-T} + mu F`.
pub fn first_pk_stress<T: Real>(f: &Mat2<T>, p: T, mu: T) -> Result<Mat2<T>, MechanicsError> {
    let a = inv_transpose2(f)?;
    Ok(Mat2::new(
        mu * f.m11 - p * a.m11,
        mu * f.m12 - p * a.m12,
        mu * f.m21 - p * a.m21,
        mu * f.m22 - p * a.m22,
    ))
}

/// Tolerance on `|N0| - 1` accepted by [`traction`].
pub const UNIT_NORMAL_TOL: f64 = 1e-12;

/// `T_i = P_iJ N0_J` for a reference unit normal `n0`.
pub fn traction<T: Real>(p: &Mat2<T>, n0: [f64; 2]) -> Result<[T; 2], MechanicsError> {
    check_unit(n0)?;
    Ok([
        p.m11 * n0[0] + p.m12 * n0[1],
        p.m21 * n0[0] + p.m22 * n0[1],
    ])
}

pub fn check_unit(n0: [f64; 2]) -> Result<(), MechanicsError> {
    let norm = libm::sqrt(n0[0] * n0[0] + n0[1] * n0[1]);
    if !(libm::fabs(norm - 1.0) <= UNIT_NORMAL_TOL) {
        return Err(MechanicsError::NonUnitNormal(n0[0], n0[1]));
    }
    Ok(())
}

/// Ground-truth modulus: a smooth low-amplitude background with a stiff
/// Gaussian inclusion centred at (0.1, 0.2).
pub fn true_modulus<T: Real>(x1: T, x2: T) -> T {
    let background = ((x1 + 1.0).square() + (x2 + 0.5).square()) * -0.05 + 0.333;
    let r2 = (x1 - 0.1).square() + (x2 - 0.2).square();
    background + (r2 * -22.22).exp() * 0.133
}

/// A scalar modulus field that can be sampled with its spatial gradient.
pub trait ModulusField {
    fn value(&self, x: Point2) -> f64;
    fn gradient(&self, x: Point2) -> [f64; 2];
}

/// The nonhomogeneous reference field of [`true_modulus`].
#[derive(Clone, Copy, Debug, Default)]
pub struct ReferenceModulus;

impl ModulusField for ReferenceModulus {
    fn value(&self, x: Point2) -> f64 {
        true_modulus(x.x1, x.x2)
    }

    fn gradient(&self, x: Point2) -> [f64; 2] {
        let tape = Tape::new();
        let a = tape.leaf(x.x1);
        let b = tape.leaf(x.x2);
        let mu = true_modulus(a, b);
        let g = tape
            .gradient(mu, &[a, b])
            .expect("leaves are leaves");
        [g[0], g[1]]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConstantModulus(pub f64);

impl ModulusField for ConstantModulus {
    fn value(&self, _: Point2) -> f64 {
        self.0
    }
    fn gradient(&self, _: Point2) -> [f64; 2] {
        [0.0, 0.0]
    }
}

impl<M: ModulusField + ?Sized> ModulusField for &M {
    fn value(&self, x: Point2) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: Point2) -> [f64; 2] {
        (**self).gradient(x)
    }
}
