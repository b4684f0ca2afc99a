//! Core numerics for reconstructing a spatially varying shear modulus of an
//! incompressible Neo-Hookean solid in plane strain.
//!
//! Two multilayer perceptrons are trained against a physics-informed loss:
//! one represents the displacement/pressure solution, the other the modulus
//! field. A Taylor-Hood finite-element solver produces synthetic displacement
//! measurements and serves as an independent check.
//!
//! The crate is `no_std` (with `alloc`); file formats, the CLI and all other
//! IO live in the companion `elastonet` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod femsolve;
pub mod mechanics;
pub mod nets;
pub mod pinn;
pub mod real;

pub use autodiff::{AutodiffError, GradientMap, Tape, Var};
pub use mechanics::{Mat2, MechanicsError, ModulusField, ReferenceModulus, Point2};
pub use nets::{MlpConfig, NetError, NetworkParams};
pub use real::Real;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
