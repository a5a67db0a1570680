//! Boundary-controlled linear port-Hamiltonian systems coupled to nonlinear
//! dynamic controllers: model assembly, energy-consistent discretization,
//! simulation under L² disturbances, and numerical stability certificates.
//!
//! Numeric types are generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64`.

// `!(x > 0.0)` is used deliberately so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditions;
pub mod diagnostics;
pub mod discretize;
pub mod error;
pub mod linalg;
pub mod models;
pub mod phs;
mod scalar;
pub mod simulate;

pub use error::{Error, Result};
pub use scalar::Real;

pub type System = phs::PortHamiltonianSystem<f64>;
pub type Controller = phs::Controller<f64>;
pub type Model = discretize::FiniteModel<f64>;
pub type Signal = simulate::DisturbanceSignal<f64>;
pub type Traj = simulate::Trajectory<f64>;

pub type SystemF32 = phs::PortHamiltonianSystem<f32>;
pub type ControllerF32 = phs::Controller<f32>;
pub type ModelF32 = discretize::FiniteModel<f32>;
pub type TrajF32 = simulate::Trajectory<f32>;
