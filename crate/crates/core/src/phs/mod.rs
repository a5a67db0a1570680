//! Domain types: systems, controllers, grid functions, boundary traces and the
//! closed-loop interconnection.

mod closed_loop;
mod controller;
mod density;
mod grid;
mod system;

pub use closed_loop::{closed_loop_energy, interconnection_maps, ClosedLoopState, Interconnection};
pub use controller::{
    Controller, Damping, FnDamping, FnPotential, LinearDamping, Potential, QuadraticQuartic,
    SaturatingDamping,
};
pub use density::{DensitySample, EnergyDensity};
pub use grid::{Grid, GridFunction, Quadrature};
pub use system::{BoundaryTrace, BoundaryValues, PortHamiltonianSystem};

pub(crate) use system::endpoint_stencils;
