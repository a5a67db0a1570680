use nalgebra::DVector;

use super::controller::Controller;
use super::grid::{GridFunction, Quadrature};
use super::system::{BoundaryTrace, PortHamiltonianSystem};
use crate::error::{Error, Result};
use crate::linalg;
use crate::Real;

/// Closed-loop state `x̃ = (x, v₁, v₂)` with `x` sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopState<T: Real> {
    pub x: GridFunction<T>,
    pub v1: DVector<T>,
    pub v2: DVector<T>,
}

impl<T: Real> ClosedLoopState<T> {
    pub fn new(x: GridFunction<T>, v1: DVector<T>, v2: DVector<T>) -> Result<Self> {
        if !linalg::is_finite(x.values.as_slice())
            || !linalg::is_finite(v1.as_slice())
            || !linalg::is_finite(v2.as_slice())
        {
            return Err(Error::Input("closed-loop state has non-finite entries".into()));
        }
        if v1.len() != v2.len() {
            return Err(Error::Input("v1 and v2 lengths differ".into()));
        }
        Ok(Self { x, v1, v2 })
    }
}

/// `Ẽ = E(x) + 𝒫(v₁) + ½ v₂ᵀK v₂`.
pub fn closed_loop_energy<T: Real>(
    system: &PortHamiltonianSystem<T>,
    controller: &Controller<T>,
    state: &ClosedLoopState<T>,
    quadrature: Quadrature,
) -> Result<T> {
    if state.v1.len() != controller.mc() {
        return Err(Error::Input(format!(
            "controller state has length {}, controller has m_c = {}",
            state.v1.len(),
            controller.mc()
        )));
    }
    Ok(system.energy(&state.x, quadrature)? + controller.energy(&state.v1, &state.v2))
}

/// Closed-loop boundary maps `ℬ̃x̃ = W_B2 z + B_cᵀK v₂ + S_c W_C z` and `C̃x̃ = W_C z`.
#[derive(Debug, Clone, Copy)]
pub struct Interconnection<'a, T: Real> {
    pub system: &'a PortHamiltonianSystem<T>,
    pub controller: &'a Controller<T>,
}

pub fn interconnection_maps<'a, T: Real>(
    system: &'a PortHamiltonianSystem<T>,
    controller: &'a Controller<T>,
) -> Result<Interconnection<'a, T>> {
    if system.k() != controller.k() {
        return Err(Error::Interconnection {
            plant: system.k(),
            controller: controller.k(),
        });
    }
    Ok(Interconnection { system, controller })
}

impl<T: Real> Interconnection<'_, T> {
    pub fn b_tilde_from_trace(&self, z: &BoundaryTrace<T>, v2: &DVector<T>) -> Result<DVector<T>> {
        let bv = self.system.apply_boundary_ops(z)?;
        Ok(bv.u + self.controller.output(v2, &bv.y))
    }

    pub fn c_tilde_from_trace(&self, z: &BoundaryTrace<T>) -> Result<DVector<T>> {
        Ok(self.system.apply_boundary_ops(z)?.y)
    }

    pub fn b_tilde(&self, state: &ClosedLoopState<T>) -> Result<DVector<T>> {
        let z = self.system.boundary_trace(&state.x)?;
        self.b_tilde_from_trace(&z, &state.v2)
    }

    pub fn c_tilde(&self, state: &ClosedLoopState<T>) -> Result<DVector<T>> {
        let z = self.system.boundary_trace(&state.x)?;
        self.c_tilde_from_trace(&z)
    }
}
