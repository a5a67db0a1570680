use nalgebra::{DMatrix, DVector, LU, Dyn};

use super::signal::DisturbanceSignal;
use crate::discretize::FiniteModel;
use crate::error::{Error, Result};
use crate::Real;

/// Newton and step-halving settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Residual tolerance relative to `max(1, ‖x̃‖∞)`, floored at `64ε` of the scalar.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 25,
            max_halvings: 10,
        }
    }
}

struct Factor<T: Real> {
    dt: T,
    lu: LU<T, Dyn, Dyn>,
    le: DMatrix<T>,
}

/// Outcome of one (possibly subdivided) step.
#[derive(Debug, Clone)]
pub struct StepInfo<T: Real> {
    pub next: DVector<T>,
    /// `Ẽ(x₁) − Ẽ(x₀) − Σ dt·(closed-form rate at the midpoint)`.
    pub balance_residual: T,
    /// `Σ dt · d_mᵀ y_m`.
    pub supply: T,
    pub newton_iterations: usize,
    pub substeps: usize,
}

/// Implicit midpoint stepper with a discrete gradient for `∇𝒫`.
///
/// The linear part is factorized once per step size; Newton iterates only on
/// the controller midpoint `(v₁, v₂)`.
pub struct MidpointStepper<'a, T: Real> {
    model: &'a FiniteModel<T>,
    opts: NewtonOptions,
    cache: Vec<Factor<T>>,
    warned: bool,
}

impl<'a, T: Real> MidpointStepper<'a, T> {
    pub fn new(model: &'a FiniteModel<T>, opts: NewtonOptions) -> Self {
        Self {
            model,
            opts,
            cache: Vec::new(),
            warned: false,
        }
    }

    fn factor(&mut self, dt: T) -> Result<usize> {
        if let Some(i) = self.cache.iter().position(|f| f.dt == dt) {
            return Ok(i);
        }
        let model = self.model;
        let dim = model.dim();
        let half = dt * T::lit(0.5);
        let mat = DMatrix::<T>::identity(dim, dim) - &model.a_d * half;
        let lu = mat.lu();
        if !lu.is_invertible() {
            return Err(Error::Numeric("midpoint matrix is singular".into()));
        }
        let mc = model.mc();
        let mut e = DMatrix::zeros(dim, mc);
        for j in 0..mc {
            e[(model.nx() + mc + j, j)] = T::one();
        }
        let le = if mc > 0 { lu.solve(&e).expect("invertible") } else { e };
        self.cache.push(Factor { dt, lu, le });
        Ok(self.cache.len() - 1)
    }

    fn single(&mut self, x0: &DVector<T>, t: T, dt: T, signal: &DisturbanceSignal<T>) -> Result<StepInfo<T>> {
        let idx = self.factor(dt)?;
        let model = self.model;
        let half = dt * T::lit(0.5);
        let dm = signal.average(t, t + dt);
        let rhs0 = x0 + &model.g_d * &dm * half;
        let base = self.cache[idx].lu.solve(&rhs0).expect("invertible");
        let (nx, mc) = (model.nx(), model.mc());
        let mut iterations = 0;
        let y = if let Some(ctrl) = &model.controller {
            let le = &self.cache[idx].le;
            let lec = le.rows(nx, 2 * mc).into_owned();
            let base_c = base.rows(nx, 2 * mc).into_owned();
            let v10 = x0.rows(nx, mc).into_owned();
            let phi = |c: &DVector<T>| -> DVector<T> {
                let v1m = c.rows(0, mc).into_owned();
                let v2m = c.rows(mc, mc).into_owned();
                let v11 = &v1m * T::lit(2.0) - &v10;
                let g = ctrl.potential.discrete_gradient(&v10, &v11);
                model.nonlinear_with(&v1m, &v2m, g)
            };
            if !(ctrl.potential.analytic_hessian() && ctrl.damping.analytic_jacobian()) && !self.warned {
                log::warn!("controller `{}` lacks analytic derivatives; Newton uses finite differences", ctrl.name);
                self.warned = true;
            }
            let scale = T::one().max(x0.amax());
            let tol = T::lit(self.opts.tol).max(T::eps() * T::lit(64.0)) * scale;
            let mut c = base_c.clone();
            let mut ph = phi(&c);
            let mut r = &c - &base_c - &lec * &ph * half;
            let mut ok = r.amax() <= tol;
            while !ok && iterations < self.opts.max_iter {
                iterations += 1;
                let v1m = c.rows(0, mc).into_owned();
                let v2m = c.rows(mc, mc).into_owned();
                let hess = ctrl.potential.hessian(&v1m);
                let dr = ctrl.damping.jacobian(&(&ctrl.k_mass * &v2m)) * &ctrl.k_mass;
                let mut jphi = DMatrix::zeros(mc, 2 * mc);
                jphi.view_mut((0, 0), (mc, mc))
                    .copy_from(&(DMatrix::identity(mc, mc) - hess));
                jphi.view_mut((0, mc), (mc, mc)).copy_from(&(-dr));
                let jac = DMatrix::identity(2 * mc, 2 * mc) - &lec * jphi * half;
                let step = jac
                    .lu()
                    .solve(&(-&r))
                    .ok_or_else(|| Error::Numeric("singular Newton matrix".into()))?;
                c += step;
                ph = phi(&c);
                r = &c - &base_c - &lec * &ph * half;
                if !crate::linalg::is_finite(r.as_slice()) {
                    break;
                }
                ok = r.amax() <= tol;
            }
            if !ok {
                return Err(Error::StepFailure {
                    t: t.as_f64(),
                    reason: format!("Newton did not converge in {} iterations", self.opts.max_iter),
                });
            }
            base + le * ph * half
        } else {
            base
        };
        let x1 = &y * T::lit(2.0) - x0;
        if !crate::linalg::is_finite(x1.as_slice()) {
            return Err(Error::StepFailure {
                t: t.as_f64(),
                reason: "non-finite state".into(),
            });
        }
        let bal = model.balance_with_rate(&y, &dm, T::zero());
        let closed = bal.supply - bal.feedthrough - bal.damping + bal.remainder();
        let de = model.energy(&x1) - model.energy(x0);
        Ok(StepInfo {
            next: x1,
            balance_residual: de - dt * T::lit(closed),
            supply: dt * T::lit(bal.supply),
            newton_iterations: iterations,
            substeps: 1,
        })
    }

    fn halving(&mut self, x0: &DVector<T>, t: T, dt: T, signal: &DisturbanceSignal<T>, level: usize) -> Result<StepInfo<T>> {
        match self.single(x0, t, dt, signal) {
            Ok(s) => Ok(s),
            Err(e) if level >= self.opts.max_halvings => Err(e),
            Err(Error::StepFailure { .. }) => {
                let h = dt * T::lit(0.5);
                let a = self.halving(x0, t, h, signal, level + 1)?;
                let b = self.halving(&a.next, t + h, h, signal, level + 1)?;
                Ok(StepInfo {
                    next: b.next,
                    balance_residual: a.balance_residual + b.balance_residual,
                    supply: a.supply + b.supply,
                    newton_iterations: a.newton_iterations + b.newton_iterations,
                    substeps: a.substeps + b.substeps,
                })
            }
            Err(e) => Err(e),
        }
    }

    /// Advances `x0` from `t` to `t + dt`, halving the step on Newton failure.
    pub fn step(&mut self, x0: &DVector<T>, t: T, dt: T, signal: &DisturbanceSignal<T>) -> Result<StepInfo<T>> {
        if !(dt > T::zero()) {
            return Err(Error::Input("dt must be positive".into()));
        }
        if x0.len() != self.model.dim() || signal.k() != self.model.k() {
            return Err(Error::Input("state or signal dimension mismatch".into()));
        }
        self.halving(x0, t, dt, signal, 0)
    }
}

/// One implicit midpoint step (factorizes the linear part on every call).
pub fn step_implicit_midpoint<T: Real>(
    model: &FiniteModel<T>,
    state: &DVector<T>,
    t: T,
    dt: T,
    signal: &DisturbanceSignal<T>,
) -> Result<DVector<T>> {
    MidpointStepper::new(model, NewtonOptions::default())
        .step(state, t, dt, signal)
        .map(|s| s.next)
}
