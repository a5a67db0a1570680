//! Disturbance signals, implicit midpoint integration and trajectory bookkeeping.

mod integrator;
mod signal;

use nalgebra::DVector;

use crate::discretize::FiniteModel;
use crate::error::{Error, Result};
use crate::Real;

pub use integrator::{step_implicit_midpoint, MidpointStepper, NewtonOptions, StepInfo};
pub use signal::{make_signal, DisturbanceSignal, SignalSpec};

/// Time series of one closed-loop run. Every per-time array has one entry per
/// grid time; `states` holds every `state_stride`-th state.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub state_stride: usize,
    pub states: Vec<DVector<T>>,
    pub outputs: Vec<DVector<T>>,
    pub disturbances: Vec<DVector<T>>,
    pub energy: Vec<T>,
    pub energy_plant: Vec<T>,
    pub energy_ctrl: Vec<T>,
    pub norm: Vec<T>,
    /// Cumulative midpoint supply `Σ dt·d_mᵀy_m`.
    pub supply: Vec<T>,
    /// Exact `‖d‖²_{[0,tᵢ]}`.
    pub d_norm_sq: Vec<T>,
    /// Per-step balance residual (entry `i` covers `[t_{i−1}, t_i]`; entry 0 is 0).
    pub balance_residual: Vec<T>,
    pub newton_iterations: Vec<usize>,
    pub final_state: DVector<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn empty(x0: &DVector<T>) -> Self {
        Self {
            times: Vec::new(),
            state_stride: 1,
            states: Vec::new(),
            outputs: Vec::new(),
            disturbances: Vec::new(),
            energy: Vec::new(),
            energy_plant: Vec::new(),
            energy_ctrl: Vec::new(),
            norm: Vec::new(),
            supply: Vec::new(),
            d_norm_sq: Vec::new(),
            balance_residual: Vec::new(),
            newton_iterations: Vec::new(),
            final_state: x0.clone(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        model: &FiniteModel<T>,
        t: T,
        x: &DVector<T>,
        signal: &DisturbanceSignal<T>,
        supply: T,
        residual: T,
        iterations: usize,
    ) {
        let i = self.times.len();
        if i.is_multiple_of(self.state_stride) {
            self.states.push(x.clone());
        }
        self.times.push(t);
        self.outputs.push(model.output(x));
        self.disturbances.push(signal.eval(t));
        let ep = model.plant_energy(x);
        let ec = model.controller_energy(x);
        self.energy_plant.push(ep);
        self.energy_ctrl.push(ec);
        self.energy.push(ep + ec);
        self.norm.push(model.norm(x));
        let prev = self.supply.last().copied().unwrap_or(T::zero());
        self.supply.push(prev + supply);
        self.d_norm_sq.push(signal.norm_sq(t));
        self.balance_residual.push(residual);
        self.newton_iterations.push(iterations);
        self.final_state = x.clone();
    }
}

/// Trajectory plus the error that stopped it early, if any.
#[derive(Debug, Clone)]
pub struct SimulationResult<T: Real> {
    pub trajectory: Trajectory<T>,
    pub status: Result<()>,
}

impl<T: Real> SimulationResult<T> {
    pub fn into_result(self) -> Result<Trajectory<T>> {
        self.status.map(|_| self.trajectory)
    }
}

/// Options for [`simulate_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub newton: NewtonOptions,
    pub state_stride: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            newton: NewtonOptions::default(),
            state_stride: 1,
        }
    }
}

fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end > 0.0) || !(dt > 0.0) || dt > t_end * (1.0 + 1e-12) {
        return Err(Error::Input(format!("need T > 0 and 0 < dt ≤ T, got T = {t_end}, dt = {dt}")));
    }
    Ok((t_end / dt).round().max(1.0) as usize)
}

pub fn simulate<T: Real>(
    model: &FiniteModel<T>,
    x0: &DVector<T>,
    signal: &DisturbanceSignal<T>,
    t_end: T,
    dt: T,
) -> SimulationResult<T> {
    simulate_with(model, x0, signal, t_end, dt, &SimOptions::default())
}

/// Integrates on the uniform grid `tᵢ = i·dt`, `i = 0..round(T/dt)`.
pub fn simulate_with<T: Real>(
    model: &FiniteModel<T>,
    x0: &DVector<T>,
    signal: &DisturbanceSignal<T>,
    t_end: T,
    dt: T,
    opts: &SimOptions,
) -> SimulationResult<T> {
    let mut tr = Trajectory::empty(x0);
    tr.state_stride = opts.state_stride.max(1);
    let fail = |tr, e| SimulationResult {
        trajectory: tr,
        status: Err(e),
    };
    if x0.len() != model.dim() {
        return fail(tr, Error::Input(format!("state has length {}, model has {}", x0.len(), model.dim())));
    }
    if signal.k() != model.k() {
        return fail(tr, Error::Input(format!("signal has {} channels, model has {}", signal.k(), model.k())));
    }
    if !crate::linalg::is_finite(x0.as_slice()) {
        return fail(tr, Error::Input("initial state has non-finite entries".into()));
    }
    let steps = match step_count(t_end.as_f64(), dt.as_f64()) {
        Ok(s) => s,
        Err(e) => return fail(tr, e),
    };
    tr.push(model, T::zero(), x0, signal, T::zero(), T::zero(), 0);
    let mut stepper = MidpointStepper::new(model, opts.newton);
    let mut x = x0.clone();
    for i in 0..steps {
        let t = dt * T::from_count(i);
        match stepper.step(&x, t, dt, signal) {
            Ok(info) => {
                x = info.next;
                let t1 = dt * T::from_count(i + 1);
                tr.push(model, t1, &x, signal, info.supply, info.balance_residual, info.newton_iterations);
            }
            Err(e) => return fail(tr, e),
        }
    }
    SimulationResult {
        trajectory: tr,
        status: Ok(()),
    }
}

fn aligned(s: f64, dt: f64) -> bool {
    let q = s / dt;
    (q - q.round()).abs() < 1e-9
}

/// `‖x̃(t+s; x̃₀, d) − x̃(t; x̃(s; x̃₀, d), d(s+·))‖_M`.
pub fn cocycle_check<T: Real>(
    model: &FiniteModel<T>,
    x0: &DVector<T>,
    signal: &DisturbanceSignal<T>,
    s: T,
    t: T,
    dt: T,
) -> Result<T> {
    let (sf, tf, dtf) = (s.as_f64(), t.as_f64(), dt.as_f64());
    if !aligned(sf, dtf) || !aligned(tf, dtf) || sf < 0.0 {
        return Err(Error::Alignment(format!("s = {sf} and t = {tf} must be nonnegative multiples of dt = {dtf}")));
    }
    let whole = simulate(model, x0, signal, s + t, dt).into_result()?;
    let mid = if sf == 0.0 {
        x0.clone()
    } else {
        simulate(model, x0, signal, s, dt).into_result()?.final_state
    };
    let rest = simulate(model, &mid, &signal.shifted(s), t, dt).into_result()?;
    Ok(model.norm(&(whole.final_state - rest.final_state)))
}
