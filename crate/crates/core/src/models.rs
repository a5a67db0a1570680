//! Vibrating string and Timoshenko beam systems, a controller library, and
//! named scenario presets.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretize::FiniteModel;
use crate::error::{Error, Result};
use crate::phs::{
    Controller, Damping, EnergyDensity, LinearDamping, PortHamiltonianSystem, Potential,
    QuadraticQuartic, SaturatingDamping,
};
use crate::simulate::SignalSpec;
use crate::Real;

/// Positive scalar coefficient profile on `(a, b)` with declared bounds.
#[derive(Clone)]
pub struct Profile<T: Real> {
    f: Arc<dyn Fn(T) -> T + Send + Sync>,
    pub lower: T,
    pub upper: T,
    pub absolutely_continuous: bool,
}

impl<T: Real> std::fmt::Debug for Profile<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Profile")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .finish()
    }
}

impl<T: Real> Profile<T> {
    pub fn constant(c: T) -> Self {
        Self {
            f: Arc::new(move |_| c),
            lower: c,
            upper: c,
            absolutely_continuous: true,
        }
    }

    pub fn from_fn(lower: T, upper: T, f: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            lower,
            upper,
            absolutely_continuous: true,
        }
    }

    pub fn eval(&self, z: T) -> T {
        (self.f)(z)
    }

    fn validate(&self, name: &str, a: T, b: T) -> Result<()> {
        let n = 1000;
        for i in 0..n {
            let z = a + (b - a) * T::from_count(i) / T::from_count(n - 1);
            let v = self.eval(z);
            if !(v > T::zero()) || !v.as_f64().is_finite() {
                return Err(Error::Model(format!(
                    "{name} is not positive at ζ = {}: {}",
                    z.as_f64(),
                    v.as_f64()
                )));
            }
        }
        if !(self.lower > T::zero()) {
            return Err(Error::Model(format!("{name} has nonpositive declared lower bound")));
        }
        Ok(())
    }
}

fn unit_row<T: Real>(cols: usize, idx: &[usize]) -> DMatrix<T> {
    let mut w = DMatrix::zeros(idx.len(), cols);
    for (r, &c) in idx.iter().enumerate() {
        w[(r, c)] = T::one();
    }
    w
}

/// String `ρ w_tt = ∂(T ∂w)` with state `(ρ w_t, ∂w)`, clamped at `a`,
/// force input and velocity output at `b`.
pub fn vibrating_string<T: Real>(
    rho: Profile<T>,
    tension: Profile<T>,
    a: T,
    b: T,
) -> Result<PortHamiltonianSystem<T>> {
    rho.validate("ρ", a, b)?;
    tension.validate("T", a, b)?;
    let lower = (T::one() / rho.upper).min(tension.lower);
    let upper = (T::one() / rho.lower).max(tension.upper);
    let ac = rho.absolutely_continuous && tension.absolutely_continuous;
    let density = EnergyDensity::from_fn(2, lower, upper, ac, move |z| {
        DMatrix::from_diagonal(&DVector::from_vec(vec![T::one() / rho.eval(z), tension.eval(z)]))
    });
    let p1 = DMatrix::from_row_slice(2, 2, &[T::zero(), T::one(), T::one(), T::zero()]);
    PortHamiltonianSystem::new(
        a,
        b,
        vec![DMatrix::zeros(2, 2), p1],
        unit_row(4, &[2]),
        unit_row(4, &[1]),
        unit_row(4, &[0]),
        density,
    )
}

/// Timoshenko beam with state `(∂w − φ, ρ w_t, ∂φ, I_r φ_t)`, clamped at `a`,
/// force and moment inputs and velocity outputs at `b`.
pub fn timoshenko_beam<T: Real>(
    rho: Profile<T>,
    ei: Profile<T>,
    i_r: Profile<T>,
    k_shear: Profile<T>,
    a: T,
    b: T,
) -> Result<PortHamiltonianSystem<T>> {
    rho.validate("ρ", a, b)?;
    ei.validate("EI", a, b)?;
    i_r.validate("I_r", a, b)?;
    k_shear.validate("K", a, b)?;
    let lower = k_shear
        .lower
        .min(T::one() / rho.upper)
        .min(ei.lower)
        .min(T::one() / i_r.upper);
    let upper = k_shear
        .upper
        .max(T::one() / rho.lower)
        .max(ei.upper)
        .max(T::one() / i_r.lower);
    let ac = [&rho, &ei, &i_r, &k_shear].iter().all(|p| p.absolutely_continuous);
    let density = EnergyDensity::from_fn(4, lower, upper, ac, move |z| {
        DMatrix::from_diagonal(&DVector::from_vec(vec![
            k_shear.eval(z),
            T::one() / rho.eval(z),
            ei.eval(z),
            T::one() / i_r.eval(z),
        ]))
    });
    let (o, l) = (T::zero(), T::one());
    let p1 = DMatrix::from_row_slice(4, 4, &[o, l, o, o, l, o, o, o, o, o, o, l, o, o, l, o]);
    let p0 = DMatrix::from_row_slice(4, 4, &[o, o, o, -l, o, o, o, o, o, o, o, o, l, o, o, o]);
    PortHamiltonianSystem::new(
        a,
        b,
        vec![p0, p1],
        unit_row(8, &[5, 7]),
        unit_row(8, &[0, 2]),
        unit_row(8, &[1, 3]),
        density,
    )
}

/// Scalar parameters of the library controllers (all matrices are multiples of identity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerParams {
    pub q: f64,
    pub damping: f64,
    pub alpha: f64,
    pub mass: f64,
    pub b_c: f64,
    pub s_c: f64,
    /// Controller dimension; defaults to the number of ports.
    pub mc: Option<usize>,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            q: 1.0,
            damping: 1.0,
            alpha: 0.25,
            mass: 1.0,
            b_c: 1.0,
            s_c: 1.0,
            mc: None,
        }
    }
}

pub const CONTROLLER_NAMES: [&str; 3] = ["linear_pd", "quartic_pd", "saturating_damper_pd"];

/// Builds a library controller with `k` ports.
pub fn controller_library<T: Real>(name: &str, params: &ControllerParams, k: usize) -> Result<Controller<T>> {
    let mc = params.mc.unwrap_or(k);
    if mc == 0 || k == 0 {
        return Err(Error::Spec("controller needs mc ≥ 1 and k ≥ 1".into()));
    }
    let eye = |n: usize, s: f64| DMatrix::<T>::identity(n, n) * T::lit(s);
    let mut b_c = DMatrix::<T>::zeros(mc, k);
    for i in 0..mc.min(k) {
        b_c[(i, i)] = T::lit(params.b_c);
    }
    let (alpha, damping): (f64, Arc<dyn Damping<T>>) = match name {
        "linear_pd" => (0.0, Arc::new(LinearDamping { d: eye(mc, params.damping) })),
        "quartic_pd" => (params.alpha, Arc::new(LinearDamping { d: eye(mc, params.damping) })),
        "saturating_damper_pd" => (
            params.alpha,
            Arc::new(SaturatingDamping {
                gain: T::lit(params.damping),
            }),
        ),
        other => return Err(Error::Spec(format!("unknown controller `{other}`"))),
    };
    let potential: Arc<dyn Potential<T>> = Arc::new(QuadraticQuartic {
        q: eye(mc, params.q),
        alpha: T::lit(alpha),
    });
    Controller::new(name, eye(mc, params.mass), b_c, eye(k, params.s_c), potential, damping)
}

/// Random smooth initial states: compactly supported bumps in each effort
/// component plus a random controller state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialFamily {
    pub amplitude: f64,
    pub controller_scale: f64,
    /// Zero `v₂` so that the state satisfies the homogeneous boundary relation.
    pub compatible: bool,
}

impl Default for InitialFamily {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            controller_scale: 0.5,
            compatible: false,
        }
    }
}

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

impl InitialFamily {
    pub fn sample<T: Real>(&self, model: &FiniteModel<T>, seed: u64) -> DVector<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (model.grid.a.as_f64(), model.grid.b.as_f64());
        let len = b - a;
        let m = model.m;
        let shapes: Vec<(f64, f64, f64)> = (0..m)
            .map(|_| {
                let c = a + len * rng.gen_range(0.3..0.7);
                let w = len * rng.gen_range(0.1..0.25);
                let amp = self.amplitude * rng.gen_range(-1.0..1.0);
                (c, w, amp)
            })
            .collect();
        let mut out = DVector::zeros(model.dim());
        for i in 0..model.grid.n {
            let z = model.grid.node(i).as_f64();
            let e = DVector::from_fn(m, |c, _| {
                let (cc, w, amp) = shapes[c];
                T::lit(amp * bump((z - cc) / w))
            });
            let h = model.node_density(i);
            let x = h.clone().lu().solve(&e).unwrap_or(e);
            out.rows_mut(i * m, m).copy_from(&x);
        }
        let mc = model.mc();
        let off = model.grid.n * m;
        for j in 0..mc {
            out[off + j] = T::lit(self.controller_scale * rng.gen_range(-1.0..1.0));
            if !self.compatible {
                out[off + mc + j] = T::lit(self.controller_scale * rng.gen_range(-1.0..1.0));
            }
        }
        out
    }
}

/// Named (system, controller, initial family, signal, grid defaults) bundle.
#[derive(Debug, Clone)]
pub struct ScenarioPreset<T: Real> {
    pub name: String,
    pub system: PortHamiltonianSystem<T>,
    pub controller: Option<Controller<T>>,
    pub initial: InitialFamily,
    pub signal: SignalSpec,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
}

pub const PRESET_NAMES: [&str; 6] = [
    "string_linear_pd",
    "string_quartic_pd",
    "string_saturating_pd",
    "string_detached",
    "timoshenko_linear_pd",
    "timoshenko_saturating_pd",
];

pub fn unit_string<T: Real>() -> PortHamiltonianSystem<T> {
    vibrating_string(Profile::constant(T::one()), Profile::constant(T::one()), T::zero(), T::one())
        .expect("unit string is valid")
}

pub fn unit_timoshenko<T: Real>() -> PortHamiltonianSystem<T> {
    let c = || Profile::constant(T::one());
    timoshenko_beam(c(), c(), c(), c(), T::zero(), T::one()).expect("unit beam is valid")
}

/// Looks up a preset; `params` overrides the controller defaults.
pub fn preset<T: Real>(name: &str, params: &ControllerParams) -> Result<ScenarioPreset<T>> {
    let (system, ctrl): (PortHamiltonianSystem<T>, Option<&str>) = match name {
        "string_linear_pd" => (unit_string(), Some("linear_pd")),
        "string_quartic_pd" => (unit_string(), Some("quartic_pd")),
        "string_saturating_pd" => (unit_string(), Some("saturating_damper_pd")),
        "string_detached" => (unit_string(), None),
        "timoshenko_linear_pd" => (unit_timoshenko(), Some("linear_pd")),
        "timoshenko_saturating_pd" => (unit_timoshenko(), Some("saturating_damper_pd")),
        other => return Err(Error::Spec(format!("unknown preset `{other}`"))),
    };
    let k = system.k();
    let controller = ctrl
        .map(|c| controller_library(c, params, k))
        .transpose()?;
    Ok(ScenarioPreset {
        name: name.to_string(),
        system,
        controller,
        initial: InitialFamily::default(),
        signal: SignalSpec::TruncatedStep {
            amplitude: vec![0.5; k],
            duration: 2.0,
        },
        n: 100,
        dt: 1e-2,
        t_end: 20.0,
    })
}

/// Manufactured displacement fields `w(t, ζ)` and rotation `φ(t, ζ)`.
#[derive(Clone)]
pub struct ManufacturedField {
    pub w: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub phi: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl ManufacturedField {
    pub fn new(
        w: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        phi: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            w: Arc::new(w),
            phi: Arc::new(phi),
        }
    }
}

/// The second-order displayed PDE that a first-order system is compared against.
#[derive(Clone, Debug)]
pub enum MechanicalModel<T: Real> {
    String { rho: Profile<T>, tension: Profile<T> },
    Timoshenko {
        rho: Profile<T>,
        ei: Profile<T>,
        i_r: Profile<T>,
        k_shear: Profile<T>,
    },
}

/// How derivatives of the manufactured fields are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Differentiation {
    /// Eighth-order central stencils with step 1e-2: exact for polynomials up to degree 8.
    Exact,
    /// Second-order central differences with spacing `h`.
    Sampled { h: f64 },
}

fn stencil(diff: Differentiation, order: usize) -> (f64, Vec<(f64, f64)>) {
    match (diff, order) {
        (Differentiation::Exact, 1) => (
            1e-2,
            vec![
                (1.0, 4.0 / 5.0),
                (2.0, -1.0 / 5.0),
                (3.0, 4.0 / 105.0),
                (4.0, -1.0 / 280.0),
            ],
        ),
        (Differentiation::Exact, _) => (
            1e-2,
            vec![
                (0.0, -205.0 / 72.0),
                (1.0, 8.0 / 5.0),
                (2.0, -1.0 / 5.0),
                (3.0, 8.0 / 315.0),
                (4.0, -1.0 / 560.0),
            ],
        ),
        (Differentiation::Sampled { h }, 1) => (h, vec![(1.0, 0.5)]),
        (Differentiation::Sampled { h }, _) => (h, vec![(0.0, -2.0), (1.0, 1.0)]),
    }
}

fn deriv(diff: Differentiation, order: usize, f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    let (h, st) = stencil(diff, order);
    let mut acc = 0.0;
    for &(k, c) in &st {
        if k == 0.0 {
            acc += c * f(x);
        } else if order == 1 {
            acc += c * (f(x + k * h) - f(x - k * h));
        } else {
            acc += c * (f(x + k * h) + f(x - k * h));
        }
    }
    acc / h.powi(order as i32)
}

/// Maximum over sample points of `|r_pH − r_displayed|`, where `r_pH` is the
/// residual of `∂_t x = P_1 ∂(Hx) + P_0 Hx` and `r_displayed` the residual of
/// the second-order equations placed in the momentum rows.
pub fn pde_residual_check<T: Real>(
    system: &PortHamiltonianSystem<T>,
    model: &MechanicalModel<T>,
    field: &ManufacturedField,
    times: &[f64],
    n_points: usize,
    diff: Differentiation,
) -> Result<f64> {
    if system.order != 1 {
        return Err(Error::Unsupported("manufactured check needs N = 1".into()));
    }
    let m = system.m;
    let ev = |p: &Profile<T>, z: f64| p.eval(T::lit(z)).as_f64();
    let p1 = system.p[1].map(|v| v.as_f64());
    let p0 = system.p[0].map(|v| v.as_f64());
    let dens = |z: f64| system.density.eval(T::lit(z)).map(|v| v.as_f64());
    let w = field.w.clone();
    let phi = field.phi.clone();
    let dt_ = |f: &dyn Fn(f64, f64) -> f64, t: f64, z: f64| deriv(diff, 1, &|s| f(s, z), t);
    let dz_ = |f: &dyn Fn(f64, f64) -> f64, t: f64, z: f64| deriv(diff, 1, &|s| f(t, s), z);

    let state = |t: f64, z: f64| -> DVector<f64> {
        let wt = dt_(&*w, t, z);
        let wz = dz_(&*w, t, z);
        match model {
            MechanicalModel::String { rho, .. } => DVector::from_vec(vec![ev(rho, z) * wt, wz]),
            MechanicalModel::Timoshenko { rho, i_r, .. } => {
                let ph = phi(t, z);
                let pt = dt_(&*phi, t, z);
                let pz = dz_(&*phi, t, z);
                DVector::from_vec(vec![wz - ph, ev(rho, z) * wt, pz, ev(i_r, z) * pt])
            }
        }
    };
    let displayed = |t: f64, z: f64| -> DVector<f64> {
        let wtt = deriv(diff, 2, &|s| w(s, z), t);
        match model {
            MechanicalModel::String { rho, tension } => {
                let flux = deriv(diff, 1, &|s| ev(tension, s) * dz_(&*w, t, s), z);
                DVector::from_vec(vec![ev(rho, z) * wtt - flux, 0.0])
            }
            MechanicalModel::Timoshenko {
                rho,
                ei,
                i_r,
                k_shear,
            } => {
                let shear = |s: f64| ev(k_shear, s) * (dz_(&*w, t, s) - phi(t, s));
                let r1 = ev(rho, z) * wtt - deriv(diff, 1, &shear, z);
                let ptt = deriv(diff, 2, &|s| phi(s, z), t);
                let bend = deriv(diff, 1, &|s| ev(ei, s) * dz_(&*phi, t, s), z);
                let r2 = ev(i_r, z) * ptt - bend - shear(z);
                DVector::from_vec(vec![0.0, r1, 0.0, r2])
            }
        }
    };
    let (a, b) = (system.a.as_f64(), system.b.as_f64());
    let mut worst = 0.0f64;
    for &t in times {
        for i in 0..n_points {
            let z = a + (b - a) * (i as f64 + 0.5) / n_points as f64;
            let xt = DVector::from_fn(m, |c, _| deriv(diff, 1, &|s| state(s, z)[c], t));
            let dhx = DVector::from_fn(m, |c, _| deriv(diff, 1, &|s| (dens(s) * state(t, s))[c], z));
            let hx = dens(z) * state(t, z);
            let r_ph = xt - &p1 * dhx - &p0 * hx;
            let r = (r_ph - displayed(t, z)).amax();
            worst = worst.max(r);
        }
    }
    Ok(worst)
}
