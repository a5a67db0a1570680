//! Semidiscretization of the closed loop: summation-by-parts differences with
//! weak (penalty) enforcement of the boundary relation `ℬ̃x̃ = d`.
//!
//! The penalty correction `Δ = Λρ` of the boundary residual `ρ` satisfies
//! `W_B1 Δ = ρ₁`, `W_B2 Δ = ρ₂` and `W_C Δ = 0`; among those, `Λ` minimizes the
//! component of `Δ` along the negative eigenspace of `Σ`. Appending
//! `H_q^{-1} Sᵀ Σ Δ` to the node equations turns the discrete energy rate into
//! `dᵀy − yᵀS_c y − (Kv₂)ᵀℛ(Kv₂) + Σ w eᵀP₀e − ½ΔᵀΣΔ − (artificial dissipation)`.

mod spectrum;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::phs::{endpoint_stencils, Controller, Grid, PortHamiltonianSystem};
use crate::Real;

pub use spectrum::{discrete_generator_spectrum, resolved_modes, Mode, Spectrum};

/// Spatial scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Scheme {
    /// Second-order SBP differences with penalty boundary closure (N = 1).
    /// `dissipation` scales the fourth-difference term `c·Δ²ᵀΔ² ⊗ |P₁|`.
    SbpSat { dissipation: f64 },
    /// Repeated central differences of every order with the same penalty
    /// closure. No energy guarantee.
    CentralExperimental,
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme::SbpSat {
            dissipation: 1.0 / 12.0,
        }
    }
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::SbpSat { .. } => "sbp-sat",
            Scheme::CentralExperimental => "central-experimental",
        }
    }
}

#[derive(Debug, Clone)]
struct Closure<T: Real> {
    sigma: DMatrix<T>,
    /// `z = trace_x · x` (node-major plant state).
    trace_x: DMatrix<T>,
    resid_x: DMatrix<T>,
    resid_v2: DMatrix<T>,
    resid_d: DMatrix<T>,
    lambda: DMatrix<T>,
    w_b2: DMatrix<T>,
    w_c: DMatrix<T>,
    p0: DMatrix<T>,
    dissipation: T,
    abs_p1: DMatrix<T>,
}

/// Semidiscrete closed loop `x̃' = A_d x̃ + F(x̃) + G_d d`, `y = C_d x̃`.
///
/// State layout: node-major plant values (`m` per node), then `v₁`, then `v₂`.
#[derive(Debug, Clone)]
pub struct FiniteModel<T: Real> {
    pub grid: Grid<T>,
    pub m: usize,
    pub order: usize,
    pub scheme: String,
    pub experimental: bool,
    pub a_d: DMatrix<T>,
    pub g_d: DMatrix<T>,
    pub c_d: DMatrix<T>,
    pub controller: Option<Controller<T>>,
    weights: DVector<T>,
    densities: Vec<DMatrix<T>>,
    closure: Option<Closure<T>>,
}

/// Terms of the discrete energy balance at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Balance {
    /// `∇Ẽ · rhs`.
    pub rate: f64,
    /// `dᵀy`.
    pub supply: f64,
    /// `yᵀS_c y`.
    pub feedthrough: f64,
    /// `(Kv₂)ᵀℛ(Kv₂)`.
    pub damping: f64,
    /// `Σ w eᵀP₀e`.
    pub interior: f64,
    /// Artificial dissipation contribution (≤ 0).
    pub dissipation: f64,
    /// `−½ΔᵀΣΔ` (≤ 0).
    pub penalty: f64,
    /// Passivity defect of the corrected trace (0 for energy-preserving systems).
    pub defect: f64,
}

impl Balance {
    /// Everything except the supply, feedthrough and controller damping.
    pub fn remainder(&self) -> f64 {
        self.interior + self.dissipation + self.penalty + self.defect
    }

    /// `rate − (closed-form right-hand side)`.
    pub fn exact_residual(&self) -> f64 {
        self.rate - (self.supply - self.feedthrough - self.damping + self.remainder())
    }

    pub fn scale(&self) -> f64 {
        [
            self.rate,
            self.supply,
            self.feedthrough,
            self.damping,
            self.interior,
            self.dissipation,
            self.penalty,
            self.defect,
        ]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Result of [`verify_semidiscrete_balance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalanceCheck {
    /// Max over samples of `|exact_residual| / (scale + ‖x̃‖²_M)`.
    pub boundary_residual: f64,
    /// Max over samples of `|remainder| / ‖x̃‖²_M`.
    pub remainder: f64,
    /// Max over samples of the homogeneous rate `x̃ᵀM·rhs(x̃, 0) / ‖x̃‖²_M`.
    pub homogeneous_rate: f64,
}

fn sbp_first_derivative<T: Real>(n: usize, h: T) -> DMatrix<T> {
    let mut d = DMatrix::zeros(n, n);
    let half = T::lit(0.5) / h;
    for i in 1..n - 1 {
        d[(i, i - 1)] = -half;
        d[(i, i + 1)] = half;
    }
    d[(0, 0)] = -T::one() / h;
    d[(0, 1)] = T::one() / h;
    d[(n - 1, n - 2)] = -T::one() / h;
    d[(n - 1, n - 1)] = T::one() / h;
    d
}

fn second_difference_gram<T: Real>(n: usize) -> DMatrix<T> {
    let mut d2 = DMatrix::zeros(n - 2, n);
    for i in 0..n - 2 {
        d2[(i, i)] = T::one();
        d2[(i, i + 1)] = T::lit(-2.0);
        d2[(i, i + 2)] = T::one();
    }
    d2.transpose() * d2
}

/// Assembles the semidiscrete closed loop on `n` nodes. `controller = None`
/// gives the plant alone driven by `u = d`.
pub fn discretize_closed_loop<T: Real>(
    system: &PortHamiltonianSystem<T>,
    controller: Option<&Controller<T>>,
    n: usize,
    scheme: Scheme,
) -> Result<FiniteModel<T>> {
    if n < 16 {
        return Err(Error::Resolution { nodes: n, required: 16 });
    }
    let order = system.order;
    if matches!(scheme, Scheme::SbpSat { .. }) && order != 1 {
        return Err(Error::Unsupported(format!("sbp-sat needs N = 1, system has N = {order}")));
    }
    if n < 2 * order + 2 {
        return Err(Error::Resolution {
            nodes: n,
            required: 2 * order + 2,
        });
    }
    if let Some(c) = controller {
        if c.k() != system.k() {
            return Err(Error::Interconnection {
                plant: system.k(),
                controller: c.k(),
            });
        }
    }
    let grid = Grid::new(system.a, system.b, n)?;
    let m = system.m;
    let k = system.k();
    let mc = controller.map_or(0, |c| c.mc());
    let nx = n * m;
    let dim = nx + 2 * mc;
    let h = grid.h();
    let weights = grid.trapezoid_weights();
    let densities: Vec<DMatrix<T>> = (0..n).map(|i| system.density.eval(grid.node(i))).collect();

    let mut hblk = DMatrix::zeros(nx, nx);
    for (i, hi) in densities.iter().enumerate() {
        hblk.view_mut((i * m, i * m), (m, m)).copy_from(hi);
    }

    // interior operator on e = Hx
    let d1 = sbp_first_derivative(n, h);
    let mut op_e = DMatrix::zeros(nx, nx);
    let mut dl = DMatrix::identity(n, n);
    for l in 1..=order {
        dl = &d1 * &dl;
        let pl = &system.p[l];
        for i in 0..n {
            for j in 0..n {
                let c = dl[(i, j)];
                if c != T::zero() {
                    let mut blk = op_e.view_mut((i * m, j * m), (m, m));
                    blk += pl * c;
                }
            }
        }
    }
    for i in 0..n {
        let mut blk = op_e.view_mut((i * m, i * m), (m, m));
        blk += &system.p[0];
    }
    let (dissipation, abs_p1) = match scheme {
        Scheme::SbpSat { dissipation } => (T::lit(dissipation), linalg::sym_abs(&system.p[1])),
        Scheme::CentralExperimental => (T::zero(), DMatrix::zeros(m, m)),
    };
    if dissipation != T::zero() {
        let b2 = second_difference_gram::<T>(n);
        for i in 0..n {
            for j in i.saturating_sub(2)..(i + 3).min(n) {
                let c = b2[(i, j)] * dissipation / weights[i];
                let mut blk = op_e.view_mut((i * m, j * m), (m, m));
                blk -= &abs_p1 * c;
            }
        }
    }

    // trace operator on e
    let tl = system.trace_len();
    let half = tl / 2;
    let stencils = endpoint_stencils(order, h.as_f64());
    let mut trace_e = DMatrix::zeros(tl, nx);
    for l in 0..order {
        for (j, &w) in stencils[l].iter().enumerate() {
            let w = T::lit(w);
            let wb = if l % 2 == 0 { w } else { -w };
            for c in 0..m {
                trace_e[(l * m + c, (n - 1 - j) * m + c)] += wb;
                trace_e[(half + l * m + c, j * m + c)] += w;
            }
        }
    }
    let trace_x = &trace_e * &hblk;

    // penalty map Λ
    let sigma = system.boundary_form();
    let w = system.w_matrix();
    let rows = w.nrows();
    let tol = T::lit(1e-10);
    if linalg::rank(&w, tol) != rows {
        return Err(Error::Assembly("W = [W_B1; W_B2; W_C] is not of full row rank".into()));
    }
    let nr = m * order;
    let mut target = DMatrix::zeros(rows, nr);
    for i in 0..nr {
        target[(i, i)] = T::one();
    }
    let lambda_p = linalg::pinv(&w, tol) * target;
    let kernel = linalg::null_space(&w, tol);
    let v_minus = linalg::negative_eigenspace(&sigma, tol);
    let lambda = if kernel.ncols() > 0 && v_minus.ncols() > 0 {
        let vn = v_minus.transpose() * &kernel;
        let beta = linalg::pinv(&vn, tol) * (v_minus.transpose() * &lambda_p);
        &lambda_p - &kernel * beta
    } else {
        lambda_p
    };
    let gram = lambda.transpose() * &sigma * &lambda;
    let gev = linalg::sym_eigenvalues(&linalg::sym(&gram));
    let gscale = gram.norm().max(T::one());
    if gev.first().is_some_and(|&e| e < -T::lit(1e-10).max(T::eps() * T::lit(64.0)) * gscale) {
        return Err(Error::Assembly(format!(
            "penalty parameter infeasible: ΛᵀΣΛ has eigenvalue {}",
            gev[0].as_f64()
        )));
    }

    let zeros_k = || DMatrix::<T>::zeros(k, k);
    let (s_c, b_c, kmass) = match controller {
        Some(c) => (c.s_c.clone(), c.b_c.clone(), c.k_mass.clone()),
        None => (zeros_k(), DMatrix::zeros(0, k), DMatrix::zeros(0, 0)),
    };
    let r1 = system.w_b1.nrows();
    let mut resid_x = DMatrix::zeros(nr, nx);
    resid_x
        .view_mut((0, 0), (r1, nx))
        .copy_from(&(-(&system.w_b1 * &trace_x)));
    resid_x
        .view_mut((r1, 0), (k, nx))
        .copy_from(&(-((&system.w_b2 + &s_c * &system.w_c) * &trace_x)));
    let mut resid_v2 = DMatrix::zeros(nr, mc);
    if mc > 0 {
        resid_v2
            .view_mut((r1, 0), (k, mc))
            .copy_from(&(-(b_c.transpose() * &kmass)));
    }
    let mut resid_d = DMatrix::zeros(nr, k);
    resid_d.view_mut((r1, 0), (k, k)).fill_with_identity();

    // W^{-1} S_eᵀ Σ Λ
    let mut winv_st = trace_e.transpose();
    for i in 0..n {
        let s = T::one() / weights[i];
        winv_st.rows_mut(i * m, m).scale_mut(s);
    }
    let pen = &winv_st * &sigma * &lambda;

    let mut a_d = DMatrix::zeros(dim, dim);
    a_d.view_mut((0, 0), (nx, nx))
        .copy_from(&(&op_e * &hblk + &pen * &resid_x));
    if mc > 0 {
        a_d.view_mut((0, nx + mc), (nx, mc)).copy_from(&(&pen * &resid_v2));
        a_d.view_mut((nx, nx + mc), (mc, mc)).copy_from(&kmass);
        a_d.view_mut((nx + mc, nx), (mc, mc))
            .copy_from(&(-DMatrix::<T>::identity(mc, mc)));
        a_d.view_mut((nx + mc, 0), (mc, nx))
            .copy_from(&(&b_c * &system.w_c * &trace_x));
    }
    let mut g_d = DMatrix::zeros(dim, k);
    g_d.view_mut((0, 0), (nx, k)).copy_from(&(&pen * &resid_d));
    let mut c_d = DMatrix::zeros(k, dim);
    c_d.view_mut((0, 0), (k, nx)).copy_from(&(&system.w_c * &trace_x));

    Ok(FiniteModel {
        grid,
        m,
        order,
        scheme: scheme.label().to_string(),
        experimental: matches!(scheme, Scheme::CentralExperimental),
        a_d,
        g_d,
        c_d,
        controller: controller.cloned(),
        weights,
        densities,
        closure: Some(Closure {
            sigma,
            trace_x,
            resid_x,
            resid_v2,
            resid_d,
            lambda,
            w_b2: system.w_b2.clone(),
            w_c: system.w_c.clone(),
            p0: system.p[0].clone(),
            dissipation,
            abs_p1,
        }),
    })
}

impl<T: Real> FiniteModel<T> {
    /// Plain linear model `x' = A x + G d`, `y = C x` with energy `½ Σ wᵢ xᵢ²`
    /// (one component per node, no controller, no boundary closure).
    pub fn from_matrices(a: DMatrix<T>, g: DMatrix<T>, c: DMatrix<T>, weights: DVector<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || g.nrows() != n || c.ncols() != n || weights.len() != n || g.ncols() != c.nrows() {
            return Err(Error::Input("inconsistent matrix shapes".into()));
        }
        if weights.iter().any(|&w| !(w > T::zero())) {
            return Err(Error::Input("energy weights must be positive".into()));
        }
        Ok(Self {
            grid: Grid::new(T::zero(), T::one(), n.max(2))?,
            m: 1,
            order: 1,
            scheme: "matrices".into(),
            experimental: false,
            a_d: a,
            g_d: g,
            c_d: c,
            controller: None,
            weights,
            densities: vec![DMatrix::identity(1, 1); n],
            closure: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.a_d.nrows()
    }

    pub fn nx(&self) -> usize {
        self.dim() - 2 * self.mc()
    }

    pub fn mc(&self) -> usize {
        self.controller.as_ref().map_or(0, |c| c.mc())
    }

    pub fn k(&self) -> usize {
        self.g_d.ncols()
    }

    pub fn nodes(&self) -> usize {
        self.densities.len()
    }

    pub fn weights(&self) -> &DVector<T> {
        &self.weights
    }

    pub fn node_density(&self, i: usize) -> &DMatrix<T> {
        &self.densities[i]
    }

    pub fn v1<'a>(&self, x: &'a DVector<T>) -> nalgebra::DVectorView<'a, T> {
        x.rows(self.nx(), self.mc())
    }

    pub fn v2<'a>(&self, x: &'a DVector<T>) -> nalgebra::DVectorView<'a, T> {
        x.rows(self.nx() + self.mc(), self.mc())
    }

    /// Node efforts `e_i = H_i x_i`, node-major.
    pub fn effort(&self, x: &DVector<T>) -> DVector<T> {
        let m = self.m;
        let mut e = DVector::zeros(self.nx());
        for (i, h) in self.densities.iter().enumerate() {
            e.rows_mut(i * m, m).copy_from(&(h * x.rows(i * m, m)));
        }
        e
    }

    pub fn plant_energy(&self, x: &DVector<T>) -> T {
        let m = self.m;
        let e = self.effort(x);
        let mut acc = T::zero();
        for i in 0..self.nodes() {
            acc += self.weights[i] * x.rows(i * m, m).dot(&e.rows(i * m, m));
        }
        acc * T::lit(0.5)
    }

    pub fn controller_energy(&self, x: &DVector<T>) -> T {
        match &self.controller {
            Some(c) => c.energy(&self.v1(x).into_owned(), &self.v2(x).into_owned()),
            None => T::zero(),
        }
    }

    /// Quadrature closed-loop energy `Ẽ`.
    pub fn energy(&self, x: &DVector<T>) -> T {
        self.plant_energy(x) + self.controller_energy(x)
    }

    /// `‖x̃‖²_M = Σ wᵢ xᵢᵀHᵢxᵢ + |v₁|² + v₂ᵀKv₂`.
    pub fn norm_sq(&self, x: &DVector<T>) -> T {
        let mut acc = self.plant_energy(x) * T::lit(2.0);
        if let Some(c) = &self.controller {
            let v2 = self.v2(x).into_owned();
            acc += self.v1(x).norm_squared() + v2.dot(&(&c.k_mass * &v2));
        }
        acc
    }

    pub fn norm(&self, x: &DVector<T>) -> T {
        self.norm_sq(x).sqrt()
    }

    /// Dense `M` (plant blocks `wᵢHᵢ`, identity on `v₁`, `K` on `v₂`).
    pub fn m_matrix(&self) -> DMatrix<T> {
        let (m, dim, nx, mc) = (self.m, self.dim(), self.nx(), self.mc());
        let mut out = DMatrix::zeros(dim, dim);
        for (i, h) in self.densities.iter().enumerate() {
            out.view_mut((i * m, i * m), (m, m)).copy_from(&(h * self.weights[i]));
        }
        if let Some(c) = &self.controller {
            out.view_mut((nx, nx), (mc, mc)).fill_with_identity();
            out.view_mut((nx + mc, nx + mc), (mc, mc)).copy_from(&c.k_mass);
        }
        out
    }

    /// `∇Ẽ = (wᵢHᵢxᵢ, ∇𝒫(v₁), K v₂)`.
    pub fn energy_gradient(&self, x: &DVector<T>) -> DVector<T> {
        let (m, nx, mc) = (self.m, self.nx(), self.mc());
        let e = self.effort(x);
        let mut g = DVector::zeros(self.dim());
        for i in 0..self.nodes() {
            g.rows_mut(i * m, m).copy_from(&(e.rows(i * m, m) * self.weights[i]));
        }
        if let Some(c) = &self.controller {
            g.rows_mut(nx, mc)
                .copy_from(&c.potential.gradient(&self.v1(x).into_owned()));
            g.rows_mut(nx + mc, mc)
                .copy_from(&(&c.k_mass * self.v2(x)));
        }
        g
    }

    /// `M`-weighted inner product `aᵀM b`.
    pub fn m_dot(&self, a: &DVector<T>, b: &DVector<T>) -> T {
        let (m, nx, mc) = (self.m, self.nx(), self.mc());
        let mut acc = T::zero();
        for (i, h) in self.densities.iter().enumerate() {
            acc += self.weights[i] * a.rows(i * m, m).dot(&(h * b.rows(i * m, m)));
        }
        if let Some(c) = &self.controller {
            acc += a.rows(nx, mc).dot(&b.rows(nx, mc));
            acc += a.rows(nx + mc, mc).dot(&(&c.k_mass * b.rows(nx + mc, mc)));
        }
        acc
    }

    pub fn output(&self, x: &DVector<T>) -> DVector<T> {
        &self.c_d * x
    }

    /// `v₁ − ∇𝒫(v₁) − ℛ(Kv₂)` (the v₂-block of `F`), with `∇𝒫` replaced by `grad`.
    pub(crate) fn nonlinear_with(&self, v1: &DVector<T>, v2: &DVector<T>, grad: DVector<T>) -> DVector<T> {
        let c = self.controller.as_ref().expect("controller present");
        v1 - grad - c.damping.eval(&(&c.k_mass * v2))
    }

    /// Full nonlinear term `F(x̃)`.
    pub fn nonlinear(&self, x: &DVector<T>) -> DVector<T> {
        let mut f = DVector::zeros(self.dim());
        if let Some(c) = &self.controller {
            let (nx, mc) = (self.nx(), self.mc());
            let v1 = self.v1(x).into_owned();
            let v2 = self.v2(x).into_owned();
            let g = c.potential.gradient(&v1);
            f.rows_mut(nx + mc, mc).copy_from(&self.nonlinear_with(&v1, &v2, g));
        }
        f
    }

    pub fn rhs(&self, x: &DVector<T>, d: &DVector<T>) -> DVector<T> {
        &self.a_d * x + self.nonlinear(x) + &self.g_d * d
    }

    /// Linearization of `A_d + F` at the origin.
    pub fn linearization(&self) -> DMatrix<T> {
        let mut j = self.a_d.clone();
        if let Some(c) = &self.controller {
            let (nx, mc) = (self.nx(), self.mc());
            let z = DVector::zeros(mc);
            let hess = c.potential.hessian(&z);
            let dr = c.damping.jacobian(&z) * &c.k_mass;
            let eye = DMatrix::<T>::identity(mc, mc);
            let mut b1 = j.view_mut((nx + mc, nx), (mc, mc));
            b1 += eye - hess;
            let mut b2 = j.view_mut((nx + mc, nx + mc), (mc, mc));
            b2 -= dr;
        }
        j
    }

    /// Terms of the discrete energy balance at `(x̃, d)`.
    pub fn balance(&self, x: &DVector<T>, d: &DVector<T>) -> Balance {
        let rate = self.energy_gradient(x).dot(&self.rhs(x, d));
        self.balance_with_rate(x, d, rate)
    }

    pub(crate) fn balance_with_rate(&self, x: &DVector<T>, d: &DVector<T>, rate: T) -> Balance {
        let y = self.output(x);
        let supply = d.dot(&y);
        let (mut feedthrough, mut damping) = (T::zero(), T::zero());
        if let Some(c) = &self.controller {
            feedthrough = y.dot(&(&c.s_c * &y));
            let kv2 = &c.k_mass * self.v2(x);
            damping = kv2.dot(&c.damping.eval(&kv2));
        }
        let (mut interior, mut dissipation, mut penalty, mut defect) = (T::zero(), T::zero(), T::zero(), T::zero());
        if let Some(cl) = &self.closure {
            let (m, n, nx) = (self.m, self.nodes(), self.nx());
            let e = self.effort(x);
            for i in 0..n {
                let ei = e.rows(i * m, m);
                interior += self.weights[i] * ei.dot(&(&cl.p0 * ei));
            }
            if cl.dissipation != T::zero() {
                let mut acc = T::zero();
                for i in 0..n - 2 {
                    let dd = e.rows(i * m, m) - e.rows((i + 1) * m, m) * T::lit(2.0) + e.rows((i + 2) * m, m);
                    acc += dd.dot(&(&cl.abs_p1 * &dd));
                }
                dissipation = -cl.dissipation * acc;
            }
            let xs = x.rows(0, nx);
            let z = &cl.trace_x * xs;
            let mut rho = &cl.resid_x * xs + &cl.resid_d * d;
            if self.mc() > 0 {
                rho += &cl.resid_v2 * self.v2(x);
            }
            let delta = &cl.lambda * rho;
            penalty = -T::lit(0.5) * delta.dot(&(&cl.sigma * &delta));
            let zs = z + delta;
            defect = T::lit(0.5) * zs.dot(&(&cl.sigma * &zs)) - (&cl.w_b2 * &zs).dot(&(&cl.w_c * &zs));
        }
        let f = |v: T| v.as_f64();
        Balance {
            rate: f(rate),
            supply: f(supply),
            feedthrough: f(feedthrough),
            damping: f(damping),
            interior: f(interior),
            dissipation: f(dissipation),
            penalty: f(penalty),
            defect: f(defect),
        }
    }
}

/// Compares `∇Ẽ·rhs` against the closed-form balance on random states and
/// disturbances.
pub fn verify_semidiscrete_balance<T: Real>(model: &FiniteModel<T>, n_states: usize, seed: u64) -> BalanceCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BalanceCheck {
        boundary_residual: 0.0,
        remainder: 0.0,
        homogeneous_rate: f64::NEG_INFINITY,
    };
    let dim = model.dim();
    let k = model.k();
    for _ in 0..n_states {
        let x = DVector::from_fn(dim, |_, _| {
            let g: f64 = StandardNormal.sample(&mut rng);
            T::lit(g)
        });
        let d = DVector::from_fn(k, |_, _| {
            let g: f64 = StandardNormal.sample(&mut rng);
            T::lit(g)
        });
        let nsq = model.norm_sq(&x).as_f64();
        let b = model.balance(&x, &d);
        out.boundary_residual = out.boundary_residual.max(b.exact_residual().abs() / (b.scale() + nsq));
        out.remainder = out.remainder.max(b.remainder().abs() / nsq);
        let b0 = model.balance(&x, &DVector::zeros(k));
        out.homogeneous_rate = out.homogeneous_rate.max(b0.rate / nsq);
    }
    if n_states == 0 {
        out.homogeneous_rate = 0.0;
    }
    out
}
