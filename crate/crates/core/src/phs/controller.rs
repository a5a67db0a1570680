use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::Real;

/// Controller potential energy `𝒫`.
pub trait Potential<T: Real>: Send + Sync {
    fn value(&self, v: &DVector<T>) -> T;
    fn gradient(&self, v: &DVector<T>) -> DVector<T>;

    /// Hessian; central differences of the gradient unless overridden.
    fn hessian(&self, v: &DVector<T>) -> DMatrix<T> {
        fd_jacobian(|w| self.gradient(w), v)
    }

    /// Whether `hessian` is analytic (used to decide on Newton warnings).
    fn analytic_hessian(&self) -> bool {
        false
    }

    /// Discrete gradient with `ḡ(a, b)·(b − a) = 𝒫(b) − 𝒫(a)`.
    fn discrete_gradient(&self, a: &DVector<T>, b: &DVector<T>) -> DVector<T> {
        gonzalez(self, a, b)
    }
}

/// Controller damping map `ℛ`.
pub trait Damping<T: Real>: Send + Sync {
    fn eval(&self, w: &DVector<T>) -> DVector<T>;

    fn jacobian(&self, w: &DVector<T>) -> DMatrix<T> {
        fd_jacobian(|x| self.eval(x), w)
    }

    fn analytic_jacobian(&self) -> bool {
        false
    }
}

pub(crate) fn fd_jacobian<T: Real>(f: impl Fn(&DVector<T>) -> DVector<T>, v: &DVector<T>) -> DMatrix<T> {
    let n = v.len();
    let step = T::eps().cbrt() * (T::one() + v.amax());
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut vp = v.clone();
        let mut vm = v.clone();
        vp[j] += step;
        vm[j] -= step;
        let col = (f(&vp) - f(&vm)) / (step + step);
        jac.set_column(j, &col);
    }
    jac
}

fn gonzalez<T: Real, P: Potential<T> + ?Sized>(p: &P, a: &DVector<T>, b: &DVector<T>) -> DVector<T> {
    let mid = (a + b) * T::lit(0.5);
    let g = p.gradient(&mid);
    let d = b - a;
    let dd = d.norm_squared();
    let floor = T::eps().sqrt() * (T::one() + mid.norm());
    if dd.sqrt() <= floor {
        return g;
    }
    let defect = p.value(b) - p.value(a) - g.dot(&d);
    g + d * (defect / dd)
}

/// `𝒫(v) = ½ vᵀQv + α |v|⁴`.
#[derive(Debug, Clone)]
pub struct QuadraticQuartic<T: Real> {
    pub q: DMatrix<T>,
    pub alpha: T,
}

impl<T: Real> Potential<T> for QuadraticQuartic<T> {
    fn value(&self, v: &DVector<T>) -> T {
        let r2 = v.norm_squared();
        T::lit(0.5) * v.dot(&(&self.q * v)) + self.alpha * r2 * r2
    }

    fn gradient(&self, v: &DVector<T>) -> DVector<T> {
        let qs = linalg::sym(&self.q);
        qs * v + v * (T::lit(4.0) * self.alpha * v.norm_squared())
    }

    fn hessian(&self, v: &DVector<T>) -> DMatrix<T> {
        let n = v.len();
        let four_a = T::lit(4.0) * self.alpha;
        linalg::sym(&self.q)
            + DMatrix::identity(n, n) * (four_a * v.norm_squared())
            + (v * v.transpose()) * (four_a + four_a)
    }

    fn analytic_hessian(&self) -> bool {
        true
    }

    fn discrete_gradient(&self, a: &DVector<T>, b: &DVector<T>) -> DVector<T> {
        if self.alpha == T::zero() {
            linalg::sym(&self.q) * ((a + b) * T::lit(0.5))
        } else {
            gonzalez(self, a, b)
        }
    }
}

/// `ℛ(w) = D w`.
#[derive(Debug, Clone)]
pub struct LinearDamping<T: Real> {
    pub d: DMatrix<T>,
}

impl<T: Real> Damping<T> for LinearDamping<T> {
    fn eval(&self, w: &DVector<T>) -> DVector<T> {
        &self.d * w
    }
    fn jacobian(&self, _w: &DVector<T>) -> DMatrix<T> {
        self.d.clone()
    }
    fn analytic_jacobian(&self) -> bool {
        true
    }
}

/// `ℛ(w) = c·w / (1 + |w|)`.
#[derive(Debug, Clone)]
pub struct SaturatingDamping<T: Real> {
    pub gain: T,
}

impl<T: Real> Damping<T> for SaturatingDamping<T> {
    fn eval(&self, w: &DVector<T>) -> DVector<T> {
        w * (self.gain / (T::one() + w.norm()))
    }
    fn jacobian(&self, w: &DVector<T>) -> DMatrix<T> {
        let n = w.len();
        let r = w.norm();
        let s = T::one() + r;
        let mut j = DMatrix::identity(n, n) * (self.gain / s);
        if r > T::zero() {
            j -= (w * w.transpose()) * (self.gain / (s * s * r));
        }
        j
    }
    fn analytic_jacobian(&self) -> bool {
        true
    }
}

type ScalarFn<T> = Box<dyn Fn(&DVector<T>) -> T + Send + Sync>;
type VectorFn<T> = Box<dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync>;

/// Potential from closures (value, gradient).
pub struct FnPotential<T: Real> {
    value: ScalarFn<T>,
    gradient: VectorFn<T>,
}

impl<T: Real> FnPotential<T> {
    pub fn new(
        value: impl Fn(&DVector<T>) -> T + Send + Sync + 'static,
        gradient: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Box::new(value),
            gradient: Box::new(gradient),
        }
    }
}

impl<T: Real> Potential<T> for FnPotential<T> {
    fn value(&self, v: &DVector<T>) -> T {
        (self.value)(v)
    }
    fn gradient(&self, v: &DVector<T>) -> DVector<T> {
        (self.gradient)(v)
    }
}

pub struct FnDamping<T: Real> {
    f: VectorFn<T>,
}

impl<T: Real> FnDamping<T> {
    pub fn new(f: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static) -> Self {
        Self { f: Box::new(f) }
    }
}

impl<T: Real> Damping<T> for FnDamping<T> {
    fn eval(&self, w: &DVector<T>) -> DVector<T> {
        (self.f)(w)
    }
}

/// Dynamic controller
/// `v₁' = K v₂`, `v₂' = −∇𝒫(v₁) − ℛ(K v₂) + B_c u_c`, `y_c = B_cᵀ K v₂ + S_c u_c`.
#[derive(Clone)]
pub struct Controller<T: Real> {
    pub name: String,
    pub k_mass: DMatrix<T>,
    pub b_c: DMatrix<T>,
    pub s_c: DMatrix<T>,
    pub potential: Arc<dyn Potential<T>>,
    pub damping: Arc<dyn Damping<T>>,
    varsigma: T,
}

impl<T: Real> fmt::Debug for Controller<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Controller")
            .field("name", &self.name)
            .field("k_mass", &self.k_mass)
            .field("b_c", &self.b_c)
            .field("s_c", &self.s_c)
            .field("varsigma", &self.varsigma)
            .finish()
    }
}

impl<T: Real> Controller<T> {
    /// Checks shapes; `K ≻ 0` and `ς > 0` are verdicts of the conditions module.
    pub fn new(
        name: impl Into<String>,
        k_mass: DMatrix<T>,
        b_c: DMatrix<T>,
        s_c: DMatrix<T>,
        potential: Arc<dyn Potential<T>>,
        damping: Arc<dyn Damping<T>>,
    ) -> Result<Self> {
        let mc = k_mass.nrows();
        if k_mass.ncols() != mc || mc == 0 {
            return Err(Error::Input("K must be square and nonempty".into()));
        }
        let k = s_c.nrows();
        if s_c.ncols() != k || k == 0 {
            return Err(Error::Input("S_c must be square and nonempty".into()));
        }
        if b_c.shape() != (mc, k) {
            return Err(Error::Input(format!("B_c must be {mc}×{k}")));
        }
        let varsigma = linalg::sym_eigenvalues(&linalg::sym(&s_c))[0];
        Ok(Self {
            name: name.into(),
            k_mass,
            b_c,
            s_c,
            potential,
            damping,
            varsigma,
        })
    }

    pub fn mc(&self) -> usize {
        self.k_mass.nrows()
    }

    pub fn k(&self) -> usize {
        self.s_c.nrows()
    }

    /// Smallest eigenvalue of the symmetric part of `S_c`.
    pub fn varsigma(&self) -> T {
        self.varsigma
    }

    pub fn rhs(&self, v1: &DVector<T>, v2: &DVector<T>, u_c: &DVector<T>) -> Result<(DVector<T>, DVector<T>)> {
        let kv2 = &self.k_mass * v2;
        let grad = self.potential.gradient(v1);
        let r = self.damping.eval(&kv2);
        if !linalg::is_finite(grad.as_slice()) || !linalg::is_finite(r.as_slice()) {
            return Err(Error::Model("non-finite potential gradient or damping".into()));
        }
        let dv2 = -grad - r + &self.b_c * u_c;
        Ok((kv2, dv2))
    }

    pub fn output(&self, v2: &DVector<T>, u_c: &DVector<T>) -> DVector<T> {
        self.b_c.transpose() * (&self.k_mass * v2) + &self.s_c * u_c
    }

    /// `E_c = 𝒫(v₁) + ½ v₂ᵀK v₂`.
    pub fn energy(&self, v1: &DVector<T>, v2: &DVector<T>) -> T {
        self.potential.value(v1) + T::lit(0.5) * v2.dot(&(&self.k_mass * v2))
    }
}
