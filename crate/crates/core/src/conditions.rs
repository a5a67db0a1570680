//! Numerical certification of the structural, passivity, solvability and
//! stability hypotheses, collected into a serializable report.
//!
//! Function conditions on `𝒫` and `ℛ` are checked on bounded balls only and
//! are labeled "sampled, not proven".

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::phs::{Controller, PortHamiltonianSystem};
use crate::Real;

pub const STRUCTURAL_TOL: f64 = 1e-12;
pub const INEQUALITY_TOL: f64 = 1e-6;
const SAMPLED: &str = "sampled, not proven";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

impl Verdict {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

/// Counterexample payload attached to failing checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Value { value: f64 },
    Trace { z: Vec<f64>, violation: f64 },
    ControllerSample { point: Vec<f64>, value: f64 },
    Point { zeta: f64, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub verdict: Verdict,
    pub value: Option<f64>,
    pub tolerance: f64,
    pub witness: Option<Witness>,
    pub note: Option<String>,
}

impl Check {
    fn new(name: &str, ok: bool, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            verdict: Verdict::from_bool(ok),
            value: Some(value),
            tolerance,
            witness: None,
            note: None,
        }
    }

    fn witness_if_failed(mut self, w: Witness) -> Self {
        if self.verdict != Verdict::Pass {
            self.witness = Some(w);
        }
        self
    }

    fn note(mut self, s: &str) -> Self {
        self.note = Some(s.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict.passed()
    }
}

fn mf64<T: Real>(a: &DMatrix<T>) -> DMatrix<f64> {
    linalg::to_f64_matrix(a)
}

/// `P_N` invertible, `P_lᵀ = (−1)^{l+1} P_l`, `P_0 + P_0ᵀ ≤ 0`, and `H` bounds on 1000 samples.
pub fn check_structure<T: Real>(system: &PortHamiltonianSystem<T>) -> Vec<Check> {
    let tol = STRUCTURAL_TOL;
    let p: Vec<DMatrix<f64>> = system.p.iter().map(mf64).collect();
    let n = system.order;
    let pn = &p[n];
    let pn_norm = pn.norm();
    let smin = linalg::sigma_min(pn);
    let inv = Check::new("p_n_invertible", pn_norm > 0.0 && smin > tol * pn_norm, smin, tol)
        .witness_if_failed(Witness::Value { value: smin });

    let mut worst = 0.0f64;
    for (l, pl) in p.iter().enumerate().skip(1) {
        let sign = if l % 2 == 1 { 1.0 } else { -1.0 };
        let dev = (pl.transpose() - pl * sign).amax() / pl.amax().max(1.0);
        worst = worst.max(dev);
    }
    let parity = Check::new("parity_symmetry", worst <= tol, worst, tol).witness_if_failed(Witness::Value { value: worst });

    let ev = linalg::sym_eigenvalues(&(&p[0] + p[0].transpose()));
    let emax = ev[ev.len() - 1];
    let diss = Check::new("p0_dissipative", emax <= tol, emax, tol).witness_if_failed(Witness::Value { value: emax });

    let s = system.density.sample(system.a, system.b, 1000);
    let sym = Check::new("density_symmetric", s.max_asymmetry <= tol, s.max_asymmetry, tol)
        .witness_if_failed(Witness::Point {
            zeta: s.worst_point,
            value: s.max_asymmetry,
        });
    let (lo, hi) = (system.density.m_low.as_f64(), system.density.m_high.as_f64());
    let rel = tol * hi.abs().max(1.0);
    let ok = lo > 0.0 && hi < f64::INFINITY && s.min_eigenvalue >= lo - rel && s.max_eigenvalue <= hi + rel;
    let viol = (lo - s.min_eigenvalue).max(s.max_eigenvalue - hi);
    let bounds = Check::new("density_bounds", ok, viol, rel)
        .witness_if_failed(Witness::Point {
            zeta: s.worst_point,
            value: if s.min_eigenvalue < lo { s.min_eigenvalue } else { s.max_eigenvalue },
        })
        .note(SAMPLED);
    vec![inv, parity, diss, sym, bounds]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Surjectivity {
    pub check: Check,
    pub rank: usize,
    pub required: usize,
}

/// Numerical rank of `W = [W_B1; W_B2; W_C]` against `mN + k`.
pub fn check_surjectivity<T: Real>(system: &PortHamiltonianSystem<T>) -> Surjectivity {
    let w = mf64(&system.w_matrix());
    let rank = linalg::rank(&w, 1e-10);
    let required = system.m * system.order + system.k();
    let check = Check::new("surjectivity", rank == required, rank as f64, 1e-10)
        .witness_if_failed(Witness::Value { value: rank as f64 });
    Surjectivity { check, rank, required }
}

/// Smooth test effort `e(ζ)` built from trigonometric modes plus endpoint
/// Hermite polynomials; all derivatives are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct TestField {
    m: usize,
    order: usize,
    a: f64,
    len: f64,
    /// `coef[c][j] = (a_cj, b_cj)` for `cos(jπs)`, `sin(jπs)`.
    coef: Vec<Vec<(f64, f64)>>,
    /// Hermite coefficients per component and trace slot (b-block then a-block).
    hermite: Vec<Vec<f64>>,
    basis: DMatrix<f64>,
}

impl TestField {
    pub fn zero(m: usize, order: usize, a: f64, b: f64) -> Self {
        Self {
            m,
            order,
            a,
            len: b - a,
            coef: vec![vec![(0.0, 0.0); 1]; m],
            hermite: vec![vec![0.0; 2 * order]; m],
            basis: hermite_basis(order),
        }
    }

    pub fn random(m: usize, order: usize, a: f64, b: f64, modes: usize, rng: &mut impl Rng) -> Self {
        let mut f = Self::zero(m, order, a, b);
        f.coef = (0..m)
            .map(|_| {
                (0..=modes)
                    .map(|j| {
                        let s = 1.0 / (1.0 + j as f64);
                        let ga: f64 = StandardNormal.sample(rng);
                        let gb: f64 = StandardNormal.sample(rng);
                        (ga * s, gb * s)
                    })
                    .collect()
            })
            .collect();
        f
    }

    /// `l`-th ζ-derivative of the effort at `ζ`.
    pub fn deriv(&self, zeta: f64, l: usize) -> DVector<f64> {
        let s = (zeta - self.a) / self.len;
        let pi = std::f64::consts::PI;
        let scale = self.len.powi(-(l as i32));
        DVector::from_fn(self.m, |c, _| {
            let mut acc = 0.0;
            for (j, &(ca, cb)) in self.coef[c].iter().enumerate() {
                let w = j as f64 * pi;
                let wl = w.powi(l as i32);
                // derivatives of cos and sin cycle with period 4
                let (dc, ds) = match l % 4 {
                    0 => ((w * s).cos(), (w * s).sin()),
                    1 => (-(w * s).sin(), (w * s).cos()),
                    2 => (-(w * s).cos(), -(w * s).sin()),
                    _ => ((w * s).sin(), -(w * s).cos()),
                };
                if j == 0 && l > 0 {
                    continue;
                }
                acc += wl * (ca * dc + cb * ds);
            }
            let mut poly = 0.0;
            for (slot, &h) in self.hermite[c].iter().enumerate() {
                if h != 0.0 {
                    poly += h * poly_deriv(self.basis.column(slot).as_slice(), s, l);
                }
            }
            (acc + poly) * scale
        })
    }

    /// `z = ((e, e', …)|_b ; (e, e', …)|_a)`.
    pub fn trace(&self) -> DVector<f64> {
        let (m, n) = (self.m, self.order);
        let mut z = DVector::zeros(2 * m * n);
        for l in 0..n {
            z.rows_mut(l * m, m).copy_from(&self.deriv(self.a + self.len, l));
            z.rows_mut(n * m + l * m, m).copy_from(&self.deriv(self.a, l));
        }
        z
    }

    /// Adds `Σ δ_slot φ_slot` so that the trace changes by `delta`.
    fn correct(&mut self, delta: &DVector<f64>) {
        let (m, n) = (self.m, self.order);
        for end in 0..2 {
            for l in 0..n {
                let slot = end * n + l;
                for c in 0..m {
                    // basis slot is scaled in s; convert ζ-derivative target
                    self.hermite[c][slot] += delta[end * n * m + l * m + c] * self.len.powi(l as i32);
                }
            }
        }
    }
}

/// Coefficients (columns) of the degree-`2N−1` polynomials on `[0,1]` whose
/// derivatives `0..N` at `s = 1` (slots `0..N`) and `s = 0` (slots `N..2N`) are unit vectors.
fn hermite_basis(order: usize) -> DMatrix<f64> {
    let deg = 2 * order;
    let mut m = DMatrix::zeros(deg, deg);
    for (end, s) in [(0usize, 1.0f64), (1, 0.0)] {
        for j in 0..order {
            for p in 0..deg {
                m[(end * order + j, p)] = poly_deriv_monomial(p, s, j);
            }
        }
    }
    m.try_inverse().expect("Hermite system is regular")
}

fn poly_deriv_monomial(p: usize, s: f64, l: usize) -> f64 {
    if l > p {
        return 0.0;
    }
    let mut c = 1.0;
    for i in 0..l {
        c *= (p - i) as f64;
    }
    c * s.powi((p - l) as i32)
}

fn poly_deriv(coef: &[f64], s: f64, l: usize) -> f64 {
    coef.iter().enumerate().map(|(p, &c)| c * poly_deriv_monomial(p, s, l)).sum()
}

/// One passivity sample: `⟨x, 𝒜x⟩ − uᵀy` and its parts.
#[derive(Debug, Clone, PartialEq)]
pub struct PassivitySample {
    pub residual: f64,
    /// `∫ eᵀP₀e`.
    pub interior: f64,
    /// `∫ |e|² + |z|²`.
    pub scale: f64,
    pub trace: DVector<f64>,
}

/// Evaluates `⟨x, 𝒜x⟩ − uᵀy` for a test field by composite three-point
/// Gauss quadrature on `cells` cells.
pub fn passivity_residual<T: Real>(system: &PortHamiltonianSystem<T>, field: &TestField, cells: usize) -> PassivitySample {
    let p: Vec<DMatrix<f64>> = system.p.iter().map(mf64).collect();
    let (a, b) = (system.a.as_f64(), system.b.as_f64());
    let h = (b - a) / cells as f64;
    let (mut inner, mut interior, mut norm) = (0.0, 0.0, 0.0);
    for c in 0..cells {
        let mid = a + (c as f64 + 0.5) * h;
        for &(xi, w) in &linalg::GAUSS3 {
            let z = mid + 0.5 * h * xi;
            let e = field.deriv(z, 0);
            let mut ae = &p[0] * &e;
            let p0e = e.dot(&ae);
            for (l, pl) in p.iter().enumerate().skip(1) {
                ae += pl * field.deriv(z, l);
            }
            let wq = 0.5 * h * w;
            inner += wq * e.dot(&ae);
            interior += wq * p0e;
            norm += wq * e.norm_squared();
        }
    }
    let z = field.trace();
    let u = mf64(&system.w_b2) * &z;
    let y = mf64(&system.w_c) * &z;
    PassivitySample {
        residual: inner - u.dot(&y),
        interior,
        scale: norm + z.norm_squared(),
        trace: z,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Passivity {
    pub check: Check,
    /// Max over samples of the normalized signed residual.
    pub max_residual: f64,
    /// Max over samples of the normalized absolute residual.
    pub max_abs_residual: f64,
    pub energy_preserving: bool,
}

/// Samples random smooth fields satisfying `W_B1 z = 0` and tests
/// `⟨x, 𝒜x⟩ ≤ uᵀy`.
pub fn check_impedance_passivity<T: Real>(
    system: &PortHamiltonianSystem<T>,
    n_tests: usize,
    seed: u64,
    tol: f64,
    cells: usize,
) -> Result<Passivity> {
    passivity_samples(system, n_tests, seed, cells).map(|samples| {
        let mut max_res = f64::NEG_INFINITY;
        let mut max_abs = 0.0f64;
        let mut worst: Option<&PassivitySample> = None;
        for s in &samples {
            let r = s.residual / s.scale.max(f64::MIN_POSITIVE);
            if r > max_res {
                max_res = r;
                worst = Some(s);
            }
            max_abs = max_abs.max(r.abs());
        }
        let ok = max_res <= tol;
        let mut check = Check::new("impedance_passivity", ok, max_res, tol);
        if !ok {
            if let Some(w) = worst {
                check.witness = Some(Witness::Trace {
                    z: w.trace.iter().copied().collect(),
                    violation: w.residual,
                });
            }
        }
        Passivity {
            check: check.note(SAMPLED),
            max_residual: max_res,
            max_abs_residual: max_abs,
            energy_preserving: ok && max_abs <= tol,
        }
    })
}

pub fn passivity_samples<T: Real>(
    system: &PortHamiltonianSystem<T>,
    n_tests: usize,
    seed: u64,
    cells: usize,
) -> Result<Vec<PassivitySample>> {
    if n_tests == 0 {
        return Err(Error::ConditionSetup("n_tests must be at least 1".into()));
    }
    let w1 = mf64(&system.w_b1);
    if w1.iter().any(|v| !v.is_finite()) {
        return Err(Error::ConditionSetup("W_B1 has non-finite entries".into()));
    }
    let w1p = linalg::pinv(&w1, 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (system.a.as_f64(), system.b.as_f64());
    let mut out = Vec::with_capacity(n_tests);
    for _ in 0..n_tests {
        let mut f = TestField::random(system.m, system.order, a, b, 4, &mut rng);
        let z = f.trace();
        let delta = -(&w1p * (&w1 * &z));
        f.correct(&delta);
        let z = f.trace();
        let bc = (&w1 * &z).amax();
        if bc > 1e-8 * z.amax().max(1.0) {
            return Err(Error::ConditionSetup(format!(
                "cannot project test field onto W_B1 z = 0 (residual {bc})"
            )));
        }
        out.push(passivity_residual(system, &f, cells));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    A,
    B,
}

/// `κ = inf { |W_B2 z|² + |W_C z|² : z ∈ ker W_B1, |z_η| = 1 }`, or `+∞` when
/// `z_η` vanishes on the kernel.
pub fn boundary_observability_constant<T: Real>(system: &PortHamiltonianSystem<T>, endpoint: Endpoint) -> Result<f64> {
    if system.order != 1 {
        return Err(Error::Unsupported(format!(
            "boundary observability constant needs N = 1, system has N = {}",
            system.order
        )));
    }
    let m = system.m;
    let kernel = linalg::null_space(&mf64(&system.w_b1), 1e-10);
    let w2 = mf64(&system.w_b2);
    let wc = mf64(&system.w_c);
    let off = match endpoint {
        Endpoint::B => 0,
        Endpoint::A => m,
    };
    let sel = kernel.rows(off, m).into_owned();
    let num = {
        let a = &w2 * &kernel;
        let c = &wc * &kernel;
        a.transpose() * a + c.transpose() * c
    };
    let den = sel.transpose() * &sel;
    restricted_min_ratio(&num, &den)
}

/// `inf βᵀAβ / βᵀBβ` over `βᵀBβ > 0` for PSD `A`, `B`.
fn restricted_min_ratio(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let r = a.nrows();
    if r == 0 {
        return Ok(f64::INFINITY);
    }
    let eig = linalg::sym(b).symmetric_eigen();
    let bmax = eig.eigenvalues.amax();
    let thr = 1e-10 * bmax.max(f64::MIN_POSITIVE);
    let range: Vec<usize> = (0..r).filter(|&i| eig.eigenvalues[i] > thr).collect();
    if range.is_empty() || bmax == 0.0 {
        return Ok(f64::INFINITY);
    }
    let null: Vec<usize> = (0..r).filter(|&i| eig.eigenvalues[i] <= thr).collect();
    let cols = |idx: &[usize]| {
        let mut out = DMatrix::zeros(r, idx.len());
        for (j, &i) in idx.iter().enumerate() {
            out.set_column(j, &eig.eigenvectors.column(i));
        }
        out
    };
    let ur = cols(&range);
    let uz = cols(&null);
    let arr = ur.transpose() * a * &ur;
    let schur = if null.is_empty() {
        arr
    } else {
        let arz = ur.transpose() * a * &uz;
        let azz = uz.transpose() * a * &uz;
        arr - &arz * linalg::pinv(&azz, 1e-12) * arz.transpose()
    };
    let scale = DMatrix::from_diagonal(&DVector::from_iterator(
        range.len(),
        range.iter().map(|&i| 1.0 / eig.eigenvalues[i].sqrt()),
    ));
    let ev = linalg::sym_eigenvalues(&linalg::sym(&(&scale * schur * &scale)));
    Ok(ev[0].max(0.0))
}

struct Sampler<T: Real> {
    rng: ChaCha8Rng,
    dim: usize,
    _t: std::marker::PhantomData<T>,
}

impl<T: Real> Sampler<T> {
    fn new(dim: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dim,
            _t: std::marker::PhantomData,
        }
    }

    fn direction(&mut self) -> DVector<f64> {
        loop {
            let v = DVector::from_fn(self.dim, |_, _| {
                let g: f64 = StandardNormal.sample(&mut self.rng);
                g
            });
            let n = v.norm();
            if n > 1e-12 {
                return v / n;
            }
        }
    }

    /// Probe points: signed unit vectors scaled to `min(r, 1)` and `r`, then
    /// random points with log-uniform radius in `[1e-3·r, r]`.
    fn ball(&mut self, radius: f64, n: usize) -> Vec<DVector<T>> {
        let mut out = Vec::with_capacity(n + 2 * self.dim);
        let mut scales = vec![radius.min(1.0)];
        if radius > 1.0 {
            scales.push(radius);
        }
        for &r in &scales {
            for i in 0..self.dim {
                for s in [1.0, -1.0] {
                    let mut v = DVector::zeros(self.dim);
                    v[i] = T::lit(s * r);
                    out.push(v);
                }
            }
        }
        for _ in 0..n {
            let u: f64 = self.rng.gen();
            let r = radius * 10f64.powf(-3.0 * u);
            out.push(linalg::from_f64_vector(&(self.direction() * r)));
        }
        out
    }

    /// Random points with `lo < |v| ≤ hi`, including both ends.
    fn shell(&mut self, lo: f64, hi: f64, n: usize) -> Vec<DVector<T>> {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let r = match i {
                0 => lo * (1.0 + 1e-9),
                1 => hi,
                _ => lo + (hi - lo) * self.rng.gen::<f64>(),
            };
            out.push(linalg::from_f64_vector(&(self.direction() * r)));
        }
        out
    }
}

fn point<T: Real>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

/// `K ≻ 0`, `ς > 0`, `𝒫(0) = 0`, `𝒫 > 0` away from 0 and growing along rays,
/// `ℛ(0) = 0`, `wᵀℛ(w) ≥ 0`, and `∇𝒫` against central differences.
pub fn check_controller_basic<T: Real>(controller: &Controller<T>, radius: f64, n_samples: usize, seed: u64) -> Vec<Check> {
    let tol = STRUCTURAL_TOL;
    let mc = controller.mc();
    let mut out = Vec::new();

    let k = mf64(&controller.k_mass);
    let asym = (&k - k.transpose()).amax();
    let kmin = linalg::sym_eigenvalues(&linalg::sym(&k))[0];
    out.push(
        Check::new("mass_spd", asym <= tol * k.amax().max(1.0) && kmin > 0.0, kmin, tol)
            .witness_if_failed(Witness::Value { value: kmin }),
    );
    let vs = controller.varsigma().as_f64();
    out.push(Check::new("feedthrough_positive", vs > 0.0, vs, 0.0).witness_if_failed(Witness::Value { value: vs }));

    let zero = DVector::<T>::zeros(mc);
    let p0 = controller.potential.value(&zero).as_f64();
    out.push(Check::new("potential_zero_at_origin", p0 == 0.0, p0, 0.0).witness_if_failed(Witness::Value { value: p0 }));
    let r0 = controller.damping.eval(&zero).amax().as_f64();
    out.push(Check::new("damping_zero_at_origin", r0 == 0.0, r0, 0.0).witness_if_failed(Witness::Value { value: r0 }));

    let mut sampler = Sampler::<T>::new(mc, seed);
    let pts = sampler.ball(radius, n_samples);

    let bad = pts.iter().find_map(|v| {
        let p = controller.potential.value(v).as_f64();
        (!(p > 0.0)).then(|| (point(v), p))
    });
    let min_ratio = pts
        .iter()
        .map(|v| controller.potential.value(v).as_f64() / v.norm_squared().as_f64())
        .fold(f64::INFINITY, f64::min);
    let mut c = Check::new("potential_positive", bad.is_none(), min_ratio, 0.0).note(SAMPLED);
    if let Some((p, v)) = bad {
        c.witness = Some(Witness::ControllerSample { point: p, value: v });
    }
    out.push(c);

    let mut bad = None;
    'rays: for _ in 0..n_samples.clamp(1, 200) {
        let d = sampler.direction();
        let mut prev = 0.0;
        for j in 1..=16 {
            let r = radius * j as f64 / 16.0;
            let v: DVector<T> = linalg::from_f64_vector(&(&d * r));
            let p = controller.potential.value(&v).as_f64();
            if !(p > prev) {
                bad = Some((point(&v), p - prev));
                break 'rays;
            }
            prev = p;
        }
    }
    let mut c = Check::new("potential_radially_growing", bad.is_none(), 0.0, 0.0).note(SAMPLED);
    if let Some((p, v)) = bad {
        c.value = Some(v);
        c.witness = Some(Witness::ControllerSample { point: p, value: v });
    }
    out.push(c);

    let min_rate = pts
        .iter()
        .map(|w| w.dot(&controller.damping.eval(w)).as_f64())
        .fold(f64::INFINITY, f64::min);
    let bad = pts.iter().find_map(|w| {
        let s = w.dot(&controller.damping.eval(w)).as_f64();
        (!(s >= -tol)).then(|| (point(w), s))
    });
    let mut c = Check::new("damping_nonnegative", bad.is_none(), min_rate, tol).note(SAMPLED);
    if let Some((p, v)) = bad {
        c.witness = Some(Witness::ControllerSample { point: p, value: v });
    }
    out.push(c);

    let mut worst = (0.0f64, Vec::new());
    for v in pts.iter().take(n_samples.min(200) + 2 * mc) {
        let scale = v.amax().as_f64().max(1.0);
        let step = 1e-5 * scale;
        let g = controller.potential.gradient(v);
        let mut err = 0.0f64;
        for i in 0..mc {
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[i] += T::lit(step);
            vm[i] -= T::lit(step);
            let fd = (controller.potential.value(&vp).as_f64() - controller.potential.value(&vm).as_f64()) / (2.0 * step);
            err = err.max((fd - g[i].as_f64()).abs());
        }
        let rel = err / g.amax().as_f64().max(scale);
        if rel > worst.0 {
            worst = (rel, point(v));
        }
    }
    out.push(
        Check::new("gradient_consistent", worst.0 < 1e-5, worst.0, 1e-5).witness_if_failed(Witness::ControllerSample {
            point: worst.1,
            value: worst.0,
        }),
    );
    out
}

/// Extremal ratios for the quasi-quadratic / quasi-linear conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasiConstants {
    pub c1_low: f64,
    pub c1_high: f64,
    pub c2_low: f64,
    pub c2_high: f64,
    pub quadratic: Check,
    pub linear: Check,
}

fn degenerates(lows: &[f64], highs: &[f64]) -> bool {
    let grow = 1.5;
    let bad_low = lows.iter().any(|&c| !(c > 1e-9)) || lows[lows.len() - 1] < lows[0] / grow;
    let bad_high = highs.iter().any(|&c| !c.is_finite() || c <= 0.0) || highs[highs.len() - 1] > highs[0] * grow;
    bad_low || bad_high
}

/// `c̄₁ = sup 𝒫/(vᵀ∇𝒫)`, `c̲₁ = inf 𝒫/|v|²`, `c̄₂ = sup |w|²/(wᵀℛ)`,
/// `c̲₂ = inf |w|²/|ℛ|²`, sampled on balls of radius `r`, `2r`, `4r`.
pub fn estimate_quasi_constants<T: Real>(controller: &Controller<T>, radius: f64, n_samples: usize, seed: u64) -> QuasiConstants {
    let mc = controller.mc();
    let (mut c1l, mut c1h, mut c2l, mut c2h) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, r) in [radius, 2.0 * radius, 4.0 * radius].into_iter().enumerate() {
        let mut sampler = Sampler::<T>::new(mc, seed.wrapping_add(i as u64));
        let pts = sampler.ball(r, n_samples);
        let (mut a, mut b, mut c, mut d) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for v in &pts {
            let p = controller.potential.value(v).as_f64();
            let vg = v.dot(&controller.potential.gradient(v)).as_f64();
            let v2 = v.norm_squared().as_f64();
            a = a.min(p / v2);
            b = b.max(if vg > 0.0 { p / vg } else { f64::INFINITY });
            let rw = controller.damping.eval(v);
            let wr = v.dot(&rw).as_f64();
            let r2 = rw.norm_squared().as_f64();
            c = c.min(if r2 > 0.0 { v2 / r2 } else { f64::INFINITY });
            d = d.max(if wr > 0.0 { v2 / wr } else { f64::INFINITY });
        }
        c1l.push(a);
        c1h.push(b);
        c2l.push(c);
        c2h.push(d);
    }
    let fold_min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let fold_max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let q_ok = !degenerates(&c1l, &c1h);
    let l_ok = !degenerates(&c2l, &c2h);
    let quadratic = Check::new("quasi_quadratic_potential", q_ok, fold_min(&c1l), 0.0)
        .witness_if_failed(Witness::Value { value: c1h[2] })
        .note(SAMPLED);
    let linear = Check::new("quasi_linear_damping", l_ok, fold_max(&c2h), 0.0)
        .witness_if_failed(Witness::Value { value: c2h[2] })
        .note(SAMPLED);
    QuasiConstants {
        c1_low: fold_min(&c1l),
        c1_high: fold_max(&c1h),
        c2_low: fold_min(&c2l),
        c2_high: fold_max(&c2h),
        quadratic,
        linear,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrictDamping {
    pub check: Check,
    pub c_low: f64,
    pub c_high: f64,
    pub delta: Option<f64>,
    pub injectivity: Check,
}

/// Searches `δ` with `wᵀℛ(w) ≥ c̲|w|²` on `|w| ≤ δ` and `wᵀℛ(w) ≥ c̄` on
/// `δ < |w| ≤ radius`; also tests injectivity of `B_c`.
pub fn check_strict_damping<T: Real>(
    controller: &Controller<T>,
    delta_grid: &[f64],
    n_samples: usize,
    seed: u64,
    radius: f64,
) -> StrictDamping {
    let mc = controller.mc();
    let mut found = None;
    let mut last = (0.0, 0.0);
    for (i, &delta) in delta_grid.iter().enumerate() {
        if !(delta > 0.0) || delta >= radius {
            continue;
        }
        let mut sampler = Sampler::<T>::new(mc, seed.wrapping_add(i as u64));
        let inner = sampler.ball(delta, n_samples);
        let outer = sampler.shell(delta, radius, n_samples);
        let c_low = inner
            .iter()
            .map(|w| w.dot(&controller.damping.eval(w)).as_f64() / w.norm_squared().as_f64())
            .fold(f64::INFINITY, f64::min);
        let c_high = outer
            .iter()
            .map(|w| w.dot(&controller.damping.eval(w)).as_f64())
            .fold(f64::INFINITY, f64::min);
        last = (c_low, c_high);
        if c_low > STRUCTURAL_TOL && c_high > STRUCTURAL_TOL {
            found = Some((delta, c_low, c_high));
            break;
        }
    }
    let bc = mf64(&controller.b_c);
    let smin = if bc.nrows() >= bc.ncols() { linalg::sigma_min(&bc) } else { 0.0 };
    let smax = linalg::sigma_max(&bc);
    let injectivity = Check::new("input_injective", smax > 0.0 && smin > 1e-10 * smax, smin, 1e-10)
        .witness_if_failed(Witness::Value { value: smin });
    let (delta, c_low, c_high) = match found {
        Some((d, l, h)) => (Some(d), l, h),
        None => (None, last.0, last.1),
    };
    let check = Check::new("strict_damping", found.is_some(), c_low.min(c_high), STRUCTURAL_TOL)
        .witness_if_failed(Witness::Value {
            value: c_low.min(c_high),
        })
        .note(SAMPLED);
    StrictDamping {
        check,
        c_low,
        c_high,
        delta,
        injectivity,
    }
}

/// Multi-start Levenberg–Marquardt minimization of `|∇𝒫|²`; passes when
/// every start converges to the origin.
pub fn check_equilibrium_uniqueness<T: Real>(controller: &Controller<T>, radius: f64, n_starts: usize, seed: u64) -> Check {
    let mc = controller.mc();
    let mut sampler = Sampler::<T>::new(mc, seed);
    let scale = radius.max(1.0);
    let mut stalled = None;
    let mut worst_norm = 0.0f64;
    for _ in 0..n_starts.max(1) {
        let u: f64 = sampler.rng.gen();
        let mut v: DVector<f64> = sampler.direction() * (radius * u.sqrt());
        let grad = |v: &DVector<f64>| linalg::to_f64_vector(&controller.potential.gradient(&linalg::from_f64_vector(v)));
        let hess = |v: &DVector<f64>| linalg::to_f64_matrix(&controller.potential.hessian(&linalg::from_f64_vector(v)));
        let mut g = grad(&v);
        let mut mu = 1e-3;
        let mut converged = false;
        for _ in 0..500 {
            let gs = g.norm();
            if gs <= 1e-12 * scale {
                converged = true;
                break;
            }
            let h = hess(&v);
            let jtj = h.transpose() * &h;
            let jtg = h.transpose() * &g;
            let lhs = &jtj + DMatrix::identity(mc, mc) * (mu * (1.0 + jtj.diagonal().amax()));
            let Some(step) = lhs.lu().solve(&(-jtg)) else { break };
            let trial = &v + &step;
            let gt = grad(&trial);
            if gt.norm() < gs {
                v = trial;
                g = gt;
                mu = (mu * 0.3).max(1e-15);
            } else {
                mu *= 10.0;
                if mu > 1e12 {
                    break;
                }
            }
        }
        if converged {
            let vn = v.norm();
            if vn >= 1e-6 * scale {
                let p = controller.potential.gradient(&linalg::from_f64_vector(&v)).norm().as_f64();
                return Check {
                    name: "equilibrium_unique".into(),
                    verdict: Verdict::Fail,
                    value: Some(vn),
                    tolerance: 1e-6 * scale,
                    witness: Some(Witness::ControllerSample {
                        point: v.iter().copied().collect(),
                        value: p,
                    }),
                    note: Some(SAMPLED.into()),
                };
            }
            worst_norm = worst_norm.max(vn);
        } else if stalled.is_none() {
            stalled = Some((v.iter().copied().collect::<Vec<f64>>(), g.norm()));
        }
    }
    match stalled {
        Some((p, gn)) => Check {
            name: "equilibrium_unique".into(),
            verdict: Verdict::Indeterminate,
            value: Some(gn),
            tolerance: 1e-6 * scale,
            witness: Some(Witness::ControllerSample { point: p, value: gn }),
            note: Some(SAMPLED.into()),
        },
        None => Check::new("equilibrium_unique", true, worst_norm, 1e-6 * scale).note(SAMPLED),
    }
}

/// Sampling parameters of [`certify`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertifyOptions {
    pub seed: u64,
    pub passivity_tests: usize,
    pub passivity_cells: usize,
    pub radius: f64,
    pub samples: usize,
    pub delta_grid: Vec<f64>,
    pub starts: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            passivity_tests: 20,
            passivity_cells: 400,
            radius: 10.0,
            samples: 2000,
            delta_grid: vec![0.1, 0.25, 0.5, 1.0, 2.0],
            starts: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observability {
    pub check: Check,
    /// `None` encodes `+∞`.
    pub kappa_a: Option<f64>,
    pub kappa_b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerReport {
    pub basic: Vec<Check>,
    pub quasi: QuasiConstants,
    pub strict_damping: StrictDamping,
    pub equilibrium: Check,
    pub varsigma: f64,
}

/// Derived hypothesis bundles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Implications {
    /// Energy-preserving plant with positive boundary observability constant.
    pub approximate_observability: bool,
    /// Unique critical point of `𝒫` with positive boundary observability constant.
    pub equilibrium_is_zero: bool,
    /// Hypotheses of the uniform ISS result.
    pub uniform_iss: bool,
    /// Hypotheses of the weak ISS result.
    pub weak_iss: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    pub structural: f64,
    pub inequality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub tolerances: Tolerances,
    pub options: CertifyOptions,
    pub structure: Vec<Check>,
    pub surjectivity: Surjectivity,
    pub passivity: Passivity,
    pub observability: Option<Observability>,
    pub controller: Option<ControllerReport>,
    pub implications: Implications,
}

impl ConditionReport {
    /// Solvability hypotheses hold and at least one stability bundle holds.
    pub fn passed(&self) -> bool {
        self.solvability() && (self.implications.uniform_iss || self.implications.weak_iss)
    }

    /// Passivity, controller basics and surjectivity (plus structure).
    pub fn solvability(&self) -> bool {
        self.structure.iter().all(Check::passed)
            && self.surjectivity.check.passed()
            && self.passivity.check.passed()
            && self
                .controller
                .as_ref()
                .is_some_and(|c| c.basic.iter().all(Check::passed))
    }

    /// All checks in report order.
    pub fn checks(&self) -> Vec<&Check> {
        let mut out: Vec<&Check> = self.structure.iter().collect();
        out.push(&self.surjectivity.check);
        out.push(&self.passivity.check);
        if let Some(o) = &self.observability {
            out.push(&o.check);
        }
        if let Some(c) = &self.controller {
            out.extend(c.basic.iter());
            out.push(&c.quasi.quadratic);
            out.push(&c.quasi.linear);
            out.push(&c.strict_damping.check);
            out.push(&c.strict_damping.injectivity);
            out.push(&c.equilibrium);
        }
        out
    }
}

fn kappa_opt(k: f64) -> Option<f64> {
    k.is_finite().then_some(k)
}

/// Runs every check and derives the hypothesis bundles.
pub fn certify<T: Real>(
    system: &PortHamiltonianSystem<T>,
    controller: Option<&Controller<T>>,
    opts: &CertifyOptions,
) -> Result<ConditionReport> {
    let structure = check_structure(system);
    let surjectivity = check_surjectivity(system);
    let passivity = check_impedance_passivity(system, opts.passivity_tests, opts.seed, INEQUALITY_TOL, opts.passivity_cells)?;
    let observability = if system.order == 1 {
        let ka = boundary_observability_constant(system, Endpoint::A)?;
        let kb = boundary_observability_constant(system, Endpoint::B)?;
        let best = ka.max(kb);
        let ac = system.density.absolutely_continuous;
        let check = Check::new("boundary_observability", best > INEQUALITY_TOL && ac, best.min(f64::MAX), INEQUALITY_TOL)
            .witness_if_failed(Witness::Value { value: best });
        Some(Observability {
            check,
            kappa_a: kappa_opt(ka),
            kappa_b: kappa_opt(kb),
        })
    } else {
        None
    };
    let ctrl = controller.map(|c| {
        let s = opts.seed;
        ControllerReport {
            basic: check_controller_basic(c, opts.radius, opts.samples, s),
            quasi: estimate_quasi_constants(c, opts.radius, opts.samples, s.wrapping_add(1)),
            strict_damping: check_strict_damping(c, &opts.delta_grid, opts.samples, s.wrapping_add(2), opts.radius),
            equilibrium: check_equilibrium_uniqueness(c, opts.radius, opts.starts, s.wrapping_add(3)),
            varsigma: c.varsigma().as_f64(),
        }
    });
    let kappa_ok = observability.as_ref().is_some_and(|o| o.check.passed());
    let mut report = ConditionReport {
        tolerances: Tolerances {
            structural: STRUCTURAL_TOL,
            inequality: INEQUALITY_TOL,
        },
        options: opts.clone(),
        structure,
        surjectivity,
        passivity,
        observability,
        controller: ctrl,
        implications: Implications {
            approximate_observability: false,
            equilibrium_is_zero: false,
            uniform_iss: false,
            weak_iss: false,
        },
    };
    let solv = report.solvability();
    let approx = report.passivity.energy_preserving && kappa_ok;
    let (eq, uniform, weak) = match &report.controller {
        Some(c) => {
            let eq = c.equilibrium.passed() && kappa_ok;
            let uniform = solv && kappa_ok && c.quasi.quadratic.passed() && c.quasi.linear.passed();
            let weak = solv && approx && c.strict_damping.check.passed() && c.strict_damping.injectivity.passed() && eq;
            (eq, uniform, weak)
        }
        None => (false, false, false),
    };
    report.implications = Implications {
        approximate_observability: approx,
        equilibrium_is_zero: eq,
        uniform_iss: uniform,
        weak_iss: weak,
    };
    Ok(report)
}
