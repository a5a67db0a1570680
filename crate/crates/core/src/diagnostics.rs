//! Trajectory and ensemble post-processing: dissipation inequality, energy
//! bound, contraction fit, asymptotic gain, convergence to zero, and the
//! norm–energy comparison functions.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::conditions::Verdict;
use crate::discretize::FiniteModel;
use crate::error::{Error, Result};
use crate::models::InitialFamily;
use crate::simulate::{simulate_with, DisturbanceSignal, SimOptions, Trajectory};
use crate::Real;

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn f(x: impl Real) -> f64 {
    x.as_f64()
}

/// `max_n [Ẽ(t_{n+1}) − Ẽ(t_n) − ∫ dᵀy]_+` with the integral taken by the
/// midpoint rule of the integrator.
pub fn dissipation_residual<T: Real>(traj: &Trajectory<T>) -> f64 {
    (1..traj.len())
        .map(|i| {
            let de = f(traj.energy[i]) - f(traj.energy[i - 1]);
            let s = f(traj.supply[i]) - f(traj.supply[i - 1]);
            (de - s).max(0.0)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dissipation {
    pub max_residual: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

/// Passes when the residual is at most `(1e−8·Ẽ(0) + 1e−12)·max(1, T)`.
pub fn dissipation_check<T: Real>(traj: &Trajectory<T>) -> Dissipation {
    let r = dissipation_residual(traj);
    let e0 = traj.energy.first().map_or(0.0, |&e| f(e));
    let span = traj.times.last().map_or(0.0, |&t| f(t)).max(1.0);
    let threshold = (1e-8 * e0 + 1e-12) * span;
    Dissipation {
        max_residual: r,
        threshold,
        verdict: verdict(r <= threshold),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UgsMargin {
    /// `min_t [Ẽ(0) + ‖d‖²_{[0,t]}/(4ς) − Ẽ(t)]`.
    pub margin: f64,
    pub scale: f64,
    pub verdict: Verdict,
}

pub fn ugs_check<T: Real>(traj: &Trajectory<T>, varsigma: f64) -> UgsMargin {
    let e0 = traj.energy.first().map_or(0.0, |&e| f(e));
    let mut margin = f64::INFINITY;
    let mut scale = e0.abs();
    for i in 0..traj.len() {
        let budget = e0 + f(traj.d_norm_sq[i]) / (4.0 * varsigma);
        scale = scale.max(budget.abs()).max(f(traj.energy[i]).abs());
        margin = margin.min(budget - f(traj.energy[i]));
    }
    if traj.is_empty() {
        margin = 0.0;
    }
    let scale = scale.max(f64::MIN_POSITIVE);
    UgsMargin {
        margin,
        scale,
        verdict: verdict(varsigma > 0.0 && margin >= -1e-8 * scale),
    }
}

/// First grid time after which `‖x̃‖_M < ε` for the rest of the run.
pub fn convergence_time<T: Real>(traj: &Trajectory<T>, eps: f64) -> Option<f64> {
    let mut first = None;
    for i in (0..traj.len()).rev() {
        if f(traj.norm[i]) < eps {
            first = Some(i);
        } else {
            break;
        }
    }
    first.map(|i| f(traj.times[i]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionRun {
    pub beta: f64,
    /// `exp(slope·τ)` from the least-squares fit of `log Ẽ`.
    pub beta_slope: f64,
    /// `max_t Ẽ(t+τ)/Ẽ(t)` over the resolved part of the run.
    pub beta_window: Option<f64>,
    /// `min_t Ẽ(t)/Ẽ(0)`.
    pub min_energy_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contraction {
    pub beta: f64,
    pub tau: f64,
    pub horizon: f64,
    pub runs: Vec<ContractionRun>,
    /// Number of zero initial states left out of the fit.
    pub excluded: usize,
    /// Set when the fit shows no contraction (`β ≥ 1 − 1e−9`).
    pub flagged: bool,
    pub verdict: Verdict,
}

const ENERGY_FLOOR: f64 = 1e-14;
const WINDOW_FLOOR: f64 = 1e-10;

fn ls_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in t.iter().zip(y) {
        num += (a - tm) * (b - ym);
        den += (a - tm) * (a - tm);
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Contraction factor of one undisturbed energy history.
pub fn contraction_from_energy(times: &[f64], energy: &[f64], tau: f64) -> ContractionRun {
    let e0 = energy[0];
    let end = energy.iter().position(|&e| e < ENERGY_FLOOR * e0).unwrap_or(energy.len());
    let start = end / 2;
    let (ts, ys): (Vec<f64>, Vec<f64>) = (start..end).map(|i| (times[i], energy[i].ln())).unzip();
    let slope = if ts.len() >= 2 { ls_slope(&ts, &ys) } else { 0.0 };
    let beta_slope = (slope * tau).exp();
    let dt = if times.len() > 1 { times[1] - times[0] } else { tau };
    let lag = (tau / dt).round().max(1.0) as usize;
    let resolved = energy.iter().position(|&e| e < WINDOW_FLOOR * e0).unwrap_or(energy.len());
    let beta_window = (lag < resolved).then(|| {
        (0..resolved - lag)
            .map(|i| energy[i + lag] / energy[i])
            .fold(0.0, f64::max)
    });
    let min_energy_ratio = energy.iter().map(|&e| e / e0).fold(f64::INFINITY, f64::min);
    ContractionRun {
        beta: beta_window.map_or(beta_slope, |w| w.max(beta_slope)),
        beta_slope,
        beta_window,
        min_energy_ratio,
    }
}

fn quiet(dt_stride: usize) -> SimOptions {
    SimOptions {
        state_stride: dt_stride,
        ..SimOptions::default()
    }
}

/// Fits `(β, τ)` from undisturbed runs; `β` is the larger of the tail slope
/// estimate and the worst windowed energy ratio, maximized over the set.
pub fn fit_contraction<T: Real>(
    model: &FiniteModel<T>,
    x0_set: &[DVector<T>],
    horizon: f64,
    dt: f64,
    tau: f64,
) -> Result<Contraction> {
    if !(tau > 0.0) || !(tau < horizon) {
        return Err(Error::Input(format!("need 0 < τ < horizon, got τ = {tau}")));
    }
    let zero = DisturbanceSignal::zero(model.k());
    let active: Vec<&DVector<T>> = x0_set.iter().filter(|x| f(model.energy(x)) > 0.0).collect();
    let excluded = x0_set.len() - active.len();
    let runs = active
        .par_iter()
        .map(|x0| {
            let tr = simulate_with(model, x0, &zero, T::lit(horizon), T::lit(dt), &quiet(usize::MAX)).into_result()?;
            let t: Vec<f64> = tr.times.iter().map(|&v| f(v)).collect();
            let e: Vec<f64> = tr.energy.iter().map(|&v| f(v)).collect();
            Ok(contraction_from_energy(&t, &e, tau))
        })
        .collect::<Result<Vec<_>>>()?;
    let beta = runs.iter().map(|r| r.beta).fold(0.0, f64::max);
    let flagged = beta >= 1.0 - 1e-9;
    Ok(Contraction {
        beta,
        tau,
        horizon,
        excluded,
        flagged,
        verdict: verdict(!runs.is_empty() && beta < 1.0),
        runs,
    })
}

/// Sampled comparison functions `ψ̲(‖x̃‖) ≤ Ẽ(x̃) ≤ ψ̄(‖x̃‖)`.
///
/// Since plant and `v₂` energies are exactly half their squared norms,
/// `Ẽ − ½‖x̃‖² = 𝒫(v₁) − ½|v₁|²`; the envelopes bound this defect by
/// `g_low|v₁|²` and `g_high|v₁|²` over the ball `|v₁| ≤ rᵢ`, so that on
/// `(r_{i−1}, rᵢ]` the functions are `low[i]·r²` and `high[i]·r²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormEquivalence {
    pub radii: Vec<f64>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub c_low: f64,
    pub c_high: f64,
}

impl NormEquivalence {
    /// Exact `½r²` (no controller or quadratic defect).
    pub fn quadratic(radius: f64) -> Self {
        Self {
            radii: vec![radius],
            low: vec![0.5],
            high: vec![0.5],
            c_low: 0.5,
            c_high: 0.5,
        }
    }

    fn segment(&self, r: f64) -> usize {
        self.radii.iter().position(|&ri| r <= ri).unwrap_or(self.radii.len() - 1)
    }

    /// Nondecreasing lower envelope; beyond the sampled range the last
    /// ratio is extended.
    pub fn psi_low(&self, r: f64) -> f64 {
        if !(r > 0.0) {
            return 0.0;
        }
        let j = self.segment(r);
        let mut v = self.low[j] * r * r;
        for l in j + 1..self.radii.len() {
            let r0 = self.radii[l - 1];
            v = v.min(self.low[l] * r0 * r0);
        }
        v
    }

    pub fn psi_high(&self, r: f64) -> f64 {
        if !(r > 0.0) {
            return 0.0;
        }
        self.high[self.segment(r)] * r * r
    }

    /// Largest `r` with `ψ̲(r) ≤ y`, by bisection.
    pub fn psi_low_inv(&self, y: f64) -> f64 {
        if !(y > 0.0) {
            return 0.0;
        }
        let mut hi = (y / self.c_low).sqrt().max(self.radii[self.radii.len() - 1]);
        while self.psi_low(hi) <= y {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.psi_low(mid) <= y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        lo
    }

    /// `σ̲(r) = ψ̲⁻¹(2ψ̄(r))`.
    pub fn sigma(&self, r: f64) -> f64 {
        self.psi_low_inv(2.0 * self.psi_high(r))
    }

    /// `γ̲(r) = ψ̲⁻¹(r²/(2ς))`.
    pub fn gamma(&self, r: f64, varsigma: f64) -> f64 {
        self.psi_low_inv(r * r / (2.0 * varsigma))
    }

    /// `γ̄(r) = ψ̲⁻¹(2Cr²)`.
    pub fn gain(&self, r: f64, c: f64) -> f64 {
        self.psi_low_inv(2.0 * c * r * r)
    }
}

/// Samples `𝒫(v₁) − ½|v₁|²` on balls of the given radii.
pub fn norm_equivalence<T: Real>(model: &FiniteModel<T>, n_samples: usize, radius_grid: &[f64], seed: u64) -> Result<NormEquivalence> {
    let mut radii: Vec<f64> = radius_grid.to_vec();
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::Input("radius grid must be nonempty and positive".into()));
    }
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let rmax = radii[radii.len() - 1];
    let Some(c) = &model.controller else {
        return Ok(NormEquivalence::quadratic(rmax));
    };
    let mc = c.mc();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(n_samples + radii.len() * 2 * mc);
    let mut push = |v: DVector<f64>| {
        let r2 = v.norm_squared();
        if r2 > 0.0 {
            let vt: DVector<T> = crate::linalg::from_f64_vector(&v);
            let g = f(c.potential.value(&vt)) - 0.5 * r2;
            samples.push((r2.sqrt(), g / r2));
        }
    };
    let direction = |rng: &mut ChaCha8Rng| loop {
        let v = DVector::from_fn(mc, |_, _| -> f64 { StandardNormal.sample(rng) });
        let n = v.norm();
        if n > 1e-12 {
            break v / n;
        }
    };
    for &r in &radii {
        for i in 0..mc {
            for s in [1.0, -1.0] {
                let mut v = DVector::zeros(mc);
                v[i] = s * r;
                push(v);
            }
        }
    }
    for _ in 0..n_samples {
        let u: f64 = rng.gen();
        let r = rmax * 10f64.powf(-3.0 * u);
        push(direction(&mut rng) * r);
    }
    let mut low = Vec::with_capacity(radii.len());
    let mut high = Vec::with_capacity(radii.len());
    for &r in &radii {
        let inside = samples.iter().filter(|s| s.0 <= r * (1.0 + 1e-12));
        let (gl, gh) = inside.fold((0.0f64, 0.0f64), |(a, b), s| (a.min(s.1), b.max(s.1)));
        low.push(0.5 + gl);
        high.push(0.5 + gh);
    }
    let c_low = low.iter().copied().fold(f64::INFINITY, f64::min);
    let c_high = high.iter().copied().fold(0.0, f64::max);
    if !(c_low > 0.0) {
        return Err(Error::Numeric(format!("energy is not coercive on the sampled ball (c_low = {c_low})")));
    }
    Ok(NormEquivalence {
        radii,
        low,
        high,
        c_low,
        c_high,
    })
}

/// `ψ̲⁻¹((2/β)β^{t/τ}ψ̄(‖x̃₀‖)) + ψ̲⁻¹(2C‖d‖²)`.
pub fn iss_bound(ne: &NormEquivalence, beta: f64, tau: f64, c: f64, x0_norm: f64, d_norm_sq: f64, t: f64) -> f64 {
    let decay = 2.0 / beta * beta.powf(t / tau) * ne.psi_high(x0_norm);
    ne.psi_low_inv(decay) + ne.psi_low_inv(2.0 * c * d_norm_sq)
}

/// Worst `‖x̃(t)‖ − bound(t)` over the samples of a trajectory (≤ 0 when the bound holds).
pub fn iss_violation<T: Real>(traj: &Trajectory<T>, ne: &NormEquivalence, beta: f64, tau: f64, c: f64) -> f64 {
    let x0 = f(traj.norm[0]);
    (0..traj.len())
        .map(|i| f(traj.norm[i]) - iss_bound(ne, beta, tau, c, x0, f(traj.d_norm_sq[i]), f(traj.times[i])))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Gain constant `C = 1/(4ς) + 0.01`.
pub fn default_gain_constant(varsigma: f64) -> f64 {
    1.0 / (4.0 * varsigma) + 0.01
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainOptions {
    pub horizon: f64,
    pub dt: f64,
    pub tail_window: f64,
    /// Random initial states per amplitude, on top of `x̃₀ = 0`.
    pub replicates: usize,
    pub seed: u64,
    pub initial: InitialFamily,
    pub c_gain: f64,
    /// Relative energy change over the tail above which the run is not settled.
    pub settle_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainSample {
    pub amplitude: f64,
    pub replicate: usize,
    pub d_norm: f64,
    pub x0_norm: f64,
    pub tail_sup: f64,
    pub bound: f64,
    pub settled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainCurve {
    pub tail_window: f64,
    pub c_gain: f64,
    pub samples: Vec<GainSample>,
    pub verdict: Verdict,
}

impl GainCurve {
    /// `d_norm,tail_sup,bound` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("d_norm,tail_sup,bound\n");
        for g in &self.samples {
            s.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", g.d_norm, g.tail_sup, g.bound));
        }
        s
    }
}

/// Tail supremum of `‖x̃‖_M` for the scaled disturbances `a·d`; the verdict
/// compares against `γ̄(‖d‖₂)`, never against the raw tails of other runs.
/// The horizon must be long enough for the transient from `x̃₀` to decay.
pub fn gain_curve<T: Real>(
    model: &FiniteModel<T>,
    base: &DisturbanceSignal<T>,
    amplitudes: &[f64],
    opts: &GainOptions,
    ne: &NormEquivalence,
) -> Result<GainCurve> {
    if !(opts.tail_window > 0.0) || opts.tail_window >= opts.horizon {
        return Err(Error::Input("tail window must lie inside the horizon".into()));
    }
    let mut jobs = Vec::new();
    for (ai, &a) in amplitudes.iter().enumerate() {
        for rep in 0..=opts.replicates {
            jobs.push((ai, a, rep));
        }
    }
    let samples = jobs
        .par_iter()
        .map(|&(ai, a, rep)| {
            let x0 = if rep == 0 {
                DVector::zeros(model.dim())
            } else {
                opts.initial.sample(model, opts.seed.wrapping_add((ai * 1000 + rep) as u64))
            };
            let d = base.scaled(T::lit(a));
            let tr = simulate_with(model, &x0, &d, T::lit(opts.horizon), T::lit(opts.dt), &quiet(usize::MAX)).into_result()?;
            let d_norm = f(d.norm_sq(T::lit(opts.horizon))).sqrt();
            let start = opts.horizon - opts.tail_window;
            let tail: Vec<usize> = (0..tr.len()).filter(|&i| f(tr.times[i]) >= start - 1e-12).collect();
            let tail_sup = tail.iter().map(|&i| f(tr.norm[i])).fold(0.0, f64::max);
            let e_first = f(tr.energy[tail[0]]);
            let e_last = f(tr.energy[tail[tail.len() - 1]]);
            let e_max = tail.iter().map(|&i| f(tr.energy[i])).fold(0.0, f64::max);
            let settled = e_last - e_first <= opts.settle_tol * e_max.max(f64::MIN_POSITIVE);
            let bound = ne.gain(d_norm, opts.c_gain);
            Ok(GainSample {
                amplitude: a,
                replicate: rep,
                d_norm,
                x0_norm: f(model.norm(&x0)),
                tail_sup,
                bound,
                settled,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // tails of runs from x̃₀ ≠ 0 are resolved relative to ‖x̃₀‖
    let ok = samples
        .iter()
        .all(|s| s.tail_sup <= s.bound + 1e-6 * s.bound.max(s.x0_norm).max(1e-3));
    let settled = samples.iter().all(|s| s.settled);
    let verdict = match (settled, ok) {
        (false, _) => Verdict::Indeterminate,
        (true, ok) => verdict(ok),
    };
    Ok(GainCurve {
        tail_window: opts.tail_window,
        c_gain: opts.c_gain,
        samples,
        verdict,
    })
}

/// Per-run quantities, each recomputable from the referenced trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub index: usize,
    pub trajectory: Option<String>,
    pub final_norm: f64,
    pub max_balance_residual: f64,
    /// `‖d‖_{[0,T]}`.
    pub d_norm: f64,
    /// Least-squares slope of `log Ẽ` over the resolved second half of the run.
    pub decay_rate: Option<f64>,
    pub dissipation: Dissipation,
    pub ugs: Option<UgsMargin>,
    pub convergence_eps: Option<f64>,
    pub convergence_time: Option<f64>,
    pub convergence: Option<Verdict>,
}

fn decay_rate<T: Real>(traj: &Trajectory<T>) -> Option<f64> {
    let e0 = f(*traj.energy.first()?);
    if !(e0 > 0.0) {
        return None;
    }
    let end = traj.energy.iter().position(|&e| f(e) < ENERGY_FLOOR * e0).unwrap_or(traj.len());
    let (t, y): (Vec<f64>, Vec<f64>) = (end / 2..end).map(|i| (f(traj.times[i]), f(traj.energy[i]).ln())).unzip();
    (t.len() >= 2).then(|| ls_slope(&t, &y))
}

/// `eps_rel`, when given, requires `‖x̃(t)‖_M < eps_rel·‖x̃₀‖_M` eventually.
pub fn summarize_run<T: Real>(index: usize, traj: &Trajectory<T>, varsigma: Option<f64>, eps_rel: Option<f64>) -> RunSummary {
    let eps = eps_rel.map(|e| e * traj.norm.first().map_or(0.0, |&n| f(n)));
    let time = eps.and_then(|e| convergence_time(traj, e));
    let last = traj.len().saturating_sub(1);
    RunSummary {
        index,
        trajectory: None,
        final_norm: traj.norm.get(last).map_or(0.0, |&v| f(v)),
        max_balance_residual: traj.balance_residual.iter().fold(0.0, |m, &r| m.max(f(r).abs())),
        d_norm: traj.d_norm_sq.get(last).map_or(0.0, |&v| f(v).sqrt()),
        decay_rate: decay_rate(traj),
        dissipation: dissipation_check(traj),
        ugs: varsigma.map(|s| ugs_check(traj, s)),
        convergence_eps: eps,
        convergence_time: time,
        convergence: eps.map(|_| verdict(time.is_some())),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StabilityReport {
    pub varsigma: Option<f64>,
    pub c_gain: Option<f64>,
    pub runs: Vec<RunSummary>,
    pub contraction: Option<Contraction>,
    pub norm_equivalence: Option<NormEquivalence>,
    pub gain_curve: Option<GainCurve>,
}

impl StabilityReport {
    /// Named verdicts in report order.
    pub fn verdicts(&self) -> Vec<(String, Verdict)> {
        let mut out = Vec::new();
        for r in &self.runs {
            out.push((format!("run {} dissipation", r.index), r.dissipation.verdict));
            if let Some(u) = &r.ugs {
                out.push((format!("run {} ugs", r.index), u.verdict));
            }
            if let Some(v) = r.convergence {
                out.push((format!("run {} convergence", r.index), v));
            }
        }
        if let Some(c) = &self.contraction {
            out.push(("contraction".into(), c.verdict));
        }
        if let Some(g) = &self.gain_curve {
            out.push(("gain_curve".into(), g.verdict));
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.verdicts().iter().all(|(_, v)| v.passed())
    }
}
