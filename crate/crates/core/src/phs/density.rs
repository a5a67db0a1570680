use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::linalg;
use crate::Real;

type DensityFn<T> = dyn Fn(T) -> DMatrix<T> + Send + Sync;

/// Energy density `ζ ↦ H(ζ)` with declared bounds `m_low·I ≤ H ≤ m_high·I`.
#[derive(Clone)]
pub struct EnergyDensity<T: Real> {
    eval: Arc<DensityFn<T>>,
    pub m: usize,
    pub m_low: T,
    pub m_high: T,
    pub absolutely_continuous: bool,
}

impl<T: Real> fmt::Debug for EnergyDensity<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnergyDensity")
            .field("m", &self.m)
            .field("m_low", &self.m_low)
            .field("m_high", &self.m_high)
            .field("absolutely_continuous", &self.absolutely_continuous)
            .finish()
    }
}

/// Outcome of sampling a density against its declared bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySample {
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Sample point with the worst bound violation (or the extremal eigenvalue).
    pub worst_point: f64,
}

impl<T: Real> EnergyDensity<T> {
    pub fn from_fn(
        m: usize,
        m_low: T,
        m_high: T,
        absolutely_continuous: bool,
        f: impl Fn(T) -> DMatrix<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(f),
            m,
            m_low,
            m_high,
            absolutely_continuous,
        }
    }

    /// Constant density; bounds are the extreme eigenvalues of `h`.
    pub fn constant(h: DMatrix<T>) -> Self {
        let ev = linalg::sym_eigenvalues(&h);
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        let m = h.nrows();
        Self::from_fn(m, lo, hi, true, move |_| h.clone())
    }

    pub fn eval(&self, zeta: T) -> DMatrix<T> {
        (self.eval)(zeta)
    }

    /// Samples `n` equispaced points in `[a, b]`.
    pub fn sample(&self, a: T, b: T, n: usize) -> DensitySample {
        let mut out = DensitySample {
            max_asymmetry: 0.0,
            min_eigenvalue: f64::INFINITY,
            max_eigenvalue: f64::NEG_INFINITY,
            worst_point: a.as_f64(),
        };
        let mut worst = f64::NEG_INFINITY;
        let (lo, hi) = (self.m_low.as_f64(), self.m_high.as_f64());
        for i in 0..n.max(2) {
            let s = T::from_count(i) / T::from_count(n.max(2) - 1);
            let z = a + (b - a) * s;
            let h = self.eval(z);
            let hn = h.norm().as_f64().max(f64::MIN_POSITIVE);
            let asym = (&h - h.transpose()).norm().as_f64() / hn;
            out.max_asymmetry = out.max_asymmetry.max(asym);
            let ev = linalg::sym_eigenvalues(&linalg::sym(&h));
            let (emin, emax) = (ev[0].as_f64(), ev[ev.len() - 1].as_f64());
            out.min_eigenvalue = out.min_eigenvalue.min(emin);
            out.max_eigenvalue = out.max_eigenvalue.max(emax);
            let viol = (lo - emin).max(emax - hi);
            if viol > worst {
                worst = viol;
                out.worst_point = z.as_f64();
            }
        }
        out
    }
}
