use nalgebra::{Complex, DVector, Schur};

use super::FiniteModel;
use crate::error::{Error, Result};
use crate::Real;

/// Eigenvalues of the linearized closed loop, sorted by decreasing real part.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex<f64>>,
}

impl Spectrum {
    pub fn abscissa(&self) -> f64 {
        self.eigenvalues.first().map_or(f64::NEG_INFINITY, |z| z.re)
    }
}

/// Eigenvalue together with the smoothness index `‖Δv‖/‖v‖` of its plant eigenvector.
#[derive(Debug, Clone, Copy)]
pub struct Mode {
    pub eigenvalue: Complex<f64>,
    pub smoothness: f64,
}

pub fn discrete_generator_spectrum<T: Real>(model: &FiniteModel<T>) -> Result<Spectrum> {
    let j = model.linearization().map(|v| v.as_f64());
    let schur = Schur::try_new(j, 1e-14, 100_000)
        .ok_or_else(|| Error::Numeric("eigenvalue iteration did not converge".into()))?;
    let mut ev: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap_or(std::cmp::Ordering::Equal));
    Ok(Spectrum { eigenvalues: ev })
}

/// Up to `count` eigenvalues with positive imaginary part whose eigenvectors
/// are grid-resolved (smoothness index below `max_smoothness`), ordered by
/// imaginary part. Eigenvectors come from inverse iteration.
pub fn resolved_modes<T: Real>(
    model: &FiniteModel<T>,
    spectrum: &Spectrum,
    count: usize,
    max_smoothness: f64,
) -> Result<Vec<Mode>> {
    let j = model.linearization().map(|v| Complex::new(v.as_f64(), 0.0));
    let dim = j.nrows();
    let m = model.m;
    let nodes = model.nodes();
    let mut cand: Vec<Complex<f64>> = spectrum.eigenvalues.iter().copied().filter(|z| z.im > 1e-8).collect();
    cand.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = Vec::new();
    for lam in cand {
        if out.len() >= count {
            break;
        }
        let shift = lam * Complex::new(1.0 + 1e-10, 1e-10);
        let mut a = j.clone();
        for i in 0..dim {
            a[(i, i)] -= shift;
        }
        let lu = a.lu();
        let mut v = DVector::from_fn(dim, |i, _| Complex::new(1.0 + (i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()));
        for _ in 0..3 {
            v = lu
                .solve(&v)
                .ok_or_else(|| Error::Numeric("singular shifted matrix".into()))?;
            let nv = v.norm();
            v /= Complex::new(nv, 0.0);
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..nodes {
            for c in 0..m {
                den += v[i * m + c].norm_sqr();
                if i + 1 < nodes {
                    num += (v[(i + 1) * m + c] - v[i * m + c]).norm_sqr();
                }
            }
        }
        let s = if den > 0.0 { (num / den).sqrt() } else { f64::INFINITY };
        if s <= max_smoothness {
            out.push(Mode {
                eigenvalue: lam,
                smoothness: s,
            });
        }
    }
    Ok(out)
}

