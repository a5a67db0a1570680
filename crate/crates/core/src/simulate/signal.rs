use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// Serializable description of a disturbance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Zero {
        k: usize,
    },
    /// `A` on `[0, T₀)`, zero afterwards.
    TruncatedStep {
        amplitude: Vec<f64>,
        duration: f64,
    },
    /// `A e^{−λt}`.
    ExpDecay {
        amplitude: Vec<f64>,
        rate: f64,
    },
    /// Gaussian samples of standard deviation `amplitude` held constant on each
    /// step of length `dt` inside `[start, end)`.
    WindowedNoise {
        k: usize,
        amplitude: f64,
        dt: f64,
        start: f64,
        end: f64,
        seed: u64,
    },
    /// Piecewise-constant values `values[i]` on `[i·dt, (i+1)·dt)`.
    Tabulated {
        dt: f64,
        values: Vec<Vec<f64>>,
    },
    /// `first` on `[0, at)`, then `second(· − at)`.
    Concat {
        first: Box<SignalSpec>,
        second: Box<SignalSpec>,
        at: f64,
    },
}

/// Disturbance `d(t)` with exact interval norms `‖d‖²_{[0,t]}`.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceSignal<T: Real> {
    Zero {
        k: usize,
    },
    Step {
        amplitude: DVector<T>,
        duration: T,
    },
    Exp {
        amplitude: DVector<T>,
        rate: T,
    },
    Table {
        dt: T,
        values: Vec<DVector<T>>,
    },
    Concat {
        first: Box<DisturbanceSignal<T>>,
        second: Box<DisturbanceSignal<T>>,
        at: T,
    },
    Shifted {
        inner: Box<DisturbanceSignal<T>>,
        offset: T,
    },
    Truncated {
        inner: Box<DisturbanceSignal<T>>,
        cut: T,
    },
}

fn vec_of<T: Real>(v: &[f64]) -> Result<DVector<T>> {
    if v.is_empty() {
        return Err(Error::Spec("amplitude vector is empty".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Spec("non-finite amplitude".into()));
    }
    Ok(DVector::from_iterator(v.len(), v.iter().map(|&x| T::lit(x))))
}

fn finite_nonneg(name: &str, x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::Spec(format!("{name} is not finite")));
    }
    if x < 0.0 {
        return Err(Error::Spec(format!("{name} is negative: {x}")));
    }
    Ok(())
}

pub fn make_signal<T: Real>(spec: &SignalSpec) -> Result<DisturbanceSignal<T>> {
    Ok(match spec {
        SignalSpec::Zero { k } => DisturbanceSignal::Zero { k: *k },
        SignalSpec::TruncatedStep {
            amplitude,
            duration,
        } => {
            finite_nonneg("duration", *duration)?;
            DisturbanceSignal::Step {
                amplitude: vec_of(amplitude)?,
                duration: T::lit(*duration),
            }
        }
        SignalSpec::ExpDecay { amplitude, rate } => {
            finite_nonneg("rate", *rate)?;
            if *rate == 0.0 && amplitude.iter().any(|&a| a != 0.0) {
                return Err(Error::Spec("exp_decay with zero rate is not square integrable".into()));
            }
            DisturbanceSignal::Exp {
                amplitude: vec_of(amplitude)?,
                rate: T::lit(*rate),
            }
        }
        SignalSpec::WindowedNoise {
            k,
            amplitude,
            dt,
            start,
            end,
            seed,
        } => {
            finite_nonneg("amplitude", *amplitude)?;
            finite_nonneg("window start", *start)?;
            if !(*dt > 0.0) || !dt.is_finite() {
                return Err(Error::Spec("noise table step must be positive".into()));
            }
            if !(end >= start) || !end.is_finite() {
                return Err(Error::Spec("noise window end precedes start".into()));
            }
            if *k == 0 {
                return Err(Error::Spec("noise needs k ≥ 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let len = (end / dt).ceil() as usize;
            let values = (0..len)
                .map(|i| {
                    let t = (i as f64 + 0.5) * dt;
                    DVector::from_fn(*k, |_, _| {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        if t >= *start && t < *end {
                            T::lit(amplitude * g)
                        } else {
                            T::zero()
                        }
                    })
                })
                .collect();
            DisturbanceSignal::Table {
                dt: T::lit(*dt),
                values,
            }
        }
        SignalSpec::Tabulated { dt, values } => {
            if !(*dt > 0.0) || !dt.is_finite() {
                return Err(Error::Spec("table step must be positive".into()));
            }
            let values: Vec<DVector<T>> = values.iter().map(|v| vec_of(v)).collect::<Result<_>>()?;
            if let Some(first) = values.first() {
                if values.iter().any(|v| v.len() != first.len()) {
                    return Err(Error::Spec("table rows have different lengths".into()));
                }
            } else {
                return Err(Error::Spec("empty table".into()));
            }
            DisturbanceSignal::Table {
                dt: T::lit(*dt),
                values,
            }
        }
        SignalSpec::Concat { first, second, at } => {
            finite_nonneg("splice time", *at)?;
            let first = make_signal(first)?;
            let second = make_signal(second)?;
            if first.k() != second.k() {
                return Err(Error::Spec("concatenated signals differ in dimension".into()));
            }
            DisturbanceSignal::Concat {
                first: Box::new(first),
                second: Box::new(second),
                at: T::lit(*at),
            }
        }
    })
}

impl<T: Real> DisturbanceSignal<T> {
    pub fn zero(k: usize) -> Self {
        Self::Zero { k }
    }

    pub fn k(&self) -> usize {
        match self {
            Self::Zero { k } => *k,
            Self::Step { amplitude, .. } | Self::Exp { amplitude, .. } => amplitude.len(),
            Self::Table { values, .. } => values.first().map_or(0, |v| v.len()),
            Self::Concat { first, .. } => first.k(),
            Self::Shifted { inner, .. } | Self::Truncated { inner, .. } => inner.k(),
        }
    }

    pub fn eval(&self, t: T) -> DVector<T> {
        match self {
            Self::Zero { k } => DVector::zeros(*k),
            Self::Step {
                amplitude,
                duration,
            } => {
                if t >= T::zero() && t < *duration {
                    amplitude.clone()
                } else {
                    DVector::zeros(amplitude.len())
                }
            }
            Self::Exp { amplitude, rate } => {
                if t < T::zero() {
                    DVector::zeros(amplitude.len())
                } else {
                    amplitude * (-*rate * t).exp()
                }
            }
            Self::Table { dt, values } => {
                if t < T::zero() {
                    return DVector::zeros(self.k());
                }
                let i = (t / *dt).floor().as_f64();
                if i < values.len() as f64 {
                    values[i as usize].clone()
                } else {
                    DVector::zeros(self.k())
                }
            }
            Self::Concat { first, second, at } => {
                if t < *at {
                    first.eval(t)
                } else {
                    second.eval(t - *at)
                }
            }
            Self::Shifted { inner, offset } => inner.eval(t + *offset),
            Self::Truncated { inner, cut } => {
                if t < *cut {
                    inner.eval(t)
                } else {
                    DVector::zeros(inner.k())
                }
            }
        }
    }

    /// `∫_{t₀}^{t₁} d`, exact for every variant.
    pub fn integral(&self, t0: T, t1: T) -> DVector<T> {
        let t0 = t0.max(T::zero());
        if !(t1 > t0) {
            return DVector::zeros(self.k());
        }
        match self {
            Self::Zero { k } => DVector::zeros(*k),
            Self::Step {
                amplitude,
                duration,
            } => amplitude * (t1.min(*duration) - t0).max(T::zero()),
            Self::Exp { amplitude, rate } => {
                if *rate == T::zero() {
                    amplitude * (t1 - t0)
                } else {
                    amplitude * ((-*rate * t0).exp() * -(-*rate * (t1 - t0)).exp_m1() / *rate)
                }
            }
            Self::Table { dt, values } => {
                let mut acc = DVector::zeros(self.k());
                let first = (t0 / *dt).floor().as_f64() as usize;
                let mut i = first;
                while i < values.len() {
                    let a = *dt * T::from_count(i);
                    if a >= t1 {
                        break;
                    }
                    let b = a + *dt;
                    let w = t1.min(b) - t0.max(a);
                    if w > T::zero() {
                        acc += &values[i] * w;
                    }
                    i += 1;
                }
                acc
            }
            Self::Concat { first, second, at } => {
                let mut acc = first.integral(t0, t1.min(*at));
                if t1 > *at {
                    acc += second.integral(t0.max(*at) - *at, t1 - *at);
                }
                acc
            }
            Self::Shifted { inner, offset } => inner.integral(t0 + *offset, t1 + *offset),
            Self::Truncated { inner, cut } => inner.integral(t0, t1.min(*cut)),
        }
    }

    /// Mean of `d` over `[t₀, t₁]`; `(t₁ − t₀)|mean|² ≤ ‖d‖²_{[t₀,t₁]}`.
    pub fn average(&self, t0: T, t1: T) -> DVector<T> {
        self.integral(t0, t1) / (t1 - t0)
    }

    /// `‖d‖²_{[0,t]}`.
    pub fn norm_sq(&self, t: T) -> T {
        let t = t.max(T::zero());
        match self {
            Self::Zero { .. } => T::zero(),
            Self::Step {
                amplitude,
                duration,
            } => amplitude.norm_squared() * t.min(*duration),
            Self::Exp { amplitude, rate } => {
                let a2 = amplitude.norm_squared();
                if *rate == T::zero() {
                    a2 * t
                } else {
                    let two = *rate + *rate;
                    -a2 * (-two * t).exp_m1() / two
                }
            }
            Self::Table { dt, values } => {
                let full = (t / *dt).floor().as_f64();
                let mut acc = T::zero();
                let nfull = (full as usize).min(values.len());
                for v in &values[..nfull] {
                    acc += v.norm_squared() * *dt;
                }
                if nfull < values.len() {
                    let rem = t - *dt * T::from_count(nfull);
                    acc += values[nfull].norm_squared() * rem;
                }
                acc
            }
            Self::Concat { first, second, at } => {
                if t <= *at {
                    first.norm_sq(t)
                } else {
                    first.norm_sq(*at) + second.norm_sq(t - *at)
                }
            }
            Self::Shifted { inner, offset } => inner.norm_sq(t + *offset) - inner.norm_sq(*offset),
            Self::Truncated { inner, cut } => inner.norm_sq(t.min(*cut)),
        }
    }

    /// `‖d‖²₂` over `[0, ∞)`; infinite for non-decaying signals.
    pub fn total_norm_sq(&self) -> T {
        match self {
            Self::Zero { .. } => T::zero(),
            Self::Step {
                amplitude,
                duration,
            } => amplitude.norm_squared() * *duration,
            Self::Exp { amplitude, rate } => {
                let a2 = amplitude.norm_squared();
                if a2 == T::zero() {
                    T::zero()
                } else if *rate == T::zero() {
                    T::max_value().unwrap()
                } else {
                    a2 / (*rate + *rate)
                }
            }
            Self::Table { dt, values } => values.iter().fold(T::zero(), |acc, v| acc + v.norm_squared() * *dt),
            Self::Concat { first, second, at } => first.norm_sq(*at) + second.total_norm_sq(),
            Self::Shifted { inner, offset } => inner.total_norm_sq() - inner.norm_sq(*offset),
            Self::Truncated { inner, cut } => inner.norm_sq(*cut),
        }
    }

    /// `d(s + ·)`; tables are re-indexed exactly when `s` is a multiple of the table step.
    pub fn shifted(&self, s: T) -> Self {
        if s == T::zero() {
            return self.clone();
        }
        if let Self::Table { dt, values } = self {
            let q = (s / *dt).as_f64();
            let j = q.round();
            if (q - j).abs() < 1e-9 && j >= 0.0 {
                let j = (j as usize).min(values.len());
                let mut rest: Vec<DVector<T>> = values[j..].to_vec();
                if rest.is_empty() {
                    rest.push(DVector::zeros(self.k()));
                }
                return Self::Table { dt: *dt, values: rest };
            }
        }
        Self::Shifted {
            inner: Box::new(self.clone()),
            offset: s,
        }
    }

    /// `d` on `[0, cut)`, zero afterwards.
    pub fn truncated(&self, cut: T) -> Self {
        Self::Truncated {
            inner: Box::new(self.clone()),
            cut,
        }
    }

    /// Concatenation `self &_at other`.
    ///
    /// Panics if the two signals have different channel counts.
    pub fn concat(self, other: Self, at: T) -> Self {
        assert_eq!(self.k(), other.k(), "concatenated signals differ in dimension");
        Self::Concat {
            first: Box::new(self),
            second: Box::new(other),
            at,
        }
    }

    /// Multiplies the signal by `c`.
    pub fn scaled(&self, c: T) -> Self {
        match self {
            Self::Zero { k } => Self::Zero { k: *k },
            Self::Step {
                amplitude,
                duration,
            } => Self::Step {
                amplitude: amplitude * c,
                duration: *duration,
            },
            Self::Exp { amplitude, rate } => Self::Exp {
                amplitude: amplitude * c,
                rate: *rate,
            },
            Self::Table { dt, values } => Self::Table {
                dt: *dt,
                values: values.iter().map(|v| v * c).collect(),
            },
            Self::Concat { first, second, at } => Self::Concat {
                first: Box::new(first.scaled(c)),
                second: Box::new(second.scaled(c)),
                at: *at,
            },
            Self::Shifted { inner, offset } => Self::Shifted {
                inner: Box::new(inner.scaled(c)),
                offset: *offset,
            },
            Self::Truncated { inner, cut } => Self::Truncated {
                inner: Box::new(inner.scaled(c)),
                cut: *cut,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_norm() {
        let d: DisturbanceSignal<f64> = make_signal(&SignalSpec::TruncatedStep {
            amplitude: vec![2.0],
            duration: 3.0,
        })
        .unwrap();
        assert_eq!(d.total_norm_sq(), 12.0);
        assert_eq!(d.norm_sq(1.5), 6.0);
    }

    #[test]
    fn exp_norm_quadrature() {
        let d: DisturbanceSignal<f64> = make_signal(&SignalSpec::ExpDecay {
            amplitude: vec![1.0],
            rate: 2.0,
        })
        .unwrap();
        assert!((d.total_norm_sq() - 0.25).abs() < 1e-15);
        // midpoint quadrature oracle on [0, 1]
        let n = 200_000;
        let h = 1.0 / n as f64;
        let q: f64 = (0..n).map(|i| d.eval((i as f64 + 0.5) * h)[0].powi(2) * h).sum();
        assert!((d.norm_sq(1.0) - q).abs() < 1e-10);
    }

    #[test]
    fn negative_rate_rejected() {
        let r: Result<DisturbanceSignal<f64>> = make_signal(&SignalSpec::ExpDecay {
            amplitude: vec![1.0],
            rate: -1.0,
        });
        assert!(matches!(r, Err(Error::Spec(_))));
        let r: Result<DisturbanceSignal<f64>> = make_signal(&SignalSpec::TruncatedStep {
            amplitude: vec![1.0],
            duration: -1.0,
        });
        assert!(matches!(r, Err(Error::Spec(_))));
    }

    #[test]
    fn table_shift_is_reindex() {
        let d: DisturbanceSignal<f64> = make_signal(&SignalSpec::WindowedNoise {
            k: 1,
            amplitude: 1.0,
            dt: 0.1,
            start: 0.0,
            end: 2.0,
            seed: 3,
        })
        .unwrap();
        let s = d.shifted(0.5);
        assert!(matches!(s, DisturbanceSignal::Table { .. }));
        for i in 0..10 {
            let t = 0.1 * i as f64 + 0.05;
            assert_eq!(s.eval(t), d.eval(t + 0.5));
        }
    }
}
