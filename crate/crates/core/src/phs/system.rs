use nalgebra::{DMatrix, DVector};

use super::density::EnergyDensity;
use super::grid::{GridFunction, Quadrature};
use crate::error::{Error, Result};
use crate::linalg;
use crate::Real;

/// Boundary-controlled linear port-Hamiltonian system of order `N` on `(a, b)`.
///
/// `p[l]` holds `P_l` for `l = 0..=N`. Boundary matrices act on the trace
/// `z = ((Hx)|_b ; (Hx)|_a)`, each block stacking `Hx, ∂(Hx), …, ∂^{N-1}(Hx)`.
#[derive(Debug, Clone)]
pub struct PortHamiltonianSystem<T: Real> {
    pub order: usize,
    pub m: usize,
    pub a: T,
    pub b: T,
    pub p: Vec<DMatrix<T>>,
    pub w_b1: DMatrix<T>,
    pub w_b2: DMatrix<T>,
    pub w_c: DMatrix<T>,
    pub density: EnergyDensity<T>,
}

/// `z = ((Hx)|_b ; (Hx)|_a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace<T: Real> {
    pub z: DVector<T>,
}

/// `(W_B2 z, W_C z, W_B1 z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryValues<T: Real> {
    pub u: DVector<T>,
    pub y: DVector<T>,
    pub bc_residual: DVector<T>,
}

impl<T: Real> PortHamiltonianSystem<T> {
    /// Checks shapes only; structural properties are verdicts of
    /// [`crate::conditions::check_structure`].
    pub fn new(
        a: T,
        b: T,
        p: Vec<DMatrix<T>>,
        w_b1: DMatrix<T>,
        w_b2: DMatrix<T>,
        w_c: DMatrix<T>,
        density: EnergyDensity<T>,
    ) -> Result<Self> {
        if !(a < b) {
            return Err(Error::Input("interval requires a < b".into()));
        }
        if p.len() < 2 {
            return Err(Error::Input("need P_0 and at least P_1".into()));
        }
        let order = p.len() - 1;
        let m = p[0].nrows();
        if p.iter().any(|pl| pl.shape() != (m, m)) {
            return Err(Error::Input("all P_l must be m×m".into()));
        }
        if density.m != m {
            return Err(Error::Input(format!(
                "energy density is {}×{}, state dimension is {m}",
                density.m, density.m
            )));
        }
        let width = 2 * m * order;
        let k = w_b2.nrows();
        if k < 1 || k > m * order {
            return Err(Error::Input(format!("need 1 ≤ k ≤ mN, got k = {k}")));
        }
        if w_c.nrows() != k {
            return Err(Error::Input("W_C and W_B2 row counts differ".into()));
        }
        if w_b1.nrows() != m * order - k {
            return Err(Error::Input(format!(
                "W_B1 needs mN − k = {} rows, has {}",
                m * order - k,
                w_b1.nrows()
            )));
        }
        for (name, w) in [("W_B1", &w_b1), ("W_B2", &w_b2), ("W_C", &w_c)] {
            if w.ncols() != width {
                return Err(Error::Input(format!("{name} needs {width} columns, has {}", w.ncols())));
            }
        }
        Ok(Self {
            order,
            m,
            a,
            b,
            p,
            w_b1,
            w_b2,
            w_c,
            density,
        })
    }

    pub fn k(&self) -> usize {
        self.w_b2.nrows()
    }

    pub fn trace_len(&self) -> usize {
        2 * self.m * self.order
    }

    /// Stacked `W = [W_B1; W_B2; W_C]`.
    pub fn w_matrix(&self) -> DMatrix<T> {
        let (r1, k, c) = (self.w_b1.nrows(), self.k(), self.trace_len());
        let mut w = DMatrix::zeros(r1 + 2 * k, c);
        w.view_mut((0, 0), (r1, c)).copy_from(&self.w_b1);
        w.view_mut((r1, 0), (k, c)).copy_from(&self.w_b2);
        w.view_mut((r1 + k, 0), (k, c)).copy_from(&self.w_c);
        w
    }

    /// `Q` with blocks `Q_ij = (-1)^i P_{i+j+1}` (0-based derivative orders).
    pub fn boundary_block(&self) -> DMatrix<T> {
        let (m, n) = (self.m, self.order);
        let mut q = DMatrix::zeros(m * n, m * n);
        for i in 0..n {
            for j in 0..n {
                let l = i + j + 1;
                if l <= n {
                    let sign = if i % 2 == 0 { T::one() } else { -T::one() };
                    q.view_mut((i * m, j * m), (m, m)).copy_from(&(&self.p[l] * sign));
                }
            }
        }
        q
    }

    /// `Σ = diag(Q, −Q)` so that `⟨x, 𝒜x⟩ = ½ zᵀΣz + ∫ eᵀP_0 e`.
    pub fn boundary_form(&self) -> DMatrix<T> {
        let q = self.boundary_block();
        let s = q.nrows();
        let mut sigma = DMatrix::zeros(2 * s, 2 * s);
        sigma.view_mut((0, 0), (s, s)).copy_from(&q);
        sigma.view_mut((s, s), (s, s)).copy_from(&(-q));
        sigma
    }

    /// `e = Hx` node-wise.
    pub fn effort(&self, x: &GridFunction<T>) -> Result<DMatrix<T>> {
        self.check_dims(x)?;
        let mut e = DMatrix::zeros(self.m, x.grid.n);
        for i in 0..x.grid.n {
            let h = self.density.eval(x.grid.node(i));
            e.set_column(i, &(h * x.values.column(i)));
        }
        Ok(e)
    }

    fn check_dims(&self, x: &GridFunction<T>) -> Result<()> {
        if x.m() != self.m {
            return Err(Error::Input(format!(
                "grid function has {} components, system has m = {}",
                x.m(),
                self.m
            )));
        }
        Ok(())
    }

    /// `E(x) = ½ ∫ xᵀHx` by quadrature.
    pub fn energy(&self, x: &GridFunction<T>, quadrature: Quadrature) -> Result<T> {
        let e = self.effort(x)?;
        let w = quadrature.weights(&x.grid)?;
        let mut acc = T::zero();
        for i in 0..x.grid.n {
            acc += w[i] * x.values.column(i).dot(&e.column(i));
        }
        Ok(acc * T::lit(0.5))
    }

    /// Trace `z` using one-sided second-order differences for derivatives.
    pub fn boundary_trace(&self, x: &GridFunction<T>) -> Result<BoundaryTrace<T>> {
        let required = 2 * self.order + 2;
        if x.grid.n < required {
            return Err(Error::Resolution {
                nodes: x.grid.n,
                required,
            });
        }
        let e = self.effort(x)?;
        let stencils = endpoint_stencils(self.order, x.grid.h().as_f64());
        let (m, n, nn) = (self.m, self.order, x.grid.n);
        let mut z = DVector::zeros(self.trace_len());
        for l in 0..n {
            for (j, &w) in stencils[l].iter().enumerate() {
                let w = T::lit(w);
                for c in 0..m {
                    // b end: backward stencil; odd derivatives flip sign
                    let wb = if l % 2 == 0 { w } else { -w };
                    z[l * m + c] += wb * e[(c, nn - 1 - j)];
                    z[n * m + l * m + c] += w * e[(c, j)];
                }
            }
        }
        Ok(BoundaryTrace { z })
    }

    pub fn apply_boundary_ops(&self, z: &BoundaryTrace<T>) -> Result<BoundaryValues<T>> {
        if z.z.len() != self.trace_len() {
            return Err(Error::Input(format!(
                "trace has length {}, expected {}",
                z.z.len(),
                self.trace_len()
            )));
        }
        Ok(BoundaryValues {
            u: &self.w_b2 * &z.z,
            y: &self.w_c * &z.z,
            bc_residual: &self.w_b1 * &z.z,
        })
    }

    pub fn length(&self) -> T {
        self.b - self.a
    }
}

/// Forward one-sided stencils at the left end for derivative orders `0..N`,
/// each of width `l + 2` (exact value for `l = 0`). Weights include `h^{-l}`.
pub(crate) fn endpoint_stencils(order: usize, h: f64) -> Vec<Vec<f64>> {
    (0..order)
        .map(|l| {
            if l == 0 {
                return vec![1.0];
            }
            let pts: Vec<f64> = (0..l + 2).map(|j| j as f64).collect();
            let w = linalg::fornberg_weights(0.0, &pts, l);
            w[l].iter().map(|c| c / h.powi(l as i32)).collect()
        })
        .collect()
}
