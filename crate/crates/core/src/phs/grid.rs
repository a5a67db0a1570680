use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::Real;

/// Uniform node grid on `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T: Real> {
    pub a: T,
    pub b: T,
    pub n: usize,
}

impl<T: Real> Grid<T> {
    pub fn new(a: T, b: T, n: usize) -> Result<Self> {
        if !(a < b) {
            return Err(Error::Input("grid requires a < b".into()));
        }
        if n < 2 {
            return Err(Error::Resolution { nodes: n, required: 2 });
        }
        Ok(Self { a, b, n })
    }

    pub fn h(&self) -> T {
        (self.b - self.a) / T::from_count(self.n - 1)
    }

    pub fn node(&self, i: usize) -> T {
        if i + 1 == self.n {
            self.b
        } else {
            self.a + self.h() * T::from_count(i)
        }
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    pub fn trapezoid_weights(&self) -> DVector<T> {
        let h = self.h();
        let mut w = DVector::from_element(self.n, h);
        w[0] = h * T::lit(0.5);
        w[self.n - 1] = h * T::lit(0.5);
        w
    }

    pub fn simpson_weights(&self) -> Result<DVector<T>> {
        if self.n.is_multiple_of(2) {
            return Err(Error::Input("Simpson quadrature needs an odd node count".into()));
        }
        let h3 = self.h() / T::lit(3.0);
        Ok(DVector::from_fn(self.n, |i, _| {
            if i == 0 || i + 1 == self.n {
                h3
            } else if i % 2 == 1 {
                h3 * T::lit(4.0)
            } else {
                h3 * T::lit(2.0)
            }
        }))
    }
}

/// Quadrature rule for grid integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    #[default]
    Trapezoid,
    Simpson,
}

impl Quadrature {
    pub fn weights<T: Real>(self, grid: &Grid<T>) -> Result<DVector<T>> {
        match self {
            Quadrature::Trapezoid => Ok(grid.trapezoid_weights()),
            Quadrature::Simpson => grid.simpson_weights(),
        }
    }
}

/// Grid function with `m` components per node, stored as an `m × n` matrix
/// (column `i` holds the values at node `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T: Real> {
    pub grid: Grid<T>,
    pub values: DMatrix<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn new(grid: Grid<T>, values: DMatrix<T>) -> Result<Self> {
        if values.ncols() != grid.n {
            return Err(Error::Input(format!(
                "grid function has {} columns, grid has {} nodes",
                values.ncols(),
                grid.n
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid<T>, m: usize) -> Self {
        let values = DMatrix::zeros(m, grid.n);
        Self { grid, values }
    }

    /// Samples `f(ζ)` at every node.
    pub fn sample(grid: Grid<T>, m: usize, f: impl Fn(T) -> DVector<T>) -> Self {
        let mut values = DMatrix::zeros(m, grid.n);
        for i in 0..grid.n {
            values.set_column(i, &f(grid.node(i)));
        }
        Self { grid, values }
    }

    pub fn m(&self) -> usize {
        self.values.nrows()
    }
}
