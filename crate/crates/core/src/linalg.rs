//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::Real;

/// Singular values together with the full right singular basis (columns of V).
fn full_svd<T: Real>(a: &DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let (r, c) = a.shape();
    if c == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v = svd.v_t.expect("requested V^T").transpose();
    let mut s: Vec<T> = svd.singular_values.iter().copied().collect();
    s.resize(c, T::zero());
    (s, v)
}

/// Largest singular value.
pub fn sigma_max<T: Real>(a: &DMatrix<T>) -> T {
    if a.is_empty() {
        return T::zero();
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(T::zero(), |m, &s| m.max(s))
}

/// Smallest singular value (over min(rows, cols) values).
pub fn sigma_min<T: Real>(a: &DMatrix<T>) -> T {
    if a.is_empty() {
        return T::zero();
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(T::max_value().unwrap(), |m, &s| m.min(s))
}

/// Numerical rank with threshold `rel_tol * sigma_max`.
pub fn rank<T: Real>(a: &DMatrix<T>, rel_tol: T) -> usize {
    if a.is_empty() {
        return 0;
    }
    let s = a.clone().svd(false, false).singular_values;
    let smax = s.iter().fold(T::zero(), |m, &v| m.max(v));
    if smax == T::zero() {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * smax).count()
}

/// Orthonormal basis (as columns) of the null space of `a`.
pub fn null_space<T: Real>(a: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    let c = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(c, c);
    }
    let (s, v) = full_svd(a);
    let smax = s.iter().fold(T::zero(), |m, &x| m.max(x));
    let cols: Vec<usize> = (0..c)
        .filter(|&i| smax == T::zero() || s[i] <= rel_tol * smax)
        .collect();
    let mut out = DMatrix::zeros(c, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        out.set_column(j, &v.column(i));
    }
    out
}

pub fn pinv<T: Real>(a: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(T::zero(), |m, &x| m.max(x));
    let eps = rel_tol * smax;
    svd.pseudo_inverse(eps).unwrap_or_else(|_| DMatrix::zeros(c, r))
}

/// Symmetric part `(a + aᵀ)/2`.
pub fn sym<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    (a + a.transpose()) * T::lit(0.5)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues<T: Real>(a: &DMatrix<T>) -> Vec<T> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut ev: Vec<T> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Matrix absolute value `V|Λ|Vᵀ` of a symmetric matrix.
pub fn sym_abs<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    let eig = sym(a).symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| x.abs()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Orthonormal eigenvectors of a symmetric matrix whose eigenvalue is below `-tol`.
pub fn negative_eigenspace<T: Real>(a: &DMatrix<T>, tol: T) -> DMatrix<T> {
    let eig = sym(a).symmetric_eigen();
    let idx: Vec<usize> = (0..a.nrows())
        .filter(|&i| eig.eigenvalues[i] < -tol)
        .collect();
    let mut out = DMatrix::zeros(a.nrows(), idx.len());
    for (j, &i) in idx.iter().enumerate() {
        out.set_column(j, &eig.eigenvectors.column(i));
    }
    out
}

/// Finite-difference weights (Fornberg) for derivatives `0..=max_deriv` at `x0`
/// from the nodes `xs`. Returns `w[d][j]`.
pub fn fornberg_weights(x0: f64, xs: &[f64], max_deriv: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; max_deriv + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(max_deriv);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Three-point Gauss–Legendre nodes and weights on [-1, 1].
pub const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

pub fn to_f64_matrix<T: Real>(a: &DMatrix<T>) -> DMatrix<f64> {
    a.map(|x| x.as_f64())
}

pub fn to_f64_vector<T: Real>(a: &DVector<T>) -> DVector<f64> {
    a.map(|x| x.as_f64())
}

pub fn from_f64_matrix<T: Real>(a: &DMatrix<f64>) -> DMatrix<T> {
    a.map(T::lit)
}

pub fn from_f64_vector<T: Real>(a: &DVector<f64>) -> DVector<T> {
    a.map(T::lit)
}

pub fn is_finite<T: Real>(v: &[T]) -> bool {
    v.iter().all(|x| x.as_f64().is_finite())
}
