//! Dense complex linear-algebra helpers shared by every module.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Dense complex matrix; every model quantity is stored in this form.
pub type Mat = DMatrix<Complex64>;

/// Absolute tolerance for strict inequalities (stability margins, positivity).
pub const STRICT_TOL: f64 = 1e-12;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Scalar field of the underlying process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    #[default]
    Real,
    Complex,
}

impl Field {
    /// Zeroes imaginary parts for real-field data after checking they are roundoff.
    pub fn enforce(self, m: Mat) -> Result<Mat> {
        match self {
            Field::Complex => Ok(m),
            Field::Real => {
                let imag = max_imag(&m);
                if imag > STRICT_TOL * (1.0 + frob(&m)) {
                    return Err(Error::FieldViolation { imag });
                }
                Ok(m.map(|x| c64(x.re, 0.0)))
            }
        }
    }

    /// Standard basis of the real vector space of `rows x cols` matrices over this field.
    pub fn standard_basis(self, rows: usize, cols: usize) -> Vec<Mat> {
        let mut out = Vec::new();
        let units: &[Complex64] = match self {
            Field::Real => &[ONE],
            Field::Complex => &[ONE, Complex64 { re: 0.0, im: 1.0 }],
        };
        for &u in units {
            for i in 0..rows {
                for j in 0..cols {
                    let mut e = Mat::zeros(rows, cols);
                    e[(i, j)] = u;
                    out.push(e);
                }
            }
        }
        out
    }
}

pub fn from_real(m: &DMatrix<f64>) -> Mat {
    m.map(|x| c64(x, 0.0))
}

pub fn max_imag(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.im.abs()))
}

pub fn frob(m: &Mat) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Real inner product `Re trace(A B*)`.
pub fn inner(a: &Mat, b: &Mat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn hermitian_part(m: &Mat) -> Mat {
    (m + m.adjoint()).scale(0.5)
}

pub fn hermitian_defect(m: &Mat) -> f64 {
    frob(&(m - m.adjoint()))
}

pub fn identity(n: usize) -> Mat {
    Mat::identity(n, n)
}

/// Eigenvalues through the complex Schur form.
pub fn eigenvalues(m: &Mat) -> Vec<Complex64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let t = m.clone().schur().unpack().1;
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

pub fn spectral_radius(m: &Mat) -> f64 {
    eigenvalues(m).iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn is_schur_stable(m: &Mat) -> bool {
    spectral_radius(m) < 1.0 - STRICT_TOL
}

/// Ascending eigenvalues of the Hermitian part of `m`.
pub fn hermitian_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

pub fn min_hermitian_eigenvalue(m: &Mat) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Solves `a x = b` by LU, rejecting numerically singular `a`.
pub fn solve(a: &Mat, b: &Mat) -> Result<Mat> {
    let lu = a.clone().lu();
    let scale = a.iter().fold(0.0f64, |acc, x| acc.max(x.norm()));
    let u = lu.u();
    let min_pivot = (0..u.nrows()).fold(f64::INFINITY, |acc, i| acc.min(u[(i, i)].norm()));
    if u.nrows() > 0 && (min_pivot <= 1e-14 * scale || scale == 0.0) {
        return Err(Error::InvalidInput(format!(
            "singular matrix (smallest pivot {min_pivot:e})"
        )));
    }
    lu.solve(b)
        .ok_or_else(|| Error::InvalidInput("singular matrix".into()))
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    solve(a, &identity(a.nrows()))
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    m.clone().svd(false, false).singular_values
}

/// 2-norm condition number of a real matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Numerical rank with a threshold relative to the largest singular value.
pub fn rank(m: &Mat, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let s = m.clone().svd(false, false).singular_values;
    let max = s.iter().copied().fold(0.0, f64::max);
    s.iter().filter(|&&x| x > rel_tol * max && x > 0.0).count()
}

/// Block-diagonal `diag(a, b)`.
pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

/// Kronecker product `a ⊗ I_k`.
pub fn kron_identity(a: &Mat, k: usize) -> Mat {
    let mut out = Mat::zeros(a.nrows() * k, a.ncols() * k);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            for d in 0..k {
                out[(i * k + d, j * k + d)] = a[(i, j)];
            }
        }
    }
    out
}

/// Left-open uniform grid `theta_k = -pi + k * 2pi/N`, `k = 1..=N`, with `z = e^{i theta}`.
pub fn circle_grid(n: usize) -> impl Iterator<Item = (f64, Complex64)> + Clone {
    let step = 2.0 * PI / n as f64;
    (1..=n).map(move |k| {
        let theta = -PI + k as f64 * step;
        (theta, Complex64::from_polar(1.0, theta))
    })
}

/// Modified Gram-Schmidt (two passes) under [`inner`]; candidates whose norm after
/// projection falls below `drop_tol` times their original norm are discarded.
pub fn gram_schmidt(candidates: impl IntoIterator<Item = Mat>, drop_tol: f64) -> Vec<Mat> {
    let mut basis: Vec<Mat> = Vec::new();
    for mut v in candidates {
        let original = frob(&v);
        if original == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in &basis {
                let c = inner(&v, q);
                v -= q.scale(c);
            }
        }
        let norm = frob(&v);
        if norm > drop_tol * original {
            basis.push(v.unscale(norm));
        }
    }
    basis
}
