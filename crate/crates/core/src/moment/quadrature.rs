//! Direct quadrature of the moment integrals on a uniform circle grid.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{frob, hermitian_part, Field, Mat};
use crate::statespace::FilterBank;

use super::chart::CoordinateChart;

/// Grid points summed sequentially inside one parallel task.
const CHUNK: usize = 1024;

/// The parameter that defines the spectral density `ψ / (G* X G)`.
#[derive(Clone, Copy, Debug)]
pub enum Denominator<'a> {
    /// `G* Λ G`.
    Lambda(&'a Mat),
    /// `G* C* C G`.
    Factor(&'a Mat),
}

impl Denominator<'_> {
    fn reference(&self, g: &Mat) -> f64 {
        let x = match self {
            Denominator::Lambda(l) => frob(l),
            Denominator::Factor(c) => frob(c).powi(2),
        };
        frob(g).powi(2) * x
    }

    fn eval(&self, g: &Mat) -> Mat {
        match self {
            Denominator::Lambda(l) => hermitian_part(&(g.adjoint() * *l * g)),
            Denominator::Factor(c) => {
                let cg = *c * g;
                cg.adjoint() * cg
            }
        }
    }
}

/// Number of grid points for step `dtheta`: `round(2π / dtheta)`.
pub fn grid_size(dtheta: f64) -> Result<usize> {
    if !(dtheta > 0.0) || !dtheta.is_finite() {
        return Err(Error::InvalidInput(format!("dtheta must be positive, got {dtheta}")));
    }
    let n = (2.0 * PI / dtheta).round();
    if n < 1.0 {
        return Err(Error::InvalidInput(format!("dtheta {dtheta} exceeds 2π")));
    }
    Ok(n as usize)
}

/// Sums `term(θ_k, z_k)` over the left-open grid in fixed chunks, reduced in order.
fn grid_sum<T, F>(n: usize, zero: T, add: impl Fn(&mut T, &T) + Sync, term: F) -> Result<T>
where
    T: Clone + Send + Sync,
    F: Fn(&mut T, f64, Complex64) -> Result<()> + Sync,
{
    let step = 2.0 * PI / n as f64;
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<Result<T>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = zero.clone();
            let end = ((chunk + 1) * CHUNK).min(n);
            for k in (chunk * CHUNK + 1)..=end {
                let theta = -PI + k as f64 * step;
                term(&mut acc, theta, Complex64::from_polar(1.0, theta))?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = zero;
    for p in partials {
        add(&mut total, &p?);
    }
    Ok(total)
}

fn add_mat(acc: &mut Mat, x: &Mat) {
    *acc += x;
}

/// Inverse of a Hermitian positive definite density, or `NearBoundary` at `theta`.
///
/// `reference` is the size of `S` expected away from the boundary (`|G|^2 |X|`).
fn hpd_inverse(s: &Mat, reference: f64, theta: f64) -> Result<Mat> {
    let chol = nalgebra::Cholesky::new(s.clone()).ok_or(Error::NearBoundary { theta })?;
    let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |acc, x| acc.min(x.re));
    if min_pivot * min_pivot <= 1e-14 * reference {
        return Err(Error::NearBoundary { theta });
    }
    Ok(chol.inverse())
}

/// Drops the imaginary parts a real-field integral accumulates from roundoff.
fn finish(filter: &FilterBank, sum: Mat, n: usize) -> Mat {
    let x = hermitian_part(&sum.unscale(n as f64));
    match filter.field() {
        Field::Real => x.map(|v| Complex64::new(v.re, 0.0)),
        Field::Complex => x,
    }
}

/// `∫ G ψ (G* X G)^{-1} G*` by the rectangle rule with weights `1/N`.
pub fn moment_quadrature<W>(filter: &FilterBank, weight: W, den: Denominator<'_>, dtheta: f64) -> Result<Mat>
where
    W: Fn(Complex64) -> f64 + Sync,
{
    let n = grid_size(dtheta)?;
    let dim = filter.n();
    let sum = grid_sum(n, Mat::zeros(dim, dim), add_mat, |acc, theta, z| {
        let g = filter.eval(z)?;
        let s_inv = hpd_inverse(&den.eval(&g), den.reference(&g), theta)?;
        *acc += (&g * s_inv * g.adjoint()).scale(weight(z));
        Ok(())
    })?;
    Ok(finish(filter, sum, n))
}

/// `-∫ G ψ S^{-1} (G* δΛ G) S^{-1} G*` with `S = G* Λ G`: the derivative of `f` in `Λ`.
pub fn apply_f2_quadrature<W>(
    filter: &FilterBank,
    weight: W,
    lambda: &Mat,
    direction: &Mat,
    dtheta: f64,
) -> Result<Mat>
where
    W: Fn(Complex64) -> f64 + Sync,
{
    derivative_quadrature(filter, weight, Denominator::Lambda(lambda), dtheta, |g| {
        hermitian_part(&(g.adjoint() * direction * g))
    })
}

/// `-∫ G ψ S^{-1} (G*(V* C + C* V) G) S^{-1} G*` with `S = G* C* C G`: the derivative of `g` in `C`.
pub fn apply_g2_quadrature<W>(filter: &FilterBank, weight: W, c: &Mat, v: &Mat, dtheta: f64) -> Result<Mat>
where
    W: Fn(Complex64) -> f64 + Sync,
{
    derivative_quadrature(filter, weight, Denominator::Factor(c), dtheta, |g| {
        let cg = c * g;
        let vg = v * g;
        let e = cg.adjoint() * &vg;
        &e + e.adjoint()
    })
}

fn derivative_quadrature<W, E>(filter: &FilterBank, weight: W, den: Denominator<'_>, dtheta: f64, perturb: E) -> Result<Mat>
where
    W: Fn(Complex64) -> f64 + Sync,
    E: Fn(&Mat) -> Mat + Sync,
{
    let n = grid_size(dtheta)?;
    let dim = filter.n();
    let sum = grid_sum(n, Mat::zeros(dim, dim), add_mat, |acc, theta, z| {
        let g = filter.eval(z)?;
        let s_inv = hpd_inverse(&den.eval(&g), den.reference(&g), theta)?;
        let inner = &s_inv * perturb(&g) * &s_inv;
        *acc -= (&g * inner * g.adjoint()).scale(weight(z));
        Ok(())
    })?;
    Ok(finish(filter, sum, n))
}

/// Which moment map a Jacobian belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentMap {
    /// `f(ψ, Λ)`, differentiated in `Λ` along the range basis.
    F,
    /// `g(ψ, C)`, differentiated in `C` along the factor basis.
    G,
}

/// Jacobian in chart coordinates, every column integrated in one pass over the grid.
///
/// Entry `(j, k)` is `-∫ ψ Re tr(D_j S^{-1} E_k S^{-1})` with `D_j = G* Λ_j G`.
pub fn jacobian_quadrature<W>(
    filter: &FilterBank,
    weight: W,
    chart: &CoordinateChart,
    map: MomentMap,
    point: &Mat,
    dtheta: f64,
) -> Result<DMatrix<f64>>
where
    W: Fn(Complex64) -> f64 + Sync,
{
    let n = grid_size(dtheta)?;
    let dim = chart.dim();
    let range = chart.range.elements();
    let factor = chart.factor.elements();
    let den = match map {
        MomentMap::F => Denominator::Lambda(point),
        MomentMap::G => Denominator::Factor(point),
    };
    let sum = grid_sum(
        n,
        DMatrix::<f64>::zeros(dim, dim),
        |acc, x| *acc += x,
        |acc, theta, z| {
            let g = filter.eval(z)?;
            let s_inv = hpd_inverse(&den.eval(&g), den.reference(&g), theta)?;
            let d: Vec<Mat> = range.iter().map(|l| g.adjoint() * l * &g).collect();
            let w = weight(z);
            let cg = match map {
                MomentMap::G => Some(point * &g),
                MomentMap::F => None,
            };
            for k in 0..dim {
                let e = match &cg {
                    None => d[k].clone(),
                    Some(cg) => {
                        let x = cg.adjoint() * (&factor[k] * &g);
                        &x + x.adjoint()
                    }
                };
                let y = &s_inv * e * &s_inv;
                for (j, dj) in d.iter().enumerate() {
                    acc[(j, k)] -= w * trace_product(dj, &y);
                }
            }
            Ok(())
        },
    )?;
    Ok(sum.unscale(n as f64))
}

/// `Re tr(X Y)`.
fn trace_product(x: &Mat, y: &Mat) -> f64 {
    let mut t = 0.0;
    for a in 0..x.nrows() {
        for b in 0..x.ncols() {
            t += (x[(a, b)] * y[(b, a)]).re;
        }
    }
    t
}
