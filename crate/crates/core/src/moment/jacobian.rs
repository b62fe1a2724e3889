//! Jacobians of the moment maps in chart coordinates, and the Newton linear solve.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::{h_inverse, h_map};
use crate::linalg::{condition_number, frob, inner, Mat};
use crate::matrixeq::DareOptions;
use crate::statespace::{FactorParameter, FilterBank};

use super::chart::{CoordinateChart, FactorBasis, RangeBasis};
use super::maps::{apply_g2_statespace, apply_g2_unshifted, moment_g_statespace, is_shift_curable, shift_schedule, ShiftPolicy, SpectralPrior};
use super::quadrature::{jacobian_quadrature, MomentMap};

/// How Jacobian columns are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum JacobianMethod {
    /// Rectangle rule with grid step `dtheta`.
    Quadrature { dtheta: f64 },
    /// Riccati-based evaluation of `g2`; the `f` Jacobian follows by the chain rule through `h`.
    StateSpace,
}

/// Jacobian of `h^{-1}` at `C`: entry `(j, k)` is `<Λ_j, 𝐂_k* C + C* 𝐂_k>`.
pub fn h_inverse_jacobian(chart: &CoordinateChart, c: &Mat) -> DMatrix<f64> {
    let dim = chart.dim();
    let range = chart.range.elements();
    let factor = chart.factor.elements();
    let mut out = DMatrix::zeros(dim, dim);
    for (k, ck) in factor.iter().enumerate() {
        let x = ck.adjoint() * c;
        let d = &x + x.adjoint();
        for (j, lj) in range.iter().enumerate() {
            out[(j, k)] = inner(lj, &d);
        }
    }
    out
}

/// Jacobian of `g` at `C` in chart coordinates, columns from the state-space `g2`.
pub fn g_jacobian_statespace(
    filter: &FilterBank,
    prior: &dyn SpectralPrior,
    chart: &CoordinateChart,
    c: &FactorParameter,
) -> Result<DMatrix<f64>> {
    let columns: Vec<Result<DVector<f64>>> = chart
        .factor
        .elements()
        .par_iter()
        .map(|ck| {
            let y = apply_g2_statespace(filter, prior, c, ck, ShiftPolicy::default())?;
            Ok(chart.range.coords(&y))
        })
        .collect();
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&columns))
}

/// Jacobian of `f` (at a `Λ`) or `g` (at a `C`) in chart coordinates.
pub fn assemble_jacobian_matrix(
    filter: &FilterBank,
    prior: &dyn SpectralPrior,
    chart: &CoordinateChart,
    map: MomentMap,
    point: &Mat,
    method: JacobianMethod,
) -> Result<DMatrix<f64>> {
    match method {
        JacobianMethod::Quadrature { dtheta } => {
            jacobian_quadrature(filter, |z| prior.density(z), chart, map, point, dtheta)
        }
        JacobianMethod::StateSpace => match map {
            MomentMap::G => {
                let c = FactorParameter::new(filter, point.clone())?;
                g_jacobian_statespace(filter, prior, chart, &c)
            }
            MomentMap::F => {
                let c = h_map(filter, &chart.range, point)?;
                let jg = g_jacobian_statespace(filter, prior, chart, &c)?;
                let jh = h_inverse_jacobian(chart, c.c());
                let lu = jh.transpose().lu();
                let x = lu
                    .solve(&jg.transpose())
                    .ok_or_else(|| Error::Consistency("Jacobian of h^{-1} is singular".into()))?;
                Ok(x.transpose())
            }
        },
    }
}

/// Condition numbers of both Jacobians at a point `C` (with `Λ = h^{-1}(C)`).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConditionReport {
    pub cond_f: f64,
    pub cond_g: f64,
    /// `cond_f / cond_g`.
    pub ratio: f64,
}

pub fn condition_numbers(
    filter: &FilterBank,
    prior: &dyn SpectralPrior,
    chart: &CoordinateChart,
    c: &Mat,
    method: JacobianMethod,
) -> Result<ConditionReport> {
    let lambda = h_inverse(&chart.range, c);
    let jf = assemble_jacobian_matrix(filter, prior, chart, MomentMap::F, &lambda, method)?;
    let jg = assemble_jacobian_matrix(filter, prior, chart, MomentMap::G, c, method)?;
    let cond_f = condition_number(&jf);
    let cond_g = condition_number(&jg);
    Ok(ConditionReport {
        cond_f,
        cond_g,
        ratio: cond_f / cond_g,
    })
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Largest power of two tried when shifting a basis direction toward `C`.
    pub max_doublings: u32,
    /// Limit on the condition number of the Gram system.
    pub gram_cond_limit: f64,
    pub dare: DareOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_doublings: 20,
            gram_cond_limit: 1e14,
            dare: DareOptions::default(),
        }
    }
}

/// Solution `V` of `g2(C; V) = Y`.
#[derive(Clone, Debug)]
pub struct NewtonDirection {
    pub v: Mat,
    /// Condition number of the Gram matrix `[<Y_j, Y_k>]`.
    pub gram_cond: f64,
    /// Shift `r_k` needed to evaluate each basis direction.
    pub shifts: Vec<f64>,
    /// `|g2(C; V) - Y| / |Y|` in chart coordinates.
    pub residual: f64,
}

/// Solves `g2(C; V) = Y` for `V` in the factor space.
///
/// Each basis direction is shifted to `V_k = 𝐂_k + r_k C` with the smallest admissible
/// `r_k` and `Y_k = g2(C; V_k)` is computed once. The shift is then removed by linearity,
/// so the Gram system is posed on the images of the orthonormal basis itself and
/// `V = Σ α_k 𝐂_k`.
pub fn solve_jacobian_system(
    filter: &FilterBank,
    prior: &dyn SpectralPrior,
    c: &FactorParameter,
    y: &Mat,
    range: &RangeBasis,
    opts: &SolveOptions,
) -> Result<NewtonDirection> {
    let n = filter.n();
    if y.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "right-hand side is {}x{}, expected {n}x{n}",
            y.nrows(),
            y.ncols()
        )));
    }
    let residual = range.relative_residual(y);
    if residual > 1e-8 {
        return Err(Error::NotInRange { residual });
    }
    let basis = FactorBasis::new(filter, Some(c.c()))?;
    if basis.dim() != range.dim() {
        return Err(Error::Consistency(format!(
            "factor basis has {} elements, Range Gamma has {}",
            basis.dim(),
            range.dim()
        )));
    }
    if frob(y) == 0.0 {
        return Ok(NewtonDirection {
            v: Mat::zeros(c.c().nrows(), c.c().ncols()),
            gram_cond: 1.0,
            shifts: vec![0.0; basis.dim()],
            residual: 0.0,
        });
    }

    let images: Vec<Result<(f64, Mat)>> = basis
        .elements()
        .par_iter()
        .enumerate()
        .map(|(k, ck)| shifted_image(filter, prior, c, ck, k, opts))
        .collect();
    let mut images = images.into_iter().collect::<Result<Vec<_>>>()?;
    // g2(C; V_k) - r_k g2(C; C) = g2(C; 𝐂_k), with g2(C; C) = -2 g
    if images.iter().any(|(r, _)| *r > 0.0) {
        let g = moment_g_statespace(filter, prior, c)?;
        for (r, yk) in images.iter_mut() {
            if *r > 0.0 {
                *yk += g.scale(2.0 * *r);
            }
        }
    }

    let cols: Vec<DVector<f64>> = images.iter().map(|(_, yk)| range.coords(yk)).collect();
    let jm = DMatrix::from_columns(&cols);
    let rhs = range.coords(y);
    let cond = condition_number(&jm);
    let gram_cond = cond * cond;
    if !(gram_cond <= opts.gram_cond_limit) {
        return Err(Error::IllConditioned { cond: gram_cond });
    }
    let svd = jm.clone().svd(true, true);
    let alpha = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Consistency(format!("least-squares solve failed: {e}")))?;
    let fit = &jm * &alpha - &rhs;
    let v = basis.matrix(&alpha);
    Ok(NewtonDirection {
        v,
        gram_cond,
        shifts: images.iter().map(|(r, _)| *r).collect(),
        residual: fit.norm() / rhs.norm(),
    })
}

fn shifted_image(
    filter: &FilterBank,
    prior: &dyn SpectralPrior,
    c: &FactorParameter,
    ck: &Mat,
    index: usize,
    opts: &SolveOptions,
) -> Result<(f64, Mat)> {
    for r in shift_schedule(opts.max_doublings) {
        let vk = ck + c.c().scale(r);
        match apply_g2_unshifted(filter, prior, c, &vk, &opts.dare) {
            Ok(yk) => return Ok((r, yk)),
            Err(e) if is_shift_curable(&e) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::ShiftExhausted { index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::{real_matrix, PriorSpectrum};

    fn c_ref() -> Mat {
        real_matrix(2, 4, &[0.5, 0.65, 1.0, 0.0, -2.2615, -1.0, 2.0, 1.0])
    }

    #[test]
    fn solve_recovers_known_direction() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let prior = PriorSpectrum::from_real_polynomial(&[1.0, -1.0, 0.89]).unwrap();
        let c = FactorParameter::new(&f, c_ref()).unwrap();
        let range = RangeBasis::new(&f).unwrap();
        let v_true = real_matrix(2, 4, &[0.1, -0.2, 0.3, 0.0, 0.05, 0.4, -0.1, 0.2]);
        let y = apply_g2_statespace(&f, &prior, &c, &v_true, ShiftPolicy::default()).unwrap();
        let dir = solve_jacobian_system(&f, &prior, &c, &y, &range, &SolveOptions::default()).unwrap();
        assert!(frob(&(&dir.v - &v_true)) < 1e-7, "{}", frob(&(&dir.v - &v_true)));
        assert!(dir.residual < 1e-10);
        assert!(dir.gram_cond >= 1.0);
    }

    #[test]
    fn solve_along_g_gives_minus_half_c() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let prior = PriorSpectrum::unit();
        let c = FactorParameter::new(&f, c_ref()).unwrap();
        let range = RangeBasis::new(&f).unwrap();
        let g = moment_g_statespace(&f, &prior, &c).unwrap();
        let dir = solve_jacobian_system(&f, &prior, &c, &g, &range, &SolveOptions::default()).unwrap();
        assert!(frob(&(&dir.v + c_ref().scale(0.5))) < 1e-8);
    }

    #[test]
    fn zero_rhs_gives_zero_direction() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let c = FactorParameter::new(&f, c_ref()).unwrap();
        let range = RangeBasis::new(&f).unwrap();
        let dir = solve_jacobian_system(&f, &PriorSpectrum::unit(), &c, &Mat::zeros(4, 4), &range, &SolveOptions::default())
            .unwrap();
        assert_eq!(frob(&dir.v), 0.0);
    }

    #[test]
    fn statespace_and_quadrature_jacobians_agree() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let prior = PriorSpectrum::from_real_polynomial(&[1.0, -1.0, 0.89]).unwrap();
        let chart = CoordinateChart::new(&f, None).unwrap();
        let c = c_ref();
        let lambda = h_inverse(&chart.range, &c);
        for (map, point) in [(MomentMap::G, &c), (MomentMap::F, &lambda)] {
            let js = assemble_jacobian_matrix(&f, &prior, &chart, map, point, JacobianMethod::StateSpace).unwrap();
            let jq = assemble_jacobian_matrix(&f, &prior, &chart, map, point, JacobianMethod::Quadrature { dtheta: 1e-3 })
                .unwrap();
            let rel = (&js - &jq).norm() / js.norm();
            assert!(rel < 1e-6, "{map:?}: {rel:e}");
        }
    }
}
