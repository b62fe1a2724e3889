//! Seeded generators of admissible test data: factors in `C+`, priors, directions, covariances.

use rand::Rng;

use crate::error::Result;
use crate::linalg::{c64, Field, Mat};
use crate::moment::{moment_g_statespace, FactorSpace};
use crate::statespace::{is_in_cplus, FactorParameter, FilterBank, PriorSpectrum};

/// Random element of `C+` near `B*`, by rejection from perturbations of size `scale`.
pub fn random_factor<R: Rng>(filter: &FilterBank, rng: &mut R, scale: f64) -> FactorParameter {
    let space = FactorSpace::new(filter);
    let b_star = filter.b().adjoint();
    let mut s = scale;
    loop {
        for _ in 0..50 {
            let c = &b_star + space.project(&random_matrix(filter.m(), filter.n(), filter.field(), rng)).scale(s);
            if is_in_cplus(filter, &c) {
                if let Ok(p) = FactorParameter::new(filter, c) {
                    return p;
                }
            }
        }
        s *= 0.5;
    }
}

/// Random direction in the factor space with unit Frobenius norm.
pub fn random_direction<R: Rng>(filter: &FilterBank, rng: &mut R) -> Mat {
    let space = FactorSpace::new(filter);
    loop {
        let v = space.project(&random_matrix(filter.m(), filter.n(), filter.field(), rng));
        let norm = crate::linalg::frob(&v);
        if norm > 1e-3 {
            return v.unscale(norm);
        }
    }
}

/// Random second-order polynomial prior `(1 - r e^{iφ} z^{-1})(1 - r e^{-iφ} z^{-1})` with `r < 0.9`.
pub fn random_prior<R: Rng>(rng: &mut R) -> PriorSpectrum {
    let r: f64 = rng.gen_range(0.05..0.9);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    PriorSpectrum::from_real_polynomial(&[1.0, -2.0 * r * phi.cos(), r * r])
        .expect("roots inside the disk give an admissible prior")
}

/// Random feasible `Σ ≻ 0`, the moment of a random factor under the unit prior.
pub fn random_sigma<R: Rng>(filter: &FilterBank, rng: &mut R) -> Result<Mat> {
    let c = random_factor(filter, rng, 0.5);
    moment_g_statespace(filter, &PriorSpectrum::unit(), &c)
}

/// Matrix with independent entries uniform in `[-1, 1]` (real and imaginary parts for complex fields).
pub fn random_matrix<R: Rng>(rows: usize, cols: usize, field: Field, rng: &mut R) -> Mat {
    Mat::from_fn(rows, cols, |_, _| {
        let re = rng.gen_range(-1.0..1.0);
        let im = match field {
            Field::Real => 0.0,
            Field::Complex => rng.gen_range(-1.0..1.0),
        };
        c64(re, im)
    })
}
