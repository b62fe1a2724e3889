//! State-space evaluation of the moment map `g` and of its derivatives.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::factorization::left_outer_factor_from_additive;
use crate::linalg::{hermitian_part, solve, Mat};
use crate::matrixeq::{solve_dlyap, DareOptions};
use crate::statespace::{cascade, factor_inner_realization, FactorParameter, FilterBank, PriorSpectrum, StateSpace};

/// A scalar spectral density that can weight a Gramian `∫ S ψ S*`.
pub trait SpectralPrior: Sync {
    /// `∫ S(e^{iθ}) ψ(e^{iθ}) S(e^{iθ})* dθ/2π` for a stable system `S`.
    fn weighted_gramian(&self, sys: &StateSpace) -> Result<Mat>;

    /// Density value `ψ(z)` on the unit circle.
    fn density(&self, z: Complex64) -> f64;
}

/// Gramian `C R C* + D D*` of a stable system, with `R - A R A* = B B*`.
pub fn gramian(sys: &StateSpace) -> Result<Mat> {
    let dd = &sys.d * sys.d.adjoint();
    if sys.states() == 0 {
        return Ok(hermitian_part(&dd));
    }
    let r = solve_dlyap(&sys.a, &(&sys.b * sys.b.adjoint()))?;
    Ok(hermitian_part(&(&sys.c * r * sys.c.adjoint() + dd)))
}

impl SpectralPrior for PriorSpectrum {
    fn weighted_gramian(&self, sys: &StateSpace) -> Result<Mat> {
        gramian(&cascade(self.sigma(), sys)?)
    }

    fn density(&self, z: Complex64) -> f64 {
        self.psi(z)
    }
}

/// The homotopy prior `(1 - t) + t ψ`.
#[derive(Clone, Copy, Debug)]
pub struct ConvexPrior<'a> {
    pub target: &'a PriorSpectrum,
    pub t: f64,
}

impl<'a> ConvexPrior<'a> {
    pub fn new(target: &'a PriorSpectrum, t: f64) -> Self {
        Self { target, t }
    }
}

impl SpectralPrior for ConvexPrior<'_> {
    fn weighted_gramian(&self, sys: &StateSpace) -> Result<Mat> {
        if self.t == 0.0 {
            return gramian(sys);
        }
        let target = self.target.weighted_gramian(sys)?;
        if self.t == 1.0 {
            return Ok(target);
        }
        Ok(gramian(sys)?.scale(1.0 - self.t) + target.scale(self.t))
    }

    fn density(&self, z: Complex64) -> f64 {
        (1.0 - self.t) + self.t * self.target.psi(z)
    }
}

/// The signed density `ψ - 1`, the derivative of the homotopy prior in `t`.
#[derive(Clone, Copy, Debug)]
pub struct PriorDirection<'a> {
    pub target: &'a PriorSpectrum,
}

impl SpectralPrior for PriorDirection<'_> {
    fn weighted_gramian(&self, sys: &StateSpace) -> Result<Mat> {
        Ok(self.target.weighted_gramian(sys)? - gramian(sys)?)
    }

    fn density(&self, z: Complex64) -> f64 {
        self.target.psi(z) - 1.0
    }
}

/// `g(ψ, C) = ∫ G ψ (G* C* C G)^{-1} G*`.
pub fn moment_g_statespace(
    filter: &FilterBank,
    prior: &dyn SpectralPrior,
    c: &FactorParameter,
) -> Result<Mat> {
    let inner = factor_inner_realization(filter, c)?;
    filter.field().enforce(prior.weighted_gramian(&inner)?)
}

/// Derivative of `g` in `t` along the homotopy: `g(ψ, C) - g(1, C)`.
pub fn apply_g1_direction(
    filter: &FilterBank,
    target: &PriorSpectrum,
    c: &FactorParameter,
) -> Result<Mat> {
    moment_g_statespace(filter, &PriorDirection { target }, c)
}

/// How `g2(C; V)` handles directions with `Z + Z*` not positive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftPolicy {
    /// Fail with the underlying error.
    Strict,
    /// Try `V + rC` for `r = 0, 1, 2, 4, …` and correct by `2r g(C)`.
    Doubling { max_doublings: u32 },
}

impl Default for ShiftPolicy {
    fn default() -> Self {
        ShiftPolicy::Doubling { max_doublings: 20 }
    }
}

/// Shift sequence `0, 1, 2, 4, …` used to make a direction admissible.
pub fn shift_schedule(max_doublings: u32) -> impl Iterator<Item = f64> {
    std::iter::once(0.0).chain((0..=max_doublings).map(|k| 2f64.powi(k as i32)))
}

/// True for failures that a shift toward `C` may cure.
pub fn is_shift_curable(err: &Error) -> bool {
    matches!(
        err,
        Error::NotPositiveReal { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::Degenerate(_)
            | Error::SolverFailure { .. }
            | Error::Unstable { .. }
    )
}

/// `g2(C; V)` for a direction whose additive factor `Z` is positive real.
pub fn apply_g2_unshifted(
    filter: &FilterBank,
    prior: &dyn SpectralPrior,
    c: &FactorParameter,
    v: &Mat,
    opts: &DareOptions,
) -> Result<Mat> {
    if v.shape() != c.c().shape() {
        return Err(Error::Dimension(format!(
            "direction is {}x{}, expected {}x{}",
            v.nrows(),
            v.ncols(),
            c.c().nrows(),
            c.c().ncols()
        )));
    }
    if v.iter().all(|x| *x == Complex64::new(0.0, 0.0)) {
        return Ok(Mat::zeros(filter.n(), filter.n()));
    }
    let inner = factor_inner_realization(filter, c)?;
    let cb = c.c() * filter.b();
    let gm = inner.b.clone();
    let h = v * c.pi();
    let j = solve(&cb.transpose(), &(v * filter.b()).transpose())?.transpose();
    let outer = left_outer_factor_from_additive(c.pi(), &gm, &h, &j, opts)?;
    let chain = inner.series(&outer.system)?;
    let y = prior.weighted_gramian(&chain)?;
    filter.field().enforce(-y)
}

/// `g2(C; V)`, the derivative of `g` at `C` in the direction `V`.
pub fn apply_g2_statespace(
    filter: &FilterBank,
    prior: &dyn SpectralPrior,
    c: &FactorParameter,
    v: &Mat,
    policy: ShiftPolicy,
) -> Result<Mat> {
    let opts = DareOptions::default();
    let max = match policy {
        ShiftPolicy::Strict => return apply_g2_unshifted(filter, prior, c, v, &opts),
        ShiftPolicy::Doubling { max_doublings } => max_doublings,
    };
    let mut last = None;
    for r in shift_schedule(max) {
        let shifted = v + c.c().scale(r);
        match apply_g2_unshifted(filter, prior, c, &shifted, &opts) {
            Ok(y) if r == 0.0 => return Ok(y),
            Ok(y) => {
                let g = moment_g_statespace(filter, prior, c)?;
                return Ok(y + g.scale(2.0 * r));
            }
            Err(e) if is_shift_curable(&e) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or(Error::ShiftExhausted { index: 0 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frob, identity};
    use crate::statespace::real_matrix;

    fn example_c() -> Mat {
        real_matrix(2, 4, &[0.5, 0.65, 1.0, 0.0, -2.2615, -1.0, 2.0, 1.0])
    }

    fn example_prior() -> PriorSpectrum {
        PriorSpectrum::from_real_polynomial(&[1.0, -1.0, 0.89]).unwrap()
    }

    #[test]
    fn unit_prior_at_b_star_gives_identity() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let c = FactorParameter::new(&f, f.b().adjoint()).unwrap();
        let g = moment_g_statespace(&f, &PriorSpectrum::unit(), &c).unwrap();
        assert!(frob(&(g - identity(4))) < 1e-12);
    }

    #[test]
    fn g2_along_c_is_minus_twice_g() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let c = FactorParameter::new(&f, example_c()).unwrap();
        let prior = example_prior();
        let g = moment_g_statespace(&f, &prior, &c).unwrap();
        let y = apply_g2_statespace(&f, &prior, &c, c.c(), ShiftPolicy::Strict).unwrap();
        assert!(frob(&(y + g.scale(2.0))) < 1e-9 * frob(&g));
    }

    #[test]
    fn g2_of_zero_is_zero() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let c = FactorParameter::new(&f, example_c()).unwrap();
        let y = apply_g2_statespace(&f, &PriorSpectrum::unit(), &c, &Mat::zeros(2, 4), ShiftPolicy::Strict)
            .unwrap();
        assert_eq!(frob(&y), 0.0);
    }

    #[test]
    fn convex_prior_is_linear_in_t() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let c = FactorParameter::new(&f, example_c()).unwrap();
        let prior = example_prior();
        let g0 = moment_g_statespace(&f, &PriorSpectrum::unit(), &c).unwrap();
        let g1 = moment_g_statespace(&f, &prior, &c).unwrap();
        let gt = moment_g_statespace(&f, &ConvexPrior::new(&prior, 0.3), &c).unwrap();
        assert!(frob(&(gt - (g0.scale(0.7) + g1.scale(0.3)))) < 1e-10 * frob(&g1));
        let d = apply_g1_direction(&f, &prior, &c).unwrap();
        let gd = moment_g_statespace(&f, &prior, &c).unwrap()
            - moment_g_statespace(&f, &PriorSpectrum::unit(), &c).unwrap();
        assert!(frob(&(d - gd)) < 1e-10 * frob(&g1));
    }

    #[test]
    fn g2_finite_difference() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let prior = example_prior();
        let c0 = example_c();
        let c = FactorParameter::new(&f, c0.clone()).unwrap();
        // direction inside the factor space: CB stays lower triangular
        let v = real_matrix(2, 4, &[0.1, -0.2, 0.3, 0.0, 0.05, 0.4, -0.1, 0.2]);
        let y = apply_g2_statespace(&f, &prior, &c, &v, ShiftPolicy::default()).unwrap();
        let eps = 1e-6;
        let plus = FactorParameter::new(&f, &c0 + v.scale(eps)).unwrap();
        let minus = FactorParameter::new(&f, &c0 - v.scale(eps)).unwrap();
        let fd = (moment_g_statespace(&f, &prior, &plus).unwrap()
            - moment_g_statespace(&f, &prior, &minus).unwrap())
        .unscale(2.0 * eps);
        assert!(frob(&(&y - &fd)) < 1e-5 * frob(&y), "{}", frob(&(&y - &fd)));
    }

    #[test]
    fn shift_schedule_doubles() {
        let s: Vec<f64> = shift_schedule(3).collect();
        assert_eq!(s, vec![0.0, 1.0, 2.0, 4.0, 8.0]);
    }
}
