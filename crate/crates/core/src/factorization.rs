//! The bijection `h` between `L+ ∩ Range Gamma` and `C+`, and spectral outer factors.

use crate::error::{Error, Result};
use crate::linalg::{frob, identity, inverse, solve, Mat};
use crate::matrixeq::{solve_dare_appendix_with, solve_dare_lambda_with, DareOptions, DareSolution};
use crate::moment::chart::{FactorSpace, RangeBasis};
use crate::statespace::{FactorParameter, FilterBank, StateSpace};

/// Tolerance for snapping `h(Λ)` onto the factor space.
pub const SNAP_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OuterKind {
    /// `C G(z)`-type factor: `Φ = V* V`.
    Right,
    /// `W(z)` with `Φ = W W*`.
    Left,
}

#[derive(Clone, Debug)]
pub struct OuterFactor {
    pub system: StateSpace,
    pub kind: OuterKind,
}

/// Result of evaluating `h`, with the Riccati diagnostics.
#[derive(Clone, Debug)]
pub struct HMapResult {
    pub c: FactorParameter,
    pub dare: DareSolution,
    /// Relative distance between the raw factor and the factor space before snapping.
    pub snap_residual: f64,
}

/// `h(Λ) = L^{-*} B* P`, with `P` the stabilizing Riccati solution and `B* P B = L* L`.
pub fn h_map(filter: &FilterBank, range: &RangeBasis, lambda: &Mat) -> Result<FactorParameter> {
    h_map_with(filter, range, lambda, &DareOptions::default()).map(|r| r.c)
}

pub fn h_map_with(
    filter: &FilterBank,
    range: &RangeBasis,
    lambda: &Mat,
    opts: &DareOptions,
) -> Result<HMapResult> {
    let n = filter.n();
    if lambda.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "Lambda is {}x{}, expected {n}x{n}",
            lambda.nrows(),
            lambda.ncols()
        )));
    }
    let residual = range.relative_residual(lambda);
    if residual > 1e-8 {
        return Err(Error::NotInRange { residual });
    }
    let dare = solve_dare_lambda_with(filter, lambda, opts)?;
    let l = &dare.factor;
    let raw = solve(&l.adjoint(), &(filter.b().adjoint() * &dare.p))?;
    let space = FactorSpace::new(filter);
    let snap_residual = space.relative_residual(&raw);
    if snap_residual > SNAP_TOL {
        return Err(Error::Consistency(format!(
            "h(Lambda) misses the factor space by {snap_residual:e}"
        )));
    }
    let c = FactorParameter::new(filter, space.project(&raw)).map_err(|e| {
        Error::Consistency(format!("h(Lambda) is not in C+: {e}"))
    })?;
    Ok(HMapResult {
        c,
        dare,
        snap_residual,
    })
}

/// `h^{-1}(C)`: the projection of `C* C` onto `Range Gamma`.
pub fn h_inverse(range: &RangeBasis, c: &Mat) -> Mat {
    range.project(&(c.adjoint() * c)).matrix
}

/// `V(z) = C G(z) z`, realized as `(A, B, C A, C B)`, so that `G* C* C G = V* V`.
pub fn right_outer_factor(filter: &FilterBank, c: &FactorParameter) -> OuterFactor {
    OuterFactor {
        system: StateSpace {
            a: filter.a().clone(),
            b: filter.b().clone(),
            c: c.c() * filter.a(),
            d: c.c() * filter.b(),
        },
        kind: OuterKind::Right,
    }
}

/// Left outer factor `W` of `Z + Z*`, with `Z(z) = H (zI - F)^{-1} G + J` positive real.
///
/// `W(z) = H (zI - F)^{-1} (G + F P H*) L^{-*} + L` where `L L* = R + H P H*`, `R = J + J*`.
pub fn left_outer_factor_from_additive(
    f: &Mat,
    gm: &Mat,
    h: &Mat,
    j: &Mat,
    opts: &DareOptions,
) -> Result<OuterFactor> {
    let sol = solve_dare_appendix_with(f, gm, h, j, opts)?;
    let l = &sol.factor;
    let l_inv_star = inverse(l)?.adjoint();
    let b = (gm + f * &sol.p * h.adjoint()) * l_inv_star;
    Ok(OuterFactor {
        system: StateSpace {
            a: f.clone(),
            b,
            c: h.clone(),
            d: l.clone(),
        },
        kind: OuterKind::Left,
    })
}

/// Largest deviation `|Z + Z* - W W*|` over a circle grid, relative to `|Z + Z*|`.
pub fn outer_factor_defect(f: &Mat, gm: &Mat, h: &Mat, j: &Mat, w: &StateSpace, grid: usize) -> Result<f64> {
    let k = f.nrows();
    let mut worst = 0.0f64;
    for (_, z) in crate::linalg::circle_grid(grid) {
        let x = solve(&(identity(k) * z - f), gm)?;
        let zv = h * x + j;
        let phi = &zv + zv.adjoint();
        let wz = w.eval(z)?;
        let d = frob(&(&phi - &wz * wz.adjoint()));
        worst = worst.max(d / frob(&phi).max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, hermitian_defect};
    use crate::statespace::real_matrix;

    fn c_ref() -> Mat {
        real_matrix(2, 4, &[0.5, 0.65, 1.0, 0.0, -2.2615, -1.0, 2.0, 1.0])
    }

    #[test]
    fn round_trip_through_h() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let range = RangeBasis::new(&f).unwrap();
        let lambda = h_inverse(&range, &c_ref());
        assert!(hermitian_defect(&lambda) < 1e-14);
        let back = h_map(&f, &range, &lambda).unwrap();
        assert!(frob(&(back.c() - c_ref())) < 1e-8, "{}", frob(&(back.c() - c_ref())));
    }

    #[test]
    fn identity_lambda_maps_to_b_star() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let range = RangeBasis::new(&f).unwrap();
        let lambda = h_inverse(&range, &f.b().adjoint());
        let c = h_map(&f, &range, &lambda).unwrap();
        assert!(frob(&(c.c() - f.b().adjoint())) < 1e-10);
    }

    #[test]
    fn lambda_outside_range_is_rejected() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let range = RangeBasis::new(&f).unwrap();
        let mut lambda = identity(4);
        lambda[(0, 0)] = c64(3.0, 0.0);
        assert!(matches!(
            h_map(&f, &range, &lambda),
            Err(Error::NotInRange { .. })
        ));
    }

    #[test]
    fn right_factor_reproduces_density() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let c = FactorParameter::new(&f, c_ref()).unwrap();
        let v = right_outer_factor(&f, &c).system;
        for (_, z) in crate::linalg::circle_grid(64) {
            let g = f.eval(z).unwrap();
            let cg = c.c() * &g;
            let lhs = cg.adjoint() * &cg;
            let vz = v.eval(z).unwrap();
            assert!(frob(&(lhs - vz.adjoint() * &vz)) < 1e-10);
        }
    }

    #[test]
    fn left_factor_reproduces_additive_density() {
        let f = real_matrix(2, 2, &[0.5, 0.2, -0.1, 0.3]);
        let gm = real_matrix(2, 1, &[1.0, 0.5]);
        let h = real_matrix(1, 2, &[0.2, -0.1]);
        let j = real_matrix(1, 1, &[1.0]);
        let w = left_outer_factor_from_additive(&f, &gm, &h, &j, &DareOptions::default()).unwrap();
        assert_eq!(w.kind, OuterKind::Left);
        assert!(outer_factor_defect(&f, &gm, &h, &j, &w.system, 256).unwrap() < 1e-10);
    }
}
