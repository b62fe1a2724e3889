//! Stein/Lyapunov and Riccati solvers plus the two triangular factorizations.
//!
//! Both Riccati forms are solved by Newton (Kleinman–Hewer) iteration: each step is a
//! Stein equation for the current closed loop, started from the zero gain, which is
//! stabilizing because the open-loop matrix is stable. The form with the filter
//! pair has no additive weight on `B* X B`, so doubling schemes that invert that
//! weight do not apply there; plain fixed-point Riccati iteration is the fallback.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    circle_grid, frob, hermitian_defect, hermitian_part, identity, min_hermitian_eigenvalue, solve,
    spectral_radius, Mat, STRICT_TOL, ZERO,
};
use crate::statespace::{check_lplus, FilterBank};

/// Largest order handled by Schur back-substitution; above it the doubling series is used.
pub const SCHUR_MAX_ORDER: usize = 200;

/// Solves the Stein equation `X - A X A* = Q` for stable `A`.
pub fn solve_stein(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "Stein equation with A {}x{} and Q {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    if n > SCHUR_MAX_ORDER {
        let rho = spectral_radius(a);
        if rho >= 1.0 - STRICT_TOL {
            return Err(Error::Unstable { spectral_radius: rho });
        }
        return Ok(stein_series(a, q));
    }
    let (u, t) = a.clone().schur().unpack();
    let rho = (0..n).fold(0.0f64, |acc, i| acc.max(t[(i, i)].norm()));
    if rho >= 1.0 - STRICT_TOL {
        return Err(Error::Unstable { spectral_radius: rho });
    }
    let qt = u.adjoint() * q * &u;
    // Column j of Rt - T Rt T* = Qt, sweeping j downwards:
    // (I - conj(T_jj) T) r_j = q_j + T sum_{l>j} conj(T_jl) r_l.
    let mut r = Mat::zeros(n, n);
    let mut w = vec![ZERO; n];
    let mut rhs = vec![ZERO; n];
    for j in (0..n).rev() {
        w.iter_mut().for_each(|x| *x = ZERO);
        for l in (j + 1)..n {
            let coef = t[(j, l)].conj();
            for i in 0..n {
                w[i] += r[(i, l)] * coef;
            }
        }
        for i in 0..n {
            let mut acc = qt[(i, j)];
            for k in i..n {
                acc += t[(i, k)] * w[k];
            }
            rhs[i] = acc;
        }
        let s = t[(j, j)].conj();
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            for k in (i + 1)..n {
                acc += s * t[(i, k)] * r[(k, j)];
            }
            r[(i, j)] = acc / (crate::linalg::ONE - s * t[(i, i)]);
        }
    }
    Ok(&u * r * u.adjoint())
}

/// Smith doubling for `sum_k A^k Q A*^k`.
fn stein_series(a: &Mat, q: &Mat) -> Mat {
    let mut x = q.clone();
    let mut ak = a.clone();
    for _ in 0..64 {
        let inc = &ak * &x * ak.adjoint();
        x += &inc;
        ak = &ak * &ak;
        if frob(&inc) <= 1e-17 * frob(&x) || frob(&ak) == 0.0 {
            break;
        }
    }
    x
}

/// Discrete Lyapunov equation `R - A R A* = Q` with Hermitian `Q`; the result is Hermitian.
pub fn solve_dlyap(a: &Mat, q: &Mat) -> Result<Mat> {
    if hermitian_defect(q) > STRICT_TOL * (1.0 + frob(q)) {
        return Err(Error::InvalidInput("Lyapunov right-hand side is not Hermitian".into()));
    }
    solve_stein(a, q).map(|r| hermitian_part(&r))
}

/// Lower-triangular `L` with `M = L L*`.
pub fn standard_cholesky(m: &Mat) -> Result<Mat> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension("Cholesky of a non-square matrix".into()));
    }
    if hermitian_defect(m) > STRICT_TOL * (1.0 + frob(m)) {
        return Err(Error::InvalidInput("Cholesky of a non-Hermitian matrix".into()));
    }
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = crate::linalg::c64(djj, 0.0);
        for i in (j + 1)..n {
            let mut acc = m[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = acc / djj;
        }
    }
    Ok(l)
}

fn exchange(m: &Mat) -> Mat {
    let (r, c) = m.shape();
    Mat::from_fn(r, c, |i, j| m[(r - 1 - i, c - 1 - j)])
}

/// Lower-triangular `L` with `M = L* L`, computed from the exchange-permuted matrix.
pub fn reverse_cholesky(m: &Mat) -> Result<Mat> {
    let n = m.nrows();
    let flipped = standard_cholesky(&exchange(m)).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot, value } => Error::NotPositiveDefinite {
            pivot: n - 1 - pivot,
            value,
        },
        other => other,
    })?;
    Ok(exchange(&flipped.adjoint()))
}

/// Which Riccati iteration to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DareMethod {
    Newton,
    FixedPoint,
}

#[derive(Clone, Debug)]
pub struct DareOptions {
    pub method: DareMethod,
    pub max_iter: usize,
    /// Relative update `|X_{k+1} - X_k| / |X_{k+1}|` declaring convergence.
    pub tol: f64,
    /// Fall back to fixed-point iteration when Newton fails.
    pub fallback: bool,
    /// Grid for the positivity precondition; `0` skips the check.
    pub check_grid: usize,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self {
            method: DareMethod::Newton,
            max_iter: 200,
            tol: 1e-13,
            fallback: true,
            check_grid: 1024,
        }
    }
}

/// Stabilizing Riccati solution with diagnostics.
#[derive(Clone, Debug)]
pub struct DareSolution {
    pub p: Mat,
    pub closed_loop: Mat,
    pub residual_norm: f64,
    /// `L` with `B* P B = L* L` (filter form) or `R + H P H* = L L*` (additive form).
    pub factor: Mat,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub method: DareMethod,
}

struct Converge {
    tol: f64,
    prev_update: f64,
}

impl Converge {
    fn new(tol: f64) -> Self {
        Self {
            tol,
            prev_update: f64::INFINITY,
        }
    }

    /// Converged on a tiny update, or on a small update that stopped shrinking (roundoff floor).
    fn step(&mut self, prev: &Mat, next: &Mat) -> bool {
        let update = frob(&(next - prev)) / frob(next).max(f64::MIN_POSITIVE);
        let done = update <= self.tol || (update <= 1e-10 && update >= 0.5 * self.prev_update);
        self.prev_update = update;
        done
    }
}

/// Residual of `X = A* X A - A* X B (B* X B)^{-1} B* X A + Lambda`.
pub fn dare_lambda_residual(filter: &FilterBank, lambda: &Mat, x: &Mat) -> Result<Mat> {
    let (a, b) = (filter.a(), filter.b());
    let bxb = b.adjoint() * x * b;
    let bxa = b.adjoint() * x * a;
    let gain = solve(&bxb, &bxa)?;
    Ok(x - (a.adjoint() * x * a - bxa.adjoint() * gain + lambda))
}

/// Stabilizing solution of the Riccati equation attached to `(A, B)` and `Lambda` in `L+`.
pub fn solve_dare_lambda(filter: &FilterBank, lambda: &Mat) -> Result<DareSolution> {
    solve_dare_lambda_with(filter, lambda, &DareOptions::default())
}

pub fn solve_dare_lambda_with(
    filter: &FilterBank,
    lambda: &Mat,
    opts: &DareOptions,
) -> Result<DareSolution> {
    let n = filter.n();
    if lambda.shape() != (n, n) {
        return Err(Error::Dimension(format!("Lambda must be {n}x{n}")));
    }
    if opts.check_grid > 0 {
        let report = check_lplus(filter, lambda, opts.check_grid);
        if !report.in_set {
            return Err(Error::NotInLplus {
                min_eig: report.min_eig,
            });
        }
    }
    let lambda = hermitian_part(lambda);
    let run = |method| match method {
        DareMethod::Newton => lambda_newton(filter, &lambda, opts),
        DareMethod::FixedPoint => lambda_fixed_point(filter, &lambda, opts),
    };
    let (x, iterations, history, method) = match run(opts.method) {
        Ok(v) => v,
        Err(e) if opts.fallback && opts.method == DareMethod::Newton => {
            run(DareMethod::FixedPoint).map_err(|_| e)?
        }
        Err(e) => return Err(e),
    };
    let p = filter.field().enforce(hermitian_part(&x))?;
    let (a, b) = (filter.a(), filter.b());
    let bpb = b.adjoint() * &p * b;
    let factor = reverse_cholesky(&hermitian_part(&bpb))
        .map_err(|_| Error::Degenerate("B* P B is not positive definite".into()))?;
    let closed_loop = a - b * solve(&bpb, &(b.adjoint() * &p * a))?;
    let rho = spectral_radius(&closed_loop);
    if rho >= 1.0 - STRICT_TOL {
        return Err(Error::Degenerate(format!(
            "Riccati solution is not stabilizing (spectral radius {rho:.6})"
        )));
    }
    let residual_norm = frob(&dare_lambda_residual(filter, &lambda, &p)?);
    Ok(DareSolution {
        p,
        closed_loop,
        residual_norm,
        factor,
        iterations,
        residual_history: history,
        method,
    })
}

type Iterate = (Mat, usize, Vec<f64>, DareMethod);

fn lambda_newton(filter: &FilterBank, lambda: &Mat, opts: &DareOptions) -> Result<Iterate> {
    let (a, b) = (filter.a(), filter.b());
    let mut gain = Mat::zeros(filter.m(), filter.n());
    let mut prev: Option<Mat> = None;
    let mut history = Vec::new();
    let mut conv = Converge::new(opts.tol);
    for it in 1..=opts.max_iter {
        let pi = a - b * &gain;
        let x = solve_dlyap(&pi.adjoint(), lambda)?;
        let bxb = b.adjoint() * &x * b;
        if standard_cholesky(&hermitian_part(&bxb)).is_err() {
            return Err(Error::Degenerate(format!(
                "B* X B lost positive definiteness at Newton step {it}"
            )));
        }
        gain = solve(&bxb, &(b.adjoint() * &x * a))?;
        history.push(frob(&dare_lambda_residual(filter, lambda, &x)?));
        let done = prev.as_ref().is_some_and(|p| conv.step(p, &x));
        if done {
            return Ok((x, it, history, DareMethod::Newton));
        }
        prev = Some(x);
    }
    Err(Error::SolverFailure {
        equation: "Riccati equation (Newton)",
        iterations: opts.max_iter,
        last: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

fn lambda_fixed_point(filter: &FilterBank, lambda: &Mat, opts: &DareOptions) -> Result<Iterate> {
    let (a, b) = (filter.a(), filter.b());
    let mut x = lambda.clone();
    if standard_cholesky(&hermitian_part(&(b.adjoint() * &x * b))).is_err() {
        x = solve_dlyap(&a.adjoint(), lambda)?;
    }
    let mut history = Vec::new();
    let mut conv = Converge::new(opts.tol);
    for it in 1..=opts.max_iter {
        let next = hermitian_part(&(&x - dare_lambda_residual(filter, lambda, &x)?));
        history.push(frob(&dare_lambda_residual(filter, lambda, &next)?));
        let done = conv.step(&x, &next);
        x = next;
        if done {
            return Ok((x, it, history, DareMethod::FixedPoint));
        }
    }
    Err(Error::SolverFailure {
        equation: "Riccati equation (fixed point)",
        iterations: opts.max_iter,
        last: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

/// Residual of `P = F P F* - (G + F P H*)(R + H P H*)^{-1}(G* + H P F*)` with `R = J + J*`.
pub fn dare_appendix_residual(f: &Mat, gm: &Mat, h: &Mat, j: &Mat, p: &Mat) -> Result<Mat> {
    let r = j + j.adjoint();
    let n = &r + h * p * h.adjoint();
    let cross = gm + f * p * h.adjoint();
    let gain = solve(&n.transpose(), &cross.transpose())?.transpose();
    Ok(p - (f * p * f.adjoint() - gain * cross.adjoint()))
}

/// Minimum over a circle grid of the smallest eigenvalue of `Z + Z*`, `Z = H (zI - F)^{-1} G + J`.
pub fn positive_real_margin(f: &Mat, gm: &Mat, h: &Mat, j: &Mat, grid: usize) -> Result<f64> {
    let k = f.nrows();
    let mut min = f64::INFINITY;
    for (_, z) in circle_grid(grid) {
        let x = solve(&(identity(k) * z - f), gm).map_err(|_| Error::Evaluation { z })?;
        let zv = h * x + j;
        min = min.min(min_hermitian_eigenvalue(&(&zv + zv.adjoint())));
    }
    Ok(min)
}

/// Stabilizing solution of the Riccati equation that turns `Z + Z*` into `W W*`.
pub fn solve_dare_appendix(f: &Mat, gm: &Mat, h: &Mat, j: &Mat) -> Result<DareSolution> {
    solve_dare_appendix_with(f, gm, h, j, &DareOptions::default())
}

pub fn solve_dare_appendix_with(
    f: &Mat,
    gm: &Mat,
    h: &Mat,
    j: &Mat,
    opts: &DareOptions,
) -> Result<DareSolution> {
    let k = f.nrows();
    let m = j.nrows();
    if f.ncols() != k || gm.shape() != (k, m) || h.shape() != (m, k) || j.ncols() != m {
        return Err(Error::Dimension(format!(
            "additive data F {}x{}, G {}x{}, H {}x{}, J {}x{}",
            f.nrows(),
            f.ncols(),
            gm.nrows(),
            gm.ncols(),
            h.nrows(),
            h.ncols(),
            j.nrows(),
            j.ncols()
        )));
    }
    let rho = spectral_radius(f);
    if rho >= 1.0 - STRICT_TOL {
        return Err(Error::Unstable { spectral_radius: rho });
    }
    if opts.check_grid > 0 {
        let min_eig = positive_real_margin(f, gm, h, j, opts.check_grid)?;
        if !(min_eig > 0.0) {
            return Err(Error::NotPositiveReal { min_eig });
        }
    }
    let r = j + j.adjoint();
    if let Err(Error::NotPositiveDefinite { .. }) = standard_cholesky(&r) {
        return Err(Error::NotPositiveReal {
            min_eig: min_hermitian_eigenvalue(&r),
        });
    }
    let run = |method| match method {
        DareMethod::Newton => appendix_newton(f, gm, h, &r, opts),
        DareMethod::FixedPoint => appendix_fixed_point(f, gm, h, j, opts),
    };
    let (p, iterations, history, method) = match run(opts.method) {
        Ok(v) => v,
        Err(e) if opts.fallback && opts.method == DareMethod::Newton => {
            run(DareMethod::FixedPoint).map_err(|_| e)?
        }
        Err(e) => return Err(e),
    };
    let p = hermitian_part(&p);
    let n = hermitian_part(&(&r + h * &p * h.adjoint()));
    let factor = standard_cholesky(&n)
        .map_err(|_| Error::Degenerate("R + H P H* is not positive definite".into()))?;
    let gain = solve(&n, &(gm + f * &p * h.adjoint()).adjoint())?.adjoint();
    let closed_loop = f - &gain * h;
    let rho = spectral_radius(&closed_loop);
    if rho >= 1.0 - STRICT_TOL {
        return Err(Error::Degenerate(format!(
            "Riccati solution is not stabilizing (spectral radius {rho:.6})"
        )));
    }
    let residual_norm = frob(&dare_appendix_residual(f, gm, h, j, &p)?);
    Ok(DareSolution {
        p,
        closed_loop,
        residual_norm,
        factor,
        iterations,
        residual_history: history,
        method,
    })
}

fn appendix_newton(f: &Mat, gm: &Mat, h: &Mat, r: &Mat, opts: &DareOptions) -> Result<Iterate> {
    let mut gain = Mat::zeros(f.nrows(), h.nrows());
    let mut prev: Option<Mat> = None;
    let mut history = Vec::new();
    let mut conv = Converge::new(opts.tol);
    let j_half = r.scale(0.5);
    for it in 1..=opts.max_iter {
        let fc = f - &gain * h;
        let q = &gain * r * gain.adjoint() - &gain * gm.adjoint() - gm * gain.adjoint();
        let p = solve_dlyap(&fc, &hermitian_part(&q))?;
        let n = hermitian_part(&(r + h * &p * h.adjoint()));
        if standard_cholesky(&n).is_err() {
            return Err(Error::Degenerate(format!(
                "R + H P H* lost positive definiteness at Newton step {it}"
            )));
        }
        gain = solve(&n, &(gm + f * &p * h.adjoint()).adjoint())?.adjoint();
        history.push(frob(&dare_appendix_residual(f, gm, h, &j_half, &p)?));
        let done = prev.as_ref().is_some_and(|x| conv.step(x, &p));
        if done {
            return Ok((p, it, history, DareMethod::Newton));
        }
        prev = Some(p);
    }
    Err(Error::SolverFailure {
        equation: "additive Riccati equation (Newton)",
        iterations: opts.max_iter,
        last: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

fn appendix_fixed_point(f: &Mat, gm: &Mat, h: &Mat, j: &Mat, opts: &DareOptions) -> Result<Iterate> {
    let mut p = Mat::zeros(f.nrows(), f.nrows());
    let mut history = Vec::new();
    let mut conv = Converge::new(opts.tol);
    for it in 1..=opts.max_iter {
        let next = hermitian_part(&(&p - dare_appendix_residual(f, gm, h, j, &p)?));
        history.push(frob(&dare_appendix_residual(f, gm, h, j, &next)?));
        let done = conv.step(&p, &next);
        p = next;
        if done {
            return Ok((p, it, history, DareMethod::FixedPoint));
        }
    }
    Err(Error::SolverFailure {
        equation: "additive Riccati equation (fixed point)",
        iterations: opts.max_iter,
        last: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, from_real};
    use crate::statespace::real_matrix;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stable(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Mat {
        let m = Mat::from_fn(n, n, |_, _| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let rho = spectral_radius(&m);
        m.scale(radius / rho)
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> Mat {
        let m = Mat::from_fn(n, n, |_, _| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        hermitian_part(&m)
    }

    #[test]
    fn dlyap_trivial_cases() {
        let q = real_matrix(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let r = solve_dlyap(&Mat::zeros(2, 2), &q).unwrap();
        assert!(frob(&(r - &q)) < 1e-15);
        let r = solve_dlyap(&real_matrix(1, 1, &[0.5]), &real_matrix(1, 1, &[1.0])).unwrap();
        assert!((r[(0, 0)].re - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dlyap_matches_truncated_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_stable(&mut rng, 5, 0.8);
        let q = random_hermitian(&mut rng, 5);
        let r = solve_dlyap(&a, &q).unwrap();
        let mut series = Mat::zeros(5, 5);
        let mut ak = identity(5);
        for _ in 0..=200 {
            series += &ak * &q * ak.adjoint();
            ak = &a * ak;
        }
        assert!(frob(&(&r - series)) < 1e-9);
        let resid = frob(&(&r - &a * &r * a.adjoint() - &q));
        assert!(resid <= 1e-11 * (1.0 + frob(&r)));
        assert!(hermitian_defect(&r) == 0.0);
    }

    #[test]
    fn dlyap_rejects_unstable() {
        let a = real_matrix(1, 1, &[1.2]);
        assert!(matches!(
            solve_dlyap(&a, &identity(1)),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn dlyap_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_stable(&mut rng, 4, 0.9);
        let q1 = random_hermitian(&mut rng, 4);
        let q2 = random_hermitian(&mut rng, 4);
        let lhs = solve_dlyap(&a, &(&q1 + &q2)).unwrap();
        let rhs = solve_dlyap(&a, &q1).unwrap() + solve_dlyap(&a, &q2).unwrap();
        assert!(frob(&(lhs - rhs)) < 1e-10);
    }

    #[test]
    fn series_fallback_agrees_with_schur() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_stable(&mut rng, 6, 0.7);
        let q = random_hermitian(&mut rng, 6);
        let schur = solve_stein(&a, &q).unwrap();
        let series = stein_series(&a, &q);
        assert!(frob(&(schur - series)) < 1e-11);
    }

    #[test]
    fn cholesky_examples() {
        assert_eq!(reverse_cholesky(&identity(3)).unwrap(), identity(3));
        assert_eq!(standard_cholesky(&identity(3)).unwrap(), identity(3));
        let m = real_matrix(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let l = reverse_cholesky(&m).unwrap();
        assert!(frob(&(&l - real_matrix(2, 2, &[1.0, 0.0, 1.0, 1.0]))) < 1e-15);
        assert!(frob(&(l.adjoint() * &l - &m)) < 1e-15);
        let l = reverse_cholesky(&real_matrix(2, 2, &[4.0, 0.0, 0.0, 9.0])).unwrap();
        assert!(frob(&(l - real_matrix(2, 2, &[2.0, 0.0, 0.0, 3.0]))) < 1e-15);
        let m = real_matrix(2, 2, &[4.0, 2.0, 2.0, 2.0]);
        let l = standard_cholesky(&m).unwrap();
        assert!(frob(&(&l - real_matrix(2, 2, &[2.0, 0.0, 1.0, 1.0]))) < 1e-15);
        let bad = real_matrix(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            standard_cholesky(&bad),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
        assert!(matches!(
            reverse_cholesky(&bad),
            Err(Error::NotPositiveDefinite { pivot: 0, .. })
        ));
    }

    #[test]
    fn cholesky_conventions_on_generic_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Mat::from_fn(4, 4, |_, _| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let m = &x * x.adjoint() + identity(4);
        let lr = reverse_cholesky(&m).unwrap();
        let ls = standard_cholesky(&m).unwrap();
        assert!(frob(&(lr.adjoint() * &lr - &m)) <= 1e-12 * frob(&m));
        assert!(frob(&(&ls * ls.adjoint() - &m)) <= 1e-12 * frob(&m));
        for i in 0..4 {
            assert!(lr[(i, i)].im == 0.0 && lr[(i, i)].re > 0.0);
            for j in (i + 1)..4 {
                assert_eq!(lr[(i, j)], ZERO);
                assert_eq!(ls[(i, j)], ZERO);
            }
        }
        let d = from_real(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            1.0, 4.0, 9.0,
        ])));
        assert_eq!(reverse_cholesky(&d).unwrap(), standard_cholesky(&d).unwrap());
    }

    #[test]
    fn scalar_dare_cancels() {
        for &(a, b, lambda) in &[(0.5, 1.0, 2.0), (-0.9, 0.3, 0.7), (0.0, 2.0, 1.0)] {
            let f = FilterBank::new(
                real_matrix(1, 1, &[a]),
                real_matrix(1, 1, &[b]),
                crate::linalg::Field::Real,
            )
            .unwrap();
            let sol = solve_dare_lambda(&f, &real_matrix(1, 1, &[lambda])).unwrap();
            assert!((sol.p[(0, 0)].re - lambda).abs() < 1e-12);
            assert!(sol.closed_loop[(0, 0)].norm() < 1e-12);
        }
    }

    #[test]
    fn covext_dare_with_bb_adjoint() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let lambda = f.b() * f.b().adjoint();
        let sol = solve_dare_lambda(&f, &lambda).unwrap();
        assert!(frob(&(&sol.p - &lambda)) < 1e-12);
        assert!(frob(&(&sol.factor - identity(2))) < 1e-12);
        assert!(frob(&(&sol.closed_loop - f.a())) < 1e-12);
    }

    #[test]
    fn dare_rejects_lambda_outside_lplus() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        assert!(matches!(
            solve_dare_lambda(&f, &(-identity(4))),
            Err(Error::NotInLplus { .. })
        ));
    }

    #[test]
    fn dare_newton_and_fixed_point_agree() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let lambda = real_matrix(
            4,
            4,
            &[
                1.0, 0.2, 0.3, 0.1, 0.2, 1.5, -0.2, 0.25, 0.3, -0.2, 1.0, 0.2, 0.1, 0.25, 0.2, 1.5,
            ],
        );
        let newton = solve_dare_lambda(&f, &lambda).unwrap();
        let opts = DareOptions {
            method: DareMethod::FixedPoint,
            max_iter: 5000,
            fallback: false,
            ..DareOptions::default()
        };
        let fixed = solve_dare_lambda_with(&f, &lambda, &opts).unwrap();
        assert_eq!(newton.method, DareMethod::Newton);
        assert!(frob(&(&newton.p - &fixed.p)) < 1e-9);
        assert!(newton.residual_norm <= 1e-10 * (1.0 + frob(&newton.p)));
    }

    #[test]
    fn appendix_dare_trivial_cases() {
        let f = real_matrix(2, 2, &[0.5, 0.1, 0.0, -0.3]);
        let gm = real_matrix(2, 1, &[1.0, 1.0]);
        let h = Mat::zeros(1, 2);
        let j = real_matrix(1, 1, &[0.5]);
        // H = 0 makes the equation linear: P = F P F* - G R^{-1} G*.
        let sol = solve_dare_appendix(&f, &gm, &h, &j).unwrap();
        let expect = -solve_dlyap(&f, &(&gm * gm.adjoint())).unwrap();
        assert!(frob(&(&sol.p - expect)) < 1e-12);
        assert!((sol.factor[(0, 0)].re - 1.0).abs() < 1e-15);

        let j = identity(2);
        let gm = identity(2);
        let h = Mat::zeros(2, 2);
        let sol = solve_dare_appendix(&f, &gm, &h, &j).unwrap();
        assert!(sol.residual_norm < 1e-12);
        assert!(frob(&(&sol.factor - identity(2).scale(2f64.sqrt()))) < 1e-15);
    }

    #[test]
    fn appendix_dare_random_positive_real() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut solved = 0;
        while solved < 5 {
            let f = random_stable(&mut rng, 3, 0.7);
            let gm = Mat::from_fn(3, 2, |_, _| c64(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)));
            let h = Mat::from_fn(2, 3, |_, _| c64(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)));
            let j = identity(2).scale(2.0)
                + Mat::from_fn(2, 2, |_, _| c64(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)));
            let Ok(margin) = positive_real_margin(&f, &gm, &h, &j, 512) else { continue };
            if margin <= 0.1 {
                continue;
            }
            let sol = solve_dare_appendix(&f, &gm, &h, &j).unwrap();
            assert!(sol.residual_norm <= 1e-10 * (1.0 + frob(&sol.p)));
            assert!(spectral_radius(&sol.closed_loop) < 1.0);
            solved += 1;
        }
    }
}
