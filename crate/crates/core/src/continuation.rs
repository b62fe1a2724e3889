//! Predictor-corrector continuation from the maximum-entropy solution to a prescribed prior.
//!
//! The prior is deformed along `p(t) = (1 - t) + t ψ`. Each step takes an Euler predictor
//! along the solution curve and corrects with Newton's method in the factor parameter `C`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frob, inverse, solve, Mat};
use crate::matrixeq::{reverse_cholesky, standard_cholesky};
use crate::moment::{
    apply_g1_direction, moment_g_statespace, solve_jacobian_system, ConvexPrior, FactorBasis, FactorSpace,
    RangeBasis, SolveOptions, SpectralPrior,
};
use crate::statespace::{is_in_cplus, FactorParameter, FilterBank, PriorSpectrum};

/// Largest number of step halvings inside one Newton update.
pub const MAX_BACKTRACK: usize = 30;

/// `t` values this close to 1 are snapped to 1.
const END_SNAP: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomotopyConfig {
    /// Initial step length.
    pub dt: f64,
    /// Frobenius tolerance on `g(p(t), C) - Σ`.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Floor for adaptive step halving.
    pub min_dt: f64,
    /// Grid size for membership checks.
    pub grid_n: usize,
}

impl Default for HomotopyConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            newton_tol: 1e-10,
            max_newton: 20,
            min_dt: 1e-4,
            grid_n: 1024,
        }
    }
}

impl HomotopyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_dt > 0.0 && self.min_dt <= self.dt && self.dt <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "step lengths must satisfy 0 < min_dt <= dt <= 1 (dt = {}, min_dt = {})",
                self.dt, self.min_dt
            )));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::InvalidInput("newton_tol must be positive".into()));
        }
        if self.max_newton == 0 {
            return Err(Error::InvalidInput("max_newton must be at least 1".into()));
        }
        Ok(())
    }

    fn solve_options(&self) -> SolveOptions {
        let mut opts = SolveOptions::default();
        opts.dare.check_grid = self.grid_n;
        opts
    }
}

/// One accepted point `(t, C(t))` of the solution curve.
#[derive(Clone, Debug)]
pub struct PathSample {
    pub t: f64,
    pub c: Mat,
    /// Coordinates of `C` in the fixed factor chart.
    pub coords: Vec<f64>,
    /// `|g(p(t), C) - Σ|_F`.
    pub residual: f64,
    pub newton_iters: usize,
    /// Gram condition number of the Jacobian solve at this sample.
    pub gram_cond: f64,
    /// Norm of the curve velocity `dC/dt` at this sample.
    pub velocity: f64,
}

#[derive(Clone, Debug)]
pub struct SolutionPath {
    pub samples: Vec<PathSample>,
    pub config: HomotopyConfig,
    /// Coordinates of `Σ` in the range chart.
    pub sigma_coords: Vec<f64>,
}

impl SolutionPath {
    pub fn last(&self) -> Option<&PathSample> {
        self.samples.last()
    }

    /// Number of accepted steps after the initial point.
    pub fn steps(&self) -> usize {
        self.samples.len().saturating_sub(1)
    }
}

/// A continuation run, possibly stopped early.
#[derive(Clone, Debug)]
pub struct ContinuationRun {
    pub path: SolutionPath,
    pub failure: Option<String>,
    /// Step lengths rejected along the way, as `(t, dt)`.
    pub rejected: Vec<(f64, f64)>,
}

/// Maximum-entropy factor `C = L^{-*} B* Σ^{-1}` with `B* Σ^{-1} B = L* L`, so that `g(1, C) = Σ`.
pub fn maxent_initialization(filter: &FilterBank, range: &RangeBasis, sigma: &Mat) -> Result<FactorParameter> {
    let n = filter.n();
    if sigma.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "Sigma is {}x{}, expected {n}x{n}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let defect = frob(&(sigma - sigma.adjoint()));
    if defect > 1e-12 * (1.0 + frob(sigma)) {
        return Err(Error::InvalidInput(format!("Sigma is not Hermitian (defect {defect:e})")));
    }
    standard_cholesky(sigma)?;
    let residual = range.relative_residual(sigma);
    if residual > 1e-8 {
        return Err(Error::Infeasible { residual });
    }
    let sigma_inv = inverse(sigma)?;
    let b = filter.b();
    let l = reverse_cholesky(&(b.adjoint() * &sigma_inv * b))?;
    let c = solve(&l.adjoint(), &(b.adjoint() * sigma_inv))?;
    let c = FactorSpace::new(filter).project(&c);
    FactorParameter::new(filter, c).map_err(|e| Error::Consistency(format!("maximum-entropy factor: {e}")))
}

/// Euler predictor data at `(t, C)`.
#[derive(Clone, Debug)]
pub struct Predictor {
    /// Curve velocity `v = -[g2]^{-1} g1`.
    pub v: Mat,
    pub gram_cond: f64,
}

impl Predictor {
    pub fn step(&self, c: &FactorParameter, dt: f64) -> Mat {
        c.c() + self.v.scale(dt)
    }
}

/// Velocity of the solution curve at `(t, C)`.
pub fn predictor_velocity(
    filter: &FilterBank,
    target: &PriorSpectrum,
    t: f64,
    c: &FactorParameter,
    range: &RangeBasis,
    opts: &SolveOptions,
) -> Result<Predictor> {
    let g1 = apply_g1_direction(filter, target, c)?;
    let dir = solve_jacobian_system(filter, &ConvexPrior::new(target, t), c, &(-g1), range, opts)?;
    Ok(Predictor {
        v: dir.v,
        gram_cond: dir.gram_cond,
    })
}

/// `C + dt v` with `v` the curve velocity at `(t, C)`.
pub fn predictor_step(
    filter: &FilterBank,
    target: &PriorSpectrum,
    t: f64,
    c: &FactorParameter,
    dt: f64,
    range: &RangeBasis,
) -> Result<Mat> {
    if dt == 0.0 {
        return Ok(c.c().clone());
    }
    let p = predictor_velocity(filter, target, t, c, range, &SolveOptions::default())?;
    Ok(p.step(c, dt))
}

#[derive(Clone, Debug)]
pub struct CorrectorOutcome {
    pub c: FactorParameter,
    pub iterations: usize,
    pub residual: f64,
    /// Residual norm before each Newton update and after the last one.
    pub history: Vec<f64>,
    /// Gram condition number of the last linear solve (NaN if none was needed).
    pub gram_cond: f64,
}

/// Newton's method on `g(ψ_t, C) = Σ` with backtracking that keeps `C` in `C+`.
pub fn corrector_newton(
    filter: &FilterBank,
    prior: &dyn SpectralPrior,
    c_init: FactorParameter,
    sigma: &Mat,
    config: &HomotopyConfig,
    range: &RangeBasis,
) -> Result<CorrectorOutcome> {
    let opts = config.solve_options();
    let mut c = c_init;
    let mut r = moment_g_statespace(filter, prior, &c)? - sigma;
    let mut history = vec![frob(&r)];
    // g and Σ lie in Range Gamma; projecting drops roundoff that is large relative to a small residual
    let rhs = |r: &Mat| range.project(r).matrix;
    let mut gram_cond = f64::NAN;
    for it in 0..=config.max_newton {
        let res = *history.last().expect("history is non-empty");
        if res <= config.newton_tol {
            return Ok(CorrectorOutcome {
                c,
                iterations: it,
                residual: res,
                history,
                gram_cond,
            });
        }
        if it == config.max_newton {
            break;
        }
        let dir = solve_jacobian_system(filter, prior, &c, &rhs(&r), range, &opts)?;
        gram_cond = dir.gram_cond;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACK {
            let candidate = c.c() - dir.v.scale(step);
            if is_in_cplus(filter, &candidate) {
                accepted = Some(FactorParameter::new(filter, candidate)?);
                break;
            }
            step *= 0.5;
        }
        let Some(next) = accepted else {
            return Err(Error::CorrectorFailure {
                t: f64::NAN,
                reason: format!("backtracking left C+ after {MAX_BACKTRACK} halvings"),
            });
        };
        c = next;
        r = moment_g_statespace(filter, prior, &c)? - sigma;
        history.push(frob(&r));
    }
    Err(Error::CorrectorFailure {
        t: f64::NAN,
        reason: format!(
            "residual {:e} above tolerance after {} Newton steps",
            history.last().copied().unwrap_or(f64::NAN),
            config.max_newton
        ),
    })
}

/// Runs the continuation; on failure returns the error and drops the partial path.
pub fn run_continuation(
    filter: &FilterBank,
    sigma: &Mat,
    target: &PriorSpectrum,
    config: &HomotopyConfig,
) -> Result<SolutionPath> {
    let run = trace_continuation(filter, sigma, target, config)?;
    match run.failure {
        None => Ok(run.path),
        Some(reason) => Err(Error::StepFloor {
            t: run.path.last().map_or(0.0, |s| s.t),
            min_dt: config.min_dt,
            reason,
        }),
    }
}

/// Runs the continuation and keeps the accepted samples even if the step floor is reached.
///
/// Errors in the inputs (dimensions, infeasible `Σ`, failed initialization) are returned as `Err`.
pub fn trace_continuation(
    filter: &FilterBank,
    sigma: &Mat,
    target: &PriorSpectrum,
    config: &HomotopyConfig,
) -> Result<ContinuationRun> {
    config.validate()?;
    let range = RangeBasis::new(filter)?;
    let chart = FactorBasis::new(filter, None)?;
    let opts = config.solve_options();
    let c0 = maxent_initialization(filter, &range, sigma)?;
    let start = corrector_newton(filter, &ConvexPrior::new(target, 0.0), c0, sigma, config, &range)?;

    let mut path = SolutionPath {
        samples: Vec::new(),
        config: config.clone(),
        sigma_coords: range.coords(sigma).iter().copied().collect(),
    };
    let mut rejected = Vec::new();
    let mut t = 0.0;
    let mut c = start.c;
    let mut iters = start.iterations;
    let mut residual = start.residual;
    let mut dt = config.dt;
    loop {
        let pred = predictor_velocity(filter, target, t, &c, &range, &opts)?;
        path.samples.push(sample(&chart, t, &c, residual, iters, &pred));
        if t >= 1.0 {
            break;
        }
        let mut last_reason = String::new();
        let accepted = loop {
            if dt < config.min_dt {
                break None;
            }
            let mut t_next = (t + dt).min(1.0);
            if t_next >= 1.0 - END_SNAP {
                t_next = 1.0;
            }
            match attempt_step(filter, target, sigma, config, &range, &c, &pred, t_next - t, t_next) {
                Ok(out) => break Some((t_next, out)),
                Err(e) => {
                    last_reason = e.to_string();
                    rejected.push((t, dt));
                    dt *= 0.5;
                }
            }
        };
        let Some((t_next, out)) = accepted else {
            return Ok(ContinuationRun {
                path,
                failure: Some(last_reason),
                rejected,
            });
        };
        t = t_next;
        c = out.c;
        iters = out.iterations;
        residual = out.residual;
    }
    Ok(ContinuationRun {
        path,
        failure: None,
        rejected,
    })
}

#[allow(clippy::too_many_arguments)]
fn attempt_step(
    filter: &FilterBank,
    target: &PriorSpectrum,
    sigma: &Mat,
    config: &HomotopyConfig,
    range: &RangeBasis,
    c: &FactorParameter,
    pred: &Predictor,
    step: f64,
    t_next: f64,
) -> Result<CorrectorOutcome> {
    let predicted = FactorParameter::new(filter, pred.step(c, step))?;
    let prior = ConvexPrior::new(target, t_next);
    corrector_newton(filter, &prior, predicted, sigma, config, range).map_err(|e| match e {
        Error::CorrectorFailure { reason, .. } => Error::CorrectorFailure { t: t_next, reason },
        other => other,
    })
}

fn sample(chart: &FactorBasis, t: f64, c: &FactorParameter, residual: f64, iters: usize, pred: &Predictor) -> PathSample {
    let coords: DVector<f64> = chart.coords(c.c());
    PathSample {
        t,
        c: c.c().clone(),
        coords: coords.iter().copied().collect(),
        residual,
        newton_iters: iters,
        gram_cond: pred.gram_cond,
        velocity: frob(&pred.v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;
    use crate::statespace::real_matrix;

    fn c_ref() -> Mat {
        real_matrix(2, 4, &[0.5, 0.65, 1.0, 0.0, -2.2615, -1.0, 2.0, 1.0])
    }

    fn example_prior() -> PriorSpectrum {
        PriorSpectrum::from_real_polynomial(&[1.0, -1.0, 0.89]).unwrap()
    }

    fn example_sigma(f: &FilterBank) -> Mat {
        let c = FactorParameter::new(f, c_ref()).unwrap();
        moment_g_statespace(f, &example_prior(), &c).unwrap()
    }

    #[test]
    fn maxent_identity_gives_b_star() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let range = RangeBasis::new(&f).unwrap();
        let c = maxent_initialization(&f, &range, &identity(4)).unwrap();
        assert!(frob(&(c.c() - f.b().adjoint())) < 1e-14);
    }

    #[test]
    fn maxent_scalar() {
        let f = FilterBank::covariance_extension(1, 0).unwrap();
        let range = RangeBasis::new(&f).unwrap();
        let c = maxent_initialization(&f, &range, &real_matrix(1, 1, &[4.0])).unwrap();
        assert!((c.c()[(0, 0)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn maxent_matches_covariance() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let range = RangeBasis::new(&f).unwrap();
        let sigma = example_sigma(&f);
        let c = maxent_initialization(&f, &range, &sigma).unwrap();
        let g = moment_g_statespace(&f, &PriorSpectrum::unit(), &c).unwrap();
        assert!(frob(&(g - &sigma)) <= 1e-9 * frob(&sigma));
    }

    #[test]
    fn maxent_rejects_bad_sigma() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let range = RangeBasis::new(&f).unwrap();
        let mut s = identity(4);
        s[(0, 0)] = crate::linalg::c64(2.0, 0.0);
        assert!(matches!(maxent_initialization(&f, &range, &s), Err(Error::Infeasible { .. })));
        assert!(matches!(
            maxent_initialization(&f, &range, &identity(4).scale(-1.0)),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn predictor_is_still_for_unit_prior() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let range = RangeBasis::new(&f).unwrap();
        let c = FactorParameter::new(&f, c_ref()).unwrap();
        let p = predictor_step(&f, &PriorSpectrum::unit(), 0.0, &c, 0.1, &range).unwrap();
        assert!(frob(&(p - c_ref())) == 0.0);
        let p = predictor_step(&f, &example_prior(), 0.0, &c, 0.0, &range).unwrap();
        assert_eq!(p, c_ref());
    }

    #[test]
    fn corrector_at_solution_takes_no_step() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let range = RangeBasis::new(&f).unwrap();
        let sigma = example_sigma(&f);
        let prior = example_prior();
        let c = FactorParameter::new(&f, c_ref()).unwrap();
        let out = corrector_newton(&f, &prior, c, &sigma, &HomotopyConfig::default(), &range).unwrap();
        assert!(out.iterations <= 1);
        assert!(frob(&(out.c.c() - c_ref())) < 1e-9);
    }

    #[test]
    fn constant_prior_path_is_constant() {
        let f = FilterBank::covariance_extension(2, 1).unwrap();
        let sigma = example_sigma(&f);
        let path = run_continuation(&f, &sigma, &PriorSpectrum::unit(), &HomotopyConfig::default()).unwrap();
        assert_eq!(path.steps(), 10);
        let first = path.samples[0].c.clone();
        for s in &path.samples {
            assert!(frob(&(&s.c - &first)) < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = HomotopyConfig::default();
        assert!(c.validate().is_ok());
        c.min_dt = 0.5;
        assert!(c.validate().is_err());
        c = HomotopyConfig { dt: 1.5, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
