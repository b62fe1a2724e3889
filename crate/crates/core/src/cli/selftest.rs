//! Reduced-size self checks run by the `selftest` command.

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::factorization::{h_inverse, h_map};
use crate::linalg::frob;
use crate::moment::{apply_g2_statespace, moment_g_statespace, moment_quadrature, Denominator, RangeBasis, ShiftPolicy};
use crate::sampling::{random_direction, random_factor, random_prior};
use crate::statespace::{FactorParameter, FilterBank};

#[derive(Clone, Debug, Default)]
pub struct SelfTestOptions {
    /// Added to every entry of `h(Λ)` in the round-trip suite.
    pub perturb_h: f64,
}

#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst error relative to the tolerance, or the failure message.
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SelfTestReport {
    pub suites: Vec<SuiteResult>,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.suites {
            let status = if s.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{status} {:<18} {} ({:.2} s)", s.name, s.detail, s.seconds);
        }
        let _ = writeln!(out, "{}", if self.passed() { "all suites passed" } else { "self test FAILED" });
        out
    }
}

pub fn run(opts: &SelfTestOptions) -> SelfTestReport {
    let suites = vec![
        suite("oracle-equivalence", oracle_equivalence),
        suite("round-trip", || round_trip(opts.perturb_h)),
        suite("finite-difference", finite_difference),
    ];
    SelfTestReport { suites }
}

fn suite(name: &'static str, body: impl FnOnce() -> Result<(f64, f64)>) -> SuiteResult {
    let start = Instant::now();
    let (passed, detail) = match body() {
        Ok((worst, tol)) => (worst <= tol, format!("worst error {worst:.3e} (tolerance {tol:.0e})")),
        Err(e) => (false, format!("error: {e}")),
    };
    SuiteResult {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn covext() -> Result<FilterBank> {
    FilterBank::covariance_extension(2, 1)
}

fn oracle_equivalence() -> Result<(f64, f64)> {
    let f = covext()?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..4 {
        let prior = random_prior(&mut rng);
        let c = random_factor(&f, &mut rng, 0.5);
        let ss = moment_g_statespace(&f, &prior, &c)?;
        let q = moment_quadrature(&f, |z| prior.psi(z), Denominator::Factor(c.c()), 2.0 * std::f64::consts::PI / 4096.0)?;
        worst = worst.max(frob(&(ss - &q)) / frob(&q));
    }
    Ok((worst, 1e-7))
}

fn round_trip(perturb: f64) -> Result<(f64, f64)> {
    let f = covext()?;
    let range = RangeBasis::new(&f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for _ in 0..4 {
        let c = random_factor(&f, &mut rng, 0.5);
        let lambda = h_inverse(&range, c.c());
        let back = h_map(&f, &range, &lambda)?;
        let back = back.c().add_scalar(num_complex::Complex64::new(perturb, 0.0));
        worst = worst.max(frob(&(back - c.c())));
    }
    Ok((worst, 1e-8))
}

fn finite_difference() -> Result<(f64, f64)> {
    let f = covext()?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    let eps = 1e-6;
    for _ in 0..3 {
        let prior = random_prior(&mut rng);
        let c = random_factor(&f, &mut rng, 0.5);
        let v = random_direction(&f, &mut rng);
        let y = apply_g2_statespace(&f, &prior, &c, &v, ShiftPolicy::default())?;
        let plus = FactorParameter::new(&f, c.c() + v.scale(eps))?;
        let minus = FactorParameter::new(&f, c.c() - v.scale(eps))?;
        let fd = (moment_g_statespace(&f, &prior, &plus)? - moment_g_statespace(&f, &prior, &minus)?).unscale(2.0 * eps);
        worst = worst.max(frob(&(y - &fd)) / frob(&fd));
    }
    Ok((worst, 1e-5))
}
