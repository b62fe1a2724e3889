//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spectral_homotopy::continuation::{maxent_initialization, run_continuation, HomotopyConfig};
use spectral_homotopy::factorization::{h_inverse, h_map, h_map_with, left_outer_factor_from_additive, outer_factor_defect};
use spectral_homotopy::linalg::{circle_grid, condition_number, frob, min_hermitian_eigenvalue, solve, Field};
use spectral_homotopy::matrixeq::{solve_dare_appendix, DareOptions};
use spectral_homotopy::moment::{
    apply_g2_statespace, assemble_jacobian_matrix, moment_g_statespace, moment_quadrature, CoordinateChart,
    Denominator, JacobianMethod, MomentMap, RangeBasis, ShiftPolicy,
};
use spectral_homotopy::sampling::{random_direction, random_factor, random_matrix, random_prior, random_sigma};
use spectral_homotopy::statespace::{
    check_lplus, factor_inner_realization, real_matrix, FactorParameter, FilterBank, PriorSpectrum,
};
use spectral_homotopy::{Mat, Result};

type Criterion = (&'static str, fn() -> Result<Outcome>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn covext() -> FilterBank {
    FilterBank::covariance_extension(2, 1).expect("covext preset")
}

fn c_ref() -> Mat {
    real_matrix(2, 4, &[0.5, 0.65, 1.0, 0.0, -2.2615, -1.0, 2.0, 1.0])
}

fn example_prior() -> PriorSpectrum {
    PriorSpectrum::from_real_polynomial(&[1.0, -1.0, 0.89]).expect("prior")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn reference_condition_numbers() -> Result<Outcome> {
    let start = Instant::now();
    let f = covext();
    let prior = example_prior();
    let chart = CoordinateChart::new(&f, None)?;
    let method = JacobianMethod::Quadrature { dtheta: 1e-4 };
    let c = c_ref();
    let lambda = h_inverse(&chart.range, &c);
    let jg = assemble_jacobian_matrix(&f, &prior, &chart, MomentMap::G, &c, method)?;
    let jf = assemble_jacobian_matrix(&f, &prior, &chart, MomentMap::F, &lambda, method)?;
    let (cg, cf) = (condition_number(&jg), condition_number(&jf));
    let secs = start.elapsed().as_secs_f64();
    let (eg, ef) = (rel(cg, 2.4674e5), rel(cf, 3.8187e8));
    outcome(
        eg <= 0.01 && ef <= 0.01 && cf / cg >= 1e3 && secs <= 60.0,
        format!(
            "cond_g {cg:.5e} (rel err {eg:.2e}), cond_f {cf:.5e} (rel err {ef:.2e}), ratio {:.1}, {secs:.1} s",
            cf / cg
        ),
    )
}

fn continuation_round_trip() -> Result<Outcome> {
    let start = Instant::now();
    let f = covext();
    let prior = example_prior();
    let c0 = FactorParameter::new(&f, c_ref())?;
    let sigma = moment_g_statespace(&f, &prior, &c0)?;
    let path = run_continuation(&f, &sigma, &prior, &HomotopyConfig::default())?;
    let last = path.last().expect("non-empty path");
    let err = frob(&(&last.c - c_ref()));
    let res = frob(&(moment_g_statespace(&f, &prior, &FactorParameter::new(&f, last.c.clone())?)? - &sigma));
    let secs = start.elapsed().as_secs_f64();
    outcome(
        err <= 1e-6 && res <= 1e-10 && path.steps() == 10 && secs <= 30.0,
        format!("|C - C_ref| {err:.2e}, residual {res:.2e}, {} steps, {secs:.1} s", path.steps()),
    )
}

fn oracle_equivalence() -> Result<Outcome> {
    let f = covext();
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let prior = random_prior(&mut rng);
        let c = random_factor(&f, &mut rng, 0.5);
        let ss = moment_g_statespace(&f, &prior, &c)?;
        let q = moment_quadrature(&f, |z| prior.psi(z), Denominator::Factor(c.c()), 2.0 * std::f64::consts::PI / 4096.0)?;
        worst = worst.max(frob(&(ss - &q)) / frob(&q));
    }
    outcome(worst <= 1e-7, format!("worst relative gap {worst:.2e} over 20 samples"))
}

fn jacobian_correctness() -> Result<Outcome> {
    let f = covext();
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let eps = 1e-6;
    let mut worst_fd = 0.0f64;
    for _ in 0..10 {
        let prior = random_prior(&mut rng);
        let c = random_factor(&f, &mut rng, 0.5);
        let v = random_direction(&f, &mut rng);
        let y = apply_g2_statespace(&f, &prior, &c, &v, ShiftPolicy::default())?;
        let plus = FactorParameter::new(&f, c.c() + v.scale(eps))?;
        let minus = FactorParameter::new(&f, c.c() - v.scale(eps))?;
        let fd = (moment_g_statespace(&f, &prior, &plus)? - moment_g_statespace(&f, &prior, &minus)?).unscale(2.0 * eps);
        worst_fd = worst_fd.max(frob(&(y - &fd)) / frob(&fd));
    }

    let prior = example_prior();
    let chart = CoordinateChart::new(&f, None)?;
    let mut worst_j = 0.0f64;
    let mut points = vec![c_ref()];
    points.extend((0..2).map(|_| random_factor(&f, &mut rng, 0.5).into_inner()));
    for c in &points {
        let ss = assemble_jacobian_matrix(&f, &prior, &chart, MomentMap::G, c, JacobianMethod::StateSpace)?;
        let q = assemble_jacobian_matrix(&f, &prior, &chart, MomentMap::G, c, JacobianMethod::Quadrature { dtheta: 1e-4 })?;
        let scale = q.amax();
        worst_j = worst_j.max((ss - &q).amax() / scale);
    }
    outcome(
        worst_fd <= 1e-5 && worst_j <= 1e-6,
        format!("g2 vs finite differences {worst_fd:.2e}, state-space vs quadrature Jacobian {worst_j:.2e}"),
    )
}

fn factorization_residuals() -> Result<Outcome> {
    let f = covext();
    let range = RangeBasis::new(&f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    let mut worst_dare = 0.0f64;
    let mut worst_outer = 0.0f64;
    let mut worst_id = 0.0f64;
    let mut outer_checked = 0;
    for _ in 0..10 {
        let c = random_factor(&f, &mut rng, 0.5);
        let lambda = h_inverse(&range, c.c());
        let hm = h_map_with(&f, &range, &lambda, &DareOptions::default())?;
        worst_dare = worst_dare.max(hm.dare.residual_norm / (1.0 + frob(&hm.dare.p)));

        for (_, z) in circle_grid(512) {
            let g = f.eval(z)?;
            let lhs = g.adjoint() * &lambda * &g;
            let cg = c.c() * &g;
            let rhs = cg.adjoint() * &cg;
            worst_id = worst_id.max(frob(&(&lhs - &rhs)) / frob(&rhs));
        }

        let inner = factor_inner_realization(&f, &c)?;
        let cb = c.c() * f.b();
        let v = c.c() + random_direction(&f, &mut rng).scale(0.3);
        let h = &v * c.pi();
        let j = solve(&cb.transpose(), &(&v * f.b()).transpose())?.transpose();
        let Ok(sol) = solve_dare_appendix(c.pi(), &inner.b, &h, &j) else {
            continue;
        };
        worst_dare = worst_dare.max(sol.residual_norm / (1.0 + frob(&sol.p)));
        let w = left_outer_factor_from_additive(c.pi(), &inner.b, &h, &j, &DareOptions::default())?;
        worst_outer = worst_outer.max(outer_factor_defect(c.pi(), &inner.b, &h, &j, &w.system, 512)?);
        outer_checked += 1;
    }
    outcome(
        worst_dare <= 1e-10 && worst_outer <= 1e-9 && worst_id <= 1e-9 && outer_checked >= 5,
        format!(
            "DARE {worst_dare:.2e}, outer factor {worst_outer:.2e} ({outer_checked} factors), G*LG = |CG|^2 {worst_id:.2e}"
        ),
    )
}

fn diffeomorphism_round_trips() -> Result<Outcome> {
    let f = covext();
    let range = RangeBasis::new(&f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(601);
    let mut worst_c = 0.0f64;
    for _ in 0..20 {
        let c = random_factor(&f, &mut rng, 0.5);
        let back = h_map(&f, &range, &h_inverse(&range, c.c()))?;
        worst_c = worst_c.max(frob(&(back.c() - c.c())));
    }
    let mut worst_l = 0.0f64;
    let mut sampled = 0;
    while sampled < 20 {
        let base = h_inverse(&range, random_factor(&f, &mut rng, 0.5).c());
        let bump = range.project(&random_matrix(4, 4, Field::Real, &mut rng)).matrix;
        let lambda = base + bump.scale(0.1);
        if !check_lplus(&f, &lambda, 512).in_set {
            continue;
        }
        let c = h_map(&f, &range, &lambda)?;
        worst_l = worst_l.max(frob(&(h_inverse(&range, c.c()) - &lambda)));
        sampled += 1;
    }
    outcome(
        worst_c <= 1e-8 && worst_l <= 1e-8,
        format!("h(h^-1(C)) {worst_c:.2e}, h^-1(h(L)) {worst_l:.2e}"),
    )
}

fn maxent_property() -> Result<Outcome> {
    let f = covext();
    let range = RangeBasis::new(&f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(701);
    let mut worst = 0.0f64;
    let mut sampled = 0;
    while sampled < 10 {
        let bump = range.project(&random_matrix(4, 4, Field::Real, &mut rng)).matrix;
        let sigma = random_sigma(&f, &mut rng)? + bump.scale(0.2);
        if min_hermitian_eigenvalue(&sigma) <= 1e-3 {
            continue;
        }
        let c = maxent_initialization(&f, &range, &sigma)?;
        let g = moment_g_statespace(&f, &PriorSpectrum::unit(), &c)?;
        worst = worst.max(frob(&(g - &sigma)) / frob(&sigma));
        sampled += 1;
    }
    outcome(worst <= 1e-9, format!("worst |g(1, C) - S| / |S| {worst:.2e} over 10 samples"))
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = random_matrix(n, n, Field::Real, rng).map(|x| x.re);
    m.qr().q()
}

fn well_posedness() -> Result<Outcome> {
    let f = covext();
    let prior = example_prior();
    let c0 = FactorParameter::new(&f, c_ref())?;
    let sigma = moment_g_statespace(&f, &prior, &c0)?;

    let flat = run_continuation(&f, &sigma, &PriorSpectrum::unit(), &HomotopyConfig::default())?;
    let max_dy = flat
        .samples
        .windows(2)
        .map(|w| w[0].coords.iter().zip(&w[1].coords).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);

    let mut ends = Vec::new();
    for dt in [1.0, 0.5, 0.2, 0.1, 0.05] {
        let cfg = HomotopyConfig { dt, ..Default::default() };
        let path = run_continuation(&f, &sigma, &prior, &cfg)?;
        ends.push(path.last().expect("non-empty path").c.clone());
    }
    let spread = ends.iter().map(|e| frob(&(e - &ends[3]))).fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(801);
    let chart = CoordinateChart::new(&f, None)?;
    let rotated = chart.rotated(&random_orthogonal(chart.dim(), &mut rng), &random_orthogonal(chart.dim(), &mut rng))?;
    let lambda = h_inverse(&chart.range, &c_ref());
    let mut worst_chart = 0.0f64;
    for (map, point) in [(MomentMap::G, c_ref()), (MomentMap::F, lambda)] {
        let a = assemble_jacobian_matrix(&f, &prior, &chart, map, &point, JacobianMethod::StateSpace)?;
        let b = assemble_jacobian_matrix(&f, &prior, &rotated, map, &point, JacobianMethod::StateSpace)?;
        worst_chart = worst_chart.max(rel(condition_number(&b), condition_number(&a)));
    }
    outcome(
        max_dy <= 1e-10 && spread <= 1e-6 && worst_chart <= 1e-6,
        format!("constant-prior step {max_dy:.2e}, dt endpoint spread {spread:.2e}, chart change {worst_chart:.2e}"),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("condition numbers at the reference factor", reference_condition_numbers),
        ("continuation round trip", continuation_round_trip),
        ("oracle equivalence", oracle_equivalence),
        ("jacobian correctness", jacobian_correctness),
        ("factorization residuals", factorization_residuals),
        ("diffeomorphism round trips", diffeomorphism_round_trips),
        ("max-entropy property", maxent_property),
        ("well-posedness proxies", well_posedness),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let (passed, detail) = match run() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failed += 1;
        }
        println!("{} criterion {} {name}: {detail}", if passed { "PASS" } else { "FAIL" }, k + 1);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
