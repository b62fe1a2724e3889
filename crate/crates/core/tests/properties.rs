use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spectral_homotopy::continuation::maxent_initialization;
use spectral_homotopy::factorization::{h_inverse, h_map};
use spectral_homotopy::linalg::{frob, hermitian_defect, min_hermitian_eigenvalue, Field};
use spectral_homotopy::moment::{
    apply_g2_statespace, moment_g_statespace, ConvexPrior, FactorSpace, RangeBasis, ShiftPolicy,
};
use spectral_homotopy::sampling::{random_direction, random_factor, random_matrix, random_prior, random_sigma};
use spectral_homotopy::statespace::{FactorParameter, FilterBank, PriorSpectrum};

fn bank(complex: bool) -> FilterBank {
    let f = FilterBank::covariance_extension(2, 1).unwrap();
    if complex {
        f.with_field(Field::Complex).unwrap()
    } else {
        f
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn moments_are_hermitian_positive_and_in_range(seed in any::<u64>(), complex in any::<bool>()) {
        let f = bank(complex);
        let range = RangeBasis::new(&f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = random_prior(&mut rng);
        let c = random_factor(&f, &mut rng, 0.5);
        let g = moment_g_statespace(&f, &prior, &c).unwrap();
        prop_assert!(hermitian_defect(&g) <= 1e-12 * frob(&g));
        prop_assert!(min_hermitian_eigenvalue(&g) > 0.0);
        prop_assert!(range.relative_residual(&g) <= 1e-10);
    }

    #[test]
    fn g2_along_c_is_minus_twice_g(seed in any::<u64>()) {
        let f = bank(false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = random_prior(&mut rng);
        let c = random_factor(&f, &mut rng, 0.5);
        let g = moment_g_statespace(&f, &prior, &c).unwrap();
        let y = apply_g2_statespace(&f, &prior, &c, c.c(), ShiftPolicy::default()).unwrap();
        prop_assert!(frob(&(y + g.scale(2.0))) <= 1e-9 * frob(&g));
    }

    #[test]
    fn g2_is_linear(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let f = bank(false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = random_prior(&mut rng);
        let c = random_factor(&f, &mut rng, 0.5);
        let v = random_direction(&f, &mut rng);
        let w = random_direction(&f, &mut rng);
        let g2 = |x: &spectral_homotopy::Mat| apply_g2_statespace(&f, &prior, &c, x, ShiftPolicy::default()).unwrap();
        let lhs = g2(&(v.scale(a) + w.scale(b)));
        let rhs = g2(&v).scale(a) + g2(&w).scale(b);
        prop_assert!(frob(&(&lhs - &rhs)) <= 1e-8 * (1.0 + frob(&rhs)));
    }

    #[test]
    fn h_inverts_h_inverse(seed in any::<u64>(), complex in any::<bool>()) {
        let f = bank(complex);
        let range = RangeBasis::new(&f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_factor(&f, &mut rng, 0.5);
        let back = h_map(&f, &range, &h_inverse(&range, c.c())).unwrap();
        prop_assert!(frob(&(back.c() - c.c())) <= 1e-8);
    }

    #[test]
    fn maxent_matches_sigma(seed in any::<u64>()) {
        let f = bank(false);
        let range = RangeBasis::new(&f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = random_sigma(&f, &mut rng).unwrap();
        let c = maxent_initialization(&f, &range, &sigma).unwrap();
        let g = moment_g_statespace(&f, &PriorSpectrum::unit(), &c).unwrap();
        prop_assert!(frob(&(g - &sigma)) <= 1e-9 * frob(&sigma));
    }

    #[test]
    fn homotopy_prior_is_affine_in_t(seed in any::<u64>(), t in 0.0f64..1.0) {
        let f = bank(false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = random_prior(&mut rng);
        let c = random_factor(&f, &mut rng, 0.5);
        let g0 = moment_g_statespace(&f, &PriorSpectrum::unit(), &c).unwrap();
        let g1 = moment_g_statespace(&f, &prior, &c).unwrap();
        let gt = moment_g_statespace(&f, &ConvexPrior::new(&prior, t), &c).unwrap();
        let expect = g0.scale(1.0 - t) + g1.scale(t);
        prop_assert!(frob(&(gt - &expect)) <= 1e-10 * frob(&expect));
    }

    #[test]
    fn g_scales_inversely_with_c_squared(seed in any::<u64>(), s in 0.25f64..4.0) {
        let f = bank(false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = random_prior(&mut rng);
        let c = random_factor(&f, &mut rng, 0.5);
        let scaled = FactorParameter::new(&f, c.c().scale(s)).unwrap();
        let g = moment_g_statespace(&f, &prior, &c).unwrap();
        let gs = moment_g_statespace(&f, &prior, &scaled).unwrap();
        prop_assert!(frob(&(gs.scale(s * s) - &g)) <= 1e-10 * frob(&g));
    }

    #[test]
    fn factor_projection_is_idempotent(seed in any::<u64>(), complex in any::<bool>()) {
        let f = bank(complex);
        let space = FactorSpace::new(&f);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(f.m(), f.n(), f.field(), &mut rng);
        let p = space.project(&x);
        prop_assert!(frob(&(space.project(&p) - &p)) <= 1e-12);
        prop_assert!(space.relative_residual(&p) <= 1e-12);
    }
}
