use eqtri_core::config_surface::{random_pair, sigma_hat_auto, sigma_hat_bound, sigma_hat_quad, FreqPair, QuadratureSpec};
use eqtri_core::stationary_phase::{chart, exact_chart, LocalCoords};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pair(d: usize, seed: u64, max: f64) -> FreqPair {
    random_pair(d, max, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn sigma_hat_is_real_and_bounded(d in 2usize..=4, seed in any::<u64>()) {
        let p = pair(d, seed, 6.0);
        let v = sigma_hat_quad(&p, &QuadratureSpec::for_frequency(p.magnitude(), 0, 0)).unwrap();
        prop_assert!(v.im.abs() < 1e-9);
        prop_assert!(v.re.abs() <= 1.0 + 1e-9);
    }

    #[test]
    fn sigma_hat_partner_and_sign_symmetry(d in 2usize..=4, seed in any::<u64>()) {
        let p = pair(d, seed, 6.0);
        let a = sigma_hat_auto(&p).unwrap();
        prop_assert!((a - sigma_hat_auto(&p.triangle_partner()).unwrap()).abs() < 1e-8);
        prop_assert!((a - sigma_hat_auto(&p.scaled(-1.0)).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn sigma_hat_respects_bound_up_to_constant(d in 3usize..=4, seed in any::<u64>()) {
        let p = pair(d, seed, 12.0);
        if let Ok(b) = sigma_hat_bound(&p) {
            prop_assert!(sigma_hat_auto(&p).unwrap().abs() <= 50.0 * b);
        }
    }

    #[test]
    fn exact_chart_lies_on_surface(d in 2usize..=4, raw in prop::collection::vec(-0.05f64..0.05, 5)) {
        let k = d - 2;
        let c = LocalCoords { u1: raw[0], u_prime: raw[1..1 + k].to_vec(), v_prime: raw[3..3 + k].to_vec() };
        let e = exact_chart(&c).unwrap();
        prop_assert!(e.residuals.iter().all(|r| r.abs() < 1e-13));
        let q = chart(&c).unwrap();
        prop_assert!(q.residuals.iter().all(|r| r.abs() <= 10.0 * c.magnitude().powi(3) + 1e-15));
    }
}
