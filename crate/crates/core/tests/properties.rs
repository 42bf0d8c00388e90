use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use skellam::bessel::{delta_bound, log_bessel_ratio, DeltaKind};
use skellam::pld::{pld_compose, pld_delta, skellam_pld, PldConfig};
use skellam::quantize::{
    conditional_round, inverse_randomized_hadamard, l2_norm, randomized_hadamard, rounded_norm_bound,
    stochastic_round, QuantizerConfig,
};
use skellam::rdp::{default_orders, gaussian_rdp, rdp_to_dp, skellam_rdp_scalar, RdpCurve};
use skellam::secagg::{
    scale_residual, secure_sum, signed_decode, solve_scale_with, FieldVector, ScaleRule,
};
use skellam::skellam::{skellam_log_pmf, SkellamParams};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pmf_is_symmetric_and_at_most_one(k in -2000i64..2000, mu in 0.01f64..5e4) {
        let p = SkellamParams::new(0, mu).unwrap();
        let a = skellam_log_pmf(k, &p).unwrap();
        prop_assert_eq!(a, skellam_log_pmf(-k, &p).unwrap());
        prop_assert!(a <= 0.0);
    }

    #[test]
    fn shifted_pmf_is_a_translation(k in -500i64..500, shift in -50i64..50, mu in 0.1f64..1e3) {
        let base = SkellamParams::new(0, mu).unwrap();
        let moved = SkellamParams::new(shift, mu).unwrap();
        prop_assert_eq!(
            skellam_log_pmf(k + shift, &moved).unwrap(),
            skellam_log_pmf(k, &base).unwrap()
        );
    }

    #[test]
    fn ratio_stays_in_bracket(nu in 1i64..5000, x in 0.01f64..1e6) {
        let r = log_bessel_ratio(nu, x).unwrap();
        let lo = delta_bound(DeltaKind::Lower, nu as f64, x).unwrap().asinh();
        let hi = delta_bound(DeltaKind::Upper, nu as f64, x).unwrap().asinh();
        let tol = 1e-12 * r.abs().max(1e-300);
        prop_assert!(lo <= r + tol && r <= hi + tol, "{} <= {} <= {}", lo, r, hi);
    }

    #[test]
    fn skellam_bound_dominates_gaussian_and_grows(alpha in 2u32..200, shift in 1i64..20, mu in 0.5f64..1e6) {
        let here = skellam_rdp_scalar(alpha, shift, mu).unwrap();
        let next = skellam_rdp_scalar(alpha + 1, shift, mu).unwrap();
        prop_assert!(here >= gaussian_rdp(alpha as f64, shift as f64, mu).unwrap());
        prop_assert!(next >= here);
    }

    #[test]
    fn conversion_is_monotone_in_delta(scale in 1e-4f64..10.0, d1 in 1e-12f64..1e-2, d2 in 1e-12f64..1e-2) {
        let curve = RdpCurve::from_fn(&default_orders(), |a| Ok(scale * a as f64)).unwrap();
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(rdp_to_dp(&curve, hi).unwrap().epsilon <= rdp_to_dp(&curve, lo).unwrap().epsilon);
    }

    #[test]
    fn rotation_is_an_isometry(log_d in 1u32..11, seed: u64, fill in 0.1f64..100.0) {
        let d = 1usize << log_d;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..d).map(|_| fill * (rand::Rng::random::<f64>(&mut rng) - 0.5)).collect();
        let y = randomized_hadamard(&x, seed).unwrap();
        prop_assert!((l2_norm(&y) - l2_norm(&x)).abs() <= 1e-9 * l2_norm(&x).max(1e-300));
        let back = inverse_randomized_hadamard(&y, seed).unwrap();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() <= 1e-9 * fill.max(1.0));
        }
    }

    #[test]
    fn rounding_picks_a_neighbour(values in prop::collection::vec(-1e9f64..1e9, 1..64), seed: u64) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let out = stochastic_round(&values, &mut rng).unwrap();
        for (v, r) in values.iter().zip(&out) {
            prop_assert!(*r as f64 == v.floor() || *r as f64 == v.ceil());
        }
    }

    #[test]
    fn conditional_rounding_is_certified(log_d in 1u32..9, scaled_clip in 0.5f64..500.0, seed: u64) {
        let d = 1usize << log_d;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let g: Vec<f64> = (0..d).map(|_| rand::Rng::random::<f64>(&mut rng) - 0.5).collect();
        let r = scaled_clip / l2_norm(&g);
        let x: Vec<f64> = g.iter().map(|v| v * r).collect();
        let config = QuantizerConfig::new(scaled_clip, 1.0, d, seed).unwrap();
        let out = conditional_round(&x, &config, &mut rng).unwrap();
        let sq: f64 = out.values.iter().map(|&v| (v as f64).powi(2)).sum();
        prop_assert!(sq <= out.norm_bound);
        prop_assert!(out.norm_bound <= (scaled_clip + (d as f64).sqrt()).powi(2));
        prop_assert_eq!(out.norm_bound, rounded_norm_bound(scaled_clip, d, config.rounding_bias));
    }

    #[test]
    fn field_round_trip(v: i64, b in 8u32..=64) {
        let f = FieldVector::from_signed(&[v], b).unwrap();
        let back = signed_decode(f.values()[0], b).unwrap();
        let m = 1i128 << b;
        prop_assert_eq!((back as i128 - v as i128).rem_euclid(m), 0);
        prop_assert!((back as i128) >= -(m / 2) && (back as i128) < m / 2);
    }

    #[test]
    fn modular_sum_is_homomorphic_and_order_free(
        raw in prop::collection::vec(prop::collection::vec(any::<i64>(), 8), 1..12),
        b in 8u32..=64,
    ) {
        let fields: Vec<FieldVector> = raw.iter().map(|v| FieldVector::from_signed(v, b).unwrap()).collect();
        let sum = secure_sum(&fields, b).unwrap();
        for j in 0..8 {
            let wide: i128 = raw.iter().map(|v| v[j] as i128).sum();
            prop_assert_eq!(sum.values()[j] as i128, wide.rem_euclid(1i128 << b));
        }
        let mut reversed = fields.clone();
        reversed.reverse();
        prop_assert_eq!(secure_sum(&reversed, b).unwrap(), sum);
    }

    #[test]
    fn scale_solves_its_equation(
        c in 0.1f64..100.0, n in 1usize..10_000, log_d in 0u32..20, mu in 0.0f64..1e4, b in 8u32..=64,
    ) {
        for rule in [ScaleRule::Consistent, ScaleRule::AsPrinted] {
            if let Ok(s) = solve_scale_with(c, n, 1 << log_d, mu, 3.0, b, rule) {
                prop_assert!(s > 0.0);
                prop_assert!(scale_residual(c, n, 1 << log_d, mu, 3.0, b, s, rule).abs() < 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn pld_delta_is_monotone_and_composition_normalised(shift in 1u64..4, mu in 1.0f64..200.0, rounds in 1u64..6) {
        let config = PldConfig { grid_spacing: 1e-3, ..PldConfig::default() };
        let pld = pld_compose(&skellam_pld(shift, mu, &config).unwrap(), rounds, &config).unwrap();
        let total = pld.finite_mass() + pld.infinite_mass();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let mut prev = 1.0;
        for i in 0..60 {
            let d = pld_delta(&pld, i as f64 * 0.05);
            prop_assert!(d <= prev + 1e-15);
            prev = d;
        }
    }
}
