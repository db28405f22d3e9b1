use std::f64::consts::FRAC_PI_2;

use hormander_lab::calculus::paley_littlewood_ratio;
use hormander_lab::kernel_checks::{annulus_integral, AnnulusMeasure};
use hormander_lab::operators::{apply_multiplier, apply_semigroup, build_poisson_model};
use hormander_lab::rbounds::{estimate_rbound, rademacher_of_vectors, reevaluate, lp_norm, OperatorFamily, RademacherMode};
use hormander_lab::space::build_torus_grid;
use hormander_lab::{ComplexTime, DyadicPartition, Multiplier, SearchBudget, SpectralModel};
use num_complex::Complex64;
use proptest::prelude::*;

fn model(n: usize) -> SpectralModel {
    build_poisson_model(&build_torus_grid(1, n, n as f64).unwrap()).unwrap()
}

fn vector(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

fn max_gap(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn small_budget() -> SearchBudget {
    SearchBudget {
        gaussian_trials: 3,
        bump_trials: 2,
        boyd_trials: 1,
        boyd_iterations: 10,
        greedy_steps: 4,
        ..SearchBudget::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_dilation_covariance(n in -15i32..15, t in 1e-6f64..1e6) {
        let p = DyadicPartition::new(-20, 20).unwrap();
        prop_assert_eq!(p.eval(n, t).unwrap(), p.eval(0, t * 2f64.powi(-n)).unwrap());
    }

    #[test]
    fn annulus_measure_is_additive_and_translation_invariant(x in 0usize..64, r in 0.5f64..4.0, dr in 0.0f64..4.0, ds in 0.0f64..4.0) {
        let grid = build_torus_grid(1, 64, 64.0).unwrap();
        let (big_r, s) = (r + dr, r + dr + ds);
        let split = grid.annulus_measure(x, r, big_r).unwrap() + grid.annulus_measure(x, big_r, s).unwrap();
        prop_assert!((split - grid.annulus_measure(x, r, s).unwrap()).abs() < 1e-12);
        prop_assert_eq!(grid.annulus_measure(x, r, s).unwrap(), grid.annulus_measure(0, r, s).unwrap());
    }

    #[test]
    fn annulus_integral_is_even_in_theta(theta in 0.0f64..1.5, b in 0.8f64..2.5) {
        let m = AnnulusMeasure::Lebesgue { d: 1 };
        let plus = annulus_integral(&m, theta, 1.0, b, Some(16.0)).unwrap().value;
        let minus = annulus_integral(&m, -theta, 1.0, b, Some(16.0)).unwrap().value;
        prop_assert!((plus - minus).abs() <= 1e-12 * plus);
    }

    #[test]
    fn multiplier_calculus_is_multiplicative(c1 in 0.1f64..3.0, c2 in 0.1f64..3.0, g in 0.1f64..2.0, seed in prop::collection::vec(-1.0f64..1.0, 32)) {
        let model = model(32);
        let v = vector(&seed);
        let f = Multiplier::gaussian(c1, 0.5);
        let h = Multiplier::resolvent(g).product(&Multiplier::gaussian(c2, 1.0));
        let both = apply_multiplier(&model, &f.product(&h), &v).unwrap();
        let nested = apply_multiplier(&model, &f, &apply_multiplier(&model, &h, &v).unwrap()).unwrap();
        prop_assert!(max_gap(&both, &nested) < 1e-12);
    }

    #[test]
    fn exponential_calculus_matches_semigroup(re in 0.0f64..2.0, im in -3.0f64..3.0, seed in prop::collection::vec(-1.0f64..1.0, 32)) {
        prop_assume!(re > 0.0 || im != 0.0);
        let model = model(32);
        let v = vector(&seed);
        let z = Complex64::new(re, im);
        let by_calculus = apply_multiplier(&model, &Multiplier::exponential(z), &v).unwrap();
        let by_semigroup = apply_semigroup(&model, ComplexTime::new(z).unwrap(), &v).unwrap();
        prop_assert!(max_gap(&by_calculus, &by_semigroup) < 1e-12);
    }

    #[test]
    fn paley_littlewood_is_homogeneous(scale in 1e-3f64..1e3, p in 1.2f64..5.0, seed in prop::collection::vec(-1.0f64..1.0, 64)) {
        let model = model(64);
        let part = DyadicPartition::new(-20, 20).unwrap();
        let mean = seed.iter().sum::<f64>() / 64.0;
        let v: Vec<Complex64> = seed.iter().map(|x| Complex64::new(x - mean, 0.0)).collect();
        prop_assume!(v.iter().any(|x| x.norm() > 1e-3));
        let cv: Vec<Complex64> = v.iter().map(|x| x * scale).collect();
        let a = paley_littlewood_ratio(&model, &v, &part, p, (-6, 3)).unwrap();
        let b = paley_littlewood_ratio(&model, &cv, &part, p, (-6, 3)).unwrap();
        prop_assert!((a.0 - b.0).abs() <= 1e-10 * a.0);
        prop_assert!((a.1 - b.1).abs() <= 1e-10 * a.1);
    }

    #[test]
    fn rademacher_average_dominates_each_term_and_ignores_signs(p in 1.1f64..6.0, flip in 0usize..5, data in prop::collection::vec(-1.0f64..1.0, 5 * 16)) {
        let grid = build_torus_grid(1, 16, 16.0).unwrap();
        let ys: Vec<Vec<Complex64>> = data.chunks(16).map(vector).collect();
        let avg = rademacher_of_vectors(&ys, p, &grid, RademacherMode::Exact).unwrap().value;
        for y in &ys {
            prop_assert!(lp_norm(y, p, &grid).unwrap() <= avg * (1.0 + 1e-12));
        }
        let mut flipped = ys.clone();
        flipped[flip].iter_mut().for_each(|x| *x = -*x);
        let other = rademacher_of_vectors(&flipped, p, &grid, RademacherMode::Exact).unwrap().value;
        prop_assert!((avg - other).abs() <= 1e-12 * avg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn poisson_rbound_estimates_are_sound(theta in -(FRAC_PI_2 - 0.05)..(FRAC_PI_2 - 0.05), seed in 0u64..1000) {
        let model = model(32);
        let family = OperatorFamily::poisson(&model, theta, 0.75, (-1, 3)).unwrap();
        let budget = small_budget();
        let two = estimate_rbound(&family, 2.0, 3, &budget, seed).unwrap();
        prop_assert!(two.lower_estimate <= 1.0 + 1e-9);
        let four = estimate_rbound(&family, 4.0, 3, &budget, seed).unwrap();
        prop_assert!(four.lower_estimate >= 1.0 - 1e-12);
        let again = reevaluate(&family, &four, &budget, 0).unwrap();
        prop_assert!((again - four.lower_estimate).abs() <= 1e-10);
        let mirrored = OperatorFamily::poisson(&model, -theta, 0.75, (-1, 3)).unwrap();
        let mirror = estimate_rbound(&mirrored, 4.0, 3, &budget, seed).unwrap();
        prop_assert!((mirror.lower_estimate - four.lower_estimate).abs() <= 1e-9 * four.lower_estimate);
    }
}
