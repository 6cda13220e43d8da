mod common;

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;
use proptest::prelude::*;
use subconvex::boundchain::{dyadic_bound_check, max_weighted_sum, MeanValueConstraint};
use subconvex::harness::{fit_power_law, peak_stats, PeakWindow};
use subconvex::kernel::{kernel_l, reduced_kernel_k, reflected_kernel_k, KernelParams, KernelSettings};
use subconvex::phase::{decompose_outer, find_critical_points, PhaseFunction};
use subconvex::quadrature::{integrate_periodic, reference_sine_moment, QuadSettings, SingularityHint};
use subconvex::testvectors::{
    choose_n, hermitian_form_h, pairing, reduced_test_function, PairingSettings, TestVectorSpec, Variant,
};

/// A `π`-periodic trigonometric polynomial.
fn trig(coef: &[(f64, f64)], x: f64) -> Complex64 {
    coef.iter()
        .enumerate()
        .map(|(k, &(re, im))| Complex64::new(re, im) * Complex64::from_polar(1.0, 2.0 * k as f64 * x))
        .sum()
}

fn away_from_multiples_of_pi(x: f64) -> bool {
    x.sin().abs() > 1e-2
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn quadrature_is_linear(
        f in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 1..6),
        g in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 1..6),
        alpha in -3.0..3.0f64,
        beta in -3.0..3.0f64,
    ) {
        let s = QuadSettings::with_tol(1e-12);
        let fi = integrate_periodic(|x: f64| trig(&f, x), &[], 0.0, &s).unwrap().value;
        let gi = integrate_periodic(|x: f64| trig(&g, x), &[], 0.0, &s).unwrap().value;
        let both = integrate_periodic(|x: f64| alpha * trig(&f, x) + beta * trig(&g, x), &[], 0.0, &s).unwrap().value;
        prop_assert!((both - (alpha * fi + beta * gi)).norm() < 1e-10);
    }

    #[test]
    fn quadrature_is_shift_invariant(
        f in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 1..6),
        shift in 0.0..PI,
    ) {
        let s = QuadSettings::with_tol(1e-12);
        let base = integrate_periodic(|x: f64| trig(&f, x), &[], 0.0, &s).unwrap().value;
        let moved = integrate_periodic(|x: f64| trig(&f, x + shift), &[], 0.0, &s).unwrap().value;
        prop_assert!((base - moved).norm() < 1e-10);
    }

    #[test]
    fn singular_quadrature_is_shift_invariant(a in -0.9..1.0f64, shift in 0.0..PI) {
        let s = QuadSettings::with_tol(1e-10);
        let r = integrate_periodic(
            |x: f64| Complex64::new((x - shift).sin().abs().powf(a), 0.0),
            &[SingularityHint::real(shift, a)],
            0.0,
            &s,
        )
        .unwrap();
        prop_assert!(r.converged);
        prop_assert!((r.value.re - reference_sine_moment(a).unwrap()).abs() < 1e-7);
        prop_assert!(r.value.im.abs() < 1e-12);
    }

    #[test]
    fn kernel_l_translation_and_periodicity(
        th in 0.0..PI, th1 in 0.0..PI, th2 in 0.0..PI,
        s in -5.0..5.0f64,
        k in -3i32..4,
        t in 1.0..500.0f64,
        tau in -20.0..20.0f64,
    ) {
        prop_assume!(away_from_multiples_of_pi(th - th1));
        prop_assume!(away_from_multiples_of_pi(th - th2));
        prop_assume!(away_from_multiples_of_pi(th1 - th2));
        let p = KernelParams::principal(t, tau);
        let base = kernel_l(th, th1, th2, &p).unwrap();
        let moved = kernel_l(th + s, th1 + s, th2 + s, &p).unwrap();
        let kp = k as f64 * PI;
        let periodic = [
            kernel_l(th + kp, th1, th2, &p).unwrap(),
            kernel_l(th, th1 + kp, th2, &p).unwrap(),
            kernel_l(th, th1, th2 + kp, &p).unwrap(),
        ];
        // Phases like t·ln|sin x| lose about t·|x|·ε to argument rounding.
        let scale = base.norm() * 1e-11 * t;
        prop_assert!((base - moved).norm() <= scale);
        for v in periodic {
            prop_assert!((base - v).norm() <= scale);
        }
        let modulus = ((th - th1).sin() * (th - th2).sin() * (th1 - th2).sin()).abs().powf(-0.5);
        prop_assert!((base.norm() / modulus - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phase_derivatives_are_consistent(
        t in 1.0..1000.0f64,
        half_n in 1u64..500,
        c in 0.05..(FRAC_PI_2 - 0.05),
    ) {
        let d = decompose_outer(&KernelParams::principal(t, 0.0), 2 * half_n).unwrap();
        let h = 1e-5;
        let fd1 = (d.phase(c + h) - d.phase(c - h)) / (2.0 * h);
        let fd2 = (d.phase_d1(c + h) - d.phase_d1(c - h)) / (2.0 * h);
        let fd3 = (d.phase_d2(c + h) - d.phase_d2(c - h)) / (2.0 * h);
        let tol = |exact: f64, scale: f64| 1e-6 * (exact.abs() + scale);
        prop_assert!((fd1 - d.phase_d1(c)).abs() <= tol(d.phase_d1(c), t + half_n as f64));
        prop_assert!((fd2 - d.phase_d2(c)).abs() <= tol(d.phase_d2(c), t));
        prop_assert!((fd3 - d.phase_d3(c)).abs() <= tol(d.phase_d3(c), t));
    }

    #[test]
    fn critical_points_are_complete(half_n in 5u64..200, ratio in 0.01..0.98f64) {
        let n = 2 * half_n;
        let t = ratio * 2.0 * n as f64;
        let d = decompose_outer(&KernelParams::principal(t, 0.0), n).unwrap();
        let cps = find_critical_points(&d, (1e-4, FRAC_PI_2 - 1e-4), 1e-12).unwrap();
        let c1 = 0.5 * ratio.asin();
        prop_assert_eq!(cps.len(), 2);
        prop_assert!((cps[0].location - c1).abs() < 1e-10);
        prop_assert!((cps[1].location - (FRAC_PI_2 - c1)).abs() < 1e-10);
    }

    #[test]
    fn greedy_profile_is_feasible_and_scales(seed in any::<u64>(), scale in 0.1..10.0f64) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (grid, h, a) = common::random_instance(&mut rng, 40);
        let c = MeanValueConstraint::new(a).unwrap();
        let (value, profile) = max_weighted_sum(&grid, &h, &c).unwrap();
        prop_assert!(profile.weights.iter().all(|w| *w >= 0.0));
        prop_assert!(profile.min_slack(&c) >= -1e-9 * c.cap(*grid.last().unwrap()));
        prop_assert!((profile.weighted_sum(&h) - value).abs() <= 1e-12 * value.max(1.0));
        let scaled = MeanValueConstraint::new(a * scale).unwrap();
        let (sv, _) = max_weighted_sum(&grid, &h, &scaled).unwrap();
        prop_assert!((sv - scale * value).abs() <= 1e-12 * (scale * value).max(1.0));
    }

    #[test]
    fn dyadic_majorant_dominates(
        upper_exp in 1u32..8,
        values in prop::collection::vec(0.0..10.0f64, 200),
        a in 0.05..5.0f64,
    ) {
        let upper = 2f64.powi(upper_exp as i32);
        let mut grid = vec![1.0];
        while *grid.last().unwrap() * 1.1 < upper {
            let next = grid.last().unwrap() * 1.1;
            grid.push(next);
        }
        grid.push(upper);
        let h: Vec<f64> = values.iter().cycle().take(grid.len()).cloned().collect();
        let c = MeanValueConstraint::new(a).unwrap();
        let (greedy, _) = max_weighted_sum(&grid, &h, &c).unwrap();
        let dyadic = dyadic_bound_check(&grid, &h, upper, &c).unwrap();
        prop_assert!(dyadic >= greedy * (1.0 - 1e-12));
    }

    #[test]
    fn power_law_fit_recovers_exact_data(
        exponent in -3.0..3.0f64,
        prefactor in 1e-3..1e3f64,
        x0 in 1.0..100.0f64,
        count in 3usize..20,
    ) {
        let pairs: Vec<(f64, f64)> = (0..count)
            .map(|i| {
                let x = x0 * 1.3f64.powi(i as i32);
                (x, prefactor * x.powf(exponent))
            })
            .collect();
        let fit = fit_power_law(&pairs).unwrap();
        prop_assert!((fit.exponent - exponent).abs() < 1e-10);
        prop_assert!((fit.prefactor / prefactor - 1.0).abs() < 1e-9);
        prop_assert!(fit.r_squared > 1.0 - 1e-12);
        prop_assert_eq!(fit.points_used, count);
    }

    #[test]
    fn peak_stats_is_scale_invariant(
        center in 90.0..110.0f64,
        width in 1.0..10.0f64,
        floor in 0.0..0.5f64,
        k in -20i32..20,
    ) {
        let t: Vec<f64> = (0..400).map(|i| 50.0 + 0.25 * i as f64).collect();
        let h: Vec<f64> = t.iter().map(|x| floor + (-((x - center) / width).powi(2)).exp()).collect();
        let s = 2f64.powi(k);
        let hs: Vec<f64> = h.iter().map(|v| v * s).collect();
        let w = PeakWindow { search: (50.0, 150.0), background: (50.0, 150.0), exclude: (80.0, 120.0) };
        let a = peak_stats(&t, &h, &w).unwrap();
        let b = peak_stats(&t, &hs, &w).unwrap();
        prop_assert_eq!(a.t_peak, b.t_peak);
        prop_assert_eq!(a.fwhm, b.fwhm);
        prop_assert_eq!(a.height * s, b.height);
        prop_assert_eq!(a.background * s, b.background);
    }

    #[test]
    fn choose_n_is_nearest_even_half(t_big in 1.0..10_000.0f64) {
        let n = choose_n(t_big).unwrap();
        prop_assert!(n >= 2 && n.is_multiple_of(2));
        prop_assert!(t_big < 2.0 || (t_big - 2.0 * n as f64).abs() <= 2.0);
        let spec = TestVectorSpec::new(t_big, Variant::Plain).unwrap();
        prop_assert_eq!(spec.n, n);
    }

    #[test]
    fn tilde_vector_vanishes_at_quarter_period(half_n in 1u64..1000) {
        let spec = TestVectorSpec { t_big: 4.0 * half_n as f64, n: 2 * half_n, variant: Variant::Tilde };
        prop_assert!(reduced_test_function(&spec).eval(FRAC_PI_4).norm() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn reduced_kernel_reflection(c in 0.05..(FRAC_PI_2 - 0.05), t in 5.0..40.0f64, tau in -5.0..5.0f64) {
        let p = KernelParams::principal(t, tau);
        let s = KernelSettings::with_tol(1e-11);
        let k = reduced_kernel_k(c, &p, &s).unwrap();
        let r = reflected_kernel_k(c, &p, &s).unwrap();
        prop_assert!(k.converged && r.converged);
        prop_assert!((k.value - r.value).norm() < 1e-9);
    }

    #[test]
    fn hermitian_form_is_squared_pairing(t_big in 20.0..120.0f64, t in 5.0..200.0f64, tilde in any::<bool>()) {
        let variant = if tilde { Variant::Tilde } else { Variant::Plain };
        let spec = TestVectorSpec::new(t_big, variant).unwrap();
        let p = KernelParams::principal(t, 0.0);
        let s = PairingSettings::series();
        let v = pairing(&spec, &p, &s).unwrap().value;
        let h = hermitian_form_h(&spec, &p, &s).unwrap();
        prop_assert!(h >= 0.0);
        prop_assert!((h - v.norm_sqr()).abs() <= 1e-14 * h.max(1e-300));
    }
}
