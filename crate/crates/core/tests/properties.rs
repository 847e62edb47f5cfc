use proptest::prelude::*;
use tpshift::density::*;
use tpshift::sigret::*;
use tpshift::sispace::segment_inequality;
use tpshift::*;

fn point_set(max_len: usize) -> impl Strategy<Value = PointSet> {
    prop::collection::vec(-30.0f64..30.0, 0..max_len)
        .prop_map(|v| {
            let mut v: Vec<f64> = v.into_iter().map(|x| (x * 1e6).round() / 1e6).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            PointSet::new(v, (-30.0, 30.0)).unwrap()
        })
}

fn coeffs() -> impl Strategy<Value = CoeffSeq> {
    (-5i64..5, prop::collection::vec(-2.0f64..2.0, 1..8)).prop_map(|(o, c)| CoeffSeq::new(o, c).unwrap())
}

fn generator() -> impl Strategy<Value = GeneratorParams> {
    (0.5f64..2.0, 0.5f64..3.0, prop::collection::vec(prop_oneof![-0.6f64..-0.05, 0.05f64..0.6], 0..4))
        .prop_map(|(c0, g, d)| GeneratorParams::new(c0, g, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fourier_transform_is_hermitian_and_dominated(p in generator(), xi in -4.0f64..4.0) {
        let v = p.ft_eval(xi);
        prop_assert!((p.ft_eval(-xi) - v.conj()).norm() <= 1e-15 * (1.0 + v.norm()));
        prop_assert!(v.norm() <= p.c0() * (-p.gamma() * xi * xi).exp() * (1.0 + 1e-14));
    }

    #[test]
    fn params_json_round_trip(p in generator()) {
        let text = serde_json::to_string(&p).unwrap();
        let back: GeneratorParams = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn coeff_json_and_algebra(a in coeffs(), b in coeffs()) {
        let back: CoeffSeq = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        prop_assert_eq!(&back, &a);
        let s = a.add(&b);
        for k in -6..14 {
            prop_assert!((s.get(k) - a.get(k) - b.get(k)).abs() < 1e-15);
        }
        prop_assert!(a.add(&a.negated()).is_zero());
    }

    #[test]
    fn point_set_json_round_trip(s in point_set(30)) {
        let back: PointSet = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn gaussian_linearity(a in coeffs(), b in coeffs(), x in -8.0f64..8.0) {
        let p = GeneratorParams::gaussian(1.0, 1.0).unwrap();
        let fa = SisFunction::new(p.clone(), a.clone()).unwrap();
        let fb = fa.with_coeffs(b.clone());
        let fs = fa.with_coeffs(a.add(&b));
        prop_assert!((fs.eval(x) - fa.eval(x) - fb.eval(x)).abs() < 1e-12);
        prop_assert!((fa.with_coeffs(a.negated()).eval(x) + fa.eval(x)).abs() < 1e-15);
    }

    #[test]
    fn circ_density_is_monotone_and_subadditive(a in point_set(40), b in point_set(40), r in 1.0f64..40.0) {
        let u = a.union(&b);
        let pa = circ_density_direct(&a, &[r]).unwrap().values[0];
        let pu = circ_density_direct(&u, &[r]).unwrap().values[0];
        prop_assert!(pa >= 0.0);
        prop_assert!(pa <= pu + 1e-15);
        let rep = circ_subadditivity(&a, &b, &[r]).unwrap();
        prop_assert!(rep.holds);
        if rep.disjoint {
            prop_assert!(rep.max_defect <= 1e-12);
        }
    }

    #[test]
    fn origin_shifts_direct_profile_by_four_over_pi_r(s in point_set(30), r in 0.5f64..40.0) {
        let with = s.union(&PointSet::new(vec![0.0], (-30.0, 30.0)).unwrap());
        let without = with.without_origin();
        let d = circ_density_direct(&with, &[r]).unwrap().values[0]
            - circ_density_direct(&without, &[r]).unwrap().values[0];
        prop_assert!((d - 4.0 / (std::f64::consts::PI * r)).abs() < 1e-12);
    }

    #[test]
    fn lattice_form_ignores_origin(s in point_set(20), alpha in 0.3f64..2.0, r in 0.5f64..20.0) {
        let a = circ_density_lattice(&s, alpha, &[r]).unwrap().values[0];
        let b = circ_density_lattice(&s.without_origin(), alpha, &[r]).unwrap().values[0];
        prop_assert_eq!(a, b);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn segment_inequality_with_matched_sets(s in point_set(30), t in 0.5f64..30.0) {
        // A set against itself always satisfies the inequality.
        prop_assert!(segment_inequality(&s, &s, t).unwrap().holds);
    }

    #[test]
    fn sign_pattern_change_points(signs in prop::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], 1..40)) {
        let p = SignPattern::from_signs(signs.clone());
        for i in 0..signs.len() - 1 {
            prop_assert_eq!(signs[i] != signs[i + 1], p.change_points.contains(&i));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exhaustive_search_dominates(c in prop::collection::vec(-1.0f64..1.0, 4), seed in 0u64..1000) {
        let p = GeneratorParams::gaussian(1.0, 1.0).unwrap();
        let f = SisFunction::new(p.clone(), CoeffSeq::new(0, c).unwrap()).unwrap();
        let mut r = rng::stream(seed, &[]);
        let lambda = jittered_lattice(&mut r, 2.5, (-0.75, 3.75), false).unwrap();
        let s = sample_magnitudes(&f, &lambda);
        prop_assume!(s.max_magnitude() > 1e-3);
        let b = brute_force_signs(&p, &s, (0, 3), 3).unwrap();
        if let Ok(a) = solve_signs(&p, &s, (0, 3), 3) {
            prop_assert!(b.residual <= a.residual + 1e-12);
            prop_assert_eq!(a.signs, b.signs);
        }
    }
}
