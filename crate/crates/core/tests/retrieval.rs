use rand::Rng;
use tpshift::sigret::*;
use tpshift::*;

const MENU: [&[f64]; 3] = [&[], &[0.3], &[0.3, -0.2]];

fn params(deltas: &[f64]) -> GeneratorParams {
    GeneratorParams::new(1.0, 1.0, deltas.to_vec()).unwrap()
}

fn config(deltas: &[f64], densities: Vec<f64>, trials: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        generator: params(deltas),
        densities,
        trials,
        seed,
        support: (0, 15),
        window: (-1.0, 16.0),
        max_changes: None,
        noise: 0.0,
        doubled: false,
    }
}

fn instance(seed: u64, deltas: &[f64], support: (i64, i64), density: f64, window: (f64, f64)) -> (SisFunction, PointSet) {
    let mut r = rng::stream(seed, &[31]);
    let c = (support.0..=support.1).map(|_| r.random_range(-1.0..1.0)).collect();
    let f = SisFunction::new(params(deltas), CoeffSeq::new(support.0, c).unwrap()).unwrap();
    let lambda = jittered_lattice(&mut r, density, window, false).unwrap();
    (f, lambda)
}

#[test]
fn samples_match_direct_evaluation() {
    let (f, lambda) = instance(1, &[0.3], (0, 6), 3.0, (-1.0, 7.0));
    let s = sample_magnitudes(&f, &lambda);
    for (x, m) in lambda.points().iter().zip(s.magnitudes()) {
        assert!((f.eval(*x).abs() - m).abs() < 1e-8);
    }
    let zero = f.with_coeffs(CoeffSeq::new(0, vec![0.0; 7]).unwrap());
    assert!(sample_magnitudes(&zero, &lambda).magnitudes().iter().all(|m| *m == 0.0));
}

#[test]
fn fit_round_trip_recovers_coefficients() {
    for deltas in MENU {
        let (f, lambda) = instance(2, deltas, (0, 15), 2.5, (-1.0, 16.0));
        let vals: Vec<f64> = lambda.points().iter().map(|&x| f.eval(x)).collect();
        let (c, res) = fit_coeffs(f.params(), &lambda, &vals, (0, 15)).unwrap();
        assert!(res < 1e-7);
        for k in 0..=15 {
            assert!((c.get(k) - f.coeffs().get(k)).abs() < 1e-6);
        }
    }
}

#[test]
fn undersampled_design_is_flagged() {
    let lambda = PointSet::lattice(2.0, 0.0, 40.0).unwrap();
    let vals = vec![0.5; lambda.len()];
    match fit_coeffs(&params(&[]), &lambda, &vals, (0, 39)) {
        Err(Error::RankDeficient { .. } | Error::Underdetermined { .. }) => {}
        Ok((_, res)) => assert!(res > 1e-3),
        Err(e) => panic!("unexpected {e}"),
    }
}

#[test]
fn global_sign_and_split_consistency() {
    for seed in 0..10u64 {
        let deltas = MENU[(seed % 3) as usize];
        let (f, lambda) = instance(seed, deltas, (0, 15), 2.5, (-1.0, 16.0));
        let neg = f.with_coeffs(f.coeffs().negated());
        let a = solve_signs(f.params(), &sample_magnitudes(&f, &lambda), (0, 15), 19).unwrap();
        let b = solve_signs(f.params(), &sample_magnitudes(&neg, &lambda), (0, 15), 19).unwrap();
        assert_eq!(a, b);

        let fhat = f.with_coeffs(a.coeffs.clone());
        let scale = f.sup_on_grid(-1.0, 16.0, 0.01);
        let (mut same, mut flip) = (Vec::new(), Vec::new());
        for &x in lambda.points() {
            let (v, w) = (f.eval(x), fhat.eval(x));
            if (v - w).abs() <= (v + w).abs() {
                same.push(w - v);
            } else {
                flip.push(w + v);
            }
        }
        let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64).sqrt();
        assert!(rms(&same) <= 1e-6 * scale, "seed {seed}");
        assert!(rms(&flip) <= 1e-6 * scale, "seed {seed}");
    }
}

#[test]
fn solver_matches_exhaustive_search_on_small_instances() {
    for seed in 0..40u64 {
        let deltas = MENU[(seed % 3) as usize];
        let (f, lambda) = instance(100 + seed, deltas, (0, 3), 2.5, (-0.75, 3.75));
        let s = sample_magnitudes(&f, &lambda);
        let a = solve_signs(f.params(), &s, (0, 3), 3).unwrap();
        let b = brute_force_signs(f.params(), &s, (0, 3), 3).unwrap();
        assert_eq!(a.signs, b.signs, "seed {seed}");
        assert!(b.residual <= a.residual + 1e-12);
    }
}

#[test]
fn doubled_points_are_handled() {
    let mut cfg = config(&[0.3], vec![2.5], 10, 3);
    cfg.doubled = true;
    let rep = run_threshold_experiment(&cfg).unwrap();
    assert_eq!(rep.rows[0].successes, 10);
}

#[test]
fn success_rate_grows_with_density() {
    for deltas in MENU {
        let cfg = config(deltas, vec![0.8, 1.2, 1.6, 2.0, 2.2, 2.5, 3.0], 20, 5);
        let rep = run_threshold_experiment(&cfg).unwrap();
        for w in rep.rows.windows(2) {
            assert!(w[1].successes + 1 >= w[0].successes, "{:?}", rep.rows);
        }
        assert_eq!(rep.rows.last().unwrap().successes, 20);
    }
}

#[test]
fn reports_are_reproducible() {
    let cfg = config(&[0.3], vec![1.5, 2.5], 8, 11);
    let a = run_threshold_experiment(&cfg).unwrap();
    let b = run_threshold_experiment(&cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = run_threshold_experiment(&config(&[0.3], vec![1.5, 2.5], 8, 12)).unwrap();
    assert_ne!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
}

#[test]
fn config_round_trips_and_validates() {
    let text = r#"{"generator": {"c0": 1.0, "gamma": 1.0, "deltas": [0.3]},
        "densities": [2.5], "trials": 3, "seed": 9, "support": [0, 5], "window": [-1.0, 6.0]}"#;
    let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
    assert_eq!(cfg.effective_max_changes(), 9);
    assert!(cfg.validate().is_ok());
    let bad = text.replace("[2.5]", "[-1.0]");
    let cfg: ExperimentConfig = serde_json::from_str(&bad).unwrap();
    assert!(matches!(run_threshold_experiment(&cfg), Err(Error::Config(_))));
    assert!(serde_json::from_str::<ExperimentConfig>(&text.replace("\"seed\"", "\"sed\"")).is_err());
}
