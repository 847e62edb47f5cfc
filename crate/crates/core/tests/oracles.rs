use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use statrs::function::erf::erfc;
use tpshift::density::*;
use tpshift::generator::TimeDomainTable;
use tpshift::quadrature::integrate;
use tpshift::sispace::{check_interlacing, segment_inequality};
use tpshift::*;

fn params(c0: f64, gamma: f64, deltas: &[f64]) -> GeneratorParams {
    GeneratorParams::new(c0, gamma, deltas.to_vec()).unwrap()
}

// Gaussian convolved with (1/δ) e^{-x/δ} on x > 0 (δ > 0); mirrored for δ < 0.
fn one_factor_closed_form(c0: f64, gamma: f64, delta: f64, x: f64) -> f64 {
    let (d, x) = if delta > 0.0 { (delta, x) } else { (-delta, -x) };
    let a = PI * PI / gamma;
    let amp = c0 * (PI / gamma).sqrt();
    let mu = x - 1.0 / (2.0 * a * d);
    amp / d * (-x / d + 1.0 / (4.0 * a * d * d)).exp() * 0.5 * (PI / a).sqrt() * erfc(-mu * a.sqrt())
}

// Plain trapezoidal sum of the inverse transform with step h on |ξ| <= cut.
fn trapezoid_oracle(p: &GeneratorParams, x: f64) -> f64 {
    let h = 0.002;
    let cut = (40.0 / p.gamma()).sqrt();
    let n = (cut / h) as i64;
    let mut s = Complex64::new(0.0, 0.0);
    for j in -n..=n {
        let xi = j as f64 * h;
        s += p.ft_eval(xi) * Complex64::from_polar(1.0, 2.0 * PI * x * xi);
    }
    s.re * h
}

#[test]
fn gaussian_closed_form() {
    for (c0, gamma) in [(1.0, 1.0), (2.0, 0.7), (0.5, PI * PI)] {
        let p = params(c0, gamma, &[]);
        let a = PI * PI / gamma;
        for i in 0..41 {
            let x = -2.0 + 0.1 * i as f64;
            let expect = c0 * (PI / gamma).sqrt() * (-a * x * x).exp();
            assert!((p.time_eval(x).unwrap() - expect).abs() < 1e-14 * (1.0 + expect));
        }
    }
    assert!((params(1.0, PI * PI, &[]).time_eval(0.0).unwrap() - 1.0 / PI.sqrt()).abs() < 1e-15);
    assert!((params(1.0, 1.0, &[]).time_eval(0.0).unwrap() - PI.sqrt()).abs() < 1e-15);
}

#[test]
fn one_factor_matches_erfc_form() {
    for (gamma, delta) in [(1.0, 0.5), (1.0, 0.3), (2.0, -0.4), (PI * PI, 0.5)] {
        let p = params(1.0, gamma, &[delta]);
        let f = SisFunction::new(p.clone(), CoeffSeq::unit(0)).unwrap();
        for i in 0..56 {
            let x = -1.5 + 0.1 * i as f64;
            let expect = one_factor_closed_form(1.0, gamma, delta, x);
            let direct = p.time_eval(x).unwrap();
            assert!((direct - expect).abs() < 1e-9, "time_eval γ={gamma} δ={delta} x={x}");
            assert!((f.eval(x) - expect).abs() < 1e-9, "table γ={gamma} δ={delta} x={x}");
        }
    }
}

#[test]
fn several_factors_match_trapezoid_oracle() {
    for deltas in [&[0.3, -0.2][..], &[0.3, -0.2, 0.15], &[0.8, 0.5]] {
        let p = params(1.0, 1.0, deltas);
        let f = SisFunction::new(p.clone(), CoeffSeq::unit(0)).unwrap();
        for i in 0..31 {
            let x = -3.0 + 0.2 * i as f64;
            let oracle = trapezoid_oracle(&p, x);
            assert!((p.time_eval(x).unwrap() - oracle).abs() < 1e-9, "{deltas:?} x={x}");
            assert!((f.eval(x) - oracle).abs() < 1e-9, "{deltas:?} x={x}");
        }
    }
}

#[test]
fn time_eval_stays_real_on_dense_grid() {
    let p = params(1.0, 1.0, &[0.3, -0.2]);
    for i in 0..=1000 {
        let x = -10.0 + 0.02 * i as f64;
        let v = p.time_eval(x).unwrap();
        assert!(v.is_finite());
    }
}

#[test]
fn fourier_symmetry_and_bound() {
    let p = params(1.5, 0.8, &[0.4, -0.25, 0.1]);
    for i in 0..200 {
        let xi = -5.0 + 0.05 * i as f64;
        let v = p.ft_eval(xi);
        assert!((p.ft_eval(-xi) - v.conj()).norm() < 1e-15);
        assert!(v.norm() <= 1.5 * (-0.8 * xi * xi).exp() * (1.0 + 1e-15));
        let reduced = p.reduce().unwrap().ft_eval(xi) / Complex64::new(1.0, 2.0 * PI * 0.1 * xi);
        assert!((reduced - v).norm() < 1e-15);
    }
}

#[test]
fn table_midpoints_match_time_eval() {
    for deltas in [&[][..], &[0.5]] {
        let p = params(1.0, PI * PI, deltas);
        let t = TimeDomainTable::build(&p, 10.0, 0.01).unwrap();
        for i in 0..400 {
            let x = -9.995 + 0.05 * i as f64;
            assert!((t.eval(x) - p.time_eval(x).unwrap()).abs() < 1e-8, "{deltas:?} x={x}");
        }
        assert!(TimeDomainTable::build(&p, 10.0, 0.0).is_err());
    }
}

fn random_function(seed: u64, deltas: &[f64], support: (i64, i64)) -> SisFunction {
    let mut r = rng::stream(seed, &[11]);
    let c = (support.0..=support.1).map(|_| r.random_range(-1.0..1.0)).collect();
    SisFunction::new(params(1.0, 1.0, deltas), CoeffSeq::new(support.0, c).unwrap()).unwrap()
}

const MENU: [&[f64]; 4] = [&[], &[0.3], &[0.3, -0.2], &[0.3, -0.2, 0.15]];

#[test]
fn symmetric_pair_sums_by_direct_summation() {
    let p = params(1.0, 1.0, &[]);
    let f = SisFunction::new(p.clone(), CoeffSeq::new(0, vec![1.0, 1.0]).unwrap()).unwrap();
    assert!((f.eval(0.5) - 2.0 * p.time_eval(0.5).unwrap()).abs() < 1e-15);
}

#[test]
fn derivative_matches_finite_differences() {
    let h = 1e-5;
    for (seed, deltas) in MENU.iter().enumerate() {
        let f = random_function(seed as u64, deltas, (0, 7));
        for i in 0..80 {
            let x = -0.5 + 0.1 * i as f64 + 0.0123;
            let fd = (f.eval(x + h) - f.eval(x - h)) / (2.0 * h);
            let d = f.eval_deriv(x);
            assert!((fd - d).abs() <= 1e-5 * d.abs().max(1.0), "m={} x={x}: {fd} vs {d}", deltas.len());
        }
    }
}

#[test]
fn linearity_on_random_pairs() {
    for seed in 0..10u64 {
        let deltas = MENU[(seed % 4) as usize];
        let f = random_function(seed, deltas, (-3, 5));
        let g = random_function(seed + 100, deltas, (0, 9));
        let sum = f.with_coeffs(f.coeffs().add(g.coeffs()));
        for i in 0..100 {
            let x = -4.0 + 0.15 * i as f64;
            assert!((sum.eval(x) - f.eval(x) - g.eval(x)).abs() < 1e-9);
        }
    }
}

#[test]
fn rolle_image_is_f_plus_delta_derivative() {
    let f = SisFunction::new(
        params(1.0, 1.0, &[0.5]),
        CoeffSeq::new(0, vec![0.4, -1.0, 0.7, 0.2, -0.9]).unwrap(),
    )
    .unwrap();
    let f1 = f.apply_rolle_op(0.5).unwrap();
    assert_eq!(f1.params().m(), 0);
    for i in 0..1000 {
        let x = -2.0 + 0.008 * i as f64;
        let expect = f.eval(x) + 0.5 * f.eval_deriv(x);
        assert!((f1.eval(x) - expect).abs() < 1e-7, "x={x}");
    }
    let zero = f.with_coeffs(CoeffSeq::new(0, vec![0.0; 3]).unwrap());
    assert!(zero.apply_rolle_op(0.5).unwrap().coeffs().is_zero());
}

// Dense scan at 1e-4 counting sign changes, independent of find_zeros.
fn dense_sign_changes(f: &SisFunction, lo: f64, hi: f64) -> Vec<f64> {
    let n = ((hi - lo) / 1e-4) as usize;
    let mut out = Vec::new();
    let mut prev = f.eval(lo);
    for i in 1..=n {
        let x = lo + i as f64 * 1e-4;
        let v = f.eval(x);
        if v != 0.0 && prev != 0.0 && v.signum() != prev.signum() {
            out.push(x - 0.5e-4);
        }
        if v != 0.0 {
            prev = v;
        }
    }
    out
}

#[test]
fn alternating_coefficients_zero_per_gap() {
    let c: Vec<f64> = (0..10).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let f = SisFunction::new(params(1.0, 1.0, &[]), CoeffSeq::new(0, c).unwrap()).unwrap();
    let z = f.find_zeros(-1.0, 10.0).unwrap();
    let oracle = dense_sign_changes(&f, -1.0, 10.0);
    assert_eq!(z.zeros.len(), 9);
    assert_eq!(oracle.len(), 9);
    for (k, (x, o)) in z.zeros.points().iter().zip(&oracle).enumerate() {
        assert!(*x > k as f64 && *x < k as f64 + 1.0);
        assert!((x - o).abs() < 1e-4);
    }
}

#[test]
fn found_zeros_are_zeros() {
    for (seed, deltas) in MENU.iter().enumerate() {
        for s in 0..5u64 {
            let f = random_function(10 * seed as u64 + s, deltas, (-10, 10));
            let z = f.find_zeros(-9.0, 9.0).unwrap();
            let oracle = dense_sign_changes(&f, -9.0, 9.0);
            assert_eq!(z.zeros.len() - z.touch.len(), oracle.len());
            let tol = 1e-8 * (1.0 + f.coeffs().max_abs());
            for x in z.zeros.points() {
                assert!(f.eval(*x).abs() <= tol, "m={} x={x}", deltas.len());
            }
        }
    }
}

#[test]
fn rolle_interlacing_on_random_draws() {
    for seed in 0..30u64 {
        let deltas = MENU[1 + (seed % 3) as usize];
        let f = random_function(seed, deltas, (-12, 12));
        let f1 = f.apply_rolle_op(*deltas.last().unwrap()).unwrap();
        let zf = f.find_zeros(-10.0, 10.0).unwrap().zeros;
        let zf1 = f1.find_zeros(-10.0, 10.0).unwrap().zeros;
        assert!(check_interlacing(&zf, &zf1).interlaced, "seed {seed}");
        for t in [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0] {
            assert!(segment_inequality(&zf, &zf1, t).unwrap().holds, "seed {seed} t {t}");
        }
    }
}

#[test]
fn sampling_ratio_is_bounded() {
    // sup over the window against sup over Λ = (1/2)ℤ; recorded, not pinned.
    let lambda = PointSet::lattice(0.5, -8.0, 8.0).unwrap();
    let mut ratios = Vec::new();
    for seed in 0..100u64 {
        let f = random_function(seed, MENU[(seed % 4) as usize], (-8, 8));
        let sup = f.sup_on_grid(-8.0, 8.0, 0.005);
        let on_lambda = lambda.points().iter().fold(0.0f64, |m, x| m.max(f.eval(*x).abs()));
        ratios.push(sup / on_lambda);
    }
    let max = ratios.iter().fold(0.0f64, |m, r| m.max(*r));
    println!("sampling ratio band [1, {max:.3}]");
    assert!(ratios.iter().all(|r| *r >= 1.0 - 1e-12 && r.is_finite()));
    assert!(max < 50.0);
}

#[test]
fn inner_integral_against_quadrature() {
    let mut r = rng::stream(2, &[]);
    for _ in 0..1000 {
        let radius: f64 = r.random_range(0.1..50.0);
        let l: f64 = r.random_range(0.0..radius);
        // Substituting t = l cosh(u) removes the square-root endpoint.
        let top = (radius / l).acosh();
        let q = if l == 0.0 {
            radius
        } else {
            integrate(|u| l * u.sinh().powi(2) / u.cosh(), 0.0, top, 1e-11).unwrap()
        };
        assert!((circ_inner_integral(l, radius) - q).abs() < 1e-10, "l={l} r={radius}");
    }
    assert!((circ_inner_integral(3.0, 5.0) - (4.0 - 3.0 * 0.6f64.acos())).abs() < 1e-12);
}

// Smallest count over all windows [x - r, x + r] inside the set's window,
// sliding x across a fine grid.
fn brute_beurling(s: &PointSet, r: f64) -> f64 {
    let (lo, hi) = s.window();
    let mut best = usize::MAX;
    let steps = 20_000;
    for i in 0..=steps {
        let x = lo + r + (hi - lo - 2.0 * r) * i as f64 / steps as f64;
        let c = s.points().iter().filter(|p| (x - r..=x + r).contains(*p)).count();
        best = best.min(c);
    }
    best as f64 / (2.0 * r)
}

#[test]
fn beurling_against_sliding_count() {
    let mut r = rng::stream(4, &[]);
    for trial in 0..10 {
        let n = 40 + trial * 5;
        let pts: Vec<f64> = (0..n).map(|_| r.random_range(-20.0..20.0)).collect();
        let s = PointSet::from_unsorted(pts, (-20.0, 20.0)).unwrap();
        let radii = [1.0, 2.5, 5.0];
        let prof = beurling_lower_profile(&s, &radii).unwrap();
        for (i, &rad) in radii.iter().enumerate() {
            let b = brute_beurling(&s, rad);
            // The grid can only miss minimizing positions, never invent them.
            assert!(prof.values[i] <= b + 1e-12);
            assert!((prof.values[i] - b).abs() < 0.5 / rad, "r={rad}");
        }
    }
    let z = PointSet::lattice(1.0, -1000.0, 1000.0).unwrap();
    let v = beurling_lower_profile(&z, &[100.0]).unwrap().values[0];
    assert!((v - 1.0).abs() <= 1.0 / 200.0);
    let third = PointSet::lattice(1.0 / 3.0, -1000.0, 1000.0).unwrap();
    let v = beurling_lower_profile(&third, &[50.0]).unwrap().values[0];
    assert!((v - 3.0).abs() <= 3.0 / 100.0);
}

// (2α/πr²) ∫_0^r N(t)/t dt with N counted by brute force and the integral
// taken by a fine midpoint rule.
fn brute_lattice_density(s: &PointSet, alpha: f64, r: f64) -> f64 {
    let mut moduli = Vec::new();
    for &l in s.points() {
        if l == 0.0 {
            continue;
        }
        let kmax = (r / alpha) as i64 + 1;
        for k in -kmax..=kmax {
            let m = l.hypot(alpha * k as f64);
            if m <= r {
                moduli.push(m);
            }
        }
    }
    moduli.sort_by(f64::total_cmp);
    let n = 200_000;
    let dt = r / n as f64;
    let mut acc = 0.0;
    let mut idx = 0;
    for i in 0..n {
        let t = (i as f64 + 0.5) * dt;
        while idx < moduli.len() && moduli[idx] <= t {
            idx += 1;
        }
        acc += idx as f64 / t * dt;
    }
    2.0 * alpha / (PI * r * r) * acc
}

#[test]
fn lattice_form_against_brute_count() {
    let s = PointSet::new(vec![-2.3, -0.7, 0.0, 0.4, 1.9, 3.3], (-4.0, 4.0)).unwrap();
    for alpha in [0.5, 1.0, PI / 3.0] {
        for r in [1.0, 2.5, 4.0] {
            let v = circ_density_lattice(&s, alpha, &[r]).unwrap().values[0];
            let b = brute_lattice_density(&s, alpha, r);
            assert!((v - b).abs() < 1e-3, "α={alpha} r={r}: {v} vs {b}");
        }
    }
    let one = PointSet::new(vec![1.0], (0.0, 2.0)).unwrap();
    let v = circ_density_lattice(&one, 1.0, &[2.0]).unwrap().values[0];
    assert!((v - 2.0f64.ln() / PI).abs() < 1e-12);
}

#[test]
fn density_profile_properties() {
    let radii = [5.0, 10.0, 25.0, 50.0];
    let pts: Vec<f64> = (-200..=200).map(|k| k as f64 + 0.3 * (k as f64).sin()).collect();
    let s = PointSet::new(pts.clone(), (-201.0, 201.0)).unwrap();
    let without = s.without_origin();
    let a = circ_density_direct(&s, &radii).unwrap();
    let b = circ_density_direct(&without, &radii).unwrap();
    for (i, r) in radii.iter().enumerate() {
        assert!((a.values[i] - b.values[i] - 4.0 / (PI * r)).abs() < 1e-12);
    }
    let sub = PointSet::new(pts.iter().copied().step_by(3).collect(), (-201.0, 201.0)).unwrap();
    let c = circ_density_direct(&sub, &radii).unwrap();
    assert!(c.values.iter().zip(&a.values).all(|(x, y)| x <= y));

    let z = PointSet::lattice(1.0, -400.0, 400.0).unwrap();
    for r in [20.0, 50.0, 100.0] {
        let vals: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&al| circ_density_lattice(&z, al, &[r]).unwrap().values[0])
            .collect();
        for x in &vals {
            for y in &vals {
                assert!((x - y).abs() <= 10.0 / r);
            }
        }
    }
    let rep = check_lemma1(&s, &[0.5, 1.0, PI / 3.0], &radii).unwrap();
    assert!(rep.holds);
    let empty = PointSet::empty((-5.0, 5.0));
    let rep = check_lemma1(&empty, &[1.0], &[1.0, 2.0]).unwrap();
    assert!(rep.holds);
    assert!(rep.rows.iter().all(|r| r.circ_direct == 0.0 && r.circ_lattice[0] == 0.0));
}

#[test]
fn subadditivity_cases() {
    let even = PointSet::lattice(2.0, -100.0, 100.0).unwrap();
    let odd = PointSet::new((-50..50).map(|k| 2.0 * k as f64 + 1.0).collect(), (-100.0, 100.0)).unwrap();
    let radii = [3.0, 10.0, 40.0];
    let rep = circ_subadditivity(&even, &odd, &radii).unwrap();
    assert!(rep.disjoint && rep.holds && rep.max_defect < 1e-12);
    let z = circ_density_direct(&PointSet::lattice(1.0, -100.0, 100.0).unwrap(), &radii).unwrap();
    for (row, v) in rep.rows.iter().zip(&z.values) {
        assert!((row.union - v).abs() < 1e-12);
    }
    let rep = circ_subadditivity(&even, &even, &radii).unwrap();
    assert!(rep.holds);
    for row in &rep.rows {
        assert!((row.union - 0.5 * row.sum).abs() < 1e-12);
    }
}
