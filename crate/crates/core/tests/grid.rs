use ckn_core::minkowski::MinkowskiNorm;
use ckn_core::symmetrize::{
    check_hardy_littlewood, check_hardy_littlewood_with, check_polya_szego, ckn_test, hardy_littlewood_weights, random_grid_function,
    smooth_suite, symmetrize, GridFunction, RearrangementPlan, TestFunction,
};
use ckn_core::variational::{radial_grid, rayleigh_quotient, RadialProfile};
use ckn_core::{make_params, CknError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lq4() -> MinkowskiNorm {
    MinkowskiNorm::lq(3, 4.0).unwrap()
}

#[test]
fn superlevel_measures_are_preserved() {
    let u = random_grid_function(&lq4(), 24, 1.0, 5).unwrap();
    let s = symmetrize(&u).unwrap();
    let mut levels = u.values().to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    for c in levels.iter().step_by(97) {
        let count = |g: &GridFunction| g.values().iter().filter(|v| **v > *c).count();
        assert_eq!(count(&u), count(&s));
    }
    assert_eq!(symmetrize(&s).unwrap(), s);
}

#[test]
fn indicator_becomes_a_ball() {
    let norm = lq4();
    let m = 20;
    let plan = RearrangementPlan::new(&norm, m, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut v = vec![0.0; m * m * m];
    let u0 = GridFunction::new(norm.clone(), m, 1.0, v.clone()).unwrap();
    for (i, slot) in v.iter_mut().enumerate() {
        let x = u0.coords(i);
        if x.iter().all(|c| c.abs() < 0.5) && rng.random::<f64>() < 0.3 {
            *slot = 1.0;
        }
    }
    let u = GridFunction::new(norm, m, 1.0, v).unwrap();
    let s = plan.apply(&u).unwrap();
    let d = plan.distances();
    let inside = s.values().iter().zip(d).filter(|(v, _)| **v > 0.0).map(|(_, d)| *d).fold(0.0, f64::max);
    let outside = s.values().iter().zip(d).filter(|(v, _)| **v == 0.0).map(|(_, d)| *d).fold(f64::INFINITY, f64::min);
    assert!(inside <= outside);
}

#[test]
fn hardy_littlewood_sorted_pairing_beats_every_permutation() {
    let p = make_params(3, 0.5).unwrap();
    let norm = lq4();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..3 {
        let m = 8;
        let mut v = vec![0.0; m * m * m];
        let probe = GridFunction::new(norm.clone(), m, 1.0, v.clone()).unwrap();
        let w = hardy_littlewood_weights(&p, &probe).unwrap();
        let mut top: Vec<usize> = (0..w.len()).collect();
        top.sort_by(|&i, &j| w[j].total_cmp(&w[i]).then(i.cmp(&j)));
        let values: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
        for (k, &val) in values.iter().enumerate() {
            v[top[8 + k]] = val;
        }
        let u = GridFunction::new(norm.clone(), m, 1.0, v).unwrap();
        let report = check_hardy_littlewood(&p, &u).unwrap();
        let mu = u.measure_scale().unwrap() * u.spacing().powi(3);
        let cells = &top[..8];
        let mut perm: Vec<usize> = (0..8).collect();
        let mut best = 0.0f64;
        permute(&mut perm, 0, &mut |pi| {
            let s: f64 = pi.iter().zip(cells).map(|(&k, &c)| values[k].powf(p.p) * w[c]).sum();
            best = best.max(s * mu);
        });
        assert!((report.rhs - best).abs() <= 1e-12 * best, "{} vs {best}", report.rhs);
        assert!(report.holds);
    }
}

fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

#[test]
fn hardy_littlewood_radial_fixed_point() {
    let p = make_params(3, 0.5).unwrap();
    let f = TestFunction::Bump { center: vec![0.0; 3], radius: 0.6, euclidean: false };
    let u = f.sample(&p, &lq4(), 32, 1.0).unwrap();
    let r = check_hardy_littlewood(&p, &u).unwrap();
    assert!((r.lhs - r.rhs).abs() <= 1e-12 * r.rhs);
}

#[test]
fn hardy_littlewood_random_functions() {
    let norm = lq4();
    let plan = RearrangementPlan::new(&norm, 32, 1.0).unwrap();
    for a in [0.0, 0.5] {
        let p = make_params(3, a).unwrap();
        for seed in 0..10 {
            let u = random_grid_function(&norm, 32, 1.0, seed).unwrap();
            assert!(check_hardy_littlewood_with(&p, &u, &plan).unwrap().holds);
        }
    }
}

#[test]
fn polya_szego_radial_bump_and_refusals() {
    let p = make_params(3, 0.0).unwrap();
    let f = TestFunction::Bump { center: vec![0.0; 3], radius: 0.6, euclidean: false };
    let r = check_polya_szego(&f.sample(&p, &lq4(), 48, 1.0).unwrap()).unwrap();
    assert!(r.holds_within_tol && r.margin.abs() <= 0.02);
    let shifted = smooth_suite(3, 1.0).into_iter().find(|(n, _)| n == "two-bump").unwrap().1;
    let r2 = check_polya_szego(&shifted.sample(&p, &lq4(), 48, 1.0).unwrap()).unwrap();
    assert!(r2.lhs < r2.rhs);
    let cube = MinkowskiNorm::lq(3, f64::INFINITY).unwrap();
    assert!(matches!(check_polya_szego(&f.sample(&p, &cube, 16, 1.0).unwrap()), Err(CknError::Domain(_))));
    let flat = MinkowskiNorm::flat_example(3, 0.5).unwrap();
    assert!(matches!(check_polya_szego(&f.sample(&p, &flat, 16, 1.0).unwrap()), Err(CknError::Domain(_))));
}

#[test]
fn ckn_ratio_properties() {
    let p = make_params(3, 0.5).unwrap();
    let norm = lq4();
    let bump = TestFunction::Bump { center: vec![0.25, 0.0, 0.0], radius: 0.5, euclidean: true };
    let u = bump.sample(&p, &norm, 48, 1.0).unwrap();
    let r = ckn_test(&p, &u).unwrap();
    assert!(r.ratio < r.sharp_constant);
    let scaled = ckn_test(&p, &u.scaled(37.5).unwrap()).unwrap();
    assert!((scaled.ratio - r.ratio).abs() <= 1e-12 * r.ratio);
    let star = ckn_test(&p, &symmetrize(&u).unwrap()).unwrap();
    assert!(star.ratio >= r.ratio * (1.0 - 0.02));
}

#[test]
fn grid_ratio_agrees_with_radial_quotient() {
    let p = make_params(3, 0.0).unwrap();
    let width = 0.25;
    let cutoff = 0.75;
    let f = TestFunction::Gaussian { center: vec![0.0; 3], widths: vec![width; 3], cutoff };
    let u = f.sample(&p, &MinkowskiNorm::euclidean(3).unwrap(), 96, 1.0).unwrap();
    let grid_ratio = ckn_test(&p, &u).unwrap().ratio;
    let g = radial_grid(3000, 1e-5, cutoff);
    let bump = |t: f64| if t >= 1.0 { 0.0 } else { (1.0 - 1.0 / (1.0 - t * t)).exp() };
    let values = g.iter().map(|&r| (-(r / width).powi(2)).exp() * bump(r / cutoff)).collect();
    let prof = RadialProfile::new(g, values, -1.0).unwrap();
    let radial_ratio = 1.0 / rayleigh_quotient(&p, &prof).unwrap();
    assert!((grid_ratio / radial_ratio - 1.0).abs() <= 0.02, "{grid_ratio} vs {radial_ratio}");
}

#[test]
fn binary_format_rejects_corruption() {
    let u = random_grid_function(&lq4(), 8, 1.0, 2).unwrap();
    let bytes = u.to_binary().unwrap();
    assert_eq!(&bytes[..4], b"CKNG");
    assert!(GridFunction::from_binary(&bytes[..bytes.len() - 3]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(GridFunction::from_binary(&bad).is_err());
    let dir = tempfile::tempdir().unwrap();
    for name in ["u.ckng", "u.csv"] {
        let path = dir.path().join(name);
        u.write(&path).unwrap();
        assert_eq!(GridFunction::read(&path).unwrap(), u);
    }
}
