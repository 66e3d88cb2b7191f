//! Property suites for quadrature, norms, Q-functions and the radial quotient.

use ckn_core::minkowski::MinkowskiNorm;
use ckn_core::mmspace::{builtin_space, BuiltinSpace, VolumeProfile};
use ckn_core::qengine::q_tilde;
use ckn_core::quadrature::{integrate_finite, integrate_improper, Integrand, QuadratureOptions};
use ckn_core::variational::{radial_grid, random_initial_profile, rayleigh_quotient, DiscreteQuotient, RadialProfile};
use ckn_core::{make_params, MetricMeasureSpace};
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 3).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn finite_quadrature_splits_consistently(a in -3.0f64..0.0, c in 0.0f64..2.0, b in 2.0f64..5.0, k in 0.5f64..4.0) {
        let f = |x: f64| (k * x).sin() * (-0.1 * x * x).exp() + 1.5;
        let opts = QuadratureOptions::default();
        let whole = integrate_finite(f, a, b, &opts).unwrap().value;
        let split = integrate_finite(f, a, c, &opts).unwrap().value + integrate_finite(f, c, b, &opts).unwrap().value;
        prop_assert!((whole - split).abs() <= 1e-9 * whole.abs().max(1.0));
    }

    #[test]
    fn improper_quadrature_is_independent_of_split_scale(scale in 0.05f64..20.0, z in -0.6f64..1.5) {
        // ∫₀^∞ ρ^z/(1+ρ)^3 dρ = B(z+1, 2−z)
        let f = |r: f64| r.powf(z) / (1.0 + r).powi(3);
        let at = |s: f64| integrate_improper(&Integrand::new(f).singular_at_zero(z).tail(z - 3.0).scale(s), 1e-10).unwrap().value;
        let (x, y) = (at(1.0), at(scale));
        prop_assert!((x - y).abs() <= 1e-8 * x);
    }

    #[test]
    fn lq_norm_homogeneous_and_subadditive(v in vec3(), w in vec3(), t in -5.0f64..5.0, q in 1.1f64..8.0) {
        let f = MinkowskiNorm::lq(3, q).unwrap();
        let tv: Vec<f64> = v.iter().map(|x| t * x).collect();
        let fv = f.eval(&v).unwrap();
        prop_assert!((f.eval(&tv).unwrap() - t.abs() * fv).abs() <= 1e-12 * fv.max(1.0) * t.abs().max(1.0));
        let s: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
        prop_assert!(f.eval(&s).unwrap() <= fv + f.eval(&w).unwrap() + 1e-12);
    }

    #[test]
    fn dual_pairing_inequality(v in vec3(), alpha in vec3(), q in 1.1f64..8.0) {
        let f = MinkowskiNorm::lq(3, q).unwrap();
        let pairing: f64 = v.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        prop_assert!(pairing <= f.dual(&alpha).unwrap() * f.eval(&v).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn dual_of_dual_round_trips(v in vec3(), q in 1.1f64..8.0) {
        let f = MinkowskiNorm::lq(3, q).unwrap();
        let back = f.dual_norm().unwrap().dual_norm().unwrap();
        let fv = f.eval(&v).unwrap();
        prop_assert!((back.eval(&v).unwrap() - fv).abs() <= 1e-12 * fv);
    }

    #[test]
    fn q_tilde_is_linear_in_the_measure(c in 0.1f64..10.0, lambda in 0.05f64..20.0) {
        let p = make_params(3, 0.25).unwrap();
        let space = builtin_space(&BuiltinSpace::Euclidean(3)).unwrap();
        let base = q_tilde(&space, &p, lambda).unwrap().value;
        let scaled = q_tilde(&space.with_measure_scaled(c).unwrap(), &p, lambda).unwrap().value;
        prop_assert!((scaled - c * base).abs() <= 1e-9 * c * base);
    }

    #[test]
    fn q_tilde_is_additive_over_profiles(w1 in 0.1f64..3.0, w2 in 0.1f64..3.0, lambda in 0.1f64..10.0) {
        let p = make_params(3, 0.0).unwrap();
        let e = VolumeProfile::euclidean(3).unwrap();
        let c = VolumeProfile::power_law(2.0, 2.5).unwrap();
        let q = |prof: VolumeProfile| q_tilde(&MetricMeasureSpace::from_profile("t", 3, prof), &p, lambda).unwrap().value;
        let sum = q(VolumeProfile::sum(vec![(w1, e.clone()), (w2, c.clone())]).unwrap());
        let parts = w1 * q(e) + w2 * q(c);
        prop_assert!((sum - parts).abs() <= 1e-8 * parts);
    }

    #[test]
    fn rayleigh_quotient_is_scale_invariant(seed in 0u64..1000, c in 1e-3f64..1e3) {
        let p = make_params(3, 0.3).unwrap();
        let h = random_initial_profile(&p, radial_grid(200, 1e-3, 1e2), seed).unwrap();
        let r = rayleigh_quotient(&p, &h).unwrap();
        prop_assert!((rayleigh_quotient(&p, &h.scaled(c)).unwrap() - r).abs() <= 1e-12 * r);
    }

    #[test]
    fn discrete_gradient_matches_central_differences(seed in 0u64..1000, a in 0.0f64..0.8) {
        let p = make_params(3, a).unwrap();
        let grid = radial_grid(40, 1e-2, 50.0);
        let dq = DiscreteQuotient::new(&p, grid.clone(), -1.0).unwrap();
        let v: Vec<f64> = random_initial_profile(&p, grid, seed).unwrap().values().iter().map(|x| x + 0.05).collect();
        let (_, g) = dq.quotient_and_gradient(&v);
        let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        for i in (0..v.len()).step_by(5) {
            let h = 1e-6 * v[i].max(1e-3);
            let mut up = v.clone();
            let mut dn = v.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (dq.quotient(&up) - dq.quotient(&dn)) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(gnorm), "node {i}: {} vs {fd}", g[i]);
        }
    }
}

#[test]
fn rerooting_leaves_q_tilde_bit_identical() {
    let p = make_params(4, 0.5).unwrap();
    let space = builtin_space(&BuiltinSpace::Cylinder(3)).unwrap();
    let p3 = make_params(3, 0.5).unwrap();
    let moved = space.rerooted("another point");
    for lambda in [0.1, 1.0, 10.0] {
        assert_eq!(q_tilde(&space, &p3, lambda).unwrap(), q_tilde(&moved, &p3, lambda).unwrap());
    }
    let e = builtin_space(&BuiltinSpace::Euclidean(4)).unwrap();
    assert_eq!(q_tilde(&e, &p, 2.0).unwrap(), q_tilde(&e.rerooted("x"), &p, 2.0).unwrap());
}

#[test]
fn extremal_quotient_is_lambda_invariant() {
    let p = make_params(3, 0.0).unwrap();
    let q = |l: f64| {
        let grid = ckn_core::variational::GridSpec::default().build(p.length_scale(l));
        rayleigh_quotient(&p, &RadialProfile::extremal(&p, l, grid).unwrap()).unwrap()
    };
    let (q1, q4) = (q(1.0), q(4.0));
    assert!((q1 - q4).abs() <= 1e-6 * q1);
}

#[test]
fn dual_ascent_agrees_with_closed_form() {
    let f = MinkowskiNorm::lq(3, 3.0).unwrap();
    for alpha in [[1.0, 0.0, 0.0], [0.3, -1.2, 2.0], [-0.5, 0.5, 0.25]] {
        let closed = f.closed_form_dual(&alpha).unwrap();
        let ascent = f.dual_by_ascent(&alpha, 11).unwrap().value;
        assert!((closed - ascent).abs() <= 1e-8 * closed, "{alpha:?}: {closed} vs {ascent}");
    }
}
