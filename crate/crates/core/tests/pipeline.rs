use ckn_core::minkowski::MinkowskiNorm;
use ckn_core::mmspace::{builtin_space, parse_profile, BuiltinSpace, MetricMeasureSpace};
use ckn_core::qengine::{implied_constant, theorem1_pipeline, PipelineConfig};
use ckn_core::{make_params, CknError};

fn run(space: &BuiltinSpace, a: f64) -> ckn_core::Theorem1Report {
    let p = make_params(3, a).unwrap();
    let s = builtin_space(space).unwrap();
    theorem1_pipeline(&s, &p, &PipelineConfig::new(p.sharp_constant().value, 1.0)).unwrap()
}

#[test]
fn euclidean_and_minkowski_spaces_pass_with_equality() {
    for space in [BuiltinSpace::Euclidean(3), BuiltinSpace::Minkowski(MinkowskiNorm::lq(3, 4.0).unwrap())] {
        for a in [0.0, 0.5] {
            let r = run(&space, a);
            assert!(r.all_passed, "{space:?} a={a}:\n{}", r.to_table());
            assert!(r.lower_bound_tightness.unwrap() <= 1e-8);
        }
    }
}

#[test]
fn cylinder_fails_the_lower_bound() {
    let r = run(&BuiltinSpace::Cylinder(3), 0.0);
    let lower = r.stages.iter().find(|s| s.stage == "lower_bound").unwrap();
    assert!(!lower.passed);
    assert!(!r.all_passed);
    let p = make_params(3, 0.0).unwrap();
    let s = builtin_space(&BuiltinSpace::Cylinder(3)).unwrap();
    let c: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|&rho| implied_constant(&p, 1.0, rho, s.volume(rho).unwrap())).collect();
    assert!(c[0] < c[1] && c[1] < c[2], "{c:?}");
}

#[test]
fn sampled_profile_without_tail_is_insufficient() {
    let text = "rho,volume\n0.01,4.18879e-6\n0.1,4.18879e-3\n1,4.18879\n";
    let prof = parse_profile(text).unwrap();
    let space = MetricMeasureSpace::from_profile("file", 3, prof);
    let p = make_params(3, 0.0).unwrap();
    let r = theorem1_pipeline(&space, &p, &PipelineConfig::new(p.sharp_constant().value, 1.0)).unwrap();
    let finite = r.stages.iter().find(|s| s.stage == "q_tilde_finite").unwrap();
    assert!(!finite.passed && finite.detail.contains("tail"), "{}", finite.detail);
}

#[test]
fn bounded_spaces_are_rejected() {
    let mut s = builtin_space(&BuiltinSpace::Euclidean(3)).unwrap();
    s.unbounded = false;
    let p = make_params(3, 0.0).unwrap();
    assert!(matches!(theorem1_pipeline(&s, &p, &PipelineConfig::new(0.5, 1.0)), Err(CknError::Domain(_))));
}
