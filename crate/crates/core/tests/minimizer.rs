use ckn_core::variational::{
    default_minimizer_grid, fit_lambda, gaussian_profile, minimize_quotient, plateau_profile, verify_extremal, GridSpec,
    MinimizeOptions, RadialProfile,
};
use ckn_core::make_params;

#[test]
fn gaussian_start_reaches_sharp_constant() {
    let p = make_params(3, 0.0).unwrap();
    let init = gaussian_profile(&p, default_minimizer_grid(), 1.0).unwrap();
    let r = minimize_quotient(&p, &init, 0, &MinimizeOptions::default()).unwrap();
    let target = p.sharp_constant().inverse();
    assert!(r.converged);
    assert!((r.quotient / target - 1.0).abs() <= 5e-3, "{} vs {target}", r.quotient);
    assert!(r.trace.windows(2).all(|w| w[1].quotient <= w[0].quotient * (1.0 + 1e-12)));
    assert!(r.profile.is_non_increasing());
}

#[test]
fn extremal_start_is_nearly_stationary() {
    for (n, a) in [(3, 0.0), (4, 0.5)] {
        let p = make_params(n, a).unwrap();
        let init = RadialProfile::extremal(&p, 1.0, default_minimizer_grid()).unwrap();
        let r = minimize_quotient(&p, &init, 0, &MinimizeOptions::default()).unwrap();
        assert!(r.converged && r.iterations <= 10, "n={n} a={a}: {} iterations", r.iterations);
    }
}

#[test]
fn plateau_start_converges_to_an_extremal() {
    let p = make_params(3, 0.0).unwrap();
    let init = plateau_profile(&p, default_minimizer_grid(), 1.0).unwrap();
    let r = minimize_quotient(&p, &init, 0, &MinimizeOptions::default()).unwrap();
    assert!(r.converged);
    let fit = fit_lambda(&p, &r.profile).unwrap();
    assert!(fit.relative_l2 <= 0.02, "{fit:?}");
}

#[test]
fn zero_iterations_return_the_initial_quotient() {
    let p = make_params(3, 0.25).unwrap();
    let init = gaussian_profile(&p, default_minimizer_grid(), 2.0).unwrap();
    let r = minimize_quotient(&p, &init, 0, &MinimizeOptions { iters: 0, ..Default::default() }).unwrap();
    assert_eq!(r.iterations, 0);
    assert_eq!(r.trace.len(), 1);
    assert_eq!(r.quotient, r.trace[0].quotient);
}

#[test]
fn coarse_grids_report_larger_gaps() {
    let p = make_params(3, 0.0).unwrap();
    let report = verify_extremal(&p, 1.0, &GridSpec::default()).unwrap();
    let coarse = report.resolution_study.first().unwrap();
    assert_eq!(coarse.0, 50);
    assert!(coarse.1 > report.gap);
}

#[test]
fn profile_csv_round_trip() {
    let p = make_params(3, 0.0).unwrap();
    let h = RadialProfile::extremal(&p, 2.0, default_minimizer_grid()).unwrap();
    assert_eq!(RadialProfile::from_csv(&h.to_csv(), -1.0).unwrap(), h);
    assert!(RadialProfile::from_csv("rho,value\n0,1\n1,x\n", -1.0).is_err());
}
