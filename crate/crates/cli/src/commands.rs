//! Argument types and bodies of the subcommands.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use ckn_core::minkowski::MinkowskiNorm;
use ckn_core::mmspace::{builtin_space, load_profile, BuiltinSpace, MetricMeasureSpace};
use ckn_core::qengine::{log_grid, theorem1_pipeline, verify_euclidean_identity, verify_scaling, PipelineConfig};
use ckn_core::symmetrize::{
    check_hardy_littlewood_with, check_polya_szego_with, random_grid_function, smooth_suite, RearrangementPlan, TestFunction,
};
use ckn_core::variational::{
    default_minimizer_grid, fit_lambda, gaussian_profile, minimize_quotient, plateau_profile, random_initial_profile,
    verify_extremal, GridSpec, MinimizeOptions, RadialProfile, EXTREMAL_TOL,
};
use ckn_core::{make_params, CknParams};
use clap::{Args, ValueEnum};
use serde_json::json;

use crate::svg::{line_plot, Axes, Series};
use crate::{CliError, CliResult, Report};

const SCALING_TOL: f64 = 1e-8;

/// x with 12 significant digits.
fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let decimals = (11 - x.abs().log10().floor() as i32).max(0) as usize;
    format!("{x:.decimals$}")
}

/// `lo:hi:count` in log10 units.
fn parse_log_grid(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Usage(format!("grid '{s}' must read LO:HI:COUNT (log10 exponents)"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    if count == 0 || !(hi >= lo) {
        return Err(bad());
    }
    Ok(log_grid(lo, hi, count))
}

/// `euclidean`, `lq:Q` (Q may be `inf`), `example36:EPS`, or a path to a JSON norm description.
pub fn parse_norm(s: &str, n: u32) -> CliResult<MinkowskiNorm> {
    let dim = n as usize;
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.parse::<f64>().map_err(|_| CliError::Usage(format!("bad number '{t}' in norm '{s}'")));
    let norm = match parts.as_slice() {
        ["euclidean"] | ["l2"] => MinkowskiNorm::euclidean(dim)?,
        ["lq", q] => MinkowskiNorm::lq(dim, num(q)?)?,
        ["example36", eps] => MinkowskiNorm::flat_example(dim, num(eps)?)?,
        _ if s.ends_with(".json") => {
            let text = std::fs::read_to_string(s)?;
            let norm = MinkowskiNorm::from_json(&text)?;
            if norm.dim() != dim {
                return Err(CliError::Usage(format!("norm file {s} is {}-dimensional, expected {dim}", norm.dim())));
            }
            norm
        }
        _ => return Err(CliError::Usage(format!("unknown norm '{s}' (euclidean, lq:Q, example36:EPS or FILE.json)"))),
    };
    Ok(norm)
}

#[derive(Debug, Args)]
pub struct ConstantArgs {
    #[arg(long)]
    pub n: u32,
    #[arg(long)]
    pub a: f64,
}

pub fn constant(args: &ConstantArgs) -> CliResult<Report> {
    let p = make_params(args.n, args.a)?;
    let k = p.sharp_constant();
    let result = json!({
        "n": p.n, "a": p.a, "p": p.p, "ap": p.ap, "s": p.s,
        "omega": p.omega, "K": k.value, "K_inverse": k.inverse(),
    });
    let mut table = String::new();
    for (name, v) in [("p", p.p), ("ap", p.ap), ("omega_n", p.omega), ("K_a", k.value), ("1/K_a", k.inverse())] {
        let _ = writeln!(table, "{name:<8} {}", sig12(v));
    }
    let mut report = Report::new("constant", result, format!("n = {}, a = {}\n{table}", p.n, p.a));
    report.csv = Some(format!("n,a,p,ap,omega,K,K_inverse\n{},{},{:e},{:e},{:e},{:e},{:e}\n", p.n, p.a, p.p, p.ap, p.omega, k.value, k.inverse()));
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifyKind {
    Identity,
    Scaling,
    Extremal,
    Symmetrize,
    Hl,
    Ps,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub kind: VerifyKind,
    #[arg(long, default_value_t = 3)]
    pub n: u32,
    #[arg(long, default_value_t = 0.0)]
    pub a: f64,
    /// λ of the sampled extremal.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Positive radial nodes for the extremal check.
    #[arg(long, default_value_t = 2000)]
    pub nodes: usize,
    /// λ grid for identity and scaling, LO:HI:COUNT in log10.
    #[arg(long, default_value = "-1:1:41", allow_hyphen_values = true)]
    pub lambda_grid: String,
    #[arg(long, default_value = "euclidean")]
    pub norm: String,
    /// Test function name, or `suite` for the ten-function suite.
    #[arg(long = "fn", default_value = "suite")]
    pub function: String,
    /// Grid nodes per axis.
    #[arg(long, default_value_t = 64)]
    pub m: usize,
    /// Box half-width L.
    #[arg(long, default_value_t = 1.0)]
    pub half_width: f64,
    /// Number of random grid functions for `hl`.
    #[arg(long, default_value_t = 100)]
    pub count: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn functions(args: &VerifyArgs) -> CliResult<Vec<(String, TestFunction)>> {
    if args.function == "suite" {
        Ok(smooth_suite(args.n as usize, args.half_width))
    } else {
        let f = TestFunction::from_str(&args.function)?.with_geometry(args.n as usize, args.half_width);
        Ok(vec![(args.function.clone(), f)])
    }
}

pub fn verify(args: &VerifyArgs) -> CliResult<Report> {
    let p = make_params(args.n, args.a)?;
    match args.kind {
        VerifyKind::Identity => verify_identity(&p, args),
        VerifyKind::Scaling => {
            let grid = parse_log_grid(&args.lambda_grid)?;
            let worst = verify_scaling(&p, &grid)?;
            let passed = worst <= SCALING_TOL;
            let result = json!({ "check": "scaling", "n": p.n, "a": p.a, "max_relative_error": worst, "tol": SCALING_TOL, "passed": passed });
            let table = format!("scaling law n = {} a = {}: max relative error {worst:.3e} (tol {SCALING_TOL:e}) {}\n", p.n, p.a, verdict(passed));
            Ok(finish(Report::new("verify", result, table), passed, "scaling law residual above tolerance"))
        }
        VerifyKind::Extremal => {
            let r = verify_extremal(&p, args.lambda, &GridSpec::with_nodes(args.nodes))?;
            let passed = r.gap <= EXTREMAL_TOL;
            let mut table = format!(
                "extremal n = {} a = {} lambda = {}: quotient {} vs 1/K_a {} gap {:.3e} (tol {EXTREMAL_TOL:e}) {}\nresolution study:\n",
                p.n, p.a, args.lambda, sig12(r.quotient), sig12(r.target), r.gap, verdict(passed)
            );
            for (nodes, gap) in &r.resolution_study {
                let _ = writeln!(table, "  {nodes:>6} nodes  gap {gap:.3e}");
            }
            let mut result = serde_json::to_value(&r).unwrap();
            result["check"] = json!("extremal");
            result["tol"] = json!(EXTREMAL_TOL);
            result["passed"] = json!(passed);
            Ok(finish(Report::new("verify", result, table), passed, "extremal quotient gap above tolerance"))
        }
        VerifyKind::Symmetrize => verify_symmetrize(&p, args),
        VerifyKind::Hl => verify_hl(&p, args),
        VerifyKind::Ps => verify_ps(&p, args),
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

fn finish(mut report: Report, passed: bool, why: &str) -> Report {
    report.passed = passed;
    if !passed {
        report.failure = Some(why.into());
    }
    report
}

fn verify_identity(p: &CknParams, args: &VerifyArgs) -> CliResult<Report> {
    let grid = parse_log_grid(&args.lambda_grid)?;
    let r = verify_euclidean_identity(p, &grid)?;
    let mut table = format!(
        "identity n = {} a = {}: max residual {:.3e} (tol {:e}) {}\n",
        p.n,
        p.a,
        r.max_residual,
        r.tol,
        verdict(r.passes)
    );
    let mut csv = String::from("lambda,lhs,rhs,residual\n");
    for e in &r.entries {
        let _ = writeln!(csv, "{:.17e},{:.17e},{:.17e},{:.3e}", e.lambda, e.lhs, e.rhs, e.residual);
    }
    let _ = writeln!(table, "{} lambda points from {:.3e} to {:.3e}", r.entries.len(), grid[0], grid[grid.len() - 1]);
    let mut result = serde_json::to_value(&r).unwrap();
    result["check"] = json!("identity");
    let mut report = Report::new("verify", result, table);
    report.csv = Some(csv.clone());
    report.files.push(("identity.csv".into(), csv));
    Ok(finish(report, r.passes, "ODE identity residual above tolerance"))
}

fn verify_symmetrize(p: &CknParams, args: &VerifyArgs) -> CliResult<Report> {
    let norm = parse_norm(&args.norm, args.n)?;
    let plan = RearrangementPlan::new(&norm, args.m, args.half_width)?;
    let mut rows = Vec::new();
    let mut table = format!("symmetrization with {} on a {}^{} grid, L = {}\n", norm.label(), args.m, args.n, args.half_width);
    let mut all = true;
    for (name, f) in functions(args)? {
        let u = f.sample(p, &norm, args.m, args.half_width)?;
        let star = plan.apply(&u)?;
        let mut a = u.values().to_vec();
        let mut b = star.values().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let measure_preserved = a == b;
        let idempotent = plan.apply(&star)? == star;
        let ordered: Vec<f64> = plan.order().iter().map(|&i| star.values()[i as usize]).collect();
        let radially_decreasing = ordered.windows(2).all(|w| w[1] <= w[0]);
        let ok = measure_preserved && idempotent && radially_decreasing;
        all &= ok;
        let _ = writeln!(
            table,
            "  {name:<26} measure {} idempotent {} decreasing {} {}",
            measure_preserved,
            idempotent,
            radially_decreasing,
            verdict(ok)
        );
        rows.push(json!({ "function": name, "measure_preserved": measure_preserved, "idempotent": idempotent, "radially_decreasing": radially_decreasing, "passed": ok }));
    }
    let result = json!({ "check": "symmetrize", "norm": norm.label(), "m": args.m, "half_width": args.half_width, "functions": rows, "passed": all });
    Ok(finish(Report::new("verify", result, table), all, "symmetrization invariant violated"))
}

fn verify_hl(p: &CknParams, args: &VerifyArgs) -> CliResult<Report> {
    let norm = parse_norm(&args.norm, args.n)?;
    let plan = RearrangementPlan::new(&norm, args.m, args.half_width)?;
    let mut worst = f64::NEG_INFINITY;
    let mut all = true;
    let mut csv = String::from("seed,lhs,rhs,holds\n");
    for seed in args.seed..args.seed + args.count {
        let u = random_grid_function(&norm, args.m, args.half_width, seed)?;
        let r = check_hardy_littlewood_with(p, &u, &plan)?;
        worst = worst.max(r.lhs / r.rhs - 1.0);
        all &= r.holds;
        let _ = writeln!(csv, "{seed},{:.17e},{:.17e},{}", r.lhs, r.rhs, r.holds);
    }
    let table = format!(
        "Hardy-Littlewood with {} (n = {}, a = {}, m = {}): {} random functions, max lhs/rhs - 1 = {worst:.3e} {}\n",
        norm.label(),
        p.n,
        p.a,
        args.m,
        args.count,
        verdict(all)
    );
    let result = json!({ "check": "hl", "norm": norm.label(), "n": p.n, "a": p.a, "m": args.m, "count": args.count, "max_excess": worst, "passed": all });
    let mut report = Report::new("verify", result, table);
    report.csv = Some(csv);
    Ok(finish(report, all, "Hardy-Littlewood inequality violated"))
}

fn verify_ps(p: &CknParams, args: &VerifyArgs) -> CliResult<Report> {
    let norm = parse_norm(&args.norm, args.n)?;
    let plan = RearrangementPlan::new(&norm, args.m, args.half_width)?;
    let mut rows = Vec::new();
    let mut all = true;
    let mut worst = f64::NEG_INFINITY;
    let mut table = format!("Polya-Szego with {} on a {}^{} grid (tol 2%)\n", norm.label(), args.m, args.n);
    for (name, f) in functions(args)? {
        let u = f.sample(p, &norm, args.m, args.half_width)?;
        let r = check_polya_szego_with(&u, &plan)?;
        all &= r.holds_within_tol;
        worst = worst.max(r.margin);
        let _ = writeln!(table, "  {name:<26} E(u*) {:.6e}  E(u) {:.6e}  margin {:+.3e} {}", r.lhs, r.rhs, r.margin, verdict(r.holds_within_tol));
        rows.push(json!({ "function": name, "lhs": r.lhs, "rhs": r.rhs, "margin": r.margin, "passed": r.holds_within_tol }));
    }
    let result = json!({ "check": "ps", "norm": norm.label(), "m": args.m, "functions": rows, "max_margin": worst, "passed": all });
    Ok(finish(Report::new("verify", result, table), all, "Polya-Szego violated beyond tolerance"))
}

#[derive(Debug, Args)]
pub struct Theorem1Args {
    /// euclidean:N, cylinder:N, minkowski:lq:Q[:N], example36:N:EPS or profile:PATH.
    #[arg(long)]
    pub space: String,
    /// Dimension; required for profile spaces.
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long, default_value_t = 0.0)]
    pub a: f64,
    /// CKN constant C, or `Ka` for the sharp constant.
    #[arg(long = "C", default_value = "Ka")]
    pub c: String,
    #[arg(long = "C0", default_value_t = 1.0)]
    pub c0: f64,
    /// λ grid, LO:HI:COUNT in log10.
    #[arg(long, default_value = "-2:2:41", allow_hyphen_values = true)]
    pub lambda_grid: String,
    /// ρ grid, LO:HI:COUNT in log10.
    #[arg(long, default_value = "-2:3:21", allow_hyphen_values = true)]
    pub rho_grid: String,
    #[arg(long, default_value_t = 1.0)]
    pub r0: f64,
    #[arg(long)]
    pub delta0: Option<f64>,
}

fn resolve_space(spec: &str, n: Option<u32>) -> CliResult<(MetricMeasureSpace, u32)> {
    if let Some(path) = spec.strip_prefix("profile:") {
        let n = n.ok_or_else(|| CliError::Usage("profile spaces need --n".into()))?;
        let profile = load_profile(PathBuf::from(path))?;
        return Ok((MetricMeasureSpace::from_profile(format!("profile({path})"), n, profile), n));
    }
    let space = builtin_space(&BuiltinSpace::from_str(spec)?)?;
    let dim = space.dim_hint;
    if let Some(n) = n {
        if n != dim {
            return Err(CliError::Usage(format!("--n {n} disagrees with the {dim}-dimensional space '{spec}'")));
        }
    }
    Ok((space, dim))
}

pub fn theorem1(args: &Theorem1Args) -> CliResult<Report> {
    let lambda_grid = parse_log_grid(&args.lambda_grid)?;
    let rho_grid = parse_log_grid(&args.rho_grid)?;
    let (space, n) = resolve_space(&args.space, args.n)?;
    let p = make_params(n, args.a)?;
    let c = if args.c.eq_ignore_ascii_case("ka") {
        p.sharp_constant().value
    } else {
        args.c.parse::<f64>().map_err(|_| CliError::Usage(format!("--C must be a number or Ka, got '{}'", args.c)))?
    };
    let mut config = PipelineConfig::new(c, args.c0);
    config.lambda_grid = lambda_grid;
    config.rho_grid = rho_grid;
    config.r0 = args.r0;
    config.delta0 = args.delta0;
    let r = theorem1_pipeline(&space, &p, &config)?;
    let failing: Vec<&str> = r.stages.iter().filter(|s| !s.passed).map(|s| s.stage.as_str()).collect();
    let mut report = Report::new("theorem1", serde_json::to_value(&r).unwrap(), r.to_table());
    report.csv = Some(r.bounds_csv());
    report.files.push(("comparison.csv".into(), r.comparison_csv()));
    report.files.push(("bounds.csv".into(), r.bounds_csv()));
    let log = Axes { log_x: true, log_y: true };
    report.files.push((
        "bounds.svg".into(),
        line_plot(
            &format!("ball volumes of {}", r.space),
            "rho",
            "mu(B(x0, rho))",
            log,
            &[
                Series { label: "volume", points: r.bounds.iter().map(|b| (b.rho, b.volume)).collect() },
                Series { label: "lower bound", points: r.bounds.iter().map(|b| (b.rho, b.lower_bound)).collect() },
                Series { label: "C0 omega_n rho^n", points: r.bounds.iter().map(|b| (b.rho, b.upper_bound)).collect() },
            ],
        ),
    ));
    if let Some(v) = &r.comparison {
        report.files.push((
            "comparison.svg".into(),
            line_plot(
                "Q-function comparison",
                "lambda",
                "value",
                log,
                &[
                    Series { label: "Q~", points: v.lambda_grid.iter().copied().zip(v.q_tilde_values.iter().copied()).collect() },
                    Series { label: "q", points: v.lambda_grid.iter().copied().zip(v.q_values.iter().copied()).collect() },
                ],
            ),
        ));
    }
    let passed = r.all_passed;
    Ok(finish(report, passed, &format!("failing stages: {}", failing.join(", "))))
}

#[derive(Debug, Args)]
pub struct MinimizeArgs {
    #[arg(long, default_value_t = 3)]
    pub n: u32,
    #[arg(long, default_value_t = 0.0)]
    pub a: f64,
    /// random, gaussian[:W], plateau[:W], extremal[:LAMBDA] or file:PATH.
    #[arg(long, default_value = "random")]
    pub init: String,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 20_000)]
    pub iters: usize,
}

fn initial_profile(p: &CknParams, spec: &str, seed: u64) -> CliResult<RadialProfile> {
    let grid = default_minimizer_grid();
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let num = |default: f64| -> CliResult<f64> {
        if arg.is_empty() {
            Ok(default)
        } else {
            arg.parse().map_err(|_| CliError::Usage(format!("bad number '{arg}' in --init {spec}")))
        }
    };
    let profile = match kind {
        "random" => random_initial_profile(p, grid, seed)?,
        "gaussian" => gaussian_profile(p, grid, num(1.0)?)?,
        "plateau" => plateau_profile(p, grid, num(1.0)?)?,
        "extremal" => RadialProfile::extremal(p, num(1.0)?, grid)?,
        "file" => RadialProfile::from_csv(&std::fs::read_to_string(arg)?, 2.0 - p.dim())?,
        _ => return Err(CliError::Usage(format!("unknown --init '{spec}' (random, gaussian[:W], plateau[:W], extremal[:LAMBDA], file:PATH)"))),
    };
    Ok(profile)
}

pub fn minimize(args: &MinimizeArgs) -> CliResult<Report> {
    let p = make_params(args.n, args.a)?;
    let init = initial_profile(&p, &args.init, args.seed)?;
    let opts = MinimizeOptions { iters: args.iters, ..Default::default() };
    let r = minimize_quotient(&p, &init, args.seed, &opts)?;
    let target = p.sharp_constant().inverse();
    let rel = r.quotient / target - 1.0;
    let fit = fit_lambda(&p, &r.profile).ok();
    let converged = args.iters == 0 || r.converged;
    let mut table = format!(
        "minimize n = {} a = {} init {} seed {}: quotient {} vs 1/K_a {} (relative {rel:+.3e}) after {} iterations, {}\n",
        p.n,
        p.a,
        args.init,
        args.seed,
        sig12(r.quotient),
        sig12(target),
        r.iterations,
        if r.converged { "converged" } else { "not converged" }
    );
    if let Some(f) = &fit {
        let _ = writeln!(table, "best extremal fit: lambda {:.6e}, relative L2 misfit {:.3e}", f.lambda, f.relative_l2);
    }
    let result = json!({
        "n": p.n, "a": p.a, "init": args.init, "seed": args.seed, "iters": args.iters,
        "quotient": r.quotient, "target": target, "relative_to_target": rel,
        "iterations": r.iterations, "converged": r.converged, "fit": fit,
        "trace": r.trace,
    });
    let mut report = Report::new("minimize", result, table);
    report.csv = Some(r.trace_csv());
    report.files.push(("minimize_trace.csv".into(), r.trace_csv()));
    report.files.push(("minimize_profile.csv".into(), r.profile.to_csv()));
    report.files.push((
        "minimize_trace.svg".into(),
        line_plot(
            "Rayleigh quotient descent",
            "iteration",
            "quotient - 1/K_a",
            Axes { log_x: false, log_y: true },
            &[Series { label: "excess", points: r.trace.iter().map(|t| (t.iter as f64, t.quotient - target)).collect() }],
        ),
    ));
    report.converged = converged;
    if !converged {
        report.failure = Some(format!("minimizer did not converge within {} iterations", args.iters));
    }
    Ok(report)
}
