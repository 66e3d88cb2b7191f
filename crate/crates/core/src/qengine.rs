//! The layer-cake kernel f(λ, ρ), the auxiliary functions Q_E and Q̃, the
//! differential identity and comparison behind the volume-growth theorem,
//! and the staged pipeline that audits a space against that theorem.

use std::cell::RefCell;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{CknError, Result};
use crate::mmspace::{check_ar, check_vd, default_ar_sequence, default_vd_grid, ArReport, MetricMeasureSpace, VdReport, VolumeProfile};
use crate::params::CknParams;
use crate::quadrature::{differentiate_under_integral, ParametricIntegrand, QuadratureResult, DEFAULT_REL_TOL};

/// Relative tolerance of the identity check.
pub const IDENTITY_TOL: f64 = 1e-6;
/// Relative slack of the comparison Q̃ ≥ q.
pub const COMPARISON_SLACK: f64 = 1e-8;
/// Relative slack of the volume bounds.
pub const BOUND_SLACK: f64 = 1e-10;
/// |C − K_a|/K_a below which C is treated as the closed limit C = K_a.
pub const CLOSED_LIMIT_TOL: f64 = 1e-12;

/// Q(λ) and Q′(λ) with their quadrature error estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QEvaluation {
    pub lambda: f64,
    pub value: f64,
    pub derivative: f64,
    pub quadrature_error: f64,
    pub derivative_error: f64,
}

/// f(λ, ρ) = (λ+ρ^s)^{n/(a−1)} ρ^{−(ap+1)} [ρ^s((n−1+a)s/(1−a) + ap) + apλ], s = 2 − ap.
pub fn f_kernel(params: &CknParams, lambda: f64, rho: f64) -> Result<f64> {
    if !(lambda >= 0.0) || !(rho > 0.0) {
        return Err(CknError::domain(format!("kernel needs lambda >= 0 and rho > 0, got ({lambda}, {rho})")));
    }
    Ok(kernel(params, lambda, rho))
}

#[inline]
fn bracket_coefficient(p: &CknParams) -> f64 {
    p.mass_ratio * p.s + p.ap
}

#[inline]
pub(crate) fn kernel(p: &CknParams, lambda: f64, rho: f64) -> f64 {
    let rs = rho.powf(p.s);
    (lambda + rs).powf(p.kernel_exponent)
        * rho.powf(-(p.ap + 1.0))
        * (rs * bracket_coefficient(p) + p.ap * lambda)
}

/// ∂_λ f(λ, ρ).
pub fn f_kernel_dlambda(params: &CknParams, lambda: f64, rho: f64) -> Result<f64> {
    if !(lambda >= 0.0) || !(rho > 0.0) {
        return Err(CknError::domain(format!("kernel needs lambda >= 0 and rho > 0, got ({lambda}, {rho})")));
    }
    Ok(kernel_dlambda(params, lambda, rho))
}

#[inline]
pub(crate) fn kernel_dlambda(p: &CknParams, lambda: f64, rho: f64) -> f64 {
    let rs = rho.powf(p.s);
    let base = lambda + rs;
    let m = p.kernel_exponent;
    let w = rho.powf(-(p.ap + 1.0));
    let bracket = rs * bracket_coefficient(p) + p.ap * lambda;
    base.powf(m - 1.0) * w * (m * bracket + base * p.ap)
}

/// ρ-exponents of f near 0 and at ∞ (exclusive of any volume factor).
fn kernel_exponents(p: &CknParams) -> (f64, f64) {
    let zero = if p.ap > 0.0 { -(p.ap + 1.0) } else { 1.0 };
    let tail = p.s * (p.kernel_exponent + 1.0) - p.ap - 1.0;
    (zero, tail)
}

/// Integrates (1−a)/(n−1+a) · vol(ρ) · {f, ∂_λ f}(λ, ρ) over (0, ∞), where
/// vol behaves like ρ^{head} at 0 and like ρ^{tail} at ∞.
fn q_integrals<V: Fn(f64) -> f64>(
    p: &CknParams,
    lambda: f64,
    vol: V,
    head: f64,
    tail: f64,
    rel_tol: f64,
) -> Result<QEvaluation> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(CknError::domain(format!("lambda = {lambda} must be positive")));
    }
    let (kz, kt) = kernel_exponents(p);
    let tail_exponent = tail + kt;
    if tail_exponent >= -1.0 {
        return Err(CknError::domain(format!(
            "volume growth rho^{tail} makes the Q integral diverge (integrand ~ rho^{tail_exponent})"
        )));
    }
    let integrand = ParametricIntegrand {
        family: |l: f64, r: f64| vol(r) * kernel(p, l, r),
        derivative: |l: f64, r: f64| vol(r) * kernel_dlambda(p, l, r),
        zero_exponent: Some(head + kz),
        tail_exponent_hint: Some(tail_exponent),
        scale: p.length_scale(lambda),
        upper: None,
    };
    let factor = 1.0 / p.mass_ratio;
    let value = integrand.integrate_family(lambda, rel_tol)?.scaled(factor);
    let derivative = differentiate_under_integral(&integrand, lambda, rel_tol)?.scaled(factor);
    Ok(assemble(lambda, value, derivative))
}

fn assemble(lambda: f64, value: QuadratureResult, derivative: QuadratureResult) -> QEvaluation {
    QEvaluation {
        lambda,
        value: value.value,
        derivative: derivative.value,
        quadrature_error: value.abs_error_estimate,
        derivative_error: derivative.abs_error_estimate,
    }
}

/// Q_E(λ) and Q_E′(λ) for the Euclidean profile ω_n ρⁿ.
pub fn q_e(params: &CknParams, lambda: f64) -> Result<QEvaluation> {
    q_e_with_tol(params, lambda, DEFAULT_REL_TOL)
}

pub fn q_e_with_tol(params: &CknParams, lambda: f64, rel_tol: f64) -> Result<QEvaluation> {
    let n = params.dim();
    let omega = params.omega;
    q_integrals(params, lambda, |r| omega * r.powf(n), n, n, rel_tol)
}

/// Q̃(λ) and Q̃′(λ) against the space's volume profile.
pub fn q_tilde(space: &MetricMeasureSpace, params: &CknParams, lambda: f64) -> Result<QEvaluation> {
    q_tilde_with_tol(space, params, lambda, DEFAULT_REL_TOL)
}

pub fn q_tilde_with_tol(
    space: &MetricMeasureSpace,
    params: &CknParams,
    lambda: f64,
    rel_tol: f64,
) -> Result<QEvaluation> {
    if !space.unbounded {
        return Err(CknError::domain(format!("space {} is flagged bounded", space.name)));
    }
    q_tilde_profile(&space.profile, params, lambda, rel_tol)
}

/// Q̃ for a bare profile; profile errors inside the integrand surface as-is.
pub fn q_tilde_profile(
    profile: &VolumeProfile,
    params: &CknParams,
    lambda: f64,
    rel_tol: f64,
) -> Result<QEvaluation> {
    let tail = profile.tail_law().ok_or_else(|| {
        CknError::InsufficientData("volume profile has no tail model; Q integrals need one".into())
    })?;
    let failure: RefCell<Option<CknError>> = RefCell::new(None);
    let vol = |r: f64| match profile.volume(r) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let result = q_integrals(params, lambda, vol, profile.head_exponent(), tail.exponent, rel_tol);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    result
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityEntry {
    pub lambda: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub n: u32,
    pub a: f64,
    pub entries: Vec<IdentityEntry>,
    pub max_residual: f64,
    /// (n−1+a)/(1−a)·Q_E + λQ_E′ > 0 at every grid point.
    pub rhs_positive: bool,
    pub tol: f64,
    pub passes: bool,
}

/// Checks (−Q′)^{2/p} = K²(n−2)²((n−1+a)/(1−a)Q + λQ′) on a λ-grid.
pub fn verify_euclidean_identity(params: &CknParams, lambda_grid: &[f64]) -> Result<IdentityReport> {
    if lambda_grid.is_empty() {
        return Err(CknError::domain("lambda grid is empty"));
    }
    let k = params.sharp_constant().value;
    let nm2 = params.dim() - 2.0;
    let mut entries = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        let q = q_e(params, lambda)?;
        let lhs = (-q.derivative).powf(2.0 / params.p);
        let inner = params.mass_ratio * q.value + lambda * q.derivative;
        let rhs = k * k * nm2 * nm2 * inner;
        entries.push(IdentityEntry { lambda, lhs, rhs, residual: ((lhs - rhs) / rhs).abs() });
    }
    let max_residual = entries.iter().map(|e| e.residual).fold(0.0, f64::max);
    let rhs_positive = entries.iter().all(|e| e.rhs > 0.0);
    Ok(IdentityReport {
        n: params.n,
        a: params.a,
        entries,
        max_residual,
        rhs_positive,
        tol: IDENTITY_TOL,
        passes: max_residual <= IDENTITY_TOL && rhs_positive,
    })
}

/// max over the grid of |Q_E(λ) − λ^α Q_E(1)| / Q_E(λ), α = (n−2+2a)/(2(a−1)).
pub fn verify_scaling(params: &CknParams, lambda_grid: &[f64]) -> Result<f64> {
    let q1 = q_e(params, 1.0)?.value;
    let mut worst = 0.0f64;
    for &lambda in lambda_grid {
        let q = q_e(params, lambda)?.value;
        let predicted = lambda.powf(params.scaling_exponent) * q1;
        worst = worst.max(((q - predicted) / q).abs());
    }
    Ok(worst)
}

/// (C⁻¹K_a)^{n/(1−a)}.
pub fn comparison_factor(params: &CknParams, c: f64) -> f64 {
    (params.sharp_constant().value / c).powf(params.dim() / (1.0 - params.a))
}

fn check_c(params: &CknParams, c: f64) -> Result<f64> {
    let k = params.sharp_constant().value;
    if !(c.is_finite() && c >= k) {
        return Err(CknError::domain(format!("C = {c} violates C >= K_a = {k}")));
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonVerdict {
    pub c: f64,
    pub lambda_grid: Vec<f64>,
    pub q_tilde_values: Vec<f64>,
    pub q_values: Vec<f64>,
    /// (Q̃ − q)/|q| per grid point.
    pub relative_gaps: Vec<f64>,
    pub min_gap: f64,
    pub holds: bool,
    /// [C²(n−2)²((n−1+a)/(1−a)Q̃ + λQ̃′) − (−Q̃′)^{2/p}] / (−Q̃′)^{2/p} per point.
    pub differential_slack: Vec<f64>,
    pub min_differential_slack: f64,
    pub differential_holds: bool,
    /// (Q̃ − q)′ ≥ 0 wherever q ≥ Q̃ within tolerance.
    pub monotone_mechanism_holds: bool,
    /// C equals K_a to 1e-12: the comparison is checked as a non-strict limit.
    pub closed_limit: bool,
    pub tol: f64,
}

/// Q̃ ≥ q = (C⁻¹K_a)^{n/(1−a)}Q_E on a λ-grid, plus the pointwise
/// differential inequality for Q̃.
pub fn verify_comparison(
    space: &MetricMeasureSpace,
    params: &CknParams,
    c: f64,
    lambda_grid: &[f64],
) -> Result<ComparisonVerdict> {
    let k = check_c(params, c)?;
    if lambda_grid.is_empty() {
        return Err(CknError::domain("lambda grid is empty"));
    }
    let kappa = comparison_factor(params, c);
    let nm2 = params.dim() - 2.0;
    let tol = COMPARISON_SLACK;
    let mut v = ComparisonVerdict {
        c,
        lambda_grid: lambda_grid.to_vec(),
        q_tilde_values: Vec::new(),
        q_values: Vec::new(),
        relative_gaps: Vec::new(),
        min_gap: f64::INFINITY,
        holds: true,
        differential_slack: Vec::new(),
        min_differential_slack: f64::INFINITY,
        differential_holds: true,
        monotone_mechanism_holds: true,
        closed_limit: ((c - k) / k).abs() < CLOSED_LIMIT_TOL,
        tol,
    };
    for &lambda in lambda_grid {
        let qt = q_tilde(space, params, lambda)?;
        let qe = q_e(params, lambda)?;
        let q = kappa * qe.value;
        let dq = kappa * qe.derivative;
        let gap = (qt.value - q) / q.abs();
        v.q_tilde_values.push(qt.value);
        v.q_values.push(q);
        v.relative_gaps.push(gap);
        v.min_gap = v.min_gap.min(gap);

        let lhs = (-qt.derivative).powf(2.0 / params.p);
        let rhs = c * c * nm2 * nm2 * (params.mass_ratio * qt.value + lambda * qt.derivative);
        let slack = (rhs - lhs) / lhs;
        v.differential_slack.push(slack);
        v.min_differential_slack = v.min_differential_slack.min(slack);

        if q >= qt.value - tol * q.abs() {
            let dgap = qt.derivative - dq;
            if dgap < -IDENTITY_TOL * dq.abs() {
                v.monotone_mechanism_holds = false;
            }
        }
    }
    v.holds = v.min_gap >= -tol;
    v.differential_holds = v.min_differential_slack >= -IDENTITY_TOL;
    Ok(v)
}

/// The unique ρ > 0 with C⁻²(n−2)⁻²ρ^{2/p} + λρ = y.
pub fn z_lambda_inverse(params: &CknParams, c: f64, lambda: f64, y: f64) -> Result<f64> {
    if !(c > 0.0 && lambda > 0.0 && y > 0.0) {
        return Err(CknError::domain("z_lambda inverse needs C, lambda, y > 0"));
    }
    let coef = 1.0 / (c * c * (params.dim() - 2.0).powi(2));
    let e = 2.0 / params.p;
    let z = |r: f64| coef * r.powf(e) + lambda * r;
    let mut hi = (y / lambda).min((y / coef).powf(1.0 / e));
    let mut lo = (0.5 * y / lambda).min((0.5 * y / coef).powf(1.0 / e));
    let mut rho = 0.5 * (lo + hi);
    for _ in 0..200 {
        let g = z(rho) - y;
        if g.abs() <= 1e-13 * y {
            return Ok(rho);
        }
        if g > 0.0 {
            hi = rho;
        } else {
            lo = rho;
        }
        let dz = coef * e * rho.powf(e - 1.0) + lambda;
        let newton = rho - g / dz;
        rho = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    let g = z(rho) - y;
    if g.abs() <= 1e-12 * y {
        Ok(rho)
    } else {
        Err(CknError::Numeric { message: "z_lambda inverse did not converge".into(), best: rho })
    }
}

/// C0⁻¹(C⁻¹K_a)^{n/(1−a)} ω_n ρⁿ.
pub fn volume_lower_bound(params: &CknParams, c: f64, c0: f64, rho: f64) -> Result<f64> {
    check_c(params, c)?;
    if !(c0 >= 1.0) {
        return Err(CknError::domain(format!("C0 = {c0} must be >= 1")));
    }
    if !(rho > 0.0) {
        return Err(CknError::domain(format!("radius {rho} must be positive")));
    }
    Ok(comparison_factor(params, c) / c0 * params.omega * rho.powf(params.dim()))
}

/// Smallest C for which μ(B(ρ)) ≥ C0⁻¹(C⁻¹K_a)^{n/(1−a)} ω_n ρⁿ at this ρ.
pub fn implied_constant(params: &CknParams, c0: f64, rho: f64, volume: f64) -> f64 {
    let k = params.sharp_constant().value;
    let euclid = params.omega * rho.powf(params.dim());
    k * (euclid / (c0 * volume)).powf((1.0 - params.a) / params.dim())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContradictionDiagnostic {
    pub r0: f64,
    pub delta0: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    /// M₁λ^α ≤ M₂λ^{n/(a−1)} + M₃λ^{n/(a−1)+1} holds for λ ≤ λ* and fails beyond.
    pub lambda_star: f64,
}

/// The inequality obtained by assuming s₀ < (C⁻¹K_a)^{n/(1−a)}, evaluated
/// for given r₀, δ₀. Its right side decays faster than the left, so it
/// fails past a unique λ*.
pub fn contradiction_diagnostic(
    params: &CknParams,
    c: f64,
    c0: f64,
    r0: f64,
    delta0: f64,
) -> Result<ContradictionDiagnostic> {
    check_c(params, c)?;
    if !(r0 > 0.0 && delta0 > 0.0) {
        return Err(CknError::domain("diagnostic needs r0 > 0 and delta0 > 0"));
    }
    let n = params.dim();
    let ap = params.ap;
    let kappa = comparison_factor(params, c);
    let q1 = q_e(params, 1.0)?.value;
    let m1 = delta0 * params.mass_ratio * q1;
    let w = (c0 - kappa + delta0) * params.omega;
    let m2 = w * bracket_coefficient(params) * r0.powf(n - 2.0 * ap + 2.0) / (n - 2.0 * ap + 2.0);
    let m3 = w * ap * r0.powf(n - ap) / (n - ap);
    let alpha = params.scaling_exponent;
    let m = params.kernel_exponent;
    // h(λ) = M₁ − M₂λ^{m−α} − M₃λ^{m+1−α} is increasing in λ.
    let h = |l: f64| m1 - m2 * l.powf(m - alpha) - m3 * l.powf(m + 1.0 - alpha);
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while h(10f64.powf(lo)) > 0.0 && lo > -300.0 {
        lo -= 2.0;
    }
    while h(10f64.powf(hi)) < 0.0 && hi < 300.0 {
        hi += 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(10f64.powf(mid)) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ContradictionDiagnostic { r0, delta0, m1, m2, m3, lambda_star: 10f64.powf(0.5 * (lo + hi)) })
}

/// Log-spaced grid of `count` points from 10^lo to 10^hi.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![10f64.powf(lo)];
    }
    (0..count).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64)).collect()
}

/// λ from 10⁻² to 10², 41 points.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(-2.0, 2.0, 41)
}

/// ρ from 10⁻² to 10³, 21 points (hits 10, 100 and 1000 exactly).
pub fn default_rho_grid() -> Vec<f64> {
    (0..=20).map(|i| 10f64.powf(-2.0 + 0.25 * i as f64)).collect()
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub c: f64,
    pub c0: f64,
    pub lambda_grid: Vec<f64>,
    pub rho_grid: Vec<f64>,
    pub vd_grid: Vec<(f64, f64)>,
    pub ar_sequence: Vec<f64>,
    pub r0: f64,
    /// Defaults to half of (C⁻¹K_a)^{n/(1−a)}.
    pub delta0: Option<f64>,
}

impl PipelineConfig {
    pub fn new(c: f64, c0: f64) -> Self {
        PipelineConfig {
            c,
            c0,
            lambda_grid: default_lambda_grid(),
            rho_grid: default_rho_grid(),
            vd_grid: default_vd_grid(),
            ar_sequence: default_ar_sequence(),
            r0: 1.0,
            delta0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageVerdict {
    pub stage: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundEntry {
    pub rho: f64,
    pub volume: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// (μ − lower)/lower.
    pub lower_margin: f64,
    pub implied_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem1Report {
    pub space: String,
    pub center: String,
    pub n: u32,
    pub a: f64,
    pub k_a: f64,
    pub c: f64,
    pub c0: f64,
    pub proper_declared: bool,
    pub stages: Vec<StageVerdict>,
    pub vd: Option<VdReport>,
    pub ar: Option<ArReport>,
    pub finiteness_ratio_max: Option<f64>,
    pub comparison: Option<ComparisonVerdict>,
    pub bounds: Vec<BoundEntry>,
    /// Relative distance of μ from the lower bound, max over the ρ-grid.
    pub lower_bound_tightness: Option<f64>,
    /// Whether implied C strictly increases across the ρ-grid.
    pub implied_c_increasing: bool,
    pub s0_estimate: Option<f64>,
    pub diagnostic: Option<ContradictionDiagnostic>,
    pub all_passed: bool,
}

fn stage(stages: &mut Vec<StageVerdict>, name: &str, passed: bool, detail: String) {
    stages.push(StageVerdict { stage: name.into(), passed, detail });
}

/// Runs the doubling and small-ball audits, the Q̃ ≤ C0·Q_E guard, the
/// comparison, and both volume bounds, collecting every stage's verdict.
pub fn theorem1_pipeline(
    space: &MetricMeasureSpace,
    params: &CknParams,
    config: &PipelineConfig,
) -> Result<Theorem1Report> {
    if !space.unbounded {
        return Err(CknError::domain(format!(
            "space {} is flagged bounded; the volume-growth theorem needs an unbounded space",
            space.name
        )));
    }
    let k = check_c(params, config.c)?;
    let (c, c0, n) = (config.c, config.c0, params.n);
    if !(c0 >= 1.0) {
        return Err(CknError::domain(format!("C0 = {c0} must be >= 1")));
    }
    let mut stages = Vec::new();
    let mut report = Theorem1Report {
        space: space.name.clone(),
        center: space.center.clone(),
        n,
        a: params.a,
        k_a: k,
        c,
        c0,
        proper_declared: space.proper,
        stages: Vec::new(),
        vd: None,
        ar: None,
        finiteness_ratio_max: None,
        comparison: None,
        bounds: Vec::new(),
        lower_bound_tightness: None,
        implied_c_increasing: false,
        s0_estimate: None,
        diagnostic: None,
        all_passed: false,
    };

    match check_vd(space, n, c0, &config.vd_grid) {
        Ok(vd) => {
            stage(&mut stages, "volume_doubling", vd.passes, format!("max statistic {:.12e} vs C0 {c0}", vd.max_statistic));
            report.vd = Some(vd);
        }
        Err(e) => stage(&mut stages, "volume_doubling", false, e.to_string()),
    }
    match check_ar(space, n, &config.ar_sequence) {
        Ok(ar) => {
            stage(&mut stages, "ahlfors_small_balls", ar.passes, format!("liminf ratio {:.12e}, window {:.6e}", ar.liminf_estimate, ar.ahlfors_window));
            report.ar = Some(ar);
        }
        Err(e) => stage(&mut stages, "ahlfors_small_balls", false, e.to_string()),
    }

    // Q̃ ≤ C0·Q_E on the λ-grid.
    let mut finiteness: Result<f64> = Ok(0.0);
    for &lambda in &config.lambda_grid {
        finiteness = finiteness.and_then(|worst| {
            let qt = q_tilde(space, params, lambda)?;
            let qe = q_e(params, lambda)?;
            Ok(worst.max(qt.value / (c0 * qe.value)))
        });
    }
    match finiteness {
        Ok(r) => {
            stage(&mut stages, "q_tilde_finite", r <= 1.0 + COMPARISON_SLACK, format!("max Q~/(C0 Q_E) = {r:.12e}"));
            report.finiteness_ratio_max = Some(r);
        }
        Err(e) => stage(&mut stages, "q_tilde_finite", false, e.to_string()),
    }

    match verify_comparison(space, params, c, &config.lambda_grid) {
        Ok(v) => {
            let ok = v.holds && v.differential_holds;
            let mut detail = format!(
                "min relative gap {:.3e}, min differential slack {:.3e}",
                v.min_gap, v.min_differential_slack
            );
            if v.closed_limit {
                detail.push_str("; C = K_a closed limit, checked non-strictly");
            }
            stage(&mut stages, "comparison", ok, detail);
            report.comparison = Some(v);
        }
        Err(e) => stage(&mut stages, "comparison", false, e.to_string()),
    }

    let mut bound_err = None;
    for &rho in &config.rho_grid {
        let entry = (|| -> Result<BoundEntry> {
            let volume = space.volume(rho)?;
            let lower_bound = volume_lower_bound(params, c, c0, rho)?;
            Ok(BoundEntry {
                rho,
                volume,
                lower_bound,
                upper_bound: c0 * params.omega * rho.powf(params.dim()),
                lower_margin: (volume - lower_bound) / lower_bound,
                implied_c: implied_constant(params, c0, rho, volume),
            })
        })();
        match entry {
            Ok(e) => report.bounds.push(e),
            Err(e) => {
                bound_err = Some(e);
                break;
            }
        }
    }
    if let Some(e) = bound_err {
        stage(&mut stages, "lower_bound", false, e.to_string());
        stage(&mut stages, "upper_bound", false, "not evaluated".into());
    } else {
        let worst_lower = report.bounds.iter().map(|b| b.lower_margin).fold(f64::INFINITY, f64::min);
        let tight = report.bounds.iter().map(|b| b.lower_margin.abs()).fold(0.0, f64::max);
        report.lower_bound_tightness = Some(tight);
        let max_c = report.bounds.iter().map(|b| b.implied_c).fold(0.0, f64::max);
        stage(
            &mut stages,
            "lower_bound",
            worst_lower >= -BOUND_SLACK,
            format!("min margin {worst_lower:.3e}, max implied C {max_c:.6e} (K_a = {k:.6e})"),
        );
        let worst_upper = report
            .bounds
            .iter()
            .map(|b| (b.volume - b.upper_bound) / b.upper_bound)
            .fold(f64::NEG_INFINITY, f64::max);
        stage(&mut stages, "upper_bound", worst_upper <= BOUND_SLACK, format!("max excess {worst_upper:.3e}"));
        report.implied_c_increasing = report.bounds.windows(2).all(|w| w[1].implied_c > w[0].implied_c);
    }

    report.s0_estimate = space.profile.tail_law().map(|t| {
        if t.exponent < params.dim() {
            0.0
        } else if t.exponent > params.dim() {
            f64::INFINITY
        } else {
            t.coefficient / params.omega
        }
    });
    let kappa = comparison_factor(params, c);
    if let Some(s0) = report.s0_estimate {
        stage(&mut stages, "s0_claim", s0 >= kappa * (1.0 - BOUND_SLACK), format!("s0 = {s0:.6e} vs (K_a/C)^(n/(1-a)) = {kappa:.6e}"));
    }
    let delta0 = config.delta0.unwrap_or(0.5 * kappa);
    report.diagnostic = contradiction_diagnostic(params, c, c0, config.r0, delta0).ok();

    report.all_passed = stages.iter().all(|s| s.passed);
    report.stages = stages;
    Ok(report)
}

impl Theorem1Report {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "space {} at {} (n = {}, a = {}, K_a = {:.12}, C = {:.12}, C0 = {})", self.space, self.center, self.n, self.a, self.k_a, self.c, self.c0);
        let _ = writeln!(out, "{:<22} {:<6} detail", "stage", "result");
        for s in &self.stages {
            let _ = writeln!(out, "{:<22} {:<6} {}", s.stage, if s.passed { "PASS" } else { "FAIL" }, s.detail);
        }
        if !self.bounds.is_empty() {
            let _ = writeln!(out, "\n{:>12} {:>16} {:>16} {:>14}", "rho", "volume", "lower bound", "implied C");
            for b in &self.bounds {
                let _ = writeln!(out, "{:>12.4e} {:>16.8e} {:>16.8e} {:>14.6e}", b.rho, b.volume, b.lower_bound, b.implied_c);
            }
        }
        if let Some(d) = &self.diagnostic {
            let _ = writeln!(out, "\ncontradiction diagnostic: r0 = {}, delta0 = {:.4e}, M1 = {:.4e}, M2 = {:.4e}, M3 = {:.4e}, fails beyond lambda* = {:.4e}", d.r0, d.delta0, d.m1, d.m2, d.m3, d.lambda_star);
        }
        let _ = writeln!(out, "overall: {}", if self.all_passed { "PASS" } else { "FAIL" });
        out
    }

    /// lambda,q_tilde,q,gap rows.
    pub fn comparison_csv(&self) -> String {
        let mut out = String::from("lambda,q_tilde,q,gap\n");
        if let Some(v) = &self.comparison {
            for i in 0..v.lambda_grid.len() {
                let _ = writeln!(out, "{:.17e},{:.17e},{:.17e},{:.17e}", v.lambda_grid[i], v.q_tilde_values[i], v.q_values[i], v.q_tilde_values[i] - v.q_values[i]);
            }
        }
        out
    }

    /// rho,volume,lower_bound,upper_bound,implied_c rows.
    pub fn bounds_csv(&self) -> String {
        let mut out = String::from("rho,volume,lower_bound,upper_bound,implied_c\n");
        for b in &self.bounds {
            let _ = writeln!(out, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", b.rho, b.volume, b.lower_bound, b.upper_bound, b.implied_c);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::make_params;

    #[test]
    fn kernel_examples() {
        let p = make_params(3, 0.0).unwrap();
        assert!((f_kernel(&p, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((f_kernel(&p, 0.0, 1.0).unwrap() - 4.0).abs() < 1e-15);
        assert!(f_kernel(&p, 1.0, 0.0).is_err());
    }

    #[test]
    fn q_e_sign_and_scaling() {
        let p = make_params(3, 0.0).unwrap();
        let q1 = q_e(&p, 1.0).unwrap();
        let q4 = q_e(&p, 4.0).unwrap();
        assert!(q1.value > 0.0 && q1.derivative < 0.0);
        assert!((q4.value / q1.value - 0.5).abs() < 1e-9);
    }

    #[test]
    fn identity_small_grid() {
        for (n, a) in [(3, 0.0), (4, 0.3)] {
            let p = make_params(n, a).unwrap();
            let r = verify_euclidean_identity(&p, &[0.1, 1.0, 10.0]).unwrap();
            assert!(r.passes, "n={n} a={a}: {}", r.max_residual);
        }
    }

    #[test]
    fn z_inverse_examples() {
        let p = make_params(3, 0.0).unwrap();
        assert!((z_lambda_inverse(&p, 1.0, 1.0, 2.0).unwrap() - 1.0).abs() < 1e-12);
        let r = z_lambda_inverse(&p, 0.7, 1e6, 1e3).unwrap();
        assert!((r / (1e3 / 1e6) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn lower_bound_examples() {
        let p = make_params(3, 0.0).unwrap();
        let k = p.sharp_constant().value;
        let omega = p.omega;
        assert!((volume_lower_bound(&p, k, 1.0, 2.0).unwrap() - omega * 8.0).abs() < 1e-12);
        assert!((volume_lower_bound(&p, 2.0 * k, 1.0, 1.0).unwrap() - omega / 8.0).abs() < 1e-13);
        let b1 = volume_lower_bound(&p, k, 1.0, 1.0).unwrap();
        let b4 = volume_lower_bound(&p, k, 4.0, 1.0).unwrap();
        assert!((b4 / b1 - 0.25).abs() < 1e-15);
        assert!(volume_lower_bound(&p, 0.5 * k, 1.0, 1.0).is_err());
    }
}
