//! Adaptive Gauss–Kronrod quadrature on finite intervals and on (0, ∞).
//!
//! The base rule is the 10-point Gauss / 21-point Kronrod pair with the
//! QUADPACK error rescaling. Subintervals live in a max-heap keyed by their
//! error estimate and the worst one is bisected until the summed error meets
//! the tolerance.
//!
//! Improper integrals are split at a caller-supplied scale `b`. A declared
//! power behaviour ρ^z near zero is removed with ρ = b·t^{1/(z+1)}; a
//! declared decay ρ^e at infinity is removed with ρ = b·t^{1/(e+1)}. Without
//! a tail hint the map ρ = b/(1 − t) is used.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::{CknError, Result};

pub const DEFAULT_REL_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_SUBDIVISIONS: usize = 20_000;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Outcome of a quadrature call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

impl QuadratureResult {
    fn combine(self, other: QuadratureResult) -> QuadratureResult {
        QuadratureResult {
            value: self.value + other.value,
            abs_error_estimate: self.abs_error_estimate + other.abs_error_estimate,
            evaluations: self.evaluations + other.evaluations,
        }
    }

    pub fn scaled(self, factor: f64) -> QuadratureResult {
        QuadratureResult {
            value: self.value * factor,
            abs_error_estimate: self.abs_error_estimate * factor.abs(),
            evaluations: self.evaluations,
        }
    }
}

/// How the tail [b, ∞) is mapped onto a finite interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailStrategy {
    /// Power substitution when a tail hint exists, rational map otherwise.
    #[default]
    Auto,
    PowerSubstitution,
    Rational,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    pub tail: TailStrategy,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            rel_tol: DEFAULT_REL_TOL,
            max_subdivisions: DEFAULT_MAX_SUBDIVISIONS,
            tail: TailStrategy::Auto,
        }
    }
}

impl QuadratureOptions {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadratureOptions { rel_tol, ..Default::default() }
    }
}

/// A function on (0, ∞) together with its asymptotic hints.
#[derive(Clone)]
pub struct Integrand<F> {
    pub evaluator: F,
    /// Exponent z with f(ρ) ~ ρ^z as ρ → 0; must exceed −1.
    pub zero_exponent: Option<f64>,
    /// Exponent e with f(ρ) ~ ρ^e as ρ → ∞; must be below −1.
    pub tail_exponent_hint: Option<f64>,
    /// Split point between head and tail, ideally the integrand's natural scale.
    pub scale: f64,
}

impl<F: Fn(f64) -> f64> Integrand<F> {
    pub fn new(evaluator: F) -> Self {
        Integrand { evaluator, zero_exponent: None, tail_exponent_hint: None, scale: 1.0 }
    }

    pub fn singular_at_zero(mut self, exponent: f64) -> Self {
        self.zero_exponent = Some(exponent);
        self
    }

    pub fn tail(mut self, exponent: f64) -> Self {
        self.tail_exponent_hint = Some(exponent);
        self
    }

    pub fn scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn singular(&self) -> bool {
        self.zero_exponent.is_some_and(|z| z < 0.0)
    }
}

fn check_rel_tol(rel_tol: f64) -> Result<()> {
    if !(rel_tol > 1e-14 && rel_tol < 1e-2) {
        return Err(CknError::domain(format!("rel_tol = {rel_tol} outside (1e-14, 1e-2)")));
    }
    Ok(())
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

/// One GK21 application on [a, b]: (integral, error estimate).
fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_g = 0.0;
    let mut res_k = fc * WGK[10];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..5 {
        let jtw = 2 * j + 1;
        let dx = half * XGK[jtw];
        let (f1, f2) = (f(center - dx), f(center + dx));
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        res_g += WG[j] * (f1 + f2);
        res_k += WGK[jtw] * (f1 + f2);
        res_abs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    for j in 0..5 {
        let jtwm1 = 2 * j;
        let dx = half * XGK[jtwm1];
        let (f1, f2) = (f(center - dx), f(center + dx));
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        res_k += WGK[jtwm1] * (f1 + f2);
        res_abs += WGK[jtwm1] * (f1.abs() + f2.abs());
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let err = (res_k - res_g) * half;
    let habs = half.abs();
    (res_k * half, rescale_error(err, res_abs * habs, res_asc * habs))
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive GK21 integration of `f` over [a, b].
pub fn integrate_finite<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    opts: &QuadratureOptions,
) -> Result<QuadratureResult> {
    check_rel_tol(opts.rel_tol)?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(CknError::domain("integrate_finite needs finite limits"));
    }
    if a == b {
        return Ok(QuadratureResult { value: 0.0, abs_error_estimate: 0.0, evaluations: 1 });
    }
    adaptive(&f, a, b, opts.rel_tol, opts.max_subdivisions)
}

fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_subdivisions: usize,
) -> Result<QuadratureResult> {
    let (v, e) = gk21(f, a, b);
    let mut evaluations = 21;
    if !v.is_finite() {
        return Err(CknError::Numeric {
            message: format!("integrand not finite on [{a}, {b}]"),
            best: v,
        });
    }
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let mut total = v;
    let mut total_err = e;
    let mut subdivisions = 1;
    loop {
        if total_err <= rel_tol * total.abs() || total_err == 0.0 {
            break;
        }
        if subdivisions >= max_subdivisions {
            return Err(CknError::Convergence {
                message: format!("no convergence after {subdivisions} subdivisions"),
                estimate: total,
                error_bound: total_err,
            });
        }
        let worst = heap.pop().expect("heap never empties");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a.min(worst.b) && mid < worst.a.max(worst.b)) {
            // Interval exhausted at machine resolution; what remains is round-off.
            return Err(CknError::Convergence {
                message: "subinterval below machine resolution".into(),
                estimate: total,
                error_bound: total_err,
            });
        }
        let (v1, e1) = gk21(f, worst.a, mid);
        let (v2, e2) = gk21(f, mid, worst.b);
        evaluations += 42;
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(CknError::Numeric {
                message: format!("integrand not finite near {mid}"),
                best: total,
            });
        }
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
        subdivisions += 1;
        // Refresh the running sums now and then to shed accumulated drift.
        if subdivisions % 512 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
    let value: f64 = heap.iter().map(|s| s.value).sum();
    let abs_error_estimate: f64 = heap.iter().map(|s| s.error).sum();
    Ok(QuadratureResult { value, abs_error_estimate, evaluations })
}

/// ∫₀^∞ f(ρ) dρ with relative tolerance `rel_tol`.
pub fn integrate_improper<F: Fn(f64) -> f64>(f: &Integrand<F>, rel_tol: f64) -> Result<QuadratureResult> {
    integrate_improper_with(f, &QuadratureOptions::with_rel_tol(rel_tol))
}

pub fn integrate_improper_with<F: Fn(f64) -> f64>(
    f: &Integrand<F>,
    opts: &QuadratureOptions,
) -> Result<QuadratureResult> {
    check_rel_tol(opts.rel_tol)?;
    if let Some(e) = f.tail_exponent_hint {
        if !(e < -1.0) {
            return Err(CknError::domain(format!("tail exponent {e} >= -1 is not integrable at infinity")));
        }
    }
    if let Some(z) = f.zero_exponent {
        if !(z > -1.0) {
            return Err(CknError::domain(format!("zero exponent {z} <= -1 is not integrable at 0")));
        }
    }
    if !(f.scale > 0.0 && f.scale.is_finite()) {
        return Err(CknError::domain(format!("split scale {} must be positive", f.scale)));
    }
    let head = integrate_head(f, f.scale, opts)?;
    let tail = integrate_tail(f, f.scale, opts)?;
    Ok(head.combine(tail))
}

/// ∫₀^b f(ρ) dρ honouring the zero-exponent hint.
pub fn integrate_head<F: Fn(f64) -> f64>(
    f: &Integrand<F>,
    b: f64,
    opts: &QuadratureOptions,
) -> Result<QuadratureResult> {
    check_rel_tol(opts.rel_tol)?;
    let ev = &f.evaluator;
    match f.zero_exponent {
        Some(z) if z != 0.0 => {
            let k = 1.0 / (z + 1.0);
            let g = |t: f64| {
                if t <= 0.0 {
                    return 0.0;
                }
                let rho = b * t.powf(k);
                ev(rho) * b * k * t.powf(k - 1.0)
            };
            adaptive(&g, 0.0, 1.0, opts.rel_tol, opts.max_subdivisions)
        }
        _ => adaptive(ev, 0.0, b, opts.rel_tol, opts.max_subdivisions),
    }
}

/// ∫_b^∞ f(ρ) dρ according to the tail strategy.
pub fn integrate_tail<F: Fn(f64) -> f64>(
    f: &Integrand<F>,
    b: f64,
    opts: &QuadratureOptions,
) -> Result<QuadratureResult> {
    check_rel_tol(opts.rel_tol)?;
    let ev = &f.evaluator;
    let power = match (opts.tail, f.tail_exponent_hint) {
        (TailStrategy::Rational, _) | (TailStrategy::Auto, None) => None,
        (_, Some(e)) => Some(e),
        (TailStrategy::PowerSubstitution, None) => {
            return Err(CknError::domain("power tail substitution needs a tail exponent"));
        }
    };
    match power {
        Some(e) => {
            let k = 1.0 / (e + 1.0);
            let g = |t: f64| {
                if t <= 0.0 {
                    return 0.0;
                }
                let rho = b * t.powf(k);
                if !rho.is_finite() {
                    return 0.0;
                }
                ev(rho) * b * (-k) * t.powf(k - 1.0)
            };
            adaptive(&g, 0.0, 1.0, opts.rel_tol, opts.max_subdivisions)
        }
        None => {
            let g = |t: f64| {
                if t >= 1.0 {
                    return 0.0;
                }
                let u = 1.0 - t;
                ev(b / u) * b / (u * u)
            };
            adaptive(&g, 0.0, 1.0, opts.rel_tol, opts.max_subdivisions)
        }
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1], by Newton iteration on the
/// three-term Legendre recurrence.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "Gauss-Legendre order must be positive");
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            x = 0.0;
            dp = 1.0;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// A fixed Gauss–Legendre rule mapped to arbitrary intervals.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        GaussLegendre { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(c + h * x))
            .sum::<f64>()
            * h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// A λ-parametrised integrand on (0, upper) with its caller-supplied
/// analytic λ-derivative.
pub struct ParametricIntegrand<F, D> {
    pub family: F,
    pub derivative: D,
    pub zero_exponent: Option<f64>,
    pub tail_exponent_hint: Option<f64>,
    pub scale: f64,
    /// Finite upper limit, or `None` for ∞.
    pub upper: Option<f64>,
}

impl<F, D> ParametricIntegrand<F, D>
where
    F: Fn(f64, f64) -> f64,
    D: Fn(f64, f64) -> f64,
{
    fn integrate<G: Fn(f64) -> f64>(&self, g: G, opts: &QuadratureOptions) -> Result<QuadratureResult> {
        match self.upper {
            Some(upper) => integrate_finite(g, 0.0, upper, opts),
            None => {
                let integrand = Integrand {
                    evaluator: g,
                    zero_exponent: self.zero_exponent,
                    tail_exponent_hint: self.tail_exponent_hint,
                    scale: self.scale,
                };
                integrate_improper_with(&integrand, opts)
            }
        }
    }

    /// ∫ family(λ, ρ) dρ.
    pub fn integrate_family(&self, lambda: f64, rel_tol: f64) -> Result<QuadratureResult> {
        self.integrate(|rho| (self.family)(lambda, rho), &QuadratureOptions::with_rel_tol(rel_tol))
    }
}

/// d/dλ ∫ family(λ, ρ) dρ computed as ∫ ∂_λ family(λ, ρ) dρ.
pub fn differentiate_under_integral<F, D>(
    integrand: &ParametricIntegrand<F, D>,
    lambda: f64,
    rel_tol: f64,
) -> Result<QuadratureResult>
where
    F: Fn(f64, f64) -> f64,
    D: Fn(f64, f64) -> f64,
{
    if !(lambda > 0.0) {
        return Err(CknError::domain(format!("lambda = {lambda} must be positive")));
    }
    integrand.integrate(
        |rho| (integrand.derivative)(lambda, rho),
        &QuadratureOptions::with_rel_tol(rel_tol),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn exponential() {
        let f = Integrand::new(|r: f64| (-r).exp());
        let r = integrate_improper(&f, 1e-10).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
        assert!(r.evaluations > 0);
    }

    #[test]
    fn inverse_sqrt_singularity() {
        let f = Integrand::new(|r: f64| r.powf(-0.5) * (-r).exp()).singular_at_zero(-0.5);
        let r = integrate_improper(&f, 1e-10).unwrap();
        assert!((r.value - PI.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn bad_tolerance_and_tail() {
        let f = Integrand::new(|r: f64| (-r).exp());
        assert!(integrate_improper(&f, 0.5).is_err());
        assert!(integrate_improper(&f, 1e-16).is_err());
        let g = Integrand::new(|r: f64| 1.0 / (1.0 + r)).tail(-1.0);
        assert!(matches!(integrate_improper(&g, 1e-8), Err(CknError::Domain(_))));
    }

    #[test]
    fn non_convergent_reports_best() {
        let f = Integrand::new(|r: f64| 1.0 / (1.0 + r));
        let opts = QuadratureOptions { max_subdivisions: 50, ..QuadratureOptions::with_rel_tol(1e-10) };
        match integrate_improper_with(&f, &opts) {
            Err(CknError::Convergence { estimate, error_bound, .. }) => {
                assert!(estimate.is_finite() && error_bound > 0.0)
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn zero_integrand() {
        let f = Integrand::new(|_: f64| 0.0).tail(-2.0);
        assert_eq!(integrate_improper(&f, 1e-10).unwrap().value, 0.0);
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        for order in [1, 2, 5, 16, 32, 64] {
            let (x, w) = gauss_legendre(order);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            for deg in 0..(2 * order) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "order {order} degree {deg}");
            }
        }
        let gl = GaussLegendre::new(20);
        assert!((gl.integrate(|x| x.sin(), 0.0, PI) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn derivative_example() {
        let p = ParametricIntegrand {
            family: |l: f64, r: f64| (l + r).powi(-2),
            derivative: |l: f64, r: f64| -2.0 * (l + r).powi(-3),
            zero_exponent: None,
            tail_exponent_hint: None,
            scale: 1.0,
            upper: Some(1.0),
        };
        let d = differentiate_under_integral(&p, 1.0, 1e-12).unwrap();
        assert!((d.value + 0.75).abs() < 1e-12);
    }
}
