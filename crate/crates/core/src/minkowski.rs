//! Minkowski norms on ℝⁿ: evaluation, dual (polar) norms, unit-ball volumes
//! and the normalized measure μ_F = (ω_n / vol{F < 1}) · Lebesgue.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CknError, Result};
use crate::quadrature::{integrate_finite, QuadratureOptions};
use crate::special::{gamma, ln_gamma, unit_ball_volume};

/// Number of random starts for the dual-norm ascent.
pub const ASCENT_STARTS: usize = 32;
/// Stationarity tolerance of the ascent, relative to the dual value.
pub const ASCENT_TOL: f64 = 1e-8;
/// Random unit-sphere samples used to certify an ascent result.
pub const CERTIFY_SAMPLES: usize = 10_000;
/// Samples and tolerance of the construction-time checks on custom norms.
pub const CUSTOM_CHECK_SAMPLES: usize = 1_000;
pub const CUSTOM_CHECK_TOL: f64 = 1e-8;
/// Default Monte Carlo budget for ball volumes of custom norms.
pub const DEFAULT_MC_SAMPLES: usize = 400_000;

const CUSTOM_CHECK_SEED: u64 = 0x5eed_c4ec;

pub type NormFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A symmetric positive-definite form F(v) = √(vᵀAv), with cached inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    det: f64,
}

impl QuadraticForm {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(CknError::domain("quadratic norm needs a non-empty square matrix"));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        if (&matrix - matrix.transpose()).amax() > 1e-12 * scale {
            return Err(CknError::domain("quadratic norm matrix is not symmetric"));
        }
        let chol = matrix
            .clone()
            .cholesky()
            .ok_or_else(|| CknError::domain("quadratic norm matrix is not positive definite"))?;
        let det = chol.l_dirty().diagonal().iter().map(|d| d * d).product();
        let inverse = chol.inverse();
        Ok(QuadraticForm { matrix, inverse, det })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn determinant(&self) -> f64 {
        self.det
    }
}

fn quad_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * v[j];
        }
        s += v[i] * row;
    }
    s.max(0.0).sqrt()
}

/// A black-box norm supplied by the caller.
#[derive(Clone)]
pub struct CustomNorm {
    pub label: String,
    pub evaluator: NormFn,
    /// Caller-declared smoothness away from the origin.
    pub smooth: bool,
}

impl fmt::Debug for CustomNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomNorm").field("label", &self.label).field("smooth", &self.smooth).finish()
    }
}

#[derive(Debug, Clone)]
pub enum NormKind {
    Euclidean,
    /// ℓ^q with 1 ≤ q ≤ ∞.
    Lq(f64),
    Quadratic(QuadraticForm),
    /// F_ε(v, w) = √(|v|² + w² + ε√(|v|⁴ + w⁴)) on ℝ^{n−1} × ℝ.
    FlatExample { eps: f64 },
    Custom(CustomNorm),
}

/// An evaluable norm on ℝ^dim.
#[derive(Debug, Clone)]
pub struct MinkowskiNorm {
    dim: usize,
    kind: NormKind,
    reversible: bool,
}

/// Serializable description of the closed-form norm kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NormSpec {
    Euclidean { dim: usize },
    Lq { q: f64, dim: usize },
    Quadratic { matrix: Vec<Vec<f64>> },
    Example36 { dim: usize, eps: f64 },
}

/// A volume together with its standard error (zero for closed forms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeEstimate {
    pub value: f64,
    pub error: f64,
}

/// Result of the multi-start dual-norm ascent.
#[derive(Debug, Clone, PartialEq)]
pub struct DualAscent {
    pub value: f64,
    /// Unit-Euclidean direction attaining the value.
    pub maximizer: Vec<f64>,
    /// Best ratio α(v)/F(v) over the random certification samples.
    pub sample_best: f64,
    pub converged_starts: usize,
}

impl MinkowskiNorm {
    pub fn euclidean(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(MinkowskiNorm { dim, kind: NormKind::Euclidean, reversible: true })
    }

    pub fn lq(dim: usize, q: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(q >= 1.0) {
            return Err(CknError::domain(format!("l^q norm needs q >= 1, got {q}")));
        }
        Ok(MinkowskiNorm { dim, kind: NormKind::Lq(q), reversible: true })
    }

    pub fn quadratic(matrix: DMatrix<f64>) -> Result<Self> {
        let form = QuadraticForm::new(matrix)?;
        Ok(MinkowskiNorm { dim: form.matrix.nrows(), kind: NormKind::Quadratic(form), reversible: true })
    }

    pub fn flat_example(dim: usize, eps: f64) -> Result<Self> {
        if dim < 2 {
            return Err(CknError::domain("flat example norm needs dimension >= 2"));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(CknError::domain(format!("flat example norm needs eps > 0, got {eps}")));
        }
        Ok(MinkowskiNorm { dim, kind: NormKind::FlatExample { eps }, reversible: true })
    }

    /// Wraps a black-box evaluator after sampled positivity, homogeneity and
    /// midpoint-convexity checks.
    pub fn custom(
        dim: usize,
        label: impl Into<String>,
        evaluator: NormFn,
        reversible: bool,
        smooth: bool,
    ) -> Result<Self> {
        check_dim(dim)?;
        let norm = MinkowskiNorm {
            dim,
            kind: NormKind::Custom(CustomNorm { label: label.into(), evaluator, smooth }),
            reversible,
        };
        norm.check_axioms(CUSTOM_CHECK_SAMPLES, CUSTOM_CHECK_TOL, CUSTOM_CHECK_SEED)?;
        Ok(norm)
    }

    pub fn from_spec(spec: &NormSpec) -> Result<Self> {
        match spec {
            NormSpec::Euclidean { dim } => Self::euclidean(*dim),
            NormSpec::Lq { q, dim } => Self::lq(*dim, *q),
            NormSpec::Quadratic { matrix } => {
                let n = matrix.len();
                if matrix.iter().any(|r| r.len() != n) {
                    return Err(CknError::domain("quadratic norm matrix rows have unequal length"));
                }
                Self::quadratic(DMatrix::from_fn(n, n, |i, j| matrix[i][j]))
            }
            NormSpec::Example36 { dim, eps } => Self::flat_example(*dim, *eps),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: NormSpec =
            serde_json::from_str(text).map_err(|e| CknError::parse(e.line(), e.to_string()))?;
        Self::from_spec(&spec)
    }

    pub fn spec(&self) -> Option<NormSpec> {
        let dim = self.dim;
        match &self.kind {
            NormKind::Euclidean => Some(NormSpec::Euclidean { dim }),
            NormKind::Lq(q) => Some(NormSpec::Lq { q: *q, dim }),
            NormKind::Quadratic(f) => Some(NormSpec::Quadratic {
                matrix: (0..dim).map(|i| (0..dim).map(|j| f.matrix[(i, j)]).collect()).collect(),
            }),
            NormKind::FlatExample { eps } => Some(NormSpec::Example36 { dim, eps: *eps }),
            NormKind::Custom(_) => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &NormKind {
        &self.kind
    }

    pub fn reversible(&self) -> bool {
        self.reversible
    }

    /// Smoothness flag: ℓ¹ and ℓ^∞ are admitted but marked non-smooth.
    pub fn smooth(&self) -> bool {
        match &self.kind {
            NormKind::Lq(q) => *q > 1.0 && q.is_finite(),
            NormKind::Custom(c) => c.smooth,
            _ => true,
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            NormKind::Euclidean => "euclidean".into(),
            NormKind::Lq(q) => format!("lq:{q}"),
            NormKind::Quadratic(_) => "quadratic".into(),
            NormKind::FlatExample { eps } => format!("example36:{eps}"),
            NormKind::Custom(c) => c.label.clone(),
        }
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(CknError::domain(format!(
                "vector of length {} for a norm on R^{}",
                v.len(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn eval(&self, v: &[f64]) -> Result<f64> {
        self.check_len(v)?;
        Ok(self.eval_unchecked(v))
    }

    /// F(v) without the length check; used in hot loops.
    #[inline]
    pub fn eval_unchecked(&self, v: &[f64]) -> f64 {
        match &self.kind {
            NormKind::Euclidean => euclid(v),
            NormKind::Lq(q) => lq_norm(v, *q),
            NormKind::Quadratic(f) => quad_form(&f.matrix, v),
            NormKind::FlatExample { eps } => {
                let (head, w) = v.split_at(v.len() - 1);
                let s: f64 = head.iter().map(|x| x * x).sum();
                let w2 = w[0] * w[0];
                (s + w2 + eps * (s * s + w2 * w2).sqrt()).sqrt()
            }
            NormKind::Custom(c) => (c.evaluator)(v),
        }
    }

    /// Minkowski distance d_F(x₁, x₂) = F(x₂ − x₁).
    pub fn distance(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        self.check_len(x1)?;
        self.check_len(x2)?;
        let d: Vec<f64> = x2.iter().zip(x1).map(|(b, a)| b - a).collect();
        Ok(self.eval_unchecked(&d))
    }

    /// Whether the dual norm has a closed form.
    pub fn has_closed_form_dual(&self) -> bool {
        matches!(self.kind, NormKind::Euclidean | NormKind::Lq(_) | NormKind::Quadratic(_))
    }

    /// The dual norm as a norm, when it has a closed form.
    pub fn dual_norm(&self) -> Option<MinkowskiNorm> {
        let kind = match &self.kind {
            NormKind::Euclidean => NormKind::Euclidean,
            NormKind::Lq(q) => NormKind::Lq(conjugate_exponent(*q)),
            NormKind::Quadratic(f) => NormKind::Quadratic(QuadraticForm {
                matrix: f.inverse.clone(),
                inverse: f.matrix.clone(),
                det: 1.0 / f.det,
            }),
            _ => return None,
        };
        Some(MinkowskiNorm { dim: self.dim, kind, reversible: true })
    }

    /// F*(α) = sup_{v ≠ 0} α(v) / F(v).
    pub fn dual(&self, alpha: &[f64]) -> Result<f64> {
        self.check_len(alpha)?;
        match self.closed_form_dual(alpha) {
            Some(v) => Ok(v),
            None => Ok(self.dual_by_ascent(alpha, 0)?.value),
        }
    }

    #[inline]
    pub fn closed_form_dual(&self, alpha: &[f64]) -> Option<f64> {
        match &self.kind {
            NormKind::Euclidean => Some(euclid(alpha)),
            NormKind::Lq(q) => Some(lq_norm(alpha, conjugate_exponent(*q))),
            NormKind::Quadratic(f) => Some(quad_form(&f.inverse, alpha)),
            _ => None,
        }
    }

    /// Gradient of F at v ≠ 0 (analytic where available, central differences otherwise).
    pub fn gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        let f = self.eval_unchecked(v);
        if f == 0.0 {
            return Err(CknError::domain("norm gradient undefined at the origin"));
        }
        Ok(match &self.kind {
            NormKind::Euclidean => v.iter().map(|x| x / f).collect(),
            NormKind::Lq(q) if *q > 1.0 && q.is_finite() => v
                .iter()
                .map(|x| x.signum() * (x.abs() / f).powf(q - 1.0))
                .collect(),
            NormKind::Quadratic(form) => {
                let n = self.dim;
                (0..n)
                    .map(|i| (0..n).map(|j| form.matrix[(i, j)] * v[j]).sum::<f64>() / f)
                    .collect()
            }
            _ => self.numeric_gradient(v),
        })
    }

    fn numeric_gradient(&self, v: &[f64]) -> Vec<f64> {
        let scale = euclid(v).max(f64::MIN_POSITIVE);
        let h = 1e-6 * scale;
        let mut x = v.to_vec();
        (0..v.len())
            .map(|i| {
                let orig = x[i];
                x[i] = orig + h;
                let fp = self.eval_unchecked(&x);
                x[i] = orig - h;
                let fm = self.eval_unchecked(&x);
                x[i] = orig;
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    /// Maximizes α(u)/F(u) over the unit sphere by projected gradient ascent
    /// from several starts, then certifies the result against random samples.
    pub fn dual_by_ascent(&self, alpha: &[f64], seed: u64) -> Result<DualAscent> {
        self.check_len(alpha)?;
        let n = self.dim;
        let alpha_len = euclid(alpha);
        if alpha_len == 0.0 {
            return Ok(DualAscent {
                value: 0.0,
                maximizer: unit_vector(n, 0),
                sample_best: 0.0,
                converged_starts: ASCENT_STARTS,
            });
        }
        let phi = |u: &[f64]| dot(alpha, u) / self.eval_unchecked(u);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut best_value = f64::NEG_INFINITY;
        let mut best_u = alpha.iter().map(|a| a / alpha_len).collect::<Vec<_>>();
        let mut converged_starts = 0;
        for start in 0..ASCENT_STARTS {
            let u0 = if start == 0 {
                best_u.clone()
            } else {
                random_unit(&mut rng, n)
            };
            let (u, value, converged) = self.ascend(alpha, u0);
            converged_starts += converged as usize;
            if value > best_value {
                best_value = value;
                best_u = u;
            }
        }

        let mut sample_best = f64::NEG_INFINITY;
        for _ in 0..CERTIFY_SAMPLES {
            let u = random_unit(&mut rng, n);
            sample_best = sample_best.max(phi(&u));
        }
        if converged_starts == 0 || best_value < sample_best * (1.0 - ASCENT_TOL) {
            return Err(CknError::Numeric {
                message: format!(
                    "dual-norm ascent did not converge ({converged_starts} of {ASCENT_STARTS} starts)"
                ),
                best: best_value.max(sample_best),
            });
        }
        Ok(DualAscent { value: best_value, maximizer: best_u, sample_best, converged_starts })
    }

    fn ascend(&self, alpha: &[f64], mut u: Vec<f64>) -> (Vec<f64>, f64, bool) {
        let n = self.dim;
        let phi = |u: &[f64]| dot(alpha, u) / self.eval_unchecked(u);
        let mut value = phi(&u);
        let mut step = 0.5;
        for _ in 0..4000 {
            let f = self.eval_unchecked(&u);
            let grad_f = self.gradient(&u).unwrap_or_else(|_| vec![0.0; n]);
            let au = dot(alpha, &u);
            let mut g: Vec<f64> = (0..n).map(|i| alpha[i] / f - au * grad_f[i] / (f * f)).collect();
            let radial = dot(&g, &u);
            for (gi, ui) in g.iter_mut().zip(&u) {
                *gi -= radial * ui;
            }
            let gnorm = euclid(&g);
            if gnorm <= ASCENT_TOL * value.abs().max(f64::MIN_POSITIVE) {
                return (u, value, true);
            }
            let mut accepted = false;
            while step > 1e-14 {
                let trial = normalize(&u.iter().zip(&g).map(|(a, b)| a + step * b / gnorm).collect::<Vec<_>>());
                let tv = phi(&trial);
                if tv > value {
                    u = trial;
                    value = tv;
                    step = (step * 1.5).min(1.0);
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // Step underflow at a non-stationary point: the objective is flat
                // to machine precision here.
                return (u, value, gnorm <= 1e-5 * value.abs());
            }
        }
        (u, value, false)
    }

    /// Sampled check of positivity, homogeneity and midpoint convexity.
    pub fn check_axioms(&self, samples: usize, tol: f64, seed: u64) -> Result<()> {
        let n = self.dim;
        let zero = vec![0.0; n];
        let f0 = self.eval_unchecked(&zero);
        if f0 != 0.0 {
            return Err(CknError::domain(format!("norm check: F(0) = {f0} != 0")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let v = random_gaussian(&mut rng, n);
            let w = random_gaussian(&mut rng, n);
            let (fv, fw) = (self.eval_unchecked(&v), self.eval_unchecked(&w));
            if !(fv > 0.0 && fw > 0.0 && fv.is_finite() && fw.is_finite()) {
                return Err(CknError::domain("norm check: F(v) must be positive and finite for v != 0"));
            }
            let t: f64 = if self.reversible { rng.random_range(-3.0..3.0) } else { rng.random_range(0.0..3.0) };
            let tv: Vec<f64> = v.iter().map(|x| t * x).collect();
            let ftv = self.eval_unchecked(&tv);
            if (ftv - t.abs() * fv).abs() > tol * (t.abs() * fv).max(f64::MIN_POSITIVE) {
                return Err(CknError::domain(format!("norm check: homogeneity fails, F(tv) = {ftv}, |t|F(v) = {}", t.abs() * fv)));
            }
            let mid: Vec<f64> = v.iter().zip(&w).map(|(a, b)| 0.5 * (a + b)).collect();
            let fm = self.eval_unchecked(&mid);
            if fm > 0.5 * (fv + fw) + tol * (fv + fw) {
                return Err(CknError::domain(format!("norm check: convexity fails, F(mid) = {fm} > {}", 0.5 * (fv + fw))));
            }
        }
        Ok(())
    }

    /// Lebesgue volume of {F < 1}: closed forms for Euclidean, quadratic and
    /// ℓ^q, a 1D quadrature for the flat example, Monte Carlo otherwise.
    pub fn unit_ball_volume(&self, seed: u64) -> Result<VolumeEstimate> {
        let n = self.dim;
        let exact = |value| Ok(VolumeEstimate { value, error: 0.0 });
        match &self.kind {
            NormKind::Euclidean => exact(unit_ball_volume(n as u32)?),
            NormKind::Quadratic(f) => exact(unit_ball_volume(n as u32)? / f.det.sqrt()),
            NormKind::Lq(q) => exact(lq_ball_volume(n, *q)),
            NormKind::FlatExample { .. } => self.axial_volume(),
            NormKind::Custom(_) => self.monte_carlo_volume(DEFAULT_MC_SAMPLES, seed),
        }
    }

    /// Ball volume of a norm depending only on (|v|, w), v ∈ ℝ^{n−1}:
    /// (1/n) |S^{n−2}| ∫₀^π F(sin ψ, cos ψ)^{−n} sin^{n−2} ψ dψ.
    fn axial_volume(&self) -> Result<VolumeEstimate> {
        let n = self.dim;
        let sphere = if n == 2 { 2.0 } else { (n - 1) as f64 * unit_ball_volume(n as u32 - 1)? };
        let g = |psi: f64| {
            let mut x = vec![0.0; n];
            x[0] = psi.sin();
            x[n - 1] = psi.cos();
            self.eval_unchecked(&x).powi(-(n as i32)) * psi.sin().powi(n as i32 - 2)
        };
        let r = integrate_finite(g, 0.0, std::f64::consts::PI, &QuadratureOptions::with_rel_tol(1e-13))?;
        Ok(VolumeEstimate { value: sphere * r.value / n as f64, error: sphere * r.abs_error_estimate / n as f64 })
    }

    /// Monte Carlo volume ω_n · E[F(θ)^{−n}] with θ uniform on the sphere,
    /// stratified by orthant. Each stratum draws from its own ChaCha stream,
    /// so results depend only on `seed` and the sample budget.
    pub fn monte_carlo_volume(&self, samples: usize, seed: u64) -> Result<VolumeEstimate> {
        let n = self.dim;
        if n > 10 {
            return Err(CknError::domain("Monte Carlo volume supports dimension <= 10"));
        }
        let strata = 1usize << n;
        let per = (samples / strata).max(2);
        let omega = unit_ball_volume(n as u32)?;
        let mut mean_sum = 0.0;
        let mut var_sum = 0.0;
        for s in 0..strata {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let mut acc = 0.0;
            let mut acc2 = 0.0;
            for _ in 0..per {
                let mut u = random_unit(&mut rng, n);
                for (i, ui) in u.iter_mut().enumerate() {
                    let sign = if (s >> i) & 1 == 1 { -1.0 } else { 1.0 };
                    *ui = sign * ui.abs();
                }
                let g = self.eval_unchecked(&u).powi(-(n as i32));
                acc += g;
                acc2 += g * g;
            }
            let m = acc / per as f64;
            let var = (acc2 / per as f64 - m * m).max(0.0) * per as f64 / (per - 1) as f64;
            mean_sum += m;
            var_sum += var / per as f64;
        }
        let value = omega * mean_sum / strata as f64;
        let error = omega * var_sum.sqrt() / strata as f64;
        Ok(VolumeEstimate { value, error })
    }

    pub fn normalized_measure(&self, seed: u64) -> Result<NormalizedMeasure> {
        NormalizedMeasure::new(self.clone(), seed)
    }
}

/// Lebesgue measure rescaled so the unit F-ball has measure ω_n.
#[derive(Debug, Clone)]
pub struct NormalizedMeasure {
    pub norm: MinkowskiNorm,
    pub scale: f64,
    /// Propagated standard error of `scale`.
    pub scale_error: f64,
}

impl NormalizedMeasure {
    pub fn new(norm: MinkowskiNorm, seed: u64) -> Result<Self> {
        let omega = unit_ball_volume(norm.dim() as u32)?;
        let vol = norm.unit_ball_volume(seed)?;
        let scale = omega / vol.value;
        Ok(NormalizedMeasure { scale, scale_error: scale * vol.error / vol.value, norm })
    }

    /// μ_F(B_F(0, ρ)) = scale · vol{F < 1} · ρⁿ.
    pub fn ball_measure(&self, rho: f64) -> Result<f64> {
        let vol = self.norm.unit_ball_volume(0)?;
        Ok(self.scale * vol.value * rho.powi(self.norm.dim() as i32))
    }
}

/// Closed-form dual exponent q′ with 1/q + 1/q′ = 1.
pub fn conjugate_exponent(q: f64) -> f64 {
    if q == 1.0 {
        f64::INFINITY
    } else if q.is_infinite() {
        1.0
    } else {
        q / (q - 1.0)
    }
}

/// (2Γ(1 + 1/q))ⁿ / Γ(1 + n/q).
pub fn lq_ball_volume(n: usize, q: f64) -> f64 {
    if q.is_infinite() {
        return 2f64.powi(n as i32);
    }
    let nf = n as f64;
    (nf * (2.0 * gamma(1.0 + 1.0 / q)).ln() - ln_gamma(1.0 + nf / q)).exp()
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(CknError::domain("norm dimension must be >= 1"));
    }
    Ok(())
}

#[inline]
fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
fn lq_norm(v: &[f64], q: f64) -> f64 {
    if q == 2.0 {
        euclid(v)
    } else if q == 4.0 {
        v.iter().map(|x| (x * x) * (x * x)).sum::<f64>().sqrt().sqrt()
    } else if q == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else if q.is_infinite() {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    } else if (q - 4.0 / 3.0).abs() < 1e-15 {
        v.iter().map(|x| x.abs().cbrt().powi(4)).sum::<f64>().powf(0.75)
    } else {
        let m = v.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        if m == 0.0 {
            return 0.0;
        }
        m * v.iter().map(|x| (x.abs() / m).powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let l = euclid(v);
    v.iter().map(|x| x / l).collect()
}

fn unit_vector(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

pub(crate) fn random_gaussian<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub(crate) fn random_unit<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v = random_gaussian(rng, n);
        let l = euclid(&v);
        if l > 1e-12 {
            return v.iter().map(|x| x / l).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn eval_examples() {
        let e = MinkowskiNorm::euclidean(2).unwrap();
        assert_eq!(e.eval(&[3.0, 4.0]).unwrap(), 5.0);
        let l1 = MinkowskiNorm::lq(3, 1.0).unwrap();
        assert_eq!(l1.eval(&[1.0, -2.0, 3.0]).unwrap(), 6.0);
        let q = MinkowskiNorm::quadratic(DMatrix::identity(3, 3)).unwrap();
        assert!((q.eval(&[1.0, 2.0, 2.0]).unwrap() - 3.0).abs() < 1e-15);
        assert!(e.eval(&[1.0]).is_err());
        assert!(!l1.smooth());
        assert!(MinkowskiNorm::lq(3, 4.0).unwrap().smooth());
    }

    #[test]
    fn dual_examples() {
        let e = MinkowskiNorm::euclidean(2).unwrap();
        assert_eq!(e.dual(&[3.0, 4.0]).unwrap(), 5.0);
        let l4 = MinkowskiNorm::lq(3, 4.0).unwrap();
        let alpha = [0.3, -1.2, 0.7];
        let closed = l4.dual(&alpha).unwrap();
        let direct: f64 = alpha.iter().map(|a: &f64| a.abs().powf(4.0 / 3.0)).sum::<f64>().powf(0.75);
        assert!((closed - direct).abs() < 1e-14);
        let ascent = l4.dual_by_ascent(&alpha, 3).unwrap();
        assert!(((ascent.value - closed) / closed).abs() < 1e-8, "{} vs {}", ascent.value, closed);
    }

    #[test]
    fn volumes() {
        let e = MinkowskiNorm::euclidean(3).unwrap();
        assert!((e.unit_ball_volume(0).unwrap().value - 4.0 * PI / 3.0).abs() < 1e-14);
        let l1 = MinkowskiNorm::lq(2, 1.0).unwrap();
        assert!((l1.unit_ball_volume(0).unwrap().value - 2.0).abs() < 1e-13);
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 2.0]));
        let q = MinkowskiNorm::quadratic(m).unwrap();
        let mu = q.normalized_measure(0).unwrap();
        assert!((mu.scale - 2.0).abs() < 1e-14);
    }

    #[test]
    fn lq4_monte_carlo_matches_dirichlet() {
        let l4 = MinkowskiNorm::lq(3, 4.0).unwrap();
        let exact = lq_ball_volume(3, 4.0);
        let oracle = (2.0 * gamma(1.25)).powi(3) / gamma(1.75);
        assert!((exact - oracle).abs() < 1e-13);
        let mc = l4.monte_carlo_volume(200_000, 11).unwrap();
        assert!((mc.value - exact).abs() < 3.0 * mc.error, "{mc:?} vs {exact}");
        let again = l4.monte_carlo_volume(200_000, 11).unwrap();
        assert_eq!(mc, again);
    }

    #[test]
    fn flat_example_volume_matches_monte_carlo() {
        let f = MinkowskiNorm::flat_example(3, 0.7).unwrap();
        f.check_axioms(1000, 1e-8, 1).unwrap();
        let q = f.unit_ball_volume(0).unwrap();
        let mc = f.monte_carlo_volume(200_000, 5).unwrap();
        assert!((q.value - mc.value).abs() < 4.0 * mc.error, "{q:?} vs {mc:?}");
    }

    #[test]
    fn custom_checks_reject_non_norms() {
        let bad: NormFn = Arc::new(|v: &[f64]| v.iter().map(|x| x * x).sum::<f64>());
        assert!(MinkowskiNorm::custom(3, "square", bad, true, true).is_err());
        let nonconvex: NormFn =
            Arc::new(|v: &[f64]| v.iter().map(|x| x.abs().sqrt()).sum::<f64>().powi(2));
        assert!(MinkowskiNorm::custom(3, "l_half", nonconvex, true, false).is_err());
        let good: NormFn = Arc::new(|v: &[f64]| lq_norm(v, 3.0));
        assert!(MinkowskiNorm::custom(3, "l3", good, true, true).is_ok());
    }

    #[test]
    fn spec_round_trip() {
        let n = MinkowskiNorm::from_json(r#"{"kind":"lq","q":4,"dim":3}"#).unwrap();
        assert_eq!(n.dim(), 3);
        assert!(matches!(n.kind(), NormKind::Lq(q) if *q == 4.0));
        let text = serde_json::to_string(&n.spec().unwrap()).unwrap();
        let back = MinkowskiNorm::from_json(&text).unwrap();
        assert_eq!(back.spec(), n.spec());
        let q = MinkowskiNorm::from_json(r#"{"kind":"quadratic","matrix":[[2,0],[0,1]]}"#).unwrap();
        assert_eq!(q.dim(), 2);
        assert!(MinkowskiNorm::from_json(r#"{"kind":"quadratic","matrix":[[1,2],[2,1]]}"#).is_err());
        assert!(MinkowskiNorm::from_json(r#"{"kind":"nope"}"#).is_err());
    }
}
