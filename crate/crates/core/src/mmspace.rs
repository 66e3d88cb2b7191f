//! Metric measure spaces seen from a base point x₀ through the volume
//! profile ρ ↦ μ(B(x₀, ρ)), with auditors for volume doubling and the
//! small-ball Ahlfors condition, and a few built-in spaces.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CknError, Result};
use crate::interp::Pchip;
use crate::minkowski::{random_gaussian, random_unit, MinkowskiNorm};
use crate::quadrature::GaussLegendre;
use crate::special::{unit_ball_volume, unit_sphere_area};

/// Slack applied to the doubling constant before declaring failure.
pub const VD_SLACK: f64 = 1e-9;
/// Default tolerance of the small-ball ratio test.
pub const AR_TOL: f64 = 1e-3;

/// Sampled volume data with monotone cubic interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledProfile {
    interp: Pchip,
    head_exponent: f64,
    tail: Option<PowerLaw>,
}

/// c·ρ^k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLaw {
    pub coefficient: f64,
    pub exponent: f64,
}

impl PowerLaw {
    pub fn eval(&self, rho: f64) -> f64 {
        self.coefficient * rho.powf(self.exponent)
    }
}

impl SampledProfile {
    /// Validates the samples: radii strictly increasing and positive,
    /// volumes positive and non-decreasing.
    pub fn new(samples: &[(f64, f64)], tail: Option<PowerLaw>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(CknError::InsufficientData("a sampled profile needs at least two rows".into()));
        }
        for (i, &(rho, vol)) in samples.iter().enumerate() {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(CknError::domain(format!("sample {i}: radius {rho} must be positive")));
            }
            if !(vol > 0.0 && vol.is_finite()) {
                return Err(CknError::domain(format!("sample {i}: volume {vol} must be positive")));
            }
            if i > 0 {
                let (r0, v0) = samples[i - 1];
                if rho <= r0 {
                    return Err(CknError::domain(format!("sample {i}: radii must increase strictly")));
                }
                if vol < v0 {
                    return Err(CknError::domain(format!("sample {i}: volume decreases")));
                }
            }
        }
        if let Some(t) = tail {
            if !(t.coefficient > 0.0 && t.exponent.is_finite()) {
                return Err(CknError::domain("tail model needs a positive coefficient"));
            }
        }
        let (r0, v0) = samples[0];
        let (r1, v1) = samples[1];
        let head_exponent = (v1 / v0).ln() / (r1 / r0).ln();
        let interp = Pchip::new(
            samples.iter().map(|s| s.0).collect(),
            samples.iter().map(|s| s.1).collect(),
        )?;
        Ok(SampledProfile { interp, head_exponent, tail })
    }

    pub fn samples(&self) -> Vec<(f64, f64)> {
        self.interp.xs().iter().copied().zip(self.interp.ys().iter().copied()).collect()
    }

    pub fn tail(&self) -> Option<PowerLaw> {
        self.tail
    }

    /// Below the first sample the profile follows ρ^k with the log-slope of
    /// the first two samples; beyond the last one only the tail model applies.
    pub fn volume(&self, rho: f64) -> Result<f64> {
        let (lo, hi) = self.interp.domain();
        if rho < lo {
            let v0 = self.interp.ys()[0];
            return Ok(v0 * (rho / lo).powf(self.head_exponent));
        }
        if rho > hi {
            return match self.tail {
                Some(t) => Ok(t.eval(rho)),
                None => Err(CknError::InsufficientData(format!(
                    "radius {rho} beyond the last sample {hi} and no tail model"
                ))),
            };
        }
        Ok(self.interp.eval(rho))
    }
}

/// Ball volumes of S^{n−1} × ℝ (round unit sphere, product metric) around a
/// point, by Gauss–Legendre quadrature over the product structure.
#[derive(Debug, Clone)]
pub struct CylinderProfile {
    n: u32,
    sphere_area: f64,
    equator_area: f64,
    rule: GaussLegendre,
}

impl PartialEq for CylinderProfile {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl CylinderProfile {
    pub fn new(n: u32) -> Result<Self> {
        if n < 2 {
            return Err(CknError::domain("cylinder S^{n-1} x R needs n >= 2"));
        }
        Ok(CylinderProfile {
            n,
            sphere_area: unit_sphere_area(n)?,
            equator_area: if n == 2 { 2.0 } else { unit_sphere_area(n - 1)? },
            rule: GaussLegendre::new(48),
        })
    }

    /// Area of a geodesic cap of radius r ≤ π on S^{n−1}.
    pub fn cap_area(&self, r: f64) -> f64 {
        if r >= std::f64::consts::PI {
            return self.sphere_area;
        }
        let k = self.n as i32 - 2;
        self.equator_area * self.rule.integrate(|t| t.sin().powi(k), 0.0, r)
    }

    /// μ(B(ρ)) = 2∫₀^{π/2} A(min(ρ cos φ, π)) ρ cos φ dφ.
    pub fn volume(&self, rho: f64) -> f64 {
        use std::f64::consts::{FRAC_PI_2, PI};
        if rho <= 0.0 {
            return 0.0;
        }
        let (full, phi_star) = if rho > PI {
            let t_star = (rho * rho - PI * PI).sqrt();
            (2.0 * self.sphere_area * t_star, (PI / rho).acos())
        } else {
            (0.0, 0.0)
        };
        let partial = self.rule.integrate(|phi| self.cap_area(rho * phi.cos()) * rho * phi.cos(), phi_star, FRAC_PI_2);
        full + 2.0 * partial
    }

    /// Large-ρ growth 2|S^{n−1}|·ρ.
    pub fn asymptote(&self) -> PowerLaw {
        PowerLaw { coefficient: 2.0 * self.sphere_area, exponent: 1.0 }
    }
}

/// ρ ↦ μ(B(x₀, ρ)).
#[derive(Debug, Clone, PartialEq)]
pub enum VolumeProfile {
    PowerLaw(PowerLaw),
    Sampled(SampledProfile),
    Cylinder(CylinderProfile),
    Scaled { factor: f64, inner: Box<VolumeProfile> },
    Sum(Vec<(f64, VolumeProfile)>),
}

impl VolumeProfile {
    pub fn euclidean(n: u32) -> Result<Self> {
        Ok(VolumeProfile::PowerLaw(PowerLaw { coefficient: unit_ball_volume(n)?, exponent: n as f64 }))
    }

    pub fn power_law(coefficient: f64, exponent: f64) -> Result<Self> {
        if !(coefficient > 0.0 && exponent > 0.0) {
            return Err(CknError::domain("power-law profile needs positive coefficient and exponent"));
        }
        Ok(VolumeProfile::PowerLaw(PowerLaw { coefficient, exponent }))
    }

    pub fn sampled(samples: &[(f64, f64)], tail: Option<PowerLaw>) -> Result<Self> {
        Ok(VolumeProfile::Sampled(SampledProfile::new(samples, tail)?))
    }

    pub fn scaled(self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(CknError::domain(format!("measure scale {factor} must be positive")));
        }
        Ok(VolumeProfile::Scaled { factor, inner: Box::new(self) })
    }

    pub fn sum(terms: Vec<(f64, VolumeProfile)>) -> Result<Self> {
        if terms.is_empty() || terms.iter().any(|(c, _)| !(*c > 0.0)) {
            return Err(CknError::domain("profile sums need positive coefficients"));
        }
        Ok(VolumeProfile::Sum(terms))
    }

    pub fn volume(&self, rho: f64) -> Result<f64> {
        if !(rho >= 0.0) {
            return Err(CknError::domain(format!("radius {rho} must be non-negative")));
        }
        match self {
            VolumeProfile::PowerLaw(p) => Ok(p.eval(rho)),
            VolumeProfile::Sampled(s) => {
                if rho == 0.0 {
                    return Ok(0.0);
                }
                s.volume(rho)
            }
            VolumeProfile::Cylinder(c) => Ok(c.volume(rho)),
            VolumeProfile::Scaled { factor, inner } => Ok(factor * inner.volume(rho)?),
            VolumeProfile::Sum(terms) => {
                terms.iter().try_fold(0.0, |acc, (c, p)| Ok(acc + c * p.volume(rho)?))
            }
        }
    }

    /// Asymptotic power law at infinity, if the profile has one.
    pub fn tail_law(&self) -> Option<PowerLaw> {
        match self {
            VolumeProfile::PowerLaw(p) => Some(*p),
            VolumeProfile::Sampled(s) => s.tail,
            VolumeProfile::Cylinder(c) => Some(c.asymptote()),
            VolumeProfile::Scaled { factor, inner } => inner
                .tail_law()
                .map(|t| PowerLaw { coefficient: factor * t.coefficient, exponent: t.exponent }),
            VolumeProfile::Sum(terms) => {
                let laws: Option<Vec<PowerLaw>> = terms.iter().map(|(_, p)| p.tail_law()).collect();
                let laws = laws?;
                let k = laws.iter().map(|l| l.exponent).fold(f64::NEG_INFINITY, f64::max);
                let c = terms
                    .iter()
                    .zip(&laws)
                    .filter(|(_, l)| l.exponent == k)
                    .map(|((c, _), l)| c * l.coefficient)
                    .sum();
                Some(PowerLaw { coefficient: c, exponent: k })
            }
        }
    }

    /// Exponent k with μ(B(ρ)) ~ ρ^k as ρ → 0.
    pub fn head_exponent(&self) -> f64 {
        match self {
            VolumeProfile::PowerLaw(p) => p.exponent,
            VolumeProfile::Sampled(s) => s.head_exponent,
            VolumeProfile::Cylinder(c) => c.n as f64,
            VolumeProfile::Scaled { inner, .. } => inner.head_exponent(),
            VolumeProfile::Sum(terms) => {
                terms.iter().map(|(_, p)| p.head_exponent()).fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Radius range covered by actual samples (None for analytic profiles).
    pub fn sampled_range(&self) -> Option<(f64, f64)> {
        match self {
            VolumeProfile::Sampled(s) => Some(s.interp.domain()),
            VolumeProfile::Scaled { inner, .. } => inner.sampled_range(),
            VolumeProfile::Sum(terms) => terms.iter().filter_map(|(_, p)| p.sampled_range()).reduce(|a, b| (a.0.max(b.0), a.1.min(b.1))),
            _ => None,
        }
    }
}

pub type DistanceFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type PointSampler = Arc<dyn Fn(&mut ChaCha8Rng) -> Vec<f64> + Send + Sync>;

/// A distance function together with a sampler of test points.
#[derive(Clone)]
pub struct DistanceOracle {
    pub distance: DistanceFn,
    pub sampler: PointSampler,
}

impl fmt::Debug for DistanceOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DistanceOracle")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricCheck {
    pub samples: usize,
    pub max_asymmetry: f64,
    pub max_triangle_violation: f64,
    pub passes: bool,
}

/// (X, d, μ) seen from the base point x₀.
#[derive(Debug, Clone)]
pub struct MetricMeasureSpace {
    pub name: String,
    pub center: String,
    pub dim_hint: u32,
    pub profile: VolumeProfile,
    pub distance: Option<DistanceOracle>,
    pub unbounded: bool,
    /// Declared, not verified: a profile cannot certify properness.
    pub proper: bool,
}

impl MetricMeasureSpace {
    pub fn from_profile(name: impl Into<String>, dim_hint: u32, profile: VolumeProfile) -> Self {
        MetricMeasureSpace {
            name: name.into(),
            center: "x0".into(),
            dim_hint,
            profile,
            distance: None,
            unbounded: true,
            proper: true,
        }
    }

    pub fn volume(&self, rho: f64) -> Result<f64> {
        self.profile.volume(rho)
    }

    /// The same space with μ multiplied by `factor`.
    pub fn with_measure_scaled(&self, factor: f64) -> Result<Self> {
        let mut s = self.clone();
        s.profile = self.profile.clone().scaled(factor)?;
        s.name = format!("{} (measure x{factor})", self.name);
        Ok(s)
    }

    /// Same profile around a different base point label.
    pub fn rerooted(&self, center: impl Into<String>) -> Self {
        let mut s = self.clone();
        s.center = center.into();
        s
    }

    /// Symmetry and triangle inequality on sampled triples.
    pub fn check_metric(&self, samples: usize, seed: u64) -> Result<MetricCheck> {
        let oracle = self
            .distance
            .as_ref()
            .ok_or_else(|| CknError::InsufficientData(format!("space {} has no distance oracle", self.name)))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = &oracle.distance;
        let (mut asym, mut tri) = (0.0f64, 0.0f64);
        for _ in 0..samples {
            let x = (oracle.sampler)(&mut rng);
            let y = (oracle.sampler)(&mut rng);
            let z = (oracle.sampler)(&mut rng);
            let dxy = d(&x, &y);
            asym = asym.max((dxy - d(&y, &x)).abs());
            tri = tri.max(d(&x, &z) - dxy - d(&y, &z));
        }
        Ok(MetricCheck {
            samples,
            max_asymmetry: asym,
            max_triangle_violation: tri.max(0.0),
            passes: asym <= 1e-9 && tri <= 1e-9,
        })
    }
}

/// Names accepted by [`builtin_space`].
#[derive(Debug, Clone)]
pub enum BuiltinSpace {
    Euclidean(u32),
    Minkowski(MinkowskiNorm),
    Cylinder(u32),
    Example36Flat { n: u32, eps: f64 },
}

impl FromStr for BuiltinSpace {
    type Err = CknError;

    /// `euclidean:N`, `cylinder:N`, `example36:N:EPS`, `minkowski:lq:Q[:N]`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| -> Result<f64> {
            t.parse::<f64>().map_err(|_| CknError::domain(format!("cannot parse number '{t}' in space '{s}'")))
        };
        let dim = |t: &str| -> Result<u32> {
            t.parse::<u32>().map_err(|_| CknError::domain(format!("cannot parse dimension '{t}' in space '{s}'")))
        };
        match parts.as_slice() {
            ["euclidean", n] => Ok(BuiltinSpace::Euclidean(dim(n)?)),
            ["cylinder", n] => Ok(BuiltinSpace::Cylinder(dim(n)?)),
            ["example36", n, eps] => Ok(BuiltinSpace::Example36Flat { n: dim(n)?, eps: num(eps)? }),
            ["minkowski", "lq", q] => Ok(BuiltinSpace::Minkowski(MinkowskiNorm::lq(3, num(q)?)?)),
            ["minkowski", "lq", q, n] => {
                Ok(BuiltinSpace::Minkowski(MinkowskiNorm::lq(dim(n)? as usize, num(q)?)?))
            }
            _ => Err(CknError::domain(format!(
                "unknown space '{s}' (expected euclidean:N, cylinder:N, example36:N:EPS or minkowski:lq:Q[:N])"
            ))),
        }
    }
}

fn euclid_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn minkowski_space(name: String, norm: MinkowskiNorm) -> Result<MetricMeasureSpace> {
    let n = norm.dim();
    let mu = norm.normalized_measure(0)?;
    let coefficient = mu.ball_measure(1.0)?;
    let dist_norm = norm.clone();
    Ok(MetricMeasureSpace {
        name,
        center: "origin".into(),
        dim_hint: n as u32,
        profile: VolumeProfile::power_law(coefficient, n as f64)?,
        distance: Some(DistanceOracle {
            distance: Arc::new(move |x, y| {
                let d: Vec<f64> = y.iter().zip(x).map(|(b, a)| b - a).collect();
                dist_norm.eval_unchecked(&d)
            }),
            sampler: Arc::new(move |rng| random_gaussian(rng, n)),
        }),
        unbounded: true,
        proper: true,
    })
}

/// Built-in spaces with exact or quadrature profiles.
pub fn builtin_space(which: &BuiltinSpace) -> Result<MetricMeasureSpace> {
    match which {
        BuiltinSpace::Euclidean(n) => {
            let n = *n;
            let mut s = minkowski_space(format!("euclidean({n})"), MinkowskiNorm::euclidean(n as usize)?)?;
            s.profile = VolumeProfile::euclidean(n)?;
            s.distance = Some(DistanceOracle {
                distance: Arc::new(euclid_dist),
                sampler: Arc::new(move |rng| random_gaussian(rng, n as usize)),
            });
            Ok(s)
        }
        BuiltinSpace::Minkowski(norm) => minkowski_space(format!("minkowski({})", norm.label()), norm.clone()),
        BuiltinSpace::Example36Flat { n, eps } => {
            minkowski_space(format!("example36_flat({n}, {eps})"), MinkowskiNorm::flat_example(*n as usize, *eps)?)
        }
        BuiltinSpace::Cylinder(n) => {
            let n = *n;
            let profile = CylinderProfile::new(n)?;
            let k = n as usize;
            Ok(MetricMeasureSpace {
                name: format!("cylinder({n})"),
                center: "(pole, 0)".into(),
                dim_hint: n,
                profile: VolumeProfile::Cylinder(profile),
                distance: Some(DistanceOracle {
                    // Points are (θ ∈ S^{n−1} ⊂ ℝⁿ, t), stored as n + 1 coordinates.
                    distance: Arc::new(move |x, y| {
                        let c: f64 = x[..k].iter().zip(&y[..k]).map(|(a, b)| a * b).sum();
                        let angle = c.clamp(-1.0, 1.0).acos();
                        let dt = x[k] - y[k];
                        (angle * angle + dt * dt).sqrt()
                    }),
                    sampler: Arc::new(move |rng| {
                        let mut p = random_unit(rng, k);
                        p.push(3.0 * random_gaussian(rng, 1)[0]);
                        p
                    }),
                }),
                unbounded: true,
                proper: true,
            })
        }
    }
}

/// Reads a profile CSV: header `rho,volume`, one sample per row, optional
/// `tail: c*rho^k` directive, `#` comments and blank lines ignored.
pub fn load_profile(path: impl AsRef<Path>) -> Result<VolumeProfile> {
    let text = std::fs::read_to_string(path)?;
    parse_profile(&text)
}

pub fn parse_profile(text: &str) -> Result<VolumeProfile> {
    let mut header_seen = false;
    let mut rows: Vec<(f64, f64)> = Vec::new();
    let mut tail = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("tail:") {
            tail = Some(parse_tail(rest, line_no)?);
            continue;
        }
        if !header_seen {
            let cols: Vec<String> = line.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
            if cols != ["rho", "volume"] {
                return Err(CknError::parse(line_no, format!("expected header 'rho,volume', found '{line}'")));
            }
            header_seen = true;
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 2 {
            return Err(CknError::parse(line_no, format!("expected two columns, found {}", cols.len())));
        }
        let parse = |t: &str| t.parse::<f64>().map_err(|_| CknError::parse(line_no, format!("not a number: '{t}'")));
        let (rho, vol) = (parse(cols[0])?, parse(cols[1])?);
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(CknError::parse(line_no, format!("radius {rho} must be positive")));
        }
        if !(vol > 0.0 && vol.is_finite()) {
            return Err(CknError::parse(line_no, format!("volume {vol} must be positive")));
        }
        if let Some(&(r0, v0)) = rows.last() {
            if rho <= r0 {
                return Err(CknError::parse(line_no, format!("radius {rho} not above previous {r0}; rows must be sorted")));
            }
            if vol < v0 {
                return Err(CknError::parse(line_no, format!("volume {vol} decreases from {v0}")));
            }
        }
        rows.push((rho, vol));
    }
    if !header_seen {
        return Err(CknError::parse(1, "missing header 'rho,volume'"));
    }
    if rows.len() < 2 {
        return Err(CknError::InsufficientData(format!("profile has {} rows, need at least 2", rows.len())));
    }
    VolumeProfile::sampled(&rows, tail)
}

fn parse_tail(rest: &str, line_no: usize) -> Result<PowerLaw> {
    let compact: String = rest.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || CknError::parse(line_no, format!("tail directive must read 'tail: c*rho^k', found '{rest}'"));
    let (c, k) = compact.split_once("*rho^").ok_or_else(bad)?;
    let coefficient: f64 = c.parse().map_err(|_| bad())?;
    let exponent: f64 = k.parse().map_err(|_| bad())?;
    if !(coefficient > 0.0 && exponent.is_finite()) {
        return Err(CknError::parse(line_no, "tail coefficient must be positive"));
    }
    Ok(PowerLaw { coefficient, exponent })
}

pub fn write_profile_csv(profile: &VolumeProfile, radii: &[f64]) -> Result<String> {
    let mut out = String::from("rho,volume\n");
    for &r in radii {
        out.push_str(&format!("{r:.17e},{:.17e}\n", profile.volume(r)?));
    }
    if let Some(t) = profile.tail_law() {
        out.push_str(&format!("tail: {:.17e}*rho^{}\n", t.coefficient, t.exponent));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VdEntry {
    pub r: f64,
    pub big_r: f64,
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VdReport {
    pub n: u32,
    pub c0: f64,
    pub max_statistic: f64,
    pub worst: Option<VdEntry>,
    pub entries: Vec<VdEntry>,
    /// Set when the declared tail grows faster than ρⁿ.
    pub tail_exponent_exceeds_n: bool,
    pub passes: bool,
}

/// Log-spaced (r, R) pairs covering 10⁻³ … 10⁶.
pub fn default_vd_grid() -> Vec<(f64, f64)> {
    let mut grid = Vec::new();
    for i in 0..=24 {
        let r = 10f64.powf(-3.0 + i as f64 * 0.25);
        for k in [1.5, 4.0, 10.0, 100.0, 1000.0] {
            grid.push((r, r * k));
        }
    }
    grid
}

/// sup over the grid of [μ(B(R))/μ(B(r))]·(r/R)ⁿ, compared with C0.
pub fn check_vd(space: &MetricMeasureSpace, n: u32, c0: f64, grid: &[(f64, f64)]) -> Result<VdReport> {
    if !(c0 >= 1.0) {
        return Err(CknError::domain(format!("doubling constant C0 = {c0} must be >= 1")));
    }
    if grid.is_empty() {
        return Err(CknError::domain("doubling grid is empty"));
    }
    let nf = n as f64;
    let mut entries = Vec::with_capacity(grid.len());
    for &(r, big_r) in grid {
        if !(r > 0.0 && r < big_r) {
            return Err(CknError::domain(format!("doubling pair ({r}, {big_r}) violates 0 < r < R")));
        }
        let statistic = space.volume(big_r)? / space.volume(r)? * (r / big_r).powf(nf);
        entries.push(VdEntry { r, big_r, statistic });
    }
    let worst = entries.iter().cloned().max_by(|a, b| a.statistic.total_cmp(&b.statistic));
    let max_statistic = worst.as_ref().map_or(f64::NAN, |w| w.statistic);
    let tail_exponent_exceeds_n = space.profile.tail_law().is_some_and(|t| t.exponent > nf);
    Ok(VdReport {
        n,
        c0,
        max_statistic,
        worst,
        entries,
        tail_exponent_exceeds_n,
        passes: max_statistic <= c0 * (1.0 + VD_SLACK) && !tail_exponent_exceeds_n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArReport {
    pub n: u32,
    /// (r, μ(B(r)) / (ω_n rⁿ)) per radius.
    pub ratios: Vec<(f64, f64)>,
    pub liminf_estimate: f64,
    pub tol: f64,
    pub passes: bool,
    /// Smallest Ω ≥ 1 with Ω⁻¹rⁿ ≤ μ(B(r)) ≤ Ωrⁿ on the sampled radii.
    pub ahlfors_window: f64,
    /// Estimate of liminf μ(B(r)) / rⁿ.
    pub omega_x0: f64,
}

/// 16 radii from 10⁻¹ down to 10⁻⁶.
pub fn default_ar_sequence() -> Vec<f64> {
    (0..16).map(|i| 10f64.powf(-1.0 - i as f64 / 3.0)).collect()
}

pub fn check_ar(space: &MetricMeasureSpace, n: u32, rho_seq: &[f64]) -> Result<ArReport> {
    check_ar_with_tol(space, n, rho_seq, AR_TOL)
}

/// Estimates liminf μ(B(r))/(ω_n rⁿ) by the minimum over the smaller half
/// of a decreasing radius sequence.
pub fn check_ar_with_tol(space: &MetricMeasureSpace, n: u32, rho_seq: &[f64], tol: f64) -> Result<ArReport> {
    if rho_seq.len() < 4 {
        return Err(CknError::InsufficientData(format!(
            "small-ball test needs at least 4 radii, got {}",
            rho_seq.len()
        )));
    }
    if rho_seq.windows(2).any(|w| !(w[1] < w[0])) || !(rho_seq[rho_seq.len() - 1] > 0.0) {
        return Err(CknError::domain("small-ball radii must be positive and strictly decreasing"));
    }
    if let Some((lo, _)) = space.profile.sampled_range() {
        let smallest = rho_seq[rho_seq.len() - 1];
        if smallest < lo {
            return Err(CknError::InsufficientData(format!(
                "radius {smallest} below the smallest sampled radius {lo}"
            )));
        }
    }
    let omega = unit_ball_volume(n)?;
    let nf = n as f64;
    let mut ratios = Vec::with_capacity(rho_seq.len());
    let mut window = 1.0f64;
    let mut omega_x0 = f64::INFINITY;
    let half = rho_seq.len() / 2;
    for (i, &r) in rho_seq.iter().enumerate() {
        let v = space.volume(r)?;
        let rn = r.powf(nf);
        ratios.push((r, v / (omega * rn)));
        window = window.max(v / rn).max(rn / v);
        if i >= half {
            omega_x0 = omega_x0.min(v / rn);
        }
    }
    let liminf_estimate = ratios[half..].iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    Ok(ArReport {
        n,
        ratios,
        liminf_estimate,
        tol,
        passes: (liminf_estimate - 1.0).abs() <= tol,
        ahlfors_window: window,
        omega_x0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn euclidean_profile_and_audits() {
        let s = builtin_space(&BuiltinSpace::Euclidean(3)).unwrap();
        assert!((s.volume(2.0).unwrap() - 4.0 * PI / 3.0 * 8.0).abs() < 1e-12);
        let vd = check_vd(&s, 3, 1.0, &default_vd_grid()).unwrap();
        assert!(vd.passes);
        assert!((vd.max_statistic - 1.0).abs() < 1e-12);
        let ar = check_ar(&s, 3, &default_ar_sequence()).unwrap();
        assert!(ar.passes && (ar.liminf_estimate - 1.0).abs() < 1e-12);
        assert!(s.check_metric(500, 1).unwrap().passes);
    }

    #[test]
    fn doubled_measure_fails_ar() {
        let s = builtin_space(&BuiltinSpace::Euclidean(3)).unwrap().with_measure_scaled(2.0).unwrap();
        let ar = check_ar(&s, 3, &default_ar_sequence()).unwrap();
        assert!(!ar.passes);
        assert!((ar.liminf_estimate - 2.0).abs() < 1e-12);
    }

    #[test]
    fn superpolynomial_growth_fails_vd() {
        let s = MetricMeasureSpace::from_profile("rho^4", 3, VolumeProfile::power_law(1.0, 4.0).unwrap());
        assert!(!check_vd(&s, 3, 1.0, &default_vd_grid()).unwrap().passes);
        assert!(check_vd(&s, 3, 1.0, &[(2.0, 1.0)]).is_err());
    }

    #[test]
    fn cylinder_small_and_large_scales() {
        let c = CylinderProfile::new(3).unwrap();
        let omega = 4.0 * PI / 3.0;
        for r in [1e-4, 1e-3, 1e-2] {
            assert!((c.volume(r) / (omega * r * r * r) - 1.0).abs() < 1e-4);
        }
        // Whole sphere factor is 4π, so the slope at large ρ is 8π.
        let slope = (c.volume(2000.0) - c.volume(1000.0)) / 1000.0;
        assert!((slope - 8.0 * PI).abs() < 1e-6 * 8.0 * PI);
        assert!((c.cap_area(PI / 2.0) - 2.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn cylinder_passes_doubling_with_c0_one() {
        let s = builtin_space(&BuiltinSpace::Cylinder(3)).unwrap();
        let vd = check_vd(&s, 3, 1.0, &default_vd_grid()).unwrap();
        assert!(vd.passes, "max {}", vd.max_statistic);
        assert!(check_ar(&s, 3, &default_ar_sequence()).unwrap().passes);
        assert!(s.check_metric(500, 2).unwrap().passes);
    }

    #[test]
    fn profile_parsing() {
        let p = parse_profile("rho,volume\n1,2\n3,6\n").unwrap();
        assert!((p.volume(2.0).unwrap() - 4.0).abs() < 1e-14);
        assert!(matches!(p.volume(5.0), Err(CknError::InsufficientData(_))));
        match parse_profile("rho,volume\n1,2\n2,3\n3,1\n") {
            Err(CknError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let t = parse_profile("rho,volume\n1,2\n2,3\ntail: 0.5*rho^3\n").unwrap();
        assert_eq!(t.tail_law(), Some(PowerLaw { coefficient: 0.5, exponent: 3.0 }));
        assert!((t.volume(10.0).unwrap() - 500.0).abs() < 1e-12);
        assert!(parse_profile("r,v\n1,2\n").is_err());
        match parse_profile("rho,volume\n1,2\n1,3\n") {
            Err(CknError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn space_names() {
        assert!(matches!("euclidean:4".parse::<BuiltinSpace>(), Ok(BuiltinSpace::Euclidean(4))));
        assert!("minkowski:lq:4".parse::<BuiltinSpace>().is_ok());
        assert!("example36:3:0.5".parse::<BuiltinSpace>().is_ok());
        assert!("torus:3".parse::<BuiltinSpace>().is_err());
    }
}
