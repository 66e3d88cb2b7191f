//! Anisotropic decreasing rearrangement of grid functions and grid tests of
//! the Hardy–Littlewood, Pólya–Szegő and CKN inequalities.
//!
//! A grid function stores one value per node x_i = −L + i·h, h = 2L/m,
//! i ∈ {0, …, m−1}ⁿ, row-major with the last axis fastest. Node i is the
//! center of a cell of Lebesgue volume hⁿ; the origin is node (m/2, …, m/2).

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CknError, Result};
use crate::minkowski::{MinkowskiNorm, NormSpec};
use crate::params::CknParams;
use crate::quadrature::GaussLegendre;

pub const MAX_GRID_DIM: usize = 4;
/// Width of the zero layer required along the box boundary.
pub const BOUNDARY_CELLS: usize = 2;
pub const HL_TOL: f64 = 1e-12;
pub const PS_TOL: f64 = 0.02;
pub const CKN_TOL: f64 = 0.02;
const BINARY_MAGIC: &[u8; 4] = b"CKNG";
const BINARY_VERSION: u32 = 1;
const ORIGIN_DEPTH: usize = 14;

#[derive(Debug, Clone)]
pub struct GridFunction {
    dim: usize,
    half_width: f64,
    m: usize,
    values: Vec<f64>,
    norm: MinkowskiNorm,
}

impl PartialEq for GridFunction {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.half_width == other.half_width
            && self.m == other.m
            && self.values == other.values
            && self.norm.label() == other.norm.label()
            && self.norm.spec() == other.norm.spec()
    }
}

fn check_shape(dim: usize, m: usize, half_width: f64) -> Result<()> {
    if dim == 0 || dim > MAX_GRID_DIM {
        return Err(CknError::domain(format!("grid dimension {dim} outside 1..={MAX_GRID_DIM}")));
    }
    if m < 2 * BOUNDARY_CELLS + 2 || m % 2 != 0 {
        return Err(CknError::domain(format!("nodes per axis m = {m} must be even and at least {}", 2 * BOUNDARY_CELLS + 2)));
    }
    if m.checked_pow(dim as u32).is_none_or(|c| c > u32::MAX as usize) {
        return Err(CknError::domain(format!("grid {m}^{dim} is too large")));
    }
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(CknError::domain(format!("box half-width {half_width} must be positive")));
    }
    Ok(())
}

impl GridFunction {
    pub fn new(norm: MinkowskiNorm, m: usize, half_width: f64, values: Vec<f64>) -> Result<Self> {
        let dim = norm.dim();
        check_shape(dim, m, half_width)?;
        if values.len() != m.pow(dim as u32) {
            return Err(CknError::domain(format!("{} values for a {m}^{dim} grid", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(CknError::domain(format!("grid value {v} is not a finite non-negative number")));
        }
        Ok(GridFunction { dim, half_width, m, values, norm })
    }

    /// Samples `f` at every node. Negative samples are clipped to zero.
    pub fn from_fn(norm: MinkowskiNorm, m: usize, half_width: f64, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        let dim = norm.dim();
        check_shape(dim, m, half_width)?;
        let h = 2.0 * half_width / m as f64;
        let total = m.pow(dim as u32);
        let values = (0..total)
            .into_par_iter()
            .map_init(
                || vec![0.0; dim],
                |x, idx| {
                    node_coords(idx, dim, m, half_width, h, x);
                    f(x).max(0.0)
                },
            )
            .collect();
        GridFunction::new(norm, m, half_width, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.m as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> &MinkowskiNorm {
        &self.norm
    }

    pub fn origin_index(&self) -> usize {
        let c = self.m / 2;
        (0..self.dim).fold(0, |acc, _| acc * self.m + c)
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        node_coords(idx, self.dim, self.m, self.half_width, self.spacing(), &mut x);
        x
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        GridFunction::new(self.norm.clone(), self.m, self.half_width, self.values.iter().map(|v| v * c).collect())
    }

    /// Index of the first non-zero value in the boundary layer, if any.
    pub fn boundary_violation(&self) -> Option<usize> {
        let (m, dim) = (self.m, self.dim);
        self.values.iter().enumerate().find_map(|(idx, &v)| {
            if v == 0.0 {
                return None;
            }
            let mut r = idx;
            for _ in 0..dim {
                let i = r % m;
                r /= m;
                if i < BOUNDARY_CELLS || i >= m - BOUNDARY_CELLS {
                    return Some(idx);
                }
            }
            None
        })
    }

    pub fn check_support(&self) -> Result<()> {
        match self.boundary_violation() {
            None => Ok(()),
            Some(idx) => Err(CknError::domain(format!(
                "support touches the box boundary at node {:?}; the rearranged support could leave the box",
                self.coords(idx)
            ))),
        }
    }

    /// Lebesgue-to-μ_F factor of the norm (unit F-ball measure ω_n).
    pub fn measure_scale(&self) -> Result<f64> {
        Ok(self.norm.normalized_measure(0)?.scale)
    }

    /// μ_F{u > c}: cell count times scaled cell volume.
    pub fn superlevel_measure(&self, c: f64) -> Result<f64> {
        let count = self.values.iter().filter(|&&v| v > c).count();
        Ok(count as f64 * self.measure_scale()? * self.spacing().powi(self.dim as i32))
    }

    pub fn to_csv(&self) -> Result<String> {
        let spec = self.spec_json()?;
        let mut out = String::new();
        let _ = writeln!(out, "# dim {}", self.dim);
        let _ = writeln!(out, "# m {}", self.m);
        let _ = writeln!(out, "# half_width {:.17e}", self.half_width);
        let _ = writeln!(out, "# norm {spec}");
        out.push_str("value\n");
        for v in &self.values {
            let _ = writeln!(out, "{v:.17e}");
        }
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut m = None;
        let mut half_width = None;
        let mut norm = None;
        let mut values = Vec::new();
        let mut header = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                let (key, val) = rest.split_once(' ').unwrap_or((rest, ""));
                let bad = |what: &str| CknError::parse(lineno, format!("bad {what} '{val}'"));
                match key {
                    "dim" => dim = Some(val.trim().parse::<usize>().map_err(|_| bad("dim"))?),
                    "m" => m = Some(val.trim().parse::<usize>().map_err(|_| bad("m"))?),
                    "half_width" => half_width = Some(val.trim().parse::<f64>().map_err(|_| bad("half_width"))?),
                    "norm" => norm = Some(MinkowskiNorm::from_json(val.trim()).map_err(|e| CknError::parse(lineno, e.to_string()))?),
                    _ => {}
                }
                continue;
            }
            if !header {
                if line != "value" {
                    return Err(CknError::parse(lineno, format!("expected header 'value', found '{line}'")));
                }
                header = true;
                continue;
            }
            values.push(line.parse::<f64>().map_err(|_| CknError::parse(lineno, format!("bad value '{line}'")))?);
        }
        let missing = |k: &str| CknError::parse(0, format!("missing '# {k}' header"));
        let norm = norm.ok_or_else(|| missing("norm"))?;
        let dim = dim.ok_or_else(|| missing("dim"))?;
        if dim != norm.dim() {
            return Err(CknError::parse(0, format!("dim {dim} disagrees with the norm dimension {}", norm.dim())));
        }
        GridFunction::new(norm, m.ok_or_else(|| missing("m"))?, half_width.ok_or_else(|| missing("half_width"))?, values)
    }

    fn spec_json(&self) -> Result<String> {
        let spec: NormSpec = self
            .norm
            .spec()
            .ok_or_else(|| CknError::domain(format!("norm '{}' has no serializable description", self.norm.label())))?;
        serde_json::to_string(&spec).map_err(|e| CknError::domain(e.to_string()))
    }

    /// Little-endian layout: b"CKNG", u32 version, u32 dim, u32 m,
    /// f64 half-width, u32 byte length of the norm JSON, the JSON bytes,
    /// then mⁿ f64 values in row-major order.
    pub fn to_binary(&self) -> Result<Vec<u8>> {
        let spec = self.spec_json()?;
        let mut out = Vec::with_capacity(32 + spec.len() + 8 * self.values.len());
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.m as u32).to_le_bytes());
        out.extend_from_slice(&self.half_width.to_le_bytes());
        out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
        out.extend_from_slice(spec.as_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut take = |k: usize, what: &str| -> Result<&[u8]> {
            if cur.len() < k {
                return Err(CknError::parse(0, format!("truncated grid file while reading {what}")));
            }
            let (head, tail) = cur.split_at(k);
            cur = tail;
            Ok(head)
        };
        if take(4, "magic")? != BINARY_MAGIC {
            return Err(CknError::parse(0, "not a CKNG grid file"));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let version = u32_at(take(4, "version")?);
        if version != BINARY_VERSION {
            return Err(CknError::parse(0, format!("unsupported grid file version {version}")));
        }
        let dim = u32_at(take(4, "dim")?) as usize;
        let m = u32_at(take(4, "m")?) as usize;
        let half_width = f64::from_le_bytes(take(8, "half-width")?.try_into().unwrap());
        let len = u32_at(take(4, "norm length")?) as usize;
        let json = std::str::from_utf8(take(len, "norm")?).map_err(|_| CknError::parse(0, "norm description is not UTF-8"))?;
        let norm = MinkowskiNorm::from_json(json)?;
        if norm.dim() != dim {
            return Err(CknError::parse(0, "dim disagrees with the norm dimension"));
        }
        check_shape(dim, m, half_width)?;
        let count = m.pow(dim as u32);
        let raw = take(8 * count, "values")?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if !cur.is_empty() {
            return Err(CknError::parse(0, "trailing bytes after grid values"));
        }
        GridFunction::new(norm, m, half_width, values)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = if path.extension().is_some_and(|e| e == "csv") { self.to_csv()?.into_bytes() } else { self.to_binary()? };
        std::fs::File::create(path)?.write_all(&bytes)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.starts_with(BINARY_MAGIC) {
            GridFunction::from_binary(&bytes)
        } else {
            GridFunction::from_csv(std::str::from_utf8(&bytes).map_err(|_| CknError::parse(0, "grid CSV is not UTF-8"))?)
        }
    }
}

#[inline]
fn node_coords(mut idx: usize, dim: usize, m: usize, half_width: f64, h: f64, x: &mut [f64]) {
    for k in (0..dim).rev() {
        x[k] = -half_width + (idx % m) as f64 * h;
        idx /= m;
    }
}

/// Cell order for the rearrangement: increasing F-distance of the cell
/// center from the origin, ties broken by the row-major index.
#[derive(Debug, Clone)]
pub struct RearrangementPlan {
    dim: usize,
    m: usize,
    half_width: f64,
    norm_label: String,
    order: Vec<u32>,
    distances: Vec<f64>,
}

impl RearrangementPlan {
    pub fn new(norm: &MinkowskiNorm, m: usize, half_width: f64) -> Result<Self> {
        let dim = norm.dim();
        check_shape(dim, m, half_width)?;
        let h = 2.0 * half_width / m as f64;
        let total = m.pow(dim as u32);
        let distances: Vec<f64> = (0..total)
            .into_par_iter()
            .map_init(
                || vec![0.0; dim],
                |x, idx| {
                    node_coords(idx, dim, m, half_width, h, x);
                    norm.eval_unchecked(x)
                },
            )
            .collect();
        let mut order: Vec<u32> = (0..total as u32).collect();
        order.par_sort_unstable_by(|&i, &j| distances[i as usize].total_cmp(&distances[j as usize]).then(i.cmp(&j)));
        Ok(RearrangementPlan { dim, m, half_width, norm_label: norm.label(), order, distances })
    }

    pub fn for_grid(u: &GridFunction) -> Result<Self> {
        RearrangementPlan::new(&u.norm, u.m, u.half_width)
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }

    /// F-distance of every cell center, in row-major order.
    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    fn matches(&self, u: &GridFunction) -> bool {
        self.dim == u.dim && self.m == u.m && self.half_width == u.half_width && self.norm_label == u.norm.label()
    }

    /// The sorted (descending) values of u placed along the plan order.
    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        if !self.matches(u) {
            return Err(CknError::domain("rearrangement plan was built for a different grid or norm"));
        }
        u.check_support()?;
        let mut sorted = u.values.clone();
        sorted.par_sort_unstable_by(|a, b| b.total_cmp(a));
        let mut out = vec![0.0; u.values.len()];
        for (&cell, v) in self.order.iter().zip(sorted) {
            if v == 0.0 {
                break;
            }
            out[cell as usize] = v;
        }
        let star = GridFunction { values: out, ..u.clone() };
        if star.boundary_violation().is_some() {
            return Err(CknError::domain("rearranged support reaches the box boundary; enlarge the box"));
        }
        Ok(star)
    }
}

/// Discrete decreasing rearrangement u* of u with respect to its norm.
pub fn symmetrize(u: &GridFunction) -> Result<GridFunction> {
    RearrangementPlan::for_grid(u)?.apply(u)
}

/// Order-independent sum: sort, then Neumaier-compensated accumulation.
fn stable_sum(mut terms: Vec<f64>) -> f64 {
    terms.par_sort_unstable_by(|a, b| a.total_cmp(b));
    let mut sum = 0.0;
    let mut comp = 0.0;
    for t in terms {
        let s = sum + t;
        comp += if sum.abs() >= t.abs() { (sum - s) + t } else { (t - s) + sum };
        sum = s;
    }
    sum + comp
}

/// Lebesgue volume of the unit F-ball, ω_n divided by the measure scale.
fn unit_ball_lebesgue(norm: &MinkowskiNorm) -> Result<f64> {
    Ok(norm.unit_ball_volume(0)?.value)
}

/// Mean of F^{−ap} over an F-ball of Lebesgue volume `volume`:
/// n r^{−ap}/(n − ap) with vol_F·rⁿ = volume.
fn origin_weight_mean(params: &CknParams, vol_f: f64, volume: f64) -> f64 {
    let n = params.dim();
    let r = (volume / vol_f).powf(1.0 / n);
    n * r.powf(-params.ap) / (n - params.ap)
}

/// Cell weights F(x_i)^{−ap}; the origin cell gets the mean of F^{−ap}
/// over the F-ball of the same volume as the cell.
pub fn hardy_littlewood_weights(params: &CknParams, u: &GridFunction) -> Result<Vec<f64>> {
    check_params(params, u)?;
    let plan = RearrangementPlan::for_grid(u)?;
    weights_from_plan(params, u, &plan)
}

fn weights_from_plan(params: &CknParams, u: &GridFunction, plan: &RearrangementPlan) -> Result<Vec<f64>> {
    if params.ap == 0.0 {
        return Ok(vec![1.0; u.values.len()]);
    }
    let vol_f = unit_ball_lebesgue(&u.norm)?;
    let origin = u.origin_index();
    let cell = u.spacing().powi(u.dim as i32);
    Ok(plan
        .distances
        .par_iter()
        .enumerate()
        .map(|(i, &d)| if i == origin { origin_weight_mean(params, vol_f, cell) } else { d.powf(-params.ap) })
        .collect())
}

fn check_params(params: &CknParams, u: &GridFunction) -> Result<()> {
    if params.n as usize != u.dim {
        return Err(CknError::domain(format!("parameters for n = {} applied to a {}-dimensional grid", params.n, u.dim)));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HardyLittlewoodReport {
    /// ∫ u^p F^{−ap} dμ_F.
    pub lhs: f64,
    /// ∫ (u*)^p F^{−ap} dμ_F.
    pub rhs: f64,
    pub holds: bool,
    pub tol: f64,
}

pub fn check_hardy_littlewood(params: &CknParams, u: &GridFunction) -> Result<HardyLittlewoodReport> {
    let plan = RearrangementPlan::for_grid(u)?;
    check_hardy_littlewood_with(params, u, &plan)
}

pub fn check_hardy_littlewood_with(params: &CknParams, u: &GridFunction, plan: &RearrangementPlan) -> Result<HardyLittlewoodReport> {
    check_params(params, u)?;
    let star = plan.apply(u)?;
    let w = weights_from_plan(params, u, plan)?;
    let mu = u.measure_scale()? * u.spacing().powi(u.dim as i32);
    let p = params.p;
    let weighted = |g: &GridFunction| {
        let terms = g.values.par_iter().zip(&w).filter(|(v, _)| **v > 0.0).map(|(v, wi)| v.powf(p) * wi).collect();
        stable_sum(terms) * mu
    };
    let lhs = weighted(u);
    let rhs = weighted(&star);
    Ok(HardyLittlewoodReport { lhs, rhs, holds: lhs <= rhs * (1.0 + HL_TOL), tol: HL_TOL })
}

fn require_dual(norm: &MinkowskiNorm, what: &str) -> Result<()> {
    if !norm.smooth() {
        return Err(CknError::domain(format!(
            "{what} needs a norm smooth away from the origin; '{}' is flagged non-smooth",
            norm.label()
        )));
    }
    if !norm.has_closed_form_dual() {
        return Err(CknError::domain(format!(
            "{what} evaluates F* at every grid point and needs a closed-form dual; '{}' has none",
            norm.label()
        )));
    }
    Ok(())
}

/// ∫ F*(Du)² dμ_F with central-difference gradients (zero outside the grid).
pub fn dirichlet_energy_fd(u: &GridFunction) -> Result<f64> {
    require_dual(&u.norm, "the finite-difference energy")?;
    let (dim, m) = (u.dim, u.m);
    let h = u.spacing();
    let strides: Vec<usize> = (0..dim).map(|k| m.pow((dim - 1 - k) as u32)).collect();
    let v = &u.values;
    let norm = &u.norm;
    let terms: Vec<f64> = (0..v.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; dim],
            |g, idx| {
                let mut any = false;
                for k in 0..dim {
                    let i = (idx / strides[k]) % m;
                    let fwd = if i + 1 < m { v[idx + strides[k]] } else { 0.0 };
                    let bwd = if i > 0 { v[idx - strides[k]] } else { 0.0 };
                    g[k] = (fwd - bwd) / (2.0 * h);
                    any |= g[k] != 0.0;
                }
                if any {
                    norm.closed_form_dual(g).unwrap().powi(2)
                } else {
                    0.0
                }
            },
        )
        .filter(|t| *t > 0.0)
        .collect();
    Ok(stable_sum(terms) * u.measure_scale()? * h.powi(dim as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolyaSzegoReport {
    /// Energy of u*.
    pub lhs: f64,
    /// Energy of u.
    pub rhs: f64,
    /// (lhs − rhs)/rhs; positive values are violations.
    pub margin: f64,
    pub holds_within_tol: bool,
    pub tol: f64,
}

/// Compares ∫F*(Du*)² with ∫F*(Du)²; passes when rhs ≥ lhs·(1 − tol).
/// The caller vouches that u samples a smooth function.
pub fn check_polya_szego(u: &GridFunction) -> Result<PolyaSzegoReport> {
    let plan = RearrangementPlan::for_grid(u)?;
    check_polya_szego_with(u, &plan)
}

pub fn check_polya_szego_with(u: &GridFunction, plan: &RearrangementPlan) -> Result<PolyaSzegoReport> {
    require_dual(&u.norm, "the Pólya–Szegő check")?;
    let star = plan.apply(u)?;
    let lhs = dirichlet_energy_fd(&star)?;
    let rhs = dirichlet_energy_fd(u)?;
    if !(rhs > 0.0) {
        return Err(CknError::Degenerate("u has zero energy".into()));
    }
    Ok(PolyaSzegoReport {
        lhs,
        rhs,
        margin: (lhs - rhs) / rhs,
        holds_within_tol: rhs >= lhs * (1.0 - PS_TOL),
        tol: PS_TOL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CknTestReport {
    /// (∫ u^p F^{−ap} dμ_F)^{1/p}.
    pub lhs: f64,
    /// (∫ F*(Du)² dμ_F)^{1/2}.
    pub rhs: f64,
    pub ratio: f64,
    pub sharp_constant: f64,
    /// ratio / K_a − 1.
    pub relative_to_constant: f64,
    pub within_ceiling: bool,
}

/// Both sides of the anisotropic CKN inequality at x₀ = 0 for the
/// multilinear interpolant of the node values: exact-gradient energy with
/// 2ⁿ Gauss points per cube, 3ⁿ-point numerator, and cubes meeting the
/// origin refined towards the singular weight.
pub fn ckn_test(params: &CknParams, u: &GridFunction) -> Result<CknTestReport> {
    check_params(params, u)?;
    require_dual(&u.norm, "the grid CKN test")?;
    u.check_support()?;
    let mesh = CubeMesh::new(u, params)?;
    let scale = u.measure_scale()?;
    let energy = mesh.energy() * scale;
    let mass = mesh.mass() * scale;
    if !(energy > 0.0 && mass > 0.0) {
        return Err(CknError::Degenerate("zero grid function in the CKN test".into()));
    }
    let lhs = mass.powf(1.0 / params.p);
    let rhs = energy.sqrt();
    let ratio = lhs / rhs;
    let k = params.sharp_constant().value;
    Ok(CknTestReport {
        lhs,
        rhs,
        ratio,
        sharp_constant: k,
        relative_to_constant: ratio / k - 1.0,
        within_ceiling: ratio <= k * (1.0 + CKN_TOL),
    })
}

struct CubeMesh<'a> {
    u: &'a GridFunction,
    params: &'a CknParams,
    h: f64,
    strides: Vec<usize>,
    corner_offsets: Vec<usize>,
    vol_f: f64,
}

/// Tensor Gauss rule on [0,1]ⁿ: (points, weights).
fn tensor_rule(dim: usize, order: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let gl = GaussLegendre::new(order);
    let xs: Vec<f64> = gl.nodes().iter().map(|x| 0.5 * (x + 1.0)).collect();
    let ws: Vec<f64> = gl.weights().iter().map(|w| 0.5 * w).collect();
    let count = order.pow(dim as u32);
    let mut pts = Vec::with_capacity(count);
    let mut wts = Vec::with_capacity(count);
    for c in 0..count {
        let mut r = c;
        let mut pt = vec![0.0; dim];
        let mut w = 1.0;
        for slot in pt.iter_mut() {
            *slot = xs[r % order];
            w *= ws[r % order];
            r /= order;
        }
        pts.push(pt);
        wts.push(w);
    }
    (pts, wts)
}

#[inline]
fn multilinear(corners: &[f64], xi: &[f64]) -> f64 {
    corners
        .iter()
        .enumerate()
        .map(|(c, v)| {
            let mut phi = *v;
            for (k, t) in xi.iter().enumerate() {
                phi *= if c >> k & 1 == 1 { *t } else { 1.0 - t };
            }
            phi
        })
        .sum()
}

impl<'a> CubeMesh<'a> {
    fn new(u: &'a GridFunction, params: &'a CknParams) -> Result<Self> {
        let (dim, m) = (u.dim, u.m);
        let strides: Vec<usize> = (0..dim).map(|k| m.pow((dim - 1 - k) as u32)).collect();
        let corner_offsets = (0..1usize << dim)
            .map(|c| (0..dim).filter(|k| c >> k & 1 == 1).map(|k| strides[k]).sum())
            .collect();
        Ok(CubeMesh { u, params, h: u.spacing(), strides, corner_offsets, vol_f: unit_ball_lebesgue(&u.norm)? })
    }

    /// Calls `f(base_multi_index, corner_values)` for every cube with a
    /// non-zero corner, slab by slab along the first axis, and sums the
    /// slab results in order.
    fn sum_over_cubes(&self, f: impl Fn(&[usize], &[f64]) -> f64 + Sync) -> f64 {
        let (dim, m) = (self.u.dim, self.u.m);
        let cubes = m - 1;
        let slabs: Vec<f64> = (0..cubes)
            .into_par_iter()
            .map(|b0| {
                let mut base = vec![0usize; dim];
                base[0] = b0;
                let mut corners = vec![0.0; self.corner_offsets.len()];
                let inner = cubes.pow(dim as u32 - 1);
                let mut acc = 0.0;
                for r in 0..inner {
                    let mut rr = r;
                    for k in (1..dim).rev() {
                        base[k] = rr % cubes;
                        rr /= cubes;
                    }
                    let flat: usize = base.iter().zip(&self.strides).map(|(b, s)| b * s).sum();
                    let mut any = false;
                    for (c, off) in corners.iter_mut().zip(&self.corner_offsets) {
                        *c = self.u.values[flat + off];
                        any |= *c != 0.0;
                    }
                    if any {
                        acc += f(&base, &corners);
                    }
                }
                acc
            })
            .collect();
        slabs.iter().sum()
    }

    fn energy(&self) -> f64 {
        let dim = self.u.dim;
        let (pts, wts) = tensor_rule(dim, 2);
        let h = self.h;
        let norm = &self.u.norm;
        let vol = h.powi(dim as i32);
        self.sum_over_cubes(|_, corners| {
            let mut g = [0.0; MAX_GRID_DIM];
            let mut acc = 0.0;
            for (xi, w) in pts.iter().zip(&wts) {
                for (k, gk) in g.iter_mut().enumerate().take(dim) {
                    let mut d = 0.0;
                    for (c, v) in corners.iter().enumerate() {
                        let mut phi = if c >> k & 1 == 1 { *v } else { -v };
                        for (j, t) in xi.iter().enumerate() {
                            if j != k {
                                phi *= if c >> j & 1 == 1 { *t } else { 1.0 - t };
                            }
                        }
                        d += phi;
                    }
                    *gk = d / h;
                }
                acc += w * norm.closed_form_dual(&g[..dim]).unwrap().powi(2);
            }
            acc * vol
        })
    }

    fn mass(&self) -> f64 {
        let dim = self.u.dim;
        let (pts, wts) = tensor_rule(dim, 3);
        let origin = self.u.m / 2;
        let singular = self.params.ap > 0.0;
        self.sum_over_cubes(|base, corners| {
            let touches = base.iter().all(|&b| b + 1 == origin || b == origin);
            let lo: Vec<f64> = base.iter().map(|&b| -self.u.half_width + b as f64 * self.h).collect();
            if singular && touches {
                // Local corner of the cube that sits at the origin.
                let o: Vec<f64> = base.iter().map(|&b| if b == origin { 0.0 } else { 1.0 }).collect();
                self.refined_mass(&lo, corners, &o, &pts, &wts)
            } else {
                self.gauss_mass(&lo, corners, &[0.0; MAX_GRID_DIM][..dim], 1.0, &pts, &wts)
            }
        })
    }

    /// Gauss rule on the sub-cube [start, start + side]ⁿ (local coordinates).
    fn gauss_mass(&self, lo: &[f64], corners: &[f64], start: &[f64], side: f64, pts: &[Vec<f64>], wts: &[f64]) -> f64 {
        let dim = lo.len();
        let (p, ap) = (self.params.p, self.params.ap);
        let mut xi = [0.0; MAX_GRID_DIM];
        let mut x = [0.0; MAX_GRID_DIM];
        let mut acc = 0.0;
        for (pt, w) in pts.iter().zip(wts) {
            for k in 0..dim {
                xi[k] = start[k] + side * pt[k];
                x[k] = lo[k] + self.h * xi[k];
            }
            let v = multilinear(corners, &xi[..dim]);
            if v <= 0.0 {
                continue;
            }
            let weight = if ap > 0.0 { self.u.norm.eval_unchecked(&x[..dim]).powf(-ap) } else { 1.0 };
            acc += w * v.powf(p) * weight;
        }
        acc * (self.h * side).powi(dim as i32)
    }

    /// Halves the cube towards the origin corner `o` down to ORIGIN_DEPTH;
    /// the last sub-cube uses the equal-volume F-ball mean of the weight.
    fn refined_mass(&self, lo: &[f64], corners: &[f64], o: &[f64], pts: &[Vec<f64>], wts: &[f64]) -> f64 {
        let dim = lo.len();
        let mut acc = 0.0;
        let mut side = 1.0;
        let mut start = [0.0; MAX_GRID_DIM];
        for k in 0..dim {
            start[k] = 0.0;
        }
        for _ in 0..ORIGIN_DEPTH {
            let half = 0.5 * side;
            for child in 0..1usize << dim {
                let mut cs = [0.0; MAX_GRID_DIM];
                let mut at_origin = true;
                for k in 0..dim {
                    let hi_half = child >> k & 1 == 1;
                    cs[k] = start[k] + if hi_half { half } else { 0.0 };
                    at_origin &= hi_half == (o[k] == 1.0);
                }
                if !at_origin {
                    acc += self.gauss_mass(lo, corners, &cs[..dim], half, pts, wts);
                }
            }
            for k in 0..dim {
                if o[k] == 1.0 {
                    start[k] += half;
                }
            }
            side = half;
        }
        let v0 = multilinear(corners, o).max(0.0);
        let cell = (self.h * side).powi(dim as i32);
        // The F-ball mean over a 2^n-fold larger volume, shared equally.
        let mean = origin_weight_mean(self.params, self.vol_f, cell * (1usize << dim) as f64);
        acc + v0.powf(self.params.p) * mean * cell
    }
}

/// Smooth test functions for the grid suites.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TestFunction {
    /// exp(1 − 1/(1 − t²)) with t = F(x − c)/r, or |x − c|/r when `euclidean`.
    Bump { center: Vec<f64>, radius: f64, euclidean: bool },
    /// exp(−Σ((x_k − c_k)/w_k)²), multiplied by a Euclidean bump of radius `cutoff`.
    Gaussian { center: Vec<f64>, widths: Vec<f64>, cutoff: f64 },
    Sum(Vec<(f64, TestFunction)>),
    /// (h_λ(F(x)) − h_λ(R))₊, R = `cut`·L.
    TruncatedExtremal { lambda: f64, cut: f64 },
}

fn smooth_bump(t: f64) -> f64 {
    if t >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

fn euclid_shift(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

impl TestFunction {
    fn eval(&self, params: &CknParams, norm: &MinkowskiNorm, half_width: f64, x: &[f64]) -> f64 {
        match self {
            TestFunction::Bump { center, radius, euclidean } => {
                let t = if *euclidean {
                    euclid_shift(x, center)
                } else {
                    let d: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
                    norm.eval_unchecked(&d)
                };
                smooth_bump(t / radius)
            }
            TestFunction::Gaussian { center, widths, cutoff } => {
                let q: f64 = x.iter().zip(center).zip(widths).map(|((a, c), w)| ((a - c) / w).powi(2)).sum();
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                (-q).exp() * smooth_bump(r / cutoff)
            }
            TestFunction::Sum(parts) => parts.iter().map(|(c, f)| c * f.eval(params, norm, half_width, x)).sum(),
            TestFunction::TruncatedExtremal { lambda, cut } => {
                let floor = params.extremal_unchecked(*lambda, cut * half_width);
                (params.extremal_unchecked(*lambda, norm.eval_unchecked(x)) - floor).max(0.0)
            }
        }
    }

    pub fn sample(&self, params: &CknParams, norm: &MinkowskiNorm, m: usize, half_width: f64) -> Result<GridFunction> {
        if let TestFunction::TruncatedExtremal { lambda, cut } = self {
            if !(*lambda > 0.0 && *cut > 0.0 && *cut < 1.0) {
                return Err(CknError::domain("truncated extremal needs lambda > 0 and 0 < cut < 1"));
            }
        }
        GridFunction::from_fn(norm.clone(), m, half_width, |x| self.eval(params, norm, half_width, x))
    }

    /// Whether the sampled function is F-radial non-increasing about 0.
    pub fn is_radial(&self) -> bool {
        match self {
            TestFunction::Bump { center, euclidean, .. } => !euclidean && center.iter().all(|c| *c == 0.0),
            TestFunction::TruncatedExtremal { .. } => true,
            _ => false,
        }
    }
}

/// Named constructors used by the command line; lengths are relative to L.
impl FromStr for TestFunction {
    type Err = CknError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize, default: f64| -> Result<f64> {
            parts.get(i).map_or(Ok(default), |t| t.parse().map_err(|_| CknError::domain(format!("bad number '{t}' in '{s}'"))))
        };
        // Dimension-free placeholders; `with_geometry` fixes them.
        let f = match parts[0] {
            "bump" => TestFunction::Bump { center: vec![], radius: num(1, 0.6)?, euclidean: false },
            "shifted-bump" => TestFunction::Bump { center: vec![0.2], radius: num(1, 0.5)?, euclidean: false },
            "euclidean-bump" => TestFunction::Bump { center: vec![], radius: num(1, 0.6)?, euclidean: true },
            "two-bump" => TestFunction::Sum(vec![
                (1.0, TestFunction::Bump { center: vec![0.35], radius: 0.3, euclidean: false }),
                (0.7, TestFunction::Bump { center: vec![-0.35], radius: 0.3, euclidean: false }),
            ]),
            "gaussian" => TestFunction::Gaussian { center: vec![], widths: vec![num(1, 0.2)?], cutoff: 0.75 },
            "extremal" => TestFunction::TruncatedExtremal { lambda: num(1, 1.0)?, cut: num(2, 0.9)? },
            other => {
                return Err(CknError::domain(format!(
                    "unknown test function '{other}' (bump, shifted-bump, euclidean-bump, two-bump, gaussian, extremal[:LAMBDA[:CUT]])"
                )))
            }
        };
        Ok(f)
    }
}

impl TestFunction {
    /// Expands the relative placeholders of a parsed name to absolute
    /// coordinates in dimension `dim` for a box of half-width L.
    pub fn with_geometry(self, dim: usize, half_width: f64) -> TestFunction {
        let axis = |c: &[f64]| -> Vec<f64> {
            let mut v = vec![0.0; dim];
            if let Some(c0) = c.first() {
                v[0] = c0 * half_width;
            }
            v
        };
        match self {
            TestFunction::Bump { center, radius, euclidean } => TestFunction::Bump { center: axis(&center), radius: radius * half_width, euclidean },
            TestFunction::Gaussian { center, widths, cutoff } => {
                let w = widths.first().copied().unwrap_or(0.2) * half_width;
                TestFunction::Gaussian { center: axis(&center), widths: vec![w; dim], cutoff: cutoff * half_width }
            }
            TestFunction::Sum(parts) => TestFunction::Sum(parts.into_iter().map(|(c, f)| (c, f.with_geometry(dim, half_width))).collect()),
            other => other,
        }
    }
}

/// Ten smooth compactly supported functions in a box of half-width L.
pub fn smooth_suite(dim: usize, half_width: f64) -> Vec<(String, TestFunction)> {
    let l = half_width;
    let at = |c: &[f64]| -> Vec<f64> { (0..dim).map(|k| c.get(k).copied().unwrap_or(0.0) * l).collect() };
    let bump = |c: &[f64], r: f64, euclidean: bool| TestFunction::Bump { center: at(c), radius: r * l, euclidean };
    let gauss = |c: &[f64], w: &[f64]| TestFunction::Gaussian {
        center: at(c),
        widths: (0..dim).map(|k| w[k % w.len()] * l).collect(),
        cutoff: 0.75 * l,
    };
    vec![
        ("centered-bump".into(), bump(&[], 0.6, false)),
        ("shifted-bump".into(), bump(&[0.2], 0.5, false)),
        ("euclidean-bump".into(), bump(&[], 0.6, true)),
        ("diagonal-euclidean-bump".into(), bump(&[0.15, 0.15, 0.15, 0.15], 0.5, true)),
        ("two-bump".into(), TestFunction::Sum(vec![(1.0, bump(&[0.35], 0.3, false)), (0.7, bump(&[-0.35], 0.3, false))])),
        ("gaussian".into(), gauss(&[], &[0.2])),
        ("anisotropic-gaussian".into(), gauss(&[0.1, -0.05], &[0.15, 0.25, 0.2, 0.18])),
        (
            "two-gaussian".into(),
            TestFunction::Sum(vec![(1.0, gauss(&[0.25, 0.1], &[0.12])), (0.5, gauss(&[-0.25, -0.1], &[0.15]))]),
        ),
        ("bump-plus-gaussian".into(), TestFunction::Sum(vec![(1.0, bump(&[-0.1], 0.5, true)), (0.8, gauss(&[0.2], &[0.1]))])),
        ("narrow-offaxis-bump".into(), bump(&[0.3, 0.2], 0.3, false)),
    ]
}

/// I.i.d. uniform values on a random fraction of the cells inside the
/// Euclidean ball of radius 0.7·L.
pub fn random_grid_function(norm: &MinkowskiNorm, m: usize, half_width: f64, seed: u64) -> Result<GridFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let density = rng.random_range(0.05..1.0);
    let dim = norm.dim();
    check_shape(dim, m, half_width)?;
    let h = 2.0 * half_width / m as f64;
    let mut x = vec![0.0; dim];
    let values = (0..m.pow(dim as u32))
        .map(|idx| {
            node_coords(idx, dim, m, half_width, h, &mut x);
            let inside = x.iter().map(|v| v * v).sum::<f64>().sqrt() < 0.7 * half_width;
            let draw: f64 = rng.random();
            let value: f64 = rng.random();
            if inside && draw < density {
                value
            } else {
                0.0
            }
        })
        .collect();
    GridFunction::new(norm.clone(), m, half_width, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::make_params;

    fn euclid3() -> MinkowskiNorm {
        MinkowskiNorm::euclidean(3).unwrap()
    }

    #[test]
    fn symmetrize_fixed_point_and_idempotent() {
        let p = make_params(3, 0.0).unwrap();
        let f = TestFunction::Bump { center: vec![0.0; 3], radius: 2.0, euclidean: false };
        let u = f.sample(&p, &euclid3(), 16, 4.0).unwrap();
        let s = symmetrize(&u).unwrap();
        let mut a = u.values().to_vec();
        let mut b = s.values().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        assert_eq!(symmetrize(&s).unwrap(), s);
    }

    #[test]
    fn boundary_support_is_rejected() {
        let mut v = vec![0.0; 8usize.pow(3)];
        v[1] = 1.0;
        let u = GridFunction::new(euclid3(), 8, 1.0, v).unwrap();
        assert!(matches!(symmetrize(&u), Err(CknError::Domain(_))));
    }

    #[test]
    fn hardy_littlewood_equal_at_a_zero() {
        let p = make_params(3, 0.0).unwrap();
        let u = random_grid_function(&euclid3(), 16, 1.0, 3).unwrap();
        let r = check_hardy_littlewood(&p, &u).unwrap();
        assert_eq!(r.lhs, r.rhs);
    }

    #[test]
    fn binary_round_trip() {
        let u = random_grid_function(&MinkowskiNorm::lq(3, 4.0).unwrap(), 8, 2.0, 1).unwrap();
        assert_eq!(GridFunction::from_binary(&u.to_binary().unwrap()).unwrap(), u);
        assert_eq!(GridFunction::from_csv(&u.to_csv().unwrap()).unwrap(), u);
    }
}
