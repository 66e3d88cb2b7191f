//! Radial Rayleigh quotient
//!
//! R(h) = (nω_n)^{1/2−1/p} (∫₀^∞ h′²ρ^{n−1}dρ)^{1/2} / (∫₀^∞ h^p ρ^{n−1−ap}dρ)^{1/p},
//!
//! its value on the extremal family, and a projected-gradient minimizer over
//! non-increasing piecewise-linear profiles.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CknError, Result};
use crate::interp::Pchip;
use crate::params::CknParams;
use crate::quadrature::GaussLegendre;

/// A non-negative profile h on 0 = ρ₀ < ρ₁ < … < ρ_M, continued by
/// h(ρ_M)(ρ/ρ_M)^τ beyond the last node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProfile {
    grid: Vec<f64>,
    values: Vec<f64>,
    tail_exponent: f64,
}

impl RadialProfile {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, tail_exponent: f64) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(CknError::domain("profile grid and values differ in length"));
        }
        if grid.len() < 3 {
            return Err(CknError::InsufficientData("profile needs at least three nodes".into()));
        }
        if grid[0] != 0.0 {
            return Err(CknError::domain("profile grid must start at 0"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) || !grid.iter().all(|r| r.is_finite()) {
            return Err(CknError::domain("profile grid must be strictly increasing and finite"));
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(CknError::domain("profile values must be finite and non-negative"));
        }
        if !tail_exponent.is_finite() {
            return Err(CknError::domain("tail exponent must be finite"));
        }
        Ok(RadialProfile { grid, values, tail_exponent })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tail_exponent(&self) -> f64 {
        self.tail_exponent
    }

    pub fn is_non_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn scaled(&self, c: f64) -> Self {
        RadialProfile {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
            tail_exponent: self.tail_exponent,
        }
    }

    /// h_λ sampled on `grid` with its exact decay exponent 2 − n.
    pub fn extremal(params: &CknParams, lambda: f64, grid: Vec<f64>) -> Result<Self> {
        let values = grid.iter().map(|&r| params.extremal(lambda, r)).collect::<Result<Vec<_>>>()?;
        RadialProfile::new(grid, values, 2.0 - params.dim())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rho,value\n");
        for (r, v) in self.grid.iter().zip(&self.values) {
            let _ = writeln!(out, "{r:.17e},{v:.17e}");
        }
        let _ = writeln!(out, "# tail_exponent {}", self.tail_exponent);
        out
    }

    /// Parses the CSV written by [`RadialProfile::to_csv`].
    pub fn from_csv(text: &str, default_tail: f64) -> Result<Self> {
        let mut grid = Vec::new();
        let mut values = Vec::new();
        let mut tail = default_tail;
        let mut header = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# tail_exponent") {
                tail = rest.trim().parse().map_err(|_| CknError::parse(i + 1, "bad tail exponent"))?;
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            if !header {
                if line.replace(' ', "") != "rho,value" {
                    return Err(CknError::parse(i + 1, format!("expected header 'rho,value', found '{line}'")));
                }
                header = true;
                continue;
            }
            let mut cols = line.split(',');
            let mut next = || -> Result<f64> {
                cols.next()
                    .and_then(|t| t.trim().parse().ok())
                    .ok_or_else(|| CknError::parse(i + 1, format!("malformed row '{line}'")))
            };
            grid.push(next()?);
            values.push(next()?);
        }
        RadialProfile::new(grid, values, tail)
    }
}

/// Tail integrals of h_M (ρ/ρ_M)^τ beyond ρ_M: (energy, mass) factors,
/// so that the contributions are `energy·h_M²` and `mass·h_M^p`.
fn tail_factors(params: &CknParams, rho_m: f64, tau: f64) -> Result<(f64, f64)> {
    let n = params.dim();
    let e_exp = 2.0 * tau + n - 2.0;
    let m_exp = params.p * tau + n - params.ap;
    if tau > 2.0 - n || e_exp >= 0.0 || m_exp >= 0.0 {
        return Err(CknError::domain(format!(
            "tail exponent {tau} is not integrable (needs tau <= 2 - n = {})",
            2.0 - n
        )));
    }
    Ok((tau * tau * rho_m.powf(n - 2.0) / -e_exp, rho_m.powf(n - params.ap) / -m_exp))
}

fn prefactor(params: &CknParams) -> f64 {
    (params.dim() * params.omega).powf(0.5 - 1.0 / params.p)
}

/// The quotient of a profile through monotone cubic interpolation,
/// Gauss–Legendre on each cell and the analytic tail.
pub fn rayleigh_quotient(params: &CknParams, h: &RadialProfile) -> Result<f64> {
    let (energy, mass) = quotient_parts(params, h)?;
    Ok(prefactor(params) * energy.sqrt() / mass.powf(1.0 / params.p))
}

fn quotient_parts(params: &CknParams, h: &RadialProfile) -> Result<(f64, f64)> {
    if h.values.iter().all(|&v| v == 0.0) {
        return Err(CknError::Degenerate("zero profile has no Rayleigh quotient".into()));
    }
    let n = params.dim();
    let rho_m = *h.grid.last().unwrap();
    let (te, tm) = tail_factors(params, rho_m, h.tail_exponent)?;
    let spline = Pchip::new(h.grid.clone(), h.values.clone())?;
    let gl = GaussLegendre::new(8);
    let w_exp = n - 1.0 - params.ap;
    let mut energy = 0.0;
    let mut mass = 0.0;
    for i in 0..h.grid.len() - 1 {
        let (a, b) = (h.grid[i], h.grid[i + 1]);
        energy += gl.integrate(|r| spline.derivative(r).powi(2) * r.powf(n - 1.0), a, b);
        mass += gl.integrate(|r| spline.eval(r).max(0.0).powf(params.p) * r.powf(w_exp), a, b);
    }
    let hm = *h.values.last().unwrap();
    energy += te * hm * hm;
    mass += tm * hm.powf(params.p);
    if !(mass > 0.0) {
        return Err(CknError::Degenerate("denominator integral vanishes".into()));
    }
    Ok((energy, mass))
}

/// Grid used by [`verify_extremal`]: 0 followed by log-spaced nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub nodes: usize,
    /// First positive node, in units of the extremal's length scale.
    pub rho_min_factor: f64,
    /// Last node, in units of the extremal's length scale.
    pub rho_max_factor: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { nodes: 2000, rho_min_factor: 1e-5, rho_max_factor: 1e3 }
    }
}

impl GridSpec {
    pub fn with_nodes(nodes: usize) -> Self {
        GridSpec { nodes, ..Default::default() }
    }

    pub fn build(&self, scale: f64) -> Vec<f64> {
        radial_grid(self.nodes, self.rho_min_factor * scale, self.rho_max_factor * scale)
    }

    /// Grid for h_λ. The extremal is a function of (ρ/scale)^s, so the
    /// factors are raised to 2/s to cover the same range of that variable
    /// as in the s = 2 case.
    pub fn build_for(&self, params: &CknParams, lambda: f64) -> Vec<f64> {
        let stretch = 2.0 / params.s;
        let scale = params.length_scale(lambda);
        radial_grid(self.nodes, self.rho_min_factor.powf(stretch) * scale, self.rho_max_factor.powf(stretch) * scale)
    }
}

/// 0 followed by `positive` log-spaced nodes from `lo` to `hi`.
pub fn radial_grid(positive: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(positive + 1);
    g.push(0.0);
    let (l0, l1) = (lo.ln(), hi.ln());
    for i in 0..positive {
        g.push((l0 + (l1 - l0) * i as f64 / (positive - 1).max(1) as f64).exp());
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremalReport {
    pub n: u32,
    pub a: f64,
    pub lambda: f64,
    pub nodes: usize,
    pub quotient: f64,
    pub target: f64,
    pub gap: f64,
    /// (nodes, gap) at coarser resolutions.
    pub resolution_study: Vec<(usize, f64)>,
}

pub const EXTREMAL_TOL: f64 = 1e-4;

/// |R(h_λ) − K_a⁻¹| / K_a⁻¹ on the given grid.
pub fn extremal_gap(params: &CknParams, lambda: f64, spec: &GridSpec) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(CknError::domain(format!("lambda = {lambda} must be positive")));
    }
    let grid = spec.build_for(params, lambda);
    let h = RadialProfile::extremal(params, lambda, grid)?;
    let target = params.sharp_constant().inverse();
    Ok((rayleigh_quotient(params, &h)? - target).abs() / target)
}

/// Samples h_λ, compares its quotient with K_a⁻¹ and records how the gap
/// behaves at coarser resolutions.
pub fn verify_extremal(params: &CknParams, lambda: f64, spec: &GridSpec) -> Result<ExtremalReport> {
    let grid = spec.build_for(params, lambda);
    let h = RadialProfile::extremal(params, lambda, grid)?;
    let target = params.sharp_constant().inverse();
    let quotient = rayleigh_quotient(params, &h)?;
    let mut resolution_study = Vec::new();
    for nodes in [50usize, 100, 200, 500, 1000] {
        if nodes < spec.nodes {
            resolution_study.push((nodes, extremal_gap(params, lambda, &GridSpec { nodes, ..*spec })?));
        }
    }
    Ok(ExtremalReport {
        n: params.n,
        a: params.a,
        lambda,
        nodes: spec.nodes,
        quotient,
        target,
        gap: (quotient - target).abs() / target,
        resolution_study,
    })
}

/// The quotient of the piecewise-linear interpolant of node values, with
/// exact cell energies, Gauss–Legendre masses and the analytic tail. Every
/// admissible vector is the profile of a genuine H¹ function, so the value
/// never drops below K_a⁻¹ beyond quadrature error.
#[derive(Debug, Clone)]
pub struct DiscreteQuotient {
    params: CknParams,
    grid: Vec<f64>,
    tau: f64,
    /// ∫ρ^{n−1} over cell i divided by its squared width.
    cell_energy: Vec<f64>,
    /// (t, weight·ρ^{n−1−ap}) per cell.
    cell_mass: Vec<Vec<(f64, f64)>>,
    tail_energy: f64,
    tail_mass: f64,
    prefactor: f64,
}

const MASS_ORDER: usize = 6;

impl DiscreteQuotient {
    pub fn new(params: &CknParams, grid: Vec<f64>, tau: f64) -> Result<Self> {
        if grid.len() < 3 || grid[0] != 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CknError::domain("grid must start at 0 and increase strictly"));
        }
        let n = params.dim();
        let (tail_energy, tail_mass) = tail_factors(params, *grid.last().unwrap(), tau)?;
        let gl = GaussLegendre::new(MASS_ORDER);
        let w_exp = n - 1.0 - params.ap;
        let mut cell_energy = Vec::with_capacity(grid.len() - 1);
        let mut cell_mass = Vec::with_capacity(grid.len() - 1);
        for w in grid.windows(2) {
            let (a, b) = (w[0], w[1]);
            let d = b - a;
            cell_energy.push((b.powf(n) - a.powf(n)) / (n * d * d));
            cell_mass.push(
                gl.nodes()
                    .iter()
                    .zip(gl.weights())
                    .map(|(x, wq)| {
                        let t = 0.5 * (x + 1.0);
                        let r = a + d * t;
                        (t, 0.5 * d * wq * r.powf(w_exp))
                    })
                    .collect(),
            );
        }
        Ok(DiscreteQuotient {
            params: *params,
            grid,
            tau,
            cell_energy,
            cell_mass,
            tail_energy,
            tail_mass,
            prefactor: prefactor(params),
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn energy(&self, v: &[f64]) -> f64 {
        let m = v.len() - 1;
        let cells: f64 = self.cell_energy.iter().enumerate().map(|(i, w)| w * (v[i + 1] - v[i]).powi(2)).sum();
        cells + self.tail_energy * v[m] * v[m]
    }

    pub fn mass(&self, v: &[f64]) -> f64 {
        let p = self.params.p;
        let m = v.len() - 1;
        let mut total = 0.0;
        for (i, cell) in self.cell_mass.iter().enumerate() {
            let (a, b) = (v[i], v[i + 1]);
            for &(t, w) in cell {
                let l = (a + (b - a) * t).max(0.0);
                total += w * l.powf(p);
            }
        }
        total + self.tail_mass * v[m].max(0.0).powf(p)
    }

    pub fn quotient(&self, v: &[f64]) -> f64 {
        self.prefactor * self.energy(v).sqrt() / self.mass(v).powf(1.0 / self.params.p)
    }

    /// Quotient and its gradient with respect to the node values.
    pub fn quotient_and_gradient(&self, v: &[f64]) -> (f64, Vec<f64>) {
        let p = self.params.p;
        let m = v.len() - 1;
        let mut ge = vec![0.0; v.len()];
        let mut gd = vec![0.0; v.len()];
        let mut energy = 0.0;
        let mut mass = 0.0;
        for (i, (w, cell)) in self.cell_energy.iter().zip(&self.cell_mass).enumerate() {
            let (a, b) = (v[i], v[i + 1]);
            let d = b - a;
            energy += w * d * d;
            ge[i] -= 2.0 * w * d;
            ge[i + 1] += 2.0 * w * d;
            for &(t, wq) in cell {
                let l = (a + d * t).max(0.0);
                let lp1 = if l > 0.0 { l.powf(p - 1.0) } else { 0.0 };
                mass += wq * lp1 * l;
                gd[i] += wq * p * lp1 * (1.0 - t);
                gd[i + 1] += wq * p * lp1 * t;
            }
        }
        let vm = v[m].max(0.0);
        energy += self.tail_energy * v[m] * v[m];
        ge[m] += 2.0 * self.tail_energy * v[m];
        let vp1 = if vm > 0.0 { vm.powf(p - 1.0) } else { 0.0 };
        mass += self.tail_mass * vp1 * vm;
        gd[m] += self.tail_mass * p * vp1;
        let r = self.prefactor * energy.sqrt() / mass.powf(1.0 / p);
        let grad = ge.iter().zip(&gd).map(|(e, d)| r * (e / (2.0 * energy) - d / (p * mass))).collect();
        (r, grad)
    }

    /// Diagonal of the energy Hessian, used as preconditioner.
    fn preconditioner(&self) -> Vec<f64> {
        let m = self.grid.len() - 1;
        let mut d = vec![0.0; m + 1];
        for (i, w) in self.cell_energy.iter().enumerate() {
            d[i] += w;
            d[i + 1] += w;
        }
        d[m] += self.tail_energy;
        let floor = d.iter().cloned().fold(0.0, f64::max) * 1e-14;
        d.iter().map(|x| x.max(floor)).collect()
    }

    pub fn tail_exponent(&self) -> f64 {
        self.tau
    }
}

/// Weighted isotonic (non-increasing) regression by pool-adjacent-violators.
pub fn pav_non_increasing(y: &[f64], w: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (&yi, &wi) in y.iter().zip(w) {
        blocks.push((yi, wi, 1));
        while blocks.len() > 1 {
            let k = blocks.len();
            if blocks[k - 2].0 >= blocks[k - 1].0 {
                break;
            }
            let (v2, w2, c2) = blocks.pop().unwrap();
            let (v1, w1, c1) = blocks.pop().unwrap();
            let wt = w1 + w2;
            blocks.push(((v1 * w1 + v2 * w2) / wt, wt, c1 + c2));
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for (v, _, c) in blocks {
        out.extend(std::iter::repeat_n(v, c));
    }
    out
}

fn project(y: &[f64], w: &[f64]) -> Vec<f64> {
    pav_non_increasing(y, w).into_iter().map(|x| x.max(0.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub quotient: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizeResult {
    pub profile: RadialProfile,
    pub quotient: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

impl MinimizeResult {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,quotient,step\n");
        for t in &self.trace {
            let _ = writeln!(out, "{},{:.17e},{:.17e}", t.iter, t.quotient, t.step);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    pub iters: usize,
    /// Stop once the relative decrease per iteration stays below this.
    pub rel_tol: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { iters: 20_000, rel_tol: 1e-10 }
    }
}

const ARMIJO: f64 = 1e-4;
const STALL_ITERS: usize = 5;

/// Projected gradient descent with Barzilai–Borwein steps, a diagonal
/// preconditioner and monotone Armijo backtracking; every iterate is kept
/// non-increasing, non-negative and normalized to unit denominator.
pub fn minimize_quotient(
    params: &CknParams,
    init: &RadialProfile,
    seed: u64,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    let dq = DiscreteQuotient::new(params, init.grid.clone(), 2.0 - params.dim())?;
    minimize_discrete(&dq, init.values(), seed, opts)
}

pub fn minimize_discrete(dq: &DiscreteQuotient, init: &[f64], seed: u64, opts: &MinimizeOptions) -> Result<MinimizeResult> {
    let p = dq.params.p;
    let precond = dq.preconditioner();
    let normalize = |v: &mut Vec<f64>| -> Result<()> {
        let d = dq.mass(v);
        if !(d > 0.0 && d.is_finite()) {
            return Err(CknError::Degenerate("profile has zero denominator".into()));
        }
        let s = d.powf(-1.0 / p);
        v.iter_mut().for_each(|x| *x *= s);
        Ok(())
    };
    let mut x = project(init, &precond);
    normalize(&mut x)?;
    let (mut r, mut g) = dq.quotient_and_gradient(&x);
    // Seed only breaks exact ties in the first step length; runs are reproducible.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alpha = {
        let gp: f64 = g.iter().zip(&precond).map(|(gi, pi)| gi * gi / pi).sum();
        let xp: f64 = x.iter().zip(&precond).map(|(xi, pi)| xi * xi * pi).sum();
        (1e-2 * (xp / gp.max(f64::MIN_POSITIVE)).sqrt()) * (1.0 + 1e-9 * rng.random::<f64>())
    };
    let mut trace = vec![TraceEntry { iter: 0, quotient: r, step: 0.0 }];
    let mut stall = 0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.iters {
        let mut step = alpha;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&g).zip(&precond).map(|((xi, gi), pi)| xi - step * gi / pi).collect();
            let mut trial = project(&trial, &precond);
            let decrease: f64 = g.iter().zip(&trial).zip(&x).map(|((gi, ti), xi)| gi * (ti - xi)).sum();
            if trial.iter().all(|&t| t == 0.0) {
                step *= 0.5;
                continue;
            }
            let rt = dq.quotient(&trial);
            if !rt.is_finite() {
                return Err(CknError::Numeric { message: format!("quotient became non-finite at iteration {it}"), best: r });
            }
            if rt <= r + ARMIJO * decrease {
                normalize(&mut trial)?;
                accepted = Some(trial);
                break;
            }
            step *= 0.5;
        }
        iterations = it;
        let Some(xn) = accepted else {
            converged = true;
            break;
        };
        let (rn, gn) = dq.quotient_and_gradient(&xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sps: f64 = s.iter().zip(&precond).map(|(si, pi)| si * si * pi).sum();
        let sy: f64 = s.iter().zip(&y).map(|(si, yi)| si * yi).sum();
        alpha = if sy > 0.0 { sps / sy } else { 2.0 * step };
        let decrease = r - rn;
        trace.push(TraceEntry { iter: it, quotient: rn, step });
        x = xn;
        g = gn;
        r = rn;
        if decrease <= opts.rel_tol * r {
            stall += 1;
            if stall >= STALL_ITERS {
                converged = true;
                break;
            }
        } else {
            stall = 0;
        }
    }
    Ok(MinimizeResult {
        profile: RadialProfile::new(dq.grid.clone(), x, dq.tau)?,
        quotient: r,
        iterations,
        converged,
        trace,
    })
}

/// Default minimizer grid: 0 then 400 log-spaced nodes over [10⁻⁴, 10³].
pub fn default_minimizer_grid() -> Vec<f64> {
    radial_grid(400, 1e-4, 1e3)
}

/// A random non-increasing initial profile: a positive combination of
/// decreasing bumps with random widths and shapes, cut off at a random radius.
pub fn random_initial_profile(params: &CknParams, grid: Vec<f64>, seed: u64) -> Result<RadialProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps: Vec<(f64, f64, f64)> = (0..rng.random_range(1..=4))
        .map(|_| {
            let c = rng.random_range(0.1..1.0);
            let width = 10f64.powf(rng.random_range(-0.7..0.7));
            let shape = rng.random_range(1.0..4.0);
            (c, width, shape)
        })
        .collect();
    let cutoff = 10f64.powf(rng.random_range(0.5..2.0));
    let values: Vec<f64> = grid
        .iter()
        .map(|&r| {
            if r >= cutoff {
                return 0.0;
            }
            let taper = 1.0 - r / cutoff;
            bumps.iter().map(|(c, w, s)| c * (-(r / w).powf(*s)).exp()).sum::<f64>() * taper
        })
        .collect();
    RadialProfile::new(grid, values, 2.0 - params.dim())
}

/// Plateau of height 1 on [0, width] falling linearly to 0 over one more width.
pub fn plateau_profile(params: &CknParams, grid: Vec<f64>, width: f64) -> Result<RadialProfile> {
    let values = grid.iter().map(|&r| (2.0 - r / width).clamp(0.0, 1.0)).collect();
    RadialProfile::new(grid, values, 2.0 - params.dim())
}

/// exp(−ρ²/width²).
pub fn gaussian_profile(params: &CknParams, grid: Vec<f64>, width: f64) -> Result<RadialProfile> {
    let values = grid.iter().map(|&r| (-(r / width).powi(2)).exp()).collect();
    RadialProfile::new(grid, values, 2.0 - params.dim())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaFit {
    pub lambda: f64,
    pub amplitude: f64,
    /// ‖v − c·h_λ‖ / ‖v‖ over the grid nodes.
    pub relative_l2: f64,
}

/// Least-squares fit of c·h_λ to a profile: c in closed form, λ by
/// golden-section search in log λ.
pub fn fit_lambda(params: &CknParams, profile: &RadialProfile) -> Result<LambdaFit> {
    let v = profile.values();
    let norm_v = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_v == 0.0 {
        return Err(CknError::Degenerate("cannot fit a zero profile".into()));
    }
    let misfit = |log_l: f64| -> (f64, f64) {
        let l = log_l.exp();
        let h: Vec<f64> = profile.grid().iter().map(|&r| params.extremal_unchecked(l, r)).collect();
        let hh: f64 = h.iter().map(|x| x * x).sum();
        let c = h.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / hh;
        let res = v.iter().zip(&h).map(|(a, b)| (a - c * b).powi(2)).sum::<f64>().sqrt() / norm_v;
        (res, c)
    };
    // Coarse scan then golden section.
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=80 {
        let ll = -20.0 + 0.5 * i as f64;
        let (res, _) = misfit(ll);
        if res < best.0 {
            best = (res, ll);
        }
    }
    let (mut lo, mut hi) = (best.1 - 0.5, best.1 + 0.5);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if misfit(m1).0 < misfit(m2).0 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let ll = 0.5 * (lo + hi);
    let (relative_l2, amplitude) = misfit(ll);
    Ok(LambdaFit { lambda: ll.exp(), amplitude, relative_l2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::make_params;

    #[test]
    fn extremal_quotient_matches_constant() {
        for (n, a, l) in [(3, 0.0, 1.0), (4, 0.5, 2.0)] {
            let p = make_params(n, a).unwrap();
            let r = verify_extremal(&p, l, &GridSpec::default()).unwrap();
            assert!(r.gap <= EXTREMAL_TOL, "n={n} a={a}: gap {}", r.gap);
        }
    }

    #[test]
    fn pav_basic() {
        let y = [1.0, 3.0, 2.0, 0.5, 0.7];
        let out = pav_non_increasing(&y, &[1.0; 5]);
        assert!(out.windows(2).all(|w| w[1] <= w[0]));
        assert!((out[0] - 2.0).abs() < 1e-15 && (out[3] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn zero_profile_is_degenerate() {
        let p = make_params(3, 0.0).unwrap();
        let h = RadialProfile::new(vec![0.0, 1.0, 2.0], vec![0.0; 3], -1.0).unwrap();
        assert!(matches!(rayleigh_quotient(&p, &h), Err(CknError::Degenerate(_))));
        let bad = RadialProfile::new(vec![0.0, 1.0, 2.0], vec![1.0; 3], -0.5).unwrap();
        assert!(matches!(rayleigh_quotient(&p, &bad), Err(CknError::Domain(_))));
    }
}
