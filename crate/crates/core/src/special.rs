//! Gamma function and unit-ball volumes.
//!
//! The primary route is the Lanczos approximation with the coefficient set
//! from G. R. Pugh, "An Analysis of the Lanczos Gamma Approximation" (2004),
//! r = 10.900511, eleven terms. A second, independent route based on the
//! Stirling series with upward recurrence is kept for cross-checks; the two
//! share no coefficients.

use std::f64::consts::{E, PI};

use crate::error::{CknError, Result};

const LANCZOS_R: f64 = 10.900511;

#[allow(clippy::excessive_precision)]
const LANCZOS_DK: [f64; 11] = [
    2.48574089138753565546e-5,
    1.05142378581721974210,
    -3.45687097222016235469,
    4.51227709466894823700,
    -2.98285225323576655721,
    1.05639711577126713077,
    -1.95428773191645869583e-1,
    1.70970543404441224307e-2,
    -5.71926117404305781283e-4,
    4.63399473359905636708e-6,
    -2.71994908488607703910e-9,
];

#[allow(clippy::excessive_precision)]
const TWO_SQRT_E_OVER_PI: f64 = 1.860382734205265717336249247266663112059;
#[allow(clippy::excessive_precision)]
const LN_TWO_SQRT_E_OVER_PI: f64 = 0.6207822376352452223455184457816472122519;
#[allow(clippy::excessive_precision)]
const HALF_LN_TWO_PI: f64 = 0.9189385332046727417803297364056176398614;

fn lanczos_sum(x: f64) -> f64 {
    LANCZOS_DK
        .iter()
        .enumerate()
        .skip(1)
        .fold(LANCZOS_DK[0], |s, (i, &dk)| s + dk / (x + i as f64 - 1.0))
}

/// Γ(x) for real `x` (reflection below 1/2).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        lanczos_sum(x) * TWO_SQRT_E_OVER_PI * ((x - 0.5 + LANCZOS_R) / E).powf(x - 0.5)
    }
}

/// ln Γ(x) for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x < 0.5 {
        // ln Γ(x) = ln Γ(x + 1) − ln x keeps us on the Lanczos branch.
        return ln_gamma(x + 1.0) - x.ln();
    }
    lanczos_sum(x).ln() + LN_TWO_SQRT_E_OVER_PI + (x - 0.5) * ((x - 0.5 + LANCZOS_R) / E).ln()
}

/// ln Γ(x) for `x > 0` through the asymptotic Stirling series, shifted
/// upward with Γ(x + 1) = xΓ(x) until the series is accurate.
pub fn ln_gamma_stirling(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    const SHIFT_TO: f64 = 16.0;
    let mut shift = 0.0;
    let mut y = x;
    while y < SHIFT_TO {
        shift += y.ln();
        y += 1.0;
    }
    let inv = 1.0 / y;
    let inv2 = inv * inv;
    // Bernoulli terms B_{2k} / (2k (2k - 1)).
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2 * (1.0 / 1188.0 + inv2 * (-691.0 / 360360.0 + inv2 / 156.0))))));
    (y - 0.5) * y.ln() - y + HALF_LN_TWO_PI + series - shift
}

/// Volume ω_n of the Euclidean unit ball in ℝⁿ, π^{n/2} / Γ(n/2 + 1).
pub fn unit_ball_volume(n: u32) -> Result<f64> {
    if n < 1 {
        return Err(CknError::domain("unit ball volume needs dimension n >= 1"));
    }
    // ω_n = ω_{n-2} · 2π / n, seeded by ω_0 = 1 and ω_1 = 2; exact up to
    // rounding of the products.
    let mut omega = if n % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if n % 2 == 0 { 2 } else { 3 };
    while k <= n {
        omega *= 2.0 * PI / k as f64;
        k += 2;
    }
    Ok(omega)
}

/// Surface area n·ω_n of the unit sphere S^{n-1} ⊂ ℝⁿ.
pub fn unit_sphere_area(n: u32) -> Result<f64> {
    Ok(n as f64 * unit_ball_volume(n)?)
}
