//! CKN parameter triples, the sharp constant and the extremal family.

use serde::Serialize;

use crate::error::{CknError, Result};
use crate::special::{ln_gamma, unit_ball_volume};

/// The triple (n, a, p) with p = 2n / (n − 2 + 2a), plus every exponent the
/// rest of the crate needs, computed once at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CknParams {
    pub n: u32,
    pub a: f64,
    pub p: f64,
    /// The product a·p.
    pub ap: f64,
    /// 2 − ap, the power of ρ inside the extremal.
    pub s: f64,
    /// (2 − n) / (2 − ap): decay exponent of the extremal family.
    pub extremal_exponent: f64,
    /// n / (a − 1): exponent of (λ + ρ^s) in the kernel f.
    pub kernel_exponent: f64,
    /// (n − 1 + a) / (a − 1): exponent inside the auxiliary Q function.
    pub q_exponent: f64,
    /// (n − 2 + 2a) / (2(a − 1)): homogeneity of Q_E in λ.
    pub scaling_exponent: f64,
    /// (n − 1 + a) / (1 − a).
    pub mass_ratio: f64,
    /// ω_n.
    pub omega: f64,
}

impl CknParams {
    pub fn new(n: u32, a: f64) -> Result<Self> {
        if n < 3 {
            return Err(CknError::domain(format!("dimension n = {n} violates n >= 3")));
        }
        if !a.is_finite() || a < 0.0 {
            return Err(CknError::domain(format!("weight a = {a} violates a >= 0")));
        }
        if a >= 1.0 {
            return Err(CknError::domain(format!("weight a = {a} violates a < 1")));
        }
        let nf = n as f64;
        let p = 2.0 * nf / (nf - 2.0 + 2.0 * a);
        let ap = a * p;
        if ap >= 2.0 {
            return Err(CknError::domain(format!("a·p = {ap} violates a·p < 2")));
        }
        let params = CknParams {
            n,
            a,
            p,
            ap,
            s: 2.0 - ap,
            extremal_exponent: (2.0 - nf) / (2.0 - ap),
            kernel_exponent: nf / (a - 1.0),
            q_exponent: (nf - 1.0 + a) / (a - 1.0),
            scaling_exponent: (nf - 2.0 + 2.0 * a) / (2.0 * (a - 1.0)),
            mass_ratio: (nf - 1.0 + a) / (1.0 - a),
            omega: unit_ball_volume(n)?,
        };
        Ok(params)
    }

    pub fn dim(&self) -> f64 {
        self.n as f64
    }

    /// The sharp constant K_a, evaluated in log space so that the large
    /// Γ arguments arising as a → 1 do not overflow.
    pub fn sharp_constant(&self) -> SharpConstant {
        SharpConstant {
            value: self.ln_sharp_constant_with(ln_gamma).exp(),
            params: *self,
        }
    }

    /// ln K_a using the supplied log-gamma implementation.
    pub fn ln_sharp_constant_with(&self, ln_gamma: impl Fn(f64) -> f64) -> f64 {
        let n = self.dim();
        let ap = self.ap;
        let two_minus_ap = 2.0 - ap;
        let outer = -0.5 * ((n - 2.0) * (n - ap)).ln();
        let big = ln_gamma((2.0 * n - 2.0 * ap) / two_minus_ap);
        let small = ln_gamma((n - ap) / two_minus_ap);
        let inner = two_minus_ap.ln() + big - (n * self.omega).ln() - 2.0 * small;
        outer + inner * two_minus_ap / (2.0 * n - 2.0 * ap)
    }

    /// Extremal profile h_λ(ρ) = (λ + ρ^{2−ap})^{(2−n)/(2−ap)}.
    pub fn extremal(&self, lambda: f64, rho: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(CknError::domain(format!("extremal needs lambda > 0, got {lambda}")));
        }
        if !(rho >= 0.0) {
            return Err(CknError::domain(format!("extremal needs rho >= 0, got {rho}")));
        }
        Ok(self.extremal_unchecked(lambda, rho))
    }

    #[inline]
    pub(crate) fn extremal_unchecked(&self, lambda: f64, rho: f64) -> f64 {
        (lambda + rho.powf(self.s)).powf(self.extremal_exponent)
    }

    /// ρ-derivative of the extremal.
    #[inline]
    pub fn extremal_derivative(&self, lambda: f64, rho: f64) -> f64 {
        if rho == 0.0 {
            return if self.s < 1.0 {
                f64::NEG_INFINITY
            } else if self.s == 1.0 {
                self.extremal_exponent * lambda.powf(self.extremal_exponent - 1.0)
            } else {
                0.0
            };
        }
        let base = lambda + rho.powf(self.s);
        self.extremal_exponent * self.s * rho.powf(self.s - 1.0) * base.powf(self.extremal_exponent - 1.0)
    }

    /// Natural length scale λ^{1/(2−ap)} of h_λ.
    pub fn length_scale(&self, lambda: f64) -> f64 {
        lambda.powf(1.0 / self.s)
    }
}

/// K_a together with the parameters it was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SharpConstant {
    pub value: f64,
    #[serde(skip)]
    pub params: CknParams,
}

impl SharpConstant {
    pub fn inverse(&self) -> f64 {
        1.0 / self.value
    }
}

/// Convenience wrapper for `CknParams::new`.
pub fn make_params(n: u32, a: f64) -> Result<CknParams> {
    CknParams::new(n, a)
}

pub fn sharp_constant(params: &CknParams) -> SharpConstant {
    params.sharp_constant()
}

pub fn extremal_profile(params: &CknParams, lambda: f64, rho: f64) -> Result<f64> {
    params.extremal(lambda, rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::ln_gamma_stirling;
    use std::f64::consts::PI;

    #[test]
    fn params_examples() {
        let p = make_params(3, 0.0).unwrap();
        assert_eq!(p.p, 6.0);
        assert_eq!(p.ap, 0.0);
        let p = make_params(4, 0.5).unwrap();
        assert!((p.p - 8.0 / 3.0).abs() < 1e-15);
        assert!((p.ap - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn params_bounds_named() {
        let err = make_params(3, 1.0).unwrap_err().to_string();
        assert!(err.contains("a < 1"), "{err}");
        let err = make_params(2, 0.0).unwrap_err().to_string();
        assert!(err.contains("n >= 3"), "{err}");
        let err = make_params(3, -0.1).unwrap_err().to_string();
        assert!(err.contains("a >= 0"), "{err}");
        assert!(make_params(3, f64::NAN).is_err());
    }

    #[test]
    fn exponent_identity() {
        for n in 3..=8u32 {
            for i in 0..10 {
                let a = i as f64 * 0.1;
                let p = make_params(n, a).unwrap();
                let nf = n as f64;
                let lhs = (2.0 - nf) * p.p / (2.0 - p.ap);
                let mid = 2.0 * (p.ap - nf) / (2.0 - p.ap);
                let rhs = nf / (a - 1.0);
                assert!(((lhs - rhs) / rhs).abs() < 1e-14);
                assert!(((mid - rhs) / rhs).abs() < 1e-14);
                assert!(p.ap < 2.0);
                for e in [p.extremal_exponent, p.kernel_exponent, p.q_exponent, p.scaling_exponent] {
                    assert!(e.is_finite() && e < 0.0);
                }
            }
        }
    }

    #[test]
    fn sharp_constant_sobolev_case() {
        let k = make_params(3, 0.0).unwrap().sharp_constant().value;
        let closed = 3f64.powf(-0.5) * (4.0 / (PI * PI)).powf(1.0 / 3.0);
        assert!(((k - closed) / closed).abs() < 1e-12);
        assert!((k - 0.427_260_542_862_526_7).abs() < 1e-15);
    }

    #[test]
    fn sharp_constant_routes_agree() {
        for n in 3..=6u32 {
            for a in [0.0, 0.25, 0.5, 0.75, 0.999] {
                let p = make_params(n, a).unwrap();
                let l1 = p.ln_sharp_constant_with(ln_gamma);
                let l2 = p.ln_sharp_constant_with(ln_gamma_stirling);
                assert!((l1 - l2).abs() < 1e-12, "n={n} a={a}");
            }
        }
    }

    #[test]
    fn sharp_constant_near_one_is_finite() {
        let k = make_params(3, 0.999).unwrap().sharp_constant().value;
        assert!(k.is_finite() && k > 0.0);
    }

    #[test]
    fn sharp_constant_continuous_in_a() {
        for n in 3..=5u32 {
            let ks: Vec<f64> = (0..10)
                .map(|i| make_params(n, i as f64 * 0.1).unwrap().sharp_constant().value)
                .collect();
            let diffs: Vec<f64> = ks.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
            for (i, d) in diffs.iter().enumerate() {
                assert!(ks[i] > 0.0);
                let neighbours: Vec<f64> = [i.checked_sub(1), Some(i + 1)]
                    .iter()
                    .flatten()
                    .filter_map(|&j| diffs.get(j).copied())
                    .collect();
                for nb in neighbours {
                    assert!(*d <= 10.0 * nb, "jump at n={n}, i={i}");
                }
            }
        }
    }

    #[test]
    fn extremal_examples() {
        let p = make_params(3, 0.0).unwrap();
        assert_eq!(p.extremal(1.0, 0.0).unwrap(), 1.0);
        assert!((p.extremal(1.0, 1.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(p.extremal(0.0, 1.0).is_err());
        // decay ρ^{2-n}
        for n in 3..=5u32 {
            let p = make_params(n, 0.3).unwrap();
            let r = 1e8;
            let ratio = p.extremal(2.0, r).unwrap() / r.powf(2.0 - n as f64);
            assert!((ratio - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn extremal_monotone() {
        for (n, a) in [(3, 0.0), (4, 0.5), (5, 0.75)] {
            let p = make_params(n, a).unwrap();
            let rhos: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
            for w in rhos.windows(2) {
                assert!(p.extremal(1.3, w[1]).unwrap() < p.extremal(1.3, w[0]).unwrap());
            }
            for &r in rhos.iter().skip(1) {
                assert!(p.extremal(2.0, r).unwrap() < p.extremal(1.0, r).unwrap());
            }
        }
    }
}
