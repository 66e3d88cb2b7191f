//! Independent oracles: frozen high-precision constants, closed forms and
//! log-variable trapezoid integration of the Q-functions.

use std::f64::consts::PI;

use ckn_core::qengine::{q_e, verify_euclidean_identity, verify_scaling};
use ckn_core::{make_params, sharp_constant, unit_ball_volume};

/// K_a for n ∈ {3, 4, 5} × a ∈ {0, 0.25, 0.5, 0.75}, evaluated with 40-digit mpmath.
const K_TABLE: [(u32, f64, f64); 12] = [
    (3, 0.0, 0.427_260_542_862_526_664_987_671_6),
    (3, 0.25, 0.587_787_503_670_616_903_040_483_3),
    (3, 0.5, 0.840_945_665_286_826_658_908_350_7),
    (3, 0.75, 1.251_585_405_009_740_559_630_623),
    (4, 0.0, 0.312_189_205_697_777_951_677_316_1),
    (4, 0.25, 0.400_866_971_907_181_947_414_488_9),
    (4, 0.5, 0.525_822_318_149_720_610_866_800_1),
    (4, 0.75, 0.707_113_417_215_078_969_799_866_9),
    (5, 0.0, 0.259_833_080_684_934_311_937_919_5),
    (5, 0.25, 0.319_249_589_853_520_207_515_184_8),
    (5, 0.5, 0.397_957_846_707_179_305_115_270_2),
    (5, 0.75, 0.505_136_721_445_125_417_513_463_1),
];

#[test]
fn sharp_constant_matches_high_precision_table() {
    for (n, a, k) in K_TABLE {
        let got = sharp_constant(&make_params(n, a).unwrap()).value;
        assert!(((got - k) / k).abs() <= 1e-10, "n={n} a={a}: {got} vs {k}");
    }
}

#[test]
fn sobolev_case_closed_form() {
    let closed = 3f64.powf(-0.5) * (4.0 / (PI * PI)).powf(1.0 / 3.0);
    let got = sharp_constant(&make_params(3, 0.0).unwrap()).value;
    assert!(((got - closed) / closed).abs() <= 1e-12);
}

#[test]
fn near_endpoint_and_reciprocal_values() {
    let k = sharp_constant(&make_params(3, 0.999).unwrap()).value;
    assert!((k / 1.994_372_667_273_216_078_8 - 1.0).abs() < 1e-10);
    let inv = sharp_constant(&make_params(4, 0.5).unwrap()).inverse();
    assert!((inv / 1.901_783_103_309_175_005 - 1.0).abs() < 1e-12);
}

#[test]
fn unit_ball_volumes() {
    assert!((unit_ball_volume(3).unwrap() - 4.0 * PI / 3.0).abs() < 1e-14);
    assert!((unit_ball_volume(4).unwrap() - PI * PI / 2.0).abs() < 1e-14);
    assert!((unit_ball_volume(5).unwrap() - 8.0 * PI * PI / 15.0).abs() < 1e-13);
}

/// ∫₀^∞ g(ρ) dρ as ∫ g(eᵗ)eᵗ dt by the trapezoid rule, exponentially
/// accurate for integrands analytic in a strip around the real t-axis.
fn log_trapezoid(g: impl Fn(f64) -> f64, t_lo: f64, t_hi: f64, step: f64) -> f64 {
    let count = ((t_hi - t_lo) / step).ceil() as usize;
    (0..=count)
        .map(|i| {
            let t = t_lo + i as f64 * step;
            let r = t.exp();
            let w = if i == 0 || i == count { 0.5 } else { 1.0 };
            w * g(r) * r
        })
        .sum::<f64>()
        * step
}

struct Oracle {
    n: f64,
    a: f64,
    p: f64,
    omega: f64,
}

impl Oracle {
    fn new(n: u32, a: f64) -> Self {
        let nf = n as f64;
        let p = 2.0 * nf / (nf - 2.0 + 2.0 * a);
        let omega = PI.powf(nf / 2.0) / half_integer_gamma(nf / 2.0 + 1.0);
        Oracle { n: nf, a, p, omega }
    }

    /// Q_E from the kernel written out term by term.
    fn q(&self, lambda: f64) -> f64 {
        let (n, a, p) = (self.n, self.a, self.p);
        let ap = a * p;
        let s = 2.0 - ap;
        let mass = (n - 1.0 + a) / (1.0 - a);
        let integrand = |r: f64| {
            let f = (lambda + r.powf(s)).powf(n / (a - 1.0)) * r.powf(-(ap + 1.0)) * (r.powf(s) * (mass * s + ap) + ap * lambda);
            self.omega * r.powf(n) * f
        };
        log_trapezoid(integrand, -80.0, 120.0, 0.005) / mass
    }

    /// Q_E′ through the radial form −nω_n ∫ (λ+ρ^s)^{n/(a−1)} ρ^{n−1−ap} dρ.
    fn dq(&self, lambda: f64) -> f64 {
        let (n, a) = (self.n, self.a);
        let ap = a * self.p;
        let s = 2.0 - ap;
        let integrand = |r: f64| (lambda + r.powf(s)).powf(n / (a - 1.0)) * r.powf(n - 1.0 - ap);
        -n * self.omega * log_trapezoid(integrand, -80.0, 120.0, 0.005)
    }
}

/// Γ on positive half-integers and integers by recurrence.
fn half_integer_gamma(x: f64) -> f64 {
    let mut g = if (x - x.floor()).abs() > 0.25 { PI.sqrt() } else { 1.0 };
    let mut y = if (x - x.floor()).abs() > 0.25 { 0.5 } else { 1.0 };
    while y < x - 1e-9 {
        g *= y;
        y += 1.0;
    }
    g
}

#[test]
fn q_e_matches_trapezoid_oracle() {
    for n in [3u32, 4, 5] {
        for a in [0.0, 0.25, 0.5, 0.75] {
            let o = Oracle::new(n, a);
            let p = make_params(n, a).unwrap();
            for lambda in [0.1, 1.0, 7.0] {
                let q = q_e(&p, lambda).unwrap();
                let (qo, dqo) = (o.q(lambda), o.dq(lambda));
                assert!(((q.value - qo) / qo).abs() < 1e-8, "Q n={n} a={a} λ={lambda}: {} vs {qo}", q.value);
                assert!(((q.derivative - dqo) / dqo).abs() < 1e-8, "Q' n={n} a={a} λ={lambda}: {} vs {dqo}", q.derivative);
            }
        }
    }
}

#[test]
fn q_e_derivative_matches_finite_difference() {
    for (n, a) in [(3, 0.0), (4, 0.5), (5, 0.25)] {
        let p = make_params(n, a).unwrap();
        let lambda = 1.3;
        let h = 1e-4;
        let fd = (q_e(&p, lambda + h).unwrap().value - q_e(&p, lambda - h).unwrap().value) / (2.0 * h);
        let d = q_e(&p, lambda).unwrap().derivative;
        assert!(((d - fd) / d).abs() < 1e-6, "n={n} a={a}: {d} vs {fd}");
    }
}

#[test]
fn identity_and_scaling_hold_on_small_grid() {
    for (n, a) in [(3, 0.25), (5, 0.75)] {
        let p = make_params(n, a).unwrap();
        let grid = [0.1, 0.5, 2.0, 10.0];
        assert!(verify_euclidean_identity(&p, &grid).unwrap().passes);
        assert!(verify_scaling(&p, &grid).unwrap() <= 1e-8);
    }
}
