//! The weight sequences behind the martingale transform.
//!
//! ```text
//! a_1 = 1,  a_{n+1} = a_n / (1 + θ/n)      (= Γ(n)Γ(θ+1)/Γ(n+θ))
//! A_n = Σ_{k≤n} a_k,   v_n = Σ_{k≤n} a_k²
//! ```
//!
//! Tables are generated with the multiplicative recursion. Gamma functions
//! of large arguments only ever appear as ratios, evaluated by
//! [`ln_gamma_ratio`] without forming either factor.

use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::stats::NeumaierSum;

/// Largest table that [`GammaRatioTable::build`] will materialize.
pub const MAX_TABLE_LEN: u64 = 10_000_000;

/// Below this argument the Stirling difference is shifted upward.
const STIRLING_MIN: f64 = 15.0;

/// `B_{2k} / (2k (2k − 1))` for `k = 1..=7`.
const STIRLING_COEFFS: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
];

/// `Σ_k c_k z^{1−2k}`, the correction part of Stirling's series.
fn stirling_tail(z: f64) -> f64 {
    let zi = 1.0 / z;
    let zi2 = zi * zi;
    let mut acc = 0.0;
    for &c in STIRLING_COEFFS.iter().rev() {
        acc = acc * zi2 + c;
    }
    acc * zi
}

/// `ln Γ(x + d) − ln Γ(x)` for `x > 0`, `x + d > 0`.
///
/// The result is accurate in absolute terms even when `ln Γ(x)` itself is
/// huge, so `exp` of it gives gamma ratios to near machine precision at
/// arguments far beyond the overflow point of `Γ`.
pub fn ln_gamma_ratio(x: f64, d: f64) -> f64 {
    assert!(x > 0.0 && x + d > 0.0, "ln_gamma_ratio({x}, {d}) outside domain");
    if d == 0.0 {
        return 0.0;
    }
    let lo = x.min(x + d);
    if lo < STIRLING_MIN {
        let shift = (STIRLING_MIN - lo).ceil();
        let mut down = NeumaierSum::new();
        let mut j = 0.0;
        while j < shift {
            down.add((d / (x + j)).ln_1p());
            j += 1.0;
        }
        return ln_gamma_ratio(x + shift, d) - down.value();
    }
    (x - 0.5) * (d / x).ln_1p() + d * (x + d).ln() - d + (stirling_tail(x + d) - stirling_tail(x))
}

/// `Γ(x + d) / Γ(x)`.
pub fn gamma_ratio(x: f64, d: f64) -> f64 {
    ln_gamma_ratio(x, d).exp()
}

/// `a_n = Γ(n)Γ(θ+1)/Γ(n+θ)` from the closed form.
pub fn a_closed_form(theta: f64, n: u64) -> f64 {
    assert!(n >= 1);
    (ln_gamma(theta + 1.0) - ln_gamma_ratio(n as f64, theta)).exp()
}

/// `Γ(1+θ)/n^θ`, the large-`n` equivalent of `a_n`.
pub fn a_asymptotic(theta: f64, n: u64) -> f64 {
    gamma(1.0 + theta) / (n as f64).powf(theta)
}

/// Large-`n` equivalent of `v_n` where it diverges (`θ ≤ 1/2`).
pub fn v_asymptotic(theta: f64, n: u64) -> Result<f64> {
    let nf = n as f64;
    if theta < 0.5 {
        let g = gamma(theta + 1.0);
        Ok(g * g * nf.powf(1.0 - 2.0 * theta) / (1.0 - 2.0 * theta))
    } else if theta == 0.5 {
        Ok(std::f64::consts::FRAC_PI_4 * nf.ln())
    } else {
        Err(Error::domain(format!(
            "v_n converges for theta = {theta} > 1/2; use v_limit"
        )))
    }
}

/// `lim v_n = Σ_{k≥0} (Γ(θ+1)Γ(k+1)/Γ(k+θ+1))²` for `θ > 1/2`, i.e. the
/// unit-argument hypergeometric value `₃F₂(1,1,1; θ+1,θ+1; 1)`.
///
/// The raw series converges like `K^{1−2θ}`. It is summed against the
/// comparison series `u_n = Γ(n − θ/2)/Γ(n + 3θ/2)`, which has the same two
/// leading asymptotic terms and a closed-form sum; the remaining differences
/// decay like `n^{−2θ−2}`. Summation stops once the integral-comparison bound
/// of the remaining differences, `|d_K| K / (2θ+1)`, falls below `tol`;
/// that estimate is then added to the sum.
pub fn v_limit(theta: f64, tol: f64) -> Result<f64> {
    if !(theta > 0.5 && theta <= 1.0) {
        return Err(Error::domain(format!(
            "sum of a_n^2 diverges for theta = {theta} <= 1/2"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::config("v_limit tolerance must be positive"));
    }
    let gt = gamma(theta + 1.0);
    let scale = gt * gt;
    let a = -theta / 2.0;
    let b = 1.5 * theta;
    // Σ_{n≥1} Γ(n+a)/Γ(n+b) = Γ(a+1) / ((b−a−1) Γ(b))
    let comparison_total = gamma(a + 1.0) / ((b - a - 1.0) * gamma(b));

    let mut g = 1.0 / gt; // Γ(n)/Γ(n+θ) at n = 1
    let mut u = gamma(1.0 + a) / gamma(1.0 + b);
    let mut diff = NeumaierSum::new();
    let mut n: u64 = 1;
    const MAX_TERMS: u64 = 200_000_000;
    loop {
        let d = g * g - u;
        diff.add(d);
        let nf = n as f64;
        let tail = d * nf / (2.0 * theta + 1.0);
        if n >= 64 && scale * tail.abs() < tol {
            // The tail estimate is added; what is left is of relative order 1/n.
            diff.add(tail);
            break;
        }
        if n >= MAX_TERMS {
            return Err(Error::ResourceLimit(format!(
                "v_limit did not reach tol = {tol} within {MAX_TERMS} terms"
            )));
        }
        g *= nf / (nf + theta);
        u *= (nf + a) / (nf + b);
        n += 1;
    }
    Ok(scale * (comparison_total + diff.value()))
}

/// `Σ_{k=1}^{n−1} Γ(k+a)/Γ(k+b)` by its closed form
/// `Γ(a+1)/((b−a−1)Γ(b)) · (1 − Γ(n+a)Γ(b)/(Γ(n+b−1)Γ(a+1)))`.
///
/// Requires `a > −1`, `b > 0`, `n ≥ 2` and `b ≠ a + 1` (the harmonic-type
/// case the identity does not cover).
pub fn gamma_ratio_sum(a: f64, b: f64, n: u64) -> Result<f64> {
    if (b - a - 1.0).abs() < 1e-12 {
        return Err(Error::domain(format!(
            "b = a + 1 (a = {a}, b = {b}) is the singular harmonic case"
        )));
    }
    if !(a > -1.0 && b > 0.0) {
        return Err(Error::domain(format!("need a > -1 and b > 0 (a = {a}, b = {b})")));
    }
    if n < 2 {
        return Err(Error::domain("partial sum needs n >= 2"));
    }
    let ln_front = ln_gamma(a + 1.0) - ln_gamma(b);
    let ln_x = -ln_gamma_ratio(n as f64 + a, b - 1.0 - a) - ln_front;
    Ok(ln_front.exp() * (-ln_x.exp_m1()) / (b - a - 1.0))
}

/// Closed form of `A_n / (n a_n)`:
/// `(Γ(n+θ)/(Γ(n+1)Γ(θ)) − 1)/(θ − 1)`, with `θ = 0` giving 1 and `θ = 1`
/// the harmonic number `H_n`.
pub fn partial_sum_ratio(theta: f64, n: u64) -> f64 {
    if theta == 0.0 {
        return 1.0;
    }
    if theta == 1.0 {
        return (1..=n).rev().map(|k| 1.0 / k as f64).collect::<NeumaierSum>().value();
    }
    let r = (ln_gamma_ratio(n as f64 + 1.0, theta - 1.0) - ln_gamma(theta)).exp();
    (r - 1.0) / (theta - 1.0)
}

/// `a_n`, `A_n`, `v_n` for `n = 1..=n_max`.
#[derive(Debug, Clone)]
pub struct GammaRatioTable {
    theta: f64,
    a: Vec<f64>,
    cum_a: Vec<f64>,
    cum_a2: Vec<f64>,
    crosscheck_max_rel: f64,
}

impl GammaRatioTable {
    /// Builds the table by the product recursion, running a log-space
    /// accumulation alongside and comparing both against the log-gamma
    /// closed form at powers of two and at `n_max`.
    pub fn build(theta: f64, n_max: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidParameter {
                name: "theta",
                value: theta,
                reason: "must lie in [0, 1]",
            });
        }
        if n_max == 0 {
            return Err(Error::config("table needs n_max >= 1"));
        }
        if n_max > MAX_TABLE_LEN {
            return Err(Error::ResourceLimit(format!(
                "table of {n_max} entries exceeds {MAX_TABLE_LEN}; use a_closed_form at sparse indices"
            )));
        }
        let len = n_max as usize;
        let mut a = Vec::with_capacity(len);
        let mut cum_a = Vec::with_capacity(len);
        let mut cum_a2 = Vec::with_capacity(len);
        let mut sum_a = NeumaierSum::new();
        let mut sum_a2 = NeumaierSum::new();
        let mut ln_a = NeumaierSum::new();
        let mut worst: f64 = 0.0;
        let mut an = 1.0;
        for n in 1..=n_max {
            if n > 1 {
                let k = (n - 1) as f64;
                an /= 1.0 + theta / k;
                ln_a.add(-(theta / k).ln_1p());
            }
            a.push(an);
            sum_a.add(an);
            sum_a2.add(an * an);
            cum_a.push(sum_a.value());
            cum_a2.push(sum_a2.value());
            if n.is_power_of_two() || n == n_max {
                let closed = a_closed_form(theta, n);
                worst = worst
                    .max((an / closed - 1.0).abs())
                    .max((ln_a.value().exp() / closed - 1.0).abs());
            }
        }
        Ok(GammaRatioTable {
            theta,
            a,
            cum_a,
            cum_a2,
            crosscheck_max_rel: worst,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn n_max(&self) -> u64 {
        self.a.len() as u64
    }

    pub fn covers(&self, n: u64) -> bool {
        n >= 1 && n <= self.n_max()
    }

    /// `a_n`. Panics if `n` is outside the table.
    pub fn a(&self, n: u64) -> f64 {
        self.a[(n - 1) as usize]
    }

    /// `A_n`.
    pub fn big_a(&self, n: u64) -> f64 {
        self.cum_a[(n - 1) as usize]
    }

    /// `v_n`.
    pub fn v(&self, n: u64) -> f64 {
        self.cum_a2[(n - 1) as usize]
    }

    pub fn a_values(&self) -> &[f64] {
        &self.a
    }

    /// Explosion coefficient `f_k = (v_k − v_{k−1})/v_k = a_k²/v_k`.
    pub fn explosion_coefficient(&self, k: u64) -> f64 {
        let ak = self.a(k);
        ak * ak / self.v(k)
    }

    /// Largest relative disagreement seen at build time between the recursion,
    /// the log-space accumulation and the closed form.
    pub fn crosscheck_max_rel(&self) -> f64 {
        self.crosscheck_max_rel
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(x: f64, y: f64) -> f64 {
        ((x - y) / y).abs()
    }

    #[test]
    fn stirling_difference_matches_small_argument_gamma() {
        for &(x, d) in &[
            (1.0, 0.5),
            (2.5, 1.25),
            (0.3, 3.0),
            (7.0, -0.4),
            (20.0, 0.75),
            (3.0, 2.0),
        ] {
            let want = (gamma(x + d) / gamma(x)).ln();
            assert!((ln_gamma_ratio(x, d) - want).abs() < 1e-13, "({x}, {d})");
        }
        // Γ(n+1)/Γ(n) = n at large n.
        for n in [10.0, 1e3, 1e6, 1e9] {
            assert!(rel(gamma_ratio(n, 1.0), n) < 1e-14);
        }
    }

    #[test]
    fn theta_zero_table_is_trivial() {
        let t = GammaRatioTable::build(0.0, 1000).unwrap();
        for n in [1, 2, 17, 1000] {
            assert_eq!(t.a(n), 1.0);
            assert_eq!(t.big_a(n), n as f64);
            assert_eq!(t.v(n), n as f64);
        }
    }

    #[test]
    fn theta_one_gives_reciprocals() {
        let t = GammaRatioTable::build(1.0, 500).unwrap();
        assert!(rel(t.a(3), 1.0 / 3.0) < 1e-15);
        for n in [1, 10, 100, 500] {
            assert!(rel(t.a(n), 1.0 / n as f64) < 1e-13);
        }
    }

    #[test]
    fn theta_half_first_terms() {
        let t = GammaRatioTable::build(0.5, 3).unwrap();
        assert!(rel(t.a(2), 2.0 / 3.0) < 1e-15);
        assert!(rel(t.a(3), 8.0 / 15.0) < 1e-15);
    }

    #[test]
    fn table_invariants() {
        for &theta in &[0.1, 0.5, 0.9, 1.0] {
            let t = GammaRatioTable::build(theta, 5000).unwrap();
            assert_eq!(t.a(1), 1.0);
            for n in 1..5000 {
                let (a0, a1) = (t.a(n), t.a(n + 1));
                assert!(a1 > 0.0 && a1 < a0);
                assert_eq!(a1, a0 / (1.0 + theta / n as f64));
                assert!(t.big_a(n + 1) >= t.big_a(n) && t.v(n + 1) >= t.v(n));
            }
        }
    }

    #[test]
    fn recursion_agrees_with_closed_form_to_a_million() {
        for &theta in &[0.0, 0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9, 1.0] {
            let t = GammaRatioTable::build(theta, 1_000_000).unwrap();
            assert!(
                t.crosscheck_max_rel() < 1e-10,
                "theta = {theta}: {}",
                t.crosscheck_max_rel()
            );
            for n in [3u64, 999, 65_537, 999_999] {
                assert!(rel(t.a(n), a_closed_form(theta, n)) < 1e-10);
            }
        }
    }

    #[test]
    fn ratio_sum_identity_holds_on_table() {
        for &theta in &[0.0, 0.2, 0.5, 0.75, 0.95, 1.0] {
            let t = GammaRatioTable::build(theta, 20_000).unwrap();
            for n in [1u64, 2, 5, 100, 20_000] {
                let lhs = t.big_a(n) / (n as f64 * t.a(n));
                assert!(
                    rel(lhs, partial_sum_ratio(theta, n)) < 1e-10,
                    "theta = {theta}, n = {n}"
                );
            }
        }
        // A_n/(n a_n) → 1/(1 − θ)
        let r = partial_sum_ratio(0.25, 100_000_000);
        assert!((r - 1.0 / 0.75).abs() < 1e-3);
    }

    #[test]
    fn a_asymptotic_examples() {
        assert!((a_asymptotic(0.0, 12345) - 1.0).abs() < 1e-15);
        assert!(rel(a_asymptotic(1.0, 100), 0.01) < 1e-15);
        assert!((a_asymptotic(0.5, 10_000) - 0.008_862_269_254_527_58).abs() < 1e-12);
    }

    #[test]
    fn v_asymptotic_examples() {
        assert!(rel(v_asymptotic(0.0, 1000).unwrap(), 1000.0) < 1e-15);
        assert!((v_asymptotic(0.5, 55).unwrap() - 3.147_352).abs() < 1e-5);
        // Γ(1.25) = 0.906402477055477
        let g = 0.906_402_477_055_477_f64;
        assert!(rel(v_asymptotic(0.25, 10_000).unwrap(), g * g * 100.0 / 0.5) < 1e-12);
        assert!((v_asymptotic(0.25, 10_000).unwrap() - 164.31).abs() < 1e-2);
        assert!(matches!(v_asymptotic(0.6, 10), Err(Error::Domain(_))));
    }

    #[test]
    fn v_asymptotic_tracks_table() {
        for &theta in &[0.1, 0.25] {
            let t = GammaRatioTable::build(theta, 1_000_000).unwrap();
            let ratio = v_asymptotic(theta, 1_000_000).unwrap() / t.v(1_000_000);
            assert!((ratio - 1.0).abs() < 0.01, "theta = {theta}: {ratio}");
        }
        // Near 1/2 the constant offset of v_n decays only like n^{2θ−1}.
        let t = GammaRatioTable::build(0.4, 1_000_000).unwrap();
        let gap = |n: u64| (v_asymptotic(0.4, n).unwrap() / t.v(n) - 1.0).abs();
        assert!(gap(1_000_000) < gap(100_000) && gap(100_000) < gap(10_000));
    }

    #[test]
    fn v_limit_at_one_is_basel() {
        let v = v_limit(1.0, 1e-12).unwrap();
        assert!((v - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-9);
        // Partial-sum oracle: Σ_{n≤N} 1/n² + tail, 1/(N+1) < tail < 1/N.
        let n = 1_000_000u64;
        let partial: f64 = (1..=n).rev().map(|k| 1.0 / (k as f64 * k as f64)).sum();
        assert!(v > partial + 1.0 / (n as f64 + 1.0) - 1e-12);
        assert!(v < partial + 1.0 / n as f64);
    }

    #[test]
    fn v_limit_matches_hypergeometric_partial_sums() {
        let theta = 0.9;
        let v = v_limit(theta, 1e-13).unwrap();
        // ₃F₂(1,1,1; θ+1,θ+1; 1) term ratio (k+1)²/(k+θ+1)², first term 1.
        let k_max = 2_000_000u64;
        let mut t = 1.0;
        let mut partial = NeumaierSum::new();
        for k in 0..k_max {
            partial.add(t);
            let kf = k as f64;
            t *= ((kf + 1.0) / (kf + theta + 1.0)).powi(2);
        }
        let g = gamma(theta + 1.0);
        let kf = k_max as f64;
        let tail_bound = g * g * (1.0 + theta / kf).powi(2) * kf.powf(1.0 - 2.0 * theta) / (2.0 * theta - 1.0);
        assert!(v >= partial.value());
        assert!(v - partial.value() <= tail_bound);
    }

    #[test]
    fn v_limit_shape() {
        assert!(v_limit(0.75, 1e-10).unwrap() > 1.0);
        assert!(v_limit(0.51, 1e-8).unwrap() > v_limit(0.99, 1e-8).unwrap());
        assert!(matches!(v_limit(0.5, 1e-8), Err(Error::Domain(_))));
        assert!(matches!(v_limit(0.3, 1e-8), Err(Error::Domain(_))));
    }

    /// `Σ_{k=1}^{n−1} Γ(k+a)/Γ(k+b)` by the term-ratio recurrence.
    fn ratio_sum_brute(a: f64, b: f64, n: u64) -> f64 {
        let mut t = gamma(1.0 + a) / gamma(1.0 + b);
        let mut s = NeumaierSum::new();
        for k in 1..n {
            s.add(t);
            t *= (k as f64 + a) / (k as f64 + b);
        }
        s.value()
    }

    #[test]
    fn gamma_ratio_sum_examples() {
        // Σ_{k=1}^{4} 1/(k(k+1)) = 4/5
        assert!((gamma_ratio_sum(0.0, 2.0, 5).unwrap() - 0.8).abs() < 1e-14);
        for &(a, b) in &[(0.3, 2.0), (1.5, 0.7), (-0.5, 3.1)] {
            let single = gamma(1.0 + a) / gamma(1.0 + b);
            assert!(rel(gamma_ratio_sum(a, b, 2).unwrap(), single) < 1e-12);
        }
        assert!(rel(gamma_ratio_sum(0.5, 2.1, 50).unwrap(), ratio_sum_brute(0.5, 2.1, 50)) < 1e-12);
        assert!(matches!(gamma_ratio_sum(0.5, 1.5, 10), Err(Error::Domain(_))));
    }

    #[test]
    fn gamma_ratio_sum_random_triples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(2024);
        let mut done = 0;
        while done < 50 {
            let a: f64 = rng.random_range(-0.9..4.0);
            let b: f64 = rng.random_range(0.05..5.0);
            if (b - a - 1.0).abs() < 0.05 {
                continue;
            }
            let n = rng.random_range(2..2000);
            let got = gamma_ratio_sum(a, b, n).unwrap();
            let want = ratio_sum_brute(a, b, n);
            assert!(rel(got, want) < 1e-11, "a = {a}, b = {b}, n = {n}: {got} vs {want}");
            done += 1;
        }
    }

    #[test]
    fn oversized_table_is_refused() {
        assert!(matches!(
            GammaRatioTable::build(0.5, MAX_TABLE_LEN + 1),
            Err(Error::ResourceLimit(_))
        ));
    }

    #[test]
    fn explosion_coefficient_decays_like_one_minus_two_theta_over_k() {
        let theta = 0.25;
        let t = GammaRatioTable::build(theta, 100_000).unwrap();
        let k = 100_000;
        let scaled = t.explosion_coefficient(k) * k as f64;
        assert!((scaled - (1.0 - 2.0 * theta)).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn ln_gamma_ratio_is_additive(x in 0.1f64..1e6, d1 in -0.05f64..3.0, d2 in 0.0f64..3.0) {
            let whole = ln_gamma_ratio(x, d1 + d2);
            let parts = ln_gamma_ratio(x, d1) + ln_gamma_ratio(x + d1, d2);
            prop_assert!((whole - parts).abs() < 1e-12 * (1.0 + whole.abs()));
        }
    }
}
