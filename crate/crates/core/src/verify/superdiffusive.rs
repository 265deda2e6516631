//! Checks for `θ > 1/2`, where `n^{1−θ}(S_n/n − p)` converges almost surely
//! to a non-degenerate limit `L`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::moments::r_tail;
use crate::montecarlo::ReplicateSummary;
use crate::process::{simulate_observed, simulate_path, ModelParams, PathObserver, Trajectory};
use crate::rng;
use crate::stats::Moments;

use super::gaussian::{record_gaussian, GaussianTolerances};
use super::pathwise::{LIL_CORRIDOR, LIL_START};
use super::{CheckKind, Op, RunMetadata, Tolerances, VerificationReport};

fn require_superdiffusive(params: &ModelParams) -> Result<()> {
    let theta = params.theta();
    if theta > 0.5 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("needs 1/2 < theta < 1 (theta = {theta})")))
    }
}

/// `L̂_n = n^{1−θ}(S_n/n − p)`.
pub fn estimate_l(params: &ModelParams, n: u64, s: u64) -> Result<f64> {
    require_superdiffusive(params)?;
    if n == 0 {
        return Err(Error::config("estimate of L needs n >= 1"));
    }
    let nf = n as f64;
    Ok(nf.powf(1.0 - params.theta()) * (s as f64 / nf - params.p()))
}

/// `L̂_n` read from a recorded path.
pub fn estimate_l_path(path: &Trajectory, n: u64) -> Result<f64> {
    let s = path
        .value_at(n)
        .ok_or_else(|| Error::config(format!("path has no checkpoint at n = {n}")))?;
    estimate_l(&path.params, n, s)
}

fn profile_index(n: u64, t: f64) -> Result<u64> {
    let k = (n as f64 * t).floor() as u64;
    if !(t > 0.0) || k == 0 {
        return Err(Error::config(format!("profile time {t} gives index 0 at n = {n}")));
    }
    Ok(k)
}

/// Checkpoints needed by [`strong_law_profile`].
pub fn profile_checkpoints(n: u64, t_grid: &[f64]) -> Result<Vec<u64>> {
    let mut cps: Vec<u64> = t_grid.iter().map(|&t| profile_index(n, t)).collect::<Result<_>>()?;
    cps.sort_unstable();
    cps.dedup();
    Ok(cps)
}

/// `max_t |n^{1−θ}(S_{⌊nt⌋}/⌊nt⌋ − p) − t^{θ−1} L̂|` with `L̂` the estimate at
/// the largest grid index `⌊n·max t⌋`.
pub fn strong_law_profile(path: &Trajectory, n: u64, t_grid: &[f64]) -> Result<f64> {
    let params = &path.params;
    require_superdiffusive(params)?;
    let cps = profile_checkpoints(n, t_grid)?;
    let top = *cps.last().ok_or_else(|| Error::config("empty profile grid"))?;
    if path.horizon < top {
        return Err(Error::config(format!(
            "path horizon {} is shorter than n * max(t) = {top}",
            path.horizon
        )));
    }
    let theta = params.theta();
    let l_hat = estimate_l_path(path, top)?;
    let nf = n as f64;
    let mut worst: f64 = 0.0;
    for &t in t_grid {
        let k = profile_index(n, t)?;
        let s = path
            .value_at(k)
            .ok_or_else(|| Error::config(format!("path has no checkpoint at n = {k}")))?;
        let lhs = nf.powf(1.0 - theta) * (s as f64 / k as f64 - params.p());
        worst = worst.max((lhs - t.powf(theta - 1.0) * l_hat).abs());
    }
    Ok(worst)
}

/// Mean profile deviation over `paths` simulated paths at each `n` in `ns`,
/// required to decrease along `ns`.
pub fn strong_law_check(
    params: &ModelParams,
    ns: &[u64],
    t_grid: &[f64],
    paths: u64,
    seed: u64,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    require_superdiffusive(params)?;
    if ns.is_empty() || paths == 0 {
        return Err(Error::config("strong-law check needs at least one n and one path"));
    }
    let mut means = Vec::with_capacity(ns.len());
    for &n in ns {
        let cps = profile_checkpoints(n, t_grid)?;
        let horizon = *cps.last().expect("non-empty");
        let family = rng::sub_seed(seed, &format!("strong-law.{n}"));
        let devs: Vec<f64> = (0..paths)
            .into_par_iter()
            .map(|i| {
                let path = simulate_path(params, horizon, &cps, rng::derive_seed(family, i))?;
                strong_law_profile(&path, n, t_grid)
            })
            .collect::<Result<_>>()?;
        means.push(devs.iter().sum::<f64>() / paths as f64);
    }
    let last = *ns.last().expect("non-empty");
    let mut r = VerificationReport::new(
        "strong-law",
        CheckKind::Statistical,
        params,
        RunMetadata::new(seed, "strong-law", last, paths),
    );
    for (&n, &m) in ns.iter().zip(&means) {
        r.stat(&format!("mean_deviation_{n}"), m);
    }
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    r.stat("t_max", t_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .stat("trend_decreasing", if decreasing { 1.0 } else { 0.0 })
        .limit(tol, "trend", "trend_decreasing", Op::Ge, 1.0);
    Ok(r.finish())
}

/// Fraction of the fluctuation variance left after replacing `L` by `L̂_m`:
/// `1 − r_tail(m)/r_tail(n)`.
pub fn proxy_variance_factor(params: &ModelParams, n: u64, m: u64) -> Result<f64> {
    Ok(1.0 - r_tail(params, m)? / r_tail(params, n)?)
}

/// Gaussian comparison of `√(n^{2θ−1})(L̂_n − L̂_m)` with
/// `N(0, p(1−p)/(2θ−1))`, `L` proxied by `L̂_m` on the same path. The sample
/// is rescaled by `1/√c` with `c` from [`proxy_variance_factor`]; the
/// uncorrected variance is reported alongside.
pub fn fluctuation_clt_check(
    summary: &ReplicateSummary,
    n: u64,
    m: u64,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let params = &summary.params;
    require_superdiffusive(params)?;
    if m <= n {
        return Err(Error::config(format!("proxy index m = {m} must exceed n = {n}")));
    }
    let get = |k: u64| {
        summary
            .values_at(k)
            .ok_or_else(|| Error::config(format!("per-replicate values at n = {k} were not retained")))
    };
    let (sn, sm) = (get(n)?, get(m)?);
    let theta = params.theta();
    let scale = (n as f64).powf(theta - 0.5);
    let raw: Vec<f64> = sn
        .iter()
        .zip(sm)
        .map(|(&a, &b)| Ok(scale * (estimate_l(params, n, a)? - estimate_l(params, m, b)?)))
        .collect::<Result<_>>()?;
    let c = proxy_variance_factor(params, n, m)?;
    let corrected: Vec<f64> = raw.iter().map(|z| z / c.sqrt()).collect();
    let target = params.bernoulli_variance() / (2.0 * theta - 1.0);
    let mut r = VerificationReport::new(
        "fluctuation-clt",
        CheckKind::Soft,
        params,
        RunMetadata::new(summary.master_seed, "fluctuation-clt", n, summary.replicates),
    );
    let raw_m: Moments = raw.iter().copied().collect();
    r.stat("proxy_index", m as f64)
        .stat("proxy_variance_factor", c)
        .stat("uncorrected_variance", raw_m.variance());
    if (m as f64) < 10.0 * n as f64 {
        r.note("m/n < 10: proxy bias may dominate");
    }
    if target > 0.0 {
        let mut defaults = GaussianTolerances::for_sample_size(corrected.len(), 0.03);
        defaults.variance = 0.15;
        defaults.mean_sigma = 3.0 / (corrected.len() as f64).sqrt();
        record_gaussian(&mut r, tol, &corrected, target, &defaults);
        r.stat("mean_z_abs", raw_m.mean.abs() / raw_m.std_error());
    } else {
        super::gaussian::record_degenerate(&mut r, tol, target);
    }
    Ok(r.finish())
}

/// Records `S_k` densely for `k ≤ window` and the final value, for the
/// fluctuation iterated-logarithm statistic.
#[derive(Debug, Clone)]
pub struct FluctuationLilTracker {
    window: u64,
    values: Vec<u64>,
    last: (u64, u64),
}

impl FluctuationLilTracker {
    pub fn new(window: u64) -> Self {
        FluctuationLilTracker {
            window,
            values: Vec::with_capacity(window as usize),
            last: (0, 0),
        }
    }

    /// `max_{LIL_START ≤ k ≤ window} ±√(k^{2θ−1})(L̂_k − L̂_H)/√(2σ² log log k)`
    /// with `H` the last observed index and `σ² = p(1−p)/(2θ−1)`.
    pub fn maxima(&self, params: &ModelParams) -> Result<(f64, f64)> {
        let theta = params.theta();
        let variance = params.bernoulli_variance() / (2.0 * theta - 1.0);
        let (h, sh) = self.last;
        let lh = estimate_l(params, h, sh)?;
        let (mut plus, mut minus) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (i, &s) in self.values.iter().enumerate() {
            let k = i as u64 + 1;
            if k < LIL_START.max(16) {
                continue;
            }
            let kf = k as f64;
            let x = kf.powf(theta - 0.5) * (estimate_l(params, k, s)? - lh) / (2.0 * variance * kf.ln().ln()).sqrt();
            plus = plus.max(x);
            minus = minus.max(-x);
        }
        Ok((plus, minus))
    }
}

impl PathObserver for FluctuationLilTracker {
    fn observe(&mut self, n: u64, s: u64) {
        if n <= self.window && n == self.values.len() as u64 + 1 {
            self.values.push(s);
        }
        self.last = (n, s);
    }
}

/// Corridor check of the fluctuation iterated-logarithm statistic over
/// simulated paths of length `horizon`, indices up to `horizon/100`.
pub fn fluctuation_lil_check(
    params: &ModelParams,
    horizon: u64,
    paths: u64,
    seed: u64,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    require_superdiffusive(params)?;
    let window = horizon / 100;
    if window < LIL_START {
        return Err(Error::config(format!(
            "fluctuation LIL needs horizon >= {}",
            100 * LIL_START
        )));
    }
    let family = rng::sub_seed(seed, "fluctuation-lil");
    let maxima: Vec<(f64, f64)> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut t = FluctuationLilTracker::new(window);
            simulate_observed(params, horizon, rng::derive_seed(family, i), &mut t);
            t.maxima(params)
        })
        .collect::<Result<_>>()?;
    let (lo, hi) = LIL_CORRIDOR;
    let inside = maxima.iter().filter(|m| m.0 > lo && m.0 < hi).count() as f64 / paths.max(1) as f64;
    let plus: Moments = maxima.iter().map(|m| m.0).collect();
    let minus: Moments = maxima.iter().map(|m| m.1).collect();
    let mut r = VerificationReport::new(
        "fluctuation-lil",
        CheckKind::Soft,
        params,
        RunMetadata::new(seed, "fluctuation-lil", horizon, paths),
    );
    r.stat("window", window as f64)
        .stat("r_plus_mean", plus.mean)
        .stat("r_minus_mean", minus.mean)
        .stat("corridor_fraction_plus", inside)
        .limit(tol, "corridor_plus", "corridor_fraction_plus", Op::Ge, 0.95)
        .note("L proxied by the estimate at the horizon");
    Ok(r.finish())
}
