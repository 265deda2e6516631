//! Checks over Monte Carlo replicate summaries, plus the exact-oracle check.

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::gamma_seq::a_closed_form;
use crate::moments::{mean_sn, second_moment_sn_closed, MomentRecursion};
use crate::montecarlo::ReplicateSummary;
use crate::process::{ExactLaw, ModelParams};
use crate::rng;
use crate::stats::{covariance, Moments, NeumaierSum};

use super::gaussian::{clt_scale, covariance_limit, record_degenerate, record_gaussian, GaussianTolerances};
use super::{rel_error, CheckKind, Op, Regime, RunMetadata, Tolerances, VerificationReport};

/// Default relative tolerance of `Var(S_n)` against its leading-order formula.
pub const DIFFUSIVE_VARIANCE_TOL: f64 = 0.05;
pub const SUPERDIFFUSIVE_VARIANCE_TOL: f64 = 0.07;

fn rel(x: f64, y: f64) -> f64 {
    if y == 0.0 {
        x.abs()
    } else {
        ((x - y) / y).abs()
    }
}

fn meta(summary: &ReplicateSummary, check: &str, n: u64) -> RunMetadata {
    RunMetadata::new(summary.master_seed, check, n, summary.replicates)
}

fn require_values(summary: &ReplicateSummary, n: u64) -> Result<&[u64]> {
    summary
        .values_at(n)
        .ok_or_else(|| Error::config(format!("per-replicate values at n = {n} were not retained")))
}

/// Exact-law oracles at one parameter point: moments against the dynamic
/// program at `points`, the closed `E[S_n²]` against the recursion, and the
/// martingale mean `Σ_k P(S_n = k)(a_n k − ω A_n) = α − ω` at every
/// `n ≤ n_max`.
pub fn exact_check(
    params: &ModelParams,
    n_max: u64,
    points: &[u64],
    tol: &Tolerances,
    master_seed: u64,
) -> Result<VerificationReport> {
    if n_max == 0 || n_max > crate::process::DEFAULT_PMF_CAP {
        return Err(Error::config(format!(
            "exact check needs 1 <= n_max <= {}",
            crate::process::DEFAULT_PMF_CAP
        )));
    }
    let (theta, p, alpha) = (params.theta(), params.p(), params.alpha());
    let mut law = ExactLaw::new(params);
    let mut rec = MomentRecursion::new(params);
    let (mut m1, mut m2) = (alpha, alpha);
    let mut a = 1.0;
    let target = alpha - params.omega();
    let (mut e_mean, mut e_second, mut e_closed, mut e_mart): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for n in 1..=n_max {
        let st = rec.next().expect("unbounded");
        let np = n as f64 * p;
        let centered: NeumaierSum = law
            .probs()
            .iter()
            .enumerate()
            .map(|(k, &pk)| pk * (k as f64 - np))
            .collect();
        let mass: NeumaierSum = law.probs().iter().copied().collect();
        e_mart = e_mart.max((a * centered.value() + p * theta * mass.value() - target).abs());
        if points.contains(&n) {
            let pmf = law.to_pmf();
            e_mean = e_mean
                .max(rel(mean_sn(params, n), pmf.mean()))
                .max(rel(st.mean(p), pmf.mean()));
            e_second = e_second.max(rel(m2, pmf.second_moment()));
            if theta != 0.5 {
                e_closed = e_closed.max(rel(second_moment_sn_closed(params, n), m2));
            }
        }
        let kf = n as f64;
        m2 = (1.0 + 2.0 * theta / kf) * m2 + (2.0 * params.omega() + theta / kf) * m1 + params.omega();
        m1 = (1.0 + theta / kf) * m1 + params.omega();
        a /= 1.0 + theta / kf;
        law.advance();
    }
    let mut r = VerificationReport::new(
        "exact",
        CheckKind::Exact,
        params,
        RunMetadata::new(master_seed, "exact", n_max, 0),
    );
    r.stat("mean_rel_error", e_mean)
        .stat("second_moment_rel_error", e_second)
        .stat("martingale_mean_abs_error", e_mart)
        .limit(tol, "mean", "mean_rel_error", Op::Lt, 1e-10)
        .limit(tol, "second_moment", "second_moment_rel_error", Op::Lt, 1e-10)
        .limit(tol, "martingale_mean", "martingale_mean_abs_error", Op::Lt, 1e-12);
    if theta != 0.5 {
        r.stat("closed_form_rel_error", e_closed)
            .limit(tol, "closed_form", "closed_form_rel_error", Op::Lt, 1e-9);
    } else {
        r.note("closed-form second moment has a (2 theta - 1) denominator; recursion used at theta = 1/2");
    }
    Ok(r.finish())
}

/// Standard error of the sample variance by resampling with replacement.
pub fn bootstrap_variance_se(values: &[f64], resamples: usize, seed: u64) -> f64 {
    let mut g = rng::stream(seed);
    let len = values.len() as u64;
    let est: Moments = (0..resamples)
        .map(|_| {
            let m: Moments = (0..len).map(|_| values[(g.next_u64() % len) as usize]).collect();
            m.variance()
        })
        .collect();
    est.variance().sqrt()
}

/// `Var(S_n)` from the replicates against the exact recursion, and, for
/// `α = p`, against the leading-order formula of the regime.
pub fn variance_check(
    summary: &ReplicateSummary,
    n: u64,
    bootstrap_resamples: usize,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let params = &summary.params;
    let regime = Regime::of(params.theta())?;
    let m = summary
        .moments_at(n)
        .ok_or_else(|| Error::config(format!("no checkpoint at n = {n}")))?;
    let exact = MomentRecursion::at(params, n).variance();
    let mut r = VerificationReport::new("variance", CheckKind::Statistical, params, meta(summary, "variance", n));
    let se = match summary.values_at(n) {
        Some(v) if bootstrap_resamples > 0 => {
            let xs: Vec<f64> = v.iter().map(|&s| s as f64).collect();
            r.note(format!("standard error from {bootstrap_resamples} bootstrap resamples"));
            bootstrap_variance_se(
                &xs,
                bootstrap_resamples,
                rng::sub_seed(summary.master_seed, "variance.bootstrap"),
            )
        }
        _ => m.variance_std_error(),
    };
    let z = (m.variance() - exact) / se;
    r.stat("sample_variance", m.variance())
        .stat("exact_variance", exact)
        .stat("variance_std_error", se)
        .stat("exact_z_abs", z.abs())
        .limit(tol, "exact_z", "exact_z_abs", Op::Lt, 3.0);
    if params.is_stationary() {
        let nf = n as f64;
        let pq = params.bernoulli_variance();
        let asym = crate::moments::variance_asymptotic(params, n)?;
        r.stat("asymptotic_variance", asym)
            .stat("asymptotic_ratio", m.variance() / asym)
            .stat("asymptotic_ratio_error", rel_error(m.variance(), asym));
        match regime {
            Regime::Diffusive => {
                r.stat("variance_over_n", m.variance() / nf).limit(
                    tol,
                    "asymptotic",
                    "asymptotic_ratio_error",
                    Op::Lt,
                    DIFFUSIVE_VARIANCE_TOL,
                );
            }
            Regime::Superdiffusive => {
                r.stat("variance_over_n_2theta", m.variance() / nf.powf(2.0 * params.theta()))
                    .limit(
                        tol,
                        "asymptotic",
                        "asymptotic_ratio_error",
                        Op::Lt,
                        SUPERDIFFUSIVE_VARIANCE_TOL,
                    );
            }
            Regime::Critical => {
                // The log regime converges too slowly for a ratio test; check
                // that the exact Var/(n log n) approaches p(1−p) monotonically.
                let grid = [1_000u64, 10_000, 100_000, 1_000_000];
                let mut rec = MomentRecursion::new(params);
                let mut gaps = Vec::new();
                let mut at = 1u64;
                for &g in &grid {
                    let st = rec.nth((g - at) as usize).expect("unbounded");
                    at = g + 1;
                    let ratio = st.variance() / (g as f64 * (g as f64).ln());
                    r.stat(&format!("exact_var_over_nlogn_{g}"), ratio);
                    gaps.push((ratio - pq).abs());
                }
                let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
                r.stat("variance_over_nlogn", m.variance() / (nf * nf.ln()))
                    .stat("trend_monotone", if monotone { 1.0 } else { 0.0 })
                    .limit(tol, "trend", "trend_monotone", Op::Ge, 1.0);
            }
        }
    } else {
        r.note("alpha != p: the leading-order formula is stated for alpha = p; exact comparison only");
    }
    Ok(r.finish())
}

/// `S_n/n → p`: root-mean-square deviation at the last checkpoint, its decay
/// from the first, and the largest deviation over replicates when retained.
pub fn lln_check(summary: &ReplicateSummary, tol: &Tolerances) -> Result<VerificationReport> {
    let params = &summary.params;
    let regime = Regime::of(params.theta())?;
    let p = params.p();
    let rms = |j: usize| {
        let n = summary.checkpoints[j] as f64;
        let m = &summary.moments[j];
        let bias = m.mean / n - p;
        (m.m2 / m.count as f64 / (n * n) + bias * bias).sqrt()
    };
    let last = summary.checkpoints.len() - 1;
    let n = summary.checkpoints[last];
    let kind = if regime == Regime::Superdiffusive {
        CheckKind::Soft
    } else {
        CheckKind::Statistical
    };
    let mut r = VerificationReport::new("lln", kind, params, meta(summary, "lln", n));
    let (first, final_) = (rms(0), rms(last));
    r.stat("rms_deviation_first", first)
        .stat("first_checkpoint", summary.checkpoints[0] as f64)
        .stat("rms_deviation", final_)
        .stat("decay_ratio", if first > 0.0 { final_ / first } else { 0.0 })
        .limit(tol, "rms_deviation", "rms_deviation", Op::Lt, 0.02);
    if last > 0 && first > 0.0 {
        r.limit(tol, "decay", "decay_ratio", Op::Lt, 1.0);
    }
    if let Some(v) = summary.values_at(n) {
        let nf = n as f64;
        let max = v.iter().map(|&s| (s as f64 / nf - p).abs()).fold(0.0, f64::max);
        r.stat("max_abs_deviation", max);
    }
    if kind == CheckKind::Soft {
        r.note("theta > 1/2: the deviation decays like n^(theta-1); reported only");
    }
    Ok(r.finish())
}

/// Gaussian comparison of the scaled success rate at checkpoint `n`.
pub fn clt_check(summary: &ReplicateSummary, n: u64, tol: &Tolerances) -> Result<VerificationReport> {
    let params = &summary.params;
    let regime = Regime::of(params.theta())?;
    if regime == Regime::Superdiffusive {
        return Err(Error::domain("success-rate CLT needs theta <= 1/2"));
    }
    let mut r = VerificationReport::new("clt", CheckKind::Statistical, params, meta(summary, "clt", n));
    let pq = params.bernoulli_variance();
    if pq == 0.0 {
        record_degenerate(&mut r, tol, 0.0);
        return Ok(r.finish());
    }
    let values = require_values(summary, n)?;
    let variance = if regime == Regime::Critical {
        pq
    } else {
        pq / (1.0 - 2.0 * params.theta())
    };
    let (scale, p, nf) = (clt_scale(regime, n), params.p(), n as f64);
    let z: Vec<f64> = values.iter().map(|&s| scale * (s as f64 / nf - p)).collect();
    let ks = if regime == Regime::Critical { 0.02 } else { 0.01 };
    record_gaussian(
        &mut r,
        tol,
        &z,
        variance,
        &GaussianTolerances::for_sample_size(z.len(), ks),
    );
    if regime == Regime::Critical {
        r.note("scaling sqrt(n / log n); the critical regime converges slowly");
    }
    Ok(r.finish())
}

/// Empirical covariance of `√n(S_k/k − p)` at `k = ⌊ns⌋` and `k = ⌊nt⌋`
/// against the Gaussian-process limit.
pub fn fclt_check(summary: &ReplicateSummary, n: u64, s: f64, t: f64, tol: &Tolerances) -> Result<VerificationReport> {
    let params = &summary.params;
    let (theta, p) = (params.theta(), params.p());
    let limit = covariance_limit(theta, p, s, t)?;
    let ks = (n as f64 * s).floor() as u64;
    let kt = (n as f64 * t).floor() as u64;
    let scaled = |k: u64| -> Result<Vec<f64>> {
        let kf = k as f64;
        let sq = (n as f64).sqrt();
        Ok(require_values(summary, k)?
            .iter()
            .map(|&v| sq * (v as f64 / kf - p))
            .collect())
    };
    let (x, y) = (scaled(ks)?, scaled(kt)?);
    let cov = covariance(&x, &y);
    let mut r = VerificationReport::new("fclt", CheckKind::Statistical, params, meta(summary, "fclt", n));
    r.stat("s", s)
        .stat("t", t)
        .stat("empirical_covariance", cov)
        .stat("limit_covariance", limit)
        .stat("covariance_rel_error", rel_error(cov, limit))
        .limit(tol, "covariance", "covariance_rel_error", Op::Lt, 0.07);
    Ok(r.finish())
}

/// `E[L̂_n]` and `E[L̂_n²]` for `L̂_n = n^{1−θ}(S_n/n − p)` against the
/// moments of `L`.
pub fn moments_l_check(summary: &ReplicateSummary, n: u64, tol: &Tolerances) -> Result<VerificationReport> {
    let params = &summary.params;
    let lm = crate::moments::moments_l(params)?;
    let values = require_values(summary, n)?;
    let lhat: Moments = values
        .iter()
        .map(|&s| super::superdiffusive::estimate_l(params, n, s))
        .collect::<Result<_>>()?;
    let mut r = VerificationReport::new(
        "moments-l",
        CheckKind::Statistical,
        params,
        meta(summary, "moments-l", n),
    );
    let z = (lhat.mean - lm.mean_l) / lhat.std_error();
    r.stat("mean_l_hat", lhat.mean)
        .stat("mean_l", lm.mean_l)
        .stat("mean_std_error", lhat.std_error())
        .stat("mean_z_abs", z.abs())
        .stat("second_moment_l_hat", lhat.raw_second())
        .stat("second_moment_l", lm.second_moment_l)
        .stat(
            "second_moment_rel_error",
            rel_error(lhat.raw_second(), lm.second_moment_l),
        )
        .stat(
            "a_n_times_n_theta",
            a_closed_form(params.theta(), n) * (n as f64).powf(params.theta()),
        )
        .limit(tol, "mean", "mean_z_abs", Op::Lt, 3.0)
        .limit(tol, "second_moment", "second_moment_rel_error", Op::Lt, 0.05);
    Ok(r.finish())
}
