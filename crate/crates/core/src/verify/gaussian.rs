//! Gaussian limit targets and the moment/KS comparison against them.

use crate::error::{Error, Result};
use crate::montecarlo::ReplicateSummary;
use crate::process::ModelParams;
use crate::stats::{ks_p_value, ks_statistic, normal_cdf, Moments};

use super::{CheckKind, Op, Regime, RunMetadata, Tolerances, VerificationReport};

/// A centered Gaussian law that a standardized statistic should approach.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLimitSpec {
    pub variance: f64,
    pub description: String,
}

impl GaussianLimitSpec {
    pub fn new(variance: f64, description: impl Into<String>) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::domain(format!(
                "Gaussian limit needs positive variance, got {variance}"
            )));
        }
        Ok(GaussianLimitSpec {
            variance,
            description: description.into(),
        })
    }
}

/// Limit law of the scaled success rate for `θ ≤ 1/2`:
/// `N(0, p(1−p)/(1−2θ))` under `√n` scaling, `N(0, p(1−p))` under
/// `√(n/log n)` scaling at `θ = 1/2`.
pub fn clt_limit(params: &ModelParams) -> Result<GaussianLimitSpec> {
    let pq = params.bernoulli_variance();
    match Regime::of(params.theta())? {
        Regime::Diffusive => GaussianLimitSpec::new(
            pq / (1.0 - 2.0 * params.theta()),
            "sqrt(n)(S_n/n - p), diffusive regime",
        ),
        Regime::Critical => GaussianLimitSpec::new(pq, "sqrt(n/log n)(S_n/n - p), critical regime"),
        Regime::Superdiffusive => Err(Error::domain(
            "no Gaussian limit for the success rate when theta > 1/2; use the fluctuation check",
        )),
    }
}

/// Scaling factor applied to `S_n/n − p`.
pub fn clt_scale(regime: Regime, n: u64) -> f64 {
    let nf = n as f64;
    match regime {
        Regime::Critical => (nf / nf.ln()).sqrt(),
        _ => nf.sqrt(),
    }
}

/// Standardized per-replicate values at checkpoint `n` and their limit law.
pub fn clt_standardize(summary: &ReplicateSummary, n: u64) -> Result<(Vec<f64>, GaussianLimitSpec)> {
    let spec = clt_limit(&summary.params)?;
    let regime = Regime::of(summary.params.theta())?;
    let values = summary
        .values_at(n)
        .ok_or_else(|| Error::config(format!("per-replicate values at n = {n} were not retained")))?;
    let (scale, p, nf) = (clt_scale(regime, n), summary.params.p(), n as f64);
    Ok((values.iter().map(|&s| scale * (s as f64 / nf - p)).collect(), spec))
}

/// Default bounds of the Gaussian comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianTolerances {
    /// Bound on `|mean|/σ`.
    pub mean_sigma: f64,
    /// Bound on `|var/σ² − 1|`.
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub ks: f64,
}

impl GaussianTolerances {
    /// Moment bands `3√(6/R)` and `3√(24/R)` for a sample of size `r`.
    pub fn for_sample_size(r: usize, ks: f64) -> Self {
        let rf = r as f64;
        GaussianTolerances {
            mean_sigma: 0.01,
            variance: 0.03,
            skewness: 3.0 * (6.0 / rf).sqrt(),
            excess_kurtosis: 3.0 * (24.0 / rf).sqrt(),
            ks,
        }
    }
}

/// Records the comparison of `sample` with `N(0, target_variance)` on `report`.
pub(crate) fn record_gaussian(
    report: &mut VerificationReport,
    tol: &Tolerances,
    sample: &[f64],
    target_variance: f64,
    defaults: &GaussianTolerances,
) {
    let m: Moments = sample.iter().copied().collect();
    let sigma = target_variance.sqrt();
    let ks = ks_statistic(sample, |x| normal_cdf(x, target_variance));
    report
        .stat("limit_variance", target_variance)
        .stat("sample_size", sample.len() as f64)
        .stat("mean", m.mean)
        .stat("mean_over_sigma", m.mean.abs() / sigma)
        .stat("mean_std_error", m.std_error())
        .stat("variance", m.variance())
        .stat("variance_ratio_error", (m.variance() / target_variance - 1.0).abs())
        .stat("skewness", m.skewness())
        .stat("skewness_abs", m.skewness().abs())
        .stat("excess_kurtosis", m.excess_kurtosis())
        .stat("excess_kurtosis_abs", m.excess_kurtosis().abs())
        .stat("ks_distance", ks)
        .stat("ks_p_value", ks_p_value(ks, sample.len()));
    report
        .limit(tol, "mean", "mean_over_sigma", Op::Lt, defaults.mean_sigma)
        .limit(tol, "variance", "variance_ratio_error", Op::Lt, defaults.variance)
        .limit(tol, "skewness", "skewness_abs", Op::Lt, defaults.skewness)
        .limit(
            tol,
            "excess_kurtosis",
            "excess_kurtosis_abs",
            Op::Lt,
            defaults.excess_kurtosis,
        )
        .limit(tol, "ks", "ks_distance", Op::Lt, defaults.ks);
}

/// Marks a report whose Gaussian target is degenerate (`p(1−p) = 0`) as failed.
pub(crate) fn record_degenerate(report: &mut VerificationReport, tol: &Tolerances, variance: f64) {
    report
        .stat("limit_variance", variance)
        .limit(tol, "limit_variance", "limit_variance", Op::Gt, 0.0)
        .note("degenerate Gaussian limit: p(1-p) = 0");
}

/// Moment and Kolmogorov–Smirnov comparison of `sample` with `spec`.
pub fn gaussianity_test(
    sample: &[f64],
    spec: &GaussianLimitSpec,
    params: &ModelParams,
    tolerances: &GaussianTolerances,
) -> Result<VerificationReport> {
    if sample.len() < 1000 {
        return Err(Error::config(format!(
            "Gaussian comparison needs at least 1000 values, got {}",
            sample.len()
        )));
    }
    let meta = RunMetadata::new(0, "gaussianity", 0, sample.len() as u64);
    let mut report = VerificationReport::new("gaussianity", CheckKind::Statistical, params, meta);
    record_gaussian(&mut report, &Tolerances::default(), sample, spec.variance, tolerances);
    report.note(spec.description.clone());
    Ok(report.finish())
}

/// `E[W_s W_t] = p(1−p)/((1−2θ) t) · (t/s)^θ` for `0 < s ≤ t`, `θ < 1/2`
/// (arguments are reordered if `s > t`).
pub fn covariance_limit(theta: f64, p: f64, s: f64, t: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&theta) {
        return Err(Error::domain(format!(
            "covariance limit needs theta < 1/2 (theta = {theta})"
        )));
    }
    let (s, t) = if s <= t { (s, t) } else { (t, s) };
    if !(s > 0.0) {
        return Err(Error::domain("covariance limit needs s > 0"));
    }
    Ok(p * (1.0 - p) / ((1.0 - 2.0 * theta) * t) * (t / s).powf(theta))
}
