//! Single-path (almost-sure) checks: log-averaged empirical measures,
//! quadratic log-averages and iterated-logarithm corridors.
//!
//! All statistics are accumulated by streaming observers, so a path of any
//! length is processed in one pass without being stored. Sparse trajectories
//! are accepted: the weight of every skipped index is charged to the next
//! recorded checkpoint.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::process::{simulate_observed, ModelParams, PathObserver, Trajectory};
use crate::rng;
use crate::stats::{std_normal_cdf, Moments, NeumaierSum};

use super::{CheckKind, Op, Regime, RunMetadata, Tolerances, VerificationReport};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Shortest path accepted by the log-averaged checks.
pub const MIN_ASCLT_LENGTH: u64 = 10_000;

/// First index entering the iterated-logarithm maxima.
pub const LIL_START: u64 = 1_000;

/// Corridor for the normalized maxima `R±`.
pub const LIL_CORRIDOR: (f64, f64) = (0.2, 1.5);

/// `e^{e^e}`: below it `log log log n ≤ 0`.
pub const CRITICAL_ENVELOPE_START: f64 = 3_814_279.104_760_214;

/// Indices from which a critical-regime corridor is considered meaningful.
pub const CRITICAL_CORRIDOR_START: u64 = 10_000_000;

/// Variance of the Gaussian limit of the scaled rate, zero when degenerate.
fn limit_variance(params: &ModelParams, regime: Regime) -> Result<f64> {
    let pq = params.bernoulli_variance();
    match regime {
        Regime::Diffusive => Ok(pq / (1.0 - 2.0 * params.theta())),
        Regime::Critical => Ok(pq),
        Regime::Superdiffusive => Err(Error::domain("path-wise Gaussian checks need theta <= 1/2")),
    }
}

/// Log-averaging weight of index `k`: `1/k`, or `1/(k log k)` (zero at `k = 1`)
/// in the critical regime.
fn log_weight(regime: Regime, k: u64) -> f64 {
    let kf = k as f64;
    match regime {
        Regime::Critical if k < 2 => 0.0,
        Regime::Critical => 1.0 / (kf * kf.ln()),
        _ => 1.0 / kf,
    }
}

/// Scaled deviation `√k(S_k/k − p)`, or `√(k/log k)(S_k/k − p)` when critical.
fn scaled(regime: Regime, p: f64, k: u64, s: u64) -> f64 {
    let kf = k as f64;
    let d = s as f64 / kf - p;
    match regime {
        Regime::Critical if k < 2 => 0.0,
        Regime::Critical => (kf / kf.ln()).sqrt() * d,
        _ => kf.sqrt() * d,
    }
}

/// Streaming log-averaged empirical CDF on a fixed grid.
#[derive(Debug, Clone)]
pub struct AscltTracker {
    regime: Regime,
    p: f64,
    grid: Vec<f64>,
    /// `bins[j]` holds the weight of statistics in `(grid[j−1], grid[j]]`.
    bins: Vec<NeumaierSum>,
    total: NeumaierSum,
    last: u64,
}

impl AscltTracker {
    pub fn new(params: &ModelParams, grid: Vec<f64>) -> Result<Self> {
        let regime = Regime::of(params.theta())?;
        limit_variance(params, regime)?;
        if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.is_empty() {
            return Err(Error::config("ASCLT grid must be non-empty and strictly increasing"));
        }
        Ok(AscltTracker {
            regime,
            p: params.p(),
            bins: vec![NeumaierSum::new(); grid.len() + 1],
            grid,
            total: NeumaierSum::new(),
            last: 0,
        })
    }

    pub fn last_index(&self) -> u64 {
        self.last
    }

    /// Total weight accumulated so far.
    pub fn total_weight(&self) -> f64 {
        self.total.value()
    }

    /// Self-normalized empirical CDF at each grid point.
    pub fn cdf(&self) -> Vec<f64> {
        let total = self.total.value();
        let mut acc = 0.0;
        self.bins[..self.grid.len()]
            .iter()
            .map(|b| {
                acc += b.value();
                if total > 0.0 {
                    acc / total
                } else {
                    f64::NAN
                }
            })
            .collect()
    }
}

impl PathObserver for AscltTracker {
    fn observe(&mut self, n: u64, s: u64) {
        let w: f64 = (self.last + 1..=n).map(|k| log_weight(self.regime, k)).sum();
        self.last = n;
        if w == 0.0 {
            return;
        }
        let z = scaled(self.regime, self.p, n, s);
        let j = self.grid.partition_point(|&g| g < z);
        self.bins[j].add(w);
        self.total.add(w);
    }
}

/// Default evaluation grid `σ·{−3, −2.9, …, 3}`.
pub fn default_asclt_grid(sigma: f64) -> Vec<f64> {
    (-30..=30).map(|i| sigma * i as f64 / 10.0).collect()
}

/// Sup-distance between the log-averaged empirical CDF and the Gaussian limit.
pub fn asclt_report(
    params: &ModelParams,
    tracker: &AscltTracker,
    seed: u64,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let regime = tracker.regime;
    let n = tracker.last;
    if n < MIN_ASCLT_LENGTH {
        return Err(Error::config(format!(
            "ASCLT needs a path of length >= {MIN_ASCLT_LENGTH}, got {n}"
        )));
    }
    let variance = limit_variance(params, regime)?;
    let mut r = VerificationReport::new("asclt", CheckKind::Soft, params, RunMetadata::new(seed, "asclt", n, 1));
    let reference = if variance > 0.0 { variance.sqrt() } else { 1.0 };
    let cdf = tracker.cdf();
    let sup = tracker
        .grid
        .iter()
        .zip(&cdf)
        .map(|(&x, &f)| (f - std_normal_cdf(x / reference)).abs())
        .fold(0.0, f64::max);
    let nf = n as f64;
    let w = tracker.total_weight();
    match regime {
        Regime::Critical => {
            r.stat("weight_over_loglog_n", w / nf.ln().ln());
        }
        _ => {
            r.stat("weight_over_log_n", w / nf.ln())
                .stat("weight_minus_euler_over_log_n", (w - EULER_GAMMA) / nf.ln());
        }
    }
    r.stat("limit_variance", variance)
        .stat("grid_points", tracker.grid.len() as f64)
        .stat("sup_distance", sup)
        .limit(tol, "sup_distance", "sup_distance", Op::Lt, 0.15);
    if variance == 0.0 {
        r.stat("limit_variance_positive", 0.0)
            .limit(tol, "limit_variance", "limit_variance_positive", Op::Gt, 0.0)
            .note("degenerate limit p(1-p) = 0; compared against a unit Gaussian");
    }
    Ok(r.finish())
}

/// Log-averaged empirical CDF of one recorded path.
pub fn asclt_empirical(path: &Trajectory, grid: Vec<f64>, tol: &Tolerances) -> Result<VerificationReport> {
    let mut t = AscltTracker::new(&path.params, grid)?;
    path.replay(&mut t);
    asclt_report(&path.params, &t, path.seed, tol)
}

/// Streaming weighted sums of even powers of the centered rate.
///
/// Index `k` contributes `c_r(k)·(k (S_k/k − p)²)^r`, with
/// `c_r(k) = 1/k` when `θ < 1/2` and `c_r(k) = (1/(k log k))^{r+1}/k` at
/// `θ = 1/2`, the latter being the normalization as printed.
#[derive(Debug, Clone)]
pub struct QslTracker {
    regime: Regime,
    p: f64,
    orders: Vec<u32>,
    sums: Vec<NeumaierSum>,
    last: u64,
}

impl QslTracker {
    pub fn new(params: &ModelParams, orders: Vec<u32>) -> Result<Self> {
        let regime = Regime::of(params.theta())?;
        limit_variance(params, regime)?;
        if orders.is_empty() || orders.contains(&0) {
            return Err(Error::config("QSL orders must be positive"));
        }
        Ok(QslTracker {
            regime,
            p: params.p(),
            sums: vec![NeumaierSum::new(); orders.len()],
            orders,
            last: 0,
        })
    }

    fn weight(&self, r: u32, k: u64) -> f64 {
        let kf = k as f64;
        match self.regime {
            Regime::Critical if k < 2 => 0.0,
            Regime::Critical => (1.0 / (kf * kf.ln())).powi(r as i32 + 1) / kf,
            _ => 1.0 / kf,
        }
    }

    pub fn last_index(&self) -> u64 {
        self.last
    }
}

impl PathObserver for QslTracker {
    fn observe(&mut self, n: u64, s: u64) {
        let d = s as f64 / n as f64 - self.p;
        let base = n as f64 * d * d;
        for (i, &r) in self.orders.iter().enumerate() {
            let w: f64 = (self.last + 1..=n).map(|k| self.weight(r, k)).sum();
            self.sums[i].add(w * base.powi(r as i32));
        }
        self.last = n;
    }
}

/// `(p(1−p))^r (2r)!/(2^r r!)`, divided by `(1−2θ)^r` when `θ < 1/2`.
pub fn qsl_limit(params: &ModelParams, r: u32) -> Result<f64> {
    let regime = Regime::of(params.theta())?;
    let variance = limit_variance(params, regime)?;
    let double_factorial: f64 = (1..=r).map(|j| (2 * j - 1) as f64).product();
    Ok(variance.powi(r as i32) * double_factorial)
}

/// The log-average of order `r`: the weighted sum over `1/log n`
/// (`1/log log n` at `θ = 1/2`).
pub fn qsl_values(tracker: &QslTracker) -> Vec<(u32, f64)> {
    let nf = tracker.last as f64;
    let norm = match tracker.regime {
        Regime::Critical => nf.ln().ln(),
        _ => nf.ln(),
    };
    tracker
        .orders
        .iter()
        .zip(&tracker.sums)
        .map(|(&r, s)| (r, s.value() / norm))
        .collect()
}

/// Log-average of order `r` along one recorded path.
pub fn qsl_average(path: &Trajectory, r: u32) -> Result<f64> {
    let mut t = QslTracker::new(&path.params, vec![r])?;
    path.replay(&mut t);
    Ok(qsl_values(&t)[0].1)
}

pub fn qsl_report(
    params: &ModelParams,
    tracker: &QslTracker,
    seed: u64,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let n = tracker.last;
    if n < MIN_ASCLT_LENGTH {
        return Err(Error::config(format!(
            "QSL needs a path of length >= {MIN_ASCLT_LENGTH}, got {n}"
        )));
    }
    let mut r = VerificationReport::new("qsl", CheckKind::Soft, params, RunMetadata::new(seed, "qsl", n, 1));
    for (order, value) in qsl_values(tracker) {
        let limit = qsl_limit(params, order)?;
        let ratio = value / limit;
        r.stat(&format!("average_r{order}"), value)
            .stat(&format!("limit_r{order}"), limit)
            .stat(&format!("ratio_r{order}"), ratio)
            .stat(&format!("ratio_error_r{order}"), (ratio - 1.0).abs())
            .limit(
                tol,
                &format!("ratio_r{order}"),
                &format!("ratio_error_r{order}"),
                Op::Lt,
                0.2,
            );
    }
    if tracker.regime == Regime::Critical {
        r.note(
            "critical weights (1/(k log k))^(r+1) k^(r-1) follow the printed normalization; \
             they are summable, so a ratio far from 1 points at the normalization rather than the process",
        );
    }
    Ok(r.finish())
}

/// Iterated-logarithm envelope for `S_n − np`:
/// `√(2σ² n log log n)` for `θ < 1/2` (`n ≥ 16`) and
/// `√(2p(1−p) n log n log log log n)` at `θ = 1/2` (`n > e^{e^e}`).
/// `None` where the envelope is undefined.
pub fn lil_envelope(params: &ModelParams, n: u64) -> Result<Option<f64>> {
    let regime = Regime::of(params.theta())?;
    let variance = limit_variance(params, regime)?;
    let nf = n as f64;
    Ok(match regime {
        Regime::Critical => {
            (nf > CRITICAL_ENVELOPE_START).then(|| (2.0 * variance * nf * nf.ln() * nf.ln().ln().ln()).sqrt())
        }
        _ => (n >= 16).then(|| (2.0 * variance * nf * nf.ln().ln()).sqrt()),
    })
}

/// Per-path maxima of `±(S_n − np)/envelope(n)` over `n ≥ start`.
#[derive(Debug, Clone)]
pub struct LilTracker {
    params: ModelParams,
    start: u64,
    pub r_plus: f64,
    pub r_minus: f64,
    pub points: u64,
}

impl LilTracker {
    pub fn new(params: &ModelParams, start: u64) -> Result<Self> {
        lil_envelope(params, start)?;
        Ok(LilTracker {
            params: *params,
            start,
            r_plus: f64::NEG_INFINITY,
            r_minus: f64::NEG_INFINITY,
            points: 0,
        })
    }
}

impl PathObserver for LilTracker {
    fn observe(&mut self, n: u64, s: u64) {
        if n < self.start {
            return;
        }
        if let Ok(Some(env)) = lil_envelope(&self.params, n) {
            let x = (s as f64 - n as f64 * self.params.p()) / env;
            self.r_plus = self.r_plus.max(x);
            self.r_minus = self.r_minus.max(-x);
            self.points += 1;
        }
    }
}

/// Corridor statistics over the per-path maxima.
pub fn lil_report(
    params: &ModelParams,
    horizon: u64,
    maxima: &[(f64, f64)],
    seed: u64,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let regime = Regime::of(params.theta())?;
    let mut r = VerificationReport::new(
        "lil",
        CheckKind::Soft,
        params,
        RunMetadata::new(seed, "lil", horizon, maxima.len() as u64),
    );
    let (lo, hi) = LIL_CORRIDOR;
    let inside = |x: f64| x > lo && x < hi;
    let frac = |f: &dyn Fn(&(f64, f64)) -> f64| {
        maxima.iter().filter(|m| inside(f(m))).count() as f64 / maxima.len().max(1) as f64
    };
    let plus: Moments = maxima.iter().map(|m| m.0).filter(|x| x.is_finite()).collect();
    let minus: Moments = maxima.iter().map(|m| m.1).filter(|x| x.is_finite()).collect();
    r.stat("paths", maxima.len() as f64)
        .stat("r_plus_mean", plus.mean)
        .stat("r_plus_max", plus.max)
        .stat("r_minus_mean", minus.mean)
        .stat("r_minus_max", minus.max)
        .stat("corridor_fraction_plus", frac(&|m| m.0))
        .stat("corridor_fraction_minus", frac(&|m| m.1));
    if regime == Regime::Critical && horizon < CRITICAL_CORRIDOR_START {
        r.note(format!(
            "critical envelope needs n > e^(e^e); no corridor below n = {CRITICAL_CORRIDOR_START}, statistics informative only"
        ));
    } else {
        r.limit(tol, "corridor_plus", "corridor_fraction_plus", Op::Ge, 0.95);
    }
    Ok(r.finish())
}

/// Corridor check over recorded paths (all with the same parameters).
pub fn lil_check(paths: &[Trajectory], tol: &Tolerances) -> Result<VerificationReport> {
    let first = paths
        .first()
        .ok_or_else(|| Error::config("LIL check needs at least one path"))?;
    let mut maxima = Vec::with_capacity(paths.len());
    for path in paths {
        if path.params != first.params {
            return Err(Error::config("LIL paths must share parameters"));
        }
        let mut t = LilTracker::new(&path.params, LIL_START)?;
        path.replay(&mut t);
        maxima.push((t.r_plus, t.r_minus));
    }
    let horizon = paths.iter().map(|p| p.horizon).max().unwrap_or(0);
    lil_report(&first.params, horizon, &maxima, first.seed, tol)
}

/// Fans one path out to several observers.
pub struct Fanout<'a>(pub Vec<&'a mut dyn PathObserver>);

impl PathObserver for Fanout<'_> {
    fn observe(&mut self, n: u64, s: u64) {
        for o in self.0.iter_mut() {
            o.observe(n, s);
        }
    }
}

/// Simulates `paths` dense paths in parallel and returns `(R⁺, R⁻)` for each.
/// Path `i` uses stream seed `derive_seed(seed, i)`.
pub fn simulate_lil_maxima(params: &ModelParams, horizon: u64, paths: u64, seed: u64) -> Result<Vec<(f64, f64)>> {
    LilTracker::new(params, LIL_START)?;
    Ok((0..paths)
        .into_par_iter()
        .map(|i| {
            let mut t = LilTracker::new(params, LIL_START).expect("validated");
            simulate_observed(params, horizon, rng::derive_seed(seed, i), &mut t);
            (t.r_plus, t.r_minus)
        })
        .collect())
}
