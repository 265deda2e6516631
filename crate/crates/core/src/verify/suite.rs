//! Check selection, regime gating and orchestration of a verification run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::{run, ExperimentPlan, ReplicateSummary, Retain, DEFAULT_SHARD_SIZE};
use crate::process::{checkpoints, simulate_observed, ModelParams};
use crate::rng;

use super::pathwise::{self, AscltTracker, Fanout, QslTracker};
use super::{replicate, superdiffusive, Regime, RunMetadata, Tolerances, VerificationReport};

/// Checks valid in each regime, in execution order.
const DIFFUSIVE: &[&str] = &["exact", "variance", "lln", "clt", "fclt", "asclt", "lil", "qsl"];
const CRITICAL: &[&str] = &["exact", "variance", "lln", "clt", "asclt", "lil", "qsl"];
const SUPERDIFFUSIVE: &[&str] = &[
    "exact",
    "variance",
    "lln",
    "strong-law",
    "moments-l",
    "fluctuation-clt",
    "fluctuation-lil",
];

const GAUSSIAN_LIMITS: &[&str] = &[
    "mean",
    "variance",
    "skewness",
    "excess_kurtosis",
    "ks",
    "limit_variance",
];

/// Limit names each check can emit, for validating tolerance overrides.
fn limit_names(check: &str) -> &'static [&'static str] {
    match check {
        "exact" => &["mean", "second_moment", "martingale_mean", "closed_form"],
        "variance" => &["exact_z", "asymptotic", "trend"],
        "lln" => &["rms_deviation", "decay"],
        "clt" | "fluctuation-clt" => GAUSSIAN_LIMITS,
        "fclt" => &["covariance"],
        "asclt" => &["sup_distance", "limit_variance"],
        "lil" | "fluctuation-lil" => &["corridor_plus"],
        "strong-law" => &["trend"],
        "moments-l" => &["mean", "second_moment"],
        _ => &[],
    }
}

fn known_limit(check: &str, limit: &str) -> bool {
    if check == "qsl" {
        return limit
            .strip_prefix("ratio_r")
            .is_some_and(|r| !r.is_empty() && r.bytes().all(|b| b.is_ascii_digit()));
    }
    limit_names(check).contains(&limit)
}

fn regime_checks(regime: Regime) -> &'static [&'static str] {
    match regime {
        Regime::Diffusive => DIFFUSIVE,
        Regime::Critical => CRITICAL,
        Regime::Superdiffusive => SUPERDIFFUSIVE,
    }
}

fn all_checks() -> impl Iterator<Item = &'static str> {
    let mut v: Vec<&str> = DIFFUSIVE.iter().chain(SUPERDIFFUSIVE).copied().collect();
    v.sort_unstable();
    v.dedup();
    v.into_iter()
}

/// Settings of a verification run. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    /// Check ids, `"all"`, or a regime name (`"diffusive"`, `"critical"`,
    /// `"superdiffusive"`) selecting that regime's checks.
    pub checks: Vec<String>,
    pub tolerances: Tolerances,
    /// Replicates of the shared Monte Carlo run.
    pub replicates: u64,
    /// Horizon of the shared run; replicate-based checks evaluate here.
    pub n: u64,
    pub shard_size: u64,
    pub bootstrap_resamples: usize,
    pub exact_n_max: u64,
    pub fclt_s: f64,
    pub fclt_t: f64,
    /// Length of the single path used by `asclt` and `qsl`.
    pub path_length: u64,
    pub qsl_orders: Vec<u32>,
    pub lil_paths: u64,
    pub lil_horizon: u64,
    pub strong_law_ns: Vec<u64>,
    pub strong_law_paths: u64,
    pub t_grid: Vec<f64>,
    pub fluctuation_n: u64,
    pub fluctuation_m: u64,
    pub fluctuation_replicates: u64,
    pub fluctuation_lil_paths: u64,
    pub fluctuation_lil_horizon: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            checks: vec!["all".into()],
            tolerances: Tolerances::default(),
            replicates: 100_000,
            n: 10_000,
            shard_size: DEFAULT_SHARD_SIZE,
            bootstrap_resamples: 200,
            exact_n_max: 2000,
            fclt_s: 0.25,
            fclt_t: 1.0,
            path_length: 1_000_000,
            qsl_orders: vec![1, 2],
            lil_paths: 100,
            lil_horizon: 1_000_000,
            strong_law_ns: vec![1_000, 10_000, 100_000],
            strong_law_paths: 100,
            t_grid: vec![0.5, 1.0, 2.0],
            fluctuation_n: 10_000,
            fluctuation_m: 1_000_000,
            fluctuation_replicates: 10_000,
            fluctuation_lil_paths: 100,
            fluctuation_lil_horizon: 1_000_000,
        }
    }
}

impl SuiteConfig {
    /// Expands aliases and checks every id and tolerance key against the regime.
    pub fn resolve(&self, params: &ModelParams) -> Result<Vec<&'static str>> {
        let regime = Regime::of(params.theta())?;
        let allowed = regime_checks(regime);
        let mut wanted: Vec<&'static str> = Vec::new();
        for id in &self.checks {
            let group = match id.as_str() {
                "all" => Some(regime),
                "diffusive" => Some(Regime::Diffusive),
                "critical" => Some(Regime::Critical),
                "superdiffusive" => Some(Regime::Superdiffusive),
                _ => None,
            };
            match group {
                Some(g) if g != regime => {
                    return Err(Error::config(format!(
                        "check group `{id}` needs the {} regime, but theta = {} is {}",
                        g.name(),
                        params.theta(),
                        regime.name()
                    )))
                }
                Some(_) => wanted.extend(allowed),
                None => {
                    let known = all_checks()
                        .find(|c| c == id)
                        .ok_or_else(|| Error::config(format!("unknown check `{id}`")))?;
                    if !allowed.contains(&known) {
                        return Err(Error::config(format!(
                            "check `{id}` does not apply to the {} regime (theta = {})",
                            regime.name(),
                            params.theta()
                        )));
                    }
                    wanted.push(known);
                }
            }
        }
        for key in self.tolerances.0.keys() {
            let (check, limit) = key
                .split_once('.')
                .ok_or_else(|| Error::config(format!("tolerance key `{key}` is not `check.limit`")))?;
            if !known_limit(check, limit) {
                return Err(Error::config(format!("unknown tolerance key `{key}`")));
            }
        }
        if wanted.is_empty() {
            return Err(Error::config("no checks requested"));
        }
        let order: Vec<&'static str> = allowed.iter().copied().filter(|c| wanted.contains(c)).collect();
        Ok(order)
    }

    /// Checkpoints of the shared run: geometric from 10, plus what the checks read.
    fn main_checkpoints(&self, checks: &[&str]) -> Result<Vec<u64>> {
        let mut cps = checkpoints::geometric(10.min(self.n), 1.2, self.n)?;
        if checks.contains(&"fclt") {
            for t in [self.fclt_s, self.fclt_t] {
                let k = (self.n as f64 * t).floor() as u64;
                if k == 0 || k > self.n {
                    return Err(Error::config(format!(
                        "fclt time {t} is outside (0, 1] at n = {}",
                        self.n
                    )));
                }
                cps.push(k);
            }
        }
        checkpoints::validate(&cps, self.n)
    }
}

fn needs_main_run(checks: &[&str]) -> bool {
    checks
        .iter()
        .any(|c| matches!(*c, "variance" | "lln" | "clt" | "fclt" | "moments-l"))
}

fn stamp(mut r: VerificationReport, master: u64, check_seed: u64) -> VerificationReport {
    let RunMetadata { n, replicates, .. } = r.metadata;
    r.metadata = RunMetadata::new(master, &r.check, n, replicates);
    r.metadata.check_seed = check_seed;
    r
}

/// Runs the requested checks and returns one report per check, in a fixed
/// order. Every random stream is derived from `master_seed` by check name, so
/// the same inputs give the same reports regardless of thread count.
pub fn run_suite(params: &ModelParams, master_seed: u64, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let checks = cfg.resolve(params)?;
    let tol = &cfg.tolerances;
    let main_seed = rng::sub_seed(master_seed, "main");
    let main: Option<ReplicateSummary> = if needs_main_run(&checks) {
        let plan = ExperimentPlan::new(
            *params,
            cfg.n,
            &cfg.main_checkpoints(&checks)?,
            cfg.replicates,
            main_seed,
            Retain::PerReplicateValues,
        )?
        .with_shard_size(cfg.shard_size)?;
        Some(run(&plan)?)
    } else {
        None
    };
    let path_seed = rng::sub_seed(master_seed, "path");
    let mut asclt = None;
    let mut qsl = None;
    if checks.iter().any(|c| *c == "asclt" || *c == "qsl") {
        let sigma = super::clt_limit(params).map(|s| s.variance.sqrt()).unwrap_or(1.0);
        let mut a = AscltTracker::new(params, pathwise::default_asclt_grid(sigma))?;
        let mut q = QslTracker::new(params, cfg.qsl_orders.clone())?;
        simulate_observed(params, cfg.path_length, path_seed, &mut Fanout(vec![&mut a, &mut q]));
        asclt = Some(a);
        qsl = Some(q);
    }

    let mut reports = Vec::with_capacity(checks.len());
    for &check in &checks {
        let summary = || main.as_ref().expect("main run present");
        let report = match check {
            "exact" => {
                let points: Vec<u64> = [1, 2, 10, 100, cfg.exact_n_max]
                    .into_iter()
                    .filter(|&k| k <= cfg.exact_n_max)
                    .collect();
                stamp(
                    replicate::exact_check(params, cfg.exact_n_max, &points, tol, master_seed)?,
                    master_seed,
                    0,
                )
            }
            "variance" => stamp(
                replicate::variance_check(summary(), cfg.n, cfg.bootstrap_resamples, tol)?,
                master_seed,
                main_seed,
            ),
            "lln" => stamp(replicate::lln_check(summary(), tol)?, master_seed, main_seed),
            "clt" => stamp(replicate::clt_check(summary(), cfg.n, tol)?, master_seed, main_seed),
            "fclt" => stamp(
                replicate::fclt_check(summary(), cfg.n, cfg.fclt_s, cfg.fclt_t, tol)?,
                master_seed,
                main_seed,
            ),
            "moments-l" => stamp(
                replicate::moments_l_check(summary(), cfg.n, tol)?,
                master_seed,
                main_seed,
            ),
            "asclt" => stamp(
                pathwise::asclt_report(params, asclt.as_ref().expect("tracked"), path_seed, tol)?,
                master_seed,
                path_seed,
            ),
            "qsl" => stamp(
                pathwise::qsl_report(params, qsl.as_ref().expect("tracked"), path_seed, tol)?,
                master_seed,
                path_seed,
            ),
            "lil" => {
                let seed = rng::sub_seed(master_seed, "lil");
                let maxima = pathwise::simulate_lil_maxima(params, cfg.lil_horizon, cfg.lil_paths, seed)?;
                stamp(
                    pathwise::lil_report(params, cfg.lil_horizon, &maxima, seed, tol)?,
                    master_seed,
                    seed,
                )
            }
            "strong-law" => {
                let seed = rng::sub_seed(master_seed, "strong-law");
                let r = superdiffusive::strong_law_check(
                    params,
                    &cfg.strong_law_ns,
                    &cfg.t_grid,
                    cfg.strong_law_paths,
                    seed,
                    tol,
                )?;
                stamp(r, master_seed, seed)
            }
            "fluctuation-clt" => {
                let seed = rng::sub_seed(master_seed, "fluctuation-clt");
                let plan = ExperimentPlan::new(
                    *params,
                    cfg.fluctuation_m,
                    &[cfg.fluctuation_n, cfg.fluctuation_m],
                    cfg.fluctuation_replicates,
                    seed,
                    Retain::PerReplicateValues,
                )?
                .with_shard_size(cfg.shard_size)?;
                let s = run(&plan)?;
                stamp(
                    superdiffusive::fluctuation_clt_check(&s, cfg.fluctuation_n, cfg.fluctuation_m, tol)?,
                    master_seed,
                    seed,
                )
            }
            "fluctuation-lil" => {
                let seed = rng::sub_seed(master_seed, "fluctuation-lil");
                let r = superdiffusive::fluctuation_lil_check(
                    params,
                    cfg.fluctuation_lil_horizon,
                    cfg.fluctuation_lil_paths,
                    seed,
                    tol,
                )?;
                stamp(r, master_seed, seed)
            }
            other => unreachable!("resolved check {other}"),
        };
        reports.push(report);
    }
    Ok(reports)
}
