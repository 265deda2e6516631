//! The correlated Bernoulli process.
//!
//! `X_1 ~ Bernoulli(α)` and, for `n ≥ 1`,
//!
//! ```text
//! P(X_{n+1} = 1 | S_n) = (1 − θ) p + θ S_n / n,
//! ```
//!
//! so each draw mixes a fixed probability `p` with the running success rate.
//! `θ = 1` is accepted here even though the limit theorems need `θ < 1`;
//! the verification layer refuses it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// The triple `(θ, p, α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ModelParams {
    theta: f64,
    p: f64,
    alpha: f64,
}

#[derive(Deserialize)]
struct RawParams {
    theta: f64,
    p: f64,
    alpha: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.theta, raw.p, raw.alpha)
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must lie in [0, 1]",
        })
    }
}

impl ModelParams {
    pub fn new(theta: f64, p: f64, alpha: f64) -> Result<Self> {
        check_unit("theta", theta)?;
        check_unit("p", p)?;
        check_unit("alpha", alpha)?;
        Ok(ModelParams { theta, p, alpha })
    }

    /// Shorthand for the stationary start `α = p`.
    pub fn stationary(theta: f64, p: f64) -> Result<Self> {
        Self::new(theta, p, p)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `ω = (1 − θ) p`, the constant part of the success probability.
    pub fn omega(&self) -> f64 {
        (1.0 - self.theta) * self.p
    }

    /// `p (1 − p)`.
    pub fn bernoulli_variance(&self) -> f64 {
        self.p * (1.0 - self.p)
    }

    pub fn is_stationary(&self) -> bool {
        self.alpha == self.p
    }
}

/// `(n, S_n)` after `n` draws. `n = 0` is the state before the first draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProcessState {
    n: u64,
    s: u64,
}

impl ProcessState {
    pub const START: ProcessState = ProcessState { n: 0, s: 0 };

    pub fn new(n: u64, s: u64) -> Result<Self> {
        if s > n {
            return Err(Error::config(format!("state with s = {s} > n = {n}")));
        }
        Ok(ProcessState { n, s })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn s(&self) -> u64 {
        self.s
    }
}

/// Success probability from the precomputed pieces; shared by every sampler
/// so that all of them make bit-identical decisions.
#[inline(always)]
pub(crate) fn mixed_probability(omega: f64, theta: f64, s: f64, inv_n: f64) -> f64 {
    omega + theta * (s * inv_n)
}

/// Probability that the next draw is a success. At `n = 0` this is `α`.
pub fn success_probability(params: &ModelParams, state: ProcessState) -> f64 {
    if state.n == 0 {
        return params.alpha;
    }
    mixed_probability(params.omega(), params.theta, state.s as f64, 1.0 / state.n as f64)
}

/// Advances one draw; success iff `u < success_probability`.
pub fn step(params: &ModelParams, state: ProcessState, u: f64) -> ProcessState {
    let hit = u < success_probability(params, state);
    ProcessState {
        n: state.n + 1,
        s: state.s + u64::from(hit),
    }
}

/// Receives `(n, S_n)` for consecutive `n` (or at checkpoints when replaying
/// a sparse trajectory).
pub trait PathObserver {
    fn observe(&mut self, n: u64, s: u64);
}

impl<F: FnMut(u64, u64)> PathObserver for F {
    fn observe(&mut self, n: u64, s: u64) {
        self(n, s)
    }
}

/// Drives one path of `horizon` draws from `rng`, reporting every `(n, S_n)`.
#[inline]
pub(crate) fn drive<O: PathObserver + ?Sized>(params: &ModelParams, horizon: u64, rng: &mut Stream, obs: &mut O) {
    if horizon == 0 {
        return;
    }
    let omega = params.omega();
    let theta = params.theta;
    let mut s = u64::from(rng::next_unit(rng) < params.alpha);
    obs.observe(1, s);
    for n in 1..horizon {
        let q = mixed_probability(omega, theta, s as f64, 1.0 / n as f64);
        s += u64::from(rng::next_unit(rng) < q);
        obs.observe(n + 1, s);
    }
}

/// Runs one path and streams it into `obs` without storing it.
pub fn simulate_observed<O: PathObserver + ?Sized>(params: &ModelParams, horizon: u64, seed: u64, obs: &mut O) {
    let mut rng = rng::stream(seed);
    drive(params, horizon, &mut rng, obs);
}

/// Checkpoint lists.
pub mod checkpoints {
    use crate::error::{Error, Result};

    /// Sorts, deduplicates and range-checks a checkpoint list against `horizon`.
    pub fn validate(list: &[u64], horizon: u64) -> Result<Vec<u64>> {
        if horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if let Some(bad) = list.iter().find(|&&n| n == 0 || n > horizon) {
            return Err(Error::config(format!("checkpoint {bad} outside [1, {horizon}]")));
        }
        let mut v = list.to_vec();
        v.sort_unstable();
        v.dedup();
        Ok(v)
    }

    /// `1, 2, …, horizon`.
    pub fn dense(horizon: u64) -> Vec<u64> {
        (1..=horizon).collect()
    }

    /// `n_j = ⌈n0 ρ^j⌉` up to `horizon`, with `horizon` itself always included.
    pub fn geometric(n0: u64, ratio: f64, horizon: u64) -> Result<Vec<u64>> {
        if n0 == 0 || ratio <= 1.0 || !ratio.is_finite() {
            return Err(Error::config(format!(
                "geometric checkpoints need n0 >= 1 and ratio > 1 (got {n0}, {ratio})"
            )));
        }
        let mut out = Vec::new();
        let mut x = n0 as f64;
        while x.ceil() < horizon as f64 {
            let n = x.ceil() as u64;
            if out.last() != Some(&n) {
                out.push(n);
            }
            x *= ratio;
        }
        out.push(horizon);
        validate(&out, horizon)
    }
}

/// One sampled path, recorded at checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub horizon: u64,
    /// `(n, S_n)` with strictly increasing `n`.
    pub checkpoints: Vec<(u64, u64)>,
    pub seed: u64,
}

impl Trajectory {
    /// `S_n` if `n` is a checkpoint.
    pub fn value_at(&self, n: u64) -> Option<u64> {
        self.checkpoints
            .binary_search_by_key(&n, |&(k, _)| k)
            .ok()
            .map(|i| self.checkpoints[i].1)
    }

    /// True when every `n` in `1..=horizon` is recorded.
    pub fn is_dense(&self) -> bool {
        self.checkpoints.len() as u64 == self.horizon
            && self.checkpoints.first().is_none_or(|c| c.0 == 1)
            && self.checkpoints.last().is_none_or(|c| c.0 == self.horizon)
    }

    pub fn final_value(&self) -> Option<(u64, u64)> {
        self.checkpoints.last().copied()
    }

    /// Feeds the recorded checkpoints to `obs`.
    pub fn replay<O: PathObserver + ?Sized>(&self, obs: &mut O) {
        for &(n, s) in &self.checkpoints {
            obs.observe(n, s);
        }
    }

    /// Builds a trajectory from explicit values, checking the path invariants.
    pub fn from_checkpoints(
        params: ModelParams,
        horizon: u64,
        checkpoints: Vec<(u64, u64)>,
        seed: u64,
    ) -> Result<Self> {
        let mut prev = (0u64, 0u64);
        for &(n, s) in &checkpoints {
            if n <= prev.0 || n > horizon || s < prev.1 || s - prev.1 > n - prev.0 {
                return Err(Error::config(format!(
                    "invalid checkpoint ({n}, {s}) after ({}, {})",
                    prev.0, prev.1
                )));
            }
            prev = (n, s);
        }
        Ok(Trajectory {
            params,
            horizon,
            checkpoints,
            seed,
        })
    }
}

/// Samples a trajectory. Identical arguments give an identical trajectory.
pub fn simulate_path(params: &ModelParams, horizon: u64, checkpoints: &[u64], seed: u64) -> Result<Trajectory> {
    let cps = checkpoints::validate(checkpoints, horizon)?;
    let mut recorded = Vec::with_capacity(cps.len());
    let mut next = 0usize;
    simulate_observed(params, horizon, seed, &mut |n: u64, s: u64| {
        if next < cps.len() && cps[next] == n {
            recorded.push((n, s));
            next += 1;
        }
    });
    Ok(Trajectory {
        params: *params,
        horizon,
        checkpoints: recorded,
        seed,
    })
}

/// Samples a trajectory with every `n` recorded.
pub fn simulate_dense(params: &ModelParams, horizon: u64, seed: u64) -> Trajectory {
    let mut recorded = Vec::with_capacity(horizon as usize);
    simulate_observed(params, horizon, seed, &mut |n: u64, s: u64| recorded.push((n, s)));
    Trajectory {
        params: *params,
        horizon,
        checkpoints: recorded,
        seed,
    }
}

/// Default cap on `n` for the quadratic-cost exact law.
pub const DEFAULT_PMF_CAP: u64 = 20_000;

/// `probs[k] = P(S_n = k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactPmf {
    pub n: u64,
    pub probs: Vec<f64>,
}

impl ExactPmf {
    pub fn total(&self) -> f64 {
        self.probs
            .iter()
            .copied()
            .collect::<crate::stats::NeumaierSum>()
            .value()
    }

    /// `Σ_k f(k) P(S_n = k)` with compensated summation.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, &pk)| pk * f(k as f64))
            .collect::<crate::stats::NeumaierSum>()
            .value()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|k| k)
    }

    pub fn second_moment(&self) -> f64 {
        self.expect(|k| k * k)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|k| (k - m) * (k - m))
    }

    /// Number of strict local maxima of the pmf (plateaus count once).
    ///
    /// Exploratory bimodality indicator; entries below `floor` are ignored.
    pub fn local_maxima(&self, floor: f64) -> usize {
        let p = &self.probs;
        let mut count = 0;
        let mut i = 0;
        while i < p.len() {
            let mut j = i;
            while j + 1 < p.len() && p[j + 1] == p[i] {
                j += 1;
            }
            let left_lower = i == 0 || p[i - 1] < p[i];
            let right_lower = j + 1 == p.len() || p[j + 1] < p[j];
            if left_lower && right_lower && p[i] > floor {
                count += 1;
            }
            i = j + 1;
        }
        count
    }
}

/// Forward dynamic programming over the Markov chain `(n, S_n)`.
///
/// Holds one row `P(S_n = ·)`; `advance` updates it in place from the top
/// index down, so memory stays `O(n)`.
#[derive(Debug, Clone)]
pub struct ExactLaw {
    params: ModelParams,
    n: u64,
    row: Vec<f64>,
}

impl ExactLaw {
    /// The law of `S_1`, i.e. `Bernoulli(α)`.
    pub fn new(params: &ModelParams) -> Self {
        ExactLaw {
            params: *params,
            n: 1,
            row: vec![1.0 - params.alpha, params.alpha],
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.row
    }

    /// Moves from the law of `S_n` to that of `S_{n+1}`.
    pub fn advance(&mut self) {
        let omega = self.params.omega();
        let theta = self.params.theta;
        let inv_n = 1.0 / self.n as f64;
        self.row.push(0.0);
        for k in (0..self.row.len() - 1).rev() {
            let q = mixed_probability(omega, theta, k as f64, inv_n);
            let moved = self.row[k] * q;
            self.row[k + 1] += moved;
            self.row[k] -= moved;
        }
        self.n += 1;
    }

    pub fn to_pmf(&self) -> ExactPmf {
        ExactPmf {
            n: self.n,
            probs: self.row.clone(),
        }
    }
}

/// Exact law of `S_n`, refusing `n` above [`DEFAULT_PMF_CAP`].
pub fn exact_pmf(params: &ModelParams, n: u64) -> Result<ExactPmf> {
    exact_pmf_capped(params, n, DEFAULT_PMF_CAP)
}

pub fn exact_pmf_capped(params: &ModelParams, n: u64, cap: u64) -> Result<ExactPmf> {
    if n == 0 {
        return Err(Error::config("exact law needs n >= 1"));
    }
    if n > cap {
        return Err(Error::ResourceLimit(format!(
            "exact law for n = {n} exceeds the cap of {cap} (quadratic cost)"
        )));
    }
    let mut law = ExactLaw::new(params);
    while law.n() < n {
        law.advance();
    }
    Ok(law.to_pmf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(theta: f64, p: f64, alpha: f64) -> ModelParams {
        ModelParams::new(theta, p, alpha).unwrap()
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        assert!(ModelParams::new(1.1, 0.5, 0.5).is_err());
        assert!(ModelParams::new(0.5, -0.1, 0.5).is_err());
        assert!(ModelParams::new(0.5, 0.5, f64::NAN).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn deserialization_validates() {
        let ok: ModelParams = serde_json::from_str(r#"{"theta":0.25,"p":0.3,"alpha":0.3}"#).unwrap();
        assert_eq!(ok, params(0.25, 0.3, 0.3));
        assert!(serde_json::from_str::<ModelParams>(r#"{"theta":2,"p":0.3,"alpha":0.3}"#).is_err());
    }

    #[test]
    fn omega_is_derived() {
        let m = params(0.25, 0.4, 0.1);
        assert!((m.omega() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn success_probability_examples() {
        let st = |n, s| ProcessState::new(n, s).unwrap();
        assert_eq!(success_probability(&params(0.5, 0.5, 0.5), st(1, 1)), 0.75);
        for (n, s) in [(1, 0), (7, 3), (100, 100)] {
            assert!((success_probability(&params(0.0, 0.3, 0.9), st(n, s)) - 0.3).abs() < 1e-15);
        }
        assert!((success_probability(&params(1.0, 0.9, 0.5), st(10, 6)) - 0.6).abs() < 1e-15);
        assert_eq!(success_probability(&params(0.4, 0.2, 0.8), ProcessState::START), 0.8);
    }

    #[test]
    fn state_rejects_more_successes_than_draws() {
        assert!(ProcessState::new(3, 4).is_err());
    }

    #[test]
    fn step_examples() {
        let certain = params(0.3, 0.2, 1.0);
        let top = 1.0 - f64::EPSILON;
        assert_eq!(step(&certain, ProcessState::START, top).s(), 1);

        let absorbing = params(1.0, 0.1, 1.0);
        for n in 1..200 {
            let st = ProcessState::new(n, n).unwrap();
            assert_eq!(step(&absorbing, st, top).s(), n + 1, "n = {n}");
        }

        let half = params(0.5, 0.5, 0.5);
        let next = step(&half, ProcessState::new(1, 1).unwrap(), 0.8);
        assert_eq!((next.n(), next.s()), (2, 1));
        let next = step(&half, ProcessState::new(1, 1).unwrap(), 0.7);
        assert_eq!((next.n(), next.s()), (2, 2));
    }

    #[test]
    fn one_step_paths_are_deterministic_at_extreme_alpha() {
        for seed in 0..50 {
            let t0 = simulate_path(&params(0.4, 0.5, 0.0), 1, &[1], seed).unwrap();
            assert_eq!(t0.checkpoints, vec![(1, 0)]);
            let t1 = simulate_path(&params(0.4, 0.5, 1.0), 1, &[1], seed).unwrap();
            assert_eq!(t1.checkpoints, vec![(1, 1)]);
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let m = params(0.25, 0.3, 0.3);
        let cps = checkpoints::geometric(10, 1.2, 1000).unwrap();
        let a = simulate_path(&m, 1000, &cps, 99).unwrap();
        let b = simulate_path(&m, 1000, &cps, 99).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&m, 1000, &cps, 100).unwrap();
        assert_ne!(a.checkpoints, c.checkpoints);
    }

    #[test]
    fn checkpoint_out_of_range_is_a_config_error() {
        let m = params(0.25, 0.3, 0.3);
        assert!(matches!(simulate_path(&m, 10, &[0], 1), Err(Error::Config(_))));
        assert!(matches!(simulate_path(&m, 10, &[11], 1), Err(Error::Config(_))));
    }

    #[test]
    fn geometric_checkpoints() {
        let cps = checkpoints::geometric(10, 1.2, 100).unwrap();
        assert_eq!(cps.first(), Some(&10));
        assert_eq!(cps.last(), Some(&100));
        assert!(cps.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(checkpoints::geometric(10, 2.0, 50).unwrap(), vec![10, 20, 40, 50]);
        assert!(checkpoints::geometric(10, 1.0, 50).is_err());
    }

    #[test]
    fn dense_path_matches_sparse_path() {
        let m = params(0.6, 0.4, 0.7);
        let dense = simulate_dense(&m, 500, 5);
        assert!(dense.is_dense());
        let sparse = simulate_path(&m, 500, &[1, 17, 250, 500], 5).unwrap();
        for &(n, s) in &sparse.checkpoints {
            assert_eq!(dense.value_at(n), Some(s));
        }
        assert!(!sparse.is_dense());
    }

    #[test]
    fn exact_pmf_examples() {
        let one = exact_pmf(&params(0.3, 0.2, 0.7), 1).unwrap();
        assert!((one.probs[0] - 0.3).abs() < 1e-15 && (one.probs[1] - 0.7).abs() < 1e-15);

        // Four paths: 00 (.5·.75), 01 (.5·.25), 10 (.5·.25), 11 (.5·.75).
        let two = exact_pmf(&params(0.5, 0.5, 0.5), 2).unwrap();
        let want = [0.375, 0.25, 0.375];
        for (got, want) in two.probs.iter().zip(want) {
            assert!((got - want).abs() < 1e-15);
        }

        let (a, p) = (0.9, 0.35);
        let ind = exact_pmf(&params(0.0, p, a), 2).unwrap();
        let want = [(1.0 - a) * (1.0 - p), a * (1.0 - p) + (1.0 - a) * p, a * p];
        for (got, want) in ind.probs.iter().zip(want) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_pmf_respects_cap() {
        let m = params(0.5, 0.5, 0.5);
        assert!(matches!(exact_pmf_capped(&m, 11, 10), Err(Error::ResourceLimit(_))));
        assert!(exact_pmf(&m, 0).is_err());
    }

    #[test]
    fn independent_case_is_binomial() {
        let p = 0.37;
        let n = 400u64;
        let pmf = exact_pmf(&params(0.0, p, p), n).unwrap();
        // Binomial pmf by the ratio recurrence from P(0) = (1 − p)^n.
        let mut b = (1.0 - p).powi(n as i32);
        for k in 0..=n {
            assert!((pmf.probs[k as usize] - b).abs() < 1e-12, "k = {k}");
            b *= (n - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
        }
    }

    #[test]
    fn bimodality_indicator_counts_peaks() {
        let pmf = ExactPmf {
            n: 4,
            probs: vec![0.3, 0.1, 0.2, 0.1, 0.3],
        };
        assert_eq!(pmf.local_maxima(0.0), 3);
        let flat = ExactPmf {
            n: 2,
            probs: vec![0.2, 0.4, 0.4],
        };
        assert_eq!(flat.local_maxima(0.0), 1);
    }

    /// Chi-square check that the empirical frequency of a success at draw 11,
    /// given `S_10 = s`, matches `success_probability`.
    #[test]
    fn conditional_frequencies_match_success_probability() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let m = params(0.6, 0.3, 0.5);
        let mut trials = [0u64; 11];
        let mut hits = [0u64; 11];
        for seed in 0..60_000u64 {
            let t = simulate_path(&m, 11, &[10, 11], seed).unwrap();
            let s10 = t.checkpoints[0].1;
            trials[s10 as usize] += 1;
            hits[s10 as usize] += t.checkpoints[1].1 - s10;
        }
        let mut chi2 = 0.0;
        let mut dof = 0;
        for s in 0..=10u64 {
            let nt = trials[s as usize] as f64;
            if nt < 50.0 {
                continue;
            }
            let q = success_probability(&m, ProcessState::new(10, s).unwrap());
            let expected = nt * q;
            chi2 += (hits[s as usize] as f64 - expected).powi(2) / (expected * (1.0 - q));
            dof += 1;
        }
        let crit = ChiSquared::new(dof as f64).unwrap().inverse_cdf(0.999);
        assert!(chi2 < crit, "chi2 = {chi2}, dof = {dof}, crit = {crit}");
    }

    proptest! {
        #[test]
        fn pmf_is_a_distribution(theta in 0.0f64..=1.0, p in 0.0f64..=1.0, alpha in 0.0f64..=1.0, n in 1u64..300) {
            let pmf = exact_pmf(&params(theta, p, alpha), n).unwrap();
            prop_assert_eq!(pmf.probs.len() as u64, n + 1);
            prop_assert!(pmf.probs.iter().all(|&x| x >= 0.0));
            prop_assert!((pmf.total() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn paths_are_monotone(theta in 0.0f64..=1.0, p in 0.0f64..=1.0, alpha in 0.0f64..=1.0, seed in any::<u64>()) {
            let t = simulate_dense(&params(theta, p, alpha), 300, seed);
            let mut prev = (0u64, 0u64);
            for &(n, s) in &t.checkpoints {
                prop_assert_eq!(n, prev.0 + 1);
                prop_assert!(s >= prev.1 && s - prev.1 <= 1 && s <= n);
                prev = (n, s);
            }
        }
    }
}
