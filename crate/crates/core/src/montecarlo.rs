//! Replicate engine.
//!
//! Replicate `i` of a plan always draws from `rng::derive_seed(master_seed, i)`
//! and reproduces `process::simulate_path` with that seed bit for bit.
//! Replicates are cut into fixed-size shards; shards run on the rayon pool
//! and are merged in shard order, so output depends on the plan alone and
//! never on the number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{self, checkpoints, mixed_probability, ModelParams, Trajectory};
use crate::rng;
use crate::stats::Moments;

/// Default memory cap for retained per-replicate data (2 GiB).
pub const DEFAULT_MEMORY_CAP: u64 = 2 << 30;

/// Default number of replicates per shard.
pub const DEFAULT_SHARD_SIZE: u64 = 4096;

const LANES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Retain {
    SummariesOnly,
    PerReplicateValues,
    FullPaths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub params: ModelParams,
    pub horizon: u64,
    pub checkpoints: Vec<u64>,
    pub replicates: u64,
    pub master_seed: u64,
    pub retain: Retain,
    pub shard_size: u64,
    pub memory_cap: u64,
}

impl ExperimentPlan {
    /// A plan with default shard size and memory cap. Checkpoints are sorted
    /// and deduplicated.
    pub fn new(
        params: ModelParams,
        horizon: u64,
        checkpoints: &[u64],
        replicates: u64,
        master_seed: u64,
        retain: Retain,
    ) -> Result<Self> {
        let plan = ExperimentPlan {
            params,
            horizon,
            checkpoints: checkpoints::validate(checkpoints, horizon)?,
            replicates,
            master_seed,
            retain,
            shard_size: DEFAULT_SHARD_SIZE,
            memory_cap: DEFAULT_MEMORY_CAP,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn with_shard_size(mut self, shard_size: u64) -> Result<Self> {
        self.shard_size = shard_size;
        self.validate()?;
        Ok(self)
    }

    pub fn with_memory_cap(mut self, cap: u64) -> Result<Self> {
        self.memory_cap = cap;
        self.validate()?;
        Ok(self)
    }

    /// Bytes of per-replicate data the plan would keep.
    pub fn retained_bytes(&self) -> u64 {
        let r = self.replicates;
        match self.retain {
            Retain::SummariesOnly => 0,
            Retain::PerReplicateValues => (self.checkpoints.len() as u64).saturating_mul(r).saturating_mul(8),
            Retain::FullPaths => self.horizon.saturating_mul(r).saturating_mul(16),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::config("replicates must be at least 1"));
        }
        if self.shard_size == 0 {
            return Err(Error::config("shard size must be at least 1"));
        }
        if self.checkpoints.is_empty() {
            return Err(Error::config("at least one checkpoint is required"));
        }
        if checkpoints::validate(&self.checkpoints, self.horizon)? != self.checkpoints {
            return Err(Error::config("checkpoints must be strictly increasing"));
        }
        let bytes = self.retained_bytes();
        if bytes > self.memory_cap {
            return Err(Error::PlanRejected(format!(
                "{:?} retention needs {bytes} bytes, above the cap of {} bytes",
                self.retain, self.memory_cap
            )));
        }
        Ok(())
    }
}

/// Streaming summaries of `S_n` at each checkpoint, plus retained data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub params: ModelParams,
    pub horizon: u64,
    pub checkpoints: Vec<u64>,
    pub master_seed: u64,
    pub replicates: u64,
    pub moments: Vec<Moments>,
    /// `values[j][i]` = `S_{checkpoints[j]}` of replicate `i`.
    pub values: Option<Vec<Vec<u64>>>,
    pub paths: Option<Vec<Trajectory>>,
}

impl ReplicateSummary {
    /// A summary of zero replicates, the identity of [`merge`].
    pub fn empty(plan: &ExperimentPlan) -> Self {
        ReplicateSummary {
            params: plan.params,
            horizon: plan.horizon,
            checkpoints: plan.checkpoints.clone(),
            master_seed: plan.master_seed,
            replicates: 0,
            moments: vec![Moments::new(); plan.checkpoints.len()],
            values: match plan.retain {
                Retain::SummariesOnly => None,
                _ => Some(vec![Vec::new(); plan.checkpoints.len()]),
            },
            paths: match plan.retain {
                Retain::FullPaths => Some(Vec::new()),
                _ => None,
            },
        }
    }

    /// Appends a compatible shard without copying what is already held.
    fn absorb(&mut self, part: ReplicateSummary) {
        for (m, other) in self.moments.iter_mut().zip(&part.moments) {
            *m = m.merge(other);
        }
        if let (Some(mine), Some(theirs)) = (self.values.as_mut(), part.values) {
            for (u, v) in mine.iter_mut().zip(theirs) {
                u.extend(v);
            }
        }
        if let (Some(mine), Some(theirs)) = (self.paths.as_mut(), part.paths) {
            mine.extend(theirs);
        }
        self.replicates += part.replicates;
    }

    pub fn checkpoint_index(&self, n: u64) -> Option<usize> {
        self.checkpoints.binary_search(&n).ok()
    }

    pub fn moments_at(&self, n: u64) -> Option<&Moments> {
        self.checkpoint_index(n).map(|j| &self.moments[j])
    }

    pub fn values_at(&self, n: u64) -> Option<&[u64]> {
        let j = self.checkpoint_index(n)?;
        self.values.as_ref().map(|v| v[j].as_slice())
    }
}

/// Combines summaries of disjoint replicate sets; retained values of `b`
/// follow those of `a`.
pub fn merge(a: &ReplicateSummary, b: &ReplicateSummary) -> Result<ReplicateSummary> {
    if a.params != b.params || a.horizon != b.horizon || a.checkpoints != b.checkpoints {
        return Err(Error::Mismatch(
            "summaries differ in parameters, horizon or checkpoints".into(),
        ));
    }
    if a.values.is_some() != b.values.is_some() || a.paths.is_some() != b.paths.is_some() {
        return Err(Error::Mismatch("summaries differ in retention mode".into()));
    }
    let moments = a.moments.iter().zip(&b.moments).map(|(x, y)| x.merge(y)).collect();
    let values = match (&a.values, &b.values) {
        (Some(x), Some(y)) => Some(
            x.iter()
                .zip(y)
                .map(|(u, v)| u.iter().chain(v).copied().collect())
                .collect(),
        ),
        _ => None,
    };
    let paths = match (&a.paths, &b.paths) {
        (Some(x), Some(y)) => Some(x.iter().chain(y).cloned().collect()),
        _ => None,
    };
    Ok(ReplicateSummary {
        params: a.params,
        horizon: a.horizon,
        checkpoints: a.checkpoints.clone(),
        master_seed: a.master_seed,
        replicates: a.replicates + b.replicates,
        moments,
        values,
        paths,
    })
}

/// Runs every replicate of `plan`.
pub fn run(plan: &ExperimentPlan) -> Result<ReplicateSummary> {
    plan.validate()?;
    let shards: Vec<(u64, u64)> = (0..plan.replicates)
        .step_by(plan.shard_size as usize)
        .map(|start| (start, (start + plan.shard_size).min(plan.replicates)))
        .collect();
    let parts: Vec<ReplicateSummary> = shards
        .par_iter()
        .map(|&(start, end)| run_shard(plan, start, end))
        .collect();
    let mut total = ReplicateSummary::empty(plan);
    for part in parts {
        total.absorb(part);
    }
    Ok(total)
}

fn run_shard(plan: &ExperimentPlan, start: u64, end: u64) -> ReplicateSummary {
    let mut out = ReplicateSummary::empty(plan);
    out.replicates = end - start;
    let ncp = plan.checkpoints.len();
    if plan.retain == Retain::FullPaths {
        let paths = out.paths.as_mut().expect("full-path retention");
        let values = out.values.as_mut().expect("full-path retention");
        for i in start..end {
            let path = process::simulate_dense(&plan.params, plan.horizon, rng::derive_seed(plan.master_seed, i));
            for (j, &n) in plan.checkpoints.iter().enumerate() {
                let s = path.checkpoints[(n - 1) as usize].1;
                out.moments[j].push(s as f64);
                values[j].push(s);
            }
            paths.push(path);
        }
        return out;
    }
    let mut buf = vec![[0u64; LANES]; ncp];
    let mut i = start;
    while i < end {
        let live = ((end - i) as usize).min(LANES);
        let mut seeds = [0u64; LANES];
        for (l, seed) in seeds.iter_mut().enumerate() {
            *seed = rng::derive_seed(plan.master_seed, i + l as u64);
        }
        run_lanes(&plan.params, plan.horizon, &plan.checkpoints, &seeds, &mut buf);
        for (j, row) in buf.iter().enumerate() {
            for &s in &row[..live] {
                out.moments[j].push(s as f64);
            }
            if let Some(values) = out.values.as_mut() {
                values[j].extend_from_slice(&row[..live]);
            }
        }
        i += live as u64;
    }
    out
}

/// xoshiro256++ states of [`LANES`] streams, stored component-wise.
struct LaneRng {
    s: [[u64; LANES]; 4],
}

impl LaneRng {
    /// Same state expansion as `Xoshiro256PlusPlus::seed_from_u64`.
    fn new(seeds: &[u64; LANES]) -> Self {
        use rand_core::{RngCore, SeedableRng};
        let mut s = [[0u64; LANES]; 4];
        for (l, &seed) in seeds.iter().enumerate() {
            let mut sm = rand_xoshiro::SplitMix64::seed_from_u64(seed);
            for word in s.iter_mut() {
                word[l] = sm.next_u64();
            }
        }
        LaneRng { s }
    }

    #[inline(always)]
    fn next_units(&mut self) -> [f64; LANES] {
        let [s0, s1, s2, s3] = &mut self.s;
        let mut out = [0.0; LANES];
        for l in 0..LANES {
            let r = s0[l].wrapping_add(s3[l]).rotate_left(23).wrapping_add(s0[l]);
            let t = s1[l] << 17;
            s2[l] ^= s0[l];
            s3[l] ^= s1[l];
            s1[l] ^= s2[l];
            s0[l] ^= s3[l];
            s2[l] ^= t;
            s3[l] = s3[l].rotate_left(45);
            out[l] = rng::unit_f64(r);
        }
        out
    }
}

/// Advances [`LANES`] independent paths in lockstep and records `S_n` at the
/// checkpoints into `out[j][lane]`.
fn run_lanes(params: &ModelParams, horizon: u64, cps: &[u64], seeds: &[u64; LANES], out: &mut [[u64; LANES]]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the required CPU feature was detected at runtime.
            unsafe { run_lanes_avx512(params, horizon, cps, seeds, out) };
            return;
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the required CPU feature was detected at runtime.
            unsafe { run_lanes_avx2(params, horizon, cps, seeds, out) };
            return;
        }
    }
    run_lanes_generic(params, horizon, cps, seeds, out);
}

/// The kernel recompiled for wider vector units. Rust never contracts to
/// FMA, so every variant produces bit-identical paths.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn run_lanes_avx2(
    params: &ModelParams,
    horizon: u64,
    cps: &[u64],
    seeds: &[u64; LANES],
    out: &mut [[u64; LANES]],
) {
    run_lanes_generic(params, horizon, cps, seeds, out);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn run_lanes_avx512(
    params: &ModelParams,
    horizon: u64,
    cps: &[u64],
    seeds: &[u64; LANES],
    out: &mut [[u64; LANES]],
) {
    run_lanes_generic(params, horizon, cps, seeds, out);
}

#[inline(always)]
fn run_lanes_generic(params: &ModelParams, horizon: u64, cps: &[u64], seeds: &[u64; LANES], out: &mut [[u64; LANES]]) {
    let omega = params.omega();
    let theta = params.theta();
    let mut rng = LaneRng::new(seeds);
    let mut s = [0.0f64; LANES];
    let u = rng.next_units();
    for l in 0..LANES {
        s[l] = if u[l] < params.alpha() { 1.0 } else { 0.0 };
    }
    let mut next_cp = 0usize;
    let mut record = |n: u64, s: &[f64; LANES], next_cp: &mut usize| {
        if *next_cp < cps.len() && cps[*next_cp] == n {
            for l in 0..LANES {
                out[*next_cp][l] = s[l] as u64;
            }
            *next_cp += 1;
        }
    };
    record(1, &s, &mut next_cp);
    for n in 1..horizon {
        let inv_n = 1.0 / n as f64;
        let u = rng.next_units();
        for l in 0..LANES {
            let q = mixed_probability(omega, theta, s[l], inv_n);
            s[l] += if u[l] < q { 1.0 } else { 0.0 };
        }
        record(n + 1, &s, &mut next_cp);
    }
}
