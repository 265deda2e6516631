//! Finite-sample checks of the limit theorems.
//!
//! Each check produces a [`VerificationReport`]: named statistics, named
//! limits over those statistics, and pass flags that are recomputed from the
//! two and nothing else. Check kinds separate exact oracle comparisons,
//! statistical checks with fixed tolerances, and soft corridor checks that
//! are reported but never gate.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::process::ModelParams;
use crate::rng;

pub mod gaussian;
pub mod io;
pub mod pathwise;
pub mod replicate;
pub mod suite;
pub mod superdiffusive;

pub use gaussian::{
    clt_limit, clt_standardize, covariance_limit, gaussianity_test, GaussianLimitSpec, GaussianTolerances,
};
pub use suite::{run_suite, SuiteConfig};

/// Crate version recorded in every report.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `θ < 1/2`: variance linear in `n`.
    Diffusive,
    /// `θ = 1/2`: variance of order `n log n`.
    Critical,
    /// `1/2 < θ < 1`: `S_n/n − p` of exact order `n^{θ−1}`.
    Superdiffusive,
}

impl Regime {
    /// The regime of `θ`. `θ = 1` lies outside every limit theorem and is refused.
    pub fn of(theta: f64) -> Result<Regime> {
        if !(0.0..1.0).contains(&theta) {
            return Err(Error::domain(format!(
                "limit theorems need theta in [0, 1) (theta = {theta})"
            )));
        }
        Ok(if theta < 0.5 {
            Regime::Diffusive
        } else if theta == 0.5 {
            Regime::Critical
        } else {
            Regime::Superdiffusive
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Diffusive => "diffusive",
            Regime::Critical => "critical",
            Regime::Superdiffusive => "superdiffusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    /// Deterministic comparison against an exact oracle.
    Exact,
    /// Monte Carlo comparison with fixed tolerances.
    Statistical,
    /// Corridor or trend diagnostics; reported, never gating.
    Soft,
}

/// An `f64` that serializes non-finite values as strings, so JSON stays valid.
#[derive(Debug, Clone, Copy)]
pub struct Value(pub f64);

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits() || (self.0.is_nan() && other.0.is_nan())
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let x = self.0;
        if x.is_finite() {
            s.serialize_f64(x)
        } else if x.is_nan() {
            s.serialize_str("NaN")
        } else if x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Value(x)),
            Raw::Text(t) => t
                .parse::<f64>()
                .map(Value)
                .map_err(|_| serde::de::Error::custom(format!("not a number: {t}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Op {
    /// NaN never satisfies a limit.
    pub fn holds(self, x: f64, bound: f64) -> bool {
        match self {
            Op::Lt => x < bound,
            Op::Le => x <= bound,
            Op::Gt => x > bound,
            Op::Ge => x >= bound,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Limit {
    pub statistic: String,
    pub op: Op,
    pub bound: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub master_seed: u64,
    /// Seed of this check's own stream family.
    pub check_seed: u64,
    pub n: u64,
    pub replicates: u64,
    pub generator: String,
    pub seed_mixer: String,
    pub tool_version: String,
}

impl RunMetadata {
    pub fn new(master_seed: u64, check: &str, n: u64, replicates: u64) -> Self {
        RunMetadata {
            master_seed,
            check_seed: rng::sub_seed(master_seed, check),
            n,
            replicates,
            generator: rng::GENERATOR.to_string(),
            seed_mixer: rng::SEED_MIXER.to_string(),
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

/// User overrides of limit bounds, keyed `"<check>.<limit>"`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tolerances(pub BTreeMap<String, f64>);

impl Tolerances {
    pub fn get(&self, check: &str, limit: &str) -> Option<f64> {
        self.0.get(&format!("{check}.{limit}")).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub kind: CheckKind,
    pub regime: Option<Regime>,
    pub params: ModelParams,
    pub statistics: BTreeMap<String, Value>,
    pub limits: BTreeMap<String, Limit>,
    pub passed: BTreeMap<String, bool>,
    pub pass: bool,
    pub notes: Vec<String>,
    pub metadata: RunMetadata,
}

impl VerificationReport {
    pub fn new(check: &str, kind: CheckKind, params: &ModelParams, metadata: RunMetadata) -> Self {
        VerificationReport {
            check: check.to_string(),
            kind,
            regime: Regime::of(params.theta()).ok(),
            params: *params,
            statistics: BTreeMap::new(),
            limits: BTreeMap::new(),
            passed: BTreeMap::new(),
            pass: true,
            notes: Vec::new(),
            metadata,
        }
    }

    pub fn stat(&mut self, name: &str, value: f64) -> &mut Self {
        self.statistics.insert(name.to_string(), Value(value));
        self
    }

    pub fn statistic(&self, name: &str) -> Option<f64> {
        self.statistics.get(name).map(|v| v.0)
    }

    /// Adds limit `name` on `statistic`; a user override replaces `default`.
    pub fn limit(&mut self, tol: &Tolerances, name: &str, statistic: &str, op: Op, default: f64) -> &mut Self {
        let bound = tol.get(&self.check, name).unwrap_or(default);
        self.limits.insert(
            name.to_string(),
            Limit {
                statistic: statistic.to_string(),
                op,
                bound: Value(bound),
            },
        );
        self
    }

    pub fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.notes.push(text.into());
        self
    }

    /// Pass flags implied by the statistics and limits.
    pub fn evaluate(&self) -> (BTreeMap<String, bool>, bool) {
        let passed: BTreeMap<String, bool> = self
            .limits
            .iter()
            .map(|(name, lim)| {
                let ok = self
                    .statistic(&lim.statistic)
                    .is_some_and(|x| lim.op.holds(x, lim.bound.0));
                (name.clone(), ok)
            })
            .collect();
        let all = passed.values().all(|&b| b);
        (passed, all)
    }

    /// Recomputes the pass flags; call after the last statistic or limit.
    pub fn finish(mut self) -> Self {
        let (passed, all) = self.evaluate();
        self.passed = passed;
        self.pass = all;
        self
    }

    /// Whether a failure of this report should fail a run.
    pub fn gates(&self) -> bool {
        self.kind != CheckKind::Soft
    }

    /// One line per limit: `PASS|FAIL check.limit: statistic = value op bound`.
    pub fn summary_lines(&self) -> Vec<String> {
        let mut lines = Vec::new();
        for (name, lim) in &self.limits {
            let value = self.statistic(&lim.statistic).unwrap_or(f64::NAN);
            let ok = self.passed.get(name).copied().unwrap_or(false);
            lines.push(format!(
                "{} [{}] {}.{}: {} = {} {} {}",
                if ok { "PASS" } else { "FAIL" },
                kind_label(self.kind),
                self.check,
                name,
                lim.statistic,
                short(value),
                lim.op.symbol(),
                short(lim.bound.0)
            ));
        }
        lines
    }
}

/// Six significant digits, scientific notation for small magnitudes.
fn short(x: f64) -> String {
    if x != 0.0 && x.is_finite() && x.abs() < 1e-3 {
        format!("{x:.3e}")
    } else {
        format!("{x:.6}")
    }
}

fn kind_label(kind: CheckKind) -> &'static str {
    match kind {
        CheckKind::Exact => "exact",
        CheckKind::Statistical => "statistical",
        CheckKind::Soft => "soft",
    }
}

/// `|x/y − 1|`.
pub(crate) fn rel_error(x: f64, y: f64) -> f64 {
    (x / y - 1.0).abs()
}
