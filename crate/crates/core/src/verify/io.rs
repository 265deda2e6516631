//! Report serialization: pretty JSON per report and a flat CSV for plotting.
//!
//! The flat CSV has one row per statistic, limit or note. Every row repeats
//! the parameters and run metadata, so rows can be filtered freely and the
//! reports rebuilt from them.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::ModelParams;

use super::{CheckKind, Limit, Op, Regime, RunMetadata, Value, VerificationReport};

pub fn to_json(report: &VerificationReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<VerificationReport> {
    let r: VerificationReport = serde_json::from_str(text)?;
    check_flags(&r)?;
    Ok(r)
}

/// Rejects reports whose stored pass flags disagree with their statistics and limits.
fn check_flags(r: &VerificationReport) -> Result<()> {
    let (passed, all) = r.evaluate();
    if passed != r.passed || all != r.pass {
        return Err(Error::config(format!(
            "report `{}` has pass flags inconsistent with its limits",
            r.check
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RowKind {
    Statistic,
    Limit,
    Note,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Row {
    check: String,
    kind: CheckKind,
    regime: Option<Regime>,
    theta: f64,
    p: f64,
    alpha: f64,
    master_seed: u64,
    check_seed: u64,
    n: u64,
    replicates: u64,
    generator: String,
    seed_mixer: String,
    tool_version: String,
    record: RowKind,
    name: String,
    value: Option<f64>,
    statistic: Option<String>,
    op: Option<Op>,
    bound: Option<f64>,
    pass: Option<bool>,
    note: Option<String>,
}

pub fn write_csv<W: Write>(reports: &[VerificationReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        let base = Row {
            check: r.check.clone(),
            kind: r.kind,
            regime: r.regime,
            theta: r.params.theta(),
            p: r.params.p(),
            alpha: r.params.alpha(),
            master_seed: r.metadata.master_seed,
            check_seed: r.metadata.check_seed,
            n: r.metadata.n,
            replicates: r.metadata.replicates,
            generator: r.metadata.generator.clone(),
            seed_mixer: r.metadata.seed_mixer.clone(),
            tool_version: r.metadata.tool_version.clone(),
            record: RowKind::Statistic,
            name: String::new(),
            value: None,
            statistic: None,
            op: None,
            bound: None,
            pass: None,
            note: None,
        };
        for (name, v) in &r.statistics {
            w.serialize(Row {
                name: name.clone(),
                value: Some(v.0),
                ..base.clone()
            })?;
        }
        for (name, lim) in &r.limits {
            w.serialize(Row {
                record: RowKind::Limit,
                name: name.clone(),
                statistic: Some(lim.statistic.clone()),
                op: Some(lim.op),
                bound: Some(lim.bound.0),
                pass: r.passed.get(name).copied(),
                ..base.clone()
            })?;
        }
        for (i, text) in r.notes.iter().enumerate() {
            w.serialize(Row {
                record: RowKind::Note,
                name: i.to_string(),
                note: Some(text.clone()),
                ..base.clone()
            })?;
        }
        if r.statistics.is_empty() && r.limits.is_empty() && r.notes.is_empty() {
            w.serialize(Row {
                record: RowKind::Note,
                name: "empty".into(),
                ..base
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds reports from [`write_csv`] output, in first-appearance order.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<VerificationReport>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out: Vec<VerificationReport> = Vec::new();
    let mut index: BTreeMap<(String, u64), usize> = BTreeMap::new();
    for row in rd.deserialize::<Row>() {
        let row = row?;
        let params = ModelParams::new(row.theta, row.p, row.alpha)?;
        let key = (row.check.clone(), row.check_seed);
        let i = *index.entry(key).or_insert_with(|| {
            out.push(VerificationReport {
                check: row.check.clone(),
                kind: row.kind,
                regime: row.regime,
                params,
                statistics: BTreeMap::new(),
                limits: BTreeMap::new(),
                passed: BTreeMap::new(),
                pass: true,
                notes: Vec::new(),
                metadata: RunMetadata {
                    master_seed: row.master_seed,
                    check_seed: row.check_seed,
                    n: row.n,
                    replicates: row.replicates,
                    generator: row.generator.clone(),
                    seed_mixer: row.seed_mixer.clone(),
                    tool_version: row.tool_version.clone(),
                },
            });
            out.len() - 1
        });
        let r = &mut out[i];
        let missing = |what: &str| Error::config(format!("CSV row `{}` lacks {what}", row.name));
        match row.record {
            RowKind::Statistic => {
                r.statistics
                    .insert(row.name.clone(), Value(row.value.ok_or_else(|| missing("value"))?));
            }
            RowKind::Limit => {
                r.limits.insert(
                    row.name.clone(),
                    Limit {
                        statistic: row.statistic.clone().ok_or_else(|| missing("statistic"))?,
                        op: row.op.ok_or_else(|| missing("op"))?,
                        bound: Value(row.bound.ok_or_else(|| missing("bound"))?),
                    },
                );
            }
            RowKind::Note => {
                if let Some(text) = row.note {
                    r.notes.push(text);
                }
            }
        }
    }
    Ok(out.into_iter().map(VerificationReport::finish).collect())
}
