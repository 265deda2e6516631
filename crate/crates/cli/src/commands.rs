use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use corrbern::gamma_seq::partial_sum_ratio;
use corrbern::moments::{
    mean_mn, mean_sn, moments_l, second_moment_mn, second_moment_sn_recursive, variance_asymptotic,
};
use corrbern::montecarlo::{run, ExperimentPlan};
use corrbern::process::{exact_pmf, ModelParams};
use corrbern::rng;
use corrbern::verify::{io, run_suite, TOOL_VERSION};

use crate::config::{Config, Format};
use crate::error::{io_error, CliError};

/// Columns appended to every CSV row.
#[derive(Debug, Clone, Copy, Serialize)]
struct Provenance {
    theta: f64,
    p: f64,
    alpha: f64,
    master_seed: u64,
    tool_version: &'static str,
}

impl Provenance {
    fn new(params: &ModelParams, master_seed: u64) -> Self {
        Provenance {
            theta: params.theta(),
            p: params.p(),
            alpha: params.alpha(),
            master_seed,
            tool_version: TOOL_VERSION,
        }
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'static str,
    params: &'a ModelParams,
    master_seed: u64,
    generator: &'static str,
    seed_mixer: &'static str,
    tool_version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    plan: Option<&'a ExperimentPlan>,
    notes: Vec<String>,
}

impl<'a> Metadata<'a> {
    fn new(command: &'static str, params: &'a ModelParams, master_seed: u64) -> Self {
        Metadata {
            command,
            params,
            master_seed,
            generator: rng::GENERATOR,
            seed_mixer: rng::SEED_MIXER,
            tool_version: TOOL_VERSION,
            plan: None,
            notes: Vec::new(),
        }
    }
}

pub struct Output {
    dir: PathBuf,
    format: Format,
}

impl Output {
    pub fn new(dir: PathBuf, format: Format) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(io_error(&dir))?;
        Ok(Output { dir, format })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(io_error(&path))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(corrbern::Error::from)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// CSV columns follow the row's serde field order; nested values are not supported.
    fn write_csv<T: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let file = fs::File::create(&path).map_err(io_error(&path))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header = false;
        for row in rows {
            let Value::Object(map) = serde_json::to_value(row).map_err(corrbern::Error::from)? else {
                unreachable!("rows serialize as structs")
            };
            if !header {
                w.write_record(map.keys()).map_err(corrbern::Error::from)?;
                header = true;
            }
            w.write_record(map.values().map(cell)).map_err(corrbern::Error::from)?;
        }
        w.flush().map_err(io_error(&path))?;
        Ok(path)
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

#[derive(Serialize)]
struct SummaryRow {
    n: u64,
    mean: f64,
    var: f64,
    skew: f64,
    exkurt: f64,
    min: f64,
    max: f64,
    replicates: u64,
    #[serde(flatten)]
    provenance: Provenance,
}

#[derive(Serialize)]
struct ValueRow {
    replicate: u64,
    n: u64,
    s: u64,
    #[serde(flatten)]
    provenance: Provenance,
}

pub fn simulate(cfg: &Config, out: &Output) -> Result<(), CliError> {
    let plan = cfg.plan()?;
    let summary = run(&plan)?;
    let prov = Provenance::new(&plan.params, plan.master_seed);
    let rows: Vec<SummaryRow> = summary
        .checkpoints
        .iter()
        .zip(&summary.moments)
        .map(|(&n, m)| SummaryRow {
            n,
            mean: m.mean,
            var: m.variance(),
            skew: m.skewness(),
            exkurt: m.excess_kurtosis(),
            min: m.min,
            max: m.max,
            replicates: m.count,
            provenance: prov,
        })
        .collect();
    let mut meta = Metadata::new("simulate", &plan.params, plan.master_seed);
    meta.plan = Some(&plan);
    if out.format.csv() {
        println!("wrote {}", out.write_csv("summary.csv", &rows)?.display());
        if let Some(values) = &summary.values {
            let rows = summary.checkpoints.iter().zip(values).flat_map(|(&n, vs)| {
                vs.iter().enumerate().map(move |(i, &s)| ValueRow {
                    replicate: i as u64,
                    n,
                    s,
                    provenance: prov,
                })
            });
            println!("wrote {}", out.write_csv("values.csv", rows)?.display());
        }
        if let Some(paths) = &summary.paths {
            let rows = paths.iter().enumerate().flat_map(|(i, t)| {
                t.checkpoints.iter().map(move |&(n, s)| ValueRow {
                    replicate: i as u64,
                    n,
                    s,
                    provenance: prov,
                })
            });
            println!("wrote {}", out.write_csv("paths.csv", rows)?.display());
        }
    }
    if out.format.json() {
        println!("wrote {}", out.write_json("summary.json", &rows)?.display());
    }
    println!("wrote {}", out.write_json("metadata.json", &meta)?.display());
    Ok(())
}

#[derive(Serialize)]
struct PmfRow {
    k: u64,
    probability: f64,
    n: u64,
    #[serde(flatten)]
    provenance: Provenance,
}

pub fn pmf(cfg: &Config, out: &Output) -> Result<(), CliError> {
    let params = cfg.params()?;
    let n = cfg.experiment.horizon;
    let law = exact_pmf(&params, n)?;
    let prov = Provenance::new(&params, cfg.experiment.master_seed);
    let mean = mean_sn(&params, n);
    let second = second_moment_sn_recursive(&params, n);
    let variance = second - mean * mean;
    let maxima = law.local_maxima(1e-12);
    println!(
        "pmf n = {n}: mean {:.12} (moments {:.12}), variance {:.12} (moments {:.12}), total mass {:.15}",
        law.mean(),
        mean,
        law.variance(),
        variance,
        law.total()
    );
    println!(
        "local maxima: {maxima}{}",
        if maxima > 1 { " (multimodal)" } else { "" }
    );
    let rows: Vec<PmfRow> = law
        .probs
        .iter()
        .enumerate()
        .map(|(k, &probability)| PmfRow {
            k: k as u64,
            probability,
            n,
            provenance: prov,
        })
        .collect();
    let mut meta = Metadata::new("pmf", &params, cfg.experiment.master_seed);
    meta.notes.push(format!("local maxima of the pmf: {maxima}"));
    if out.format.csv() {
        println!("wrote {}", out.write_csv("pmf.csv", &rows)?.display());
    }
    if out.format.json() {
        println!("wrote {}", out.write_json("pmf.json", &rows)?.display());
    }
    println!("wrote {}", out.write_json("metadata.json", &meta)?.display());
    Ok(())
}

#[derive(Serialize)]
struct MomentRow {
    n: u64,
    mean_sn: f64,
    second_moment_sn: f64,
    variance_sn: f64,
    mean_mn: f64,
    second_moment_mn: f64,
    partial_sum_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    variance_asymptotic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variance_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    second_moment_l: Option<f64>,
    #[serde(flatten)]
    provenance: Provenance,
}

pub fn moments(cfg: &Config, out: &Output) -> Result<(), CliError> {
    let params = cfg.params()?;
    let prov = Provenance::new(&params, cfg.experiment.master_seed);
    let l = moments_l(&params).ok();
    let mut meta = Metadata::new("moments", &params, cfg.experiment.master_seed);
    if l.is_none() {
        meta.notes
            .push("theta <= 1/2: no limit L, columns mean_l and second_moment_l omitted".into());
    }
    if !params.is_stationary() {
        meta.notes
            .push("alpha != p: the leading-order variance is stated for alpha = p, columns omitted".into());
    }
    let rows: Vec<MomentRow> = cfg
        .checkpoints()?
        .into_iter()
        .map(|n| {
            let mean = mean_sn(&params, n);
            let second = second_moment_sn_recursive(&params, n);
            let variance = second - mean * mean;
            let asym = variance_asymptotic(&params, n).ok();
            MomentRow {
                n,
                mean_sn: mean,
                second_moment_sn: second,
                variance_sn: variance,
                mean_mn: mean_mn(&params),
                second_moment_mn: second_moment_mn(&params, n),
                partial_sum_ratio: partial_sum_ratio(params.theta(), n),
                variance_asymptotic: asym,
                variance_ratio: asym.map(|a| variance / a),
                mean_l: l.map(|l| l.mean_l),
                second_moment_l: l.map(|l| l.second_moment_l),
                provenance: prov,
            }
        })
        .collect();
    for note in &meta.notes {
        println!("note: {note}");
    }
    if out.format.csv() {
        println!("wrote {}", out.write_csv("moments.csv", &rows)?.display());
    }
    if out.format.json() {
        println!("wrote {}", out.write_json("moments.json", &rows)?.display());
    }
    println!("wrote {}", out.write_json("metadata.json", &meta)?.display());
    Ok(())
}

/// Runs the suite; `Ok(false)` when a gating check failed.
pub fn verify(cfg: &Config, out: &Output) -> Result<bool, CliError> {
    let params = cfg.params()?;
    let reports = run_suite(&params, cfg.experiment.master_seed, &cfg.verify)?;
    let mut ok = true;
    for r in &reports {
        for line in r.summary_lines() {
            println!("{line}");
        }
        for note in &r.notes {
            println!("  note [{}]: {note}", r.check);
        }
        ok &= r.pass || !r.gates();
        if out.format.json() {
            let text = io::to_json(r)?;
            out.write_bytes(&format!("report-{}.json", r.check), text.as_bytes())?;
        }
    }
    if out.format.csv() {
        let mut buf = Vec::new();
        io::write_csv(&reports, &mut buf)?;
        out.write_bytes("reports.csv", &buf)?;
    }
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| r.gates() && !r.pass)
        .map(|r| r.check.as_str())
        .collect();
    println!(
        "verify: {} reports in {}, gating failures: {}",
        reports.len(),
        display(&out.dir),
        if failed.is_empty() {
            "none".to_string()
        } else {
            failed.join(", ")
        }
    );
    Ok(ok)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
