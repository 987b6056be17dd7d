//! Task recipes tying data, operators, training and metrics together, plus sweeps and
//! report summaries.

mod config;
mod run;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub use config::{
    deep_merge, numeric_paths, parse_override, resolve_axis, resolve_config, set_path, Ablation, CtConfig,
    DataConfig, Method, NetworkConfig, NoiseConfig, OccupancyConfig, PhantomKind, SrConfig, TaskConfig, TaskKind,
    AUDIO_SIGMA,
};
pub use run::{prepare, run_in_memory, run_task, Prepared, RunOutcome, RunReport};

use crate::error::{Error, Result};
use crate::metrics::MetricReport;

/// One run per value of `axis`, each in its own subdirectory of `out`.
pub fn sweep(template: &TaskConfig, axis: &str, values: &[f64], out: &Path) -> Result<Vec<RunReport>> {
    let path = resolve_axis(template, axis)?;
    let leaf = path.rsplit('.').next().unwrap_or(&path).to_string();
    let mut reports = Vec::with_capacity(values.len());
    for &v in values {
        let mut json = serde_json::to_value(template)?;
        set_path(&mut json, &path, &format_number(v))?;
        let cfg: TaskConfig = serde_json::from_value(json).map_err(|e| Error::Config(format!("{path}={v}: {e}")))?;
        cfg.validate()?;
        reports.push(run_task(&cfg, &out.join(format!("{leaf}={}", format_number(v))))?);
    }
    Ok(reports)
}

/// Integers print without a fraction so they deserialize into count fields.
fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.4}")
    }
}

/// Comparison table of a sweep, best run first by the task's primary metric.
pub fn sweep_table(reports: &[RunReport], axis: &str) -> String {
    let Some(first) = reports.first() else {
        return String::from("(no runs)\n");
    };
    let (metric, higher_better) = first.config.task.primary_metric();
    let path = resolve_axis(&first.config, axis).unwrap_or_else(|_| axis.to_string());
    let mut rows: Vec<(String, f64)> = reports
        .iter()
        .map(|r| {
            let json = serde_json::to_value(&r.config).unwrap_or_default();
            let value = path
                .split('.')
                .try_fold(&json, |v, k| v.get(k))
                .map(|v| v.to_string())
                .unwrap_or_default();
            (value, r.metrics.get(metric).copied().unwrap_or(f64::NAN))
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else if higher_better { v } else { -v };
        key(b.1).total_cmp(&key(a.1))
    });
    let mut out = format!("{:<16} {:>12}\n", path, metric);
    for (v, m) in rows {
        out.push_str(&format!("{:<16} {:>12}\n", v, fmt_value(m)));
    }
    out
}

fn collect_metric_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            collect_metric_files(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "metrics.jsonl") {
            out.push(p);
        }
    }
    Ok(())
}

/// Reads every `metrics.jsonl` under `dir`.
pub fn load_metric_reports(dir: &Path) -> Result<Vec<MetricReport>> {
    let mut files = Vec::new();
    collect_metric_files(dir, &mut files)?;
    let mut rows = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(|e| Error::io(&f, e))?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            rows.push(serde_json::from_str(line)?);
        }
    }
    Ok(rows)
}

/// Pivots metric rows into a method × (task, metric) table. Repeated cells keep the best
/// value.
pub fn summarize_reports(rows: &[MetricReport]) -> String {
    let mut columns: Vec<(String, String)> = Vec::new();
    let mut cells: BTreeMap<(String, String, String), f64> = BTreeMap::new();
    for r in rows {
        let col = (r.task.clone(), r.metric.clone());
        if !columns.contains(&col) {
            columns.push(col);
        }
        let lower_better = r.metric == "mse";
        let key = (r.method.clone(), r.task.clone(), r.metric.clone());
        let better = |old: f64| {
            old.is_nan() || (!r.value.is_nan() && if lower_better { r.value < old } else { r.value > old })
        };
        match cells.get(&key) {
            Some(&old) if !better(old) => {}
            _ => {
                cells.insert(key, r.value);
            }
        }
    }
    columns.sort();
    let mut methods: Vec<&String> = cells.keys().map(|k| &k.0).collect();
    methods.dedup();
    let mut out = format!("{:<20}", "method");
    for (task, metric) in &columns {
        out.push_str(&format!(" {:>18}", format!("{task}:{metric}")));
    }
    out.push('\n');
    for m in methods {
        out.push_str(&format!("{m:<20}"));
        for (task, metric) in &columns {
            let cell = cells
                .get(&(m.clone(), task.clone(), metric.clone()))
                .map(|&v| fmt_value(v))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(" {cell:>18}"));
        }
        out.push('\n');
    }
    out
}

pub fn summarize(dir: &Path) -> Result<String> {
    Ok(summarize_reports(&load_metric_reports(dir)?))
}
