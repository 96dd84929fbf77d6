//! Report structures and their CSV/JSON files.

use std::fs;
use std::path::{Path, PathBuf};

use mcc_core::metrics::{na, MetricRow, PIT_BINS};
use mcc_core::{InterpolatorKind, ScoreKind};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";
pub const HISTOGRAM_CSV: &str = "pit_histograms.csv";
pub const INTERVALS_CSV: &str = "intervals.csv";
pub const INTERVALS_JSON: &str = "intervals.json";

pub const REPORT_COLUMNS: [&str; 11] = [
    "dataset", "base", "score", "interp", "seed", "nll", "crps", "std", "ci95", "ece", "pit_ks",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub base: String,
    pub score: ScoreKind,
    pub interp: InterpolatorKind,
    pub seed: u64,
    pub metrics: MetricRow,
    /// Set when the cell failed; all metrics are then undefined.
    pub error: Option<String>,
}

/// Mean and standard error over the seeds where the metric is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    #[serde(with = "na")]
    pub mean: Option<f64>,
    #[serde(with = "na")]
    pub se: Option<f64>,
}

impl Stat {
    pub fn of(values: impl Iterator<Item = Option<f64>>) -> Self {
        let v: Vec<f64> = values.flatten().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return Self { mean: None, se: None };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let se = (v.len() > 1).then(|| {
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        Self { mean: Some(mean), se }
    }
}

/// One configuration summarized over its seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub dataset: String,
    pub base: String,
    pub score: ScoreKind,
    pub interp: InterpolatorKind,
    /// Number of seeds, failed ones included.
    pub count: usize,
    pub failed: usize,
    pub nll: Stat,
    pub crps: Stat,
    pub std: Stat,
    pub ci95: Stat,
    pub ece: Stat,
    pub pit_ks: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub dataset: String,
    pub base: String,
    pub score: ScoreKind,
    pub interp: InterpolatorKind,
    pub seed: u64,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    pub aggregates: Vec<Aggregate>,
    pub histograms: Vec<HistogramRow>,
}

impl ExperimentReport {
    pub fn failed_cells(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Groups rows by configuration in first-seen order.
pub fn aggregate(rows: &[ReportRow]) -> Vec<Aggregate> {
    let mut keys: Vec<(&str, &str, ScoreKind, InterpolatorKind)> = Vec::new();
    for r in rows {
        let k = (r.dataset.as_str(), r.base.as_str(), r.score, r.interp);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(dataset, base, score, interp)| {
            let group: Vec<&ReportRow> = rows
                .iter()
                .filter(|r| r.dataset == dataset && r.base == base && r.score == score && r.interp == interp)
                .collect();
            let stat = |f: fn(&MetricRow) -> Option<f64>| Stat::of(group.iter().map(|r| f(&r.metrics)));
            Aggregate {
                dataset: dataset.to_string(),
                base: base.to_string(),
                score,
                interp,
                count: group.len(),
                failed: group.iter().filter(|r| r.error.is_some()).count(),
                nll: stat(|m| m.nll),
                crps: stat(|m| m.crps),
                std: stat(|m| m.std),
                ci95: stat(|m| m.ci95_width),
                ece: stat(|m| m.ece),
                pit_ks: stat(|m| m.pit_ks),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub dataset: String,
    pub base: String,
    pub seed: u64,
    /// `conformal` or `credible`.
    pub method: String,
    #[serde(with = "na")]
    pub width: Option<f64>,
    #[serde(with = "na")]
    pub coverage: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub config: ExperimentConfig,
    pub level: f64,
    pub rows: Vec<IntervalRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub dataset: String,
    pub base: String,
    pub method: String,
    pub width: Stat,
    pub coverage: Stat,
}

impl IntervalReport {
    pub fn failed_cells(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    /// Seed-averaged width and coverage per dataset, base and method.
    pub fn summary(&self) -> Vec<IntervalSummary> {
        let mut keys: Vec<(&str, &str, &str)> = Vec::new();
        for r in &self.rows {
            let k = (r.dataset.as_str(), r.base.as_str(), r.method.as_str());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .map(|(dataset, base, method)| {
                let group = || {
                    self.rows
                        .iter()
                        .filter(move |r| r.dataset == dataset && r.base == base && r.method == method)
                };
                IntervalSummary {
                    dataset: dataset.to_string(),
                    base: base.to_string(),
                    method: method.to_string(),
                    width: Stat::of(group().map(|r| r.width)),
                    coverage: Stat::of(group().map(|r| r.coverage)),
                }
            })
            .collect()
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn read_report_json(path: &Path) -> Result<ExperimentReport> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// The per-cell table as CSV text.
pub fn report_csv(report: &ExperimentReport) -> Result<String> {
    let path = Path::new(REPORT_CSV);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_COLUMNS).map_err(csv_err(path))?;
    for r in &report.rows {
        let m = &r.metrics;
        let record = [
            r.dataset.clone(),
            r.base.clone(),
            r.score.to_string(),
            r.interp.to_string(),
            r.seed.to_string(),
            MetricRow::cell(m.nll),
            MetricRow::cell(m.crps),
            MetricRow::cell(m.std),
            MetricRow::cell(m.ci95_width),
            MetricRow::cell(m.ece),
            MetricRow::cell(m.pit_ks),
        ];
        w.write_record(&record).map_err(csv_err(path))?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::io(path, e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn histogram_csv(report: &ExperimentReport) -> Result<String> {
    let path = Path::new(HISTOGRAM_CSV);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dataset", "base", "score", "interp", "seed", "bin", "lo", "hi", "count"])
        .map_err(csv_err(path))?;
    for h in &report.histograms {
        for (b, count) in h.counts.iter().enumerate() {
            let lo = b as f64 / PIT_BINS as f64;
            let hi = (b + 1) as f64 / PIT_BINS as f64;
            w.write_record([
                h.dataset.clone(),
                h.base.clone(),
                h.score.to_string(),
                h.interp.to_string(),
                h.seed.to_string(),
                b.to_string(),
                lo.to_string(),
                hi.to_string(),
                count.to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::io(path, e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn write_text(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

/// Writes `report.csv`, `report.json` and `pit_histograms.csv` into `dir`.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    if report.rows.is_empty() {
        return Err(HarnessError::Config("refusing to write an empty report".into()));
    }
    prepare_dir(dir)?;
    let csv = write_text(dir.join(REPORT_CSV), &report_csv(report)?)?;
    let json = dir.join(REPORT_JSON);
    write_json(&json, report)?;
    let hist = write_text(dir.join(HISTOGRAM_CSV), &histogram_csv(report)?)?;
    Ok(vec![csv, json, hist])
}

/// Writes `intervals.csv` and `intervals.json` into `dir`.
pub fn emit_intervals(report: &IntervalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    prepare_dir(dir)?;
    let path = dir.join(INTERVALS_CSV);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dataset", "base", "seed", "method", "level", "width", "coverage"])
        .map_err(csv_err(&path))?;
    for r in &report.rows {
        w.write_record([
            r.dataset.clone(),
            r.base.clone(),
            r.seed.to_string(),
            r.method.clone(),
            report.level.to_string(),
            MetricRow::cell(r.width),
            MetricRow::cell(r.coverage),
        ])
        .map_err(csv_err(&path))?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::io(&path, e.into_error()))?;
    let csv = write_text(path, &String::from_utf8(bytes).expect("csv output is utf-8"))?;
    let json = dir.join(INTERVALS_JSON);
    write_json(&json, report)?;
    Ok(vec![csv, json])
}
