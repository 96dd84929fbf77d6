//! Grid execution. One job trains a base once for a (dataset, seed, base) triple and then
//! recalibrates and evaluates every (score, interpolator) cell on it.

use std::sync::Arc;

use mcc_core::base::{train_base, BaseKind, BasePredictor, TrainConfig};
use mcc_core::metrics::{default_levels, ece_debiased, evaluate, ks_uniformity, pit_histogram, pit_values, MetricRow, PIT_BINS};
use mcc_core::{
    split_dataset, CalibrationScore, ConformalIntervalPredictor, Dataset, Interpolator, InterpolatorKind, Nonconformity,
    Predictor, RecalibratedPredictor, ScoreKind, Standardizer,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{auto_score, Cell, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::report::{aggregate, ExperimentReport, HistogramRow, IntervalReport, IntervalRow, ReportRow};

pub const THREADS_ENV: &str = "CALIB_THREADS";

/// How much of the metric suite to compute per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalMode {
    Full,
    /// PITs, ECE and KS only. NLL, CRPS and sharpness are left undefined.
    PitOnly,
}

/// Thread pool honoring `CALIB_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse()
                .ok()
                .filter(|&n: &usize| n > 0)
                .ok_or_else(|| HarnessError::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?,
        ),
        Err(_) => None,
    };
    thread_pool_with(threads)
}

/// Pool with `threads` workers, or rayon's default when `None`.
pub fn thread_pool_with(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot build thread pool: {e}")))
}

/// Derives independent per-purpose seeds from a run seed.
fn sub_seed(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

struct Job<'a> {
    label: &'a str,
    data: &'a Dataset<f64>,
    seed: u64,
    base: BaseKind,
}

/// Standardized splits and a trained base for one job.
struct Prepared {
    cal: Dataset<f64>,
    test: Dataset<f64>,
    base: Arc<BasePredictor<f64>>,
}

fn prepare(config: &ExperimentConfig, data: &Dataset<f64>, seed: u64, kind: BaseKind) -> Result<Prepared> {
    let (train, cal, test) = split_dataset(data, &config.split_spec(seed)?)?;
    let st = Standardizer::fit(&train);
    let train = st.apply(&train);
    let train_cfg = TrainConfig {
        seed: sub_seed(seed, 1),
        ..config.train.clone()
    };
    let base = train_base(&train, kind, &train_cfg)?;
    log::info!("trained {kind} base on {} rows (seed {seed})", train.len());
    Ok(Prepared {
        cal: st.apply(&cal),
        test: st.apply(&test),
        base: Arc::new(base),
    })
}

fn load_all(config: &ExperimentConfig) -> Result<Vec<(String, Dataset<f64>)>> {
    config
        .datasets
        .iter()
        .map(|spec| Ok((spec.label(), spec.load()?)))
        .collect()
}

fn jobs<'a>(config: &ExperimentConfig, data: &'a [(String, Dataset<f64>)]) -> Vec<Job<'a>> {
    let mut out = Vec::new();
    for (label, ds) in data {
        for &seed in &config.seeds {
            for &base in &config.base_kinds {
                out.push(Job {
                    label,
                    data: ds,
                    seed,
                    base,
                });
            }
        }
    }
    out
}

fn interpolator(config: &ExperimentConfig, kind: InterpolatorKind, seed: u64) -> Interpolator {
    Interpolator::from_kind(kind, sub_seed(seed, 2), &config.naf)
}

/// Recalibrates and evaluates one cell.
pub fn run_cell(
    config: &ExperimentConfig,
    base: Arc<dyn Predictor<f64>>,
    cal: &Dataset<f64>,
    test: &Dataset<f64>,
    cell: Cell,
    seed: u64,
    mode: EvalMode,
) -> Result<(MetricRow, Vec<f64>)> {
    let h = RecalibratedPredictor::recalibrate(
        base,
        CalibrationScore::from_kind(cell.score),
        &interpolator(config, cell.interp, seed),
        cal,
    )?;
    let ece_seed = sub_seed(seed, 3);
    match mode {
        EvalMode::Full => Ok(evaluate(&h, test, ece_seed)?),
        EvalMode::PitOnly => {
            let pits = pit_values(&h, test)?;
            let row = MetricRow {
                nll: None,
                crps: None,
                std: None,
                ci95_width: None,
                ece: Some(ece_debiased(&pits, &default_levels(), ece_seed)?),
                pit_ks: Some(ks_uniformity(&pits)),
            };
            Ok((row, pits))
        }
    }
}

fn run_job(config: &ExperimentConfig, job: &Job<'_>, mode: EvalMode) -> Vec<(ReportRow, Option<HistogramRow>)> {
    let cells = config.cells(job.base);
    let row = |cell: Cell, metrics: MetricRow, error: Option<String>| ReportRow {
        dataset: job.label.to_string(),
        base: job.base.to_string(),
        score: cell.score,
        interp: cell.interp,
        seed: job.seed,
        metrics,
        error,
    };
    let prepared = match prepare(config, job.data, job.seed, job.base) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("{} / {} / seed {}: {e}", job.label, job.base, job.seed);
            return cells
                .into_iter()
                .map(|c| (row(c, MetricRow::undefined(), Some(e.to_string())), None))
                .collect();
        }
    };
    cells
        .into_iter()
        .map(|cell| {
            let base: Arc<dyn Predictor<f64>> = prepared.base.clone();
            match run_cell(config, base, &prepared.cal, &prepared.test, cell, job.seed, mode) {
                Ok((metrics, pits)) => {
                    let r = row(cell, metrics, None);
                    let hist = HistogramRow {
                        dataset: r.dataset.clone(),
                        base: r.base.clone(),
                        score: cell.score,
                        interp: cell.interp,
                        seed: job.seed,
                        counts: pit_histogram(&pits, PIT_BINS),
                    };
                    (r, Some(hist))
                }
                Err(e) => {
                    log::warn!("{} / {} / {} + {} / seed {}: {e}", job.label, job.base, cell.score, cell.interp, job.seed);
                    (row(cell, MetricRow::undefined(), Some(e.to_string())), None)
                }
            }
        })
        .collect()
}

/// Runs the full grid. Cell failures are recorded in the rows; only setup problems
/// (bad config, unreadable datasets) return an error.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_with(config, EvalMode::Full)
}

pub fn run_experiment_with(config: &ExperimentConfig, mode: EvalMode) -> Result<ExperimentReport> {
    run_experiment_on(&thread_pool()?, config, mode)
}

/// Runs the grid on `pool`. The report does not depend on the pool size.
pub fn run_experiment_on(pool: &rayon::ThreadPool, config: &ExperimentConfig, mode: EvalMode) -> Result<ExperimentReport> {
    config.validate()?;
    let data = load_all(config)?;
    let jobs = jobs(config, &data);
    let results: Vec<Vec<_>> = pool.install(|| jobs.par_iter().map(|j| run_job(config, j, mode)).collect());
    let mut rows = Vec::with_capacity(config.row_count());
    let mut histograms = Vec::new();
    for out in results {
        for (row, hist) in out {
            rows.push(row);
            histograms.extend(hist);
        }
    }
    let aggregates = aggregate(&rows);
    Ok(ExperimentReport {
        config: config.clone(),
        rows,
        aggregates,
        histograms,
    })
}

/// Non-conformity used for the conformal side of the interval comparison: absolute
/// residual for point bases, otherwise the distance of the base's natural score from
/// its center.
pub fn comparison_nonconformity(base: BaseKind) -> Nonconformity<f64> {
    match base {
        BaseKind::Point => Nonconformity::AbsResidue,
        other => {
            let score = auto_score(other);
            let center = if score == ScoreKind::ZScore { 0.0 } else { 0.5 };
            Nonconformity::abs_score(CalibrationScore::from_kind(score), center)
        }
    }
}

fn compare_job(job: &Job<'_>, config: &ExperimentConfig, level: f64) -> Result<[IntervalRow; 2]> {
    let p = prepare(config, job.data, job.seed, job.base)?;
    let phi = comparison_nonconformity(job.base);
    let cp = ConformalIntervalPredictor::fit(phi, p.base.as_ref(), &p.cal)?;
    let h = RecalibratedPredictor::recalibrate(
        p.base.clone(),
        CalibrationScore::from_kind(auto_score(job.base)),
        &Interpolator::Linear,
        &p.cal,
    )?;
    let (mut conf, mut cred) = ((0.0, 0usize), (0.0, 0usize));
    for (x, y) in p.test.iter() {
        let pred = p.base.predict(x)?;
        let (lo, hi) = cp.interval_for(&pred, level)?;
        conf.0 += hi - lo;
        conf.1 += usize::from(lo <= y && y <= hi);
        let (lo, hi) = h.conditional_from(pred)?.credible_interval(level)?;
        cred.0 += hi - lo;
        cred.1 += usize::from(lo <= y && y <= hi);
    }
    let m = p.test.len() as f64;
    let row = |method: &str, (w, hits): (f64, usize)| IntervalRow {
        dataset: job.label.to_string(),
        base: job.base.to_string(),
        seed: job.seed,
        method: method.to_string(),
        width: Some(w / m),
        coverage: Some(hits as f64 / m),
        error: None,
    };
    Ok([row("conformal", conf), row("credible", cred)])
}

/// Conformal intervals against centered credible intervals of the recalibrated predictor,
/// per dataset, base and seed.
pub fn run_interval_comparison(config: &ExperimentConfig, level: f64) -> Result<IntervalReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(HarnessError::Config(format!("level must lie in (0, 1), got {level}")));
    }
    config.validate()?;
    let data = load_all(config)?;
    let jobs = jobs(config, &data);
    let pool = thread_pool()?;
    let results: Vec<_> = pool.install(|| jobs.par_iter().map(|j| compare_job(j, config, level)).collect());
    let mut rows = Vec::new();
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(pair) => rows.extend(pair),
            Err(e) => {
                log::warn!("{} / {} / seed {}: {e}", job.label, job.base, job.seed);
                for method in ["conformal", "credible"] {
                    rows.push(IntervalRow {
                        dataset: job.label.to_string(),
                        base: job.base.to_string(),
                        seed: job.seed,
                        method: method.to_string(),
                        width: None,
                        coverage: None,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }
    Ok(IntervalReport {
        config: config.clone(),
        level,
        rows,
    })
}
