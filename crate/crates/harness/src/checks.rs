//! The acceptance suite. Each criterion is a self-contained experiment returning a
//! pass/fail verdict and a one-line detail. Sizes and tolerances are fixed here.

use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mcc_core::base::{objective, objective_value, quantile_levels, train_base, BaseKind, BasePredictor, Head, LinearRegression, Mlp, TrainConfig};
use mcc_core::conformal::credible_mass_deviation;
use mcc_core::interp::{fit_linear, fit_naf_best_effort};
use mcc_core::metrics::{calibration_bound_check, crps_closed_form, crps_quadrature, default_levels, ks_uniformity};
use mcc_core::naf::{loss, loss_and_gradient};
use mcc_core::{
    lambda_accuracy, CalibrationScore, CdfView, ConformalIntervalPredictor, Dataset, FnPredictor, Interpolator,
    NafConfig, Nonconformity, PredictionOutput, Predictor, RecalibratedPredictor,
};
use ndarray::{array, Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::config::{ExperimentConfig, ScoreChoice};
use crate::datasets::{DatasetSpec, Generator};
use crate::error::{HarnessError, Result};
use crate::report::{emit_report, REPORT_JSON};
use crate::runner::{run_experiment, run_experiment_with, run_interval_comparison, EvalMode};

pub const CRITERIA: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub id: usize,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} {verdict} {}: {}", self.id, self.title, self.detail)
    }
}

fn outcome(id: usize, title: &'static str, pass: bool, detail: String) -> CheckOutcome {
    CheckOutcome { id, title, pass, detail }
}

/// Runs criterion `id`. `config` supplies the grid and output directory for the
/// determinism check and is ignored by the others.
pub fn run_criterion(id: usize, config: &ExperimentConfig) -> Result<CheckOutcome> {
    match id {
        1 => criterion_1(),
        2 => criterion_2(),
        3 => criterion_3(),
        4 => criterion_4(),
        5 => criterion_5(),
        6 => criterion_6(),
        7 => criterion_7(),
        8 => criterion_8(),
        9 => criterion_9(),
        10 => criterion_10(config, &config.output_dir.join("determinism")),
        _ => Err(HarnessError::Config(format!("no criterion {id}; valid ids are 1..={CRITERIA}"))),
    }
}

/// A run that errors out counts as a failure, with the error as the detail.
pub fn run_or_fail(id: usize, config: &ExperimentConfig) -> CheckOutcome {
    run_criterion(id, config).unwrap_or_else(|e| outcome(id, "error", false, e.to_string()))
}

/// Settings for networks trained inside checks.
pub fn check_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        hidden: 32,
        epochs: 500,
        learning_rate: 1e-2,
        seed,
    }
}

/// `n` fresh rows from `gen`, named so they never collide with a training set.
fn fresh(gen: Generator, n: usize, seed: u64) -> Result<Dataset<f64>> {
    let d = gen.generate(n, seed)?;
    Ok(Dataset::new(
        d.features().clone(),
        d.labels().clone(),
        format!("{}-fresh-{seed}", gen.name()),
    )?)
}

fn hetero_base(kind: BaseKind) -> Result<BasePredictor<f64>> {
    let train = Generator::Hetero.generate(2000, 100)?;
    Ok(train_base(&train, kind, &check_train_config(7))?)
}

fn within_budget(start: Instant, budget: Duration) -> (bool, f64) {
    let secs = start.elapsed().as_secs_f64();
    (secs <= budget.as_secs_f64(), secs)
}

/// Calibration draws for the marginal Monte Carlo designs; each draw is scored on
/// this many test points.
const MC_DRAWS: u64 = 10_000;
const MC_PER_DRAW: usize = 10;

/// PIT calibration within `1/(n+1)` plus sampling slack for linear interpolation.
pub fn criterion_1() -> Result<CheckOutcome> {
    const TITLE: &str = "PIT calibration bound, hetero, linear interpolation";
    let base = hetero_base(BaseKind::Distribution)?;
    let shared: Arc<dyn Predictor<f64>> = Arc::new(base.clone());
    let levels = default_levels();
    let m = MC_DRAWS as usize * MC_PER_DRAW;
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [19usize, 99, 499] {
        let start = Instant::now();
        let mut pits = Vec::with_capacity(m);
        for d in 0..MC_DRAWS {
            let seed = 1_000_000 * n as u64 + 2 * d;
            let cal = fresh(Generator::Hetero, n, seed)?;
            let test = fresh(Generator::Hetero, MC_PER_DRAW, seed + 1)?;
            let preds = base.predict_batch(cal.features().view())?;
            let h = RecalibratedPredictor::from_predictions(
                shared.clone(),
                CalibrationScore::Cdf,
                &Interpolator::Linear,
                &preds,
                &cal.labels().to_vec(),
            )?;
            for (p, &y) in base.predict_batch(test.features().view())?.into_iter().zip(test.labels()) {
                pits.push(h.conditional_from(p)?.eval(y));
            }
        }
        let slack = 3.0 * (0.25 / m as f64).sqrt();
        let check = calibration_bound_check(&pits, 0.0, n, &levels, slack);
        let (fast, secs) = within_budget(start, Duration::from_secs(60));
        pass &= check.pass && fast;
        parts.push(format!(
            "n={n} dev {:.5} <= {:.5} {} ({secs:.1}s)",
            check.max_deviation,
            check.bound,
            if check.pass { "ok" } else { "VIOLATED" }
        ));
    }
    Ok(outcome(1, TITLE, pass, parts.join("; ")))
}

/// Grid for the ECE check: every base kind, 8 seeds, 2000 calibration rows.
pub fn ece_grid() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.datasets = vec![DatasetSpec::Synthetic {
        generator: Generator::Hetero,
        rows: 8000,
        seed: 11,
    }];
    cfg.base_kinds = vec![
        BaseKind::Point,
        BaseKind::Interval,
        BaseKind::Quantile(4),
        BaseKind::Distribution,
        BaseKind::Ensemble(mcc_core::base::DEFAULT_ENSEMBLE_SIZE),
    ];
    cfg.scores = vec![ScoreChoice::Auto];
    cfg.interpolators = vec![mcc_core::InterpolatorKind::Linear];
    cfg.methods = Vec::new();
    cfg.seeds = (0..8).collect();
    cfg.split = [0.25, 0.25, 0.5];
    // recalibration does not depend on base quality, so short training suffices
    cfg.train = TrainConfig {
        epochs: 300,
        ..check_train_config(0)
    };
    cfg
}

/// Seed-averaged debiased ECE at most 0.01 for every base kind.
pub fn criterion_2() -> Result<CheckOutcome> {
    const TITLE: &str = "ECE after recalibration, every base kind";
    let start = Instant::now();
    let report = run_experiment_with(&ece_grid(), EvalMode::PitOnly)?;
    let mut pass = report.failed_cells() == 0;
    let mut parts = Vec::new();
    for agg in &report.aggregates {
        let ece = agg.ece.mean.unwrap_or(f64::NAN);
        let ok = ece <= 0.01 && agg.failed == 0;
        pass &= ok;
        parts.push(format!("{} {:.4}{}", agg.base, ece, if ok { "" } else { " VIOLATED" }));
    }
    let (fast, secs) = within_budget(start, Duration::from_secs(300));
    pass &= fast;
    parts.push(format!("{secs:.1}s"));
    Ok(outcome(2, TITLE, pass, parts.join(", ")))
}

/// Split conformal coverage within `1/n` plus binomial slack of the target.
pub fn criterion_3() -> Result<CheckOutcome> {
    const TITLE: &str = "conformal interval coverage, n=99";
    let start = Instant::now();
    let base = hetero_base(BaseKind::Point)?;
    let n = 99;
    let levels = [0.5, 0.8, 0.9];
    let phi = Nonconformity::AbsResidue;
    let mut hits = [0usize; 3];
    for d in 0..MC_DRAWS {
        let seed = 5_000_000 + 2 * d;
        let cal = fresh(Generator::Hetero, n, seed)?;
        let test = fresh(Generator::Hetero, MC_PER_DRAW, seed + 1)?;
        let scores = base
            .predict_batch(cal.features().view())?
            .iter()
            .zip(cal.labels())
            .map(|(p, &y)| phi.evaluate(p, y))
            .collect();
        let cp = ConformalIntervalPredictor::from_scores(phi.clone(), scores);
        for (p, &y) in base.predict_batch(test.features().view())?.iter().zip(test.labels()) {
            for (hit, &c) in hits.iter_mut().zip(&levels) {
                let (lo, hi) = cp.interval_for(p, c)?;
                *hit += usize::from(lo <= y && y <= hi);
            }
        }
    }
    let m = (MC_DRAWS as usize * MC_PER_DRAW) as f64;
    let mut pass = true;
    let mut parts = Vec::new();
    for (&h, &c) in hits.iter().zip(&levels) {
        let cov = h as f64 / m;
        let tol = 1.0 / n as f64 + 3.0 * (c * (1.0 - c) / m).sqrt();
        let ok = (cov - c).abs() <= tol;
        pass &= ok;
        parts.push(format!("c={c} coverage {cov:.4} (tol {tol:.4}){}", if ok { "" } else { " VIOLATED" }));
    }
    let (fast, secs) = within_budget(start, Duration::from_secs(60));
    pass &= fast;
    parts.push(format!("{secs:.1}s"));
    Ok(outcome(3, TITLE, pass, parts.join("; ")))
}

/// Credible mass of the conformal interval within `(1-c)/(n+1)` of `c`.
pub fn criterion_4() -> Result<CheckOutcome> {
    const TITLE: &str = "credible mass of conformal intervals";
    let start = Instant::now();
    let base = hetero_base(BaseKind::Point)?;
    let test = fresh(Generator::Hetero, 1000, 6_000_001)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [19usize, 99] {
        let cal = fresh(Generator::Hetero, n, 6_000_000 + n as u64)?;
        for c in [0.5, 0.9] {
            let dev = credible_mass_deviation(&Nonconformity::AbsResidue, &base, &cal, &test, c)?;
            let bound = (1.0 - c) / (n + 1) as f64 + 1e-6;
            let ok = dev <= bound;
            pass &= ok;
            parts.push(format!(
                "n={n} c={c} dev {dev:.5} vs {bound:.5}{}",
                if ok { "" } else { " VIOLATED" }
            ));
        }
    }
    let (fast, secs) = within_budget(start, Duration::from_secs(60));
    pass &= fast;
    parts.push(format!("{secs:.1}s"));
    Ok(outcome(4, TITLE, pass, parts.join("; ")))
}

/// Sizes probed for the flow interpolator.
pub const NAF_SIZES: [usize; 10] = [1, 2, 5, 10, 19, 50, 99, 200, 350, 500];

/// Exact linear interpolation and flow accuracy at most 1e-3.
pub fn criterion_5() -> Result<CheckOutcome> {
    const TITLE: &str = "interpolator lambda accuracy";
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst_linear = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=500);
        let scale: f64 = rng.gen_range(0.01..100.0);
        let scores: Vec<f64> = (0..n)
            .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let map = fit_linear(&scores)?;
        worst_linear = worst_linear.max(lambda_accuracy(&map, &scores));
    }
    let mut pass = worst_linear <= 1e-12;
    let mut parts = vec![format!("linear worst {worst_linear:.1e}")];
    let naf = NafConfig {
        hidden_units: 200,
        ..NafConfig::default()
    };
    let mut misses = Vec::new();
    for &n in &NAF_SIZES {
        let scores: Vec<f64> = (0..n)
            .map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let (_, lambda) = fit_naf_best_effort(&scores, &naf)?;
        if lambda > 1e-3 {
            misses.push(format!("n={n} lambda {lambda:.2e}"));
        }
        parts.push(format!("naf n={n} {lambda:.1e}"));
    }
    pass &= misses.is_empty();
    if !misses.is_empty() {
        parts.push(format!("VIOLATED at {}", misses.join(", ")));
    }
    let (fast, secs) = within_budget(start, Duration::from_secs(300));
    pass &= fast;
    parts.push(format!("{secs:.1}s"));
    Ok(outcome(5, TITLE, pass, parts.join("; ")))
}

/// Recalibrated least squares approaches the true conditional as n grows.
pub fn criterion_6() -> Result<CheckOutcome> {
    const TITLE: &str = "least-squares recalibration converges to the truth";
    let train = fresh(Generator::LinearGauss, 1000, 7_000_000)?;
    let ols = LinearRegression::fit(&train)?;
    let shared: Arc<dyn Predictor<f64>> = Arc::new(ols.clone());
    let test = fresh(Generator::LinearGauss, 100_000, 7_000_001)?;
    let test_preds: Vec<f64> = test.features().rows().into_iter().map(|x| ols.predict_value(x)).collect();
    let mut ks = Vec::new();
    for n in [100usize, 1000, 10_000] {
        let cal = fresh(Generator::LinearGauss, n, 7_000_100 + n as u64)?;
        let preds = cal
            .features()
            .rows()
            .into_iter()
            .map(|x| ols.predict(x))
            .collect::<mcc_core::Result<Vec<_>>>()?;
        let h = RecalibratedPredictor::from_predictions(
            shared.clone(),
            CalibrationScore::Residue,
            &Interpolator::Linear,
            &preds,
            &cal.labels().to_vec(),
        )?;
        let pits: Vec<f64> = test_preds
            .iter()
            .zip(test.labels())
            .map(|(&f, &y)| Ok(h.conditional_from(PredictionOutput::point(f)?)?.eval(y)))
            .collect::<mcc_core::Result<_>>()?;
        ks.push((n, ks_uniformity(&pits)));
    }
    let decreasing = ks.windows(2).all(|w| w[1].1 < w[0].1);
    let last = ks.last().map(|k| k.1).unwrap_or(f64::NAN);
    let pass = decreasing && last < 0.02;
    let detail = ks
        .iter()
        .map(|(n, k)| format!("n={n} KS {k:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    let suffix = match (decreasing, last < 0.02) {
        (true, true) => String::new(),
        (false, _) => " (not decreasing)".into(),
        (true, false) => " (final KS >= 0.02)".into(),
    };
    Ok(outcome(6, TITLE, pass, detail + &suffix))
}

struct Uniform01;

impl CdfView<f64> for Uniform01 {
    fn cdf(&self, y: f64) -> f64 {
        y.clamp(0.0, 1.0)
    }
    fn support_hint(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
    fn mean(&self) -> Option<f64> {
        Some(0.5)
    }
    fn std(&self) -> Option<f64> {
        Some((1.0f64 / 12.0).sqrt())
    }
}

/// Closed-form CRPS matches quadrature; uniform forecast CRPS is 1/12.
pub fn criterion_7() -> Result<CheckOutcome> {
    const TITLE: &str = "CRPS closed form against quadrature";
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..40);
        let labels: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let center: f64 = rng.gen_range(-2.0..2.0);
        let base: Arc<dyn Predictor<f64>> = Arc::new(FnPredictor::new(move |_: ArrayView1<'_, f64>| {
            PredictionOutput::point(center).expect("finite center")
        }));
        let preds = vec![PredictionOutput::point(center)?; n];
        let h = RecalibratedPredictor::from_predictions(base, CalibrationScore::Residue, &Interpolator::Linear, &preds, &labels)?;
        let cdf = h.conditional(array![0.0].view())?;
        let y = rng.gen_range(-7.0..7.0);
        let closed = crps_closed_form(&cdf, y)
            .ok_or_else(|| HarnessError::Config("linear map lacks a closed-form CRPS".into()))?;
        worst = worst.max((closed - crps_quadrature(&cdf, y)?).abs());
    }
    let uniform = (crps_quadrature(&Uniform01, 0.5)? - 1.0 / 12.0).abs();
    let pass = worst <= 1e-6 && uniform <= 1e-9;
    Ok(outcome(
        7,
        TITLE,
        pass,
        format!("worst gap {worst:.2e} (<= 1e-6), uniform error {uniform:.2e} (<= 1e-9)"),
    ))
}

fn relative_gap(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Analytic gradients match central differences.
pub fn criterion_8() -> Result<CheckOutcome> {
    const TITLE: &str = "gradient checks";
    const STEP: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut parts = Vec::new();
    let mut pass = true;

    let hidden = 6;
    let params: Vec<f64> = (0..3 * hidden).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let z: Vec<f64> = (0..15).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut zs = z.clone();
    zs.sort_by(f64::total_cmp);
    let targets: Vec<f64> = (1..=zs.len()).map(|i| i as f64 / (zs.len() + 1) as f64).collect();
    let (_, grad) = loss_and_gradient(&params, &zs, &targets);
    let fd: Vec<f64> = (0..params.len())
        .map(|j| {
            let mut p = params.clone();
            p[j] += STEP;
            let up = loss(&p, &zs, &targets);
            p[j] -= 2.0 * STEP;
            (up - loss(&p, &zs, &targets)) / (2.0 * STEP)
        })
        .collect();
    let gap = relative_gap(&grad, &fd);
    pass &= gap <= 1e-4;
    parts.push(format!("naf {gap:.1e}"));

    let x = Array2::from_shape_fn((12, 3), |_| rng.gen_range(-1.5..1.5));
    let y = Array1::from_shape_fn(12, |i| x[[i, 0]] - 0.5 * x[[i, 2]] + rng.gen_range(-0.3..0.3));
    for head in [Head::Point, Head::Interval, Head::Quantile(quantile_levels(4)), Head::Gaussian] {
        let mlp: Mlp<f64> = Mlp::new(vec![3, 5, 5, head.out_dim()], &mut rng);
        let params = mlp.params().to_vec();
        let (_, grad) = objective(&mlp, &head, &params, x.view(), y.view());
        let fd: Vec<f64> = (0..params.len())
            .map(|j| {
                let mut p = params.clone();
                p[j] += STEP;
                let up = objective_value(&mlp, &head, &p, x.view(), y.view());
                p[j] -= 2.0 * STEP;
                (up - objective_value(&mlp, &head, &p, x.view(), y.view())) / (2.0 * STEP)
            })
            .collect();
        let gap = relative_gap(grad.as_slice(), &fd);
        pass &= gap <= 1e-4;
        let name = match head {
            Head::Point => "point",
            Head::Interval => "interval",
            Head::Quantile(_) => "quantile",
            Head::Gaussian => "gaussian",
        };
        parts.push(format!("{name} {gap:.1e}"));
    }
    Ok(outcome(8, TITLE, pass, parts.join(", ") + " (<= 1e-4 relative)"))
}

/// Grid for the interval comparison: 10^4 test points per base.
pub fn interval_grid() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.datasets = vec![DatasetSpec::Synthetic {
        generator: Generator::Hetero,
        rows: 40_000,
        seed: 21,
    }];
    cfg.base_kinds = vec![BaseKind::Point, BaseKind::Quantile(4), BaseKind::Distribution];
    cfg.seeds = vec![0];
    cfg.split = [0.05, 0.7, 0.25];
    cfg.train = check_train_config(0);
    cfg
}

/// Both interval methods reach 90% coverage and conformal is not wider.
pub fn criterion_9() -> Result<CheckOutcome> {
    const TITLE: &str = "conformal against credible intervals at 0.9";
    let level = 0.9;
    let report = run_interval_comparison(&interval_grid(), level)?;
    let mut pass = report.failed_cells() == 0;
    let mut parts = Vec::new();
    let summary = report.summary();
    for base in &interval_grid().base_kinds {
        let base = base.to_string();
        let find = |method: &str| summary.iter().find(|s| s.base == base && s.method == method);
        let (Some(conf), Some(cred)) = (find("conformal"), find("credible")) else {
            pass = false;
            parts.push(format!("{base} missing"));
            continue;
        };
        let get = |s: Option<f64>| s.unwrap_or(f64::NAN);
        let (cc, rc) = (get(conf.coverage.mean), get(cred.coverage.mean));
        let ratio = get(conf.width.mean) / get(cred.width.mean);
        let ok = (cc - level).abs() <= 0.01 && (rc - level).abs() <= 0.01 && ratio <= 1.05;
        pass &= ok;
        parts.push(format!(
            "{base} coverage {cc:.4}/{rc:.4} width ratio {ratio:.3}{}",
            if ok { "" } else { " VIOLATED" }
        ));
    }
    Ok(outcome(9, TITLE, pass, parts.join("; ")))
}

/// Two runs of the same grid write byte-identical `report.json`.
pub fn criterion_10(config: &ExperimentConfig, scratch: &Path) -> Result<CheckOutcome> {
    const TITLE: &str = "byte-identical reports";
    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        let dir = scratch.join(run);
        let report = run_experiment(config)?;
        emit_report(&report, &dir)?;
        let path = dir.join(REPORT_JSON);
        bytes.push(std::fs::read(&path).map_err(|e| HarnessError::io(&path, e))?);
    }
    let pass = bytes[0] == bytes[1];
    Ok(outcome(
        10,
        TITLE,
        pass,
        format!(
            "{} rows, {} bytes, {}",
            config.row_count(),
            bytes[0].len(),
            if pass { "identical" } else { "DIFFERENT" }
        ),
    ))
}

/// A small grid suitable for the determinism check.
pub fn small_grid() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.datasets = vec![DatasetSpec::Synthetic {
        generator: Generator::Hetero,
        rows: 600,
        seed: 0,
    }];
    cfg.seeds = vec![0, 1];
    cfg.train = TrainConfig {
        hidden: 16,
        epochs: 100,
        learning_rate: 1e-2,
        seed: 0,
    };
    cfg
}
