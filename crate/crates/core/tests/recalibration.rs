use std::sync::Arc;

use mcc_core::metrics::ks_uniformity;
use mcc_core::{
    CalibError, CalibrationScore, Dataset, FnPredictor, Interpolator, PredictionOutput, Predictor,
    Provenance, RecalibratedPredictor,
};
use ndarray::{array, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn zero_base() -> Arc<dyn Predictor<f64>> {
    Arc::new(FnPredictor::new(|_: ArrayView1<'_, f64>| PredictionOutput::point(0.0).unwrap()))
}

fn labels_only(labels: &[f64]) -> Dataset<f64> {
    let rows = labels.iter().map(|_| vec![0.0]).collect();
    Dataset::from_rows(rows, labels.to_vec(), "cal").unwrap()
}

fn zero_model(labels: &[f64], interp: Interpolator) -> RecalibratedPredictor<f64> {
    RecalibratedPredictor::recalibrate(zero_base(), CalibrationScore::Residue, &interp, &labels_only(labels)).unwrap()
}

/// y ~ Normal(x, 1) with x ~ Uniform(-2, 2).
fn gaussian_data(n: usize, seed: u64, name: &str) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.gen_range(-2.0..2.0);
        let e: f64 = StandardNormal.sample(&mut rng);
        rows.push(vec![x]);
        ys.push(x + e);
    }
    Dataset::from_rows(rows, ys, name).unwrap()
}

/// A deliberately overconfident Gaussian base (std 0.5 instead of 1).
fn narrow_gaussian() -> Arc<dyn Predictor<f64>> {
    Arc::new(FnPredictor::new(|x: ArrayView1<'_, f64>| PredictionOutput::gaussian(x[0], 0.5).unwrap()))
}

#[test]
fn composes_the_linear_and_naive_examples() {
    let x = array![0.0];
    let linear = zero_model(&[1.0, 2.0, 3.0], Interpolator::Linear);
    assert_eq!(linear.cdf_eval(x.view(), 2.5).unwrap(), 0.625);
    let naive = zero_model(&[1.0, 2.0, 3.0], Interpolator::Naive);
    assert!((naive.cdf_eval(x.view(), 2.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn cdf_eval_is_the_bare_composition() {
    let h = zero_model(&[0.3, 1.0, 2.0, 4.0], Interpolator::Linear);
    let x = array![0.0];
    for y in [-3.0, 0.5, 1.7, 9.0] {
        let direct = h.map().eval(h.score().evaluate(&PredictionOutput::point(0.0).unwrap(), y).unwrap());
        assert_eq!(h.cdf_eval(x.view(), y).unwrap().to_bits(), direct.to_bits());
    }
}

#[test]
fn inverse_examples_and_round_trip() {
    let h = zero_model(&[1.0, 2.0, 3.0], Interpolator::Linear);
    let x = array![0.0];
    assert!((h.cdf_inverse(x.view(), 0.5).unwrap() - 2.0).abs() < 1e-12);
    assert!((h.cdf_inverse(x.view(), 0.625).unwrap() - 2.5).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let p = rng.gen_range(0.01..0.99);
        let y = h.cdf_inverse(x.view(), p).unwrap();
        assert!((h.cdf_eval(x.view(), y).unwrap() - p).abs() <= 1e-9);
    }
}

#[test]
fn monotone_in_y_and_large_y_limit() {
    let base = narrow_gaussian();
    let cal = gaussian_data(300, 4, "cal");
    let h = RecalibratedPredictor::recalibrate(base, CalibrationScore::ZScore, &Interpolator::Linear, &cal).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let x = array![rng.gen_range(-2.0..2.0)];
        let a: f64 = rng.gen_range(-8.0..8.0);
        let b: f64 = rng.gen_range(-8.0..8.0);
        let (y1, y2) = (a.min(b), a.max(b));
        let (p1, p2) = (h.cdf_eval(x.view(), y1).unwrap(), h.cdf_eval(x.view(), y2).unwrap());
        assert!(p1 <= p2 && (0.0..=1.0).contains(&p1) && (0.0..=1.0).contains(&p2));
    }
    let simple = zero_model(&[1.0, 2.0, 3.0], Interpolator::Linear);
    let s = simple.map().tail_scale().unwrap();
    let far = simple.cdf_eval(array![0.0].view(), 3.0 + 50.0 * s).unwrap();
    assert!(1.0 - far < 1e-6);
}

#[test]
fn symmetric_mean_and_sampled_std() {
    let x = array![0.0];
    let sym = zero_model(&[-1.0, 0.0, 1.0], Interpolator::Linear);
    let (mean, std) = sym.predictive_moments(x.view()).unwrap();
    assert!(mean.abs() < 1e-6);
    assert!(std.is_some());

    let h = zero_model(&[1.0, 2.0, 3.0], Interpolator::Linear);
    let (_, std) = h.predictive_moments(x.view()).unwrap();
    let cdf = h.conditional(x.view()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let m = 1_000_000;
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..m {
        let p: f64 = rng.gen_range(f64::EPSILON..1.0);
        let y = cdf.inverse(p).unwrap();
        s1 += y;
        s2 += y * y;
    }
    let mc_mean = s1 / m as f64;
    let mc_std = (s2 / m as f64 - mc_mean * mc_mean).sqrt();
    assert!((std.unwrap() - mc_std).abs() < 1e-2, "{} vs {mc_std}", std.unwrap());
}

#[test]
fn step_maps_have_no_std() {
    let h = zero_model(&[1.0, 2.0, 3.0], Interpolator::Random { seed: 4 });
    let (_, std) = h.predictive_moments(array![0.0].view()).unwrap();
    assert!(std.is_none());
}

#[test]
fn credible_interval_examples() {
    let h = zero_model(&[1.0, 2.0, 3.0], Interpolator::Linear);
    let x = array![0.0];
    let (l, u) = h.credible_interval(x.view(), 0.5).unwrap();
    assert!((l - 1.0).abs() < 1e-9 && (u - 3.0).abs() < 1e-9);
    let (l, u) = h.credible_interval(x.view(), 1e-6).unwrap();
    assert!(u - l < 1e-4);
    let (l, u) = h.credible_interval(x.view(), 0.8).unwrap();
    let mass = h.cdf_eval(x.view(), u).unwrap() - h.cdf_eval(x.view(), l).unwrap();
    assert!((mass - 0.8).abs() <= 2e-9);
}

#[test]
fn zscore_recalibration_gives_uniform_pits_and_coverage() {
    let cal = gaussian_data(2000, 10, "cal");
    let test = gaussian_data(10_000, 11, "test");
    let h = RecalibratedPredictor::recalibrate(narrow_gaussian(), CalibrationScore::ZScore, &Interpolator::Linear, &cal)
        .unwrap();
    let mut pits = Vec::with_capacity(test.len());
    let mut hits = 0;
    for (x, y) in test.iter() {
        let cdf = h.conditional(x).unwrap();
        pits.push(cdf.eval(y));
        let (l, u) = cdf.credible_interval(0.95).unwrap();
        hits += usize::from(l <= y && y <= u);
    }
    // The recalibrated CDF is built from the empirical distribution of the calibration
    // scores, so the PITs carry sampling error from both sets: use the two-sample 1%
    // critical value.
    let critical = 1.628 * (1.0 / cal.len() as f64 + 1.0 / test.len() as f64).sqrt();
    let ks = ks_uniformity(&pits);
    assert!(ks < critical, "ks {ks} >= {critical}");
    let coverage = hits as f64 / test.len() as f64;
    assert!((coverage - 0.95).abs() <= 0.01, "coverage {coverage}");
}

#[test]
fn provenance_overlap_is_rejected() {
    let cal = labels_only(&[1.0, 2.0, 3.0]);
    let base = FnPredictor::new(|_: ArrayView1<'_, f64>| PredictionOutput::point(0.0).unwrap()).with_provenance(
        Provenance {
            source_name: "cal".into(),
            train_row_ids: vec![1],
        },
    );
    let err = RecalibratedPredictor::recalibrate(Arc::new(base), CalibrationScore::Residue, &Interpolator::Linear, &cal)
        .unwrap_err();
    assert!(matches!(err, CalibError::SplitProvenance { .. }), "{err:?}");
}

#[test]
fn converges_to_the_true_cdf_as_calibration_grows() {
    // y = 2x + N(0, 1), base predicts the exact conditional mean
    let base: Arc<dyn Predictor<f64>> =
        Arc::new(FnPredictor::new(|x: ArrayView1<'_, f64>| PredictionOutput::point(2.0 * x[0]).unwrap()));
    let x0 = array![0.3];
    let mut sups = Vec::new();
    for (n, seed) in [(100, 1u64), (1000, 2), (10_000, 3)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let e: f64 = StandardNormal.sample(&mut rng);
            rows.push(vec![x]);
            ys.push(2.0 * x + e);
        }
        let cal = Dataset::from_rows(rows, ys, "cal").unwrap();
        let h = RecalibratedPredictor::recalibrate(base.clone(), CalibrationScore::Residue, &Interpolator::Linear, &cal)
            .unwrap();
        let sup = (-400..=400)
            .map(|k| {
                let y = 0.6 + k as f64 * 0.01;
                let truth = mcc_core::numeric::normal_cdf(y - 0.6);
                (h.cdf_eval(x0.view(), y).unwrap() - truth).abs()
            })
            .fold(0.0, f64::max);
        sups.push(sup);
    }
    assert!(sups[0] > sups[1] && sups[1] > sups[2], "{sups:?}");
}

#[test]
fn clamped_cdf_score_gives_a_proper_distribution() {
    // scores near the clamp leave visible tail mass in q below the smallest score
    let base: Arc<dyn Predictor<f64>> =
        Arc::new(FnPredictor::new(|_: ArrayView1<'_, f64>| PredictionOutput::gaussian(0.0, 1.0).unwrap()));
    let cal = labels_only(&[-2.5, -0.3, 0.1, 0.4, 2.8]);
    let h = RecalibratedPredictor::recalibrate(base, CalibrationScore::Cdf, &Interpolator::Linear, &cal).unwrap();
    let cdf = h.conditional(array![0.0].view()).unwrap();
    assert!(cdf.eval(-6.9) > 0.0);
    assert_eq!(cdf.eval(-50.0), 0.0);
    assert_eq!(cdf.eval(50.0), 1.0);
    let lo = cdf.inverse(1e-9).unwrap();
    assert!(lo.is_finite() && (lo + 7.03).abs() < 0.01, "{lo}");
    let (mean, std) = cdf.moments().unwrap();
    assert!(mean.is_finite() && std.unwrap().is_finite());
    let crps = mcc_core::metrics::crps_single(&cdf, 0.3).unwrap();
    assert!(crps.is_finite() && crps > 0.0);
}
