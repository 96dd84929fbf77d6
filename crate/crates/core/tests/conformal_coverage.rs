use std::sync::Arc;

use mcc_core::conformal::{coverage_estimate, signed_score_from_nonconformity, credible_mass_deviation};
use mcc_core::{
    ConformalIntervalPredictor, Dataset, FnPredictor, Interpolator, Nonconformity, PredictionOutput, Predictor,
    RecalibratedPredictor,
};
use ndarray::ArrayView1;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Pred = fn(ArrayView1<'_, f64>) -> PredictionOutput<f64>;

fn sin_gaussian(x: ArrayView1<'_, f64>) -> PredictionOutput<f64> {
    PredictionOutput::gaussian((2.0 * x[0]).sin(), 0.2 + 0.5 * x[0].abs()).unwrap()
}

fn base() -> FnPredictor<f64, Pred> {
    FnPredictor::new(sin_gaussian as Pred)
}

fn hetero(n: usize, seed: u64) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.gen_range(-2.0..2.0);
        let e: f64 = StandardNormal.sample(&mut rng);
        rows.push(vec![x]);
        ys.push((2.0 * x).sin() + (0.2 + 0.5 * x.abs()) * e);
    }
    Dataset::from_rows(rows, ys, format!("hetero-{seed}")).unwrap()
}

fn scaled_residue() -> Nonconformity<f64> {
    Nonconformity::custom("scaled-residue", |p: &PredictionOutput<f64>, y| {
        (y - p.center()).abs() / p.spread_hint()
    })
}

#[test]
fn full_confidence_covers_everything() {
    let cal = hetero(99, 1);
    let test = hetero(500, 2);
    let cov = coverage_estimate(&Nonconformity::AbsResidue, &base(), &cal, &test, 1.0).unwrap();
    assert_eq!(cov, 1.0);
}

#[test]
fn marginal_coverage_averages_to_the_finite_sample_level() {
    // averaged over many calibration draws the coverage is exactly (⌊cn⌋+1)/(n+1)
    let n = 99;
    let c = 0.9;
    let phi = Nonconformity::AbsResidue;
    let draws = 2000;
    let mut hits = 0usize;
    let mut total = 0usize;
    for d in 0..draws {
        let cal = hetero(n, 1000 + d);
        let test = hetero(10, 900_000 + d);
        let cp = ConformalIntervalPredictor::fit(phi.clone(), &base(), &cal).unwrap();
        for (x, y) in test.iter() {
            let (l, u) = cp.interval(&base(), x, c).unwrap();
            hits += usize::from(l <= y && y <= u);
            total += 1;
        }
    }
    let cov = hits as f64 / total as f64;
    let exact = 90.0 / 100.0;
    let slack = 3.0 * (0.09f64 / total as f64).sqrt() + 3.0 * 0.03 / (draws as f64).sqrt();
    assert!((cov - exact).abs() <= slack, "coverage {cov}");
}

#[test]
fn custom_score_uses_golden_section_minimizer() {
    let phi = scaled_residue();
    let pred = PredictionOutput::gaussian(1.5, 0.7).unwrap();
    assert!((phi.minimizer(&pred) - 1.5).abs() < 1e-6);
    let cp = ConformalIntervalPredictor::from_scores(phi, vec![0.5, 1.0, 1.5, 2.0]);
    let (l, u) = cp.interval_for(&pred, 0.5).unwrap();
    // threshold is the third smallest, 1.5 spreads of 0.7
    assert!((l - (1.5 - 1.05)).abs() < 1e-6 && (u - (1.5 + 1.05)).abs() < 1e-6, "{l} {u}");
}

#[test]
fn signed_score_examples() {
    let s = signed_score_from_nonconformity(&Nonconformity::AbsResidue);
    let p = PredictionOutput::point(0.0).unwrap();
    assert_eq!(s.evaluate(&p, -2.0).unwrap(), -2.0);
    assert_eq!(s.evaluate(&p, 3.0).unwrap(), 3.0);
    assert_eq!(s.evaluate(&p, 0.0).unwrap(), 0.0);
}

/// `H(U) - H(L)` always lies in `[⌊cn⌋/(n+1), (⌊cn⌋+1)/(n+1)]`, that is within
/// `[c - (1+c)/(n+1), c + (1-c)/(n+1)]`.
#[test]
fn credible_mass_of_the_conformal_interval_is_within_one_rank() {
    for phi in [Nonconformity::AbsResidue, scaled_residue()] {
        for (n, c) in [(19usize, 0.5), (99, 0.9), (19, 0.9), (99, 0.5), (99, 0.99)] {
            for seed in 0..5u64 {
                let cal = hetero(n, 50 + seed);
                let test = hetero(200, 70 + seed);
                let b = base();
                let h = RecalibratedPredictor::recalibrate(
                    Arc::new(b.clone()),
                    signed_score_from_nonconformity(&phi),
                    &Interpolator::Linear,
                    &cal,
                )
                .unwrap();
                let cp = ConformalIntervalPredictor::fit(phi.clone(), &b, &cal).unwrap();
                let n1 = (n + 1) as f64;
                let k = (c * n as f64 + 1e-9).floor();
                for (x, _) in test.iter() {
                    let pred = b.predict(x).unwrap();
                    let (l, u) = cp.interval_for(&pred, c).unwrap();
                    let cdf = h.conditional_from(pred).unwrap();
                    let mass = cdf.eval(u) - cdf.eval(l);
                    assert!(mass >= k / n1 - 1e-6 && mass <= (k + 1.0) / n1 + 1e-6, "{phi:?} n {n} c {c}: {mass}");
                    assert!(mass >= c - (1.0 + c) / n1 - 1e-6 && mass <= c + (1.0 - c) / n1 + 1e-6);
                }
            }
        }
    }
}

#[test]
fn credible_mass_check_reports_the_worst_deviation() {
    let cal = hetero(19, 3);
    let test = hetero(50, 4);
    let dev = credible_mass_deviation(&Nonconformity::AbsResidue, &base(), &cal, &test, 0.5).unwrap();
    assert!(dev >= 0.0 && dev <= 1.5 / 20.0 + 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn custom_score_is_unimodal_on_grids(m in -3.0f64..3.0, s in 0.1f64..3.0) {
        let phi = scaled_residue();
        let pred = PredictionOutput::gaussian(m, s).unwrap();
        let ymin = phi.minimizer(&pred);
        let grid: Vec<f64> = (0..200).map(|i| ymin - 10.0 + i as f64 * 0.1 + 0.05).collect();
        for w in grid.windows(2) {
            let (a, b) = (phi.evaluate(&pred, w[0]), phi.evaluate(&pred, w[1]));
            if w[1] <= ymin {
                prop_assert!(a > b);
            } else if w[0] >= ymin {
                prop_assert!(a < b);
            }
        }
    }

    #[test]
    fn signed_score_is_increasing_across_the_minimizer(f in -3.0f64..3.0, y1 in -10.0f64..10.0, d in 1e-6f64..5.0) {
        let s = signed_score_from_nonconformity(&scaled_residue());
        let p = PredictionOutput::gaussian(f, 0.5).unwrap();
        prop_assert!(s.evaluate(&p, y1).unwrap() < s.evaluate(&p, y1 + d).unwrap());
    }
}
