//! Property tests for calibration scores: strict monotonicity in the label,
//! continuity of the quantile score, and the ensemble weighted sum.

use mcc_core::conformal::{signed_score_from_nonconformity, Nonconformity};
use mcc_core::scores::{ensemble_score, quantile_score, CDF_CLAMP};
use mcc_core::{CalibrationScore, PredictionOutput, QuantileSet};
use proptest::prelude::*;

fn gaussian() -> impl Strategy<Value = PredictionOutput<f64>> {
    (-3.0f64..3.0, 0.1f64..3.0).prop_map(|(m, s)| PredictionOutput::gaussian(m, s).unwrap())
}

fn quantiles() -> impl Strategy<Value = PredictionOutput<f64>> {
    (1usize..6)
        .prop_flat_map(|k| {
            (
                proptest::collection::vec(0.01f64..0.99, k),
                proptest::collection::vec(0.0f64..2.0, k),
                -3.0f64..3.0,
            )
        })
        .prop_filter_map("distinct levels", |(mut levels, gaps, start)| {
            levels.sort_by(f64::total_cmp);
            levels.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            let mut v = start;
            let values = levels
                .iter()
                .zip(&gaps)
                .map(|(_, g)| {
                    v += g;
                    v
                })
                .collect();
            PredictionOutput::quantiles(levels, values).ok()
        })
}

fn mixture() -> impl Strategy<Value = PredictionOutput<f64>> {
    proptest::collection::vec((-3.0f64..3.0, 0.2f64..2.0, 0.1f64..1.0), 1..5).prop_map(|m| {
        let members = m.iter().map(|&(mu, s, _)| PredictionOutput::gaussian(mu, s).unwrap()).collect();
        let weights = m.iter().map(|&(_, _, w)| w).collect();
        PredictionOutput::ensemble(members, weights).unwrap()
    })
}

fn ordered_pair() -> impl Strategy<Value = (f64, f64)> {
    (-10.0f64..10.0, 1e-6f64..5.0).prop_map(|(a, d)| (a, (a + d).min(10.0)))
        .prop_filter("strict", |(a, b)| a < b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn residue_is_strictly_increasing(f in -5.0f64..5.0, (y1, y2) in ordered_pair()) {
        let p = PredictionOutput::point(f).unwrap();
        let s = CalibrationScore::Residue;
        prop_assert!(s.evaluate(&p, y1).unwrap() < s.evaluate(&p, y2).unwrap());
    }

    #[test]
    fn interval_is_strictly_increasing(lo in -5.0f64..5.0, w in 0.01f64..4.0, (y1, y2) in ordered_pair()) {
        let p = PredictionOutput::interval(lo, lo + w).unwrap();
        let s = CalibrationScore::Interval;
        prop_assert!(s.evaluate(&p, y1).unwrap() < s.evaluate(&p, y2).unwrap());
    }

    #[test]
    fn zscore_is_strictly_increasing(p in gaussian(), (y1, y2) in ordered_pair()) {
        let s = CalibrationScore::ZScore;
        prop_assert!(s.evaluate(&p, y1).unwrap() < s.evaluate(&p, y2).unwrap());
    }

    #[test]
    fn cdf_is_increasing_outside_clamp(p in mixture(), (y1, y2) in ordered_pair()) {
        let s = CalibrationScore::Cdf;
        let (a, b) = (s.evaluate(&p, y1).unwrap(), s.evaluate(&p, y2).unwrap());
        prop_assert!(a <= b);
        let inside = |v: f64| v > CDF_CLAMP && v < 1.0 - CDF_CLAMP;
        // the mixture cdf may be flat to machine precision deep in its tails
        if inside(a) && inside(b) && y2 - y1 > 1e-3 {
            prop_assert!(a < b);
        }
    }

    #[test]
    fn quantile_is_strictly_increasing(p in quantiles(), (y1, y2) in ordered_pair()) {
        let s = CalibrationScore::Quantile;
        prop_assert!(s.evaluate(&p, y1).unwrap() < s.evaluate(&p, y2).unwrap());
    }

    #[test]
    fn ensemble_sum_is_strictly_increasing(p in mixture(), (y1, y2) in ordered_pair()) {
        let s = CalibrationScore::from_kind(mcc_core::ScoreKind::EnsembleSum);
        prop_assert!(s.evaluate(&p, y1).unwrap() < s.evaluate(&p, y2).unwrap());
    }

    #[test]
    fn signed_abs_residue_is_strictly_increasing(f in -5.0f64..5.0, (y1, y2) in ordered_pair()) {
        let p = PredictionOutput::point(f).unwrap();
        let s = signed_score_from_nonconformity(&Nonconformity::AbsResidue);
        prop_assert!(s.evaluate(&p, y1).unwrap() < s.evaluate(&p, y2).unwrap());
        prop_assert!((s.evaluate(&p, y1).unwrap().abs() - (y1 - f).abs()).abs() < 1e-12);
    }

    #[test]
    fn quantile_score_is_continuous_at_knots(p in quantiles()) {
        let PredictionOutput::Quantiles(q) = &p else { unreachable!() };
        let resolved = mcc_core::scores::resolve_quantile_ties(q.values());
        let q = QuantileSet::new(q.levels().to_vec(), resolved).unwrap();
        let max_slope = q
            .levels()
            .windows(2)
            .zip(q.values().windows(2))
            .map(|(a, v)| (a[1] - a[0]) / (v[1] - v[0]))
            .fold(1.0f64, f64::max);
        for &v in q.values() {
            for h in [1e-4, 1e-6, 1e-8] {
                let jump = (quantile_score(&q, v + h) - quantile_score(&q, v - h)).abs();
                prop_assert!(jump <= 2.0 * h * max_slope * (1.0 + 1e-6) + 1e-12, "jump {} at {} h {}", jump, v, h);
            }
        }
    }

    #[test]
    fn unit_weight_ensemble_equals_plain_sum(fs in proptest::collection::vec(-3.0f64..3.0, 1..6), y in -5.0f64..5.0) {
        let residue = CalibrationScore::Residue;
        let preds: Vec<_> = fs.iter().map(|&f| PredictionOutput::point(f).unwrap()).collect();
        let members: Vec<_> = preds.iter().map(|p| (&residue, p)).collect();
        let weights = vec![1.0; fs.len()];
        let plain: f64 = fs.iter().map(|f| y - f).sum();
        prop_assert_eq!(ensemble_score(&members, &weights, y).unwrap(), plain);
    }

    #[test]
    fn affine_inverse_round_trips(p in gaussian(), y in -10.0f64..10.0) {
        for s in [CalibrationScore::ZScore, CalibrationScore::Cdf] {
            let v = s.evaluate(&p, y).unwrap();
            if v > 1e-9 && v < 1.0 - 1e-9 || matches!(s, CalibrationScore::ZScore) {
                let back = s.inverse(&p, v).unwrap();
                prop_assert!((back - y).abs() < 1e-6 * (1.0 + y.abs()), "{:?} {} -> {}", s, y, back);
            }
        }
    }
}
