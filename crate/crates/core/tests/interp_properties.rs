use mcc_core::interp::{fit_linear, fit_naf, fit_naive, fit_random, lambda_accuracy, MonotoneMap};
use mcc_core::naf::{loss, loss_and_gradient};
use mcc_core::NafConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect()
}

fn check_monotone(map: &MonotoneMap<f64>, rng: &mut ChaCha8Rng, lo: f64, hi: f64) {
    for _ in 0..10_000 {
        let a = rng.gen_range(lo..hi);
        let b = rng.gen_range(lo..hi);
        let (u1, u2) = if a <= b { (a, b) } else { (b, a) };
        let (q1, q2) = (map.eval(u1), map.eval(u2));
        assert!(q1 <= q2, "{:?}: q({u1}) = {q1} > q({u2}) = {q2}", map.kind());
        assert!((0.0..=1.0).contains(&q1) && (0.0..=1.0).contains(&q2));
    }
}

#[test]
fn every_fitter_is_monotone_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let scores = random_scores(&mut rng, 40);
    let naf = NafConfig {
        allow_unconverged: true,
        ..NafConfig::default()
    };
    let maps = [
        fit_naive(&scores).unwrap(),
        fit_linear(&scores).unwrap(),
        fit_random(&scores, 3).unwrap(),
        fit_naf(&scores, &naf).unwrap(),
    ];
    for m in &maps {
        check_monotone(m, &mut rng, -20.0, 20.0);
    }
}

#[test]
fn linear_hits_every_knot_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..100 {
        let n = 1 + (trial * 5) % 500;
        let scores = random_scores(&mut rng, n);
        let map = fit_linear(&scores).unwrap();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        for (i, &u) in sorted.iter().enumerate() {
            let want = (i + 1) as f64 / (n + 1) as f64;
            assert!((map.eval(u) - want).abs() <= 1e-15, "n {n} i {i}");
        }
        assert!(lambda_accuracy(&map, &scores) <= 1e-12);
    }
}

#[test]
fn random_map_is_reproducible_and_within_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let scores = random_scores(&mut rng, 50);
    let a = fit_random(&scores, 99).unwrap();
    let b = fit_random(&scores, 99).unwrap();
    assert_eq!(a.random_offset(), b.random_offset());
    for u in [-10.0, -1.0, 0.0, 2.5, 10.0] {
        assert_eq!(a.eval(u).to_bits(), b.eval(u).to_bits());
    }
    assert!(lambda_accuracy(&a, &scores) < 1.0);
}

#[test]
fn continuity_contracts() {
    let scores = [0.0f64, 1.0, 3.0, 4.5];
    let h = 1e-9f64;
    let random = fit_random(&scores, 1).unwrap();
    let linear = fit_linear(&scores).unwrap();
    // steps jump by 1/(n+1) at every knot
    for &k in &scores {
        assert!(random.eval(k) - random.eval(k - h) > 0.19);
        assert!((linear.eval(k + h) - linear.eval(k - h)).abs() < 1e-8);
    }
    // linear derivative is piecewise constant between knots
    let d1 = linear.derivative(1.5).unwrap();
    let d2 = linear.derivative(2.5).unwrap();
    assert!((d1 - d2).abs() < 1e-12);
    assert!(random.derivative(1.5).is_none());

    let naf = fit_naf(
        &scores,
        &NafConfig {
            allow_unconverged: true,
            ..NafConfig::default()
        },
    )
    .unwrap();
    for &k in &scores {
        let l = naf.derivative(k - 1e-6).unwrap();
        let r = naf.derivative(k + 1e-6).unwrap();
        assert!((l - r).abs() <= 1e-3 * l.max(r), "derivative jump at {k}");
    }
}

#[test]
fn naf_derivative_is_positive_and_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let scores = random_scores(&mut rng, 12);
    let map = fit_naf(
        &scores,
        &NafConfig {
            allow_unconverged: true,
            ..NafConfig::default()
        },
    )
    .unwrap();
    for _ in 0..100 {
        let u = rng.gen_range(-6.0..6.0);
        let d = map.derivative(u).unwrap();
        assert!(d > 0.0);
        let h = 1e-5;
        let fd = (map.eval(u + h) - map.eval(u - h)) / (2.0 * h);
        assert!((d - fd).abs() <= 1e-5 * d.abs().max(1e-3), "u {u}: {d} vs {fd}");
    }
}

#[test]
fn naf_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let z = [-1.2, -0.4, 0.1, 0.7, 1.5];
    let targets: Vec<f64> = (1..=5).map(|i| i as f64 / 6.0).collect();
    let h_units = 7;
    let params: Vec<f64> = (0..3 * h_units).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (_, grad) = loss_and_gradient(&params, &z, &targets);
    for j in 0..params.len() {
        let step = 1e-6;
        let mut p = params.clone();
        p[j] += step;
        let up = loss(&p, &z, &targets);
        p[j] -= 2.0 * step;
        let down = loss(&p, &z, &targets);
        let fd = (up - down) / (2.0 * step);
        let scale = grad[j].abs().max(fd.abs()).max(1e-8);
        assert!((grad[j] - fd).abs() / scale <= 1e-4, "param {j}: {} vs {fd}", grad[j]);
    }
}

#[test]
fn naf_reaches_target_on_small_sets() {
    let map = fit_naf(&[1.0, 2.0, 3.0], &NafConfig::default()).unwrap();
    assert!(lambda_accuracy(&map, &[1.0, 2.0, 3.0]) <= 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn step_maps_respect_lambda_contracts(scores in proptest::collection::vec(-100.0f64..100.0, 1..60), seed in any::<u64>()) {
        let naive = fit_naive(&scores).unwrap();
        prop_assert!(lambda_accuracy(&naive, &scores) <= 1.0 + 1e-12);
        let random = fit_random(&scores, seed).unwrap();
        prop_assert!(lambda_accuracy(&random, &scores) < 1.0);
    }

    #[test]
    fn linear_inverse_round_trips(scores in proptest::collection::vec(-100.0f64..100.0, 2..60), p in 0.001f64..0.999) {
        let map = fit_linear(&scores).unwrap();
        let u = map.inverse(p);
        prop_assert!((map.eval(u) - p).abs() < 1e-9);
    }
}
