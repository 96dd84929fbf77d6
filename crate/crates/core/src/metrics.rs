//! Evaluation metrics for recalibrated predictors: NLL, CRPS, sharpness, debiased ECE
//! and PIT diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CalibError, Result};
use crate::interp::InterpolatorKind;
use crate::mcc::{RecalibratedCdf, RecalibratedPredictor};
use crate::numeric::adaptive_simpson;
use crate::prediction::CdfView;
use crate::scalar::{sort_floats, Scalar};

/// Absolute tolerance of the CRPS quadrature.
pub const CRPS_TOL: f64 = 1e-7;
/// Tail probability cut off by the CRPS quadrature range.
pub const CRPS_TAIL: f64 = 1e-6;
pub const ECE_RESAMPLES: usize = 200;
pub const PIT_BINS: usize = 20;

/// `{0.05, 0.10, ..., 0.95}`.
pub fn default_levels() -> Vec<f64> {
    (1..=19).map(|j| j as f64 * 0.05).collect()
}

/// Negative log density of `y`, `None` without a density.
pub fn nll_single<T: Scalar>(cdf: &RecalibratedCdf<'_, T>, y: T) -> Option<T> {
    cdf.density(y).map(|d| -d.ln())
}

/// Mean NLL over the test set; `None` for step maps.
pub fn nll<T: Scalar>(h: &RecalibratedPredictor<T>, test: &Dataset<T>) -> Result<Option<T>> {
    if h.map().kind().is_step() {
        return Ok(None);
    }
    let mut total = T::zero();
    for (x, y) in test.iter() {
        match nll_single(&h.conditional(x)?, y) {
            Some(v) => total += v,
            None => return Ok(None),
        }
    }
    Ok(Some(total / T::from_count(test.len())))
}

/// CRPS of any CDF by adaptive Simpson over `[quantile(1e-6), quantile(1-1e-6)]`,
/// widened to include the observation.
pub fn crps_quadrature<T: Scalar, C: CdfView<T> + ?Sized>(cdf: &C, y_obs: T) -> Result<T> {
    let lo = cdf.quantile(T::lit(CRPS_TAIL))?;
    let hi = cdf.quantile(T::one() - T::lit(CRPS_TAIL))?;
    let (lo, hi) = (lo.min(y_obs), hi.max(y_obs));
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(CalibError::InvalidPrediction("CRPS range is unbounded".into()));
    }
    let tol = T::lit(CRPS_TOL);
    let below = adaptive_simpson(&|y| cdf.cdf(y).powi(2), lo, y_obs, tol / T::lit(2.0));
    let above = adaptive_simpson(&|y| (T::one() - cdf.cdf(y)).powi(2), y_obs, hi, tol / T::lit(2.0));
    Ok(below + above)
}

/// `∫ (a + (b - a) t)² dt` over `t ∈ [0, 1]`.
fn linear_sq<T: Scalar>(a: T, b: T) -> T {
    (a * a + a * b + b * b) / T::lit(3.0)
}

/// Exact CRPS for step and piecewise-linear maps composed with a piecewise-affine
/// score; `None` when no closed form applies.
///
/// Step maps put the mass below the first and above the last knot at those knots.
pub fn crps_closed_form<T: Scalar>(cdf: &RecalibratedCdf<'_, T>, y_obs: T) -> Option<T> {
    let map = cdf.map();
    let kind = map.kind();
    let pred = cdf.prediction();
    let score = cdf.score();
    let mut breaks: Vec<T> = Vec::new();
    for &u in map.knots() {
        breaks.push(score.inverse(pred, u).ok()?);
    }
    match kind {
        InterpolatorKind::Naive | InterpolatorKind::Random => {}
        InterpolatorKind::Linear => breaks.extend(score.affine_breakpoints(pred)?),
        InterpolatorKind::Naf => return None,
    }
    if breaks.iter().any(|b| !b.is_finite()) {
        return None;
    }
    breaks.push(y_obs);
    sort_floats(&mut breaks);
    breaks.dedup();

    let step = kind.is_step();
    let first_knot = *breaks.first()?;
    let (k_lo, k_hi) = {
        let k = map.knots();
        (score.inverse(pred, k[0]).ok()?, score.inverse(pred, k[k.len() - 1]).ok()?)
    };
    // H restricted so step maps are proper on [k_lo, k_hi]
    let h = |y: T| -> T {
        if step {
            if y < k_lo {
                return T::zero();
            }
            if y >= k_hi {
                return T::one();
            }
        }
        cdf.eval(y)
    };
    let ind = |y: T| if y >= y_obs { T::one() } else { T::zero() };
    let mut total = T::zero();
    for w in breaks.windows(2) {
        let (l, r) = (w[0], w[1]);
        let len = r - l;
        if len <= T::zero() {
            continue;
        }
        let mid = l + len / T::lit(2.0);
        let i = ind(mid);
        if step {
            total += (h(mid) - i).powi(2) * len;
            continue;
        }
        let u_mid = cdf.score_at(mid);
        let knots = map.knots();
        let (u1, un) = (knots[0], knots[knots.len() - 1]);
        let slope = score.derivative(pred, mid).ok()?;
        let s = map.tail_scale()?;
        let kappa = slope / s;
        if u_mid < u1 {
            // H = H(r) exp(κ (y - r))
            let hr = h(r);
            let e1 = (-kappa * len).exp();
            let int_h = hr * (T::one() - e1) / kappa;
            let int_h2 = hr * hr * (T::one() - e1 * e1) / (T::lit(2.0) * kappa);
            total += int_h2 - T::lit(2.0) * i * int_h + i * i * len;
        } else if u_mid > un {
            // 1 - H = G(l) exp(-κ (y - l))
            let gl = T::one() - h(l);
            let j = T::one() - i;
            let e1 = (-kappa * len).exp();
            let int_g = gl * (T::one() - e1) / kappa;
            let int_g2 = gl * gl * (T::one() - e1 * e1) / (T::lit(2.0) * kappa);
            total += j * j * len - T::lit(2.0) * j * int_g + int_g2;
        } else {
            total += linear_sq(h(l) - i, h(r) - i) * len;
        }
    }
    if !step {
        // exponential tails beyond the outermost breakpoints
        let last = *breaks.last()?;
        let s = map.tail_scale()?;
        let k_left = score.derivative(pred, first_knot - T::one()).ok()? / s;
        let k_right = score.derivative(pred, last + T::one()).ok()? / s;
        let h0 = h(first_knot);
        let g1 = T::one() - h(last);
        total += h0 * h0 / (T::lit(2.0) * k_left) + g1 * g1 / (T::lit(2.0) * k_right);
    }
    Some(total)
}

/// CRPS of one recalibrated CDF: closed form where available, quadrature otherwise.
pub fn crps_single<T: Scalar>(cdf: &RecalibratedCdf<'_, T>, y_obs: T) -> Result<T> {
    match crps_closed_form(cdf, y_obs) {
        Some(v) => Ok(v),
        None => crps_quadrature(cdf, y_obs),
    }
}

pub fn crps<T: Scalar>(h: &RecalibratedPredictor<T>, test: &Dataset<T>) -> Result<T> {
    let mut total = T::zero();
    for (x, y) in test.iter() {
        total += crps_single(&h.conditional(x)?, y)?;
    }
    Ok(total / T::from_count(test.len()))
}

pub fn pit_values<T: Scalar>(h: &RecalibratedPredictor<T>, test: &Dataset<T>) -> Result<Vec<T>> {
    test.iter().map(|(x, y)| h.cdf_eval(x, y)).collect()
}

/// One-sample two-sided Kolmogorov-Smirnov statistic against Uniform(0, 1).
pub fn ks_uniformity<T: Scalar>(pits: &[T]) -> T {
    let mut v = pits.to_vec();
    sort_floats(&mut v);
    let m = T::from_count(v.len());
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let above = T::from_count(i + 1) / m - x;
            let below = x - T::from_count(i) / m;
            above.max(below)
        })
        .fold(T::zero(), T::max)
}

/// `mean_j |P̂(PIT <= p_j) - p_j|`.
pub fn raw_ece<T: Scalar>(pits: &[T], levels: &[f64]) -> T {
    let mut v = pits.to_vec();
    sort_floats(&mut v);
    level_deviations(&v, levels).into_iter().sum::<T>() / T::from_count(levels.len())
}

/// `|P̂(PIT <= p_j) - p_j|` per level, for sorted PITs.
fn level_deviations<T: Scalar>(sorted: &[T], levels: &[f64]) -> Vec<T> {
    let m = T::from_count(sorted.len());
    levels
        .iter()
        .map(|&p| {
            let p = T::lit(p);
            let count = sorted.partition_point(|&x| x <= p);
            (T::from_count(count) / m - p).abs()
        })
        .collect()
}

/// Raw ECE minus its expectation under perfectly uniform PITs of the same count,
/// estimated from seeded uniform resamples.
pub fn ece_debiased<T: Scalar>(pits: &[T], levels: &[f64], seed: u64) -> Result<T> {
    if pits.is_empty() {
        return Err(CalibError::EmptyInput("PIT values"));
    }
    let raw = raw_ece(pits, levels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut null = T::zero();
    let mut sample = vec![T::zero(); pits.len()];
    for _ in 0..ECE_RESAMPLES {
        for s in sample.iter_mut() {
            *s = T::lit(rng.gen::<f64>());
        }
        null += raw_ece(&sample, levels);
    }
    Ok(raw - null / T::from_count(ECE_RESAMPLES))
}

/// Mean predictive standard deviation (`None` for step maps) and mean width of the
/// centered 95% credible interval.
pub fn sharpness<T: Scalar>(h: &RecalibratedPredictor<T>, test: &Dataset<T>) -> Result<(Option<T>, T)> {
    let mut std_total = Some(T::zero());
    let mut width_total = T::zero();
    for (x, _) in test.iter() {
        let cdf = h.conditional(x)?;
        let (_, std) = cdf.moments()?;
        std_total = std_total.zip(std).map(|(a, b)| a + b);
        let (lo, hi) = cdf.credible_interval(T::lit(0.95))?;
        width_total += hi - lo;
    }
    let m = T::from_count(test.len());
    Ok((std_total.map(|s| s / m), width_total / m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub pass: bool,
    pub max_deviation: f64,
    pub bound: f64,
}

/// Checks `max_j |P̂(PIT <= p_j) - p_j| <= (1 + λ)/(n + 1) + mc_slack`.
pub fn calibration_bound_check<T: Scalar>(
    pits: &[T],
    lambda: f64,
    n: usize,
    levels: &[f64],
    mc_slack: f64,
) -> BoundCheck {
    let mut v = pits.to_vec();
    sort_floats(&mut v);
    let max_deviation = level_deviations(&v, levels)
        .into_iter()
        .map(|d| d.f64())
        .fold(0.0, f64::max);
    let bound = (1.0 + lambda) / (n as f64 + 1.0) + mc_slack;
    BoundCheck {
        pass: max_deviation <= bound,
        max_deviation,
        bound,
    }
}

/// Counts of PIT values in `bins` equal-width bins over `[0, 1]`.
pub fn pit_histogram<T: Scalar>(pits: &[T], bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    for &p in pits {
        let b = (p.f64() * bins as f64).floor();
        let b = if b.is_nan() { 0 } else { (b.max(0.0) as usize).min(bins - 1) };
        counts[b] += 1;
    }
    counts
}

/// One row of the report. `None` renders as `NA`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    #[serde(with = "na")]
    pub nll: Option<f64>,
    #[serde(with = "na")]
    pub crps: Option<f64>,
    #[serde(with = "na")]
    pub std: Option<f64>,
    #[serde(with = "na")]
    pub ci95_width: Option<f64>,
    #[serde(with = "na")]
    pub ece: Option<f64>,
    #[serde(with = "na")]
    pub pit_ks: Option<f64>,
}

fn finite(v: Option<f64>) -> Option<f64> {
    v.filter(|x| x.is_finite())
}

impl MetricRow {
    /// Every metric undefined, as reported for a failed cell.
    pub fn undefined() -> Self {
        Self {
            nll: None,
            crps: None,
            std: None,
            ci95_width: None,
            ece: None,
            pit_ks: None,
        }
    }

    /// Renders an optional value as a CSV cell.
    pub fn cell(v: Option<f64>) -> String {
        match finite(v) {
            Some(x) => format!("{x}"),
            None => "NA".to_string(),
        }
    }
}

/// Serde helpers writing undefined values as the string `"NA"`.
pub mod na {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v.filter(|x| x.is_finite()) {
            Some(x) => s.serialize_f64(x),
            None => s.serialize_str("NA"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Cell {
            Num(f64),
            Text(String),
        }
        match Cell::deserialize(d)? {
            Cell::Num(x) => Ok(Some(x)),
            Cell::Text(t) if t == "NA" => Ok(None),
            Cell::Text(t) => Err(de::Error::custom(format!("expected number or NA, got `{t}`"))),
        }
    }
}

/// All metrics for one recalibrated predictor on one test set, plus the PITs.
pub fn evaluate<T: Scalar>(
    h: &RecalibratedPredictor<T>,
    test: &Dataset<T>,
    ece_seed: u64,
) -> Result<(MetricRow, Vec<T>)> {
    if test.is_empty() {
        return Err(CalibError::EmptyInput("test set"));
    }
    let m = T::from_count(test.len());
    let step = h.map().kind().is_step();
    let mut nll_total = (!step).then_some(T::zero());
    let mut crps_total = T::zero();
    let mut std_total = (!step).then_some(T::zero());
    let mut width_total = T::zero();
    let mut pits = Vec::with_capacity(test.len());
    for (x, y) in test.iter() {
        let cdf = h.conditional(x)?;
        pits.push(cdf.eval(y));
        nll_total = nll_total.zip(nll_single(&cdf, y)).map(|(a, b)| a + b);
        crps_total += crps_single(&cdf, y)?;
        let (_, std) = cdf.moments()?;
        std_total = std_total.zip(std).map(|(a, b)| a + b);
        let (lo, hi) = cdf.credible_interval(T::lit(0.95))?;
        width_total += hi - lo;
    }
    let row = MetricRow {
        nll: finite(nll_total.map(|v| (v / m).f64())),
        crps: finite(Some((crps_total / m).f64())),
        std: finite(std_total.map(|v| (v / m).f64())),
        ci95_width: finite(Some((width_total / m).f64())),
        ece: finite(Some(ece_debiased(&pits, &default_levels(), ece_seed)?.f64())),
        pit_ks: finite(Some(ks_uniformity(&pits).f64())),
    };
    Ok((row, pits))
}
