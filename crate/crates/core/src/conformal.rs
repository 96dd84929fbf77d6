//! Split conformal interval prediction with unimodal non-conformity scores, and the
//! signed calibration score that ties those intervals to recalibrated CDFs.

use std::fmt;
use std::sync::Arc;

use ndarray::ArrayView1;

use crate::data::Dataset;
use crate::error::{CalibError, Result};
use crate::interp::Interpolator;
use crate::mcc::{Predictor, RecalibratedPredictor};
use crate::numeric::{generalized_inverse, golden_section_min};
use crate::prediction::PredictionOutput;
use crate::scalar::{sort_floats, Scalar};
use crate::scores::CalibrationScore;

/// Golden-section tolerance for locating a minimizer numerically.
pub const MINIMIZER_TOL: f64 = 1e-9;

type EvalFn<T> = Arc<dyn Fn(&PredictionOutput<T>, T) -> T + Send + Sync>;
type MinFn<T> = Arc<dyn Fn(&PredictionOutput<T>) -> T + Send + Sync>;

/// A user-supplied non-conformity score, continuous and strictly unimodal in `y`.
#[derive(Clone)]
pub struct CustomNonconformity<T> {
    name: String,
    eval: EvalFn<T>,
    minimizer: Option<MinFn<T>>,
    /// Half-width of the golden-section bracket, in units of the prediction's spread.
    search_radius: T,
}

/// Non-conformity score `φ(f(x), y)`, minimized at `y_min(x)`.
#[derive(Clone)]
pub enum Nonconformity<T> {
    /// `|y - center(f(x))|`.
    AbsResidue,
    /// `|φ(f(x), y) - center|` for a calibration score `φ`.
    AbsScore {
        score: Box<CalibrationScore<T>>,
        center: T,
    },
    Custom(CustomNonconformity<T>),
}

impl<T: fmt::Debug> fmt::Debug for Nonconformity<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::AbsResidue => f.write_str("AbsResidue"),
            Self::AbsScore { score, center } => write!(f, "AbsScore({score:?}, {center:?})"),
            Self::Custom(c) => f
                .debug_struct("Custom")
                .field("name", &c.name)
                .field("analytic_minimizer", &c.minimizer.is_some())
                .finish(),
        }
    }
}

impl<T: Scalar> Nonconformity<T> {
    pub fn abs_score(score: CalibrationScore<T>, center: T) -> Self {
        Self::AbsScore {
            score: Box::new(score),
            center,
        }
    }

    pub fn custom(
        name: impl Into<String>,
        eval: impl Fn(&PredictionOutput<T>, T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self::Custom(CustomNonconformity {
            name: name.into(),
            eval: Arc::new(eval),
            minimizer: None,
            search_radius: T::lit(50.0),
        })
    }

    /// Supplies an analytic minimizer for a custom score.
    pub fn with_minimizer(
        self,
        minimizer: impl Fn(&PredictionOutput<T>) -> T + Send + Sync + 'static,
    ) -> Self {
        match self {
            Self::Custom(mut c) => {
                c.minimizer = Some(Arc::new(minimizer));
                Self::Custom(c)
            }
            other => other,
        }
    }

    pub fn with_search_radius(self, radius: T) -> Self {
        match self {
            Self::Custom(mut c) => {
                c.search_radius = radius;
                Self::Custom(c)
            }
            other => other,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Self::AbsResidue => "abs-residue",
            Self::AbsScore { .. } => "abs-score",
            Self::Custom(c) => &c.name,
        }
    }

    pub fn evaluate(&self, pred: &PredictionOutput<T>, y: T) -> T {
        match self {
            Self::AbsResidue => (y - pred.center()).abs(),
            Self::AbsScore { score, center } => {
                (score.evaluate(pred, y).unwrap_or(T::nan()) - *center).abs()
            }
            Self::Custom(c) => (c.eval)(pred, y),
        }
    }

    /// `y_min(x)`: analytic when available, otherwise golden-section search.
    pub fn minimizer(&self, pred: &PredictionOutput<T>) -> T {
        match self {
            Self::AbsResidue => pred.center(),
            Self::AbsScore { score, center } => score.inverse(pred, *center).unwrap_or(T::nan()),
            Self::Custom(c) => match &c.minimizer {
                Some(m) => m(pred),
                None => {
                    let mid = pred.center();
                    let r = c.search_radius * pred.spread_hint().max(T::lit(1e-6));
                    golden_section_min(
                        |y| (c.eval)(pred, y),
                        mid - r,
                        mid + r,
                        T::lit(MINIMIZER_TOL),
                    )
                }
            },
        }
    }

    /// `φ(x, y) - φ(x, y_min)`, negated left of the minimizer. Strictly increasing in `y`.
    pub fn signed(&self, pred: &PredictionOutput<T>, y: T) -> Result<T> {
        let m = self.minimizer(pred);
        let d = self.evaluate(pred, y) - self.evaluate(pred, m);
        Ok(if y <= m { -d } else { d })
    }

    /// Right derivative of [`signed`](Self::signed) in `y`.
    pub fn signed_derivative(&self, pred: &PredictionOutput<T>, y: T) -> Result<T> {
        match self {
            Self::AbsResidue => Ok(T::one()),
            Self::AbsScore { score, .. } => score.derivative(pred, y),
            Self::Custom(c) => {
                let m = self.minimizer(pred);
                let h = T::lit(1e-6) * (T::one() + y.abs());
                let d = ((c.eval)(pred, y + h) - (c.eval)(pred, y - h)) / (h + h);
                Ok(if y < m { -d } else { d })
            }
        }
    }

    pub fn signed_affine(&self, pred: &PredictionOutput<T>) -> Option<(T, T)> {
        match self {
            Self::AbsResidue => Some((T::one(), -pred.center())),
            Self::AbsScore { score, center } => {
                let (a, b) = score.affine_coefficients(pred)?;
                Some((a, b - *center))
            }
            Self::Custom(_) => None,
        }
    }

    /// Labels `(L, U)` with `φ(x, L) = φ(x, U) = tau`, one on each side of the minimizer.
    pub fn level_set(&self, pred: &PredictionOutput<T>, tau: T) -> Result<(T, T)> {
        if tau == T::infinity() {
            return Ok((T::neg_infinity(), T::infinity()));
        }
        let m = self.minimizer(pred);
        match self {
            Self::AbsResidue => return Ok((m - tau, m + tau)),
            Self::AbsScore { score, center } => {
                return Ok((
                    score.inverse(pred, *center - tau)?,
                    score.inverse(pred, *center + tau)?,
                ))
            }
            Self::Custom(_) => {}
        }
        let w = pred.spread_hint().max(T::lit(1e-6));
        let right = generalized_inverse(
            |t: T| self.evaluate(pred, m + t.max(T::zero())),
            tau,
            (T::zero(), w),
        )?;
        let left = generalized_inverse(
            |t: T| self.evaluate(pred, m - t.max(T::zero())),
            tau,
            (T::zero(), w),
        )?;
        Ok((m - left, m + right))
    }
}

/// The threshold non-conformity `a_(k+1)` with `k = ⌊c n⌋` for sorted `scores`;
/// infinite when `k >= n`.
pub fn conformal_threshold<T: Scalar>(sorted: &[T], c: T) -> Result<T> {
    if sorted.is_empty() {
        return Err(CalibError::EmptyInput("calibration non-conformities"));
    }
    if !(c > T::zero() && c <= T::one()) {
        return Err(CalibError::Config(format!("confidence {c} outside (0, 1]")));
    }
    let n = sorted.len();
    let k = (c * T::from_count(n) + T::lit(1e-9)).floor().to_usize().unwrap_or(n);
    Ok(if k >= n { T::infinity() } else { sorted[k] })
}

/// Interval predictor fitted on calibration non-conformities.
#[derive(Debug, Clone)]
pub struct ConformalIntervalPredictor<T> {
    phi: Nonconformity<T>,
    scores: Vec<T>,
}

impl<T: Scalar> ConformalIntervalPredictor<T> {
    pub fn fit<P: Predictor<T> + ?Sized>(
        phi: Nonconformity<T>,
        base: &P,
        cal: &Dataset<T>,
    ) -> Result<Self> {
        if cal.is_empty() {
            return Err(CalibError::EmptyInput("calibration set"));
        }
        let mut scores = Vec::with_capacity(cal.len());
        for (x, y) in cal.iter() {
            scores.push(phi.evaluate(&base.predict(x)?, y));
        }
        Ok(Self::from_scores(phi, scores))
    }

    pub fn from_scores(phi: Nonconformity<T>, mut scores: Vec<T>) -> Self {
        sort_floats(&mut scores);
        Self { phi, scores }
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn nonconformity(&self) -> &Nonconformity<T> {
        &self.phi
    }

    /// Closed interval `{ y : φ(x, y) <= a_(⌊cn⌋+1) }`.
    pub fn interval_for(&self, pred: &PredictionOutput<T>, c: T) -> Result<(T, T)> {
        let tau = conformal_threshold(&self.scores, c)?;
        let m = self.phi.minimizer(pred);
        if tau.is_finite() && self.phi.evaluate(pred, m) >= tau {
            return Err(CalibError::EmptyInterval(c.f64()));
        }
        self.phi.level_set(pred, tau)
    }

    pub fn interval<P: Predictor<T> + ?Sized>(
        &self,
        base: &P,
        x: ArrayView1<'_, T>,
        c: T,
    ) -> Result<(T, T)> {
        self.interval_for(&base.predict(x)?, c)
    }
}

/// Conformal interval at `x` for confidence `c`.
pub fn conformal_interval<T: Scalar, P: Predictor<T> + ?Sized>(
    phi: &Nonconformity<T>,
    base: &P,
    cal: &Dataset<T>,
    x: ArrayView1<'_, T>,
    c: T,
) -> Result<(T, T)> {
    ConformalIntervalPredictor::fit(phi.clone(), base, cal)?.interval(base, x, c)
}

/// Fraction of test labels that fall inside their conformal interval.
pub fn coverage_estimate<T: Scalar, P: Predictor<T> + ?Sized>(
    phi: &Nonconformity<T>,
    base: &P,
    cal: &Dataset<T>,
    test: &Dataset<T>,
    c: T,
) -> Result<T> {
    if test.is_empty() {
        return Err(CalibError::EmptyInput("test set"));
    }
    let cp = ConformalIntervalPredictor::fit(phi.clone(), base, cal)?;
    let mut hits = 0usize;
    for (x, y) in test.iter() {
        let (lo, hi) = cp.interval(base, x, c)?;
        if lo <= y && y <= hi {
            hits += 1;
        }
    }
    Ok(T::from_count(hits) / T::from_count(test.len()))
}

/// The calibration score obtained by signing `phi` around its minimizer.
pub fn signed_score_from_nonconformity<T: Scalar>(phi: &Nonconformity<T>) -> CalibrationScore<T> {
    CalibrationScore::Signed(phi.clone())
}

/// Recalibrates `base` with the signed score and linear interpolation, then returns
/// `max_x |H[x](U) - H[x](L) - c|` over the test features, `(L, U)` being the
/// conformal interval.
pub fn credible_mass_deviation<T: Scalar, P: Predictor<T> + Clone + 'static>(
    phi: &Nonconformity<T>,
    base: &P,
    cal: &Dataset<T>,
    test: &Dataset<T>,
    c: T,
) -> Result<T> {
    let h = RecalibratedPredictor::recalibrate(
        Arc::new(base.clone()),
        signed_score_from_nonconformity(phi),
        &Interpolator::Linear,
        cal,
    )?;
    let cp = ConformalIntervalPredictor::fit(phi.clone(), base, cal)?;
    let mut worst = T::zero();
    for (x, _) in test.iter() {
        let pred = base.predict(x)?;
        let (lo, hi) = cp.interval_for(&pred, c)?;
        let cdf = h.conditional_from(pred)?;
        let mass = cdf.eval(hi) - cdf.eval(lo);
        worst = worst.max((mass - c).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero() -> PredictionOutput<f64> {
        PredictionOutput::Point(0.0)
    }

    #[test]
    fn interval_from_enumerated_counts() {
        let cp = ConformalIntervalPredictor::from_scores(Nonconformity::AbsResidue, vec![3.0, 1.0, 2.0]);
        assert_eq!(cp.interval_for(&zero(), 2.0 / 3.0).unwrap(), (-3.0, 3.0));
        assert_eq!(cp.interval_for(&zero(), 1.0 / 3.0).unwrap(), (-2.0, 2.0));
        let (lo, hi) = cp.interval_for(&zero(), 1.0).unwrap();
        assert!(lo == f64::NEG_INFINITY && hi == f64::INFINITY);
    }

    #[test]
    fn interval_is_symmetric_about_center() {
        let cp = ConformalIntervalPredictor::from_scores(Nonconformity::AbsResidue, vec![0.5, 1.5]);
        let (lo, hi): (f64, f64) = cp.interval_for(&PredictionOutput::Point(4.2), 0.5).unwrap();
        assert!(((lo + hi) / 2.0 - 4.2).abs() < 1e-9);
    }

    #[test]
    fn empty_interval_below_resolution() {
        let cp = ConformalIntervalPredictor::from_scores(Nonconformity::AbsResidue, vec![0.0, 1.0]);
        assert!(matches!(
            cp.interval_for(&zero(), 0.3),
            Err(CalibError::EmptyInterval(_))
        ));
    }

    #[test]
    fn signed_score_flips_left_of_minimizer() {
        let phi = Nonconformity::AbsResidue;
        assert_eq!(phi.signed(&zero(), -2.0).unwrap(), -2.0);
        assert_eq!(phi.signed(&zero(), 3.0).unwrap(), 3.0);
        assert_eq!(phi.signed(&zero(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn custom_score_minimizer_and_level_set() {
        // asymmetric unimodal score with minimum at center + 1
        let phi = Nonconformity::custom("skewed", |p: &PredictionOutput<f64>, y| {
            let d = y - p.center() - 1.0;
            if d < 0.0 {
                -2.0 * d
            } else {
                d
            }
        });
        let pred = PredictionOutput::Point(0.0);
        assert!((phi.minimizer(&pred) - 1.0).abs() < 1e-7);
        let (lo, hi) = phi.level_set(&pred, 2.0).unwrap();
        assert!((lo - 0.0).abs() < 1e-6 && (hi - 3.0).abs() < 1e-6);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..200 {
            let y = -5.0 + 0.05 * k as f64;
            let s = phi.signed(&pred, y).unwrap();
            assert!(s > prev);
            prev = s;
        }
    }
}
