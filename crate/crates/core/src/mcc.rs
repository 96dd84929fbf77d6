//! Recalibration: compose a base predictor `f`, a calibration score `φ` and a fitted
//! monotone map `q` into the distribution predictor `H[x](y) = q(φ(f(x), y))`.

use std::collections::HashSet;
use std::fmt;
use std::marker::PhantomData;
use std::sync::Arc;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CalibError, Result};
use crate::interp::{lambda_accuracy, Interpolator, InterpolatorKind, MonotoneMap, MOMENT_NODES};
use crate::numeric::generalized_inverse;
use crate::prediction::{CdfView, PredictionOutput};
use crate::scalar::Scalar;
use crate::scores::{cdf_delta, CalibrationScore, ScoreKind};

/// Rows a base predictor was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_name: String,
    pub train_row_ids: Vec<usize>,
}

/// A base predictor `f`.
pub trait Predictor<T: Scalar>: Send + Sync {
    fn predict(&self, x: ArrayView1<'_, T>) -> Result<PredictionOutput<T>>;

    fn provenance(&self) -> Option<&Provenance> {
        None
    }
}

impl<T: Scalar, P: Predictor<T> + ?Sized> Predictor<T> for Arc<P> {
    fn predict(&self, x: ArrayView1<'_, T>) -> Result<PredictionOutput<T>> {
        (**self).predict(x)
    }

    fn provenance(&self) -> Option<&Provenance> {
        (**self).provenance()
    }
}

impl<T: Scalar, P: Predictor<T> + ?Sized> Predictor<T> for &P {
    fn predict(&self, x: ArrayView1<'_, T>) -> Result<PredictionOutput<T>> {
        (**self).predict(x)
    }

    fn provenance(&self) -> Option<&Provenance> {
        (**self).provenance()
    }
}

/// Wraps a closure as a [`Predictor`].
pub struct FnPredictor<T, F> {
    f: F,
    provenance: Option<Provenance>,
    _scalar: PhantomData<fn() -> T>,
}

impl<T, F: Clone> Clone for FnPredictor<T, F> {
    fn clone(&self) -> Self {
        Self {
            f: self.f.clone(),
            provenance: self.provenance.clone(),
            _scalar: PhantomData,
        }
    }
}

impl<T, F> FnPredictor<T, F>
where
    T: Scalar,
    F: Fn(ArrayView1<'_, T>) -> PredictionOutput<T> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self {
            f,
            provenance: None,
            _scalar: PhantomData,
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }
}

impl<T, F> Predictor<T> for FnPredictor<T, F>
where
    T: Scalar,
    F: Fn(ArrayView1<'_, T>) -> PredictionOutput<T> + Send + Sync,
{
    fn predict(&self, x: ArrayView1<'_, T>) -> Result<PredictionOutput<T>> {
        Ok((self.f)(x))
    }

    fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }
}

/// Named score/interpolator pairings.
pub fn named_method(name: &str) -> Option<(ScoreKind, InterpolatorKind)> {
    match name {
        "isotonic" => Some((ScoreKind::Cdf, InterpolatorKind::Linear)),
        "conformal-calibration" => Some((ScoreKind::Cdf, InterpolatorKind::Random)),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalDiagnostics {
    pub n: usize,
    pub tie_count: usize,
    /// Measured λ-accuracy of the map on the calibration scores.
    pub lambda: f64,
}

/// `H[x](y) = q(φ(f(x), y))`.
#[derive(Clone)]
pub struct RecalibratedPredictor<T: Scalar> {
    base: Arc<dyn Predictor<T>>,
    score: CalibrationScore<T>,
    map: MonotoneMap<T>,
    diagnostics: CalDiagnostics,
}

impl<T: Scalar> fmt::Debug for RecalibratedPredictor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RecalibratedPredictor")
            .field("score", &self.score)
            .field("map", &self.map.kind())
            .field("diagnostics", &self.diagnostics)
            .finish()
    }
}

fn check_provenance<T: Scalar>(base: &dyn Predictor<T>, cal: &Dataset<T>) -> Result<()> {
    let Some(prov) = base.provenance() else {
        return Ok(());
    };
    if prov.source_name != cal.name() {
        return Ok(());
    }
    let trained: HashSet<usize> = prov.train_row_ids.iter().copied().collect();
    let overlap = cal.row_ids().iter().filter(|r| trained.contains(r)).count();
    if overlap > 0 {
        return Err(CalibError::SplitProvenance {
            source_name: prov.source_name.clone(),
            overlap,
        });
    }
    Ok(())
}

impl<T: Scalar> RecalibratedPredictor<T> {
    /// Scores every calibration row and fits the interpolator on the scores.
    pub fn recalibrate(
        base: Arc<dyn Predictor<T>>,
        score: CalibrationScore<T>,
        interpolator: &Interpolator,
        cal: &Dataset<T>,
    ) -> Result<Self> {
        if cal.is_empty() {
            return Err(CalibError::EmptyInput("calibration set"));
        }
        check_provenance(base.as_ref(), cal)?;
        let mut preds = Vec::with_capacity(cal.len());
        for x in cal.features().rows() {
            preds.push(base.predict(x)?);
        }
        let labels = cal.labels().to_vec();
        Self::from_predictions(base, score, interpolator, &preds, &labels)
    }

    /// Like [`recalibrate`](Self::recalibrate) with the base predictions on the
    /// calibration rows already computed. Skips the provenance check.
    pub fn from_predictions(
        base: Arc<dyn Predictor<T>>,
        score: CalibrationScore<T>,
        interpolator: &Interpolator,
        preds: &[PredictionOutput<T>],
        labels: &[T],
    ) -> Result<Self> {
        if preds.is_empty() {
            return Err(CalibError::EmptyInput("calibration set"));
        }
        let mut scores = Vec::with_capacity(preds.len());
        for (p, &y) in preds.iter().zip(labels) {
            if !score.compatible(p) {
                return Err(CalibError::VariantMismatch {
                    score: score.name(),
                    variant: p.variant_name(),
                });
            }
            scores.push(score.evaluate(p, y)?);
        }
        let map = interpolator.fit(&scores)?;
        let diagnostics = CalDiagnostics {
            n: scores.len(),
            tie_count: map.tie_count(),
            lambda: lambda_accuracy(&map, &scores).f64(),
        };
        log::debug!(
            "recalibrated with {} + {}: n = {}, λ = {:.3e}",
            score.name(),
            map.kind(),
            diagnostics.n,
            diagnostics.lambda
        );
        Ok(Self {
            base,
            score,
            map,
            diagnostics,
        })
    }

    pub fn base(&self) -> &dyn Predictor<T> {
        self.base.as_ref()
    }

    pub fn score(&self) -> &CalibrationScore<T> {
        &self.score
    }

    pub fn map(&self) -> &MonotoneMap<T> {
        &self.map
    }

    pub fn diagnostics(&self) -> CalDiagnostics {
        self.diagnostics
    }

    /// The recalibrated CDF at features `x`.
    pub fn conditional(&self, x: ArrayView1<'_, T>) -> Result<RecalibratedCdf<'_, T>> {
        self.conditional_from(self.base.predict(x)?)
    }

    /// The recalibrated CDF for an already computed base prediction.
    pub fn conditional_from(&self, pred: PredictionOutput<T>) -> Result<RecalibratedCdf<'_, T>> {
        if !self.score.compatible(&pred) {
            return Err(CalibError::VariantMismatch {
                score: self.score.name(),
                variant: pred.variant_name(),
            });
        }
        self.score.evaluate(&pred, pred.center())?;
        Ok(RecalibratedCdf {
            pred,
            score: &self.score,
            map: &self.map,
        })
    }

    pub fn cdf_eval(&self, x: ArrayView1<'_, T>, y: T) -> Result<T> {
        Ok(self.conditional(x)?.eval(y))
    }

    pub fn cdf_inverse(&self, x: ArrayView1<'_, T>, p: T) -> Result<T> {
        self.conditional(x)?.inverse(p)
    }

    pub fn predictive_moments(&self, x: ArrayView1<'_, T>) -> Result<(T, Option<T>)> {
        self.conditional(x)?.moments()
    }

    pub fn credible_interval(&self, x: ArrayView1<'_, T>, c: T) -> Result<(T, T)> {
        self.conditional(x)?.credible_interval(c)
    }
}

/// `H[x]` for one fixed `x`.
#[derive(Debug, Clone)]
pub struct RecalibratedCdf<'a, T> {
    pred: PredictionOutput<T>,
    score: &'a CalibrationScore<T>,
    map: &'a MonotoneMap<T>,
}

impl<'a, T: Scalar> RecalibratedCdf<'a, T> {
    pub fn prediction(&self) -> &PredictionOutput<T> {
        &self.pred
    }

    pub fn score(&self) -> &'a CalibrationScore<T> {
        self.score
    }

    pub fn map(&self) -> &'a MonotoneMap<T> {
        self.map
    }

    pub fn score_at(&self, y: T) -> T {
        self.score.evaluate(&self.pred, y).unwrap_or(T::nan())
    }

    /// Under the clamped cdf score, labels whose base CDF lies outside the clamp get
    /// `H = 0` or `H = 1`. The tail mass of `q` then sits at the clamp boundaries
    /// and `H` is a proper distribution.
    fn clamped_side(&self, y: T) -> Option<T> {
        if !matches!(self.score, CalibrationScore::Cdf) {
            return None;
        }
        let p = self.pred.as_cdf()?.cdf(y);
        let delta = cdf_delta::<T>();
        if p < delta {
            Some(T::zero())
        } else if p >= T::one() - delta {
            Some(T::one())
        } else {
            None
        }
    }

    /// `q(φ(f(x), y))`.
    pub fn eval(&self, y: T) -> T {
        if let Some(v) = self.clamped_side(y) {
            return v;
        }
        self.map.eval(self.score_at(y))
    }

    /// Density by the chain rule; `None` for step maps.
    pub fn density(&self, y: T) -> Option<T> {
        if self.clamped_side(y).is_some() {
            return self.map.derivative(T::lit(0.5)).map(|_| T::zero());
        }
        let dq = self.map.derivative(self.score_at(y))?;
        let dphi = self.score.derivative(&self.pred, y).ok()?;
        Some(dq * dphi)
    }

    /// `φ^{-1}(u)`. Under the cdf score, scores beyond the clamp map to the clamp
    /// boundary labels.
    fn label_for_score(&self, u: T) -> Result<T> {
        if let CalibrationScore::Cdf = self.score {
            let delta = cdf_delta::<T>();
            return self.score.inverse(&self.pred, u.max(delta).min(T::one() - delta));
        }
        if !u.is_finite() {
            return Ok(u);
        }
        self.score.inverse(&self.pred, u)
    }

    /// Generalized inverse `inf { y : H(y) >= p }`, computed as `φ^{-1}(q^{-1}(p))`.
    pub fn inverse(&self, p: T) -> Result<T> {
        self.label_for_score(self.map.inverse(p))
    }

    /// The same inverse found by bracketed bisection on `H` directly.
    pub fn inverse_by_bisection(&self, p: T) -> Result<T> {
        generalized_inverse(|y| self.eval(y), p, self.support_hint())
    }

    /// Mean and standard deviation by midpoint quadrature on the quantile grid.
    /// The standard deviation is `None` for step maps.
    pub fn moments(&self) -> Result<(T, Option<T>)> {
        let mut ys = Vec::with_capacity(MOMENT_NODES);
        for &u in self.map.grid_inverse() {
            ys.push(self.label_for_score(u)?);
        }
        let m = T::from_count(MOMENT_NODES);
        let mean = ys.iter().copied().sum::<T>() / m;
        if self.map.kind().is_step() {
            return Ok((mean, None));
        }
        let var = ys.iter().map(|&y| (y - mean) * (y - mean)).sum::<T>() / m;
        Ok((mean, Some(var.sqrt())))
    }

    /// Centered credible interval `(H^{-1}((1-c)/2), H^{-1}((1+c)/2))`.
    pub fn credible_interval(&self, c: T) -> Result<(T, T)> {
        if !(c > T::zero() && c < T::one()) {
            return Err(CalibError::Config(format!("credible level {c} outside (0, 1)")));
        }
        let two = T::lit(2.0);
        Ok((self.inverse((T::one() - c) / two)?, self.inverse((T::one() + c) / two)?))
    }
}

impl<'a, T: Scalar> CdfView<T> for RecalibratedCdf<'a, T> {
    fn cdf(&self, y: T) -> T {
        self.eval(y)
    }

    fn support_hint(&self) -> (T, T) {
        let k = self.map.knots();
        let lo = self.label_for_score(k[0]).unwrap_or(T::nan());
        let hi = self.label_for_score(k[k.len() - 1]).unwrap_or(T::nan());
        if lo.is_finite() && hi.is_finite() && lo < hi {
            (lo, hi)
        } else {
            let (c, w) = (self.pred.center(), self.pred.spread_hint());
            (c - w, c + w)
        }
    }

    fn mean(&self) -> Option<T> {
        self.moments().ok().map(|m| m.0)
    }

    fn std(&self) -> Option<T> {
        self.moments().ok().and_then(|m| m.1)
    }

    fn quantile(&self, p: T) -> Result<T> {
        self.inverse(p)
    }

    fn density(&self, y: T) -> Option<T> {
        RecalibratedCdf::density(self, y)
    }
}
