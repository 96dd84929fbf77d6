//! Calibration scores: functions of (prediction, label) that are strictly increasing
//! in the label.
//!
//! Each score also knows its derivative in `y` (used for densities and NLL) and,
//! where one exists, a closed-form inverse in `y` (used for fast quantiles and for
//! exact piecewise CRPS).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::conformal::Nonconformity;
use crate::error::{CalibError, Result};
use crate::numeric::generalized_inverse;
use crate::prediction::{PredictionOutput, QuantileSet};
use crate::scalar::Scalar;

/// Clamp applied to the CDF score so it never reaches exactly 0 or 1.
pub const CDF_CLAMP: f64 = 1e-12;

/// Config-level score selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreKind {
    Residue,
    Interval,
    Cdf,
    ZScore,
    Quantile,
    EnsembleSum,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 6] = [
        ScoreKind::Residue,
        ScoreKind::Interval,
        ScoreKind::Cdf,
        ScoreKind::ZScore,
        ScoreKind::Quantile,
        ScoreKind::EnsembleSum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Residue => "residue",
            ScoreKind::Interval => "interval",
            ScoreKind::Cdf => "cdf",
            ScoreKind::ZScore => "zscore",
            ScoreKind::Quantile => "quantile",
            ScoreKind::EnsembleSum => "ensemble-sum",
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreKind {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        ScoreKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CalibError::Config(format!("unknown calibration score `{s}`")))
    }
}

/// A calibration score function.
#[derive(Debug, Clone)]
pub enum CalibrationScore<T> {
    /// `y - f(x)` for point predictions.
    Residue,
    /// `(y - lo) / (hi - lo)` for interval predictions.
    Interval,
    /// The predicted CDF at `y`, clamped into `[δ, 1-δ]`.
    Cdf,
    /// `(y - mean) / std` for Gaussian or mixture predictions.
    ZScore,
    /// Piecewise-linear interpolation of the quantile levels, slope-one tails.
    Quantile,
    /// `Σ_k w_k φ_k(f_k(x), y)` over ensemble members. A single member score and
    /// weight is applied to every member.
    EnsembleSum {
        members: Vec<CalibrationScore<T>>,
        weights: Vec<T>,
    },
    /// Signed version of a unimodal non-conformity score, negative left of its minimizer.
    Signed(Nonconformity<T>),
}

fn mismatch<T: Scalar>(score: &'static str, pred: &PredictionOutput<T>) -> CalibError {
    CalibError::VariantMismatch {
        score,
        variant: pred.variant_name(),
    }
}

impl<T: Scalar> CalibrationScore<T> {
    pub fn from_kind(kind: ScoreKind) -> Self {
        match kind {
            ScoreKind::Residue => Self::Residue,
            ScoreKind::Interval => Self::Interval,
            ScoreKind::Cdf => Self::Cdf,
            ScoreKind::ZScore => Self::ZScore,
            ScoreKind::Quantile => Self::Quantile,
            ScoreKind::EnsembleSum => Self::EnsembleSum {
                members: vec![Self::ZScore],
                weights: vec![T::one()],
            },
        }
    }

    pub fn ensemble_sum(members: Vec<CalibrationScore<T>>, weights: Vec<T>) -> Result<Self> {
        if members.is_empty() {
            return Err(CalibError::EmptyEnsemble);
        }
        if members.len() != weights.len() {
            return Err(CalibError::InvalidPrediction(
                "ensemble score needs one weight per member score".into(),
            ));
        }
        if weights.iter().any(|&w| !(w > T::zero())) {
            return Err(CalibError::InvalidPrediction(
                "ensemble score weights must be positive".into(),
            ));
        }
        Ok(Self::EnsembleSum { members, weights })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Residue => "residue",
            Self::Interval => "interval",
            Self::Cdf => "cdf",
            Self::ZScore => "zscore",
            Self::Quantile => "quantile",
            Self::EnsembleSum { .. } => "ensemble-sum",
            Self::Signed(_) => "signed",
        }
    }

    /// Whether this score accepts the prediction's variant.
    pub fn compatible(&self, pred: &PredictionOutput<T>) -> bool {
        match (self, pred) {
            (Self::Residue, PredictionOutput::Point(_)) => true,
            (Self::Interval, PredictionOutput::Interval(_)) => true,
            (Self::Quantile, PredictionOutput::Quantiles(_)) => true,
            (Self::Cdf | Self::ZScore, p) => p.as_cdf().is_some(),
            (Self::EnsembleSum { members, .. }, PredictionOutput::Ensemble(m)) => {
                (members.len() == 1 || members.len() == m.members().len())
                    && m.members()
                        .iter()
                        .enumerate()
                        .all(|(k, p)| members[k % members.len()].compatible(p))
            }
            (Self::Signed(_), _) => true,
            _ => false,
        }
    }

    /// `φ(pred, y)`.
    pub fn evaluate(&self, pred: &PredictionOutput<T>, y: T) -> Result<T> {
        match (self, pred) {
            (Self::Residue, PredictionOutput::Point(f)) => Ok(residue_score(*f, y)),
            (Self::Interval, PredictionOutput::Interval(iv)) => interval_score(iv.lo(), iv.hi(), y),
            (Self::Quantile, PredictionOutput::Quantiles(q)) => Ok(quantile_score(q, y)),
            (Self::Cdf, p) => {
                let cdf = p.as_cdf().ok_or_else(|| mismatch("cdf", p))?;
                Ok(clamp_cdf(cdf.cdf(y)))
            }
            (Self::ZScore, p) => {
                let (mean, std) = moments(p)?;
                Ok((y - mean) / std)
            }
            (Self::EnsembleSum { members, weights }, PredictionOutput::Ensemble(m)) => {
                self.check_ensemble(members, m.members().len(), pred)?;
                let mut total = T::zero();
                for (k, p) in m.members().iter().enumerate() {
                    let i = k % members.len();
                    total += weights[i] * members[i].evaluate(p, y)?;
                }
                Ok(total)
            }
            (Self::Signed(phi), p) => phi.signed(p, y),
            (s, p) => Err(mismatch(s.name(), p)),
        }
    }

    /// `∂φ/∂y`; the right derivative at kinks.
    pub fn derivative(&self, pred: &PredictionOutput<T>, y: T) -> Result<T> {
        match (self, pred) {
            (Self::Residue, PredictionOutput::Point(_)) => Ok(T::one()),
            (Self::Interval, PredictionOutput::Interval(iv)) => {
                interval_score(iv.lo(), iv.hi(), y)?;
                Ok(T::one() / iv.width())
            }
            (Self::Quantile, PredictionOutput::Quantiles(q)) => Ok(quantile_slope(q, y)),
            (Self::Cdf, p) => {
                let cdf = p.as_cdf().ok_or_else(|| mismatch("cdf", p))?;
                let raw = cdf.cdf(y);
                if raw != clamp_cdf(raw) {
                    return Ok(T::zero());
                }
                cdf.density(y)
                    .ok_or_else(|| CalibError::InvalidPrediction("prediction has no density".into()))
            }
            (Self::ZScore, p) => {
                let (_, std) = moments(p)?;
                Ok(T::one() / std)
            }
            (Self::EnsembleSum { members, weights }, PredictionOutput::Ensemble(m)) => {
                self.check_ensemble(members, m.members().len(), pred)?;
                let mut total = T::zero();
                for (k, p) in m.members().iter().enumerate() {
                    let i = k % members.len();
                    total += weights[i] * members[i].derivative(p, y)?;
                }
                Ok(total)
            }
            (Self::Signed(phi), p) => phi.signed_derivative(p, y),
            (s, p) => Err(mismatch(s.name(), p)),
        }
    }

    /// Slope and intercept when `φ(pred, ·)` is affine on the whole real line.
    pub fn affine_coefficients(&self, pred: &PredictionOutput<T>) -> Option<(T, T)> {
        match (self, pred) {
            (Self::Residue, PredictionOutput::Point(f)) => Some((T::one(), -*f)),
            (Self::Interval, PredictionOutput::Interval(iv)) if iv.width() >= T::lit(1e-12) => {
                let w = iv.width();
                Some((T::one() / w, -iv.lo() / w))
            }
            (Self::ZScore, p) => {
                let (mean, std) = moments(p).ok()?;
                Some((T::one() / std, -mean / std))
            }
            (Self::EnsembleSum { members, weights }, PredictionOutput::Ensemble(m)) => {
                if !(members.len() == 1 || members.len() == m.members().len()) {
                    return None;
                }
                let mut acc = (T::zero(), T::zero());
                for (k, p) in m.members().iter().enumerate() {
                    let i = k % members.len();
                    let (a, b) = members[i].affine_coefficients(p)?;
                    acc = (acc.0 + weights[i] * a, acc.1 + weights[i] * b);
                }
                Some(acc)
            }
            (Self::Signed(phi), p) => phi.signed_affine(p),
            _ => None,
        }
    }

    /// Label values where `φ(pred, ·)` changes slope, when it is piecewise affine.
    /// `Some(vec![])` means globally affine; `None` means not piecewise affine.
    pub fn affine_breakpoints(&self, pred: &PredictionOutput<T>) -> Option<Vec<T>> {
        if self.affine_coefficients(pred).is_some() {
            return Some(Vec::new());
        }
        match (self, pred) {
            (Self::Quantile, PredictionOutput::Quantiles(q)) => {
                Some(resolve_quantile_ties(q.values()))
            }
            _ => None,
        }
    }

    /// The label `y` with `φ(pred, y) = s`. Closed form where available, otherwise a
    /// bracketed bisection over `y`.
    pub fn inverse(&self, pred: &PredictionOutput<T>, s: T) -> Result<T> {
        if let Some((a, b)) = self.affine_coefficients(pred) {
            return Ok((s - b) / a);
        }
        match (self, pred) {
            (Self::Quantile, PredictionOutput::Quantiles(q)) => Ok(quantile_score_inverse(q, s)),
            (Self::Cdf, p) => {
                let cdf = p.as_cdf().ok_or_else(|| mismatch("cdf", p))?;
                cdf.quantile(s)
            }
            _ => {
                let c = pred.center();
                let w = pred.spread_hint();
                generalized_inverse(
                    |y| self.evaluate(pred, y).unwrap_or(T::nan()),
                    s,
                    (c - w, c + w),
                )
            }
        }
    }

    fn check_ensemble(
        &self,
        members: &[CalibrationScore<T>],
        n: usize,
        pred: &PredictionOutput<T>,
    ) -> Result<()> {
        if members.is_empty() {
            return Err(CalibError::EmptyEnsemble);
        }
        if members.len() != 1 && members.len() != n {
            return Err(mismatch("ensemble-sum", pred));
        }
        Ok(())
    }
}

/// The clamp actually applied at precision `T`.
pub(crate) fn cdf_delta<T: Scalar>() -> T {
    T::lit(CDF_CLAMP).max(T::epsilon())
}

fn clamp_cdf<T: Scalar>(p: T) -> T {
    let delta = cdf_delta::<T>();
    p.max(delta).min(T::one() - delta)
}

fn moments<T: Scalar>(pred: &PredictionOutput<T>) -> Result<(T, T)> {
    let cdf = pred.as_cdf().ok_or_else(|| mismatch("zscore", pred))?;
    let (mean, std) = match (cdf.mean(), cdf.std()) {
        (Some(m), Some(s)) => (m, s),
        _ => return Err(mismatch("zscore", pred)),
    };
    if !(std > T::zero()) {
        return Err(CalibError::NonPositiveStd(std.f64()));
    }
    Ok((mean, std))
}

pub fn residue_score<T: Scalar>(prediction: T, y: T) -> T {
    y - prediction
}

pub fn interval_score<T: Scalar>(lo: T, hi: T, y: T) -> Result<T> {
    let width = hi - lo;
    if !(width >= T::lit(1e-12)) {
        return Err(CalibError::DegenerateInterval(width.f64()));
    }
    Ok((y - lo) / width)
}

pub fn cdf_score<T: Scalar>(pred: &PredictionOutput<T>, y: T) -> Result<T> {
    CalibrationScore::Cdf.evaluate(pred, y)
}

pub fn zscore_score<T: Scalar>(pred: &PredictionOutput<T>, y: T) -> Result<T> {
    CalibrationScore::ZScore.evaluate(pred, y)
}

/// Makes predicted quantile values strictly increasing by nudging tied values up.
pub fn resolve_quantile_ties<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut out = values.to_vec();
    for k in 1..out.len() {
        let floor = out[k - 1];
        let nudge = T::lit(1e-9).max(floor.abs() * T::epsilon() * T::lit(4.0));
        if out[k] < floor + nudge {
            out[k] = floor + nudge;
        }
    }
    out
}

/// Three-branch quantile score: `α_1 + y - f_1` below the first quantile, linear
/// interpolation of the levels between quantiles, `α_K + y - f_K` above the last.
pub fn quantile_score<T: Scalar>(q: &QuantileSet<T>, y: T) -> T {
    let alpha = q.levels();
    let f = resolve_quantile_ties(q.values());
    let k_max = f.len() - 1;
    if y <= f[0] {
        return alpha[0] + y - f[0];
    }
    if y > f[k_max] {
        return alpha[k_max] + y - f[k_max];
    }
    // f[k] < y <= f[k+1]
    let k = f.partition_point(|&v| v < y) - 1;
    alpha[k] + (y - f[k]) / (f[k + 1] - f[k]) * (alpha[k + 1] - alpha[k])
}

fn quantile_slope<T: Scalar>(q: &QuantileSet<T>, y: T) -> T {
    let alpha = q.levels();
    let f = resolve_quantile_ties(q.values());
    let k_max = f.len() - 1;
    if y < f[0] || y >= f[k_max] {
        return T::one();
    }
    let k = f.partition_point(|&v| v <= y) - 1;
    (alpha[k + 1] - alpha[k]) / (f[k + 1] - f[k])
}

fn quantile_score_inverse<T: Scalar>(q: &QuantileSet<T>, s: T) -> T {
    let alpha = q.levels();
    let f = resolve_quantile_ties(q.values());
    let k_max = f.len() - 1;
    if s <= alpha[0] {
        return f[0] + s - alpha[0];
    }
    if s > alpha[k_max] {
        return f[k_max] + s - alpha[k_max];
    }
    let k = alpha.partition_point(|&a| a < s) - 1;
    f[k] + (s - alpha[k]) / (alpha[k + 1] - alpha[k]) * (f[k + 1] - f[k])
}

/// Weighted sum of member scores, `Σ_k w_k φ_k(pred_k, y)`.
pub fn ensemble_score<T: Scalar>(
    members: &[(&CalibrationScore<T>, &PredictionOutput<T>)],
    weights: &[T],
    y: T,
) -> Result<T> {
    if members.is_empty() {
        return Err(CalibError::EmptyEnsemble);
    }
    if members.len() != weights.len() {
        return Err(CalibError::InvalidPrediction(
            "ensemble score needs one weight per member".into(),
        ));
    }
    let mut total = T::zero();
    for ((score, pred), &w) in members.iter().zip(weights) {
        total += w * score.evaluate(pred, y)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(v: f64) -> PredictionOutput<f64> {
        PredictionOutput::point(v).unwrap()
    }

    fn gauss(m: f64, s: f64) -> PredictionOutput<f64> {
        PredictionOutput::gaussian(m, s).unwrap()
    }

    #[test]
    fn residue_examples() {
        let s = CalibrationScore::Residue;
        assert_eq!(s.evaluate(&point(2.0), 3.5).unwrap(), 1.5);
        assert_eq!(s.evaluate(&point(2.0), 2.0).unwrap(), 0.0);
        let a = s.evaluate(&point(2.0), 2.1).unwrap();
        let b = s.evaluate(&point(2.0), 2.2).unwrap();
        assert!(a < b);
        assert!(matches!(
            s.evaluate(&gauss(0.0, 1.0), 1.0),
            Err(CalibError::VariantMismatch { .. })
        ));
    }

    #[test]
    fn interval_examples() {
        let p = PredictionOutput::interval(2.0, 4.0).unwrap();
        let s = CalibrationScore::Interval;
        assert_eq!(s.evaluate(&p, 4.0).unwrap(), 1.0);
        assert_eq!(s.evaluate(&p, 2.0).unwrap(), 0.0);
        assert_eq!(s.evaluate(&p, 3.0).unwrap(), 0.5);
        assert!(matches!(
            interval_score(1.0, 1.0 + 1e-13, 1.0),
            Err(CalibError::DegenerateInterval(_))
        ));
    }

    #[test]
    fn cdf_examples() {
        let s = CalibrationScore::Cdf;
        assert!((s.evaluate(&gauss(0.0, 1.0), 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(s.evaluate(&gauss(0.0, 1.0), 50.0).unwrap(), 1.0 - CDF_CLAMP);
        assert_eq!(s.evaluate(&gauss(0.0, 1.0), -50.0).unwrap(), CDF_CLAMP);
        let mix =
            PredictionOutput::ensemble(vec![gauss(-1.0, 1.0), gauss(1.0, 1.0)], vec![1.0, 1.0])
                .unwrap();
        assert!((s.evaluate(&mix, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(s.evaluate(&point(0.0), 0.0).is_err());
    }

    #[test]
    fn zscore_examples() {
        let s = CalibrationScore::ZScore;
        assert_eq!(s.evaluate(&gauss(1.0, 2.0), 5.0).unwrap(), 2.0);
        assert_eq!(s.evaluate(&gauss(1.0, 2.0), 1.0).unwrap(), 0.0);
        let mix =
            PredictionOutput::ensemble(vec![gauss(0.0, 1.0), gauss(2.0, 1.0)], vec![1.0, 1.0])
                .unwrap();
        assert!(s.evaluate(&mix, 1.0).unwrap().abs() < 1e-15);
        // mixture std is sqrt(2)
        assert!((s.derivative(&mix, 0.0).unwrap() - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn quantile_examples() {
        let p = PredictionOutput::quantiles(vec![0.25, 0.75], vec![1.0, 3.0]).unwrap();
        let s = CalibrationScore::Quantile;
        assert_eq!(s.evaluate(&p, 2.0).unwrap(), 0.5);
        assert_eq!(s.evaluate(&p, 0.0).unwrap(), -0.75);
        assert_eq!(s.evaluate(&p, 4.0).unwrap(), 1.75);
        // at each knot the score equals the level
        assert_eq!(s.evaluate(&p, 1.0).unwrap(), 0.25);
        assert_eq!(s.evaluate(&p, 3.0).unwrap(), 0.75);
    }

    #[test]
    fn quantile_ties_are_resolved() {
        let p = PredictionOutput::quantiles(vec![0.2f64, 0.5, 0.8], vec![1.0, 1.0, 2.0]).unwrap();
        let s = CalibrationScore::Quantile;
        let a = s.evaluate(&p, 0.999).unwrap();
        let b = s.evaluate(&p, 1.0).unwrap();
        let c = s.evaluate(&p, 1.5).unwrap();
        assert!(a < b && b < c);
        assert!(c.is_finite());
    }

    #[test]
    fn quantile_inverse_round_trips() {
        let p = PredictionOutput::quantiles(vec![0.1f64, 0.4, 0.9], vec![-1.0, 0.5, 4.0]).unwrap();
        let s = CalibrationScore::Quantile;
        for y in [-5.0, -1.0, -0.3, 0.5, 2.0, 4.0, 9.0] {
            let v = s.evaluate(&p, y).unwrap();
            assert!((s.inverse(&p, v).unwrap() - y).abs() < 1e-12, "y={y}");
        }
    }

    #[test]
    fn ensemble_examples() {
        let r = CalibrationScore::Residue;
        let (p1, p2) = (point(1.0), point(0.0));
        // member scores at y=2: 1.0 and 2.0
        let members = [(&r, &p1), (&r, &p2)];
        assert_eq!(ensemble_score(&members, &[1.0, 1.0], 2.0).unwrap(), 3.0);
        assert_eq!(ensemble_score(&members, &[2.0, 1.0], 2.0).unwrap(), 4.0);
        assert_eq!(
            ensemble_score(&members[..1], &[1.0], 2.0).unwrap(),
            r.evaluate(&p1, 2.0).unwrap()
        );
        assert!(matches!(
            ensemble_score::<f64>(&[], &[], 2.0),
            Err(CalibError::EmptyEnsemble)
        ));
    }

    #[test]
    fn ensemble_sum_over_mixture_members() {
        let mix =
            PredictionOutput::ensemble(vec![gauss(0.0, 1.0), gauss(2.0, 2.0)], vec![1.0, 3.0])
                .unwrap();
        let s = CalibrationScore::<f64>::from_kind(ScoreKind::EnsembleSum);
        // z-scores at y=4: 4 and 1
        assert_eq!(s.evaluate(&mix, 4.0).unwrap(), 5.0);
        assert_eq!(s.derivative(&mix, 4.0).unwrap(), 1.5);
        assert!((s.inverse(&mix, 5.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(CalibrationScore::<f64>::ensemble_sum(vec![], vec![]).is_err());
        assert!(CalibrationScore::ensemble_sum(vec![CalibrationScore::ZScore], vec![0.0]).is_err());
    }

    #[test]
    fn kinds_parse_from_config_strings() {
        for k in ScoreKind::ALL {
            assert_eq!(k.as_str().parse::<ScoreKind>().unwrap(), k);
        }
        assert!("bogus".parse::<ScoreKind>().is_err());
    }
}
