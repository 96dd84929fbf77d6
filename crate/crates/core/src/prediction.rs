//! Base prediction types and the abstract CDF contract.

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::numeric::{generalized_inverse, normal_cdf, normal_pdf, normal_ppf};
use crate::scalar::Scalar;

/// A cumulative distribution function over the label space.
pub trait CdfView<T: Scalar> {
    /// `P(Y <= y)`, non-decreasing in `y` with values in `[0, 1]`.
    fn cdf(&self, y: T) -> T;

    /// A finite range that contains most of the mass; used to seed root brackets.
    fn support_hint(&self) -> (T, T);

    /// `None` when the mean does not exist (or is not tracked).
    fn mean(&self) -> Option<T>;

    fn std(&self) -> Option<T>;

    /// Generalized inverse `inf { y : cdf(y) >= p }`.
    fn quantile(&self, p: T) -> Result<T> {
        generalized_inverse(|y| self.cdf(y), p, self.support_hint())
    }

    /// Density at `y`, if the distribution has one.
    fn density(&self, _y: T) -> Option<T> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    lo: T,
    hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(CalibError::InvalidPrediction(format!(
                "interval requires finite lo < hi, got ({lo}, {hi})"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }
}

/// Predicted quantiles `values[k]` at probability `levels[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSet<T> {
    levels: Vec<T>,
    values: Vec<T>,
}

impl<T: Scalar> QuantileSet<T> {
    pub fn new(levels: Vec<T>, values: Vec<T>) -> Result<Self> {
        let bad = |msg: &str| Err(CalibError::InvalidPrediction(msg.to_string()));
        if levels.is_empty() || levels.len() != values.len() {
            return bad("quantile levels and values must be non-empty and equally long");
        }
        if levels.iter().any(|&a| !(a > T::zero() && a < T::one())) {
            return bad("quantile levels must lie in (0, 1)");
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return bad("quantile levels must be strictly increasing");
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[0] > w[1]) {
            return bad("quantile values must be finite and non-decreasing");
        }
        Ok(Self { levels, values })
    }

    pub fn levels(&self) -> &[T] {
        &self.levels
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Predicted median by linear interpolation of the quantile curve (clamped to the ends).
    pub fn median(&self) -> T {
        let half = T::lit(0.5);
        let k = self.levels.partition_point(|&a| a < half);
        if k == 0 {
            return self.values[0];
        }
        if k == self.levels.len() {
            return self.values[k - 1];
        }
        let (a0, a1) = (self.levels[k - 1], self.levels[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        v0 + (v1 - v0) * (half - a0) / (a1 - a0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian<T> {
    mean: T,
    std: T,
}

impl<T: Scalar> Gaussian<T> {
    pub fn new(mean: T, std: T) -> Result<Self> {
        if !mean.is_finite() {
            return Err(CalibError::InvalidPrediction("non-finite mean".into()));
        }
        if !(std > T::zero() && std.is_finite()) {
            return Err(CalibError::NonPositiveStd(std.f64()));
        }
        Ok(Self { mean, std })
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    pub fn std(&self) -> T {
        self.std
    }
}

impl<T: Scalar> CdfView<T> for Gaussian<T> {
    fn cdf(&self, y: T) -> T {
        normal_cdf((y - self.mean) / self.std)
    }

    fn support_hint(&self) -> (T, T) {
        let w = T::lit(4.0) * self.std;
        (self.mean - w, self.mean + w)
    }

    fn mean(&self) -> Option<T> {
        Some(self.mean)
    }

    fn std(&self) -> Option<T> {
        Some(self.std)
    }

    fn quantile(&self, p: T) -> Result<T> {
        Ok(self.mean + self.std * normal_ppf(p))
    }

    fn density(&self, y: T) -> Option<T> {
        Some(normal_pdf((y - self.mean) / self.std) / self.std)
    }
}

/// Weighted collection of member predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture<T> {
    members: Vec<PredictionOutput<T>>,
    weights: Vec<T>,
}

impl<T: Scalar> Mixture<T> {
    pub fn new(members: Vec<PredictionOutput<T>>, weights: Vec<T>) -> Result<Self> {
        if members.is_empty() {
            return Err(CalibError::EmptyEnsemble);
        }
        if members.len() != weights.len() {
            return Err(CalibError::InvalidPrediction(format!(
                "{} members but {} weights",
                members.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= T::zero() && w.is_finite())) {
            return Err(CalibError::InvalidPrediction("weights must be non-negative".into()));
        }
        if weights.iter().copied().sum::<T>() <= T::zero() {
            return Err(CalibError::InvalidPrediction("weights must not all be zero".into()));
        }
        Ok(Self { members, weights })
    }

    pub fn members(&self) -> &[PredictionOutput<T>] {
        &self.members
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Weights rescaled to sum to one.
    pub fn normalized_weights(&self) -> Vec<T> {
        let total: T = self.weights.iter().copied().sum();
        self.weights.iter().map(|&w| w / total).collect()
    }

    /// True when every member exposes a CDF, making the mixture a distribution.
    pub fn is_distributional(&self) -> bool {
        self.members.iter().all(|m| m.as_cdf().is_some())
    }

    fn member_cdfs(&self) -> impl Iterator<Item = (T, &dyn CdfView<T>)> + '_ {
        self.normalized_weights()
            .into_iter()
            .zip(&self.members)
            .filter_map(|(w, m)| m.as_cdf().map(|c| (w, c)))
    }
}

impl<T: Scalar> CdfView<T> for Mixture<T> {
    fn cdf(&self, y: T) -> T {
        self.member_cdfs().map(|(w, c)| w * c.cdf(y)).sum()
    }

    fn support_hint(&self) -> (T, T) {
        self.member_cdfs().fold(
            (T::infinity(), T::neg_infinity()),
            |(lo, hi), (_, c)| {
                let (a, b) = c.support_hint();
                (lo.min(a), hi.max(b))
            },
        )
    }

    fn mean(&self) -> Option<T> {
        self.member_cdfs()
            .map(|(w, c)| c.mean().map(|m| w * m))
            .sum::<Option<T>>()
    }

    /// Law of total variance over the members.
    fn std(&self) -> Option<T> {
        let mean = self.mean()?;
        let second: T = self
            .member_cdfs()
            .map(|(w, c)| {
                let (m, s) = (c.mean()?, c.std()?);
                Some(w * (s * s + m * m))
            })
            .sum::<Option<T>>()?;
        Some((second - mean * mean).max(T::zero()).sqrt())
    }

    fn density(&self, y: T) -> Option<T> {
        self.member_cdfs()
            .map(|(w, c)| c.density(y).map(|d| w * d))
            .sum()
    }
}

/// The five prediction types a base model can emit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PredictionOutput<T> {
    Point(T),
    Interval(Interval<T>),
    Quantiles(QuantileSet<T>),
    Gaussian(Gaussian<T>),
    Ensemble(Mixture<T>),
}

impl<T: Scalar> PredictionOutput<T> {
    pub fn point(value: T) -> Result<Self> {
        if !value.is_finite() {
            return Err(CalibError::InvalidPrediction("non-finite point prediction".into()));
        }
        Ok(Self::Point(value))
    }

    pub fn interval(lo: T, hi: T) -> Result<Self> {
        Interval::new(lo, hi).map(Self::Interval)
    }

    pub fn quantiles(levels: Vec<T>, values: Vec<T>) -> Result<Self> {
        QuantileSet::new(levels, values).map(Self::Quantiles)
    }

    pub fn gaussian(mean: T, std: T) -> Result<Self> {
        Gaussian::new(mean, std).map(Self::Gaussian)
    }

    pub fn ensemble(members: Vec<PredictionOutput<T>>, weights: Vec<T>) -> Result<Self> {
        Mixture::new(members, weights).map(Self::Ensemble)
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            Self::Point(_) => "point",
            Self::Interval(_) => "interval",
            Self::Quantiles(_) => "quantiles",
            Self::Gaussian(_) => "gaussian",
            Self::Ensemble(_) => "ensemble",
        }
    }

    /// The prediction's natural location: the point, interval midpoint, quantile
    /// median, Gaussian mean or mixture mean.
    pub fn center(&self) -> T {
        match self {
            Self::Point(v) => *v,
            Self::Interval(iv) => (iv.lo + iv.hi) / T::lit(2.0),
            Self::Quantiles(q) => q.median(),
            Self::Gaussian(g) => g.mean,
            Self::Ensemble(m) => {
                let w = m.normalized_weights();
                w.iter().zip(&m.members).map(|(&w, p)| w * p.center()).sum()
            }
        }
    }

    /// A rough scale used only for seeding root brackets.
    pub fn spread_hint(&self) -> T {
        match self {
            Self::Point(_) => T::one(),
            Self::Interval(iv) => iv.width(),
            Self::Quantiles(q) => {
                let v = q.values();
                (v[v.len() - 1] - v[0]).max(T::lit(1e-3))
            }
            Self::Gaussian(g) => g.std,
            Self::Ensemble(m) => m.std().unwrap_or_else(|| {
                m.members
                    .iter()
                    .map(|p| p.spread_hint())
                    .fold(T::zero(), T::max)
            }),
        }
    }

    /// The prediction viewed as a distribution, when it is one.
    pub fn as_cdf(&self) -> Option<&dyn CdfView<T>> {
        match self {
            Self::Gaussian(g) => Some(g),
            Self::Ensemble(m) if m.is_distributional() => Some(m),
            _ => None,
        }
    }
}
