//! Interpolation algorithms: fit a non-decreasing map `q: ℝ → [0, 1]` that sends the
//! i-th smallest calibration score close to `i / (n + 1)`.
//!
//! | kind   | continuity        | λ            |
//! |--------|-------------------|--------------|
//! | naive  | step              | ≤ 1          |
//! | random | step              | < 1 (a.s.)   |
//! | linear | C⁰, piecewise C¹  | 0            |
//! | naf    | C^∞               | fitted (≈ 0) |

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::naf::{self, NafConfig, NafNet};
use crate::scalar::{median, sort_floats, Scalar};

/// Number of midpoint nodes used for moment quadrature on the quantile grid.
pub const MOMENT_NODES: usize = 1000;

/// Midpoint nodes `p_j = (j + 0.5) / 1000`.
pub fn moment_grid<T: Scalar>() -> impl Iterator<Item = T> {
    (0..MOMENT_NODES).map(|j| T::lit((j as f64 + 0.5) / MOMENT_NODES as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InterpolatorKind {
    Naive,
    Linear,
    Random,
    Naf,
}

impl InterpolatorKind {
    pub const ALL: [InterpolatorKind; 4] = [
        InterpolatorKind::Naive,
        InterpolatorKind::Linear,
        InterpolatorKind::Random,
        InterpolatorKind::Naf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InterpolatorKind::Naive => "naive",
            InterpolatorKind::Linear => "linear",
            InterpolatorKind::Random => "random",
            InterpolatorKind::Naf => "naf",
        }
    }

    /// Step maps have no density and no finite standard deviation.
    pub fn is_step(self) -> bool {
        matches!(self, InterpolatorKind::Naive | InterpolatorKind::Random)
    }
}

impl fmt::Display for InterpolatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InterpolatorKind {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        InterpolatorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CalibError::Config(format!("unknown interpolator `{s}`")))
    }
}

/// A fully specified interpolation algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Interpolator {
    Naive,
    Linear,
    Random { seed: u64 },
    Naf(NafConfig),
}

impl Interpolator {
    pub fn from_kind(kind: InterpolatorKind, seed: u64, naf: &NafConfig) -> Self {
        match kind {
            InterpolatorKind::Naive => Self::Naive,
            InterpolatorKind::Linear => Self::Linear,
            InterpolatorKind::Random => Self::Random { seed },
            InterpolatorKind::Naf => Self::Naf(naf.clone()),
        }
    }

    pub fn kind(&self) -> InterpolatorKind {
        match self {
            Self::Naive => InterpolatorKind::Naive,
            Self::Linear => InterpolatorKind::Linear,
            Self::Random { .. } => InterpolatorKind::Random,
            Self::Naf(_) => InterpolatorKind::Naf,
        }
    }

    /// Fits the map. NAF fits that miss their target are accepted only when the
    /// config allows it.
    pub fn fit<T: Scalar>(&self, scores: &[T]) -> Result<MonotoneMap<T>> {
        match self {
            Self::Naive => fit_naive(scores),
            Self::Linear => fit_linear(scores),
            Self::Random { seed } => fit_random(scores, *seed),
            Self::Naf(cfg) if cfg.allow_unconverged => {
                fit_naf_best_effort(scores, cfg).map(|(m, _)| m)
            }
            Self::Naf(cfg) => fit_naf(scores, cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Shape<T> {
    Naive,
    Linear { tail_scale: T },
    Random { offset: T },
    Naf(NafNet<T>),
}

/// A fitted non-decreasing map into `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneMap<T> {
    knots: Vec<T>,
    ties: usize,
    shape: Shape<T>,
    /// `q^{-1}` at the moment quadrature nodes.
    grid_inverse: Vec<T>,
}

fn sorted_knots<T: Scalar>(scores: &[T]) -> Result<(Vec<T>, usize)> {
    if scores.is_empty() {
        return Err(CalibError::EmptyInput("calibration scores"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(CalibError::InvalidDataset("non-finite calibration score".into()));
    }
    let mut knots = scores.to_vec();
    sort_floats(&mut knots);
    let ties = knots.windows(2).filter(|w| w[0] == w[1]).count();
    if ties > 0 {
        log::warn!("{ties} tied calibration scores; calibration guarantees assume distinct scores");
    }
    Ok((knots, ties))
}

/// Adds uniform noise of magnitude `1e-9 * range` to break score ties.
pub fn jitter_ties<T: Scalar>(scores: &[T], seed: u64) -> Vec<T> {
    let (lo, hi) = scores
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(a, b), &s| (a.min(s), b.max(s)));
    let range = if hi > lo { hi - lo } else { T::one() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scores
        .iter()
        .map(|&s| s + T::lit(1e-9) * range * T::lit(rng.gen::<f64>() - 0.5))
        .collect()
}

fn build<T: Scalar>(knots: Vec<T>, ties: usize, shape: Shape<T>) -> MonotoneMap<T> {
    let mut map = MonotoneMap {
        knots,
        ties,
        shape,
        grid_inverse: Vec::new(),
    };
    map.grid_inverse = moment_grid().map(|p| map.inverse(p)).collect();
    map
}

/// Step map `q(u) = i/n` on `[u_(i), u_(i+1))`.
pub fn fit_naive<T: Scalar>(scores: &[T]) -> Result<MonotoneMap<T>> {
    let (knots, ties) = sorted_knots(scores)?;
    Ok(build(knots, ties, Shape::Naive))
}

/// Piecewise-linear map through `(u_(i), i/(n+1))` with exponential tails.
pub fn fit_linear<T: Scalar>(scores: &[T]) -> Result<MonotoneMap<T>> {
    let (knots, ties) = sorted_knots(scores)?;
    let tail_scale = tail_scale(&knots);
    Ok(build(knots, ties, Shape::Linear { tail_scale }))
}

/// Step map `q(u) = (i + U)/(n+1)` with one uniform draw `U` from `seed`.
pub fn fit_random<T: Scalar>(scores: &[T], seed: u64) -> Result<MonotoneMap<T>> {
    let offset = T::lit(ChaCha8Rng::seed_from_u64(seed).gen::<f64>());
    fit_random_with_offset(scores, offset)
}

/// [`fit_random`] with the uniform draw supplied directly.
pub fn fit_random_with_offset<T: Scalar>(scores: &[T], offset: T) -> Result<MonotoneMap<T>> {
    if !(offset >= T::zero() && offset <= T::one()) {
        return Err(CalibError::Config(format!("random offset {offset} outside [0, 1]")));
    }
    let (knots, ties) = sorted_knots(scores)?;
    Ok(build(knots, ties, Shape::Random { offset }))
}

/// Fits a sigmoidal flow; errors if the target λ is not reached.
pub fn fit_naf<T: Scalar>(scores: &[T], config: &NafConfig) -> Result<MonotoneMap<T>> {
    let (map, achieved) = fit_naf_best_effort(scores, config)?;
    if achieved > config.target_accuracy {
        return Err(CalibError::NafNotConverged {
            achieved,
            target: config.target_accuracy,
        });
    }
    Ok(map)
}

/// Fits a sigmoidal flow and returns it with its measured λ, whether or not the
/// target was met.
pub fn fit_naf_best_effort<T: Scalar>(
    scores: &[T],
    config: &NafConfig,
) -> Result<(MonotoneMap<T>, f64)> {
    config.validate()?;
    let (knots, ties) = sorted_knots(scores)?;
    let net = naf::train(&knots, config);
    let map = build(knots, ties, Shape::Naf(net));
    let achieved = lambda_accuracy(&map, &map.knots).f64();
    Ok((map, achieved))
}

/// Median positive knot spacing, falling back to the mean spacing and then to 1.
fn tail_scale<T: Scalar>(knots: &[T]) -> T {
    let gaps: Vec<T> = knots
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&g| g > T::zero())
        .collect();
    if gaps.is_empty() {
        return T::one();
    }
    let s = median(&gaps);
    if s > T::zero() {
        s
    } else {
        T::one()
    }
}

/// Measured accuracy `max_i |q(u_(i)) (n+1) - i|` on the sorted `scores`.
pub fn lambda_accuracy<T: Scalar>(map: &MonotoneMap<T>, scores: &[T]) -> T {
    let mut sorted = scores.to_vec();
    sort_floats(&mut sorted);
    let n1 = T::from_count(sorted.len() + 1);
    sorted
        .iter()
        .enumerate()
        .map(|(i, &u)| (map.eval(u) * n1 - T::from_count(i + 1)).abs())
        .fold(T::zero(), T::max)
}

impl<T: Scalar> MonotoneMap<T> {
    pub fn kind(&self) -> InterpolatorKind {
        match self.shape {
            Shape::Naive => InterpolatorKind::Naive,
            Shape::Linear { .. } => InterpolatorKind::Linear,
            Shape::Random { .. } => InterpolatorKind::Random,
            Shape::Naf(_) => InterpolatorKind::Naf,
        }
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn n(&self) -> usize {
        self.knots.len()
    }

    /// Number of adjacent equal knots.
    pub fn tie_count(&self) -> usize {
        self.ties
    }

    pub fn is_continuous(&self) -> bool {
        !self.kind().is_step()
    }

    /// Random draw used by a random map.
    pub fn random_offset(&self) -> Option<T> {
        match self.shape {
            Shape::Random { offset } => Some(offset),
            _ => None,
        }
    }

    /// Tail scale of a linear map.
    pub fn tail_scale(&self) -> Option<T> {
        match self.shape {
            Shape::Linear { tail_scale } => Some(tail_scale),
            _ => None,
        }
    }

    pub fn naf_net(&self) -> Option<&NafNet<T>> {
        match &self.shape {
            Shape::Naf(net) => Some(net),
            _ => None,
        }
    }

    /// Number of knots `<= u`.
    fn rank(&self, u: T) -> usize {
        self.knots.partition_point(|&k| k <= u)
    }

    pub fn eval(&self, u: T) -> T {
        let n = self.knots.len();
        let n1 = T::from_count(n + 1);
        match &self.shape {
            Shape::Naive => T::from_count(self.rank(u)) / T::from_count(n),
            Shape::Random { offset } => (T::from_count(self.rank(u)) + *offset) / n1,
            Shape::Linear { tail_scale } => {
                let i = self.rank(u);
                if i == 0 {
                    ((u - self.knots[0]) / *tail_scale).exp() / n1
                } else if i == n {
                    T::one() - (-(u - self.knots[n - 1]) / *tail_scale).exp() / n1
                } else {
                    let (a, b) = (self.knots[i - 1], self.knots[i]);
                    (T::from_count(i) + (u - a) / (b - a)) / n1
                }
            }
            Shape::Naf(net) => net.eval(u),
        }
    }

    /// `dq/du` (right derivative at knots); `None` for step maps.
    pub fn derivative(&self, u: T) -> Option<T> {
        let n = self.knots.len();
        let n1 = T::from_count(n + 1);
        match &self.shape {
            Shape::Naive | Shape::Random { .. } => None,
            Shape::Linear { tail_scale } => {
                let s = *tail_scale;
                let i = self.rank(u);
                Some(if i == 0 {
                    ((u - self.knots[0]) / s).exp() / (n1 * s)
                } else if i == n {
                    (-(u - self.knots[n - 1]) / s).exp() / (n1 * s)
                } else {
                    T::one() / (n1 * (self.knots[i] - self.knots[i - 1]))
                })
            }
            Shape::Naf(net) => Some(net.derivative(u)),
        }
    }

    /// Generalized inverse `inf { u : q(u) >= p }`; `±∞` when no finite `u` qualifies.
    pub fn inverse(&self, p: T) -> T {
        let n = self.knots.len();
        let nt = T::from_count(n);
        let n1 = T::from_count(n + 1);
        let tol = T::lit(1e-9);
        let knot_at = |j: T| -> T {
            // j is a 1-based rank target
            if j <= T::zero() {
                T::neg_infinity()
            } else if j > nt {
                T::infinity()
            } else {
                self.knots[j.to_usize().unwrap_or(1).max(1) - 1]
            }
        };
        match &self.shape {
            Shape::Naive => {
                if p <= T::zero() {
                    return T::neg_infinity();
                }
                knot_at((p * nt - tol).ceil())
            }
            Shape::Random { offset } => knot_at((p * n1 - *offset - tol).ceil()),
            Shape::Linear { tail_scale } => {
                if p <= T::zero() {
                    return T::neg_infinity();
                }
                if p >= T::one() {
                    return T::infinity();
                }
                let r = p * n1;
                if r < T::one() {
                    return self.knots[0] + *tail_scale * r.ln();
                }
                if r > nt {
                    return self.knots[n - 1] - *tail_scale * ((T::one() - p) * n1).ln();
                }
                let i = r.floor().to_usize().unwrap_or(1).clamp(1, n);
                let frac = r - T::from_count(i);
                if i == n {
                    return self.knots[n - 1];
                }
                let (a, b) = (self.knots[i - 1], self.knots[i]);
                a + frac * (b - a)
            }
            Shape::Naf(net) => net.inverse(p),
        }
    }

    /// `q^{-1}` at the [`moment_grid`] nodes.
    pub fn grid_inverse(&self) -> &[T] {
        &self.grid_inverse
    }
}
