//! Small fully connected base predictors (`d → h → h → out`, tanh) for the five
//! prediction types, trained with full-batch Adam.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CalibError, Result};
use crate::mcc::{Predictor, Provenance};
use crate::numeric::cholesky_solve;
use crate::prediction::PredictionOutput;
use crate::scalar::{sigmoid, softplus, softplus_inv, Scalar};

/// Lower and upper quantile levels of the interval head.
pub const INTERVAL_LEVELS: (f64, f64) = (0.05, 0.95);
pub const DEFAULT_ENSEMBLE_SIZE: usize = 5;
/// Floor added to the softplus standard deviation.
const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaseKind {
    Point,
    Interval,
    Quantile(usize),
    Distribution,
    Ensemble(usize),
}

impl BaseKind {
    /// Output width of one network.
    pub fn out_dim(self) -> usize {
        match self {
            BaseKind::Point => 1,
            BaseKind::Interval | BaseKind::Distribution | BaseKind::Ensemble(_) => 2,
            BaseKind::Quantile(k) => k,
        }
    }

    pub fn networks(self) -> usize {
        match self {
            BaseKind::Ensemble(k) => k,
            _ => 1,
        }
    }
}

impl fmt::Display for BaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseKind::Point => f.write_str("point"),
            BaseKind::Interval => f.write_str("interval"),
            BaseKind::Quantile(k) => write!(f, "quantile-{k}"),
            BaseKind::Distribution => f.write_str("distribution"),
            BaseKind::Ensemble(k) if *k == DEFAULT_ENSEMBLE_SIZE => f.write_str("ensemble"),
            BaseKind::Ensemble(k) => write!(f, "ensemble-{k}"),
        }
    }
}

impl FromStr for BaseKind {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        let count = |rest: &str| -> Result<usize> {
            match rest.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(k),
                _ => Err(CalibError::Config(format!("bad member count in base kind `{s}`"))),
            }
        };
        match s {
            "point" => Ok(BaseKind::Point),
            "interval" => Ok(BaseKind::Interval),
            "distribution" => Ok(BaseKind::Distribution),
            "ensemble" => Ok(BaseKind::Ensemble(DEFAULT_ENSEMBLE_SIZE)),
            _ => {
                if let Some(rest) = s.strip_prefix("quantile-") {
                    Ok(BaseKind::Quantile(count(rest)?))
                } else if let Some(rest) = s.strip_prefix("ensemble-") {
                    Ok(BaseKind::Ensemble(count(rest)?))
                } else {
                    Err(CalibError::Config(format!("unknown base kind `{s}`")))
                }
            }
        }
    }
}

/// Equally spaced odd multiples of `1/(2K)`.
pub fn quantile_levels(k: usize) -> Vec<f64> {
    (1..=k).map(|j| (2 * j - 1) as f64 / (2 * k) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 2000,
            learning_rate: 1e-2,
            seed: 0,
        }
    }
}

/// `α (y - q)` if `y >= q`, else `(1 - α)(q - y)`.
pub fn pinball_loss<T: Scalar>(q: T, y: T, alpha: T) -> T {
    if y >= q {
        alpha * (y - q)
    } else {
        (T::one() - alpha) * (q - y)
    }
}

/// `∂/∂q` of [`pinball_loss`] (right derivative at the kink).
pub fn pinball_grad<T: Scalar>(q: T, y: T, alpha: T) -> T {
    if y > q {
        -alpha
    } else {
        T::one() - alpha
    }
}

/// Gaussian negative log likelihood of `y`.
pub fn gaussian_nll_loss<T: Scalar>(mean: T, std: T, y: T) -> Result<T> {
    if !(std > T::zero()) {
        return Err(CalibError::NonPositiveStd(std.f64()));
    }
    let r = (y - mean) / std;
    Ok(T::lit(0.5 * (2.0 * std::f64::consts::PI).ln()) + std.ln() + r * r / T::lit(2.0))
}

/// `(∂/∂mean, ∂/∂std)` of [`gaussian_nll_loss`].
pub fn gaussian_nll_grad<T: Scalar>(mean: T, std: T, y: T) -> Result<(T, T)> {
    if !(std > T::zero()) {
        return Err(CalibError::NonPositiveStd(std.f64()));
    }
    let r = y - mean;
    let s2 = std * std;
    Ok((-r / s2, T::one() / std - r * r / (s2 * std)))
}

/// Output transform and training loss of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Head {
    Point,
    Interval,
    /// Cumulative-softplus quantiles at these levels.
    Quantile(Vec<f64>),
    Gaussian,
}

impl Head {
    pub fn for_kind(kind: BaseKind) -> Self {
        match kind {
            BaseKind::Point => Head::Point,
            BaseKind::Interval => Head::Interval,
            BaseKind::Quantile(k) => Head::Quantile(quantile_levels(k)),
            BaseKind::Distribution | BaseKind::Ensemble(_) => Head::Gaussian,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Head::Point => 1,
            Head::Interval | Head::Gaussian => 2,
            Head::Quantile(levels) => levels.len(),
        }
    }

    /// Mean loss over the batch and its gradient in the raw outputs.
    pub fn loss_grad<T: Scalar>(&self, out: ArrayView2<'_, T>, y: ArrayView1<'_, T>) -> (T, Array2<T>) {
        let n = y.len();
        let nt = T::from_count(n);
        let mut grad = Array2::zeros(out.raw_dim());
        let mut total = T::zero();
        for i in 0..n {
            let o = out.row(i);
            let yi = y[i];
            let mut g = grad.row_mut(i);
            match self {
                Head::Point => {
                    let r = o[0] - yi;
                    total += r * r;
                    g[0] = T::lit(2.0) * r / nt;
                }
                Head::Interval => {
                    let (a_lo, a_hi) = (T::lit(INTERVAL_LEVELS.0), T::lit(INTERVAL_LEVELS.1));
                    total += pinball_loss(o[0], yi, a_lo) + pinball_loss(o[1], yi, a_hi);
                    g[0] = pinball_grad(o[0], yi, a_lo) / nt;
                    g[1] = pinball_grad(o[1], yi, a_hi) / nt;
                }
                Head::Quantile(levels) => {
                    let k = levels.len();
                    let mut v = o[0];
                    let mut dv = vec![T::zero(); k];
                    for j in 0..k {
                        if j > 0 {
                            v += softplus(o[j]);
                        }
                        let a = T::lit(levels[j]);
                        total += pinball_loss(v, yi, a);
                        dv[j] = pinball_grad(v, yi, a);
                    }
                    // v_j depends on o_0 and on o_1..o_j through softplus
                    let mut tail = T::zero();
                    for j in (0..k).rev() {
                        tail += dv[j];
                        g[j] = if j == 0 { tail } else { tail * sigmoid(o[j]) } / nt;
                    }
                }
                Head::Gaussian => {
                    let std = softplus(o[1]) + T::lit(STD_FLOOR);
                    let r = (yi - o[0]) / std;
                    total += T::lit(0.5 * (2.0 * std::f64::consts::PI).ln()) + std.ln() + r * r / T::lit(2.0);
                    let s2 = std * std;
                    let d = yi - o[0];
                    g[0] = -d / s2 / nt;
                    g[1] = (T::one() / std - d * d / (s2 * std)) * sigmoid(o[1]) / nt;
                }
            }
        }
        (total / nt, grad)
    }

    /// Raw network output to a prediction. Crossed interval heads are swapped.
    pub fn predict<T: Scalar>(&self, o: ArrayView1<'_, T>) -> Result<PredictionOutput<T>> {
        match self {
            Head::Point => PredictionOutput::point(o[0]),
            Head::Interval => {
                let (mut lo, mut hi) = (o[0].min(o[1]), o[0].max(o[1]));
                let min_width = T::lit(1e-9);
                if hi - lo < min_width {
                    let mid = (lo + hi) / T::lit(2.0);
                    lo = mid - min_width;
                    hi = mid + min_width;
                }
                PredictionOutput::interval(lo, hi)
            }
            Head::Quantile(levels) => {
                let mut values = Vec::with_capacity(levels.len());
                let mut v = o[0];
                for j in 0..levels.len() {
                    if j > 0 {
                        v += softplus(o[j]);
                    }
                    values.push(v);
                }
                PredictionOutput::quantiles(levels.iter().map(|&a| T::lit(a)).collect(), values)
            }
            Head::Gaussian => PredictionOutput::gaussian(o[0], softplus(o[1]) + T::lit(STD_FLOOR)),
        }
    }
}

/// Multilayer perceptron with tanh hidden layers and a flat parameter vector laid out
/// layer by layer as `W` (row-major, `out × in`) followed by `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    dims: Vec<usize>,
    params: Vec<T>,
}

struct Cache<T> {
    acts: Vec<Array2<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// Xavier-uniform weights, zero biases.
    pub fn new(dims: Vec<usize>, rng: &mut ChaCha8Rng) -> Self {
        let mut params = Vec::new();
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(T::lit(rng.gen_range(-limit..limit)));
            }
            params.extend(std::iter::repeat(T::zero()).take(fan_out));
        }
        Self { dims, params }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<T>) {
        assert_eq!(params.len(), self.params.len(), "parameter count");
        self.params = params;
    }

    fn layer<'a>(&self, params: &'a [T], l: usize) -> (ArrayView2<'a, T>, ArrayView1<'a, T>) {
        let mut off = 0;
        for w in self.dims.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
        let w = ArrayView2::from_shape((fan_out, fan_in), &params[off..off + fan_in * fan_out])
            .expect("layer shape");
        let b = ArrayView1::from(&params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out]);
        (w, b)
    }

    fn forward_cache(&self, params: &[T], x: ArrayView2<'_, T>) -> Cache<T> {
        let layers = self.dims.len() - 1;
        let mut acts = vec![x.to_owned()];
        for l in 0..layers {
            let (w, b) = self.layer(params, l);
            let mut z = acts[l].dot(&w.t()) + &b;
            if l + 1 < layers {
                z.mapv_inplace(|v| v.tanh());
            }
            acts.push(z);
        }
        Cache { acts }
    }

    pub fn forward_with(&self, params: &[T], x: ArrayView2<'_, T>) -> Array2<T> {
        self.forward_cache(params, x).acts.pop().expect("output layer")
    }

    pub fn forward(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        self.forward_with(&self.params, x)
    }

    fn backward(&self, params: &[T], cache: &Cache<T>, d_out: Array2<T>) -> Vec<T> {
        let layers = self.dims.len() - 1;
        let mut grads: Vec<Vec<T>> = vec![Vec::new(); layers];
        let mut delta = d_out;
        for l in (0..layers).rev() {
            let (w, _) = self.layer(params, l);
            let gw = delta.t().dot(&cache.acts[l]);
            let gb = delta.sum_axis(Axis(0));
            let mut g = gw.into_iter().collect::<Vec<_>>();
            g.extend(gb.iter().copied());
            grads[l] = g;
            if l > 0 {
                let mut d = delta.dot(&w);
                d.zip_mut_with(&cache.acts[l], |dv, &a| *dv *= T::one() - a * a);
                delta = d;
            }
        }
        grads.into_iter().flatten().collect()
    }
}

/// Training objective of `head` on `mlp` at `params`, with its gradient.
pub fn objective<T: Scalar>(
    mlp: &Mlp<T>,
    head: &Head,
    params: &[T],
    x: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
) -> (T, Vec<T>) {
    let cache = mlp.forward_cache(params, x);
    let out = cache.acts.last().expect("output layer");
    let (loss, d_out) = head.loss_grad(out.view(), y);
    (loss, mlp.backward(params, &cache, d_out))
}

/// Objective value only.
pub fn objective_value<T: Scalar>(
    mlp: &Mlp<T>,
    head: &Head,
    params: &[T],
    x: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
) -> T {
    let out = mlp.forward_with(params, x);
    head.loss_grad(out.view(), y).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedNet<T> {
    pub mlp: Mlp<T>,
    pub head: Head,
    pub meta: TrainingMeta,
}

fn train_net<T: Scalar>(
    head: Head,
    x: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainedNet<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = vec![x.ncols(), config.hidden, config.hidden, head.out_dim()];
    let mut mlp = Mlp::new(dims, &mut rng);
    if let Head::Gaussian = head {
        // start with unit predicted std
        let n = mlp.params.len();
        mlp.params[n - 1] = softplus_inv(T::one());
    }
    let (b1, b2, eps) = (T::lit(0.9), T::lit(0.999), T::lit(1e-8));
    let lr = T::lit(config.learning_rate);
    let p = mlp.params.len();
    let mut m = vec![T::zero(); p];
    let mut v = vec![T::zero(); p];
    let mut params = mlp.params.clone();
    let mut best = params.clone();
    let (initial, _) = objective(&mlp, &head, &params, x, y);
    if !initial.is_finite() {
        return Err(CalibError::Diverged { epoch: 0 });
    }
    let mut best_loss = initial;
    let (mut p1, mut p2) = (T::one(), T::one());
    for epoch in 1..=config.epochs {
        let (loss, grad) = objective(&mlp, &head, &params, x, y);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(CalibError::Diverged { epoch });
        }
        if loss < best_loss {
            best_loss = loss;
            best.clone_from(&params);
        }
        p1 *= b1;
        p2 *= b2;
        for j in 0..p {
            m[j] = b1 * m[j] + (T::one() - b1) * grad[j];
            v[j] = b2 * v[j] + (T::one() - b2) * grad[j] * grad[j];
            params[j] -= lr * (m[j] / (T::one() - p1)) / ((v[j] / (T::one() - p2)).sqrt() + eps);
        }
    }
    let last = objective_value(&mlp, &head, &params, x, y);
    if !last.is_finite() {
        return Err(CalibError::Diverged { epoch: config.epochs });
    }
    if last < best_loss {
        best_loss = last;
        best = params;
    }
    mlp.set_params(best);
    Ok(TrainedNet {
        mlp,
        head,
        meta: TrainingMeta {
            seed,
            epochs: config.epochs,
            initial_loss: initial.f64(),
            final_loss: best_loss.f64(),
        },
    })
}

fn member_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// A trained base predictor of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasePredictor<T> {
    kind: BaseKind,
    nets: Vec<TrainedNet<T>>,
    dim: usize,
    provenance: Provenance,
}

/// Trains a base predictor of `kind` on (standardized) `train`.
pub fn train_base<T: Scalar>(train: &Dataset<T>, kind: BaseKind, config: &TrainConfig) -> Result<BasePredictor<T>> {
    if train.is_empty() {
        return Err(CalibError::EmptyInput("training set"));
    }
    if config.hidden == 0 {
        return Err(CalibError::Config("hidden width must be positive".into()));
    }
    let x = train.features().view();
    let y = train.labels().view();
    let nets = (0..kind.networks())
        .map(|k| {
            let seed = if kind.networks() == 1 {
                config.seed
            } else {
                member_seed(config.seed, k)
            };
            train_net(Head::for_kind(kind), x, y, config, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BasePredictor {
        kind,
        nets,
        dim: train.dim(),
        provenance: Provenance {
            source_name: train.name().to_string(),
            train_row_ids: train.row_ids().to_vec(),
        },
    })
}

impl<T: Scalar> BasePredictor<T> {
    pub fn kind(&self) -> BaseKind {
        self.kind
    }

    pub fn nets(&self) -> &[TrainedNet<T>] {
        &self.nets
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Predictions for every row of `x`.
    pub fn predict_batch(&self, x: ArrayView2<'_, T>) -> Result<Vec<PredictionOutput<T>>> {
        if x.ncols() != self.dim {
            return Err(CalibError::DimensionMismatch {
                expected: self.dim,
                got: x.ncols(),
            });
        }
        let outs: Vec<Array2<T>> = self.nets.iter().map(|n| n.mlp.forward(x)).collect();
        (0..x.nrows())
            .map(|i| {
                if let BaseKind::Ensemble(k) = self.kind {
                    let members = outs
                        .iter()
                        .zip(&self.nets)
                        .map(|(o, n)| n.head.predict(o.row(i)))
                        .collect::<Result<Vec<_>>>()?;
                    PredictionOutput::ensemble(members, vec![T::one() / T::from_count(k); k])
                } else {
                    self.nets[0].head.predict(outs[0].row(i))
                }
            })
            .collect()
    }

    /// Rows of `x` whose interval heads come out crossed (and get swapped).
    pub fn crossing_count(&self, x: ArrayView2<'_, T>) -> usize {
        if self.kind != BaseKind::Interval || x.ncols() != self.dim {
            return 0;
        }
        let out = self.nets[0].mlp.forward(x);
        out.rows().into_iter().filter(|o| o[0] > o[1]).count()
    }
}

impl<T: Scalar> Predictor<T> for BasePredictor<T> {
    fn predict(&self, x: ArrayView1<'_, T>) -> Result<PredictionOutput<T>> {
        let row = x.insert_axis(Axis(0));
        Ok(self.predict_batch(row)?.pop().expect("one row"))
    }

    fn provenance(&self) -> Option<&Provenance> {
        Some(&self.provenance)
    }
}

/// Ordinary least squares with intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRegression<T> {
    pub intercept: T,
    pub coef: Vec<T>,
    provenance: Provenance,
}

impl<T: Scalar> LinearRegression<T> {
    pub fn fit(train: &Dataset<T>) -> Result<Self> {
        let d = train.dim();
        let p = d + 1;
        if train.len() < p {
            return Err(CalibError::InvalidDataset(format!(
                "{} rows cannot determine {p} coefficients",
                train.len()
            )));
        }
        let mut a = vec![T::zero(); p * p];
        let mut b = vec![T::zero(); p];
        for (x, y) in train.iter() {
            let row: Vec<T> = std::iter::once(T::one()).chain(x.iter().copied()).collect();
            for i in 0..p {
                b[i] += row[i] * y;
                for j in 0..p {
                    a[i * p + j] += row[i] * row[j];
                }
            }
        }
        cholesky_solve(&mut a, &mut b, p)
            .ok_or_else(|| CalibError::InvalidDataset("singular design matrix".into()))?;
        Ok(Self {
            intercept: b[0],
            coef: b[1..].to_vec(),
            provenance: Provenance {
                source_name: train.name().to_string(),
                train_row_ids: train.row_ids().to_vec(),
            },
        })
    }

    pub fn predict_value(&self, x: ArrayView1<'_, T>) -> T {
        self.intercept + x.iter().zip(&self.coef).map(|(&a, &c)| a * c).sum::<T>()
    }
}

impl<T: Scalar> Predictor<T> for LinearRegression<T> {
    fn predict(&self, x: ArrayView1<'_, T>) -> Result<PredictionOutput<T>> {
        if x.len() != self.coef.len() {
            return Err(CalibError::DimensionMismatch {
                expected: self.coef.len(),
                got: x.len(),
            });
        }
        PredictionOutput::point(self.predict_value(x))
    }

    fn provenance(&self) -> Option<&Provenance> {
        Some(&self.provenance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinball_examples() {
        assert!((pinball_loss(0.0, 1.0, 0.9) - 0.9f64).abs() < 1e-15);
        assert!((pinball_loss(1.0, 0.0, 0.9) - 0.1f64).abs() < 1e-15);
        assert_eq!(pinball_loss(0.4, 0.4, 0.3f64), 0.0);
    }

    #[test]
    fn nll_examples() {
        let c = 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((gaussian_nll_loss(0.0, 1.0, 0.0).unwrap() - c).abs() < 1e-15);
        assert!((gaussian_nll_loss(0.0, 1.0, 1.0).unwrap() - (c + 0.5)).abs() < 1e-15);
        assert!(gaussian_nll_loss(0.0, 0.0, 1.0f64).is_err());
        let (gm, gs) = gaussian_nll_grad(0.3, 0.7, 1.1f64).unwrap();
        let h = 1e-6;
        let fm = (gaussian_nll_loss(0.3 + h, 0.7, 1.1).unwrap() - gaussian_nll_loss(0.3 - h, 0.7, 1.1).unwrap()) / (2.0 * h);
        let fs = (gaussian_nll_loss(0.3, 0.7 + h, 1.1).unwrap() - gaussian_nll_loss(0.3, 0.7 - h, 1.1).unwrap()) / (2.0 * h);
        assert!((gm - fm).abs() <= 1e-6 * gm.abs());
        assert!((gs - fs).abs() <= 1e-6 * gs.abs());
    }

    #[test]
    fn kinds_parse_and_print() {
        for s in ["point", "interval", "quantile-4", "distribution", "ensemble", "ensemble-3"] {
            assert_eq!(s.parse::<BaseKind>().unwrap().to_string(), s);
        }
        assert!("quantile-0".parse::<BaseKind>().is_err());
        assert!("forest".parse::<BaseKind>().is_err());
        assert_eq!(quantile_levels(4), vec![0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn identical_seeds_give_identical_parameters() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 / 30.0]).collect();
        let labels: Vec<f64> = rows.iter().map(|r| r[0] * 2.0).collect();
        let data = Dataset::from_rows(rows, labels, "lin").unwrap();
        let cfg = TrainConfig { hidden: 8, epochs: 50, learning_rate: 1e-2, seed: 4 };
        let a = train_base(&data, BaseKind::Quantile(3), &cfg).unwrap();
        let b = train_base(&data, BaseKind::Quantile(3), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.nets[0].meta.final_loss <= a.nets[0].meta.initial_loss);
    }
}
