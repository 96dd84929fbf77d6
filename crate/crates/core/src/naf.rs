//! Single-block deep sigmoidal flow `q(u) = Σ_j w_j σ(a_j z + b_j)` with
//! `z = (u - center) / scale`, `a = softplus(α)` and `w = softmax(ω)`.
//!
//! Training minimizes the mean squared error between `q(u_(i))` and `i/(n+1)`.
//! The parameter vector is laid out as `[α_1..α_H, b_1..b_H, ω_1..ω_H]`.

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::numeric::{cholesky_solve, generalized_inverse};
use crate::scalar::{median, sigmoid, softplus, softplus_inv, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NafConfig {
    pub hidden_units: usize,
    /// Adam iterations.
    pub max_iters: usize,
    pub learning_rate: f64,
    /// Target λ-accuracy.
    pub target_accuracy: f64,
    /// Damped Gauss-Newton iterations run before Adam.
    pub lm_iters: usize,
    /// Accept fits that miss `target_accuracy` instead of failing.
    pub allow_unconverged: bool,
}

impl Default for NafConfig {
    fn default() -> Self {
        Self {
            hidden_units: 200,
            max_iters: 5000,
            learning_rate: 1e-2,
            target_accuracy: 1e-3,
            lm_iters: 200,
            allow_unconverged: false,
        }
    }
}

impl NafConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_units == 0 {
            return Err(CalibError::Config("naf hidden_units must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CalibError::Config("naf learning_rate must be positive".into()));
        }
        if !(self.target_accuracy > 0.0) {
            return Err(CalibError::Config("naf target_accuracy must be positive".into()));
        }
        Ok(())
    }
}

/// Fitted flow parameters in the constrained space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NafNet<T> {
    center: T,
    scale: T,
    slopes: Vec<T>,
    biases: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> NafNet<T> {
    /// Builds a net from raw (unconstrained) parameters.
    pub fn from_params(center: T, scale: T, params: &[f64]) -> Self {
        let h = params.len() / 3;
        let (alpha, rest) = params.split_at(h);
        let (bias, omega) = rest.split_at(h);
        Self {
            center,
            scale,
            slopes: alpha.iter().map(|&a| T::lit(softplus(a))).collect(),
            biases: bias.iter().map(|&b| T::lit(b)).collect(),
            weights: softmax(omega).into_iter().map(T::lit).collect(),
        }
    }

    pub fn hidden_units(&self) -> usize {
        self.slopes.len()
    }

    fn z(&self, u: T) -> T {
        (u - self.center) / self.scale
    }

    pub fn eval(&self, u: T) -> T {
        let z = self.z(u);
        let q: T = self
            .slopes
            .iter()
            .zip(&self.biases)
            .zip(&self.weights)
            .map(|((&a, &b), &w)| w * sigmoid(a * z + b))
            .sum();
        q.max(T::zero()).min(T::one())
    }

    pub fn derivative(&self, u: T) -> T {
        let z = self.z(u);
        let dz: T = self
            .slopes
            .iter()
            .zip(&self.biases)
            .zip(&self.weights)
            .map(|((&a, &b), &w)| {
                let s = sigmoid(a * z + b);
                w * a * s * (T::one() - s)
            })
            .sum();
        dz / self.scale
    }

    /// `inf { u : q(u) >= p }`, infinite when `p` is out of the attainable range.
    pub fn inverse(&self, p: T) -> T {
        if p <= T::zero() {
            return T::neg_infinity();
        }
        if p >= T::one() {
            return T::infinity();
        }
        let start = (self.center - self.scale, self.center + self.scale);
        match generalized_inverse(|u| self.eval(u), p, start) {
            Ok(u) => u,
            Err(_) if p < T::lit(0.5) => T::neg_infinity(),
            Err(_) => T::infinity(),
        }
    }
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Flow output and per-sample Jacobian rows (length `3H` each) at inputs `z`.
fn forward(params: &[f64], z: &[f64], want_jac: bool) -> (Vec<f64>, Vec<f64>) {
    let h = params.len() / 3;
    let (alpha, rest) = params.split_at(h);
    let (bias, omega) = rest.split_at(h);
    let a: Vec<f64> = alpha.iter().map(|&v| softplus(v)).collect();
    let da: Vec<f64> = alpha.iter().map(|&v| sigmoid(v)).collect();
    let w = softmax(omega);
    let mut q = vec![0.0; z.len()];
    let mut jac = if want_jac {
        vec![0.0; z.len() * 3 * h]
    } else {
        Vec::new()
    };
    let mut s = vec![0.0; h];
    for (i, &zi) in z.iter().enumerate() {
        let mut qi = 0.0;
        for j in 0..h {
            s[j] = sigmoid(a[j] * zi + bias[j]);
            qi += w[j] * s[j];
        }
        q[i] = qi;
        if want_jac {
            let row = &mut jac[i * 3 * h..(i + 1) * 3 * h];
            for j in 0..h {
                let ds = s[j] * (1.0 - s[j]) * w[j];
                row[j] = ds * zi * da[j];
                row[h + j] = ds;
                row[2 * h + j] = w[j] * (s[j] - qi);
            }
        }
    }
    (q, jac)
}

/// Training loss `(1/n) Σ (q(z_i) - t_i)²` and its gradient in the raw parameters.
pub fn loss_and_gradient(params: &[f64], z: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    let (q, jac) = forward(params, z, true);
    let p = params.len();
    let n = z.len() as f64;
    let mut grad = vec![0.0; p];
    let mut loss = 0.0;
    for (i, (&qi, &ti)) in q.iter().zip(targets).enumerate() {
        let r = qi - ti;
        loss += r * r / n;
        for (g, &jv) in grad.iter_mut().zip(&jac[i * p..(i + 1) * p]) {
            *g += 2.0 * r * jv / n;
        }
    }
    (loss, grad)
}

/// Training loss only.
pub fn loss(params: &[f64], z: &[f64], targets: &[f64]) -> f64 {
    let (q, _) = forward(params, z, false);
    q.iter()
        .zip(targets)
        .map(|(qi, ti)| (qi - ti).powi(2))
        .sum::<f64>()
        / z.len() as f64
}

fn lambda_of(q: &[f64], targets: &[f64]) -> f64 {
    let n1 = (q.len() + 1) as f64;
    q.iter()
        .zip(targets)
        .map(|(a, b)| (a - b).abs() * n1)
        .fold(0.0, f64::max)
}

/// Standardization used for the flow input.
fn standardize(knots: &[f64]) -> (f64, f64) {
    let center = median(knots);
    let n = knots.len() as f64;
    let mean = knots.iter().sum::<f64>() / n;
    let var = knots.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / n;
    let scale = var.sqrt();
    (center, if scale > 1e-12 * (1.0 + mean.abs()) { scale } else { 1.0 })
}

/// Places one unit per block of consecutive gaps between knots (with a virtual knot
/// beyond each end), so the initial flow already steps through every target.
fn constructive_init(z: &[f64], hidden: usize) -> Vec<f64> {
    const SHARPNESS: f64 = 3.0;
    const MAX_SLOPE: f64 = 1e8;
    let n = z.len();
    let gaps: Vec<f64> = z.windows(2).map(|w| w[1] - w[0]).filter(|&g| g > 0.0).collect();
    let s = if gaps.is_empty() { 1.0 } else { median(&gaps) };
    let mut ext = Vec::with_capacity(n + 2);
    ext.push(z[0] - s);
    ext.extend_from_slice(z);
    ext.push(z[n - 1] + s);
    let g = n + 1;
    let bounds: Vec<usize> = if hidden >= g {
        (0..=g).collect()
    } else {
        (0..=hidden)
            .map(|k| ((k * g) as f64 / hidden as f64).round() as usize)
            .collect()
    };
    let mut units: Vec<(f64, f64, f64)> = Vec::with_capacity(hidden);
    for win in bounds.windows(2) {
        let (lo, hi) = (win[0], win[1]);
        if hi <= lo {
            continue;
        }
        let m = hi - lo - 1;
        let w = (hi - lo) as f64 / g as f64;
        let (a, c) = match m {
            0 => (SHARPNESS / (ext[hi] - ext[lo]), (ext[lo] + ext[hi]) / 2.0),
            1 => {
                let d = (ext[lo + 1] - ext[lo]).min(ext[hi] - ext[lo + 1]);
                (SHARPNESS / (2.0 * d), ext[lo + 1])
            }
            _ => {
                let (za, zb) = (ext[lo + 1], ext[hi - 1]);
                (2.0 * (m as f64).ln() / (zb - za), (za + zb) / 2.0)
            }
        };
        let a = if a.is_finite() { a.min(MAX_SLOPE) } else { MAX_SLOPE };
        units.push((a, c, w));
    }
    while units.len() < hidden {
        let i = (0..units.len())
            .max_by(|&i, &j| units[i].2.total_cmp(&units[j].2))
            .unwrap_or(0);
        units[i].2 /= 2.0;
        let u = units[i];
        units.push(u);
    }
    let mut params = vec![0.0; 3 * hidden];
    for (j, &(a, c, w)) in units.iter().enumerate() {
        params[j] = softplus_inv(a);
        params[hidden + j] = -a * c;
        params[2 * hidden + j] = w.ln();
    }
    params
}

/// Damped Gauss-Newton on the squared residuals. Stops at the target λ or when the
/// residual stops improving.
fn levenberg_marquardt(params: &mut Vec<f64>, z: &[f64], t: &[f64], iters: usize, target: f64) {
    let n = z.len();
    let p = params.len();
    let mut mu = 1e-3;
    let mut history: Vec<f64> = Vec::new();
    for _ in 0..iters {
        let (q, jac) = forward(params, z, true);
        let r: Vec<f64> = q.iter().zip(t).map(|(a, b)| a - b).collect();
        if lambda_of(&q, t) <= target {
            return;
        }
        let sse: f64 = r.iter().map(|v| v * v).sum();
        history.push(sse);
        if history.len() > 20 && sse > 0.999 * history[history.len() - 21] {
            return;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let step = if n <= p {
                // dual form: δ = Jᵀ (J Jᵀ + μI)⁻¹ r
                let mut a = vec![0.0; n * n];
                for i in 0..n {
                    let ri = &jac[i * p..(i + 1) * p];
                    for k in 0..=i {
                        let rk = &jac[k * p..(k + 1) * p];
                        let v: f64 = ri.iter().zip(rk).map(|(x, y)| x * y).sum();
                        a[i * n + k] = v;
                        a[k * n + i] = v;
                    }
                    a[i * n + i] += mu;
                }
                let mut y = r.clone();
                if cholesky_solve(&mut a, &mut y, n).is_none() {
                    mu *= 4.0;
                    continue;
                }
                let mut d = vec![0.0; p];
                for i in 0..n {
                    for (dv, &jv) in d.iter_mut().zip(&jac[i * p..(i + 1) * p]) {
                        *dv += jv * y[i];
                    }
                }
                d
            } else {
                let mut a = vec![0.0; p * p];
                let mut g = vec![0.0; p];
                for i in 0..n {
                    let row = &jac[i * p..(i + 1) * p];
                    for j in 0..p {
                        if row[j] == 0.0 {
                            continue;
                        }
                        g[j] += row[j] * r[i];
                        let aj = &mut a[j * p..(j + 1) * p];
                        for k in 0..=j {
                            aj[k] += row[j] * row[k];
                        }
                    }
                }
                for j in 0..p {
                    for k in 0..j {
                        a[k * p + j] = a[j * p + k];
                    }
                    a[j * p + j] += mu;
                }
                if cholesky_solve(&mut a, &mut g, p).is_none() {
                    mu *= 4.0;
                    continue;
                }
                g
            };
            let trial: Vec<f64> = params.iter().zip(&step).map(|(a, b)| a - b).collect();
            let trial_sse: f64 = {
                let (qt, _) = forward(&trial, z, false);
                qt.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum()
            };
            if trial_sse.is_finite() && trial_sse < sse {
                *params = trial;
                mu = (mu / 3.0).max(1e-15);
                accepted = true;
                break;
            }
            mu *= 4.0;
        }
        if !accepted {
            return;
        }
    }
}

/// Full-batch Adam; keeps the parameters with the best λ seen.
fn adam(params: &mut Vec<f64>, z: &[f64], t: &[f64], config: &NafConfig) {
    const PATIENCE: usize = 500;
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let p = params.len();
    let mut m = vec![0.0; p];
    let mut v = vec![0.0; p];
    let mut best = params.clone();
    let mut best_lambda = lambda_of(&forward(params, z, false).0, t);
    let mut since_best = 0;
    let mut cur = params.clone();
    for step in 1..=config.max_iters {
        if best_lambda <= config.target_accuracy || since_best > PATIENCE {
            break;
        }
        let (_, grad) = loss_and_gradient(&cur, z, t);
        let c1 = 1.0 - b1_pow(b1, step);
        let c2 = 1.0 - b1_pow(b2, step);
        for j in 0..p {
            m[j] = b1 * m[j] + (1.0 - b1) * grad[j];
            v[j] = b2 * v[j] + (1.0 - b2) * grad[j] * grad[j];
            cur[j] -= config.learning_rate * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
        }
        let lam = lambda_of(&forward(&cur, z, false).0, t);
        if lam < best_lambda {
            best_lambda = lam;
            best.clone_from(&cur);
            since_best = 0;
        } else {
            since_best += 1;
        }
    }
    *params = best;
}

fn b1_pow(b: f64, step: usize) -> f64 {
    b.powi(step.min(i32::MAX as usize) as i32)
}

/// Fits a flow to sorted `knots`. Returns the net and the λ reached on the knots.
pub fn train<T: Scalar>(knots: &[T], config: &NafConfig) -> NafNet<T> {
    let u: Vec<f64> = knots.iter().map(|k| k.f64()).collect();
    let n = u.len();
    let (center, scale) = standardize(&u);
    let z: Vec<f64> = u.iter().map(|&v| (v - center) / scale).collect();
    let t: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
    let mut params = constructive_init(&z, config.hidden_units);
    levenberg_marquardt(&mut params, &z, &t, config.lm_iters, config.target_accuracy);
    adam(&mut params, &z, &t, config);
    NafNet::from_params(T::lit(center), T::lit(scale), &params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(params: &[f64], z: &[f64], t: &[f64]) -> f64 {
        let (_, grad) = loss_and_gradient(params, z, t);
        let mut worst = 0.0f64;
        for j in 0..params.len() {
            let h = 1e-6 * (1.0 + params[j].abs());
            let mut up = params.to_vec();
            let mut dn = params.to_vec();
            up[j] += h;
            dn[j] -= h;
            let fd = (loss(&up, z, t) - loss(&dn, z, t)) / (2.0 * h);
            let scale = grad[j].abs().max(fd.abs()).max(1e-8);
            worst = worst.max((grad[j] - fd).abs() / scale);
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let z = [-1.2, -0.3, 0.1, 0.8, 1.5];
        let t: Vec<f64> = (1..=5).map(|i| i as f64 / 6.0).collect();
        let params: Vec<f64> = (0..15).map(|k| ((k as f64) * 0.37).sin()).collect();
        assert!(fd_check(&params, &z, &t) < 1e-4);
    }

    #[test]
    fn three_point_fit_is_accurate() {
        let net = train(&[1.0f64, 2.0, 3.0], &NafConfig::default());
        for (i, u) in [1.0, 2.0, 3.0].iter().enumerate() {
            assert!((net.eval(*u) * 4.0 - (i + 1) as f64).abs() <= 1e-3);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let net = train(&[0.2f64, 0.9, 1.1, 2.5, 4.0], &NafConfig::default());
        for u in [-1.0, 0.5, 1.0, 2.0, 3.3, 6.0] {
            let h = 1e-6;
            let fd = (net.eval(u + h) - net.eval(u - h)) / (2.0 * h);
            let d = net.derivative(u);
            assert!(d > 0.0);
            assert!((d - fd).abs() <= 1e-5 * d.max(1e-12) + 1e-9, "u={u} d={d} fd={fd}");
        }
    }

    #[test]
    fn inverse_round_trips() {
        let net = train(&[0.0f64, 1.0, 5.0], &NafConfig::default());
        for p in [0.05, 0.25, 0.5, 0.9] {
            let u = net.inverse(p);
            assert!((net.eval(u) - p).abs() < 1e-9);
        }
        assert_eq!(net.inverse(0.0), f64::NEG_INFINITY);
        assert_eq!(net.inverse(1.0), f64::INFINITY);
    }
}
