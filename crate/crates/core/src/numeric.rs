//! Root finding, quadrature and small dense linear algebra used by the calibration maps.

use statrs::function::erf;

use crate::error::{CalibError, Result};
use crate::scalar::Scalar;

/// Maximum number of bracket expansions before giving up.
pub const MAX_EXPANSIONS: usize = 200;

pub fn normal_cdf<T: Scalar>(z: T) -> T {
    T::lit(0.5 * libm::erfc(-z.f64() / std::f64::consts::SQRT_2))
}

pub fn normal_pdf<T: Scalar>(z: T) -> T {
    let z = z.f64();
    T::lit((-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt())
}

/// Standard normal quantile function.
pub fn normal_ppf<T: Scalar>(p: T) -> T {
    let p = p.f64();
    if p <= 0.0 {
        return T::neg_infinity();
    }
    if p >= 1.0 {
        return T::infinity();
    }
    let z = -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * p);
    // one Newton step against the accurate cdf
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let err = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2) - p;
    T::lit(if pdf > 0.0 { z - err / pdf } else { z })
}

/// Generalized inverse `inf { y : f(y) >= p }` of a non-decreasing function.
///
/// `start` is an initial bracket guess; it is widened geometrically (at most
/// [`MAX_EXPANSIONS`] times per side) until `f(lo) < p <= f(hi)`, then bisected until
/// the bracket can no longer be split in floating point.
pub fn generalized_inverse<T: Scalar>(
    f: impl Fn(T) -> T,
    p: T,
    start: (T, T),
) -> Result<T> {
    let fail = || CalibError::BracketFailure {
        target: p.f64(),
        expansions: MAX_EXPANSIONS,
    };
    let (mut lo, mut hi) = if start.0 < start.1 {
        start
    } else {
        (start.1 - T::one(), start.0 + T::one())
    };
    let mut step = (hi - lo).max(T::lit(1e-3));
    let mut expansions = 0;
    while f(lo) >= p {
        hi = hi.min(lo);
        lo = lo - step;
        step = step * T::lit(2.0);
        expansions += 1;
        if expansions > MAX_EXPANSIONS || !lo.is_finite() {
            return Err(fail());
        }
    }
    let mut step = (hi - lo).max(T::lit(1e-3));
    expansions = 0;
    while f(hi) < p {
        lo = lo.max(hi);
        hi = hi + step;
        step = step * T::lit(2.0);
        expansions += 1;
        if expansions > MAX_EXPANSIONS || !hi.is_finite() {
            return Err(fail());
        }
    }
    for _ in 0..4096 {
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) >= p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` with absolute tolerance `tol`.
pub fn adaptive_simpson<T: Scalar>(f: &impl Fn(T) -> T, a: T, b: T, tol: T) -> T {
    if b <= a {
        return T::zero();
    }
    let two = T::lit(2.0);
    let fa = f(a);
    let fb = f(b);
    let m = (a + b) / two;
    let fm = f(m);
    let whole = (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, SIMPSON_MAX_DEPTH)
}

const SIMPSON_MAX_DEPTH: u32 = 60;
/// Levels subdivided unconditionally, so kinks between the first few nodes are not missed.
const SIMPSON_MIN_DEPTH: u32 = 6;

#[allow(clippy::too_many_arguments)]
fn simpson_step<T: Scalar>(
    f: &impl Fn(T) -> T,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
) -> T {
    let two = T::lit(2.0);
    let m = (a + b) / two;
    let lm = (a + m) / two;
    let rm = (m + b) / two;
    let flm = f(lm);
    let frm = f(rm);
    let six = T::lit(6.0);
    let left = (m - a) / six * (fa + T::lit(4.0) * flm + fm);
    let right = (b - m) / six * (fm + T::lit(4.0) * frm + fb);
    let delta = left + right - whole;
    let refined = SIMPSON_MAX_DEPTH - depth >= SIMPSON_MIN_DEPTH;
    if depth == 0 || (refined && delta.abs() <= T::lit(15.0) * tol) || m <= a || m >= b {
        return left + right + delta / T::lit(15.0);
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / two, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / two, depth - 1)
}

/// Golden-section search for the minimizer of a unimodal function on `[a, b]`.
pub fn golden_section_min<T: Scalar>(f: impl Fn(T) -> T, mut a: T, mut b: T, tol: T) -> T {
    let inv_phi = T::lit((5.0f64.sqrt() - 1.0) / 2.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..500 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a + b) / T::lit(2.0)
}

/// Solves `A x = b` for a symmetric positive-definite `A` (row-major, `n x n`) in place
/// via Cholesky. Returns `None` if the factorization breaks down.
pub fn cholesky_solve<T: Scalar>(a: &mut [T], b: &mut [T], n: usize) -> Option<()> {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > T::zero()) || !diag.is_finite() {
            return None;
        }
        let diag = diag.sqrt();
        a[j * n + j] = diag;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / diag;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_reference_values() {
        assert!((normal_cdf(0.0f64) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054f64) - 0.975).abs() < 1e-12);
        assert!((normal_ppf(0.975f64) - 1.959963984540054).abs() < 1e-12);
        assert!((normal_pdf(0.0f64) - 0.3989422804014327).abs() < 1e-15);
    }

    #[test]
    fn inverse_of_continuous_function() {
        let y = generalized_inverse(|y: f64| y * y * y, 8.0, (0.0, 1.0)).unwrap();
        assert!((y - 2.0).abs() < 1e-12);
        // bracket needs expansion to the left
        let y = generalized_inverse(|y: f64| y, -1e6, (0.0, 1.0)).unwrap();
        assert!((y + 1e6).abs() < 1e-6);
    }

    #[test]
    fn inverse_of_step_function_is_left_limit() {
        let step = |y: f64| if y >= 1.0 { 1.0 } else { 0.0 };
        let y = generalized_inverse(step, 0.5, (-3.0, 3.0)).unwrap();
        assert_eq!(y, 1.0);
    }

    #[test]
    fn inverse_fails_on_unreachable_level() {
        let f = |_: f64| 0.25;
        assert!(matches!(
            generalized_inverse(f, 0.5, (0.0, 1.0)),
            Err(CalibError::BracketFailure { .. })
        ));
        assert!(generalized_inverse(f, 0.1, (0.0, 1.0)).is_err());
    }

    #[test]
    fn simpson_integrates_kinked_function() {
        let v = adaptive_simpson(&|x: f64| x.abs(), -1.0, 2.0, 1e-10);
        assert!((v - 2.5).abs() < 1e-9);
        let v = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-12);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn golden_section_finds_minimum() {
        let m = golden_section_min(|x: f64| (x - 1.3).powi(2), -10.0, 10.0, 1e-10);
        assert!((m - 1.3).abs() < 1e-8);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let mut a = vec![4.0f64, 2.0, 2.0, 3.0];
        let mut b = vec![2.0f64, 1.0];
        cholesky_solve(&mut a, &mut b, 2).unwrap();
        assert!((b[0] - 0.5).abs() < 1e-12 && b[1].abs() < 1e-12);
        let mut bad = vec![1.0, 2.0, 2.0, 1.0];
        assert!(cholesky_solve(&mut bad, &mut [1.0, 1.0], 2).is_none());
    }
}
