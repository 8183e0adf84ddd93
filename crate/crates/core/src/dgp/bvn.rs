//! Bivariate standard normal CDF.
//!
//! Uses the single-integral representation
//!
//! ```text
//! P(Z1 <= h, Z2 <= k; r) = Φ(h)Φ(k)
//!     + 1/(2π) ∫_0^{asin r} exp(-(h² + k² - 2hk sin t) / (2 cos² t)) dt
//! ```
//!
//! integrated with adaptive 10-point Gauss–Legendre. The integrand is bounded
//! by one, so an absolute tolerance on the integral is an absolute tolerance on
//! the probability.

use crate::error::{Error, Result};
use crate::normal;
use std::f64::consts::PI;

const GL_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_4,
    0.219_086_362_515_982,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

const ABS_TOL: f64 = 1e-13;
const MAX_DEPTH: u32 = 40;

fn gauss_legendre<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
        sum += w * (f(mid - half * x) + f(mid + half * x));
    }
    sum * half
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let mid = 0.5 * (a + b);
    let left = gauss_legendre(f, a, mid);
    let right = gauss_legendre(f, mid, b);
    let refined = left + right;
    if depth == 0 || (refined - whole).abs() <= tol {
        return refined;
    }
    adaptive(f, a, mid, left, 0.5 * tol, depth - 1) + adaptive(f, mid, b, right, 0.5 * tol, depth - 1)
}

/// Integrand of the single-integral form, written to avoid cancellation as
/// sin t approaches ±1.
fn integrand(h: f64, k: f64, t: f64) -> f64 {
    let s = t.sin();
    let one_minus = 1.0 - s;
    let one_plus = 1.0 + s;
    let exponent = if s >= 0.0 {
        let d = h - k;
        d * d / (2.0 * one_minus * one_plus) + h * k / one_plus
    } else {
        let d = h + k;
        d * d / (2.0 * one_minus * one_plus) - h * k / one_minus
    };
    if exponent.is_nan() {
        return 0.0;
    }
    (-exponent).exp()
}

/// `P(Z1 <= h, Z2 <= k)` for a standard bivariate normal with correlation `r`.
///
/// Infinite thresholds and `|r| = 1` are evaluated through their analytic limits.
pub fn bvn_cdf(h: f64, k: f64, r: f64) -> Result<f64> {
    if h.is_nan() || k.is_nan() || r.is_nan() {
        return Err(Error::invalid("bvn_cdf: NaN argument"));
    }
    if r.abs() > 1.0 {
        return Err(Error::invalid(format!("bvn_cdf: correlation {r} outside [-1, 1]")));
    }
    if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if h == f64::INFINITY {
        return Ok(normal::cdf(k));
    }
    if k == f64::INFINITY {
        return Ok(normal::cdf(h));
    }
    if r == 1.0 {
        return Ok(normal::cdf(h.min(k)));
    }
    if r == -1.0 {
        return Ok((normal::cdf(h) - normal::cdf(-k)).max(0.0));
    }
    let base = normal::cdf(h) * normal::cdf(k);
    if r == 0.0 {
        return Ok(base);
    }
    let upper = r.asin();
    let f = |t: f64| integrand(h, k, t);
    let whole = gauss_legendre(&f, 0.0, upper);
    let integral = adaptive(&f, 0.0, upper, whole, ABS_TOL, MAX_DEPTH);
    Ok((base + integral / (2.0 * PI)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent route: ∫_{-∞}^{h} φ(x) Φ((k - r x)/√(1-r²)) dx by composite Simpson.
    fn bvn_by_conditioning(h: f64, k: f64, r: f64) -> f64 {
        let lo = -12.0_f64;
        let hi = h.min(12.0);
        if hi <= lo {
            return 0.0;
        }
        let steps = 40_000;
        let width = (hi - lo) / steps as f64;
        let s = (1.0 - r * r).sqrt();
        let g = |x: f64| normal::pdf(x) * normal::cdf((k - r * x) / s);
        let mut acc = g(lo) + g(hi);
        for i in 1..steps {
            let x = lo + i as f64 * width;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(x);
        }
        acc * width / 3.0
    }

    #[test]
    fn independence_at_origin() {
        assert!((bvn_cdf(0.0, 0.0, 0.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn arcsine_identity_at_zero_thresholds() {
        assert!((bvn_cdf(0.0, 0.0, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        for i in -9..=9 {
            let r = i as f64 / 10.0;
            let expected = 0.25 + r.asin() / (2.0 * PI);
            let got = bvn_cdf(0.0, 0.0, r).unwrap();
            assert!((got - expected).abs() < 1e-7, "r={r}: {got} vs {expected}");
        }
    }

    #[test]
    fn infinite_threshold_marginalizes() {
        for k in [-1.5, 0.0, 0.7] {
            assert_eq!(bvn_cdf(f64::INFINITY, k, 0.3).unwrap(), normal::cdf(k));
            assert_eq!(bvn_cdf(k, f64::INFINITY, -0.3).unwrap(), normal::cdf(k));
            assert_eq!(bvn_cdf(f64::NEG_INFINITY, k, 0.3).unwrap(), 0.0);
        }
    }

    #[test]
    fn degenerate_correlations() {
        assert!((bvn_cdf(0.3, -0.2, 1.0).unwrap() - normal::cdf(-0.2)).abs() < 1e-15);
        let expected = (normal::cdf(0.3) - normal::cdf(0.2)).max(0.0);
        assert!((bvn_cdf(0.3, -0.2, -1.0).unwrap() - expected).abs() < 1e-15);
        assert_eq!(bvn_cdf(-0.3, -0.2, -1.0).unwrap(), 0.0);
        assert!(bvn_cdf(0.0, 0.0, 1.2).is_err());
    }

    #[test]
    fn agrees_with_conditioning_quadrature() {
        let cases = [
            (-0.524, 0.253, 0.3),
            (1.2, -0.4, -0.7),
            (-2.0, -1.0, 0.95),
            (0.5, 0.5, -0.99),
            (0.8416, -0.2533, 0.62),
            (-1.2816, -1.2816, 0.999),
            (2.5, 1.0, -0.5),
        ];
        for (h, k, r) in cases {
            let a = bvn_cdf(h, k, r).unwrap();
            let b = bvn_by_conditioning(h, k, r);
            assert!((a - b).abs() < 1e-8, "({h},{k},{r}): {a} vs {b}");
        }
    }

    #[test]
    fn monotone_in_correlation() {
        let mut prev = bvn_cdf(-0.5244, 0.2533, -1.0).unwrap();
        for i in -99..=100 {
            let r = i as f64 / 100.0;
            let cur = bvn_cdf(-0.5244, 0.2533, r).unwrap();
            assert!(cur >= prev - 1e-14);
            prev = cur;
        }
    }
}
