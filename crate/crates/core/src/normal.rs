//! Standard normal helpers shared across modules.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::standard()
}

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        standard().cdf(x)
    }
}

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    standard().pdf(x)
}

/// Standard normal quantile for `p` in (0, 1).
pub fn quantile(p: f64) -> f64 {
    standard().inverse_cdf(p)
}
