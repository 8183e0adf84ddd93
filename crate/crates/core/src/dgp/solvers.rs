//! Pairwise solvers for the covariance of the underlying normals.
//!
//! Each transformed marginal (Bernoulli, log-normal, Gaussian mixture) is built
//! from one or two normal variables. Given a target correlation between two
//! transformed variables, these functions return the covariance their underlying
//! normals must have.

use super::bvn::bvn_cdf;
use crate::error::{Error, Result};
use crate::normal;
use serde::{Deserialize, Serialize};

/// Grid step for the Bernoulli–Bernoulli search over the underlying correlation.
pub const BERNOULLI_GRID_STEP: f64 = 1e-4;
const GRID_HALF: i64 = 10_000;

fn check_prob(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must lie in (0, 1), got {p}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {v}")))
    }
}

fn grid_value(index: i64) -> f64 {
    (index - GRID_HALF) as f64 / GRID_HALF as f64
}

/// Underlying correlation for two Bernoulli variables obtained by dichotomizing
/// standard normals at their π-quantiles.
///
/// Searches the grid `[-1, 1]` in steps of `1e-4` for the value whose joint CDF
/// at the two quantiles is closest to the required `P(Y1 = 1, Y2 = 1)`. The CDF
/// is increasing in the correlation, so the closest grid point sits next to
/// the first grid value whose CDF reaches the target.
pub fn solve_bernoulli_pair(p1: f64, p2: f64, rho: f64) -> Result<f64> {
    check_prob("p1", p1)?;
    check_prob("p2", p2)?;
    let scale = (p1 * (1.0 - p1) * p2 * (1.0 - p2)).sqrt();
    let lower = ((p1 + p2 - 1.0).max(0.0) - p1 * p2) / scale;
    let upper = (p1.min(p2) - p1 * p2) / scale;
    if !(rho >= lower - 1e-12 && rho <= upper + 1e-12) {
        return Err(Error::Infeasible {
            pair: format!("Bernoulli({p1})/Bernoulli({p2})"),
            value: rho,
            min: lower,
            max: upper,
        });
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let target = rho * scale + p1 * p2;
    let (u1, u2) = (normal::quantile(p1), normal::quantile(p2));
    let cdf = |i: i64| bvn_cdf(u1, u2, grid_value(i));

    // smallest index whose CDF reaches the target
    let (mut lo, mut hi) = (0_i64, 2 * GRID_HALF);
    if cdf(hi)? < target {
        lo = hi;
    } else {
        while lo < hi {
            let mid = (lo + hi) / 2;
            if cdf(mid)? >= target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
    }
    let mut best = lo;
    let mut best_gap = (cdf(lo)? - target).abs();
    if lo > 0 {
        let gap = (cdf(lo - 1)? - target).abs();
        let closer = gap < best_gap;
        let tie_smaller = gap == best_gap && grid_value(lo - 1).abs() < grid_value(lo).abs();
        if closer || tie_smaller {
            best = lo - 1;
            best_gap = gap;
        }
    }
    let _ = best_gap;
    Ok(grid_value(best))
}

/// Underlying covariance between a normal variable with variance `var1` and the
/// standard normal that is dichotomized into a Bernoulli(`p`) variable.
pub fn solve_bernoulli_normal(p: f64, var1: f64, rho: f64) -> Result<f64> {
    check_prob("p", p)?;
    check_positive("variance", var1)?;
    let density = normal::pdf(normal::quantile(p));
    let sd1 = var1.sqrt();
    let cov = -rho * (var1 * p * (1.0 - p)).sqrt() / density;
    if cov.abs() > sd1 * (1.0 + 1e-12) {
        let bound = density / (p * (1.0 - p)).sqrt();
        return Err(Error::Infeasible {
            pair: format!("Bernoulli({p})/Normal(var {var1})"),
            value: rho,
            min: -bound,
            max: bound,
        });
    }
    Ok(cov)
}

/// Underlying covariance for two log-normal variables with log-scale variances
/// `var2` and `var3`.
pub fn solve_lognormal_pair(var2: f64, var3: f64, rho: f64) -> Result<f64> {
    check_positive("log-variance", var2)?;
    check_positive("log-variance", var3)?;
    let scale = ((var2.exp() - 1.0) * (var3.exp() - 1.0)).sqrt();
    let sd_prod = (var2 * var3).sqrt();
    let lower = ((-sd_prod).exp() - 1.0) / scale;
    let upper = (sd_prod.exp() - 1.0) / scale;
    let arg = rho * scale + 1.0;
    let infeasible = || Error::Infeasible {
        pair: format!("LogNormal(var {var2})/LogNormal(var {var3})"),
        value: rho,
        min: lower,
        max: upper,
    };
    if arg <= 0.0 {
        return Err(infeasible());
    }
    let cov = arg.ln();
    if cov.abs() > sd_prod * (1.0 + 1e-12) {
        return Err(infeasible());
    }
    Ok(cov)
}

/// Underlying covariance between a normal variable with variance `var1` and the
/// normal exponentiated into a log-normal with log-scale mean `log_mean` and
/// variance `log_var`.
///
/// The log-scale mean cancels: the result is `rho * sd1 * sqrt(exp(log_var) - 1)`.
pub fn solve_lognormal_normal(log_mean: f64, log_var: f64, var1: f64, rho: f64) -> Result<f64> {
    check_positive("log-variance", log_var)?;
    check_positive("variance", var1)?;
    if !log_mean.is_finite() {
        return Err(Error::invalid("log-scale mean must be finite"));
    }
    let spread = (log_var.exp() - 1.0).sqrt();
    let cov = rho * var1.sqrt() * spread;
    let limit = (var1 * log_var).sqrt();
    if cov.abs() > limit * (1.0 + 1e-12) {
        let bound = log_var.sqrt() / spread;
        return Err(Error::Infeasible {
            pair: format!("LogNormal(var {log_var})/Normal(var {var1})"),
            value: rho,
            min: -bound,
            max: bound,
        });
    }
    Ok(cov)
}

/// Normal component of a two-component Gaussian mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mean: f64,
    pub variance: f64,
}

/// Mixture `alpha * N(first) + (1 - alpha) * N(second)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub alpha: f64,
    pub first: Component,
    pub second: Component,
}

/// Cross term used in the mixture variance.
///
/// `Standard` is `alpha (1 - alpha) (mu1 - mu2)^2`. `AsPrinted` reproduces the
/// `alpha (1 - alpha^2)` factor of the original derivation and exists only for
/// comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureVariance {
    #[default]
    Standard,
    AsPrinted,
}

impl Mixture {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("mixing proportion {} outside [0, 1]", self.alpha)));
        }
        check_positive("component variance", self.first.variance)?;
        check_positive("component variance", self.second.variance)?;
        if !self.first.mean.is_finite() || !self.second.mean.is_finite() {
            return Err(Error::invalid("component means must be finite"));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.alpha * self.first.mean + (1.0 - self.alpha) * self.second.mean
    }

    pub fn variance(&self, convention: MixtureVariance) -> f64 {
        let a = self.alpha;
        let d = self.first.mean - self.second.mean;
        let cross = match convention {
            MixtureVariance::Standard => a * (1.0 - a),
            MixtureVariance::AsPrinted => a * (1.0 - a * a),
        };
        a * self.first.variance + (1.0 - a) * self.second.variance + cross * d * d
    }
}

/// What the mixture is paired with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixturePartner {
    Mixture(Mixture),
    Normal { variance: f64 },
    None,
}

/// Common covariance between each underlying component of `mixture` and each
/// underlying normal of its partner.
///
/// The assignment is symmetric: every cross covariance gets the same value.
/// For a mixture pair the four weights `α1α2 + (1-α1)α2 + α1(1-α2) + (1-α1)(1-α2)`
/// sum to one, leaving `rho * sqrt(v1 v2)`.
pub fn solve_mixture_links(
    mixture: &Mixture,
    partner: MixturePartner,
    rho: f64,
    convention: MixtureVariance,
) -> Result<f64> {
    mixture.validate()?;
    let v1 = mixture.variance(convention);
    check_positive("mixture variance", v1)?;
    let comps1 = [mixture.first.variance.sqrt(), mixture.second.variance.sqrt()];
    let (cov, partner_sds, partner_sd) = match partner {
        MixturePartner::None => return Ok(0.0),
        MixturePartner::Normal { variance } => {
            check_positive("variance", variance)?;
            (rho * (variance * v1).sqrt(), vec![variance.sqrt()], variance.sqrt())
        }
        MixturePartner::Mixture(other) => {
            other.validate()?;
            let v2 = other.variance(convention);
            check_positive("mixture variance", v2)?;
            (rho * (v1 * v2).sqrt(), vec![other.first.variance.sqrt(), other.second.variance.sqrt()], v2.sqrt())
        }
    };
    // every implied underlying correlation must be a correlation
    let mut tightest = f64::INFINITY;
    for a in comps1 {
        for &b in &partner_sds {
            tightest = tightest.min(a * b);
        }
    }
    if cov.abs() > tightest * (1.0 + 1e-12) {
        let bound = tightest / (v1.sqrt() * partner_sd);
        return Err(Error::Infeasible {
            pair: "GaussianMixture pair".to_string(),
            value: rho,
            min: -bound,
            max: bound,
        });
    }
    Ok(cov)
}
