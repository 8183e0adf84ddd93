//! Monte Carlo estimate of the true component-wise MSE and the analytic
//! benchmark for centered Gaussian designs.

use super::streams::{derive_stream, role};
use super::FitBuffers;
use crate::dgp::DgpSpec;
use crate::error::{Error, Result};
use crate::ogm::OgmSpec;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Replications per stream. Fixed so that results do not depend on how the
/// chunks are scheduled.
pub const TRUTH_CHUNK: usize = 1000;

/// Minimum replication count accepted by [`estimate_true_mse`].
pub const MIN_TRUTH_REPLICATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrueMse {
    pub per_coefficient: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub replications: usize,
    pub rank_deficient_skipped: usize,
}

/// Running mean and sum of squared deviations per coefficient.
#[derive(Debug, Clone)]
struct Moments {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    skipped: usize,
}

impl Moments {
    fn new(k: usize) -> Moments {
        Moments { count: 0, mean: vec![0.0; k], m2: vec![0.0; k], skipped: 0 }
    }

    fn push(&mut self, values: impl Iterator<Item = f64>) {
        self.count += 1;
        let c = self.count as f64;
        for ((m, s), x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(values) {
            let delta = x - *m;
            *m += delta / c;
            *s += delta * (x - *m);
        }
    }

    fn merge(&mut self, other: &Moments) {
        self.skipped += other.skipped;
        if other.count == 0 {
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let total = na + nb;
        for j in 0..self.mean.len() {
            let delta = other.mean[j] - self.mean[j];
            self.mean[j] += delta * nb / total;
            self.m2[j] += other.m2[j] + delta * delta * na * nb / total;
        }
        self.count += other.count;
    }
}

/// Monte Carlo mean of `(beta_hat_j - beta_j)^2` over `replications` datasets
/// of `n` rows drawn from the true distribution, with standard errors of the
/// mean. Rank-deficient draws are skipped and counted.
pub fn estimate_true_mse(
    dgp: &DgpSpec,
    ogm: &OgmSpec,
    n: usize,
    replications: usize,
    master_seed: u64,
) -> Result<TrueMse> {
    estimate(dgp, ogm, n, replications, master_seed, true)
}

/// Same as [`estimate_true_mse`] for the model without intercept: the fit uses
/// only the feature columns and the result has one entry per slope.
pub fn estimate_true_mse_without_intercept(
    dgp: &DgpSpec,
    ogm: &OgmSpec,
    n: usize,
    replications: usize,
    master_seed: u64,
) -> Result<TrueMse> {
    estimate(dgp, ogm, n, replications, master_seed, false)
}

fn estimate(
    dgp: &DgpSpec,
    ogm: &OgmSpec,
    n: usize,
    replications: usize,
    master_seed: u64,
    intercept: bool,
) -> Result<TrueMse> {
    let p = dgp.p();
    ogm.validate(p)?;
    if replications < MIN_TRUTH_REPLICATIONS {
        return Err(Error::invalid(format!(
            "truth needs at least {MIN_TRUTH_REPLICATIONS} replications, got {replications}"
        )));
    }
    let coefs = if intercept { p + 1 } else { p };
    if n < coefs {
        return Err(Error::invalid(format!("n = {n} cannot identify {coefs} coefficients")));
    }
    let sampler = ogm.error.sampler()?;
    let chunks = replications.div_ceil(TRUTH_CHUNK);
    let partials: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = derive_stream(master_seed, &[role::TRUTH, c as u64]);
            let reps = TRUTH_CHUNK.min(replications - c * TRUTH_CHUNK);
            let mut buf = FitBuffers::new(n, p);
            let mut slopes = DMatrix::zeros(if intercept { 0 } else { n }, p);
            let mut moments = Moments::new(coefs);
            for _ in 0..reps {
                dgp.sample_into(&mut rng, &mut buf.design, &mut buf.scratch);
                sampler.fill(&mut rng, &mut buf.noise);
                let full_rank = if intercept {
                    buf.fit_noise()
                } else {
                    slopes.copy_from(&buf.design.columns(1, p));
                    buf.fit_noise_on(&slopes)
                };
                if full_rank {
                    moments.push(buf.coef[..coefs].iter().map(|d| d * d));
                } else {
                    moments.skipped += 1;
                }
            }
            moments
        })
        .collect();
    let mut total = Moments::new(coefs);
    for part in &partials {
        total.merge(part);
    }
    if total.count == 0 {
        return Err(Error::AllRankDeficient(replications));
    }
    let r = total.count as f64;
    let standard_errors =
        total.m2.iter().map(|s| if total.count > 1 { (s / (r - 1.0)).sqrt() / r.sqrt() } else { 0.0 }).collect();
    Ok(TrueMse {
        per_coefficient: total.mean,
        standard_errors,
        replications: total.count,
        rank_deficient_skipped: total.skipped,
    })
}

/// `sigma2 * (Sigma^-1)_jj / (n - p - 1)`: the expected diagonal of
/// `sigma2 (X^T X)^-1` for `n` rows of a centered `N(0, Sigma)` design without
/// intercept.
pub fn analytic_slope_mse(sigma: &DMatrix<f64>, sigma2: f64, n: usize) -> Result<Vec<f64>> {
    let p = sigma.nrows();
    if sigma.ncols() != p || p == 0 {
        return Err(Error::dims("covariance must be square and non-empty"));
    }
    if n <= p + 1 {
        return Err(Error::invalid(format!("n = {n} must exceed p + 1 = {}", p + 1)));
    }
    let inv = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("covariance is not positive definite".into()))?
        .inverse();
    let denom = (n - p - 1) as f64;
    Ok((0..p).map(|j| sigma2 * inv[(j, j)] / denom).collect())
}
