//! Feature distributions: marginals, correlation structures, the covariance of
//! the underlying normals and design-matrix sampling.

mod bvn;
pub mod psd;
mod solvers;

pub use bvn::bvn_cdf;
pub use solvers::{
    solve_bernoulli_normal, solve_bernoulli_pair, solve_lognormal_normal, solve_lognormal_pair, solve_mixture_links,
    Component, Mixture, MixturePartner, MixtureVariance, BERNOULLI_GRID_STEP,
};

use crate::error::{Error, Result};
use crate::normal;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Target correlation structure among the features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum CorrelationSpec {
    /// Every off-diagonal entry equals `rho`.
    Fixed {
        rho: f64,
    },
    /// `rho^|i-j|` inside each of `block_count` blocks of `block_size` features.
    PowerBlock {
        rho: f64,
        block_size: usize,
        block_count: usize,
    },
    Explicit {
        matrix: Vec<Vec<f64>>,
    },
}

fn check_rho(rho: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::invalid(format!("correlation {rho} outside [-1, 1]")))
    }
}

/// Expands a [`CorrelationSpec`] to a `p x p` matrix.
pub fn build_correlation_matrix(spec: &CorrelationSpec, p: usize) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::dims("feature count must be at least 1"));
    }
    match spec {
        CorrelationSpec::Fixed { rho } => {
            check_rho(*rho)?;
            let mut m = DMatrix::from_element(p, p, *rho);
            m.fill_diagonal(1.0);
            Ok(m)
        }
        CorrelationSpec::PowerBlock { rho, block_size, block_count } => {
            check_rho(*rho)?;
            if *block_size == 0 || *block_count == 0 || block_size * block_count != p {
                return Err(Error::dims(format!(
                    "{block_count} blocks of {block_size} features do not give {p} features"
                )));
            }
            Ok(power_blocks(*rho, &vec![*block_size; *block_count]))
        }
        CorrelationSpec::Explicit { matrix } => {
            if matrix.len() != p || matrix.iter().any(|row| row.len() != p) {
                return Err(Error::dims(format!("explicit correlation matrix is not {p}x{p}")));
            }
            let m = DMatrix::from_fn(p, p, |i, j| matrix[i][j]);
            validate_correlation(&m)?;
            Ok(m)
        }
    }
}

/// Block-diagonal matrix with `rho^|i-j|` inside blocks of the given sizes.
pub fn power_blocks(rho: f64, sizes: &[usize]) -> DMatrix<f64> {
    let p = sizes.iter().sum();
    let mut m = DMatrix::zeros(p, p);
    let mut start = 0;
    for &size in sizes {
        for i in 0..size {
            for j in 0..size {
                m[(start + i, start + j)] = rho.powi(i.abs_diff(j) as i32);
            }
        }
        start += size;
    }
    m
}

fn validate_correlation(m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        if m[(i, i)] != 1.0 {
            return Err(Error::invalid(format!("correlation diagonal entry {i} is {}", m[(i, i)])));
        }
        for j in 0..i {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            if (a - b).abs() > 1e-12 {
                return Err(Error::invalid(format!("correlation matrix not symmetric at ({i}, {j})")));
            }
            if !(-1.0..=1.0).contains(&a) {
                return Err(Error::invalid(format!("correlation entry ({i}, {j}) = {a} outside [-1, 1]")));
            }
        }
    }
    Ok(())
}

/// Marginal distribution of one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum MarginalSpec {
    Normal {
        mean: f64,
        variance: f64,
    },
    /// `1` when the underlying standard normal falls at or below its `prob`-quantile.
    Bernoulli {
        prob: f64,
    },
    /// `exp` of a normal with the given log-scale mean and variance.
    LogNormal {
        log_mean: f64,
        log_variance: f64,
    },
    /// Takes the `first` component with probability `alpha`, else `second`.
    GaussianMixture {
        alpha: f64,
        first: Component,
        second: Component,
    },
}

impl MarginalSpec {
    pub const STANDARD_NORMAL: MarginalSpec = MarginalSpec::Normal { mean: 0.0, variance: 1.0 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            MarginalSpec::Normal { mean, variance } => {
                if !mean.is_finite() || !(variance > 0.0 && variance.is_finite()) {
                    return Err(Error::invalid(format!("normal marginal N({mean}, {variance})")));
                }
            }
            MarginalSpec::Bernoulli { prob } => {
                if !(prob > 0.0 && prob < 1.0) {
                    return Err(Error::invalid(format!("Bernoulli probability {prob} outside (0, 1)")));
                }
            }
            MarginalSpec::LogNormal { log_mean, log_variance } => {
                if !log_mean.is_finite() || !(log_variance > 0.0 && log_variance.is_finite()) {
                    return Err(Error::invalid(format!("log-normal marginal ({log_mean}, {log_variance})")));
                }
            }
            MarginalSpec::GaussianMixture { .. } => self.mixture().unwrap().validate()?,
        }
        Ok(())
    }

    fn mixture(&self) -> Option<Mixture> {
        match *self {
            MarginalSpec::GaussianMixture { alpha, first, second } => Some(Mixture { alpha, first, second }),
            _ => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            MarginalSpec::Normal { mean, .. } => mean,
            MarginalSpec::Bernoulli { prob } => prob,
            MarginalSpec::LogNormal { log_mean, log_variance } => (log_mean + log_variance / 2.0).exp(),
            MarginalSpec::GaussianMixture { .. } => self.mixture().unwrap().mean(),
        }
    }

    pub fn variance(&self, convention: MixtureVariance) -> f64 {
        match *self {
            MarginalSpec::Normal { variance, .. } => variance,
            MarginalSpec::Bernoulli { prob } => prob * (1.0 - prob),
            MarginalSpec::LogNormal { log_mean, log_variance } => {
                (log_variance.exp() - 1.0) * (2.0 * log_mean + log_variance).exp()
            }
            MarginalSpec::GaussianMixture { .. } => self.mixture().unwrap().variance(convention),
        }
    }

    fn label(&self) -> &'static str {
        match self {
            MarginalSpec::Normal { .. } => "Normal",
            MarginalSpec::Bernoulli { .. } => "Bernoulli",
            MarginalSpec::LogNormal { .. } => "LogNormal",
            MarginalSpec::GaussianMixture { .. } => "GaussianMixture",
        }
    }

    /// Variances of the underlying normal column(s).
    fn underlying_variances(&self) -> Vec<f64> {
        match *self {
            MarginalSpec::Normal { variance, .. } => vec![variance],
            MarginalSpec::Bernoulli { .. } => vec![1.0],
            MarginalSpec::LogNormal { log_variance, .. } => vec![log_variance],
            MarginalSpec::GaussianMixture { first, second, .. } => vec![first.variance, second.variance],
        }
    }
}

/// Underlying normal column(s) feeding one feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnderlyingColumns {
    One(usize),
    Two(usize, usize),
}

impl UnderlyingColumns {
    fn indices(self) -> Vec<usize> {
        match self {
            UnderlyingColumns::One(a) => vec![a],
            UnderlyingColumns::Two(a, b) => vec![a, b],
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Transform {
    Shift { col: usize, mean: f64 },
    Threshold { col: usize, quantile: f64 },
    Exp { col: usize, log_mean: f64 },
    Mix { first: usize, second: usize, alpha: f64, mean1: f64, mean2: f64 },
}

/// Fully resolved feature distribution, ready for sampling.
#[derive(Debug, Clone)]
pub struct DgpSpec {
    marginals: Vec<MarginalSpec>,
    target_correlation: DMatrix<f64>,
    underlying_covariance: DMatrix<f64>,
    psd_repaired: bool,
    columns: Vec<UnderlyingColumns>,
    convention: MixtureVariance,
    factor: DMatrix<f64>,
    lower_factor: bool,
    transforms: Vec<Transform>,
}

impl DgpSpec {
    pub fn p(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[MarginalSpec] {
        &self.marginals
    }

    pub fn target_correlation(&self) -> &DMatrix<f64> {
        &self.target_correlation
    }

    pub fn underlying_covariance(&self) -> &DMatrix<f64> {
        &self.underlying_covariance
    }

    pub fn psd_repaired(&self) -> bool {
        self.psd_repaired
    }

    pub fn columns(&self) -> &[UnderlyingColumns] {
        &self.columns
    }

    pub fn underlying_dim(&self) -> usize {
        self.underlying_covariance.nrows()
    }

    pub fn mixture_variance(&self) -> MixtureVariance {
        self.convention
    }

    pub fn is_all_normal(&self) -> bool {
        self.marginals.iter().all(|m| matches!(m, MarginalSpec::Normal { .. }))
    }

    /// Analytic feature means.
    pub fn mean_vector(&self) -> Vec<f64> {
        self.marginals.iter().map(MarginalSpec::mean).collect()
    }

    /// Analytic covariance of the features implied by the marginals and the
    /// target correlation.
    pub fn feature_covariance(&self) -> DMatrix<f64> {
        let sd: Vec<f64> = self.marginals.iter().map(|m| m.variance(self.convention).sqrt()).collect();
        DMatrix::from_fn(self.p(), self.p(), |i, j| self.target_correlation[(i, j)] * sd[i] * sd[j])
    }

    /// All-normal distribution with the given mean and covariance.
    pub fn gaussian(mean: &[f64], covariance: &DMatrix<f64>) -> Result<DgpSpec> {
        let p = mean.len();
        if p == 0 || covariance.nrows() != p || covariance.ncols() != p {
            return Err(Error::dims(format!(
                "mean has {p} entries, covariance is {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let cov = (covariance + covariance.transpose()) * 0.5;
        let mut marginals = Vec::with_capacity(p);
        for (i, &mu) in mean.iter().enumerate() {
            let m = MarginalSpec::Normal { mean: mu, variance: cov[(i, i)] };
            m.validate().map_err(|_| Error::ZeroVariance(i))?;
            marginals.push(m);
        }
        let corr = DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                1.0
            } else {
                (cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt()).clamp(-1.0, 1.0)
            }
        });
        Self::assemble(marginals, corr, cov, MixtureVariance::Standard)
    }

    fn assemble(
        marginals: Vec<MarginalSpec>,
        target_correlation: DMatrix<f64>,
        covariance: DMatrix<f64>,
        convention: MixtureVariance,
    ) -> Result<DgpSpec> {
        let columns = column_map(&marginals);
        let (underlying_covariance, psd_repaired) = psd::nearest_psd(&covariance);
        let factor = psd::symmetric_factor(&underlying_covariance)?;
        let lower_factor = factor.upper_triangle() == DMatrix::from_diagonal(&factor.diagonal());
        let transforms = marginals
            .iter()
            .zip(&columns)
            .map(|(m, cols)| match (*m, *cols) {
                (MarginalSpec::Normal { mean, .. }, UnderlyingColumns::One(col)) => Transform::Shift { col, mean },
                (MarginalSpec::Bernoulli { prob }, UnderlyingColumns::One(col)) => {
                    Transform::Threshold { col, quantile: normal::quantile(prob) }
                }
                (MarginalSpec::LogNormal { log_mean, .. }, UnderlyingColumns::One(col)) => {
                    Transform::Exp { col, log_mean }
                }
                (MarginalSpec::GaussianMixture { alpha, first: c1, second: c2 }, UnderlyingColumns::Two(a, b)) => {
                    Transform::Mix { first: a, second: b, alpha, mean1: c1.mean, mean2: c2.mean }
                }
                _ => unreachable!("column map disagrees with marginal kind"),
            })
            .collect();
        Ok(DgpSpec {
            marginals,
            target_correlation,
            underlying_covariance,
            psd_repaired,
            columns,
            convention,
            factor,
            lower_factor,
            transforms,
        })
    }

    /// Fills `out` (n x (p+1)) with one design matrix. `scratch` is reused
    /// between calls.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut DMatrix<f64>, scratch: &mut Vec<f64>) {
        let q = self.underlying_dim();
        debug_assert_eq!(out.ncols(), self.p() + 1);
        scratch.resize(2 * q, 0.0);
        let (z, u) = scratch.split_at_mut(q);
        for r in 0..out.nrows() {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            for (i, ui) in u.iter_mut().enumerate() {
                let end = if self.lower_factor { i + 1 } else { q };
                let mut acc = 0.0;
                for k in 0..end {
                    acc += self.factor[(i, k)] * z[k];
                }
                *ui = acc;
            }
            out[(r, 0)] = 1.0;
            for (j, t) in self.transforms.iter().enumerate() {
                out[(r, j + 1)] = match *t {
                    Transform::Shift { col, mean } => mean + u[col],
                    Transform::Threshold { col, quantile } => f64::from(u8::from(u[col] <= quantile)),
                    Transform::Exp { col, log_mean } => (log_mean + u[col]).exp(),
                    Transform::Mix { first, second, alpha, mean1, mean2 } => {
                        if rng.random::<f64>() < alpha {
                            mean1 + u[first]
                        } else {
                            mean2 + u[second]
                        }
                    }
                };
            }
        }
    }

    /// Feeds every parameter that affects sampling into `hasher`.
    pub fn digest_into(&self, hasher: &mut Sha256) {
        hasher.update((self.p() as u64).to_le_bytes());
        for m in &self.marginals {
            let (tag, params): (u8, Vec<f64>) = match *m {
                MarginalSpec::Normal { mean, variance } => (0, vec![mean, variance]),
                MarginalSpec::Bernoulli { prob } => (1, vec![prob]),
                MarginalSpec::LogNormal { log_mean, log_variance } => (2, vec![log_mean, log_variance]),
                MarginalSpec::GaussianMixture { alpha, first, second } => {
                    (3, vec![alpha, first.mean, first.variance, second.mean, second.variance])
                }
            };
            hasher.update([tag]);
            for v in params {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher.update([self.convention as u8]);
        for v in self.underlying_covariance.iter() {
            hasher.update(v.to_le_bytes());
        }
    }
}

fn column_map(marginals: &[MarginalSpec]) -> Vec<UnderlyingColumns> {
    let mut next = 0;
    marginals
        .iter()
        .map(|m| {
            let cols = match m {
                MarginalSpec::GaussianMixture { .. } => UnderlyingColumns::Two(next, next + 1),
                _ => UnderlyingColumns::One(next),
            };
            next += if matches!(cols, UnderlyingColumns::Two(..)) { 2 } else { 1 };
            cols
        })
        .collect()
}

fn pair_covariance(a: &MarginalSpec, b: &MarginalSpec, rho: f64, convention: MixtureVariance) -> Result<f64> {
    use MarginalSpec::*;
    match (*a, *b) {
        (Normal { variance: va, .. }, Normal { variance: vb, .. }) => Ok(rho * (va * vb).sqrt()),
        (Normal { variance, .. }, Bernoulli { prob }) | (Bernoulli { prob }, Normal { variance, .. }) => {
            solve_bernoulli_normal(prob, variance, rho)
        }
        (Normal { variance, .. }, LogNormal { log_mean, log_variance })
        | (LogNormal { log_mean, log_variance }, Normal { variance, .. }) => {
            solve_lognormal_normal(log_mean, log_variance, variance, rho)
        }
        (Normal { variance, .. }, GaussianMixture { .. }) => {
            solve_mixture_links(&b.mixture().unwrap(), MixturePartner::Normal { variance }, rho, convention)
        }
        (GaussianMixture { .. }, Normal { variance, .. }) => {
            solve_mixture_links(&a.mixture().unwrap(), MixturePartner::Normal { variance }, rho, convention)
        }
        (Bernoulli { prob: p1 }, Bernoulli { prob: p2 }) => solve_bernoulli_pair(p1, p2, rho),
        (LogNormal { log_variance: v1, .. }, LogNormal { log_variance: v2, .. }) => solve_lognormal_pair(v1, v2, rho),
        (GaussianMixture { .. }, GaussianMixture { .. }) => {
            solve_mixture_links(&a.mixture().unwrap(), MixturePartner::Mixture(b.mixture().unwrap()), rho, convention)
        }
        _ if rho == 0.0 => Ok(0.0),
        _ => Err(Error::UnsupportedPair(format!("{}/{}", a.label(), b.label()))),
    }
}

/// Resolves the covariance of the underlying normals so that the transformed
/// features reach the target correlation.
///
/// The two components of a mixture are independent of each other. Every
/// component of a mixture shares the same covariance with each partner column.
pub fn resolve_underlying_covariance(
    marginals: &[MarginalSpec],
    target: &CorrelationSpec,
    convention: MixtureVariance,
) -> Result<DgpSpec> {
    let p = marginals.len();
    for m in marginals {
        m.validate()?;
    }
    let corr = build_correlation_matrix(target, p)?;
    let columns = column_map(marginals);
    let q = columns.last().map_or(0, |c| c.indices().last().unwrap() + 1);
    let mut cov = DMatrix::zeros(q, q);
    for (m, cols) in marginals.iter().zip(&columns) {
        for (&c, v) in cols.indices().iter().zip(m.underlying_variances()) {
            cov[(c, c)] = v;
        }
    }
    for i in 0..p {
        for j in (i + 1)..p {
            let c = pair_covariance(&marginals[i], &marginals[j], corr[(i, j)], convention)
                .map_err(|e| Error::PairInfeasible { i, j, source: Box::new(e) })?;
            for a in columns[i].indices() {
                for b in columns[j].indices() {
                    cov[(a, b)] = c;
                    cov[(b, a)] = c;
                }
            }
        }
    }
    DgpSpec::assemble(marginals.to_vec(), corr, cov, convention)
}

/// Design matrix with the intercept column first.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
}

impl DesignMatrix {
    /// Wraps `values` after checking the intercept column and finiteness.
    pub fn new(values: DMatrix<f64>) -> Result<DesignMatrix> {
        if values.ncols() == 0 || values.nrows() == 0 {
            return Err(Error::dims("design matrix needs at least one row and the intercept column"));
        }
        if values.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::invalid("design matrix column 0 must be all ones"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design matrix has non-finite entries"));
        }
        Ok(DesignMatrix { values })
    }

    /// Prepends the intercept column to a feature matrix.
    pub fn from_features(features: &DMatrix<f64>) -> Result<DesignMatrix> {
        let values = features.clone().insert_column(0, 1.0);
        DesignMatrix::new(values)
    }

    pub(crate) fn new_unchecked(values: DMatrix<f64>) -> DesignMatrix {
        DesignMatrix { values }
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    /// Number of features, excluding the intercept.
    pub fn features(&self) -> usize {
        self.values.ncols() - 1
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.values
    }
}

/// Draws an `n`-row design matrix from `spec`.
pub fn sample_design<R: Rng + ?Sized>(spec: &DgpSpec, n: usize, rng: &mut R) -> Result<DesignMatrix> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let mut out = DMatrix::zeros(n, spec.p() + 1);
    let mut scratch = Vec::new();
    spec.sample_into(rng, &mut out, &mut scratch);
    Ok(DesignMatrix::new_unchecked(out))
}
