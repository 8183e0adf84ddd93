//! Catalog of deviations between the assumed and the true scenario.

use super::grid::Grid;
use crate::dgp::{
    power_blocks, resolve_underlying_covariance, Component, CorrelationSpec, DgpSpec, MarginalSpec, MixtureVariance,
};
use crate::error::{Error, Result};
use crate::metrics::AxisOrder;
use crate::ogm::{ErrorDistSpec, OgmSpec};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::E;

/// Assumed coefficient vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoefficientVariant {
    /// `(0, 1/p, 2/p, ..., 1)`.
    I,
    /// All 0.05.
    II,
    /// All 10.
    III,
    /// All 0.
    IV,
}

impl CoefficientVariant {
    pub fn vector(self, p: usize) -> Vec<f64> {
        match self {
            CoefficientVariant::I => (0..=p).map(|j| j as f64 / p as f64).collect(),
            CoefficientVariant::II => vec![0.05; p + 1],
            CoefficientVariant::III => vec![10.0; p + 1],
            CoefficientVariant::IV => vec![0.0; p + 1],
        }
    }

    fn label(self) -> &'static str {
        match self {
            CoefficientVariant::I => "I",
            CoefficientVariant::II => "II",
            CoefficientVariant::III => "III",
            CoefficientVariant::IV => "IV",
        }
    }
}

/// Error family with the true standard deviation kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "camelCase", deny_unknown_fields)]
pub enum ErrorFamily {
    T { df: f64 },
    ChiSq { df: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FeatureSet {
    All,
    /// Features `floor(p/2) + 1` to `p`.
    #[default]
    SecondHalf,
}

impl FeatureSet {
    fn range(self, p: usize) -> std::ops::Range<usize> {
        match self {
            FeatureSet::All => 0..p,
            FeatureSet::SecondHalf => p / 2..p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Structure {
    #[default]
    Fixed,
    /// `rho^|i-j|` within blocks.
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CoefficientsRho {
    pub coefficients: CoefficientVariant,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SdRho {
    pub sd: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MeanVariance {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum DeviationKind {
    /// Normal errors with the given standard deviations.
    ErrorSd {
        values: Grid,
    },
    ErrorDistribution {
        values: Vec<ErrorFamily>,
    },
    Coefficients {
        values: Vec<CoefficientVariant>,
    },
    /// Normal features with the true marginals and a wrong correlation.
    Correlation {
        values: Grid,
        #[serde(default)]
        structure: Structure,
        #[serde(default)]
        block_count: Option<usize>,
    },
    CoefficientsAndCorrelation {
        values: Vec<CoefficientsRho>,
    },
    ErrorSdAndCorrelation {
        values: Vec<SdRho>,
    },
    Mean {
        #[serde(default)]
        features: FeatureSet,
        values: Grid,
    },
    Variance {
        #[serde(default)]
        features: FeatureSet,
        values: Grid,
    },
    MeanAndVariance {
        #[serde(default)]
        features: FeatureSet,
        values: Vec<MeanVariance>,
    },
    /// Second half `alpha N(0, 10) + (1 - alpha) N(0, 1)`, first half a
    /// normal with matching mean and variance.
    MixtureWide {
        values: Grid,
    },
    /// Second half `alpha N(3, 1) + (1 - alpha) N(0, 1)`, first half matched.
    MixtureShifted {
        values: Grid,
    },
    /// Second half `logN(0, 1)`, first half `N(e^0.5, e (e - 1))`.
    LogNormal,
    /// Second half Bernoulli with the given success probabilities.
    Bernoulli {
        values: Grid,
    },
}

impl DeviationKind {
    pub fn name(&self) -> &'static str {
        match self {
            DeviationKind::ErrorSd { .. } => "errorSd",
            DeviationKind::ErrorDistribution { .. } => "errorDistribution",
            DeviationKind::Coefficients { .. } => "coefficients",
            DeviationKind::Correlation { .. } => "correlation",
            DeviationKind::CoefficientsAndCorrelation { .. } => "coefficientsAndCorrelation",
            DeviationKind::ErrorSdAndCorrelation { .. } => "errorSdAndCorrelation",
            DeviationKind::Mean { .. } => "mean",
            DeviationKind::Variance { .. } => "variance",
            DeviationKind::MeanAndVariance { .. } => "meanAndVariance",
            DeviationKind::MixtureWide { .. } => "mixtureWide",
            DeviationKind::MixtureShifted { .. } => "mixtureShifted",
            DeviationKind::LogNormal => "logNormal",
            DeviationKind::Bernoulli { .. } => "bernoulli",
        }
    }

    /// True for single-valued numeric kinds that change the feature
    /// distribution, the only ones a crossover axis can be built from.
    pub fn has_numeric_dgp_axis(&self) -> bool {
        matches!(
            self,
            DeviationKind::Correlation { .. }
                | DeviationKind::Mean { .. }
                | DeviationKind::Variance { .. }
                | DeviationKind::MixtureWide { .. }
                | DeviationKind::MixtureShifted { .. }
                | DeviationKind::Bernoulli { .. }
        )
    }
}

/// One deviation with its value grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeviationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(flatten)]
    pub kind: DeviationKind,
    /// Declares the axis as a crossover axis and the direction in which the
    /// deviation grows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossover: Option<AxisOrder>,
}

impl DeviationSpec {
    pub fn id(&self) -> String {
        self.id.clone().unwrap_or_else(|| self.kind.name().to_string())
    }
}

/// The true scenario as seen by the deviations.
#[derive(Debug, Clone)]
pub struct TruthContext<'a> {
    pub dgp: &'a DgpSpec,
    pub ogm: &'a OgmSpec,
    pub correlation: &'a CorrelationSpec,
    pub convention: MixtureVariance,
}

/// One level of a deviation.
#[derive(Debug, Clone)]
pub struct DeviationPoint {
    pub label: String,
    pub value: Option<f64>,
    /// Assumed feature distribution; `None` keeps the truth.
    pub dgp: Option<Result<DgpSpec>>,
    pub ogm: OgmSpec,
}

fn fmt_value(v: f64) -> String {
    format!("{v}")
}

fn check_sd(sd: f64) -> Result<f64> {
    if sd > 0.0 && sd.is_finite() {
        Ok(sd)
    } else {
        Err(Error::Config(format!("error sd must be positive, got {sd}")))
    }
}

/// Block sizes as equal as possible, larger blocks first.
pub fn even_block_sizes(p: usize, blocks: usize) -> Vec<usize> {
    let (q, r) = (p / blocks, p % blocks);
    (0..blocks).map(|b| q + usize::from(b < r)).collect()
}

impl TruthContext<'_> {
    fn p(&self) -> usize {
        self.dgp.p()
    }

    fn true_matrix(&self) -> CorrelationSpec {
        let m = self.dgp.target_correlation();
        CorrelationSpec::Explicit { matrix: m.row_iter().map(|r| r.iter().copied().collect()).collect() }
    }

    fn with_marginals(&self, marginals: Vec<MarginalSpec>) -> Result<DgpSpec> {
        resolve_underlying_covariance(&marginals, &self.true_matrix(), self.convention)
    }

    fn with_correlation(&self, spec: &CorrelationSpec) -> Result<DgpSpec> {
        resolve_underlying_covariance(self.dgp.marginals(), spec, self.convention)
    }

    fn correlation_spec(&self, rho: f64, structure: Structure, blocks: Option<usize>) -> Result<CorrelationSpec> {
        let p = self.p();
        match structure {
            Structure::Fixed => Ok(CorrelationSpec::Fixed { rho }),
            Structure::Power => {
                let b = blocks.unwrap_or(1);
                if b == 0 || b > p {
                    return Err(Error::Config(format!("block count {b} invalid for {p} features")));
                }
                if !(-1.0..=1.0).contains(&rho) {
                    return Err(Error::Config(format!("correlation {rho} outside [-1, 1]")));
                }
                let m: DMatrix<f64> = power_blocks(rho, &even_block_sizes(p, b));
                Ok(CorrelationSpec::Explicit { matrix: m.row_iter().map(|r| r.iter().copied().collect()).collect() })
            }
        }
    }

    fn ogm_with_error(&self, error: ErrorDistSpec) -> OgmSpec {
        OgmSpec { beta: self.ogm.beta.clone(), error }
    }

    fn ogm_with_beta(&self, beta: Vec<f64>) -> OgmSpec {
        OgmSpec { beta, error: self.ogm.error }
    }

    fn split_marginals(&self, first: MarginalSpec, second: MarginalSpec) -> Vec<MarginalSpec> {
        let p = self.p();
        (0..p).map(|j| if j < p / 2 { first } else { second }).collect()
    }

    fn matched_mixture(&self, alpha: f64, outlier: Component) -> Result<Vec<MarginalSpec>> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("mixing proportion {alpha} outside [0, 1]")));
        }
        let mix =
            MarginalSpec::GaussianMixture { alpha, first: outlier, second: Component { mean: 0.0, variance: 1.0 } };
        let matched = MarginalSpec::Normal { mean: mix.mean(), variance: mix.variance(self.convention) };
        Ok(self.split_marginals(matched, mix))
    }

    fn replace_normals(&self, features: FeatureSet, mean: Option<f64>, variance: Option<f64>) -> Vec<MarginalSpec> {
        let mut marginals = self.dgp.marginals().to_vec();
        for m in &mut marginals[features.range(self.p())] {
            if let MarginalSpec::Normal { mean: mu, variance: var } = *m {
                *m = MarginalSpec::Normal { mean: mean.unwrap_or(mu), variance: variance.unwrap_or(var) };
            }
        }
        marginals
    }

    /// Expands a deviation into its levels.
    pub fn points(&self, kind: &DeviationKind) -> Result<Vec<DeviationPoint>> {
        let p = self.p();
        let truth_ogm = || self.ogm.clone();
        let dgp_point = |label: String, value: Option<f64>, dgp: Result<DgpSpec>| DeviationPoint {
            label,
            value,
            dgp: Some(dgp),
            ogm: truth_ogm(),
        };
        let points = match kind {
            DeviationKind::ErrorSd { values } => values
                .values()?
                .into_iter()
                .map(|sd| {
                    Ok(DeviationPoint {
                        label: fmt_value(sd),
                        value: Some(sd),
                        dgp: None,
                        ogm: self.ogm_with_error(ErrorDistSpec::Normal { sd: check_sd(sd)? }),
                    })
                })
                .collect::<Result<_>>()?,
            DeviationKind::ErrorDistribution { values } => {
                let sd = self.ogm.error.sd();
                values
                    .iter()
                    .map(|f| {
                        let (label, error) = match *f {
                            ErrorFamily::T { df } => (format!("t({df})"), ErrorDistSpec::ScaledT { df, target_sd: sd }),
                            ErrorFamily::ChiSq { df } => {
                                (format!("chisq({df})"), ErrorDistSpec::ShiftedScaledChiSq { df, target_sd: sd })
                            }
                        };
                        error.validate().map_err(|e| Error::Config(e.to_string()))?;
                        Ok(DeviationPoint { label, value: None, dgp: None, ogm: self.ogm_with_error(error) })
                    })
                    .collect::<Result<_>>()?
            }
            DeviationKind::Coefficients { values } => values
                .iter()
                .map(|c| DeviationPoint {
                    label: c.label().to_string(),
                    value: None,
                    dgp: None,
                    ogm: self.ogm_with_beta(c.vector(p)),
                })
                .collect(),
            DeviationKind::Correlation { values, structure, block_count } => values
                .values()?
                .into_iter()
                .map(|rho| {
                    let spec = self.correlation_spec(rho, *structure, *block_count)?;
                    Ok(dgp_point(fmt_value(rho), Some(rho), self.with_correlation(&spec)))
                })
                .collect::<Result<_>>()?,
            DeviationKind::CoefficientsAndCorrelation { values } => values
                .iter()
                .map(|v| DeviationPoint {
                    label: format!("{},rho={}", v.coefficients.label(), v.rho),
                    value: None,
                    dgp: Some(self.with_correlation(&CorrelationSpec::Fixed { rho: v.rho })),
                    ogm: self.ogm_with_beta(v.coefficients.vector(p)),
                })
                .collect(),
            DeviationKind::ErrorSdAndCorrelation { values } => values
                .iter()
                .map(|v| {
                    Ok(DeviationPoint {
                        label: format!("sd={},rho={}", v.sd, v.rho),
                        value: None,
                        dgp: Some(self.with_correlation(&CorrelationSpec::Fixed { rho: v.rho })),
                        ogm: self.ogm_with_error(ErrorDistSpec::Normal { sd: check_sd(v.sd)? }),
                    })
                })
                .collect::<Result<_>>()?,
            DeviationKind::Mean { features, values } => values
                .values()?
                .into_iter()
                .map(|mu| {
                    dgp_point(
                        fmt_value(mu),
                        Some(mu),
                        self.with_marginals(self.replace_normals(*features, Some(mu), None)),
                    )
                })
                .collect(),
            DeviationKind::Variance { features, values } => values
                .values()?
                .into_iter()
                .map(|v| {
                    dgp_point(
                        fmt_value(v),
                        Some(v),
                        self.with_marginals(self.replace_normals(*features, None, Some(v))),
                    )
                })
                .collect(),
            DeviationKind::MeanAndVariance { features, values } => values
                .iter()
                .map(|mv| {
                    dgp_point(
                        format!("mean={},variance={}", mv.mean, mv.variance),
                        None,
                        self.with_marginals(self.replace_normals(*features, Some(mv.mean), Some(mv.variance))),
                    )
                })
                .collect(),
            DeviationKind::MixtureWide { values } => values
                .values()?
                .into_iter()
                .map(|a| {
                    let m = self.matched_mixture(a, Component { mean: 0.0, variance: 10.0 })?;
                    Ok(dgp_point(fmt_value(a), Some(a), self.with_marginals(m)))
                })
                .collect::<Result<_>>()?,
            DeviationKind::MixtureShifted { values } => values
                .values()?
                .into_iter()
                .map(|a| {
                    let m = self.matched_mixture(a, Component { mean: 3.0, variance: 1.0 })?;
                    Ok(dgp_point(fmt_value(a), Some(a), self.with_marginals(m)))
                })
                .collect::<Result<_>>()?,
            DeviationKind::LogNormal => {
                let matched = MarginalSpec::Normal { mean: E.sqrt(), variance: E * (E - 1.0) };
                let log = MarginalSpec::LogNormal { log_mean: 0.0, log_variance: 1.0 };
                vec![dgp_point("logN(0,1)".into(), None, self.with_marginals(self.split_marginals(matched, log)))]
            }
            DeviationKind::Bernoulli { values } => values
                .values()?
                .into_iter()
                .map(|prob| {
                    if !(prob > 0.0 && prob < 1.0) {
                        return Err(Error::Config(format!("Bernoulli probability {prob} outside (0, 1)")));
                    }
                    let mut m = self.dgp.marginals().to_vec();
                    for x in &mut m[p / 2..] {
                        *x = MarginalSpec::Bernoulli { prob };
                    }
                    Ok(dgp_point(fmt_value(prob), Some(prob), self.with_marginals(m)))
                })
                .collect::<Result<_>>()?,
        };
        Ok(points)
    }

    /// True value of the quantity a numeric deviation axis varies, if defined.
    pub fn true_value(&self, kind: &DeviationKind) -> Option<f64> {
        let second = self.dgp.marginals().get(self.p() / 2)?;
        match kind {
            DeviationKind::ErrorSd { .. } => Some(self.ogm.error.sd()),
            DeviationKind::Correlation { structure, .. } => match (structure, self.correlation) {
                (Structure::Fixed, CorrelationSpec::Fixed { rho }) => Some(*rho),
                (Structure::Power, CorrelationSpec::PowerBlock { rho, .. }) => Some(*rho),
                _ => None,
            },
            DeviationKind::Mean { .. } => Some(second.mean()),
            DeviationKind::Variance { .. } => Some(second.variance(self.convention)),
            DeviationKind::MixtureWide { .. } | DeviationKind::MixtureShifted { .. } => Some(0.0),
            _ => None,
        }
    }
}
