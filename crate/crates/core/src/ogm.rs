//! Outcome generation for the linear model and the least-squares fit.

use crate::dgp::DesignMatrix;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

/// Error distribution. Every kind has mean 0 and standard deviation `sd()`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum ErrorDistSpec {
    Normal {
        sd: f64,
    },
    /// `target_sd * T / sqrt(df / (df - 2))` with `T ~ t(df)`.
    ScaledT {
        df: f64,
        target_sd: f64,
    },
    /// `target_sd * (C - df) / sqrt(2 df)` with `C ~ chi^2(df)`.
    ShiftedScaledChiSq {
        df: f64,
        target_sd: f64,
    },
}

impl ErrorDistSpec {
    pub fn sd(&self) -> f64 {
        match *self {
            ErrorDistSpec::Normal { sd } => sd,
            ErrorDistSpec::ScaledT { target_sd, .. } | ErrorDistSpec::ShiftedScaledChiSq { target_sd, .. } => target_sd,
        }
    }

    /// Same distribution family with a different standard deviation.
    pub fn with_sd(&self, sd: f64) -> ErrorDistSpec {
        match *self {
            ErrorDistSpec::Normal { .. } => ErrorDistSpec::Normal { sd },
            ErrorDistSpec::ScaledT { df, .. } => ErrorDistSpec::ScaledT { df, target_sd: sd },
            ErrorDistSpec::ShiftedScaledChiSq { df, .. } => ErrorDistSpec::ShiftedScaledChiSq { df, target_sd: sd },
        }
    }

    /// Checks parameters. A zero standard deviation is accepted here; configs
    /// reject it separately.
    pub fn validate(&self) -> Result<()> {
        let sd = self.sd();
        if !(sd >= 0.0 && sd.is_finite()) {
            return Err(Error::invalid(format!("error sd must be non-negative, got {sd}")));
        }
        match *self {
            ErrorDistSpec::ScaledT { df, .. } if !(df > 2.0 && df.is_finite()) => {
                Err(Error::invalid(format!("t errors need df > 2 for a finite variance, got {df}")))
            }
            ErrorDistSpec::ShiftedScaledChiSq { df, .. } if !(df > 0.0 && df.is_finite()) => {
                Err(Error::invalid(format!("chi-squared errors need df > 0, got {df}")))
            }
            _ => Ok(()),
        }
    }

    pub fn sampler(&self) -> Result<ErrorSampler> {
        self.validate()?;
        let kind = match *self {
            ErrorDistSpec::Normal { .. } => Standardized::Normal,
            ErrorDistSpec::ScaledT { df, .. } => Standardized::T {
                dist: StudentT::new(df).map_err(|e| Error::invalid(e.to_string()))?,
                scale: (df / (df - 2.0)).sqrt(),
            },
            ErrorDistSpec::ShiftedScaledChiSq { df, .. } => Standardized::ChiSq {
                dist: ChiSquared::new(df).map_err(|e| Error::invalid(e.to_string()))?,
                df,
                scale: (2.0 * df).sqrt(),
            },
        };
        Ok(ErrorSampler { kind, sd: self.sd() })
    }
}

#[derive(Debug, Clone, Copy)]
enum Standardized {
    Normal,
    T { dist: StudentT<f64>, scale: f64 },
    ChiSq { dist: ChiSquared<f64>, df: f64, scale: f64 },
}

/// Draws errors as `sd` times a mean-0, variance-1 variate, so two samplers
/// that differ only in `sd` produce proportional draws from the same stream.
#[derive(Debug, Clone, Copy)]
pub struct ErrorSampler {
    kind: Standardized,
    sd: f64,
}

impl ErrorSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z = match &self.kind {
            Standardized::Normal => rng.sample::<f64, _>(StandardNormal),
            Standardized::T { dist, scale } => dist.sample(rng) / scale,
            Standardized::ChiSq { dist, df, scale } => (dist.sample(rng) - df) / scale,
        };
        self.sd * z
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for v in out {
            *v = self.draw(rng);
        }
    }
}

/// Draws `n` errors.
pub fn sample_errors<R: Rng + ?Sized>(spec: &ErrorDistSpec, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let sampler = spec.sampler()?;
    let mut out = vec![0.0; n];
    sampler.fill(rng, &mut out);
    Ok(out)
}

/// Coefficients (intercept first) and error distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OgmSpec {
    pub beta: Vec<f64>,
    pub error: ErrorDistSpec,
}

impl OgmSpec {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.beta.len() != p + 1 {
            return Err(Error::dims(format!("beta has {} entries, expected {}", self.beta.len(), p + 1)));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("beta must be finite"));
        }
        self.error.validate()
    }
}

/// `y = X beta + eps`.
pub fn generate_outcome<R: Rng + ?Sized>(x: &DesignMatrix, ogm: &OgmSpec, rng: &mut R) -> Result<DVector<f64>> {
    ogm.validate(x.features())?;
    let eps = sample_errors(&ogm.error, x.rows(), rng)?;
    let beta = DVector::from_column_slice(&ogm.beta);
    Ok(x.matrix() * beta + DVector::from_vec(eps))
}

/// Least-squares coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LseFit {
    pub beta_hat: DVector<f64>,
    pub rank_deficient: bool,
    pub rank: usize,
}

/// Least-squares fit through a column-pivoted Householder QR.
///
/// Flags rank deficiency when the numerical rank falls below the column count.
/// The tolerance is `sigma_max * max(n, p + 1) * eps`.
pub fn fit_lse(x: &DesignMatrix, y: &DVector<f64>) -> Result<LseFit> {
    let m = x.matrix();
    if y.len() != m.nrows() {
        return Err(Error::dims(format!("y has {} entries, X has {} rows", y.len(), m.nrows())));
    }
    if m.nrows() < m.ncols() {
        return Err(Error::dims(format!("{} rows cannot identify {} coefficients", m.nrows(), m.ncols())));
    }
    let mut ws = LstsqWorkspace::default();
    let mut beta = vec![0.0; m.ncols()];
    let rank = ws.solve(m, y.as_slice(), &mut beta);
    Ok(LseFit { beta_hat: DVector::from_vec(beta), rank_deficient: rank < m.ncols(), rank })
}

/// Reusable buffers for repeated least-squares solves of the same shape.
#[derive(Debug, Default, Clone)]
pub struct LstsqWorkspace {
    a: Vec<f64>,
    qty: Vec<f64>,
    perm: Vec<usize>,
    norms: Vec<f64>,
    base_norms: Vec<f64>,
    z: Vec<f64>,
}

impl LstsqWorkspace {
    /// Solves `min ||y - X b||` and writes `b` into `beta`. Returns the numerical
    /// rank. Rank-deficient problems get the basic solution with the trailing
    /// pivoted coefficients set to zero.
    ///
    /// `X` must have at least as many rows as columns.
    pub fn solve(&mut self, x: &DMatrix<f64>, y: &[f64], beta: &mut [f64]) -> usize {
        let (n, m) = x.shape();
        debug_assert!(n >= m && y.len() == n && beta.len() == m);
        self.a.clear();
        self.a.extend_from_slice(x.as_slice());
        self.qty.clear();
        self.qty.extend_from_slice(y);
        self.perm.clear();
        self.perm.extend(0..m);
        self.norms.clear();
        for j in 0..m {
            let col = &self.a[j * n..(j + 1) * n];
            self.norms.push(col.iter().map(|v| v * v).sum());
        }
        self.base_norms.clone_from(&self.norms);

        for k in 0..m {
            let mut pivot = k;
            for j in (k + 1)..m {
                if self.norms[j] > self.norms[pivot] {
                    pivot = j;
                }
            }
            if pivot != k {
                for i in 0..n {
                    self.a.swap(k * n + i, pivot * n + i);
                }
                self.perm.swap(k, pivot);
                self.norms.swap(k, pivot);
                self.base_norms.swap(k, pivot);
            }

            let (head, tail) = self.a.split_at_mut((k + 1) * n);
            let colk = &mut head[k * n..];
            let normx = colk[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if normx == 0.0 {
                continue;
            }
            let alpha = if colk[k] > 0.0 { -normx } else { normx };
            colk[k] -= alpha;
            let vnorm2: f64 = colk[k..].iter().map(|v| v * v).sum();
            let tau = 2.0 / vnorm2;
            let v = &colk[k..];
            for j in (k + 1)..m {
                let c = &mut tail[(j - k - 1) * n + k..(j - k) * n];
                let s = tau * v.iter().zip(c.iter()).map(|(a, b)| a * b).sum::<f64>();
                for (ci, vi) in c.iter_mut().zip(v) {
                    *ci -= s * vi;
                }
                let r = c[0];
                self.norms[j] -= r * r;
                if self.norms[j] <= 1e-6 * self.base_norms[j] {
                    self.norms[j] = c[1..].iter().map(|v| v * v).sum();
                    self.base_norms[j] = self.norms[j];
                }
            }
            let q = &mut self.qty[k..];
            let s = tau * v.iter().zip(q.iter()).map(|(a, b)| a * b).sum::<f64>();
            for (qi, vi) in q.iter_mut().zip(v) {
                *qi -= s * vi;
            }
            colk[k] = alpha;
        }

        let rank = self.numerical_rank(n, m);
        self.z.clear();
        self.z.resize(m, 0.0);
        for k in (0..rank).rev() {
            let mut acc = self.qty[k];
            for j in (k + 1)..rank {
                acc -= self.a[j * n + k] * self.z[j];
            }
            self.z[k] = acc / self.a[k * n + k];
        }
        for (k, &orig) in self.perm.iter().enumerate() {
            beta[orig] = self.z[k];
        }
        rank
    }

    fn r_diag(&self, n: usize, k: usize) -> f64 {
        self.a[k * n + k].abs()
    }

    fn numerical_rank(&self, n: usize, m: usize) -> usize {
        let scale = n.max(m) as f64 * f64::EPSILON;
        let mut frob2 = 0.0;
        for j in 0..m {
            for i in 0..=j {
                frob2 += self.a[j * n + i] * self.a[j * n + i];
            }
        }
        // |R00| <= sigma_max <= ||R||_F bracket the tolerance
        let tol_low = self.r_diag(n, 0) * scale;
        let tol_high = frob2.sqrt() * scale;
        let (low, high) = (self.leading_rank(n, m, tol_low), self.leading_rank(n, m, tol_high));
        if low == high {
            return low;
        }
        let r = DMatrix::from_fn(m, m, |i, j| if i <= j { self.a[j * n + i] } else { 0.0 });
        self.leading_rank(n, m, r.singular_values().max() * scale)
    }

    fn leading_rank(&self, n: usize, m: usize, tol: f64) -> usize {
        (0..m).take_while(|&k| self.r_diag(n, k) > tol).count()
    }
}
