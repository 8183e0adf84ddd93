//! Resampling a source design matrix for Plasmode studies.

use crate::dgp::{psd, DesignMatrix};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Strategy {
    /// With replacement, `n` rows out of `ceil(n / pi)`.
    MOutOfN,
    /// With replacement, `n` rows out of `n`.
    NOutOfN,
    /// Without replacement, `n` rows out of `ceil(n / pi)`.
    Subsampling,
    /// Bootstrap plus Gaussian kernel noise with Silverman's bandwidth.
    Smoothed,
    /// Each feature column perturbed by a random multiple of its standardized values.
    Wild,
    /// The source itself.
    None,
}

impl Strategy {
    pub fn uses_proportion(self) -> bool {
        matches!(self, Strategy::MOutOfN | Strategy::Subsampling)
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::MOutOfN => "mOutOfN",
            Strategy::NOutOfN => "nOutOfN",
            Strategy::Subsampling => "subsampling",
            Strategy::Smoothed => "smoothed",
            Strategy::Wild => "wild",
            Strategy::None => "none",
        }
    }
}

/// Strategy, proportion and the sizes of source and resampled designs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResamplePlan {
    pub strategy: Strategy,
    pub proportion: f64,
    pub target_n: usize,
    pub source_size: usize,
}

impl ResamplePlan {
    /// Builds a plan. `proportion` only matters for m-out-of-n and subsampling
    /// and is stored as 1 otherwise.
    pub fn new(strategy: Strategy, proportion: f64, target_n: usize) -> Result<ResamplePlan> {
        if target_n == 0 {
            return Err(Error::invalid("resampled size must be positive"));
        }
        let proportion = if strategy.uses_proportion() { proportion } else { 1.0 };
        if !(proportion > 0.0 && proportion <= 1.0) {
            return Err(Error::invalid(format!("resampling proportion {proportion} outside (0, 1]")));
        }
        let source_size = if strategy.uses_proportion() {
            // guard against n / pi landing a hair above an integer
            (target_n as f64 / proportion - 1e-9).ceil() as usize
        } else {
            target_n
        };
        Ok(ResamplePlan { strategy, proportion, target_n, source_size })
    }

    /// Pins the source size independently of the proportion.
    pub fn with_source_size(mut self, source_size: usize) -> Result<ResamplePlan> {
        let needs_target = matches!(self.strategy, Strategy::Subsampling);
        let fixed = matches!(self.strategy, Strategy::None | Strategy::Wild);
        if source_size == 0 || (needs_target && source_size < self.target_n) || (fixed && source_size != self.target_n)
        {
            return Err(Error::invalid(format!(
                "source size {source_size} incompatible with {} drawing {} rows",
                self.strategy.name(),
                self.target_n
            )));
        }
        self.source_size = source_size;
        Ok(self)
    }
}

/// Kernel covariance for the smoothed bootstrap.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthMatrix {
    pub h: DMatrix<f64>,
}

/// `H = (4 / (d + 2))^(2 / (d + 4)) * m^(-2 / (d + 4)) * S` for the `m x d`
/// feature block of `source`, where `S` is its sample covariance.
pub fn silverman_bandwidth(source: &DesignMatrix) -> Result<BandwidthMatrix> {
    let m = source.rows();
    let d = source.features();
    if m < 2 {
        return Err(Error::invalid("bandwidth needs at least two rows"));
    }
    if d == 0 {
        return Ok(BandwidthMatrix { h: DMatrix::zeros(0, 0) });
    }
    let feats = source.matrix().columns(1, d);
    let means = feats.row_mean();
    let centered = DMatrix::from_fn(m, d, |i, j| feats[(i, j)] - means[j]);
    let cov = centered.transpose() * &centered / (m as f64 - 1.0);
    let dd = d as f64;
    let factor = (4.0 / (dd + 2.0)).powf(2.0 / (dd + 4.0)) * (m as f64).powf(-2.0 / (dd + 4.0));
    Ok(BandwidthMatrix { h: cov * factor })
}

/// Column means and `(m - 1)`-denominator standard deviations of the features.
fn column_stats(source: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let m = source.nrows() as f64;
    let mut means = Vec::new();
    let mut sds = Vec::new();
    for j in 1..source.ncols() {
        let col = source.column(j);
        let mean = col.sum() / m;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        means.push(mean);
        sds.push((ss / (m - 1.0)).sqrt());
    }
    (means, sds)
}

/// A plan bound to one source design, with the per-source quantities cached.
#[derive(Debug, Clone)]
pub struct Resampler<'a> {
    plan: ResamplePlan,
    source: &'a DMatrix<f64>,
    kernel: Option<DMatrix<f64>>,
    stats: Option<(Vec<f64>, Vec<f64>)>,
    indices: Vec<usize>,
    noise: Vec<f64>,
}

impl<'a> Resampler<'a> {
    pub fn new(plan: ResamplePlan, source: &'a DesignMatrix) -> Result<Resampler<'a>> {
        if source.rows() != plan.source_size {
            return Err(Error::dims(format!("source has {} rows, plan expects {}", source.rows(), plan.source_size)));
        }
        let kernel = match plan.strategy {
            Strategy::Smoothed => Some(psd::symmetric_factor(&silverman_bandwidth(source)?.h)?),
            _ => None,
        };
        let stats = match plan.strategy {
            Strategy::Wild => {
                if source.rows() < 2 {
                    return Err(Error::invalid("wild bootstrap needs at least two rows"));
                }
                let (means, sds) = column_stats(source.matrix());
                if let Some(j) = sds.iter().position(|&s| s.is_nan() || s <= 0.0) {
                    return Err(Error::ZeroVariance(j + 1));
                }
                Some((means, sds))
            }
            _ => None,
        };
        Ok(Resampler { plan, source: source.matrix(), kernel, stats, indices: Vec::new(), noise: Vec::new() })
    }

    pub fn plan(&self) -> &ResamplePlan {
        &self.plan
    }

    /// Writes one resampled design into `out`, which must be `target_n x (p + 1)`.
    pub fn draw_into<R: Rng + ?Sized>(&mut self, rng: &mut R, out: &mut DMatrix<f64>) {
        let n = self.plan.target_n;
        let m = self.source.nrows();
        let cols = self.source.ncols();
        debug_assert_eq!(out.shape(), (n, cols));
        match self.plan.strategy {
            Strategy::None => out.copy_from(self.source),
            Strategy::MOutOfN | Strategy::NOutOfN => {
                for r in 0..n {
                    let s = rng.random_range(0..m);
                    self.copy_row(s, r, out);
                }
            }
            Strategy::Subsampling => {
                self.indices.clear();
                self.indices.extend(index::sample(rng, m, n));
                for r in 0..n {
                    self.copy_row(self.indices[r], r, out);
                }
            }
            Strategy::Smoothed => {
                let l = self.kernel.as_ref().expect("kernel cached for smoothed bootstrap");
                let d = cols - 1;
                self.noise.resize(d, 0.0);
                for r in 0..n {
                    let s = rng.random_range(0..m);
                    for z in self.noise.iter_mut() {
                        *z = rng.sample(StandardNormal);
                    }
                    out[(r, 0)] = 1.0;
                    for j in 0..d {
                        let mut e = 0.0;
                        for k in 0..d {
                            e += l[(j, k)] * self.noise[k];
                        }
                        out[(r, j + 1)] = self.source[(s, j + 1)] + e;
                    }
                }
            }
            Strategy::Wild => {
                let (means, sds) = self.stats.as_ref().expect("column stats cached for wild bootstrap");
                out.column_mut(0).fill(1.0);
                for j in 1..cols {
                    let a: f64 = rng.sample(StandardNormal);
                    let (mean, sd) = (means[j - 1], sds[j - 1]);
                    for r in 0..n {
                        let x = self.source[(r, j)];
                        out[(r, j)] = x + a * (x - mean) / sd;
                    }
                }
            }
        }
    }

    fn copy_row(&self, from: usize, to: usize, out: &mut DMatrix<f64>) {
        for j in 0..self.source.ncols() {
            out[(to, j)] = self.source[(from, j)];
        }
    }
}

/// Draws one resampled design from `source`.
pub fn resample<R: Rng + ?Sized>(plan: &ResamplePlan, source: &DesignMatrix, rng: &mut R) -> Result<DesignMatrix> {
    let mut resampler = Resampler::new(*plan, source)?;
    let mut out = DMatrix::zeros(plan.target_n, source.features() + 1);
    resampler.draw_into(rng, &mut out);
    Ok(DesignMatrix::new_unchecked(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, prop_oneof, proptest, Just};
    use proptest::strategy::Strategy as PropStrategy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn source(rows: usize, d: usize, seed: u64) -> DesignMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = DMatrix::from_fn(rows, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        DesignMatrix::from_features(&f).unwrap()
    }

    fn row(m: &DMatrix<f64>, r: usize) -> Vec<u64> {
        m.row(r).iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn source_sizes() {
        assert_eq!(ResamplePlan::new(Strategy::MOutOfN, 0.632, 100).unwrap().source_size, 159);
        assert_eq!(ResamplePlan::new(Strategy::Subsampling, 0.1, 100).unwrap().source_size, 1000);
        assert_eq!(ResamplePlan::new(Strategy::Subsampling, 0.01, 100).unwrap().source_size, 10_000);
        assert_eq!(ResamplePlan::new(Strategy::MOutOfN, 0.5, 50).unwrap().source_size, 100);
        let nn = ResamplePlan::new(Strategy::NOutOfN, 0.3, 100).unwrap();
        assert_eq!((nn.source_size, nn.proportion), (100, 1.0));
        assert_eq!(ResamplePlan::new(Strategy::MOutOfN, 1.0, 100).unwrap().source_size, 100);
        assert!(ResamplePlan::new(Strategy::MOutOfN, 0.0, 100).is_err());
        assert!(ResamplePlan::new(Strategy::Subsampling, 1.2, 100).is_err());
    }

    #[test]
    fn pinned_source_size() {
        let plan = ResamplePlan::new(Strategy::Subsampling, 0.5, 50).unwrap().with_source_size(100).unwrap();
        assert_eq!(plan.source_size, 100);
        assert!(ResamplePlan::new(Strategy::Subsampling, 0.5, 50).unwrap().with_source_size(40).is_err());
    }

    #[test]
    fn none_returns_source() {
        let src = source(20, 3, 1);
        let plan = ResamplePlan::new(Strategy::None, 1.0, 20).unwrap();
        let out = resample(&plan, &src, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out, src);
    }

    #[test]
    fn full_subsample_is_permutation() {
        let src = source(30, 2, 2);
        let plan = ResamplePlan::new(Strategy::Subsampling, 1.0, 30).unwrap();
        let out = resample(&plan, &src, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut a: Vec<_> = (0..30).map(|r| row(src.matrix(), r)).collect();
        let mut b: Vec<_> = (0..30).map(|r| row(out.matrix(), r)).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_source_rejected() {
        let plan = ResamplePlan::new(Strategy::MOutOfN, 0.632, 100).unwrap();
        assert!(resample(&plan, &source(158, 2, 0), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn silverman_examples() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        // covariance of these four points is (2/3) I
        let src = DesignMatrix::from_features(&x).unwrap();
        let h = silverman_bandwidth(&src).unwrap().h;
        let expected = 4.0_f64.powf(-1.0 / 3.0) * 2.0 / 3.0;
        assert!((h[(0, 0)] - expected).abs() < 1e-14);
        assert_eq!(h[(0, 1)], 0.0);

        let identity_factor = 100.0_f64.powf(-1.0 / 3.0);
        assert!((identity_factor - 0.2154).abs() < 1e-4);

        let uni = DesignMatrix::from_features(&DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0])).unwrap();
        let h1 = silverman_bandwidth(&uni).unwrap().h[(0, 0)];
        assert!((h1 - (4.0_f64 / 3.0).powf(0.4) * 3.0_f64.powf(-0.4) * 1.0).abs() < 1e-14);
    }

    #[test]
    fn bandwidth_shrinks_with_rows() {
        let small = silverman_bandwidth(&source(50, 2, 4)).unwrap().h.amax();
        let large = silverman_bandwidth(&source(50_000, 2, 4)).unwrap().h.amax();
        assert!(large < small / 10.0);
    }

    #[test]
    fn wild_rejects_constant_column() {
        let mut f = DMatrix::from_fn(5, 2, |i, _| i as f64);
        f.column_mut(1).fill(2.0);
        let src = DesignMatrix::from_features(&f).unwrap();
        let plan = ResamplePlan::new(Strategy::Wild, 1.0, 5).unwrap();
        assert!(matches!(Resampler::new(plan, &src), Err(Error::ZeroVariance(2))));
    }

    #[test]
    fn wild_affine_identity() {
        let src = source(40, 3, 5);
        let plan = ResamplePlan::new(Strategy::Wild, 1.0, 40).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let out = resample(&plan, &src, &mut rng).unwrap();
        let mut replay = ChaCha8Rng::seed_from_u64(6);
        let (means, sds) = column_stats(src.matrix());
        let (out_means, out_sds) = column_stats(out.matrix());
        for j in 0..3 {
            let a: f64 = replay.sample(StandardNormal);
            assert!((out_means[j] - means[j]).abs() < 1e-12);
            let factor = (1.0 + a / sds[j]).abs();
            assert!((out_sds[j] - sds[j] * factor).abs() < 1e-12);
        }
        assert!(out.matrix().column(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn smoothed_noise_vanishes_with_bandwidth() {
        // tiny spread makes H negligible, so smoothed rows sit on source rows
        let f = DMatrix::from_fn(200, 2, |i, j| 1e-9 * ((i * 7 + j * 3) % 11) as f64 + j as f64);
        let src = DesignMatrix::from_features(&f).unwrap();
        let plan = ResamplePlan::new(Strategy::Smoothed, 1.0, 200).unwrap();
        let out = resample(&plan, &src, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        for j in 1..3 {
            let diff = out.matrix().column(j).mean() - src.matrix().column(j).mean();
            assert!(diff.abs() < 1e-8);
        }
    }

    fn strategies() -> impl PropStrategy<Value = (Strategy, f64)> {
        prop_oneof![
            (Just(Strategy::MOutOfN), 0.05..1.0_f64),
            Just((Strategy::NOutOfN, 1.0)),
            (Just(Strategy::Subsampling), 0.05..1.0_f64),
            Just((Strategy::Smoothed, 1.0)),
            Just((Strategy::Wild, 1.0)),
            Just((Strategy::None, 1.0)),
        ]
    }

    proptest! {
        #[test]
        fn output_shape_and_intercept((strategy, pi) in strategies(), n in 2usize..30, seed in any::<u64>()) {
            let plan = ResamplePlan::new(strategy, pi, n).unwrap();
            let src = source(plan.source_size, 2, seed);
            let out = resample(&plan, &src, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(out.rows(), n);
            prop_assert!(out.matrix().column(0).iter().all(|&v| v == 1.0));
        }

        #[test]
        fn subsampling_never_repeats(pi in 0.05..1.0_f64, n in 2usize..30, seed in any::<u64>()) {
            let plan = ResamplePlan::new(Strategy::Subsampling, pi, n).unwrap();
            let src = source(plan.source_size, 2, seed);
            let out = resample(&plan, &src, &mut ChaCha8Rng::seed_from_u64(seed ^ 1)).unwrap();
            let rows: HashSet<_> = (0..n).map(|r| row(out.matrix(), r)).collect();
            prop_assert_eq!(rows.len(), n);
        }
    }
}
