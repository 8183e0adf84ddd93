//! Study execution: the truth oracle, parametric, plug-in and Plasmode studies.
//!
//! Every random draw comes from a stream derived from the master seed and a
//! path that starts with a [`role`] tag:
//!
//! | draw                       | path                      |
//! |----------------------------|---------------------------|
//! | parametric design `(k, i)` | `[DESIGN, k, i]`          |
//! | outcome noise `(k, i)`     | `[NOISE, k, i]`           |
//! | Plasmode source `k`        | `[SOURCE, k]`             |
//! | resampled design `(k, i)`  | `[RESAMPLE, k, i]`        |
//! | plug-in estimate `k`       | `[PLUGIN, k]`             |
//! | truth chunk `c`            | `[TRUTH, c]`              |
//!
//! Studies that share a master seed therefore share random numbers, which
//! makes comparisons across deviations paired.

pub mod streams;
mod truth;

pub use streams::{derive_stream, role, Stream};
pub use truth::{
    analytic_slope_mse, estimate_true_mse, estimate_true_mse_without_intercept, TrueMse, MIN_TRUTH_REPLICATIONS,
    TRUTH_CHUNK,
};

use crate::dgp::{sample_design, DesignMatrix, DgpSpec};
use crate::error::{Error, Result};
use crate::ogm::{LstsqWorkspace, OgmSpec};
use crate::resampling::{ResamplePlan, Resampler};
use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Buffers for one worker's sequence of fits.
pub(crate) struct FitBuffers {
    pub design: DMatrix<f64>,
    pub scratch: Vec<f64>,
    pub noise: Vec<f64>,
    pub coef: Vec<f64>,
    ws: LstsqWorkspace,
}

impl FitBuffers {
    pub fn new(n: usize, p: usize) -> FitBuffers {
        FitBuffers {
            design: DMatrix::zeros(n, p + 1),
            scratch: Vec::new(),
            noise: vec![0.0; n],
            coef: vec![0.0; p + 1],
            ws: LstsqWorkspace::default(),
        }
    }

    /// Regresses the noise on the design, which gives `beta_hat - beta` for
    /// `y = X beta + noise` without touching `beta`. Returns false when the fit
    /// is rank deficient.
    pub fn fit_noise(&mut self) -> bool {
        let cols = self.design.ncols();
        self.ws.solve(&self.design, &self.noise, &mut self.coef[..cols]) == cols
    }

    pub fn fit_noise_on(&mut self, x: &DMatrix<f64>) -> bool {
        let cols = x.ncols();
        self.ws.solve(x, &self.noise, &mut self.coef[..cols]) == cols
    }
}

/// How the designs of a study are produced.
#[derive(Debug, Clone)]
pub enum Simulation {
    /// Designs drawn from an assumed distribution.
    Parametric(DgpSpec),
    /// Designs drawn from a normal distribution whose mean and covariance are
    /// estimated, once per repetition, from `sample_size` rows of the truth.
    Plugin { sample_size: usize },
    /// Designs resampled from one source drawn from the truth per repetition.
    Plasmode(ResamplePlan),
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    /// True feature distribution. Plasmode sources and plug-in estimates come from it.
    pub truth_dgp: DgpSpec,
    pub assumed_ogm: OgmSpec,
    pub simulation: Simulation,
    pub n: usize,
    pub n_mse: usize,
    pub n_mod: usize,
    pub master_seed: u64,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let p = self.truth_dgp.p();
        if self.n <= p {
            return Err(Error::invalid(format!("n = {} must exceed p = {p}", self.n)));
        }
        if self.n_mse == 0 || self.n_mod == 0 {
            return Err(Error::invalid("n_mse and n_mod must be at least 1"));
        }
        self.assumed_ogm.validate(p)?;
        match &self.simulation {
            Simulation::Parametric(dgp) if dgp.p() != p => {
                Err(Error::dims(format!("assumed distribution has {} features, truth has {p}", dgp.p())))
            }
            Simulation::Plugin { sample_size } if *sample_size <= p + 1 => {
                Err(Error::invalid(format!("plug-in sample size {sample_size} must exceed p + 1")))
            }
            Simulation::Plasmode(plan) if plan.target_n <= p => {
                Err(Error::invalid(format!("resampled size {} must exceed p = {p}", plan.target_n)))
            }
            _ => Ok(()),
        }
    }
}

/// Estimated component-wise MSE from one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MseEstimate {
    pub per_coefficient: Vec<f64>,
    pub successful_iterations: usize,
    pub rank_deficient_skipped: usize,
}

struct Accumulator {
    sums: Vec<f64>,
    ok: usize,
    skipped: usize,
}

impl Accumulator {
    fn new(k: usize) -> Accumulator {
        Accumulator { sums: vec![0.0; k], ok: 0, skipped: 0 }
    }

    fn record(&mut self, buf: &mut FitBuffers) {
        if buf.fit_noise() {
            for (s, d) in self.sums.iter_mut().zip(&buf.coef) {
                *s += d * d;
            }
            self.ok += 1;
        } else {
            self.skipped += 1;
        }
    }

    fn finish(self) -> Result<MseEstimate> {
        if self.ok == 0 {
            return Err(Error::AllRankDeficient(self.skipped));
        }
        let n = self.ok as f64;
        Ok(MseEstimate {
            per_coefficient: self.sums.into_iter().map(|s| s / n).collect(),
            successful_iterations: self.ok,
            rank_deficient_skipped: self.skipped,
        })
    }
}

fn parametric(config: &StudyConfig, dgp: &DgpSpec, k: usize) -> Result<MseEstimate> {
    let p = dgp.p();
    let sampler = config.assumed_ogm.error.sampler()?;
    let mut buf = FitBuffers::new(config.n, p);
    let mut acc = Accumulator::new(p + 1);
    for i in 0..config.n_mod {
        let (k, i) = (k as u64, i as u64);
        let mut design_rng = derive_stream(config.master_seed, &[role::DESIGN, k, i]);
        dgp.sample_into(&mut design_rng, &mut buf.design, &mut buf.scratch);
        let mut noise_rng = derive_stream(config.master_seed, &[role::NOISE, k, i]);
        sampler.fill(&mut noise_rng, &mut buf.noise);
        acc.record(&mut buf);
    }
    acc.finish()
}

/// One repetition of a parametric study (plain or plug-in).
pub fn run_parametric_study(config: &StudyConfig, k: usize) -> Result<MseEstimate> {
    config.validate()?;
    match &config.simulation {
        Simulation::Parametric(dgp) => parametric(config, dgp, k),
        Simulation::Plugin { sample_size } => {
            let mut rng = derive_stream(config.master_seed, &[role::PLUGIN, k as u64]);
            let dgp = estimate_plugin_dgp(&config.truth_dgp, *sample_size, &mut rng)?;
            parametric(config, &dgp, k)
        }
        Simulation::Plasmode(_) => Err(Error::invalid("config describes a Plasmode study")),
    }
}

/// One repetition of a Plasmode study: a fresh source from the truth, then
/// `n_mod` resampled designs.
pub fn run_plasmode_study(config: &StudyConfig, k: usize) -> Result<MseEstimate> {
    config.validate()?;
    let Simulation::Plasmode(plan) = &config.simulation else {
        return Err(Error::invalid("config describes a parametric study"));
    };
    let p = config.truth_dgp.p();
    let mut source_rng = derive_stream(config.master_seed, &[role::SOURCE, k as u64]);
    let source = sample_design(&config.truth_dgp, plan.source_size, &mut source_rng)?;
    let mut resampler = Resampler::new(*plan, &source)?;
    let sampler = config.assumed_ogm.error.sampler()?;
    let mut buf = FitBuffers::new(plan.target_n, p);
    let mut acc = Accumulator::new(p + 1);
    for i in 0..config.n_mod {
        let (k, i) = (k as u64, i as u64);
        let mut rs_rng = derive_stream(config.master_seed, &[role::RESAMPLE, k, i]);
        resampler.draw_into(&mut rs_rng, &mut buf.design);
        let mut noise_rng = derive_stream(config.master_seed, &[role::NOISE, k, i]);
        sampler.fill(&mut noise_rng, &mut buf.noise);
        acc.record(&mut buf);
    }
    acc.finish()
}

/// One repetition of whichever study `config` describes.
pub fn run_study(config: &StudyConfig, k: usize) -> Result<MseEstimate> {
    match config.simulation {
        Simulation::Plasmode(_) => run_plasmode_study(config, k),
        _ => run_parametric_study(config, k),
    }
}

/// All `n_mse` repetitions, computed in parallel and returned in index order.
pub fn run_repetitions(config: &StudyConfig) -> Result<Vec<MseEstimate>> {
    config.validate()?;
    (0..config.n_mse).into_par_iter().map(|k| run_study(config, k)).collect()
}

/// All-normal distribution with mean and covariance estimated from
/// `sample_size` rows of `truth`.
pub fn estimate_plugin_dgp<R: Rng + ?Sized>(truth: &DgpSpec, sample_size: usize, rng: &mut R) -> Result<DgpSpec> {
    let p = truth.p();
    if sample_size <= p + 1 {
        return Err(Error::invalid(format!("plug-in sample size {sample_size} must exceed p + 1")));
    }
    let x = sample_design(truth, sample_size, rng)?;
    let (mean, cov) = feature_moments(&x);
    DgpSpec::gaussian(&mean, &cov)
}

/// Column means and `(m - 1)`-denominator covariance of the feature columns.
pub fn feature_moments(x: &DesignMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let m = x.rows();
    let p = x.features();
    let feats = x.matrix().columns(1, p);
    let mean: Vec<f64> = (0..p).map(|j| feats.column(j).mean()).collect();
    let centered = DMatrix::from_fn(m, p, |i, j| feats[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (m as f64 - 1.0);
    (mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{resolve_underlying_covariance, CorrelationSpec, MarginalSpec, MixtureVariance};
    use crate::ogm::{fit_lse, ErrorDistSpec};
    use crate::resampling::Strategy;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dgp(p: usize, rho: f64) -> DgpSpec {
        resolve_underlying_covariance(
            &vec![MarginalSpec::STANDARD_NORMAL; p],
            &CorrelationSpec::Fixed { rho },
            MixtureVariance::Standard,
        )
        .unwrap()
    }

    fn config(sim: Simulation, beta: f64, sd: f64) -> StudyConfig {
        StudyConfig {
            truth_dgp: dgp(2, 0.2),
            assumed_ogm: OgmSpec { beta: vec![beta; 3], error: ErrorDistSpec::Normal { sd } },
            simulation: sim,
            n: 40,
            n_mse: 3,
            n_mod: 50,
            master_seed: 77,
        }
    }

    #[test]
    fn beta_does_not_change_estimates() {
        let base = run_repetitions(&config(Simulation::Parametric(dgp(2, 0.2)), 1.0, 0.3)).unwrap();
        for beta in [0.0, 0.05, 10.0] {
            let other = run_repetitions(&config(Simulation::Parametric(dgp(2, 0.2)), beta, 0.3)).unwrap();
            assert_eq!(base, other);
        }
    }

    #[test]
    fn noise_fit_matches_direct_fit() {
        let cfg = config(Simulation::Parametric(dgp(2, 0.2)), 1.0, 0.3);
        let mut rng = derive_stream(cfg.master_seed, &[role::DESIGN, 0, 0]);
        let x = sample_design(&cfg.truth_dgp, cfg.n, &mut rng).unwrap();
        let mut noise_rng = derive_stream(cfg.master_seed, &[role::NOISE, 0, 0]);
        let eps = crate::ogm::sample_errors(&cfg.assumed_ogm.error, cfg.n, &mut noise_rng).unwrap();
        let beta = DVector::from_element(3, 1.0);
        let direct = fit_lse(&x, &(x.matrix() * &beta + DVector::from_vec(eps.clone()))).unwrap();
        let mut buf = FitBuffers::new(cfg.n, 2);
        buf.design.copy_from(x.matrix());
        buf.noise.copy_from_slice(&eps);
        assert!(buf.fit_noise());
        for j in 0..3 {
            assert!((direct.beta_hat[j] - 1.0 - buf.coef[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_scales_estimates_quadratically() {
        let a = run_repetitions(&config(Simulation::Parametric(dgp(2, 0.2)), 1.0, 0.3)).unwrap();
        let b = run_repetitions(&config(Simulation::Parametric(dgp(2, 0.2)), 1.0, 3.0)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.per_coefficient.iter().zip(&y.per_coefficient) {
                assert!((v / u - 100.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn plasmode_without_resampling_reuses_source() {
        let plan = ResamplePlan::new(Strategy::None, 1.0, 40).unwrap();
        let cfg = StudyConfig { n_mod: 4000, n_mse: 1, ..config(Simulation::Plasmode(plan), 1.0, 0.3) };
        let est = run_plasmode_study(&cfg, 0).unwrap();
        let mut rng = derive_stream(cfg.master_seed, &[role::SOURCE, 0]);
        let source = sample_design(&cfg.truth_dgp, 40, &mut rng).unwrap();
        let xtx = source.matrix().transpose() * source.matrix();
        let inv = xtx.try_inverse().unwrap();
        for j in 0..3 {
            let fixed = 0.09 * inv[(j, j)];
            // relative sd of a mean of 4000 scaled chi2(1) draws is sqrt(2/4000)
            assert!((est.per_coefficient[j] / fixed - 1.0).abs() < 5.0 * (2.0_f64 / 4000.0).sqrt());
        }
    }

    #[test]
    fn plasmode_rejects_parametric_config() {
        let cfg = config(Simulation::Parametric(dgp(2, 0.2)), 1.0, 0.3);
        assert!(run_plasmode_study(&cfg, 0).is_err());
    }

    #[test]
    fn repetitions_independent_of_thread_count() {
        let plan = ResamplePlan::new(Strategy::MOutOfN, 0.5, 40).unwrap();
        let cfg = config(Simulation::Plasmode(plan), 1.0, 0.3);
        let run = |t| {
            rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap().install(|| run_repetitions(&cfg).unwrap())
        };
        assert_eq!(run(1), run(2));
    }

    #[test]
    fn rank_deficiency_counted() {
        let bern = resolve_underlying_covariance(
            &[MarginalSpec::Bernoulli { prob: 0.03 }, MarginalSpec::STANDARD_NORMAL],
            &CorrelationSpec::Fixed { rho: 0.0 },
            MixtureVariance::Standard,
        )
        .unwrap();
        let cfg = StudyConfig { n: 10, n_mod: 200, ..config(Simulation::Parametric(bern), 1.0, 0.3) };
        let est = run_parametric_study(&cfg, 0).unwrap();
        assert!(est.rank_deficient_skipped > 0);
        assert_eq!(est.successful_iterations + est.rank_deficient_skipped, 200);
    }

    #[test]
    fn plugin_converges_to_truth() {
        let truth = dgp(3, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let est = estimate_plugin_dgp(&truth, 1_000_000, &mut rng).unwrap();
        let diff = est.underlying_covariance() - truth.underlying_covariance();
        assert!(diff.amax() < 0.01);
        assert!(est.mean_vector().iter().all(|m| m.abs() < 0.01));
        assert!(estimate_plugin_dgp(&truth, 4, &mut rng).is_err());
    }

    #[test]
    fn plugin_study_runs() {
        let cfg = config(Simulation::Plugin { sample_size: 1000 }, 1.0, 0.3);
        let reps = run_repetitions(&cfg).unwrap();
        assert_eq!(reps.len(), 3);
        assert!(reps.iter().all(|r| r.successful_iterations == 50));
    }
}
