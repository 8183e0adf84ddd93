use super::dataset::{ingest_dataset, DatasetSummary};
use super::deviation::{DeviationPoint, DeviationSpec, TruthContext};
use crate::dgp::{resolve_underlying_covariance, CorrelationSpec, DgpSpec, MarginalSpec, MixtureVariance};
use crate::engine::{Simulation, MIN_TRUTH_REPLICATIONS};
use crate::error::{Error, Result};
use crate::metrics::AxisOrder;
use crate::ogm::{ErrorDistSpec, OgmSpec};
use crate::resampling::{ResamplePlan, Strategy};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

fn default_error() -> ErrorDistSpec {
    ErrorDistSpec::Normal { sd: 0.3 }
}

/// True scenario: standard normal features with the given correlation, or
/// with the correlation estimated from a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TruthConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationSpec>,
    /// CSV file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Defaults to all ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default = "default_error")]
    pub error: ErrorDistSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviations: Option<Vec<DeviationSpec>>,
}

fn default_plugin_size() -> usize {
    1000
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", rename_all_fields = "camelCase", deny_unknown_fields)]
pub enum VariantConfig {
    Parametric {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        /// Design size, defaults to the scenario's `n`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    /// Parametric with mean and covariance estimated from one sample of the truth.
    Plugin {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default = "default_plugin_size")]
        sample_size: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    Plasmode {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        strategy: Strategy,
        #[serde(default = "one")]
        proportion: f64,
        /// Resampled size, defaults to the scenario's `n`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
        /// Pins the source size instead of deriving it from the proportion.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source_size: Option<usize>,
    },
}

impl VariantConfig {
    pub fn name(&self) -> String {
        match self {
            VariantConfig::Parametric { name: Some(n), .. }
            | VariantConfig::Plugin { name: Some(n), .. }
            | VariantConfig::Plasmode { name: Some(n), .. } => n.clone(),
            VariantConfig::Parametric { n: size, .. } => match size {
                Some(m) => format!("parametric(n={m})"),
                None => "parametric".into(),
            },
            VariantConfig::Plugin { sample_size, n: size, .. } => match size {
                Some(m) => format!("plugin({sample_size},n={m})"),
                None => format!("plugin({sample_size})"),
            },
            VariantConfig::Plasmode { strategy, proportion, n, source_size, .. } => {
                let mut parts = Vec::new();
                if strategy.uses_proportion() {
                    parts.push(format!("{proportion}"));
                }
                if let Some(m) = n {
                    parts.push(format!("n={m}"));
                }
                if let Some(s) = source_size {
                    parts.push(format!("source={s}"));
                }
                if parts.is_empty() {
                    strategy.name().to_string()
                } else {
                    format!("{}({})", strategy.name(), parts.join(","))
                }
            }
        }
    }

    pub fn is_plasmode(&self) -> bool {
        matches!(self, VariantConfig::Plasmode { .. })
    }

    pub fn is_parametric(&self) -> bool {
        matches!(self, VariantConfig::Parametric { .. })
    }

    /// Design size and simulation for a scenario of `n` rows. Parametric
    /// variants receive the truth here and are swapped to the assumed
    /// distribution by the sweep.
    pub fn simulation(&self, n: usize, truth: &DgpSpec) -> Result<(usize, Simulation)> {
        match self {
            VariantConfig::Parametric { n: m, .. } => Ok((m.unwrap_or(n), Simulation::Parametric(truth.clone()))),
            VariantConfig::Plugin { sample_size, n: m, .. } => {
                Ok((m.unwrap_or(n), Simulation::Plugin { sample_size: *sample_size }))
            }
            VariantConfig::Plasmode { strategy, proportion, n: m, source_size, .. } => {
                let mut plan = ResamplePlan::new(*strategy, *proportion, m.unwrap_or(n))?;
                if let Some(s) = source_size {
                    plan = plan.with_source_size(*s)?;
                }
                Ok((plan.target_n, Simulation::Plasmode(plan)))
            }
        }
    }
}

fn default_n_mse() -> usize {
    100
}

fn default_n_mod() -> usize {
    1000
}

fn default_truth_reps() -> usize {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RuntimeConfig {
    #[serde(default = "default_n_mse")]
    pub n_mse: usize,
    #[serde(default = "default_n_mod")]
    pub n_mod: usize,
    #[serde(default = "default_truth_reps")]
    pub truth_replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Worker threads; ignored by the library, read by the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub mixture_variance: MixtureVariance,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            n_mse: default_n_mse(),
            n_mod: default_n_mod(),
            truth_replications: default_truth_reps(),
            master_seed: 0,
            workers: None,
            mixture_variance: MixtureVariance::Standard,
        }
    }
}

/// A sweep: scenarios, each with a deviation list, crossed with simulation variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenarios: Vec<ScenarioEntry>,
    pub simulations: Vec<VariantConfig>,
    #[serde(default)]
    pub runtime: RuntimeConfig,
}

/// Named truths and deviation lists that fill in what a config leaves out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Preset {
    pub scenarios: BTreeMap<String, PresetScenario>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PresetScenario {
    pub truth: TruthConfig,
    pub deviations: Vec<DeviationSpec>,
}

const TABLE4: &str = include_str!("../../presets/table4.json");

impl Preset {
    pub fn from_json(s: &str) -> Result<Preset> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// Built-in preset by name. `table4` holds the true scenarios with their
    /// complete deviation grids.
    pub fn builtin(name: &str) -> Result<Preset> {
        match name {
            "table4" => Preset::from_json(TABLE4),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<ScenarioConfig> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Fills missing truths and deviation lists from `preset`.
    pub fn apply_preset(&mut self, preset: &Preset) -> Result<()> {
        for s in &mut self.scenarios {
            if s.truth.is_some() && s.deviations.is_some() {
                continue;
            }
            let entry = preset
                .scenarios
                .get(&s.name)
                .ok_or_else(|| Error::Config(format!("preset has no scenario '{}'", s.name)))?;
            s.truth.get_or_insert_with(|| entry.truth.clone());
            s.deviations.get_or_insert_with(|| entry.deviations.clone());
        }
        Ok(())
    }

    /// Structural checks that need no files.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.scenarios.is_empty() {
            return cfg("no scenarios".into());
        }
        if self.simulations.is_empty() {
            return cfg("no simulation variants".into());
        }
        let rt = &self.runtime;
        if rt.n_mse == 0 || rt.n_mod == 0 {
            return cfg("nMse and nMod must be at least 1".into());
        }
        if rt.truth_replications < MIN_TRUTH_REPLICATIONS {
            return cfg(format!("truthReplications must be at least {MIN_TRUTH_REPLICATIONS}"));
        }
        if rt.workers == Some(0) {
            return cfg("workers must be at least 1".into());
        }
        let mut names = HashSet::new();
        for v in &self.simulations {
            if !names.insert(v.name()) {
                return cfg(format!("duplicate simulation variant '{}'", v.name()));
            }
        }
        let mut scenario_names = HashSet::new();
        for s in &self.scenarios {
            if !scenario_names.insert(&s.name) {
                return cfg(format!("duplicate scenario '{}'", s.name));
            }
            let truth = s.truth.as_ref().ok_or_else(|| Error::Config(format!("scenario '{}' has no truth", s.name)))?;
            match (&truth.correlation, &truth.dataset) {
                (Some(_), None) if truth.p.is_none() => return cfg(format!("scenario '{}' needs p", s.name)),
                (Some(_), None) | (None, Some(_)) => {}
                _ => return cfg(format!("scenario '{}' needs exactly one of correlation and dataset", s.name)),
            }
            if truth.error.sd().is_nan() || truth.error.sd() <= 0.0 {
                return cfg(format!("scenario '{}': error sd must be positive", s.name));
            }
            let mut ids = HashSet::new();
            for d in s.deviations.iter().flatten() {
                let id = d.id();
                if id == BASELINE || !ids.insert(id.clone()) {
                    return cfg(format!("scenario '{}': duplicate deviation id '{id}'", s.name));
                }
                if d.crossover.is_some() && !d.kind.has_numeric_dgp_axis() {
                    return cfg(format!("deviation '{id}' of kind {} cannot be a crossover axis", d.kind.name()));
                }
            }
        }
        Ok(())
    }

    /// Loads datasets (relative to `base_dir`) and builds every truth and deviation level.
    pub fn resolve(&self, base_dir: &Path) -> Result<Vec<ResolvedScenario>> {
        self.validate()?;
        self.scenarios.iter().map(|s| resolve_scenario(s, &self.runtime, base_dir)).collect()
    }
}

/// Deviation id of the true-model baseline.
pub const BASELINE: &str = "true";

#[derive(Debug, Clone)]
pub struct ResolvedDeviation {
    pub id: String,
    pub kind: &'static str,
    pub crossover: Option<AxisOrder>,
    pub true_value: Option<f64>,
    pub points: Vec<DeviationPoint>,
}

#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub name: String,
    pub n: usize,
    pub truth_dgp: DgpSpec,
    pub truth_ogm: OgmSpec,
    pub dataset: Option<(DatasetSummary, String)>,
    /// Baseline first, then the configured deviations.
    pub deviations: Vec<ResolvedDeviation>,
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn resolve_scenario(s: &ScenarioEntry, rt: &RuntimeConfig, base_dir: &Path) -> Result<ResolvedScenario> {
    let truth = s.truth.as_ref().expect("validated");
    let context = |e: Error| Error::Config(format!("scenario '{}': {e}", s.name));
    let (correlation, dataset) = match (&truth.correlation, &truth.dataset) {
        (Some(c), _) => (c.clone(), None),
        (None, Some(path)) => {
            let full = base_dir.join(path);
            let data = ingest_dataset(&full).map_err(context)?;
            let digest = file_digest(&full)?;
            let r = data.summary.correlation.clone();
            (CorrelationSpec::Explicit { matrix: r }, Some((data.summary, digest)))
        }
        (None, None) => unreachable!("validated"),
    };
    let p = match (&dataset, truth.p) {
        (Some((d, _)), Some(p)) if d.feature_count != p => {
            return Err(context(Error::dims(format!("dataset has {} features, config says {p}", d.feature_count))))
        }
        (Some((d, _)), _) => d.feature_count,
        (None, p) => p.expect("validated"),
    };
    let dgp = resolve_underlying_covariance(&vec![MarginalSpec::STANDARD_NORMAL; p], &correlation, rt.mixture_variance)
        .map_err(context)?;
    let ogm = OgmSpec { beta: truth.beta.clone().unwrap_or_else(|| vec![1.0; p + 1]), error: truth.error };
    ogm.validate(p).map_err(context)?;
    if truth.n <= p + 1 {
        return Err(context(Error::invalid(format!("n = {} must exceed p + 1 = {}", truth.n, p + 1))));
    }

    let ctx = TruthContext { dgp: &dgp, ogm: &ogm, correlation: &correlation, convention: rt.mixture_variance };
    let mut deviations = vec![ResolvedDeviation {
        id: BASELINE.into(),
        kind: "trueModel",
        crossover: None,
        true_value: None,
        points: vec![DeviationPoint { label: BASELINE.into(), value: None, dgp: None, ogm: ogm.clone() }],
    }];
    for d in s.deviations.iter().flatten() {
        deviations.push(ResolvedDeviation {
            id: d.id(),
            kind: d.kind.name(),
            crossover: d.crossover,
            true_value: ctx.true_value(&d.kind),
            points: ctx.points(&d.kind).map_err(context)?,
        });
    }
    Ok(ResolvedScenario { name: s.name.clone(), n: truth.n, truth_dgp: dgp, truth_ogm: ogm, dataset, deviations })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "scenarios": [{"name": "s", "truth": {"p": 2, "n": 100, "correlation": {"kind": "fixed", "rho": 0.2}}}],
        "simulations": [{"kind": "parametric"}, {"kind": "plasmode", "strategy": "mOutOfN", "proportion": 0.1}]
    }"#;

    #[test]
    fn minimal_config_defaults() {
        let c = ScenarioConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.runtime, RuntimeConfig::default());
        let t = c.scenarios[0].truth.as_ref().unwrap();
        assert_eq!(t.error, ErrorDistSpec::Normal { sd: 0.3 });
        assert_eq!(c.simulations[1].name(), "mOutOfN(0.1)");
        let r = c.resolve(Path::new(".")).unwrap();
        assert_eq!(r[0].truth_ogm.beta, vec![1.0; 3]);
        assert_eq!(r[0].deviations.len(), 1);
        assert_eq!(r[0].deviations[0].id, BASELINE);
    }

    #[test]
    fn round_trips_through_json() {
        let mut c = ScenarioConfig::from_json(MINIMAL).unwrap();
        c.apply_preset(&Preset::builtin("table4").unwrap()).unwrap_err();
        c.scenarios[0].name = "p2n100rho0.2".into();
        c.apply_preset(&Preset::builtin("table4").unwrap()).unwrap();
        assert!(!c.scenarios[0].deviations.as_ref().unwrap().is_empty());
        let again = ScenarioConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn variant_names() {
        let v: Vec<VariantConfig> = serde_json::from_str(
            r#"[{"kind": "plasmode", "strategy": "nOutOfN"},
                {"kind": "plasmode", "strategy": "subsampling", "proportion": 0.632, "n": 50, "sourceSize": 100},
                {"kind": "plugin"},
                {"kind": "parametric", "name": "custom"}]"#,
        )
        .unwrap();
        let names: Vec<String> = v.iter().map(VariantConfig::name).collect();
        assert_eq!(names, vec!["nOutOfN", "subsampling(0.632,n=50,source=100)", "plugin(1000)", "custom"]);
        let truth = resolve_underlying_covariance(
            &[MarginalSpec::STANDARD_NORMAL; 2],
            &CorrelationSpec::Fixed { rho: 0.0 },
            MixtureVariance::Standard,
        )
        .unwrap();
        let (n, sim) = v[1].simulation(100, &truth).unwrap();
        assert_eq!(n, 50);
        match sim {
            Simulation::Plasmode(plan) => assert_eq!(plan.source_size, 100),
            _ => panic!(),
        }
    }

    #[test]
    fn validation_errors() {
        let bad = |patch: &str| {
            let s = MINIMAL.replace(r#""simulations""#, &format!("{patch}, \"simulations\""));
            ScenarioConfig::from_json(&s).and_then(|c| c.validate())
        };
        assert!(bad(r#""runtime": {"nMse": 0}"#).is_err());
        assert!(bad(r#""runtime": {"truthReplications": 10}"#).is_err());
        assert!(bad(r#""runtime": {"unknown": 1}"#).is_err());
        let dup = MINIMAL.replace(r#"{"kind": "parametric"}"#, r#"{"kind": "parametric"}, {"kind": "parametric"}"#);
        assert!(ScenarioConfig::from_json(&dup).unwrap().validate().is_err());
        let sd0 = MINIMAL.replace(r#""n": 100,"#, r#""n": 100, "error": {"kind": "normal", "sd": 0},"#);
        assert!(ScenarioConfig::from_json(&sd0).unwrap().validate().is_err());
        let axis = MINIMAL.replace(
            r#""n": 100, "correlation": {"kind": "fixed", "rho": 0.2}}"#,
            r#""n": 100, "correlation": {"kind": "fixed", "rho": 0.2}}, "deviations": [{"kind": "errorSd", "values": 0.1, "crossover": "increasing"}]"#,
        );
        assert!(ScenarioConfig::from_json(&axis).unwrap().validate().is_err());
        let no_p = MINIMAL.replace(r#""p": 2, "#, "");
        assert!(ScenarioConfig::from_json(&no_p).unwrap().validate().is_err());
    }

    #[test]
    fn table4_preset_resolves() {
        let preset = Preset::builtin("table4").unwrap();
        assert_eq!(preset.scenarios.len(), 12);
        for (name, s) in &preset.scenarios {
            if s.truth.dataset.is_some() {
                continue;
            }
            let c = ScenarioConfig {
                scenarios: vec![ScenarioEntry { name: name.clone(), truth: None, deviations: None }],
                simulations: vec![VariantConfig::Parametric { name: None, n: None }],
                runtime: RuntimeConfig::default(),
            };
            let mut c = c;
            c.apply_preset(&preset).unwrap();
            let r = c.resolve(Path::new(".")).unwrap();
            assert!(r[0].deviations.len() > 10, "{name}");
        }
        assert!(Preset::builtin("nope").is_err());
    }
}
