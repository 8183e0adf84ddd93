use super::config::{ResolvedScenario, ScenarioConfig, VariantConfig, BASELINE};
use super::dataset::DatasetSummary;
use crate::dgp::DgpSpec;
use crate::engine::{estimate_true_mse, run_repetitions, MseEstimate, Simulation, StudyConfig, TrueMse};
use crate::error::{Error, Result};
use crate::metrics::{
    component_errors, crossover, summarize_repetitions, CrossoverResult, ErrorReport, RepetitionSummary,
};
use crate::ogm::OgmSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

/// Results of one variant at one deviation level.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub variant: String,
    pub deviation: String,
    pub level: String,
    pub value: Option<f64>,
    pub psd_repaired: bool,
    pub estimates: Vec<MseEstimate>,
    pub reports: Vec<ErrorReport>,
    /// Summary of the mean absolute relative errors.
    pub aggregate: RepetitionSummary,
    /// Summary of the mean signed relative errors.
    pub signed_aggregate: RepetitionSummary,
    /// Summaries of the relative errors per coefficient.
    pub coefficients: Vec<RepetitionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Skipped {
    pub scenario: String,
    pub variant: String,
    pub deviation: String,
    pub level: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverRow {
    pub parametric: String,
    pub deviation: String,
    pub kind: String,
    pub true_value: Option<f64>,
    pub result: CrossoverResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub name: String,
    pub p: usize,
    pub n: usize,
    pub truth_key: String,
    pub dataset: Option<(DatasetSummary, String)>,
    pub cells: Vec<Cell>,
    pub crossovers: Vec<CrossoverRow>,
}

impl ScenarioResult {
    pub fn cell(&self, variant: &str, deviation: &str, level: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.variant == variant && c.deviation == deviation && c.level == level)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub config: ScenarioConfig,
    pub variants: Vec<String>,
    pub plasmode_variants: Vec<String>,
    /// True MSEs keyed by the content hash of their inputs.
    pub truths: BTreeMap<String, TrueMse>,
    pub scenarios: Vec<ScenarioResult>,
    pub skipped: Vec<Skipped>,
}

impl Bundle {
    pub fn empty(config: ScenarioConfig) -> Bundle {
        let variants = config.simulations.iter().map(VariantConfig::name).collect();
        let plasmode_variants =
            config.simulations.iter().filter(|v| v.is_plasmode()).map(VariantConfig::name).collect();
        Bundle {
            config,
            variants,
            plasmode_variants,
            truths: BTreeMap::new(),
            scenarios: Vec::new(),
            skipped: Vec::new(),
        }
    }

    pub fn scenario(&self, name: &str) -> Option<&ScenarioResult> {
        self.scenarios.iter().find(|s| s.name == name)
    }

    pub fn truth(&self, scenario: &ScenarioResult) -> &TrueMse {
        &self.truths[&scenario.truth_key]
    }
}

/// Content hash of the inputs of a truth estimate.
pub fn truth_key(dgp: &DgpSpec, ogm: &OgmSpec, n: usize, replications: usize, seed: u64) -> String {
    let mut h = Sha256::new();
    dgp.digest_into(&mut h);
    h.update(serde_json::to_vec(ogm).expect("ogm serializes"));
    for v in [n as u64, replications as u64, seed] {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn study_key(variant: &VariantConfig, dgp: Option<&DgpSpec>, ogm: &OgmSpec) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(variant).expect("variant serializes"));
    h.update(serde_json::to_vec(ogm).expect("ogm serializes"));
    if let Some(d) = dgp {
        d.digest_into(&mut h);
    }
    hex::encode(h.finalize())
}

fn summarize_cell(
    estimates: Vec<MseEstimate>,
    truth: &TrueMse,
) -> Result<(Vec<ErrorReport>, [RepetitionSummary; 2], Vec<RepetitionSummary>)> {
    let reports = estimates.iter().map(|e| component_errors(e, truth)).collect::<Result<Vec<_>>>()?;
    let agg: Vec<f64> = reports.iter().map(|r| r.run_aggregate).collect();
    let signed: Vec<f64> = reports.iter().map(|r| r.signed_run_aggregate).collect();
    let coefficients = (0..truth.per_coefficient.len())
        .map(|j| summarize_repetitions(&reports.iter().map(|r| r.relative[j]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok((reports, [summarize_repetitions(&agg)?, summarize_repetitions(&signed)?], coefficients))
}

/// Progress messages emitted while a sweep runs.
pub trait Progress {
    fn message(&mut self, msg: &str);
}

impl<F: FnMut(&str)> Progress for F {
    fn message(&mut self, msg: &str) {
        self(msg)
    }
}

/// Runs every scenario, deviation level and variant of `config`. Dataset
/// paths are resolved against `base_dir`.
///
/// Levels whose assumed distribution is unattainable, and studies whose fits
/// are all rank deficient, are skipped and listed in [`Bundle::skipped`].
pub fn run_sweep(config: &ScenarioConfig, base_dir: &Path, progress: &mut dyn Progress) -> Result<Bundle> {
    let resolved = config.resolve(base_dir)?;
    let mut bundle = Bundle::empty(config.clone());
    for scenario in &resolved {
        let result = run_scenario(config, scenario, &mut bundle, progress)?;
        bundle.scenarios.push(result);
    }
    Ok(bundle)
}

fn run_scenario(
    config: &ScenarioConfig,
    scenario: &ResolvedScenario,
    bundle: &mut Bundle,
    progress: &mut dyn Progress,
) -> Result<ScenarioResult> {
    let rt = &config.runtime;
    let p = scenario.truth_dgp.p();
    let key = truth_key(&scenario.truth_dgp, &scenario.truth_ogm, scenario.n, rt.truth_replications, rt.master_seed);
    if !bundle.truths.contains_key(&key) {
        progress.message(&format!("{}: true MSE from {} replications", scenario.name, rt.truth_replications));
        let truth = estimate_true_mse(
            &scenario.truth_dgp,
            &scenario.truth_ogm,
            scenario.n,
            rt.truth_replications,
            rt.master_seed,
        )
        .map_err(|e| Error::Config(format!("scenario '{}': true MSE failed: {e}", scenario.name)))?;
        bundle.truths.insert(key.clone(), truth);
    }
    let truth = bundle.truths[&key].clone();

    let mut cache: HashMap<String, Vec<MseEstimate>> = HashMap::new();
    let mut cells = Vec::new();
    for dev in &scenario.deviations {
        progress.message(&format!("{}: {} ({} levels)", scenario.name, dev.id, dev.points.len()));
        for point in &dev.points {
            let assumed = match &point.dgp {
                None => Ok(&scenario.truth_dgp),
                Some(Ok(d)) => Ok(d),
                Some(Err(e)) if e.is_infeasible() => Err(e.to_string()),
                Some(Err(e)) => {
                    return Err(Error::Config(format!(
                        "scenario '{}', {} = {}: {e}",
                        scenario.name, dev.id, point.label
                    )))
                }
            };
            for variant in &config.simulations {
                let skip = |reason: String| Skipped {
                    scenario: scenario.name.clone(),
                    variant: variant.name(),
                    deviation: dev.id.clone(),
                    level: point.label.clone(),
                    reason,
                };
                let (n, mut simulation) = variant.simulation(scenario.n, &scenario.truth_dgp)?;
                let dgp_for_key = match (&mut simulation, &assumed) {
                    (Simulation::Parametric(d), Ok(a)) => {
                        *d = (*a).clone();
                        Some(*a)
                    }
                    (Simulation::Parametric(_), Err(reason)) => {
                        bundle.skipped.push(skip(reason.clone()));
                        continue;
                    }
                    _ => None,
                };
                let psd_repaired = dgp_for_key.is_some_and(|d| d.psd_repaired());
                let key = study_key(variant, dgp_for_key, &point.ogm);
                let estimates = match cache.get(&key) {
                    Some(e) => e.clone(),
                    None => {
                        let study = StudyConfig {
                            truth_dgp: scenario.truth_dgp.clone(),
                            assumed_ogm: point.ogm.clone(),
                            simulation,
                            n,
                            n_mse: rt.n_mse,
                            n_mod: rt.n_mod,
                            master_seed: rt.master_seed,
                        };
                        match run_repetitions(&study) {
                            Ok(e) => {
                                cache.insert(key, e.clone());
                                e
                            }
                            Err(e) if e.is_infeasible() => {
                                bundle.skipped.push(skip(e.to_string()));
                                continue;
                            }
                            Err(e) => return Err(e),
                        }
                    }
                };
                let (reports, [aggregate, signed_aggregate], coefficients) = summarize_cell(estimates.clone(), &truth)?;
                cells.push(Cell {
                    variant: variant.name(),
                    deviation: dev.id.clone(),
                    level: point.label.clone(),
                    value: point.value,
                    psd_repaired,
                    estimates,
                    reports,
                    aggregate,
                    signed_aggregate,
                    coefficients,
                });
            }
        }
    }

    let crossovers = crossover_rows(config, scenario, &cells)?;
    Ok(ScenarioResult {
        name: scenario.name.clone(),
        p,
        n: scenario.n,
        truth_key: key,
        dataset: scenario.dataset.clone(),
        cells,
        crossovers,
    })
}

fn crossover_rows(config: &ScenarioConfig, scenario: &ResolvedScenario, cells: &[Cell]) -> Result<Vec<CrossoverRow>> {
    let baselines: Vec<(String, RepetitionSummary)> = config
        .simulations
        .iter()
        .filter(|v| v.is_plasmode())
        .filter_map(|v| {
            let name = v.name();
            cells.iter().find(|c| c.variant == name && c.deviation == BASELINE).map(|c| (name, c.aggregate.clone()))
        })
        .collect();
    let mut rows = Vec::new();
    for param in config.simulations.iter().filter(|v| v.is_parametric()).map(VariantConfig::name) {
        for dev in scenario.deviations.iter().filter(|d| d.crossover.is_some()) {
            let axis: Vec<(f64, RepetitionSummary)> = cells
                .iter()
                .filter(|c| c.variant == param && c.deviation == dev.id)
                .filter_map(|c| c.value.map(|v| (v, c.aggregate.clone())))
                .collect();
            if axis.is_empty() {
                continue;
            }
            rows.push(CrossoverRow {
                parametric: param.clone(),
                deviation: dev.id.clone(),
                kind: dev.kind.to_string(),
                true_value: dev.true_value,
                result: crossover(&axis, dev.crossover.expect("filtered"), &baselines)?,
            });
        }
    }
    Ok(rows)
}
