//! Scenario sweeps: configuration, deviation grids, execution and result files.

mod config;
pub mod dataset;
pub mod deviation;
pub mod grid;
pub mod output;
mod sweep;

pub use config::{
    Preset, PresetScenario, ResolvedDeviation, ResolvedScenario, RuntimeConfig, ScenarioConfig, ScenarioEntry,
    TruthConfig, VariantConfig, BASELINE,
};
pub use dataset::{ingest_dataset, ingest_reader, Dataset, DatasetSummary};
pub use deviation::{DeviationKind, DeviationSpec};
pub use grid::Grid;
pub use output::write_bundle;
pub use sweep::{run_sweep, truth_key, Bundle, Cell, CrossoverRow, Progress, ScenarioResult, Skipped};
