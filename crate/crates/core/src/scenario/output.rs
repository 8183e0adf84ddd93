//! Result files of a sweep: `runs.csv`, `summary.csv`, `crossover.csv` and
//! `manifest.json`. Floats use the shortest round-trip representation, so
//! identical bundles give identical bytes.

use super::sweep::{Bundle, Cell, ScenarioResult};
use crate::error::{Error, Result};
use crate::metrics::RepetitionSummary;
use serde_json::{json, Value};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CROSSOVER_FILE: &str = "crossover.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const RUNS_HEADER: [&str; 12] = [
    "scenario",
    "variant",
    "deviation",
    "level",
    "repetition",
    "coefficient",
    "estimated_mse",
    "true_mse",
    "absolute_error",
    "relative_error",
    "fits",
    "rank_deficient",
];

pub const SUMMARY_HEADER: [&str; 15] = [
    "scenario",
    "variant",
    "deviation",
    "level",
    "value",
    "measure",
    "count",
    "min",
    "lower_whisker",
    "q1",
    "median",
    "q3",
    "upper_whisker",
    "max",
    "outliers",
];

const CROSSOVER_FIXED: [&str; 7] = ["scenario", "p", "n", "parametric", "deviation", "kind", "true_value"];

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_runs<W: Write>(bundle: &Bundle, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUNS_HEADER).map_err(csv_err)?;
    for s in &bundle.scenarios {
        let truth = bundle.truth(s);
        for c in &s.cells {
            for (k, (est, rep)) in c.estimates.iter().zip(&c.reports).enumerate() {
                for j in 0..est.per_coefficient.len() {
                    w.write_record([
                        s.name.clone(),
                        c.variant.clone(),
                        c.deviation.clone(),
                        c.level.clone(),
                        k.to_string(),
                        j.to_string(),
                        num(est.per_coefficient[j]),
                        num(truth.per_coefficient[j]),
                        num(rep.absolute[j]),
                        num(rep.relative[j]),
                        est.successful_iterations.to_string(),
                        est.rank_deficient_skipped.to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn summary_record(s: &ScenarioResult, c: &Cell, measure: &str, r: &RepetitionSummary) -> Vec<String> {
    let outliers: Vec<String> = r.outliers.iter().copied().map(num).collect();
    vec![
        s.name.clone(),
        c.variant.clone(),
        c.deviation.clone(),
        c.level.clone(),
        opt(c.value),
        measure.to_string(),
        r.count.to_string(),
        num(r.min),
        num(r.lower_whisker),
        num(r.q1),
        num(r.median),
        num(r.q3),
        num(r.upper_whisker),
        num(r.max),
        outliers.join(";"),
    ]
}

/// One row per cell and measure: `aggregate`, `signed_aggregate` and
/// `relative_<j>` per coefficient.
pub fn write_summary<W: Write>(bundle: &Bundle, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for s in &bundle.scenarios {
        for c in &s.cells {
            w.write_record(summary_record(s, c, "aggregate", &c.aggregate)).map_err(csv_err)?;
            w.write_record(summary_record(s, c, "signed_aggregate", &c.signed_aggregate)).map_err(csv_err)?;
            for (j, r) in c.coefficients.iter().enumerate() {
                w.write_record(summary_record(s, c, &format!("relative_{j}"), r)).map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per parametric variant and crossover axis, one column per
/// plasmode variant holding the first axis value worse than its baseline.
pub fn write_crossover<W: Write>(bundle: &Bundle, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = CROSSOVER_FIXED.iter().map(|s| s.to_string()).collect();
    header.extend(bundle.plasmode_variants.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for s in &bundle.scenarios {
        for row in &s.crossovers {
            let mut rec = vec![
                s.name.clone(),
                s.p.to_string(),
                s.n.to_string(),
                row.parametric.clone(),
                row.deviation.clone(),
                row.kind.clone(),
                opt(row.true_value),
            ];
            for v in &bundle.plasmode_variants {
                let hit = row.result.first_worse.iter().find(|(name, _)| name == v).and_then(|(_, x)| *x);
                rec.push(opt(hit));
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Run metadata. The worker count is left out so it cannot change the bytes.
pub fn manifest(bundle: &Bundle) -> Value {
    let rt = &bundle.config.runtime;
    let mut config = bundle.config.clone();
    config.runtime.workers = None;
    let truths: serde_json::Map<String, Value> =
        bundle.truths.iter().map(|(k, t)| (k.clone(), serde_json::to_value(t).expect("truth serializes"))).collect();
    let scenarios: Vec<Value> = bundle
        .scenarios
        .iter()
        .map(|s| {
            let repaired: Vec<String> = s
                .cells
                .iter()
                .filter(|c| c.psd_repaired)
                .map(|c| format!("{}={}", c.deviation, c.level))
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            json!({
                "name": s.name,
                "p": s.p,
                "n": s.n,
                "truthKey": s.truth_key,
                "dataset": s.dataset.as_ref().map(|(summary, digest)| json!({
                    "sha256": digest,
                    "summary": summary,
                })),
                "psdRepaired": repaired,
            })
        })
        .collect();
    json!({
        "library": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "masterSeed": rt.master_seed,
        "nMse": rt.n_mse,
        "nMod": rt.n_mod,
        "truthReplications": rt.truth_replications,
        "variants": bundle.variants,
        "config": config,
        "truths": truths,
        "scenarios": scenarios,
        "skipped": bundle.skipped,
        "files": [RUNS_FILE, SUMMARY_FILE, CROSSOVER_FILE],
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Writes all four result files into `dir`, creating it if needed.
pub fn write_bundle(bundle: &Bundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    write_runs(bundle, create(dir, RUNS_FILE)?)?;
    write_summary(bundle, create(dir, SUMMARY_FILE)?)?;
    write_crossover(bundle, create(dir, CROSSOVER_FILE)?)?;
    let mut m = create(dir, MANIFEST_FILE)?;
    serde_json::to_writer_pretty(&mut m, &manifest(bundle)).map_err(|e| Error::Io(e.to_string()))?;
    m.write_all(b"\n")?;
    m.flush()?;
    Ok(())
}
