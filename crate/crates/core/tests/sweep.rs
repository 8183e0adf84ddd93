use plasmode_core::scenario::output::{self, CROSSOVER_FILE, MANIFEST_FILE, RUNS_FILE, SUMMARY_FILE};
use plasmode_core::scenario::{run_sweep, write_bundle, Bundle, ScenarioConfig, BASELINE};
use std::path::Path;

const CONFIG: &str = r#"{
  "scenarios": [{
    "name": "small",
    "truth": {"p": 2, "n": 40, "correlation": {"kind": "fixed", "rho": 0.2}},
    "deviations": [
      {"kind": "errorSd", "values": [0.5]},
      {"kind": "mean", "values": [0.5, 2], "crossover": "increasing"},
      {"kind": "bernoulli", "values": [0.001, 0.3]}
    ]
  }],
  "simulations": [
    {"kind": "parametric"},
    {"kind": "plugin", "sampleSize": 200},
    {"kind": "plasmode", "strategy": "nOutOfN"},
    {"kind": "plasmode", "strategy": "mOutOfN", "proportion": 0.5}
  ],
  "runtime": {"nMse": 4, "nMod": 40, "truthReplications": 2000, "masterSeed": 11}
}"#;

fn config() -> ScenarioConfig {
    ScenarioConfig::from_json(CONFIG).unwrap()
}

fn sweep(cfg: &ScenarioConfig) -> Bundle {
    run_sweep(cfg, Path::new("."), &mut |_: &str| {}).unwrap()
}

fn write(bundle: &Bundle) -> (tempfile::TempDir, Vec<Vec<u8>>) {
    let dir = tempfile::tempdir().unwrap();
    write_bundle(bundle, dir.path()).unwrap();
    let files = [RUNS_FILE, SUMMARY_FILE, CROSSOVER_FILE, MANIFEST_FILE]
        .iter()
        .map(|f| std::fs::read(dir.path().join(f)).unwrap())
        .collect();
    (dir, files)
}

fn data_rows(bytes: &[u8]) -> usize {
    csv::Reader::from_reader(bytes).records().count()
}

#[test]
fn rows_match_cells_and_skips() {
    let bundle = sweep(&config());
    let s = bundle.scenario("small").unwrap();
    // baseline, one error sd, two means, two bernoulli levels; times four variants
    let levels = 6;
    assert_eq!(bundle.skipped.len(), 1);
    let skip = &bundle.skipped[0];
    assert_eq!(
        (skip.variant.as_str(), skip.deviation.as_str(), skip.level.as_str()),
        ("parametric", "bernoulli", "0.001")
    );
    assert_eq!(s.cells.len(), levels * 4 - 1);

    let (_dir, files) = write(&bundle);
    assert_eq!(data_rows(&files[0]), s.cells.len() * 4 * 3);
    assert_eq!(data_rows(&files[1]), s.cells.len() * (2 + 3));
    assert_eq!(data_rows(&files[2]), 1);

    let manifest: serde_json::Value = serde_json::from_slice(&files[3]).unwrap();
    assert_eq!(manifest["skipped"].as_array().unwrap().len(), 1);
    assert_eq!(manifest["masterSeed"], 11);
    assert_eq!(manifest["scenarios"][0]["truthKey"], s.truth_key.as_str());
}

#[test]
fn plasmode_ignores_distribution_deviations() {
    let bundle = sweep(&config());
    let s = bundle.scenario("small").unwrap();
    for variant in ["nOutOfN", "mOutOfN(0.5)", "plugin(200)"] {
        let base = s.cell(variant, BASELINE, BASELINE).unwrap();
        for level in ["0.5", "2"] {
            assert_eq!(s.cell(variant, "mean", level).unwrap().estimates, base.estimates, "{variant} {level}");
        }
        assert_ne!(s.cell(variant, "errorSd", "0.5").unwrap().estimates, base.estimates);
    }
    let p = |l: &str| s.cell("parametric", "mean", l).unwrap().estimates.clone();
    assert_ne!(p("0.5"), p("2"));
}

#[test]
fn crossover_row_lists_each_plasmode_variant() {
    let bundle = sweep(&config());
    let row = &bundle.scenario("small").unwrap().crossovers[0];
    assert_eq!(row.parametric, "parametric");
    assert_eq!(row.deviation, "mean");
    assert_eq!(row.true_value, Some(0.0));
    let names: Vec<&str> = row.result.first_worse.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["nOutOfN", "mOutOfN(0.5)"]);
}

#[test]
fn output_is_byte_identical_across_thread_counts() {
    let cfg = config();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| sweep(&cfg));
    let two = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap().install(|| sweep(&cfg));
    assert_eq!(write(&one).1, write(&two).1);
}

#[test]
fn seed_changes_results() {
    let mut cfg = config();
    let a = sweep(&cfg);
    cfg.runtime.master_seed = 12;
    let b = sweep(&cfg);
    assert_ne!(write(&a).1[0], write(&b).1[0]);
}

#[test]
fn empty_bundle_writes_headers() {
    let bundle = Bundle::empty(config());
    let (_dir, files) = write(&bundle);
    let runs = String::from_utf8(files[0].clone()).unwrap();
    assert_eq!(runs.trim_end(), output::RUNS_HEADER.join(","));
    let summary = String::from_utf8(files[1].clone()).unwrap();
    assert_eq!(summary.trim_end(), output::SUMMARY_HEADER.join(","));
    let cross = String::from_utf8(files[2].clone()).unwrap();
    assert!(cross.trim_end().ends_with("true_value,nOutOfN,mOutOfN(0.5)"));
    let manifest: serde_json::Value = serde_json::from_slice(&files[3]).unwrap();
    assert!(manifest["scenarios"].as_array().unwrap().is_empty());
}

#[test]
fn dataset_truth_resolves_relative_to_base_dir() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("a,b,c,k\n");
    for i in 0..30 {
        let x = i as f64;
        csv.push_str(&format!("{},{},{},1\n", x, (x * 0.7).sin(), (x * 1.3).cos()));
    }
    std::fs::write(dir.path().join("data.csv"), csv).unwrap();
    let cfg = ScenarioConfig::from_json(
        r#"{
          "scenarios": [{"name": "real", "truth": {"n": 30, "dataset": "data.csv"}, "deviations": []}],
          "simulations": [{"kind": "parametric"}],
          "runtime": {"nMse": 2, "nMod": 20, "truthReplications": 1000}
        }"#,
    )
    .unwrap();
    let bundle = run_sweep(&cfg, dir.path(), &mut |_: &str| {}).unwrap();
    let s = bundle.scenario("real").unwrap();
    assert_eq!(s.p, 3);
    let (summary, digest) = s.dataset.as_ref().unwrap();
    assert_eq!(summary.dropped_constant_columns, ["k"]);
    assert_eq!(digest.len(), 64);
    assert!(run_sweep(&cfg, Path::new("/nonexistent"), &mut |_: &str| {}).is_err());
}

// At a proportion of 0.1 duplicates are rare, so subsampling and the
// m-out-of-n bootstrap tie up to Monte Carlo noise.
const SMALL_PROPORTION_NOISE: f64 = 1.15;

#[test]
fn true_model_orders_resamplers() {
    let cfg = ScenarioConfig::from_json(
        r#"{
          "scenarios": [{"name": "s", "truth": {"p": 2, "n": 100, "correlation": {"kind": "fixed", "rho": 0.2}}}],
          "simulations": [
            {"kind": "plasmode", "strategy": "subsampling", "proportion": 0.1},
            {"kind": "plasmode", "strategy": "mOutOfN", "proportion": 0.1},
            {"kind": "plasmode", "strategy": "nOutOfN"}
          ],
          "runtime": {"nMse": 100, "nMod": 1000, "truthReplications": 1000000, "masterSeed": 3}
        }"#,
    )
    .unwrap();
    let bundle = sweep(&cfg);
    let s = bundle.scenario("s").unwrap();
    assert_eq!(s.cells.len(), 3);
    let m = |v: &str| s.cell(v, BASELINE, BASELINE).unwrap().aggregate.median;
    let (sub, mboot, nboot) = (m("subsampling(0.1)"), m("mOutOfN(0.1)"), m("nOutOfN"));
    assert!(sub <= SMALL_PROPORTION_NOISE * mboot, "{sub} {mboot}");
    assert!(sub < nboot && mboot < nboot, "{sub} {mboot} {nboot}");
}

#[test]
fn error_sd_misspecification_has_the_expected_sign() {
    let cfg = ScenarioConfig::from_json(
        r#"{
          "scenarios": [{"name": "s", "truth": {"p": 2, "n": 100, "correlation": {"kind": "fixed", "rho": 0.2}},
                         "deviations": [{"kind": "errorSd", "values": [0.1, 0.2, 0.4, 0.5]}]}],
          "simulations": [{"kind": "parametric"}],
          "runtime": {"nMse": 20, "nMod": 300, "truthReplications": 100000, "masterSeed": 5}
        }"#,
    )
    .unwrap();
    let bundle = sweep(&cfg);
    let s = bundle.scenario("s").unwrap();
    for (level, negative) in [("0.1", true), ("0.2", true), ("0.4", false), ("0.5", false)] {
        let median = s.cell("parametric", "errorSd", level).unwrap().signed_aggregate.median;
        assert_eq!(median < 0.0, negative, "sd {level}: {median}");
    }
}
