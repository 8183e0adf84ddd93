use clap::{Parser, Subcommand};
use plasmode_core::engine::estimate_true_mse;
use plasmode_core::scenario::{ingest_dataset, run_sweep, truth_key, write_bundle, Preset, ScenarioConfig};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const WORKERS_ENV: &str = "PLASMODE_WORKERS";

#[derive(Parser)]
#[command(name = "plasmode", version, about = "Parametric and plasmode simulation sweeps for the LSE MSE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    /// Fill missing truths and deviation lists from a built-in preset.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    truth_reps: Option<usize>,
    /// Worker threads (falls back to the config, then PLASMODE_WORKERS).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write runs.csv, summary.csv, crossover.csv and manifest.json.
    Run {
        config: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, short)]
        quiet: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Estimate the true MSE of every scenario and print it as JSON.
    Truth {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Validate a CSV dataset and print its summary as JSON.
    Ingest {
        csv: PathBuf,
        /// Also write the standardized columns here.
        #[arg(long)]
        standardized: Option<PathBuf>,
    },
    /// Print a built-in preset.
    Preset { name: String },
}

type CliResult<T> = Result<T, String>;

fn load_config(path: &Path, o: &Overrides) -> CliResult<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg = ScenarioConfig::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(name) = &o.preset {
        let preset = Preset::builtin(name).map_err(|e| e.to_string())?;
        cfg.apply_preset(&preset).map_err(|e| e.to_string())?;
    }
    if let Some(s) = o.seed {
        cfg.runtime.master_seed = s;
    }
    if let Some(r) = o.truth_reps {
        cfg.runtime.truth_replications = r;
    }
    if o.workers.is_some() {
        cfg.runtime.workers = o.workers;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn init_workers(cfg: &ScenarioConfig) -> CliResult<()> {
    let workers = match cfg.runtime.workers {
        Some(w) => Some(w),
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(
                v.parse::<usize>()
                    .ok()
                    .filter(|&w| w > 0)
                    .ok_or_else(|| format!("{WORKERS_ENV}={v} is not a positive integer"))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(w) = workers {
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn base_dir(config: &Path) -> &Path {
    config.parent().unwrap_or(Path::new("."))
}

fn run(config: &Path, out: &Path, quiet: bool, o: &Overrides) -> CliResult<ExitCode> {
    let cfg = load_config(config, o)?;
    init_workers(&cfg)?;
    let mut progress = |msg: &str| {
        if !quiet {
            eprintln!("{msg}");
        }
    };
    let bundle = run_sweep(&cfg, base_dir(config), &mut progress).map_err(|e| e.to_string())?;
    write_bundle(&bundle, out).map_err(|e| e.to_string())?;
    for s in &bundle.skipped {
        eprintln!("skipped {} / {} / {}={}: {}", s.scenario, s.variant, s.deviation, s.level, s.reason);
    }
    if !quiet {
        eprintln!("wrote {}", out.display());
    }
    Ok(if bundle.skipped.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn truth(config: &Path, o: &Overrides) -> CliResult<ExitCode> {
    let cfg = load_config(config, o)?;
    init_workers(&cfg)?;
    let rt = &cfg.runtime;
    let mut out = serde_json::Map::new();
    for s in cfg.resolve(base_dir(config)).map_err(|e| e.to_string())? {
        let t = estimate_true_mse(&s.truth_dgp, &s.truth_ogm, s.n, rt.truth_replications, rt.master_seed)
            .map_err(|e| format!("scenario '{}': {e}", s.name))?;
        let key = truth_key(&s.truth_dgp, &s.truth_ogm, s.n, rt.truth_replications, rt.master_seed);
        out.insert(s.name, serde_json::json!({ "key": key, "n": s.n, "truth": t }));
    }
    print_json(&serde_json::Value::Object(out))
}

fn ingest(csv: &Path, standardized: Option<&Path>) -> CliResult<ExitCode> {
    let data = ingest_dataset(csv).map_err(|e| format!("{}: {e}", csv.display()))?;
    if let Some(path) = standardized {
        let file = std::fs::File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
        plasmode_core::scenario::dataset::write_standardized(&data, std::io::BufWriter::new(file))
            .map_err(|e| e.to_string())?;
    }
    print_json(&serde_json::to_value(&data.summary).expect("summary serializes"))
}

fn print_json(v: &serde_json::Value) -> CliResult<ExitCode> {
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, v).map_err(|e| e.to_string())?;
    writeln!(stdout).map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out, quiet, overrides } => run(config, out, *quiet, overrides),
        Command::Truth { config, overrides } => truth(config, overrides),
        Command::Ingest { csv, standardized } => ingest(csv, standardized.as_deref()),
        Command::Preset { name } => Preset::builtin(name)
            .map_err(|e| e.to_string())
            .and_then(|p| print_json(&serde_json::to_value(&p).expect("preset serializes"))),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
