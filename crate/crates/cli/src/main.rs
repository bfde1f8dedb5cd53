use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use sceneadapt_core::fsutil::{create_dir_all, read, write_atomic};
use sceneadapt_core::metrics::metrics_csv;
use sceneadapt_core::scenegen::{generate_dataset, DatasetConfig, DatasetManifest, Split, MANIFEST_FILE};
use sceneadapt_core::trainer::{
    evaluate, expand, method_table_csv, read_json, run_experiment, run_matrix, EvalResult, ExperimentConfig,
    MatrixConfig, RunSummary, TableKind, SUMMARY_FILE,
};
use sceneadapt_core::Error;

#[derive(Parser)]
#[command(name = "sceneadapt", version, about = "Synthetic street scenes and segmentation domain adaptation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override a config field, e.g. `--set f.width=32` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory (SCENEADAPT_OUT takes precedence).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for generation and experiment grids.
    #[arg(long, default_value_t = 1, global = true)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic dataset and its manifest.
    Gen,
    /// Train one experiment and score it on the test splits.
    Train,
    /// Score the segmentation network of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Subset to score, e.g. B1.
        #[arg(long)]
        subset: String,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
    },
    /// Run the three loss ablations on a point-of-view and a scene pair.
    Ablate {
        /// Write the expanded run configs without training.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run an experiment grid (tables for view, scene, ablation and source runs).
    Matrix,
    /// Merge finished runs into one per-class table, one column per method.
    Report {
        /// Run directories, or parents searched for run summaries.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Score the source test split instead of the target one.
        #[arg(long)]
        source: bool,
    },
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        _ => Err(format!("unknown split {s:?} (expected train, val or test)")),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Usage(_) => 1,
        Error::Io { .. } => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn out_dir(common: &Common, default: &str) -> PathBuf {
    match std::env::var_os("SCENEADAPT_OUT") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => common.out.clone().unwrap_or_else(|| PathBuf::from(default)),
    }
}

/// Sets `a.b.c` in a JSON object, creating intermediate objects.
fn set_path(root: &mut Value, key: &str, value: Value) -> sceneadapt_core::Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("--set {key}: {} is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
        if cur.is_null() {
            *cur = Value::Object(Default::default());
        }
    }
    Ok(())
}

/// Config from file (errors carry line numbers), then `--set` overrides,
/// then `--seed` at `seed_key`.
fn load_config<T: DeserializeOwned + Serialize + Default>(common: &Common, seed_key: Option<&str>) -> sceneadapt_core::Result<T> {
    let base: T = match &common.config {
        Some(path) => {
            let text = read(path)?;
            serde_json::from_slice(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => T::default(),
    };
    if common.overrides.is_empty() && common.seed.is_none() {
        return Ok(base);
    }
    let mut value = serde_json::to_value(&base).map_err(|e| Error::Config(e.to_string()))?;
    for o in &common.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set {o}: expected KEY=VALUE")))?;
        let v = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        set_path(&mut value, k.trim(), v)?;
    }
    if let (Some(seed), Some(key)) = (common.seed, seed_key) {
        set_path(&mut value, key, Value::from(seed))?;
    }
    serde_json::from_value(value).map_err(|e| Error::Config(format!("after overrides: {e}")))
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable");
    out.push(b'\n');
    out
}

fn run(cli: Cli) -> sceneadapt_core::Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::Gen => {
            let cfg: DatasetConfig = load_config(common, Some("seed"))?;
            cfg.validate()?;
            let out = out_dir(common, "data");
            create_dir_all(&out)?;
            write_atomic(&out.join("config.json"), &to_json(&cfg))?;
            let manifest = generate_dataset(&cfg, &out, common.jobs)?;
            log::info!("wrote {} frames", manifest.frames.len());
            println!("{}", out.join(MANIFEST_FILE).display());
        }
        Command::Train => {
            let cfg: ExperimentConfig = load_config(common, Some("seed"))?;
            cfg.validate()?;
            let out = out_dir(common, "run");
            let s = run_experiment(&cfg, &out)?;
            println!(
                "{} {} -> {}: target m_iou {:.4} c_acc {:.4}; source m_iou {:.4} c_acc {:.4}",
                s.label,
                s.source,
                s.target,
                s.target_test.m_iou.mean,
                s.target_test.c_acc.mean,
                s.source_test.m_iou.mean,
                s.source_test.c_acc.mean
            );
        }
        Command::Eval {
            checkpoint,
            data,
            subset,
            split,
        } => {
            let r = evaluate(&checkpoint, &data, &subset, split, "eval")?;
            let names = DatasetManifest::load(&data)?.classes;
            let csv = metrics_csv(&names, &r.c_acc, &r.m_iou);
            if common.out.is_some() || std::env::var_os("SCENEADAPT_OUT").is_some() {
                let out = out_dir(common, "eval");
                create_dir_all(&out)?;
                write_atomic(&out.join("metrics.csv"), csv.as_bytes())?;
                write_atomic(&out.join("eval.json"), &to_json(&r))?;
            }
            print!("{csv}");
        }
        Command::Ablate { dry_run } => {
            let base: ExperimentConfig = load_config(common, Some("seed"))?;
            let matrix = MatrixConfig {
                seeds: vec![base.seed],
                base,
                tables: vec![TableKind::Ablation],
                ..Default::default()
            };
            let out = out_dir(common, "ablation");
            let experiments = expand(&matrix)?;
            let configs = out.join("configs");
            create_dir_all(&configs)?;
            for e in &experiments {
                let c = &e.config;
                let name = format!("{}_{}-{}_s{}.json", c.toggles().label().replace('+', "_"), c.source, c.target, c.seed);
                write_atomic(&configs.join(name), &to_json(c))?;
            }
            println!("{} ablation runs", experiments.len());
            if !dry_run {
                let result = run_matrix(&matrix, &out, common.jobs)?;
                for t in result.tables {
                    println!("{}", t.display());
                }
            }
        }
        Command::Matrix => {
            let matrix: MatrixConfig = load_config(common, None)?;
            let out = out_dir(common, "matrix");
            let result = run_matrix(&matrix, &out, common.jobs)?;
            for t in result.tables {
                println!("{}", t.display());
            }
        }
        Command::Report { runs, source } => {
            let summaries = collect_summaries(&runs)?;
            if summaries.is_empty() {
                return Err(Error::Data("no run summaries found".into()));
            }
            let csv = report_csv(&summaries, source)?;
            if common.out.is_some() || std::env::var_os("SCENEADAPT_OUT").is_some() {
                let out = out_dir(common, "report");
                create_dir_all(&out)?;
                write_atomic(&out.join("report.csv"), csv.as_bytes())?;
            }
            print!("{csv}");
        }
    }
    Ok(())
}

fn collect_summaries(paths: &[PathBuf]) -> sceneadapt_core::Result<Vec<RunSummary>> {
    fn walk(dir: &Path, out: &mut Vec<RunSummary>) -> sceneadapt_core::Result<()> {
        let summary = dir.join(SUMMARY_FILE);
        if summary.is_file() {
            out.push(read_json(&summary)?);
            return Ok(());
        }
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        entries.sort();
        for e in entries {
            walk(&e, out)?;
        }
        Ok(())
    }
    let mut out = Vec::new();
    for p in paths {
        walk(p, &mut out)?;
    }
    Ok(out)
}

/// Columns in order of first appearance; class names from the first run's
/// dataset manifest, else generic names.
fn report_csv(summaries: &[RunSummary], source: bool) -> sceneadapt_core::Result<String> {
    let mut columns: Vec<(String, Vec<&EvalResult>)> = Vec::new();
    for s in summaries {
        let r = if source { &s.source_test } else { &s.target_test };
        match columns.iter_mut().find(|(name, _)| *name == s.label) {
            Some((_, v)) => v.push(r),
            None => columns.push((s.label.clone(), vec![r])),
        }
    }
    let classes = summaries[0].target_test.m_iou.per_class.len();
    if let Some(bad) = summaries.iter().find(|s| s.target_test.m_iou.per_class.len() != classes) {
        return Err(Error::Data(format!(
            "run {} -> {} ({}) has a different class count",
            bad.source, bad.target, bad.label
        )));
    }
    let names = read_class_names(&summaries[0]).unwrap_or_else(|| (0..classes).map(|c| format!("class{c}")).collect());
    Ok(method_table_csv(&names, &columns))
}

fn read_class_names(s: &RunSummary) -> Option<Vec<String>> {
    let run_dir = s.checkpoint.parent()?;
    let cfg: ExperimentConfig = read_json(&run_dir.join("config.json")).ok()?;
    let m = DatasetManifest::load(Path::new(&cfg.data)).ok()?;
    (m.classes.len() == s.target_test.m_iou.per_class.len()).then_some(m.classes)
}
