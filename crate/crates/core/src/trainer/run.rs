use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::adapt::train_sceneadapt;
use super::config::{AdaptationKind, ExperimentConfig, Method};
use super::eval::{evaluate, EvalResult};
use super::select::TrainOutcome;
use super::supervised::train_supervised;
use crate::error::{Error, Result};
use crate::fsutil::{create_dir_all, read, write_atomic};
use crate::metrics::metrics_csv;
use crate::nets::save_checkpoint;
use crate::scenegen::{DatasetManifest, Split};

pub const CONFIG_FILE: &str = "config.json";
pub const LOSS_FILE: &str = "loss_curve.csv";
pub const HISTORY_FILE: &str = "eval_history.csv";
pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const SUMMARY_FILE: &str = "summary.json";

/// What a finished run reports: test scores on the target and the source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub label: String,
    pub source: String,
    pub target: String,
    pub kind: AdaptationKind,
    pub seed: u64,
    pub best_iteration: u64,
    pub checkpoint: PathBuf,
    pub target_test: EvalResult,
    pub source_test: EvalResult,
}

/// Method name plus the loss label for SceneAdapt ablations, e.g.
/// `SceneAdapt[Sem+Rec]`.
pub fn run_label(cfg: &ExperimentConfig) -> String {
    let t = cfg.toggles();
    if cfg.method == Method::SceneAdapt && t != crate::losses::LossToggles::ALL {
        format!("SceneAdapt[{}]", t.label())
    } else {
        cfg.method.name().to_string()
    }
}

fn to_json<T: Serialize>(value: &T, what: &str) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::Json {
        context: what.to_string(),
        source: e,
    })?;
    v.push(b'\n');
    Ok(v)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read(path)?).map_err(|e| Error::Json {
        context: path.display().to_string(),
        source: e,
    })
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn loss_curve_csv(outcome: &TrainOutcome) -> String {
    let mut s = String::from("iteration,l_sem,l_rec,l_gan_g,l_gan_d,total\n");
    for row in &outcome.losses {
        let r = &row.report;
        s.push_str(&format!(
            "{},{},{},{},{},{:.6}\n",
            row.iteration,
            opt_cell(r.l_sem),
            opt_cell(r.l_rec),
            opt_cell(r.l_gan_g),
            opt_cell(r.l_gan_d),
            r.total
        ));
    }
    s
}

pub fn history_csv(history: &[EvalResult]) -> String {
    let mut s = String::from("iteration,subset,split,c_acc,m_iou\n");
    for r in history {
        s.push_str(&format!(
            "{},{},{},{:.6},{:.6}\n",
            r.iteration,
            r.subset,
            serde_json::to_value(r.split).unwrap().as_str().unwrap(),
            r.c_acc.mean,
            r.m_iou.mean
        ));
    }
    s
}

/// Trains one configuration into `out`: echoes the config first, then
/// writes the loss curve, validation history and selected checkpoint.
pub fn train_run(cfg: &ExperimentConfig, out: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    create_dir_all(out)?;
    write_atomic(&out.join(CONFIG_FILE), &to_json(cfg, "config")?)?;
    let data = Path::new(&cfg.data);
    let outcome = match cfg.method {
        Method::SceneAdapt => train_sceneadapt(cfg, data)?,
        _ => train_supervised(cfg, data)?,
    };
    write_atomic(&out.join(LOSS_FILE), loss_curve_csv(&outcome).as_bytes())?;
    write_atomic(&out.join(HISTORY_FILE), history_csv(&outcome.history).as_bytes())?;
    save_checkpoint(&out.join(CHECKPOINT_FILE), &outcome.params, outcome.best_iteration, &cfg.digest())?;
    Ok(outcome)
}

/// Scores a trained checkpoint on the target and source test splits and
/// writes the summary plus per-class metric tables.
pub fn summarize(cfg: &ExperimentConfig, checkpoint: &Path, best_iteration: u64, out: &Path) -> Result<RunSummary> {
    let kind = cfg.validate()?;
    let data = Path::new(&cfg.data);
    let label = run_label(cfg);
    let target_test = evaluate(checkpoint, data, &cfg.target, Split::Test, &label)?;
    let source_test = evaluate(checkpoint, data, &cfg.source, Split::Test, &label)?;
    let names = DatasetManifest::load(data)?.classes;
    create_dir_all(out)?;
    write_atomic(
        &out.join("metrics_target.csv"),
        metrics_csv(&names, &target_test.c_acc, &target_test.m_iou).as_bytes(),
    )?;
    write_atomic(
        &out.join("metrics_source.csv"),
        metrics_csv(&names, &source_test.c_acc, &source_test.m_iou).as_bytes(),
    )?;
    let summary = RunSummary {
        method: cfg.method,
        label,
        source: cfg.source.clone(),
        target: cfg.target.clone(),
        kind,
        seed: cfg.seed,
        best_iteration,
        checkpoint: checkpoint.to_path_buf(),
        target_test,
        source_test,
    };
    write_atomic(&out.join(SUMMARY_FILE), &to_json(&summary, "summary")?)?;
    Ok(summary)
}

/// Train, then evaluate, everything in one directory.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    let outcome = train_run(cfg, out)?;
    summarize(cfg, &out.join(CHECKPOINT_FILE), outcome.best_iteration, out)
}
