use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::{AdaptationKind, ExperimentConfig, Method};
use super::data::{Role, SubsetReader};
use super::eval::EvalResult;
use super::report::{average, method_table_csv};
use super::run::{read_json, run_label, summarize, train_run, RunSummary, CHECKPOINT_FILE, CONFIG_FILE};
use crate::error::{Error, Result};
use crate::fsutil::{create_dir_all, write_atomic};
use crate::losses::LossToggles;
use crate::nets::load_checkpoint;
use crate::scenegen::DatasetManifest;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    PointOfView,
    Scene,
    Ablation,
    SourceDomain,
}

impl TableKind {
    pub fn file_name(self) -> &'static str {
        match self {
            TableKind::PointOfView => "table1_point_of_view.csv",
            TableKind::Scene => "table3_scene.csv",
            TableKind::Ablation => "table5_ablation.csv",
            TableKind::SourceDomain => "table6_source_domain.csv",
        }
    }
}

fn pairs(list: &[(&str, &str)]) -> Vec<[String; 2]> {
    list.iter().map(|(a, b)| [a.to_string(), b.to_string()]).collect()
}

/// The experiment grid: which pairs, methods, seeds and tables to produce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    pub base: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub view_pairs: Vec<[String; 2]>,
    pub scene_pairs: Vec<[String; 2]>,
    pub view_methods: Vec<Method>,
    pub scene_methods: Vec<Method>,
    /// One point-of-view and one scene pair for the loss ablation.
    pub ablation_pairs: Vec<[String; 2]>,
    pub tables: Vec<TableKind>,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            base: ExperimentConfig::default(),
            seeds: vec![0, 1, 2],
            view_pairs: pairs(&[("A1", "B1"), ("A2", "B2"), ("A3", "B3"), ("B1", "A1"), ("B2", "A2"), ("B3", "A3")]),
            scene_pairs: pairs(&[("A1", "A2"), ("A1", "A3"), ("A2", "A1"), ("A2", "A3"), ("A3", "A1"), ("A3", "A2")]),
            view_methods: vec![Method::Na, Method::Warp, Method::SceneAdapt, Method::Ft],
            scene_methods: vec![Method::Na, Method::SceneAdapt, Method::Ft],
            ablation_pairs: pairs(&[("A1", "B1"), ("A1", "A2")]),
            tables: vec![TableKind::PointOfView, TableKind::Scene, TableKind::Ablation, TableKind::SourceDomain],
        }
    }
}

/// The three loss rows of the ablation.
pub const ABLATION_ROWS: [LossToggles; 3] = [
    LossToggles { sem: true, rec: true, gan: false },
    LossToggles { sem: true, rec: false, gan: true },
    LossToggles::ALL,
];

/// One evaluated cell of a table.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub table: TableKind,
    pub config: ExperimentConfig,
}

impl Experiment {
    fn dir_name(&self) -> String {
        let label = run_label(&self.config).replace(['[', ']', '+'], "_");
        format!("{}_{}-{}_s{}", label.trim_end_matches('_'), self.config.source, self.config.target, self.config.seed)
    }
}

/// Training runs that differ only in fields the training ignores share
/// one directory: NA does not depend on the target, FT not on the source.
pub fn training_key(cfg: &ExperimentConfig) -> String {
    let t = cfg.toggles();
    let losses = format!("{}{}{}", t.sem as u8, t.rec as u8, t.gan as u8);
    let (src, tgt) = match cfg.method {
        Method::Na => (cfg.source.as_str(), "-"),
        Method::Ft => ("-", cfg.target.as_str()),
        _ => (cfg.source.as_str(), cfg.target.as_str()),
    };
    format!("{}_{src}_{tgt}_{losses}_s{}", cfg.method.name(), cfg.seed)
}

/// Expands the matrix into experiments, in table order.
pub fn expand(m: &MatrixConfig) -> Result<Vec<Experiment>> {
    let mut out = Vec::new();
    let mut push = |table, method, pair: &[String; 2], losses: Option<LossToggles>, seed| -> Result<()> {
        let mut config = m.base.clone();
        config.method = method;
        config.source = pair[0].clone();
        config.target = pair[1].clone();
        config.kind = None;
        config.losses = losses;
        config.seed = seed;
        config.validate()?;
        out.push(Experiment { table, config });
        Ok(())
    };
    for &seed in &m.seeds {
        for &table in &m.tables {
            match table {
                TableKind::PointOfView | TableKind::Scene => {
                    let (list, methods, kind) = if table == TableKind::PointOfView {
                        (&m.view_pairs, &m.view_methods, AdaptationKind::PointOfView)
                    } else {
                        (&m.scene_pairs, &m.scene_methods, AdaptationKind::Scene)
                    };
                    for pair in list {
                        if AdaptationKind::of_pair(&pair[0], &pair[1])? != kind {
                            return Err(Error::Config(format!(
                                "{}: {} → {} is not a {} pair",
                                if kind == AdaptationKind::Scene { "scene_pairs" } else { "view_pairs" },
                                pair[0],
                                pair[1],
                                kind.name()
                            )));
                        }
                        for &method in methods {
                            push(table, method, pair, None, seed)?;
                        }
                    }
                }
                TableKind::Ablation => {
                    for pair in &m.ablation_pairs {
                        for row in ABLATION_ROWS {
                            push(table, Method::SceneAdapt, pair, Some(row), seed)?;
                        }
                    }
                }
                TableKind::SourceDomain => {
                    for pair in &m.view_pairs {
                        for method in [Method::Na, Method::SceneAdapt] {
                            push(table, method, pair, None, seed)?;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Every subset named by the experiments must exist before anything trains.
fn check_subsets(experiments: &[Experiment], data: &Path) -> Result<()> {
    let manifest = DatasetManifest::load(data)?;
    let mut seen = std::collections::BTreeSet::new();
    for e in experiments {
        for s in [&e.config.source, &e.config.target] {
            if seen.insert(s.clone()) {
                SubsetReader::with_manifest(data, manifest.clone(), s, Role::Evaluation)?;
            }
        }
    }
    Ok(())
}

/// Trains (or reuses, when the directory already holds a checkpoint from
/// the same config) one training run.
fn ensure_trained(cfg: &ExperimentConfig, dir: &Path) -> Result<u64> {
    let ckpt = dir.join(CHECKPOINT_FILE);
    if ckpt.exists() {
        if let Ok(prev) = read_json::<ExperimentConfig>(&dir.join(CONFIG_FILE)) {
            if prev == *cfg {
                log::info!("reusing {}", dir.display());
                return Ok(load_checkpoint(&ckpt)?.iteration);
            }
        }
    }
    log::info!("training {}", dir.display());
    Ok(train_run(cfg, dir)?.best_iteration)
}

#[derive(Clone, Debug)]
pub struct MatrixOutput {
    pub summaries: Vec<(TableKind, RunSummary)>,
    pub tables: Vec<PathBuf>,
}

/// Runs the grid under `out`: shared trainings in `out/train/`, evaluated
/// cells in `out/<table>/`, CSV tables in `out/tables/`. Up to `jobs`
/// trainings run concurrently; results do not depend on `jobs`.
pub fn run_matrix(m: &MatrixConfig, out: &Path, jobs: usize) -> Result<MatrixOutput> {
    let experiments = expand(m)?;
    if experiments.is_empty() {
        return Err(Error::Config("the matrix expands to no experiments".into()));
    }
    let data = PathBuf::from(&m.base.data);
    check_subsets(&experiments, &data)?;
    create_dir_all(out)?;
    write_atomic(&out.join("matrix.json"), &serde_json::to_vec_pretty(m).expect("matrix serializes"))?;

    let mut trainings: BTreeMap<String, ExperimentConfig> = BTreeMap::new();
    for e in &experiments {
        trainings.entry(training_key(&e.config)).or_insert_with(|| e.config.clone());
    }
    let queue: Vec<(String, ExperimentConfig)> = trainings.into_iter().collect();
    let results: Mutex<BTreeMap<String, Result<u64>>> = Mutex::new(BTreeMap::new());
    let next = Mutex::new(0usize);
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1).min(queue.len()) {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().unwrap();
                    *n += 1;
                    *n - 1
                };
                let Some((key, cfg)) = queue.get(i) else { break };
                let r = ensure_trained(cfg, &out.join("train").join(key));
                results.lock().unwrap().insert(key.clone(), r);
            });
        }
    });
    let mut trained = BTreeMap::new();
    for (key, r) in results.into_inner().unwrap() {
        trained.insert(key, r?);
    }

    let mut summaries = Vec::new();
    for e in &experiments {
        let key = training_key(&e.config);
        let ckpt = out.join("train").join(&key).join(CHECKPOINT_FILE);
        let dir = out.join(table_dir(e.table)).join(e.dir_name());
        summaries.push((e.table, summarize(&e.config, &ckpt, trained[&key], &dir)?));
    }

    let names = DatasetManifest::load(&data)?.classes;
    let tables_dir = out.join("tables");
    create_dir_all(&tables_dir)?;
    let mut tables = Vec::new();
    for &table in &m.tables {
        let csv = match table {
            TableKind::PointOfView => method_csv(&names, &summaries, table, &m.view_methods, false),
            TableKind::Scene => method_csv(&names, &summaries, table, &m.scene_methods, false),
            TableKind::SourceDomain => method_csv(&names, &summaries, table, &[Method::Na, Method::SceneAdapt], true),
            TableKind::Ablation => ablation_csv(&summaries),
        };
        let path = tables_dir.join(table.file_name());
        write_atomic(&path, csv.as_bytes())?;
        tables.push(path);
    }
    Ok(MatrixOutput { summaries, tables })
}

fn table_dir(t: TableKind) -> &'static str {
    match t {
        TableKind::PointOfView => "point_of_view",
        TableKind::Scene => "scene",
        TableKind::Ablation => "ablation",
        TableKind::SourceDomain => "source_domain",
    }
}

fn method_csv(names: &[String], summaries: &[(TableKind, RunSummary)], table: TableKind, methods: &[Method], source_split: bool) -> String {
    let columns: Vec<(String, Vec<&EvalResult>)> = methods
        .iter()
        .map(|&m| {
            let results = summaries
                .iter()
                .filter(|(t, s)| *t == table && s.method == m)
                .map(|(_, s)| if source_split { &s.source_test } else { &s.target_test })
                .collect();
            (m.name().to_string(), results)
        })
        .collect();
    method_table_csv(names, &columns)
}

/// `losses,kind,c_acc,m_iou`: the three loss rows for each adaptation kind,
/// averaged over seeds.
pub fn ablation_csv(summaries: &[(TableKind, RunSummary)]) -> String {
    let mut out = String::from("losses,kind,c_acc,m_iou\n");
    for kind in [AdaptationKind::PointOfView, AdaptationKind::Scene] {
        for row in ABLATION_ROWS {
            let label = format!("SceneAdapt[{}]", row.label());
            let results: Vec<&EvalResult> = summaries
                .iter()
                .filter(|(t, s)| {
                    *t == TableKind::Ablation
                        && s.kind == kind
                        && (s.label == label || (row == LossToggles::ALL && s.label == "SceneAdapt"))
                })
                .map(|(_, s)| &s.target_test)
                .collect();
            let (acc, iou) = match average(&results) {
                Some((a, i)) => (format!("{:.4}", a.mean), format!("{:.4}", i.mean)),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!("{},{},{acc},{iou}\n", row.label(), kind.name()));
        }
    }
    out
}
