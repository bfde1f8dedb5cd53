//! Training loops for the baselines (NA, FT, WARP) and the adaptation
//! method, evaluation of checkpoints, and the experiment grid.

mod adapt;
mod config;
mod data;
mod eval;
mod matrix;
mod report;
mod run;
mod select;
mod supervised;

pub use adapt::{train_sceneadapt, PairForward, SceneAdaptModel};
pub use config::{AdaptationKind, ExperimentConfig, Method, OptimizerChoice};
pub use data::{images_tensor, DomainSampler, EpochOrder, ImageSet, LabeledSet, Role, SubsetReader};
pub use eval::{confusion, eval_result, evaluate, infer_f_config, load_f, predict, EvalResult};
pub use matrix::{ablation_csv, expand, run_matrix, training_key, Experiment, MatrixConfig, MatrixOutput, TableKind, ABLATION_ROWS};
pub use report::{average, method_table_csv};
pub use run::{
    history_csv, loss_curve_csv, read_json, run_experiment, run_label, summarize, train_run, RunSummary,
    CHECKPOINT_FILE, CONFIG_FILE, HISTORY_FILE, LOSS_FILE, SUMMARY_FILE,
};
pub use select::{LossRow, TrainOutcome};
pub use supervised::{baseline_data, train_supervised, train_supervised_on};
