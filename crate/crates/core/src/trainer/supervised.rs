use std::path::Path;

use super::config::{ExperimentConfig, Method, OptimizerChoice};
use super::data::{EpochOrder, LabeledSet, Role, SubsetReader};
use super::eval::eval_result;
use super::select::{check_params_finite, BestTracker, LossRow, TrainOutcome};
use crate::diffcore::Tape;
use crate::error::{Error, Result};
use crate::geom::inter_view_transform;
use crate::losses::{sem_loss, total_loss, LossReport, LossTerms, LossToggles};
use crate::nets::{build_f, Network, SegNetF};
use crate::optim::{Adam, Optimizer, PolySchedule, SgdMomentum};
use crate::scenegen::{parse_subset, Split};

pub(crate) fn make_optimizer(choice: OptimizerChoice) -> Box<dyn Optimizer<f32>> {
    match choice {
        OptimizerChoice::Sgd { sgd, .. } => Box::new(SgdMomentum::new(sgd)),
        OptimizerChoice::Adam(cfg) => Box::new(Adam::new(cfg)),
    }
}

/// Learning-rate multiplier at step `i`: poly decay for SGD, constant for Adam.
pub(crate) fn lr_multiplier(choice: OptimizerChoice, i: usize, total: usize) -> f64 {
    match choice {
        OptimizerChoice::Sgd { poly_power, .. } => PolySchedule {
            total_iterations: total,
            power: poly_power,
        }
        .multiplier(i),
        OptimizerChoice::Adam(_) => 1.0,
    }
}

pub(crate) fn build_model_f(cfg: &ExperimentConfig, classes: usize, h: usize, w: usize) -> Result<SegNetF<f32>> {
    if cfg.f.classes != classes {
        return Err(Error::Config(format!(
            "f.classes: network has {} classes but the dataset has {classes}",
            cfg.f.classes
        )));
    }
    let f = build_f(cfg.f, cfg.seed)?;
    f.check_resolution(h, w)?;
    Ok(f)
}

/// Training and validation data of a baseline: the source subset for NA,
/// the labeled target subset for FT, and the source subset resampled into
/// the target view for WARP.
pub fn baseline_data(cfg: &ExperimentConfig, data_dir: &Path) -> Result<(String, LabeledSet, LabeledSet)> {
    match cfg.method {
        Method::Na | Method::Warp => {
            let reader = SubsetReader::open(data_dir, &cfg.source, Role::Source)?;
            let (train, val) = (reader.labeled(Split::Train)?, reader.labeled(Split::Val)?);
            if cfg.method == Method::Na {
                return Ok((cfg.source.clone(), train, val));
            }
            let (sv, _) = parse_subset(&cfg.source)?;
            let (tv, _) = parse_subset(&cfg.target)?;
            let h = inter_view_transform(reader.manifest(), &sv, &tv)?;
            Ok((cfg.source.clone(), train.warped(&h), val.warped(&h)))
        }
        Method::Ft => {
            let reader = SubsetReader::open(data_dir, &cfg.target, Role::Source)?;
            Ok((cfg.target.clone(), reader.labeled(Split::Train)?, reader.labeled(Split::Val)?))
        }
        Method::SceneAdapt => Err(Error::Config("method: SceneAdapt is not a supervised baseline".into())),
    }
}

/// NA, FT or WARP: `F` trained with the semantic loss alone, model
/// selected by validation m_iou.
pub fn train_supervised(cfg: &ExperimentConfig, data_dir: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (subset, train, val) = baseline_data(cfg, data_dir)?;
    train_supervised_on(cfg, &subset, &train, &val)
}

pub fn train_supervised_on(cfg: &ExperimentConfig, val_subset: &str, train: &LabeledSet, val: &LabeledSet) -> Result<TrainOutcome> {
    if !cfg.method.is_supervised_baseline() {
        return Err(Error::Config("method: SceneAdapt is not a supervised baseline".into()));
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("empty training or validation split".into()));
    }
    let (h, w) = (train.masks[0].height, train.masks[0].width);
    let mut f = build_model_f(cfg, cfg.f.classes, h, w)?;
    let choice = cfg.optimizer();
    let mut opt = make_optimizer(choice);
    let per_epoch = train.len().div_ceil(cfg.batch_size);
    let total = cfg.epochs * per_epoch;
    let eval_every = cfg.eval_every(per_epoch);
    let mut order = EpochOrder::new(train.len(), cfg.seed, "batches");
    let mut tracker = BestTracker::default();
    let mut losses = Vec::with_capacity(total);

    for it in 0..total {
        let (x, y) = train.batch(&order.next_batch(cfg.batch_size))?;
        let mut tape = Tape::new();
        let bound = f.bind(&mut tape, true);
        let xv = tape.constant(x);
        let scores = f.forward(&mut tape, &bound, xv)?;
        let sem = sem_loss(&mut tape, scores, &y)?;
        let loss = total_loss(
            &mut tape,
            LossTerms { sem: Some(sem), ..Default::default() },
            LossToggles::SEM_ONLY,
            cfg.weights,
        )?;
        let report = LossReport {
            l_sem: Some(tape.value(sem).item()? as f64),
            total: tape.value(loss).item()? as f64,
            ..Default::default()
        };
        if !report.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: it,
                detail: format!("{report:?}"),
            });
        }
        tape.backward(loss)?;
        let grads = bound.take_grads(&mut tape);
        opt.step(f.params_mut(), &grads, lr_multiplier(choice, it, total))?;
        check_params_finite(f.params(), it)?;
        losses.push(LossRow { iteration: it as u64 + 1, report });

        if (it + 1) % eval_every == 0 || it + 1 == total {
            let r = eval_result(&f, val, cfg.method.name(), val_subset, Split::Val, it as u64 + 1)?;
            log::info!("{} iter {}: val m_iou {:.4}", cfg.method.name(), it + 1, r.m_iou.mean);
            tracker.observe(r, || f.params().clone());
        }
    }
    Ok(TrainOutcome::from_tracker(tracker, losses))
}
