use serde::{Deserialize, Serialize};

use super::eval::EvalResult;
use crate::losses::LossReport;
use crate::nets::ParamSet;

/// Losses of one optimization step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub iteration: u64,
    pub report: LossReport,
}

/// Keeps the parameters with the best validation m_iou seen so far.
/// Ties keep the earlier model.
#[derive(Clone, Debug, Default)]
pub struct BestTracker {
    pub history: Vec<EvalResult>,
    best: Option<(usize, ParamSet<f32>)>,
}

impl BestTracker {
    pub fn observe(&mut self, result: EvalResult, params: impl FnOnce() -> ParamSet<f32>) {
        let better = match &self.best {
            None => true,
            Some((i, _)) => result.m_iou.mean > self.history[*i].m_iou.mean,
        };
        self.history.push(result);
        if better {
            self.best = Some((self.history.len() - 1, params()));
        }
    }

    pub fn best(&self) -> Option<(&EvalResult, &ParamSet<f32>)> {
        self.best.as_ref().map(|(i, p)| (&self.history[*i], p))
    }
}

/// Result of a training run: the selected parameters of every network
/// (names prefixed `f.`, `g.`, `d.`), the validation history and the
/// per-step losses.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamSet<f32>,
    pub best_iteration: u64,
    pub history: Vec<EvalResult>,
    pub losses: Vec<LossRow>,
}

impl TrainOutcome {
    pub(crate) fn from_tracker(tracker: BestTracker, losses: Vec<LossRow>) -> Self {
        let (iteration, params) = {
            let (r, p) = tracker.best().expect("at least one validation pass");
            (r.iteration, p.clone())
        };
        Self {
            params,
            best_iteration: iteration,
            history: tracker.history,
            losses,
        }
    }
}

/// Fails with the iteration index if an update left any parameter non-finite.
pub(crate) fn check_params_finite(params: &ParamSet<f32>, iteration: usize) -> crate::Result<()> {
    match params.iter().find(|(_, t)| !t.is_finite()) {
        None => Ok(()),
        Some((name, _)) => Err(crate::Error::NonFiniteLoss {
            iteration,
            detail: format!("parameter {name} became non-finite"),
        }),
    }
}
