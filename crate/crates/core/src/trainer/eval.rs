use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::{images_tensor, LabeledSet, Role, SubsetReader};
use crate::error::{Error, Result};
use crate::metrics::{ClassScores, ConfusionMatrix};
use crate::nets::{build_f, load_checkpoint, FConfig, Network, ParamSet, SegNetF};
use crate::scenegen::Split;

/// Scores of one model on one split of one subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub method: String,
    pub subset: String,
    pub split: Split,
    pub iteration: u64,
    pub c_acc: ClassScores,
    pub m_iou: ClassScores,
}

const EVAL_BATCH: usize = 8;

/// Per-pixel argmax of the class scores (softmax is monotone, so this is
/// also the argmax of the probabilities). Ties go to the lower class id.
pub fn predict(f: &SegNetF<f32>, images: &[crate::geom::Image]) -> Result<Vec<Vec<u8>>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_BATCH) {
        let x = images_tensor(chunk.iter())?;
        let scores = f.infer(&x)?;
        let [n, c, h, w] = scores.dims4()?;
        let s = scores.data();
        for b in 0..n {
            let mut labels = vec![0u8; h * w];
            for (p, label) in labels.iter_mut().enumerate() {
                let mut best = 0;
                let mut best_v = s[b * c * h * w + p];
                for k in 1..c {
                    let v = s[(b * c + k) * h * w + p];
                    if v > best_v {
                        best = k;
                        best_v = v;
                    }
                }
                *label = best as u8;
            }
            out.push(labels);
        }
    }
    Ok(out)
}

pub fn confusion(f: &SegNetF<f32>, set: &LabeledSet) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(f.classes());
    let predictions = predict(f, &set.images)?;
    for (pred, mask) in predictions.iter().zip(&set.masks) {
        cm.accumulate(pred, &mask.data)?;
    }
    Ok(cm)
}

pub fn eval_result(
    f: &SegNetF<f32>,
    set: &LabeledSet,
    method: &str,
    subset: &str,
    split: Split,
    iteration: u64,
) -> Result<EvalResult> {
    let cm = confusion(f, set)?;
    Ok(EvalResult {
        method: method.to_string(),
        subset: subset.to_string(),
        split,
        iteration,
        c_acc: cm.per_class_accuracy()?,
        m_iou: cm.mean_iou()?,
    })
}

/// Recovers `F`'s architecture from its parameter shapes.
pub fn infer_f_config(params: &ParamSet<f32>) -> Result<FConfig> {
    let missing = |name: &str| Error::Checkpoint(format!("checkpoint has no segmentation parameter {name}"));
    let stem = params.get("f.stem.weight").ok_or_else(|| missing("f.stem.weight"))?;
    let head = params.get("f.head.weight").ok_or_else(|| missing("f.head.weight"))?;
    let depth = (0..).take_while(|i| params.get(&format!("f.enc{i}.weight")).is_some()).count();
    if depth == 0 {
        return Err(missing("f.enc0.weight"));
    }
    Ok(FConfig {
        classes: head.shape()[0],
        width: stem.shape()[0],
        depth,
    })
}

/// Builds `F` from the `f.` parameters of a checkpoint; anything else in
/// the file is ignored.
pub fn load_f(path: &Path) -> Result<(SegNetF<f32>, u64)> {
    let ck = load_checkpoint(path)?;
    let params = ck.params.with_prefix("f.");
    let config = infer_f_config(&params)?;
    let mut f = build_f(config, 0)?;
    f.params_mut().load_from(&params)?;
    Ok((f, ck.iteration))
}

/// Scores the `F` stored in `checkpoint` on `split` of `subset`. Only the
/// segmentation network is ever built here.
pub fn evaluate(checkpoint: &Path, data_dir: &Path, subset: &str, split: Split, method: &str) -> Result<EvalResult> {
    let (f, iteration) = load_f(checkpoint)?;
    let reader = SubsetReader::open(data_dir, subset, Role::Evaluation)?;
    if reader.manifest().num_classes() != f.classes() {
        return Err(Error::Checkpoint(format!(
            "checkpoint predicts {} classes but the dataset has {}",
            f.classes(),
            reader.manifest().num_classes()
        )));
    }
    let set = reader.labeled(split)?;
    eval_result(&f, &set, method, subset, split, iteration)
}
