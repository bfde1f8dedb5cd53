use std::path::Path;

use super::config::{ExperimentConfig, Method};
use super::data::{DomainSampler, Role, SubsetReader};
use super::eval::eval_result;
use super::select::{check_params_finite, BestTracker, LossRow, TrainOutcome};
use super::supervised::{build_model_f, lr_multiplier, make_optimizer};
use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::losses::{
    gan_d_loss, gan_g_loss, rec_loss, sem_loss, total_loss, GanForm, LabelMask, LossReport, LossTerms,
    LossToggles, LossWeights,
};
use crate::nets::{build_d, build_g, Bound, DiscriminatorD, GeneratorG, Network, ParamSet, SegNetF};
use crate::optim::Optimizer;
use crate::scenegen::Split;

/// `F`, `G` and (when the adversarial term is on) `D` with their optimizers.
pub struct SceneAdaptModel {
    pub f: SegNetF<f32>,
    pub g: GeneratorG<f32>,
    pub d: Option<DiscriminatorD<f32>>,
    opt_f: Box<dyn Optimizer<f32>>,
    opt_g: Box<dyn Optimizer<f32>>,
    opt_d: Option<Box<dyn Optimizer<f32>>>,
    toggles: LossToggles,
    weights: LossWeights,
    gan_form: GanForm,
}

/// The F/G graph of one source/target pair, recorded but not yet
/// differentiated.
pub struct PairForward {
    tape: Tape<f32>,
    f_bound: Bound,
    g_bound: Bound,
    sem: Var,
    rec: Option<Var>,
    /// Reconstructions of the source and target images.
    recon: (Var, Var),
    real: (Tensor<f32>, Tensor<f32>),
}

impl PairForward {
    /// Detached copies of the two reconstructions.
    pub fn fakes(&self) -> (Tensor<f32>, Tensor<f32>) {
        (self.tape.value(self.recon.0).clone(), self.tape.value(self.recon.1).clone())
    }

    pub fn reals(&self) -> (&Tensor<f32>, &Tensor<f32>) {
        (&self.real.0, &self.real.1)
    }
}

fn avg2(tape: &mut Tape<f32>, a: Var, b: Var) -> Result<Var> {
    let s = tape.add(a, b)?;
    tape.scale(s, 0.5)
}

fn scalar(tape: &Tape<f32>, v: Var) -> Result<f64> {
    Ok(tape.value(v).item()? as f64)
}

impl SceneAdaptModel {
    pub fn new(cfg: &ExperimentConfig, classes: usize, h: usize, w: usize) -> Result<Self> {
        let toggles = cfg.toggles();
        let f = build_model_f(cfg, classes, h, w)?;
        if cfg.g.classes != classes {
            return Err(Error::Config(format!(
                "g.classes: generator expects {} classes but the dataset has {classes}",
                cfg.g.classes
            )));
        }
        let g = build_g(cfg.g, cfg.seed)?;
        let choice = cfg.optimizer();
        let (d, opt_d) = if toggles.gan {
            let d = build_d(cfg.d, cfg.seed)?;
            let field = crate::nets::receptive_field(&d);
            if h < field || w < field {
                return Err(Error::Config(format!(
                    "d: receptive field {field} exceeds the {w}x{h} input"
                )));
            }
            (Some(d), Some(make_optimizer(choice)))
        } else {
            (None, None)
        };
        Ok(Self {
            f,
            g,
            d,
            opt_f: make_optimizer(choice),
            opt_g: make_optimizer(choice),
            opt_d,
            toggles,
            weights: cfg.weights,
            gan_form: cfg.gan_form,
        })
    }

    /// Every parameter of the model, prefixed `f.`, `g.`, `d.`.
    pub fn all_params(&self) -> ParamSet<f32> {
        let mut p = self.f.params().clone();
        p.extend(self.g.params().clone());
        if let Some(d) = &self.d {
            p.extend(d.params().clone());
        }
        p
    }

    /// Records `F` on both images and `G` on both score maps, plus the
    /// semantic loss (source only) and the reconstruction loss (mean over
    /// both) if enabled.
    pub fn forward_pair(&self, xs: &Tensor<f32>, ys: &LabelMask, xt: &Tensor<f32>) -> Result<PairForward> {
        let mut tape = Tape::new();
        let f_bound = self.f.bind(&mut tape, true);
        let g_bound = self.g.bind(&mut tape, true);
        let xs_v = tape.constant(xs.clone());
        let xt_v = tape.constant(xt.clone());
        let ss = self.f.forward(&mut tape, &f_bound, xs_v)?;
        let st = self.f.forward(&mut tape, &f_bound, xt_v)?;
        let sem = sem_loss(&mut tape, ss, ys)?;
        let rs = self.g.forward(&mut tape, &g_bound, ss)?;
        let rt = self.g.forward(&mut tape, &g_bound, st)?;
        let rec = if self.toggles.rec {
            let a = rec_loss(&mut tape, rs, xs_v)?;
            let b = rec_loss(&mut tape, rt, xt_v)?;
            Some(avg2(&mut tape, a, b)?)
        } else {
            None
        };
        Ok(PairForward {
            tape,
            f_bound,
            g_bound,
            sem,
            rec,
            recon: (rs, rt),
            real: (xs.clone(), xt.clone()),
        })
    }

    /// One discriminator step on real `[xs, xt]` against fake `[rs, rt]`.
    /// Touches only `D`.
    pub fn update_d(&mut self, real: (&Tensor<f32>, &Tensor<f32>), fake: (&Tensor<f32>, &Tensor<f32>), iteration: usize) -> Result<f64> {
        let (Some(d), Some(opt)) = (self.d.as_mut(), self.opt_d.as_mut()) else {
            return Err(Error::Usage("the adversarial term is disabled; no discriminator exists".into()));
        };
        let mut tape = Tape::new();
        let bound = d.bind(&mut tape, true);
        let real = tape.constant(Tensor::concat_batch(&[real.0, real.1])?);
        let fake = tape.constant(Tensor::concat_batch(&[fake.0, fake.1])?);
        let d_real = d.forward(&mut tape, &bound, real)?;
        let d_fake = d.forward(&mut tape, &bound, fake)?;
        let loss = gan_d_loss(&mut tape, d_real, d_fake)?;
        let value = scalar(&tape, loss)?;
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration,
                detail: format!("discriminator loss {value}"),
            });
        }
        tape.backward(loss)?;
        let grads = bound.take_grads(&mut tape);
        opt.step(d.params_mut(), &grads, 1.0)?;
        check_params_finite(d.params(), iteration)?;
        Ok(value)
    }

    /// Adds the adversarial term (with `D` frozen) and takes one joint
    /// step on `F` and `G`. Touches neither `D` nor its optimizer.
    pub fn update_fg(&mut self, fwd: PairForward, iteration: usize, lr_mult: f64) -> Result<LossReport> {
        let PairForward {
            mut tape,
            f_bound,
            g_bound,
            sem,
            rec,
            recon,
            ..
        } = fwd;
        let gan = match (&self.d, self.toggles.gan) {
            (Some(d), true) => {
                let frozen = d.bind(&mut tape, false);
                let ds = d.forward(&mut tape, &frozen, recon.0)?;
                let dt = d.forward(&mut tape, &frozen, recon.1)?;
                let gs = gan_g_loss(&mut tape, ds, self.gan_form)?;
                let gt = gan_g_loss(&mut tape, dt, self.gan_form)?;
                Some(avg2(&mut tape, gs, gt)?)
            }
            _ => None,
        };
        let total = total_loss(&mut tape, LossTerms { sem: Some(sem), rec, gan }, self.toggles, self.weights)?;
        let report = LossReport {
            l_sem: Some(scalar(&tape, sem)?),
            l_rec: rec.map(|v| scalar(&tape, v)).transpose()?,
            l_gan_g: gan.map(|v| scalar(&tape, v)).transpose()?,
            l_gan_d: None,
            total: scalar(&tape, total)?,
        };
        if !report.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration,
                detail: format!("{report:?}"),
            });
        }
        tape.backward(total)?;
        let gf = f_bound.take_grads(&mut tape);
        let gg = g_bound.take_grads(&mut tape);
        self.opt_f.step(self.f.params_mut(), &gf, lr_mult)?;
        self.opt_g.step(self.g.params_mut(), &gg, lr_mult)?;
        check_params_finite(self.f.params(), iteration)?;
        check_params_finite(self.g.params(), iteration)?;
        Ok(report)
    }

    /// Forward, discriminator step, then joint `F`/`G` step.
    pub fn step(&mut self, xs: &Tensor<f32>, ys: &LabelMask, xt: &Tensor<f32>, iteration: usize, lr_mult: f64) -> Result<LossReport> {
        let fwd = self.forward_pair(xs, ys, xt)?;
        let l_gan_d = if self.d.is_some() {
            let (fs, ft) = fwd.fakes();
            Some(self.update_d((xs, xt), (&fs, &ft), iteration)?)
        } else {
            None
        };
        let mut report = self.update_fg(fwd, iteration, lr_mult)?;
        report.l_gan_d = l_gan_d;
        Ok(report)
    }
}

/// SceneAdapt (or one of its loss ablations). Target labels are never
/// loaded: the target subset is opened with [`Role::Target`]. Model
/// selection uses the source validation split.
pub fn train_sceneadapt(cfg: &ExperimentConfig, data_dir: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.method != Method::SceneAdapt {
        return Err(Error::Config(format!("method: {} is not SceneAdapt", cfg.method.name())));
    }
    let source = SubsetReader::open(data_dir, &cfg.source, Role::Source)?;
    let target = SubsetReader::with_manifest(data_dir, source.manifest().clone(), &cfg.target, Role::Target)?;
    let train = source.labeled(Split::Train)?;
    let val = source.labeled(Split::Val)?;
    let (h, w) = (train.masks[0].height, train.masks[0].width);
    let mut model = SceneAdaptModel::new(cfg, source.manifest().num_classes(), h, w)?;
    let mut sampler = DomainSampler::new(train, target.images(Split::Train)?, cfg.seed)?;

    let choice = cfg.optimizer();
    let eval_every = cfg.eval_every(cfg.iterations);
    let mut tracker = BestTracker::default();
    let mut losses = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let (xs, ys, xt) = sampler.next_pair()?;
        let report = model.step(&xs, &ys, &xt, it, lr_multiplier(choice, it, cfg.iterations))?;
        losses.push(LossRow { iteration: it as u64 + 1, report });
        if (it + 1) % eval_every == 0 || it + 1 == cfg.iterations {
            let r = eval_result(&model.f, &val, "SceneAdapt", &cfg.source, Split::Val, it as u64 + 1)?;
            log::info!("SceneAdapt iter {}: source val m_iou {:.4}", it + 1, r.m_iou.mean);
            tracker.observe(r, || model.all_params());
        }
    }
    Ok(TrainOutcome::from_tracker(tracker, losses))
}
