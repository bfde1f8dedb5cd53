use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{GanForm, LossToggles, LossWeights};
use crate::nets::{DConfig, FConfig, GConfig};
use crate::optim::{AdamConfig, SgdConfig};
use crate::scenegen::parse_subset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Source-only training.
    #[serde(rename = "NA")]
    Na,
    /// Supervised training on the target (reference bound).
    #[serde(rename = "FT")]
    Ft,
    /// Source data pre-warped into the target view.
    #[serde(rename = "WARP")]
    Warp,
    SceneAdapt,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Na => "NA",
            Method::Ft => "FT",
            Method::Warp => "WARP",
            Method::SceneAdapt => "SceneAdapt",
        }
    }

    pub fn is_supervised_baseline(self) -> bool {
        self != Method::SceneAdapt
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "NA" => Ok(Method::Na),
            "FT" => Ok(Method::Ft),
            "WARP" => Ok(Method::Warp),
            "SceneAdapt" => Ok(Method::SceneAdapt),
            _ => Err(Error::Config(format!(
                "method: unknown value {s:?} (expected NA, FT, WARP or SceneAdapt)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptationKind {
    /// Same scene, different camera.
    PointOfView,
    /// Different scene.
    Scene,
}

impl AdaptationKind {
    /// Kind of a `source → target` subset pair such as `A1 → B1`.
    pub fn of_pair(source: &str, target: &str) -> Result<Self> {
        let (sv, ss) = parse_subset(source)?;
        let (tv, ts) = parse_subset(target)?;
        match (ss == ts, sv == tv) {
            (true, false) => Ok(AdaptationKind::PointOfView),
            (false, true) => Ok(AdaptationKind::Scene),
            (true, true) => Err(Error::Config(format!(
                "target: {target} is the source subset itself"
            ))),
            (false, false) => Err(Error::Config(format!(
                "target: {source} → {target} changes both scene and view"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AdaptationKind::PointOfView => "point_of_view",
            AdaptationKind::Scene => "scene",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerChoice {
    /// SGD with momentum under the poly schedule.
    Sgd {
        #[serde(flatten)]
        sgd: SgdConfig,
        poly_power: f64,
    },
    Adam(AdamConfig),
}

impl OptimizerChoice {
    pub fn default_for(method: Method) -> Self {
        if method.is_supervised_baseline() {
            OptimizerChoice::Sgd {
                sgd: SgdConfig::default(),
                poly_power: 0.9,
            }
        } else {
            OptimizerChoice::Adam(AdamConfig::default())
        }
    }
}

/// One training run. Fields left `None` take the method's default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub source: String,
    pub target: String,
    /// Must agree with the pair if given.
    pub kind: Option<AdaptationKind>,
    pub losses: Option<LossToggles>,
    pub weights: LossWeights,
    pub gan_form: GanForm,
    pub optimizer: Option<OptimizerChoice>,
    /// Epochs over the training split (supervised baselines).
    pub epochs: usize,
    pub batch_size: usize,
    /// Source/target sample pairs (SceneAdapt).
    pub iterations: usize,
    /// Iterations between validation passes; `None` means once per epoch
    /// for baselines and every 250 iterations for SceneAdapt.
    pub eval_every: Option<usize>,
    pub seed: u64,
    pub f: FConfig,
    pub g: GConfig,
    pub d: DConfig,
    /// Dataset directory holding `manifest.json`.
    pub data: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::SceneAdapt,
            source: "A1".into(),
            target: "B1".into(),
            kind: None,
            losses: None,
            weights: LossWeights::default(),
            gan_form: GanForm::default(),
            optimizer: None,
            epochs: 40,
            batch_size: 4,
            iterations: 3000,
            eval_every: None,
            seed: 0,
            f: FConfig::default(),
            g: GConfig::default(),
            d: DConfig::default(),
            data: "data".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn kind(&self) -> Result<AdaptationKind> {
        let kind = AdaptationKind::of_pair(&self.source, &self.target)?;
        if let Some(k) = self.kind {
            if k != kind {
                return Err(Error::Config(format!(
                    "kind: {} → {} is a {} pair, not {}",
                    self.source,
                    self.target,
                    kind.name(),
                    k.name()
                )));
            }
        }
        Ok(kind)
    }

    pub fn toggles(&self) -> LossToggles {
        self.losses.unwrap_or(if self.method.is_supervised_baseline() {
            LossToggles::SEM_ONLY
        } else {
            LossToggles::ALL
        })
    }

    pub fn optimizer(&self) -> OptimizerChoice {
        self.optimizer.unwrap_or(OptimizerChoice::default_for(self.method))
    }

    pub fn eval_every(&self, iterations_per_epoch: usize) -> usize {
        self.eval_every
            .unwrap_or(if self.method.is_supervised_baseline() { iterations_per_epoch } else { 250 })
            .max(1)
    }

    /// Checks every invariant that does not need the dataset.
    pub fn validate(&self) -> Result<AdaptationKind> {
        let kind = self.kind()?;
        let t = self.toggles();
        if self.method.is_supervised_baseline() {
            if t != LossToggles::SEM_ONLY {
                return Err(Error::Config(format!(
                    "losses: {} trains with the semantic loss only, got {}",
                    self.method.name(),
                    t.label()
                )));
            }
            if self.epochs == 0 || self.batch_size == 0 {
                return Err(Error::Config("epochs and batch_size must be positive".into()));
            }
        } else {
            if !t.sem || !(t.rec || t.gan) {
                return Err(Error::Config(format!(
                    "losses: SceneAdapt needs sem plus rec and/or gan, got {}",
                    t.label()
                )));
            }
            if self.iterations == 0 {
                return Err(Error::Config("iterations must be positive".into()));
            }
        }
        if self.method == Method::Warp && kind != AdaptationKind::PointOfView {
            return Err(Error::Config(format!(
                "method: WARP applies to point-of-view pairs only, {} → {} is a scene pair",
                self.source, self.target
            )));
        }
        for (name, w) in [("sem", self.weights.sem), ("rec", self.weights.rec), ("gan", self.weights.gan)] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!("weights.{name}: must be finite and non-negative")));
            }
        }
        Ok(kind)
    }

    /// Stable identifier of the config, stored in checkpoints.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", crate::seeding::tag(&json))
    }
}
