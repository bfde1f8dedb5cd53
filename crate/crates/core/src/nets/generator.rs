use super::params::leaky_gain;
use super::{Bound, ConvSpec, Network, ParamSet, LEAKY_SLOPE};
use crate::diffcore::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seeding::{rng_for, tag};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GConfig {
    pub classes: usize,
    pub width: usize,
}

impl Default for GConfig {
    fn default() -> Self {
        Self {
            classes: 8,
            width: 16,
        }
    }
}

/// Maps class scores `[B,C,H,W]` to an RGB image `[B,3,H,W]` in `[0,1]`:
/// two 3×3 conv + leaky ReLU blocks and a 3×3 conv to RGB with a sigmoid.
#[derive(Clone, Debug)]
pub struct GeneratorG<T> {
    config: GConfig,
    layers: Vec<ConvSpec>,
    params: ParamSet<T>,
}

pub fn build_g<T: Scalar>(config: GConfig, seed: u64) -> Result<GeneratorG<T>> {
    if config.classes < 2 || config.width == 0 {
        return Err(Error::Config(format!("invalid generator config {config:?}")));
    }
    let w = config.width;
    let layers = vec![
        ConvSpec::new("g.conv0", config.classes, w, 3, 1),
        ConvSpec::new("g.conv1", w, w, 3, 1),
        ConvSpec::new("g.conv2", w, 3, 3, 1),
    ];
    let mut rng = rng_for(seed, &[tag("G")]);
    let mut params = ParamSet::new();
    for (i, layer) in layers.iter().enumerate() {
        let gain = if i + 1 == layers.len() { 1.0 } else { leaky_gain(LEAKY_SLOPE) };
        layer.init(&mut params, gain, &mut rng);
    }
    super::count_build(super::NetKind::G);
    Ok(GeneratorG {
        config,
        layers,
        params,
    })
}

impl<T: Scalar> GeneratorG<T> {
    pub fn config(&self) -> GConfig {
        self.config
    }
}

impl<T: Scalar> Network<T> for GeneratorG<T> {
    fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    fn forward(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        let [_, c, _, _] = tape.value(x).dims4()?;
        if c != self.config.classes {
            return Err(Error::Shape(format!(
                "G expects {} score channels, got {c}",
                self.config.classes
            )));
        }
        let slope = T::lit(LEAKY_SLOPE);
        let mut cur = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer.apply(tape, bound, cur)?;
            cur = if i == last {
                tape.sigmoid(cur)?
            } else {
                tape.leaky_relu(cur, slope)?
            };
        }
        Ok(cur)
    }
}
