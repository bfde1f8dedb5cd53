use super::params::leaky_gain;
use super::{Bound, ConvSpec, Network, ParamSet, LEAKY_SLOPE};
use crate::diffcore::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seeding::{rng_for, tag};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DConfig {
    pub width: usize,
    /// Number of stride-2 3×3 blocks before the 1×1 score layer.
    pub blocks: usize,
}

impl Default for DConfig {
    fn default() -> Self {
        Self {
            width: 16,
            blocks: 3,
        }
    }
}

/// Fully convolutional patch discriminator returning raw (pre-sigmoid)
/// scores `[B,1,H',W']`. With the default three blocks each output cell
/// sees a 15×15 input patch.
#[derive(Clone, Debug)]
pub struct DiscriminatorD<T> {
    config: DConfig,
    blocks: Vec<ConvSpec>,
    score: ConvSpec,
    params: ParamSet<T>,
}

pub fn build_d<T: Scalar>(config: DConfig, seed: u64) -> Result<DiscriminatorD<T>> {
    if config.width == 0 || config.blocks == 0 {
        return Err(Error::Config(format!("invalid discriminator config {config:?}")));
    }
    let blocks: Vec<ConvSpec> = (0..config.blocks)
        .map(|i| {
            let cin = if i == 0 { 3 } else { config.width << (i - 1) };
            ConvSpec::new(format!("d.conv{i}"), cin, config.width << i, 3, 2)
        })
        .collect();
    let score = ConvSpec::new("d.score", config.width << (config.blocks - 1), 1, 1, 1);
    let mut rng = rng_for(seed, &[tag("D")]);
    let mut params = ParamSet::new();
    for layer in &blocks {
        layer.init(&mut params, leaky_gain(LEAKY_SLOPE), &mut rng);
    }
    score.init(&mut params, 1.0, &mut rng);
    super::count_build(super::NetKind::D);
    Ok(DiscriminatorD {
        config,
        blocks,
        score,
        params,
    })
}

/// Receptive field of a chain of convolutions given as `(kernel, stride)`,
/// via `r ← r + (k − 1)·jump`, `jump ← jump·stride`.
pub fn receptive_field_of(layers: &[(usize, usize)]) -> usize {
    let mut r = 1;
    let mut jump = 1;
    for &(k, s) in layers {
        r += (k - 1) * jump;
        jump *= s;
    }
    r
}

pub fn receptive_field<T>(d: &DiscriminatorD<T>) -> usize {
    let chain: Vec<(usize, usize)> = d
        .blocks
        .iter()
        .chain(std::iter::once(&d.score))
        .map(|l| (l.kernel, l.stride))
        .collect();
    receptive_field_of(&chain)
}

impl<T: Scalar> DiscriminatorD<T> {
    pub fn config(&self) -> DConfig {
        self.config
    }

    /// Score-grid extent for an input extent.
    pub fn output_extent(&self, extent: usize) -> usize {
        self.blocks
            .iter()
            .chain(std::iter::once(&self.score))
            .fold(extent, |e, l| l.out_extent(e))
    }
}

impl<T: Scalar> Network<T> for DiscriminatorD<T> {
    fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    fn forward(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        let [_, c, h, w] = tape.value(x).dims4()?;
        let rf = receptive_field(self);
        if c != 3 || h < rf || w < rf {
            return Err(Error::Shape(format!(
                "D needs a 3-channel input of at least {rf}x{rf}, got {c}x{h}x{w}"
            )));
        }
        let slope = T::lit(LEAKY_SLOPE);
        let mut cur = x;
        for layer in &self.blocks {
            cur = layer.apply(tape, bound, cur)?;
            cur = tape.leaky_relu(cur, slope)?;
        }
        self.score.apply(tape, bound, cur)
    }
}
