use super::params::leaky_gain;
use super::{Bound, ConvSpec, Network, ParamSet, LEAKY_SLOPE};
use crate::diffcore::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seeding::{rng_for, tag};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FConfig {
    pub classes: usize,
    /// Channels of the full-resolution stem; deeper levels use 2× and 4×.
    pub width: usize,
    /// Number of stride-2 encoder blocks.
    pub depth: usize,
}

impl Default for FConfig {
    fn default() -> Self {
        Self {
            classes: 8,
            width: 16,
            depth: 3,
        }
    }
}

/// Encoder-decoder segmentation network.
///
/// `stem` (3×3, full resolution) → `depth` stride-2 encoder blocks →
/// `depth` decoder blocks (nearest 2× upsample, 3×3 conv, leaky ReLU, plus
/// the encoder feature map of the same resolution) → 1×1 class head.
/// Output scores are pre-softmax.
#[derive(Clone, Debug)]
pub struct SegNetF<T> {
    config: FConfig,
    stem: ConvSpec,
    encoder: Vec<ConvSpec>,
    decoder: Vec<ConvSpec>,
    head: ConvSpec,
    params: ParamSet<T>,
}

fn level_channels(width: usize, level: usize) -> usize {
    width << level.min(2)
}

pub fn build_f<T: Scalar>(config: FConfig, seed: u64) -> Result<SegNetF<T>> {
    if config.classes < 2 {
        return Err(Error::Config(format!(
            "segmentation needs at least 2 classes, got {}",
            config.classes
        )));
    }
    if config.width == 0 || config.depth == 0 {
        return Err(Error::Config("F width and depth must be positive".into()));
    }
    let w = config.width;
    let stem = ConvSpec::new("f.stem", 3, w, 3, 1);
    let encoder: Vec<ConvSpec> = (0..config.depth)
        .map(|i| {
            ConvSpec::new(
                format!("f.enc{i}"),
                level_channels(w, i),
                level_channels(w, i + 1),
                3,
                2,
            )
        })
        .collect();
    // decoder[i] maps level i+1 back to level i; applied deepest first
    let decoder: Vec<ConvSpec> = (0..config.depth)
        .map(|i| {
            ConvSpec::new(
                format!("f.dec{i}"),
                level_channels(w, i + 1),
                level_channels(w, i),
                3,
                1,
            )
        })
        .collect();
    let head = ConvSpec::new("f.head", w, config.classes, 1, 1);

    let mut rng = rng_for(seed, &[tag("F")]);
    let mut params = ParamSet::new();
    let gain = leaky_gain(LEAKY_SLOPE);
    stem.init(&mut params, gain, &mut rng);
    for layer in encoder.iter().chain(&decoder) {
        layer.init(&mut params, gain, &mut rng);
    }
    head.init(&mut params, 1.0, &mut rng);
    super::count_build(super::NetKind::F);
    Ok(SegNetF {
        config,
        stem,
        encoder,
        decoder,
        head,
        params,
    })
}

impl<T: Scalar> SegNetF<T> {
    pub fn config(&self) -> FConfig {
        self.config
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    /// Checks that an `h×w` input survives `depth` halvings exactly.
    pub fn check_resolution(&self, h: usize, w: usize) -> Result<()> {
        let m = 1usize << self.config.depth;
        if !h.is_multiple_of(m) || !w.is_multiple_of(m) || h == 0 || w == 0 {
            return Err(Error::Config(format!(
                "resolution {w}x{h} is not divisible by 2^{} = {m}",
                self.config.depth
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> Network<T> for SegNetF<T> {
    fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    fn forward(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        let [_, c, h, w] = tape.value(x).dims4()?;
        if c != 3 {
            return Err(Error::Shape(format!("F expects 3 input channels, got {c}")));
        }
        self.check_resolution(h, w)?;
        let slope = T::lit(LEAKY_SLOPE);
        let mut skips = Vec::with_capacity(self.config.depth + 1);
        let mut cur = self.stem.apply(tape, bound, x)?;
        cur = tape.leaky_relu(cur, slope)?;
        for layer in &self.encoder {
            skips.push(cur);
            cur = layer.apply(tape, bound, cur)?;
            cur = tape.leaky_relu(cur, slope)?;
        }
        for layer in self.decoder.iter().rev() {
            cur = tape.upsample_nearest2x(cur)?;
            cur = layer.apply(tape, bound, cur)?;
            cur = tape.leaky_relu(cur, slope)?;
            let skip = skips.pop().expect("one skip per level");
            cur = tape.add(cur, skip)?;
        }
        self.head.apply(tape, bound, cur)
    }
}
