//! The three networks: segmentation `F`, reconstruction generator `G` and
//! patch discriminator `D`, plus parameter storage and checkpoints.

mod checkpoint;
mod discriminator;
mod generator;
mod params;
mod segnet;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use discriminator::{build_d, receptive_field, DiscriminatorD, DConfig};
pub use generator::{build_g, GConfig, GeneratorG};
pub use params::{Bound, ConvSpec, Grads, ParamSet};
pub use segnet::{build_f, FConfig, SegNetF};

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetKind {
    F,
    G,
    D,
}

thread_local! {
    static BUILT: std::cell::Cell<[usize; 3]> = const { std::cell::Cell::new([0; 3]) };
}

fn count_build(kind: NetKind) {
    BUILT.with(|b| {
        let mut c = b.get();
        c[kind as usize] += 1;
        b.set(c);
    });
}

/// Networks of each kind constructed so far on this thread, as `[F, G, D]`.
pub fn networks_built() -> [usize; 3] {
    BUILT.with(|b| b.get())
}

/// Negative-side slope of every leaky ReLU in the three networks.
pub const LEAKY_SLOPE: f64 = 0.2;

pub trait Network<T: Scalar> {
    fn params(&self) -> &ParamSet<T>;

    fn params_mut(&mut self) -> &mut ParamSet<T>;

    fn forward(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var>;

    /// Records every parameter on `tape`.
    fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        self.params().bind(tape, trainable)
    }

    /// Forward pass without gradient bookkeeping.
    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let y = self.forward(&mut tape, &bound, xv)?;
        Ok(tape.value(y).clone())
    }
}
