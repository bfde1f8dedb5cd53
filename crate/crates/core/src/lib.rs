//! Scene-based domain adaptation for semantic segmentation.
//!
//! A segmentation network `F` is trained on labeled source-view images
//! while a generator `G` reconstructs every input image (source and
//! target) from `F`'s class scores and a patch discriminator `D` judges
//! those reconstructions. Only `F` is used at inference.

pub mod diffcore;
pub mod error;
pub mod fsutil;
pub mod geom;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod netpbm;
pub mod optim;
pub mod scalar;
pub mod scenegen;
pub mod seeding;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = diffcore::Tensor<f32>;
pub type Tensor64 = diffcore::Tensor<f64>;
pub type Tape32 = diffcore::Tape<f32>;
pub type Tape64 = diffcore::Tape<f64>;

pub type SegNetF32 = nets::SegNetF<f32>;
pub type GeneratorG32 = nets::GeneratorG<f32>;
pub type DiscriminatorD32 = nets::DiscriminatorD<f32>;
