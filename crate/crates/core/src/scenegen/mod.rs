//! Procedural street scenes seen from two cameras, with pixel-exact labels.

mod dataset;
mod render;
mod scene;
mod shapes;
mod taxonomy;

pub use dataset::{
    assign_splits, generate_dataset, load_image, load_mask, parse_subset, subset_name, DatasetConfig,
    DatasetManifest, FrameRecord, Resolution, Split, MANIFEST_FILE,
};
pub use render::{lighting_at, render_frame, Frame, Lighting, ViewSpec};
pub use scene::{build_scene, AgentSpec, LightingRange, Primitive, Rgb, SceneSpec, Texture};
pub use shapes::Shape;
pub use taxonomy::*;
