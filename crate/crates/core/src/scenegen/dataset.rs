use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::render::{render_frame, ViewSpec};
use super::scene::build_scene;
use super::taxonomy::Taxonomy;
use crate::error::{Error, Result};
use crate::fsutil::{create_dir_all, read, write_atomic};
use crate::geom::{AffineTransform, Image, Mask};
use crate::netpbm::{decode_pgm, decode_ppm, encode_pgm, encode_ppm};
use crate::seeding::{rng_for, tag};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub scenes: Vec<u32>,
    pub views: Vec<String>,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub taxonomy: Taxonomy,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            scenes: vec![1, 2, 3],
            views: vec!["A".into(), "B".into()],
            frames: 300,
            width: 64,
            height: 64,
            seed: 0,
            taxonomy: Taxonomy::Desk8,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenes.is_empty() || self.views.is_empty() {
            return Err(Error::Config("dataset needs at least one scene and one view".into()));
        }
        if self.frames == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::Config("frames, width and height must be positive".into()));
        }
        for v in &self.views {
            ViewSpec::standard(v, self.width, self.height)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub w: usize,
    pub h: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub image_path: String,
    pub mask_path: String,
    pub scene: u32,
    /// Index into `DatasetManifest::views`.
    pub view: usize,
    pub t: u64,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub resolution: Resolution,
    pub seed: u64,
    pub views: Vec<AffineTransform>,
    pub view_names: Vec<String>,
    pub scenes: Vec<u32>,
    pub taxonomy: Taxonomy,
    pub frames: Vec<FrameRecord>,
}

/// Subset name such as `"A1"`: view id followed by scene id.
pub fn subset_name(view: &str, scene: u32) -> String {
    format!("{view}{scene}")
}

/// Parses `"B3"` into `("B", 3)`.
pub fn parse_subset(name: &str) -> Result<(String, u32)> {
    let split = name.find(|c: char| c.is_ascii_digit()).unwrap_or(name.len());
    let (view, scene) = name.split_at(split);
    match (view.is_empty(), scene.parse::<u32>()) {
        (false, Ok(s)) => Ok((view.to_string(), s)),
        _ => Err(Error::Config(format!("malformed subset name {name:?} (expected e.g. \"A1\")"))),
    }
}

/// Seeded 60/20/20 split of `n` frames.
pub fn assign_splits(n: usize, seed: u64, scene: u32, view: &str) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[tag("split"), scene as u64, tag(view)]));
    let n_train = (0.6 * n as f64).round() as usize;
    let n_val = ((0.2 * n as f64).round() as usize).min(n - n_train);
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

/// Renders every (scene, view, t) frame into `out_dir/<subset>/` and writes
/// the manifest last, so a directory without one is known to be partial.
pub fn generate_dataset(config: &DatasetConfig, out_dir: &Path, jobs: usize) -> Result<DatasetManifest> {
    config.validate()?;
    let result = generate_inner(config, out_dir, jobs.max(1));
    if let Err(e) = &result {
        log::warn!("dataset generation aborted, {} holds partial output: {e}", out_dir.display());
    }
    result
}

fn generate_inner(config: &DatasetConfig, out_dir: &Path, jobs: usize) -> Result<DatasetManifest> {
    let (w, h) = (config.width, config.height);
    let views: Vec<ViewSpec> = config
        .views
        .iter()
        .map(|v| ViewSpec::standard(v, w, h))
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    let mut work = Vec::new();
    for &scene_id in &config.scenes {
        let scene = build_scene(scene_id, config.seed, config.taxonomy);
        for (vi, view) in views.iter().enumerate() {
            let subset = subset_name(&view.view_id, scene_id);
            create_dir_all(&out_dir.join(&subset))?;
            let splits = assign_splits(config.frames, config.seed, scene_id, &view.view_id);
            for (t, split) in splits.into_iter().enumerate() {
                let rec = FrameRecord {
                    image_path: format!("{subset}/img_{t:06}.ppm"),
                    mask_path: format!("{subset}/mask_{t:06}.pgm"),
                    scene: scene_id,
                    view: vi,
                    t: t as u64,
                    split,
                };
                work.push((scene.clone(), vi, rec.clone()));
                records.push(rec);
            }
        }
    }

    let render_one = |(scene, vi, rec): &(super::scene::SceneSpec, usize, FrameRecord)| -> Result<()> {
        let frame = render_frame(scene, &views[*vi], rec.t, w, h)?;
        write_atomic(&out_dir.join(&rec.image_path), &encode_ppm(&frame.image)?)?;
        write_atomic(&out_dir.join(&rec.mask_path), &encode_pgm(&frame.mask))
    };
    if jobs == 1 {
        work.iter().try_for_each(render_one)?;
    } else {
        let chunk = work.len().div_ceil(jobs);
        std::thread::scope(|s| {
            let handles: Vec<_> = work
                .chunks(chunk)
                .map(|part| s.spawn(|| part.iter().try_for_each(render_one)))
                .collect();
            handles
                .into_iter()
                .try_for_each(|h| h.join().expect("render worker panicked"))
        })?;
    }

    let manifest = DatasetManifest {
        classes: config.taxonomy.class_names(),
        resolution: Resolution { w, h },
        seed: config.seed,
        views: views.iter().map(|v| v.transform).collect(),
        view_names: config.views.clone(),
        scenes: config.scenes.clone(),
        taxonomy: config.taxonomy,
        frames: records,
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}

impl DatasetManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::Json {
            context: "serializing manifest".into(),
            source: e,
        })?;
        write_atomic(&dir.join(MANIFEST_FILE), &json)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = read(&path)?;
        let m: Self = serde_json::from_slice(&bytes).map_err(|e| Error::Json {
            context: path.display().to_string(),
            source: e,
        })?;
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        if self.views.len() != self.view_names.len() {
            return Err(Error::Data("manifest lists different numbers of views and view names".into()));
        }
        if let Some(f) = self.frames.iter().find(|f| f.view >= self.views.len()) {
            return Err(Error::Data(format!("frame {} refers to missing view {}", f.image_path, f.view)));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn view_index(&self, view: &str) -> Result<usize> {
        self.view_names
            .iter()
            .position(|v| v == view)
            .ok_or_else(|| Error::Config(format!("unknown view {view:?}; manifest has {:?}", self.view_names)))
    }

    pub fn view_transform(&self, view: &str) -> Result<AffineTransform> {
        Ok(self.views[self.view_index(view)?])
    }

    /// Frames of subset `name` (e.g. `"A1"`) in `split`, ordered by `t`.
    pub fn subset_frames(&self, name: &str, split: Split) -> Result<Vec<&FrameRecord>> {
        let (view, scene) = parse_subset(name)?;
        let vi = self.view_index(&view)?;
        if !self.scenes.contains(&scene) {
            return Err(Error::Config(format!("unknown scene {scene} in subset {name:?}")));
        }
        let mut out: Vec<_> = self
            .frames
            .iter()
            .filter(|f| f.scene == scene && f.view == vi && f.split == split)
            .collect();
        out.sort_by_key(|f| f.t);
        Ok(out)
    }
}

pub fn load_image(dir: &Path, rec: &FrameRecord) -> Result<Image> {
    let path = dir.join(&rec.image_path);
    decode_ppm(&read(&path)?).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn load_mask(dir: &Path, rec: &FrameRecord) -> Result<Mask> {
    let path = dir.join(&rec.mask_path);
    decode_pgm(&read(&path)?).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}
