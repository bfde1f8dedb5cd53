use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::geom::{warp_image, warp_labels, AffineTransform, Image, Mask};
use crate::losses::LabelMask;
use crate::scenegen::{load_image, load_mask, DatasetManifest, Split};
use crate::seeding::{rng_for, tag};

/// Role a subset plays in a training run. Labels of a `Target` subset are
/// never handed out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Source,
    Target,
    /// Scoring a finished model; labels are readable.
    Evaluation,
}

/// Read access to one subset of a generated dataset.
#[derive(Clone, Debug)]
pub struct SubsetReader {
    dir: PathBuf,
    manifest: DatasetManifest,
    subset: String,
    role: Role,
}

/// Images with pixel labels, all of one resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub images: Vec<Image>,
    pub masks: Vec<Mask>,
}

/// Images without labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSet {
    pub images: Vec<Image>,
}

impl SubsetReader {
    pub fn open(dir: &Path, subset: &str, role: Role) -> Result<Self> {
        let manifest = DatasetManifest::load(dir)?;
        Self::with_manifest(dir, manifest, subset, role)
    }

    pub fn with_manifest(dir: &Path, manifest: DatasetManifest, subset: &str, role: Role) -> Result<Self> {
        for split in [Split::Train, Split::Val, Split::Test] {
            if manifest.subset_frames(subset, split)?.is_empty() {
                return Err(Error::Data(format!("subset {subset} has no {split:?} frames")));
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            subset: subset.to_string(),
            role,
        })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn subset(&self) -> &str {
        &self.subset
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn images(&self, split: Split) -> Result<ImageSet> {
        let images = self
            .manifest
            .subset_frames(&self.subset, split)?
            .into_iter()
            .map(|r| load_image(&self.dir, r))
            .collect::<Result<_>>()?;
        Ok(ImageSet { images })
    }

    pub fn labeled(&self, split: Split) -> Result<LabeledSet> {
        if self.role == Role::Target {
            return Err(Error::TargetLabelAccess(self.subset.clone()));
        }
        let frames = self.manifest.subset_frames(&self.subset, split)?;
        let mut images = Vec::with_capacity(frames.len());
        let mut masks = Vec::with_capacity(frames.len());
        for r in frames {
            images.push(load_image(&self.dir, r)?);
            let mask = load_mask(&self.dir, r)?;
            if let Some(&bad) = mask.data.iter().find(|&&c| c as usize >= self.manifest.num_classes()) {
                return Err(Error::Data(format!("{}: class id {bad} out of range", r.mask_path)));
            }
            masks.push(mask);
        }
        Ok(LabeledSet { images, masks })
    }
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Every image and mask resampled through `h` (bilinear and nearest).
    pub fn warped(&self, h: &AffineTransform) -> Self {
        Self {
            images: self.images.iter().map(|im| warp_image(im, h, im.width, im.height)).collect(),
            masks: self.masks.iter().map(|m| warp_labels(m, h, m.width, m.height)).collect(),
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor<f32>, LabelMask)> {
        let x = images_tensor(indices.iter().map(|&i| &self.images[i]))?;
        let (h, w) = (self.masks[0].height, self.masks[0].width);
        let mut labels = Vec::with_capacity(indices.len() * h * w);
        for &i in indices {
            labels.extend(self.masks[i].data.iter().map(|&c| c as usize));
        }
        Ok((x, LabelMask::new(indices.len(), h, w, labels)?))
    }
}

impl ImageSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Tensor<f32>> {
        images_tensor(indices.iter().map(|&i| &self.images[i]))
    }
}

/// Stacks RGB images into an `N×3×H×W` tensor.
pub fn images_tensor<'a>(images: impl Iterator<Item = &'a Image>) -> Result<Tensor<f32>> {
    let mut data = Vec::new();
    let mut dims: Option<(usize, usize)> = None;
    let mut n = 0;
    for im in images {
        if im.channels != 3 {
            return Err(Error::Data(format!("expected an RGB image, got {} channels", im.channels)));
        }
        match dims {
            None => dims = Some((im.height, im.width)),
            Some(d) if d != (im.height, im.width) => {
                return Err(Error::Data("images in one batch differ in size".into()));
            }
            _ => {}
        }
        data.extend_from_slice(&im.data);
        n += 1;
    }
    let (h, w) = dims.ok_or_else(|| Error::Usage("empty batch".into()))?;
    Tensor::new(&[n, 3, h, w], data)
}

/// Endless shuffled pass over `0..len`, reshuffled every epoch.
#[derive(Clone, Debug)]
pub struct EpochOrder {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl EpochOrder {
    pub fn new(len: usize, seed: u64, stream: &str) -> Self {
        let mut rng = rng_for(seed, &[tag("order"), tag(stream)]);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        Self { order, pos: 0, rng }
    }

    pub fn next_index(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }

    /// Remaining indices of the current epoch, at most `n`.
    pub fn next_batch(&mut self, n: usize) -> Vec<usize> {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + n).min(self.order.len());
        let out = self.order[self.pos..end].to_vec();
        self.pos = end;
        out
    }
}

/// Source samples with labels and target samples as bare images, drawn
/// one of each per step.
pub struct DomainSampler {
    source: LabeledSet,
    target: ImageSet,
    source_order: EpochOrder,
    target_order: EpochOrder,
}

impl DomainSampler {
    pub fn new(source: LabeledSet, target: ImageSet, seed: u64) -> Result<Self> {
        if source.is_empty() || target.is_empty() {
            return Err(Error::Data("source and target training splits must be non-empty".into()));
        }
        let source_order = EpochOrder::new(source.len(), seed, "source");
        let target_order = EpochOrder::new(target.len(), seed, "target");
        Ok(Self {
            source,
            target,
            source_order,
            target_order,
        })
    }

    /// Next `(source image, source labels, target image)`, each batch 1.
    pub fn next_pair(&mut self) -> Result<(Tensor<f32>, LabelMask, Tensor<f32>)> {
        let (xs, ys) = self.source.batch(&[self.source_order.next_index()])?;
        let xt = self.target.batch(&[self.target_order.next_index()])?;
        Ok((xs, ys, xt))
    }
}
