use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scene::{Rgb, SceneSpec, Texture};
use super::shapes::Shape;
use crate::error::{Error, Result};
use crate::geom::{AffineTransform, Image, Mask};
use crate::seeding::{derive_seed, rng_for, tag};

/// A camera: maps canonical scene coordinates to pixel coordinates of a
/// `width × height` image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub view_id: String,
    pub transform: AffineTransform,
}

impl ViewSpec {
    pub fn new(view_id: impl Into<String>, transform: AffineTransform) -> Result<Self> {
        if !transform.is_invertible() {
            return Err(Error::Config(format!("view transform is singular: {:?}", transform.0)));
        }
        Ok(Self { view_id: view_id.into(), transform })
    }

    /// View "A" frames `[0.05, 0.95]²`. View "B" is a sheared, anisotropically
    /// zoomed and shifted camera over the same street.
    pub fn standard(view_id: &str, width: usize, height: usize) -> Result<Self> {
        let (w, h) = (width as f64, height as f64);
        let m = match view_id {
            "A" => {
                let (sx, sy) = (w / 0.9, h / 0.9);
                [[sx, 0.0, -0.05 * sx - 0.5], [0.0, sy, -0.05 * sy - 0.5]]
            }
            "B" => {
                let (sx, sy, k) = (w / 0.78, h / 0.82, 0.12);
                // x = sx·((u − 0.14) + k·(v − 0.5)), y = sy·(v − 0.13)
                [
                    [sx, sx * k, -sx * (0.14 + 0.5 * k) - 0.5],
                    [0.0, sy, -0.13 * sy - 0.5],
                ]
            }
            other => return Err(Error::Config(format!("unknown view id {other:?} (expected \"A\" or \"B\")"))),
        };
        Self::new(view_id, AffineTransform::new(m))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub image: Image,
    pub mask: Mask,
    pub scene_id: u32,
    pub view_id: String,
    pub t: u64,
}

fn hash01(seed: u64, i: i64, j: i64) -> f32 {
    let h = derive_seed(seed, &[i as u64, j as u64]);
    (h >> 40) as f32 / (1u64 << 24) as f32
}

/// Bilinear value noise on the integer lattice, in `[0, 1)`.
fn value_noise(seed: u64, u: f64, v: f64) -> f32 {
    let (fu, fv) = (u.floor(), v.floor());
    let (i, j) = (fu as i64, fv as i64);
    let (a, b) = ((u - fu) as f32, (v - fv) as f32);
    let top = hash01(seed, i, j) * (1.0 - a) + hash01(seed, i + 1, j) * a;
    let bot = hash01(seed, i, j + 1) * (1.0 - a) + hash01(seed, i + 1, j + 1) * a;
    top * (1.0 - b) + bot * b
}

fn shade(color: Rgb, texture: &Texture, u: f64, v: f64) -> Rgb {
    let factor = match *texture {
        Texture::Flat => 1.0,
        Texture::Gradient { strength } => 1.0 - strength * 0.5 + strength * v.clamp(0.0, 1.0) as f32,
        Texture::Windows { period_u, period_v, factor } => {
            let (fu, fv) = ((u / period_u).rem_euclid(1.0), (v / period_v).rem_euclid(1.0));
            if (0.3..0.75).contains(&fu) && (0.35..0.75).contains(&fv) {
                factor
            } else {
                1.0
            }
        }
        Texture::Grain { amplitude, frequency, seed } => {
            1.0 + amplitude * (value_noise(seed, u * frequency, v * frequency) - 0.5)
        }
        Texture::Stripes { period, factor } => {
            if (u / period).rem_euclid(1.0) < 0.4 {
                factor
            } else {
                1.0
            }
        }
    };
    color.map(|c| c * factor)
}

struct Layer<'a> {
    class: u8,
    shape: &'a Shape,
    bounds: (f64, f64, f64, f64),
    color: Rgb,
    texture: Option<&'a Texture>,
}

impl Layer<'_> {
    fn hit(&self, u: f64, v: f64) -> bool {
        let (u0, v0, u1, v1) = self.bounds;
        u >= u0 && u <= u1 && v >= v0 && v <= v1 && self.shape.contains(u, v)
    }
}

/// Per-frame photometric state shared by both views of a scene.
#[derive(Clone, Copy, Debug)]
pub struct Lighting {
    pub brightness: f32,
    pub tint: Rgb,
}

pub fn lighting_at(scene: &SceneSpec, t: u64) -> Lighting {
    let mut rng = rng_for(scene.layout_seed, &[tag("weather"), t]);
    let r = scene.lighting;
    let brightness = rng.gen_range(r.brightness.0..r.brightness.1);
    let tint = [(); 3].map(|_| rng.gen_range(-r.tint..r.tint));
    Lighting { brightness, tint }
}

/// Renders `scene` through `view` at frame `t`. Image and mask are
/// point-sampled at pixel centers from one painter's stack.
pub fn render_frame(scene: &SceneSpec, view: &ViewSpec, t: u64, width: usize, height: usize) -> Result<Frame> {
    let inv = view.transform.invert()?;
    let classes = scene.taxonomy.num_classes() as u8;

    let agent_parts: Vec<(u8, Vec<(Shape, Rgb)>)> = scene
        .agents
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.parts_at(t, scene.layout_seed, i).map(|p| (a.class, p)))
        .collect();
    // topmost first
    let mut layers: Vec<Layer> = Vec::new();
    for (class, parts) in agent_parts.iter().rev() {
        for (shape, color) in parts.iter().rev() {
            layers.push(Layer { class: *class, shape, bounds: shape.bounds(), color: *color, texture: None });
        }
    }
    for p in scene.statics.iter().rev() {
        layers.push(Layer { class: p.class, shape: &p.shape, bounds: p.shape.bounds(), color: p.color, texture: Some(&p.texture) });
    }
    debug_assert!(layers.iter().all(|l| l.class < classes));

    let light = lighting_at(scene, t);
    let noise_dist = Normal::new(0.0f32, scene.lighting.noise_sigma)
        .map_err(|e| Error::Config(format!("lighting noise: {e}")))?;
    let mut noise = rng_for(scene.layout_seed, &[tag("noise"), tag(&view.view_id), t]);

    let plane = width * height;
    let mut image = vec![0f32; 3 * plane];
    let mut mask = vec![0u8; plane];
    for y in 0..height {
        for x in 0..width {
            let (u, v) = inv.apply(x as f64, y as f64);
            let (class, color) = match layers.iter().find(|l| l.hit(u, v)) {
                Some(l) => (l.class, l.texture.map_or(l.color, |tex| shade(l.color, tex, u, v))),
                None => (0, [0.0; 3]),
            };
            let p = y * width + x;
            mask[p] = class;
            for c in 0..3 {
                let val = color[c] * light.brightness + light.tint[c] + noise_dist.sample(&mut noise);
                image[c * plane + p] = val.clamp(0.0, 1.0);
            }
        }
    }
    Ok(Frame {
        image: Image::new(3, height, width, image)?,
        mask: Mask::new(height, width, mask)?,
        scene_id: scene.scene_id,
        view_id: view.view_id.clone(),
        t,
    })
}
