//! Affine transforms between pixel coordinate frames and the warps built
//! on them. Pixel `(x, y)` has its center at integer coordinates; a
//! transform maps source coordinates to target coordinates and warps
//! sample the source through the inverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenegen::DatasetManifest;

/// Row-major `2×3` matrix `[[a, b, tx], [c, d, ty]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AffineTransform(pub [[f64; 3]; 2]);

impl AffineTransform {
    pub const IDENTITY: Self = Self([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);

    pub fn new(m: [[f64; 3]; 2]) -> Self {
        Self(m)
    }

    pub fn translate(tx: f64, ty: f64) -> Self {
        Self([[1.0, 0.0, tx], [0.0, 1.0, ty]])
    }

    pub fn scale(sx: f64, sy: f64) -> Self {
        Self([[sx, 0.0, 0.0], [0.0, sy, 0.0]])
    }

    pub fn shear_x(k: f64) -> Self {
        Self([[1.0, k, 0.0], [0.0, 1.0, 0.0]])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn is_invertible(&self) -> bool {
        let d = self.det();
        d.is_finite() && d.abs() > 1e-12
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.0;
        (
            m[0][0] * x + m[0][1] * y + m[0][2],
            m[1][0] * x + m[1][1] * y + m[1][2],
        )
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let (a, b) = (&self.0, &other.0);
        let mut out = [[0.0; 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
            out[r][2] += a[r][2];
        }
        Self(out)
    }

    pub fn invert(&self) -> Result<Self> {
        if !self.is_invertible() {
            return Err(Error::Numeric(format!(
                "affine transform with singular linear part (det {})",
                self.det()
            )));
        }
        let m = &self.0;
        let d = self.det();
        let (a, b, c, e) = (m[1][1] / d, -m[0][1] / d, -m[1][0] / d, m[0][0] / d);
        let tx = -(a * m[0][2] + b * m[1][2]);
        let ty = -(c * m[0][2] + e * m[1][2]);
        Ok(Self([[a, b, tx], [c, e, ty]]))
    }

    /// Largest singular value of the linear part.
    pub fn max_singular_value(&self) -> f64 {
        let m = &self.0;
        let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
        let s1 = a * a + b * b + c * c + d * d;
        let det = a * d - b * c;
        let disc = (s1 * s1 - 4.0 * det * det).max(0.0).sqrt();
        ((s1 + disc) / 2.0).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Planar image, channel-major `[channels][height][width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{} values for a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Row-major class-id mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "{} labels for a {height}x{width} mask",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn at(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

const EDGE_TOL: f64 = 1e-9;

fn inverse_for_warp(h: &AffineTransform) -> AffineTransform {
    // a singular transform maps everything onto a line; every sample is
    // out of bounds then, which the NaN coordinates produce naturally
    h.invert().unwrap_or(AffineTransform([[f64::NAN; 3]; 2]))
}

/// Bilinear inverse-mapped warp; pixels whose preimage falls outside the
/// source are black.
pub fn warp_image(image: &Image, h: &AffineTransform, out_width: usize, out_height: usize) -> Image {
    let inv = inverse_for_warp(h);
    let (w, hgt) = (image.width, image.height);
    let mut out = Image::zeros(image.channels, out_height, out_width);
    let plane_out = out_width * out_height;
    let plane_in = w * hgt;
    for y in 0..out_height {
        for x in 0..out_width {
            let (sx, sy) = inv.apply(x as f64, y as f64);
            if !(sx >= -EDGE_TOL
                && sy >= -EDGE_TOL
                && sx <= (w - 1) as f64 + EDGE_TOL
                && sy <= (hgt - 1) as f64 + EDGE_TOL)
            {
                continue;
            }
            let sx = sx.clamp(0.0, (w - 1) as f64);
            let sy = sy.clamp(0.0, (hgt - 1) as f64);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(hgt - 1));
            let (fx, fy) = ((sx - x0 as f64) as f32, (sy - y0 as f64) as f32);
            for c in 0..image.channels {
                let p = &image.data[c * plane_in..(c + 1) * plane_in];
                let top = p[y0 * w + x0] * (1.0 - fx) + p[y0 * w + x1] * fx;
                let bot = p[y1 * w + x0] * (1.0 - fx) + p[y1 * w + x1] * fx;
                out.data[c * plane_out + y * out_width + x] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

/// Nearest-neighbor inverse-mapped warp of a label mask; out-of-bounds
/// pixels get class 0.
pub fn warp_labels(mask: &Mask, h: &AffineTransform, out_width: usize, out_height: usize) -> Mask {
    let inv = inverse_for_warp(h);
    let mut data = vec![0u8; out_width * out_height];
    for y in 0..out_height {
        for x in 0..out_width {
            let (sx, sy) = inv.apply(x as f64, y as f64);
            let (rx, ry) = (sx.round(), sy.round());
            if rx >= 0.0 && ry >= 0.0 && rx < mask.width as f64 && ry < mask.height as f64 {
                data[y * out_width + x] = mask.at(ry as usize, rx as usize);
            }
        }
    }
    Mask {
        height: out_height,
        width: out_width,
        data,
    }
}

/// Whether target pixel `(x, y)` has a preimage inside a `w×h` source.
pub fn preimage_in_bounds(inv: &AffineTransform, x: usize, y: usize, w: usize, h: usize) -> bool {
    let (sx, sy) = inv.apply(x as f64, y as f64);
    let (rx, ry) = (sx.round(), sy.round());
    rx >= 0.0 && ry >= 0.0 && rx < w as f64 && ry < h as f64
}

/// Pixel transform taking view `view_a` onto view `view_b`.
pub fn inter_view_transform(manifest: &DatasetManifest, view_a: &str, view_b: &str) -> Result<AffineTransform> {
    let a = manifest.view_transform(view_a)?;
    let b = manifest.view_transform(view_b)?;
    Ok(b.compose(&a.invert()?))
}
