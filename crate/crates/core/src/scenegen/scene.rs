use rand::Rng;
use serde::{Deserialize, Serialize};

use super::shapes::Shape;
use super::taxonomy::*;
use crate::seeding::{derive_seed, rng_for, tag};

pub type Rgb = [f32; 3];

/// Procedural surface pattern, evaluated in canonical coordinates so it
/// stays attached to the scene under any view transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Texture {
    Flat,
    /// Brightness rises linearly with `v` (sky).
    Gradient { strength: f32 },
    /// Grid of darker window cells.
    Windows { period_u: f64, period_v: f64, factor: f32 },
    /// Smooth value noise of relative amplitude `amplitude`.
    Grain { amplitude: f32, frequency: f64, seed: u64 },
    /// Vertical bars darkened by `factor`.
    Stripes { period: f64, factor: f32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub class: u8,
    pub shape: Shape,
    pub color: Rgb,
    pub texture: Texture,
}

/// Moving agent made of several parts sharing one class. Parts are given
/// relative to `origin`; the agent slides along `u` (and along the road
/// slope in `v`), wrapping inside `u_range`, and is present in a frame
/// with probability `presence`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub class: u8,
    pub parts: Vec<(Shape, Rgb)>,
    pub origin: (f64, f64),
    pub velocity: f64,
    pub v_slope: f64,
    pub u_range: (f64, f64),
    pub presence: f64,
}

impl AgentSpec {
    /// Offset from `origin` at frame `t`, or `None` if absent.
    pub fn offset_at(&self, t: u64, scene_seed: u64, index: usize) -> Option<(f64, f64)> {
        let draw = derive_seed(scene_seed, &[tag("presence"), index as u64, t]);
        if (draw >> 11) as f64 / (1u64 << 53) as f64 >= self.presence {
            return None;
        }
        let (lo, hi) = self.u_range;
        let span = hi - lo;
        let u = lo + (self.origin.0 - lo + self.velocity * t as f64).rem_euclid(span);
        let du = u - self.origin.0;
        Some((du, du * self.v_slope))
    }

    pub fn parts_at(&self, t: u64, scene_seed: u64, index: usize) -> Option<Vec<(Shape, Rgb)>> {
        let (du, dv) = self.offset_at(t, scene_seed, index)?;
        Some(
            self.parts
                .iter()
                .map(|(s, c)| (s.translated(self.origin.0 + du, self.origin.1 + dv), *c))
                .collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightingRange {
    pub brightness: (f32, f32),
    pub tint: f32,
    pub noise_sigma: f32,
}

impl Default for LightingRange {
    fn default() -> Self {
        Self {
            brightness: (0.7, 1.2),
            tint: 0.06,
            noise_sigma: 0.02,
        }
    }
}

/// Static primitives in painter's order (later occludes earlier) plus the
/// dynamic agents, which are drawn on top in list order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub scene_id: u32,
    pub layout_seed: u64,
    pub taxonomy: Taxonomy,
    pub statics: Vec<Primitive>,
    pub agents: Vec<AgentSpec>,
    pub lighting: LightingRange,
}

fn jitter<R: Rng>(rng: &mut R, c: Rgb, amount: f32) -> Rgb {
    c.map(|v| (v + rng.gen_range(-amount..amount)).clamp(0.0, 1.0))
}

/// Half-plane below the line `v = v0 + slope·(u − 0.5)`, as a large quad.
fn below_line(v0: f64, slope: f64) -> Shape {
    let at = |u: f64| v0 + slope * (u - 0.5);
    Shape::Polygon(vec![(-2.0, at(-2.0)), (3.0, at(3.0)), (3.0, 4.0), (-2.0, 4.0)])
}

/// Band between two parallel lines restricted to `[u0, u1]`.
fn band(u0: f64, u1: f64, v_top: f64, v_bot: f64, slope: f64) -> Shape {
    let at = |v0: f64, u: f64| v0 + slope * (u - 0.5);
    Shape::Polygon(vec![
        (u0, at(v_top, u0)),
        (u1, at(v_top, u1)),
        (u1, at(v_bot, u1)),
        (u0, at(v_bot, u0)),
    ])
}

const VEHICLE_COLORS: [Rgb; 6] = [
    [0.75, 0.12, 0.10],
    [0.12, 0.22, 0.65],
    [0.88, 0.88, 0.86],
    [0.10, 0.10, 0.12],
    [0.60, 0.62, 0.65],
    [0.85, 0.70, 0.12],
];

const CLOTHES: [Rgb; 5] = [
    [0.55, 0.10, 0.35],
    [0.10, 0.45, 0.20],
    [0.80, 0.45, 0.10],
    [0.20, 0.20, 0.55],
    [0.85, 0.85, 0.20],
];

/// Deterministic layout for `(scene_id, master_seed)`.
pub fn build_scene(scene_id: u32, master_seed: u64, taxonomy: Taxonomy) -> SceneSpec {
    let layout_seed = derive_seed(master_seed, &[tag("scene"), scene_id as u64]);
    let mut rng = rng_for(layout_seed, &[]);
    let mut statics = Vec::new();

    let horizon: f64 = rng.gen_range(0.36..0.48);
    let far_sidewalk: f64 = rng.gen_range(0.05..0.08);
    let road_far = horizon + far_sidewalk;
    let road_near: f64 = rng.gen_range(0.74..0.84);
    let slope: f64 = rng.gen_range(-0.12..0.12);
    let line = |v0: f64, u: f64| v0 + slope * (u - 0.5);

    let sky: Rgb = jitter(&mut rng, [0.55, 0.68, 0.85], 0.12);
    statics.push(Primitive {
        class: UNLABELED,
        shape: Shape::Rect { u0: -3.0, v0: -3.0, u1: 4.0, v1: 4.0 },
        color: sky,
        texture: Texture::Gradient { strength: 0.25 },
    });

    // buildings: a row of blocks whose bottoms are hidden by the sidewalk
    let building_base: Rgb = jitter(&mut rng, [0.62, 0.50, 0.42], 0.18);
    let mut u = rng.gen_range(-1.2..-0.9);
    while u < 2.0 {
        let w = rng.gen_range(0.10..0.28);
        let top = rng.gen_range(0.03..(horizon - 0.12));
        statics.push(Primitive {
            class: BUILDING,
            shape: Shape::Rect { u0: u, v0: top, u1: u + w, v1: horizon + 0.6 },
            color: jitter(&mut rng, building_base, 0.12),
            texture: Texture::Windows {
                period_u: rng.gen_range(0.035..0.06),
                period_v: rng.gen_range(0.04..0.07),
                factor: rng.gen_range(0.45..0.7),
            },
        });
        u += w;
    }
    if taxonomy == Taxonomy::Full13 {
        let u0 = rng.gen_range(-0.1..0.5);
        statics.push(Primitive {
            class: WALL,
            shape: Shape::Rect { u0, v0: horizon - 0.08, u1: u0 + rng.gen_range(0.2..0.4), v1: horizon + 0.6 },
            color: jitter(&mut rng, [0.70, 0.68, 0.62], 0.08),
            texture: Texture::Grain { amplitude: 0.15, frequency: 40.0, seed: rng.gen() },
        });
    }

    let sidewalk: Rgb = jitter(&mut rng, [0.66, 0.64, 0.60], 0.1);
    statics.push(Primitive {
        class: SIDEWALK,
        shape: below_line(horizon, slope),
        color: sidewalk,
        texture: Texture::Grain { amplitude: 0.2, frequency: 30.0, seed: rng.gen() },
    });
    if taxonomy == Taxonomy::Full13 {
        let u0 = rng.gen_range(-0.2..0.4);
        statics.push(Primitive {
            class: FENCE,
            shape: band(u0, u0 + rng.gen_range(0.3..0.6), horizon - 0.035, horizon + 0.012, slope),
            color: jitter(&mut rng, [0.45, 0.35, 0.25], 0.08),
            texture: Texture::Stripes { period: 0.03, factor: 0.55 },
        });
        for _ in 0..rng.gen_range(2..4) {
            let cu = rng.gen_range(-0.1..1.1);
            statics.push(Primitive {
                class: VEGETATION,
                shape: Shape::Ellipse { cu, cv: line(horizon, cu) - 0.09, ru: rng.gen_range(0.05..0.09), rv: rng.gen_range(0.06..0.1) },
                color: jitter(&mut rng, [0.20, 0.50, 0.18], 0.08),
                texture: Texture::Grain { amplitude: 0.35, frequency: 50.0, seed: rng.gen() },
            });
        }
    }

    let road: Rgb = jitter(&mut rng, [0.30, 0.30, 0.32], 0.08);
    statics.push(Primitive {
        class: ROAD,
        shape: below_line(road_far, slope),
        color: road,
        texture: Texture::Grain { amplitude: 0.25, frequency: 45.0, seed: rng.gen() },
    });
    statics.push(Primitive {
        class: SIDEWALK,
        shape: below_line(road_near, slope),
        color: jitter(&mut rng, sidewalk, 0.04),
        texture: Texture::Grain { amplitude: 0.2, frequency: 30.0, seed: rng.gen() },
    });

    let center = (road_far + road_near) / 2.0;
    let dash: f64 = rng.gen_range(0.07..0.11);
    let gap: f64 = rng.gen_range(0.05..0.08);
    let thickness = 0.024;
    let lane: Rgb = if rng.gen_bool(0.5) { [0.95, 0.95, 0.92] } else { [0.92, 0.80, 0.20] };
    let mut u = -1.5 + rng.gen_range(0.0..(dash + gap));
    while u < 2.5 {
        statics.push(Primitive {
            class: LANE_LINE,
            shape: band(u, u + dash, center - thickness / 2.0, center + thickness / 2.0, slope),
            color: lane,
            texture: Texture::Flat,
        });
        u += dash + gap;
    }

    if taxonomy == Taxonomy::Full13 {
        for _ in 0..rng.gen_range(1..3) {
            let cu = rng.gen_range(0.0..1.0);
            let base = line(road_near, cu) + rng.gen_range(0.06..0.14);
            statics.push(Primitive {
                class: OTHER,
                shape: Shape::Rect { u0: cu - 0.025, v0: base - 0.05, u1: cu + 0.025, v1: base },
                color: jitter(&mut rng, [0.25, 0.40, 0.30], 0.1),
                texture: Texture::Flat,
            });
        }
    }

    let pole_color: Rgb = jitter(&mut rng, [0.22, 0.22, 0.24], 0.05);
    let n_poles = rng.gen_range(2..5);
    for i in 0..n_poles {
        let cu = rng.gen_range(-0.05..1.05);
        let (base, width, height) = if i % 2 == 0 {
            (line(horizon + far_sidewalk * 0.6, cu), 0.022, rng.gen_range(0.2..0.3))
        } else {
            (line(road_near + 0.07, cu), 0.03, rng.gen_range(0.3..0.42))
        };
        statics.push(Primitive {
            class: POLE,
            shape: Shape::Rect { u0: cu - width / 2.0, v0: base - height, u1: cu + width / 2.0, v1: base },
            color: pole_color,
            texture: Texture::Flat,
        });
        if taxonomy == Taxonomy::Full13 && i == 0 {
            statics.push(Primitive {
                class: TRAFFIC_SIGN,
                shape: Shape::Rect { u0: cu - 0.03, v0: base - height - 0.02, u1: cu + 0.03, v1: base - height + 0.04 },
                color: [0.85, 0.15, 0.12],
                texture: Texture::Flat,
            });
        }
    }

    let mut agents = Vec::new();
    let span = road_near - road_far;
    for i in 0..rng.gen_range(3..6) {
        let near = i % 2 == 1;
        let lane_v = road_far + span * if near { 0.78 } else { 0.32 };
        let scale = if near { 1.25 } else { 1.0 };
        let w = rng.gen_range(0.13..0.19) * scale;
        let h = rng.gen_range(0.055..0.075) * scale;
        let body = VEHICLE_COLORS[rng.gen_range(0..VEHICLE_COLORS.len())];
        let glass: Rgb = [0.18, 0.22, 0.28];
        let tyre: Rgb = [0.05, 0.05, 0.05];
        let speed = rng.gen_range(0.04..0.09);
        let u0 = rng.gen_range(-0.3..1.3);
        agents.push(AgentSpec {
            class: VEHICLE,
            parts: vec![
                (Shape::Rect { u0: -w / 2.0, v0: -h * 0.6, u1: w / 2.0, v1: h * 0.25 }, body),
                (Shape::Rect { u0: -w * 0.3, v0: -h * 1.1, u1: w * 0.28, v1: -h * 0.55 }, glass),
                (Shape::Ellipse { cu: -w * 0.3, cv: h * 0.25, ru: h * 0.22, rv: h * 0.22 }, tyre),
                (Shape::Ellipse { cu: w * 0.3, cv: h * 0.25, ru: h * 0.22, rv: h * 0.22 }, tyre),
            ],
            origin: (u0, line(lane_v, u0)),
            velocity: if near { -speed } else { speed },
            v_slope: slope,
            u_range: (-0.4, 1.4),
            presence: 0.85,
        });
    }
    for i in 0..rng.gen_range(3..7) {
        let near = i % 2 == 0;
        let cu = rng.gen_range(-0.1..1.1);
        let base = if near {
            line(road_near + rng.gen_range(0.06..0.16), cu)
        } else {
            line(horizon + far_sidewalk * rng.gen_range(0.4..0.9), cu)
        };
        let scale = if near { 1.3 } else { 1.0 };
        let w = rng.gen_range(0.022..0.03) * scale;
        let h = rng.gen_range(0.07..0.095) * scale;
        let shirt = CLOTHES[rng.gen_range(0..CLOTHES.len())];
        agents.push(AgentSpec {
            class: PEDESTRIAN,
            parts: vec![
                (Shape::Rect { u0: -w / 2.0, v0: -h * 0.8, u1: w / 2.0, v1: -h * 0.4 }, shirt),
                (Shape::Rect { u0: -w / 2.0, v0: -h * 0.4, u1: w / 2.0, v1: 0.0 }, [0.15, 0.15, 0.2]),
                (Shape::Ellipse { cu: 0.0, cv: -h * 0.88, ru: w * 0.45, rv: h * 0.12 }, [0.85, 0.68, 0.55]),
            ],
            origin: (cu, base),
            velocity: rng.gen_range(0.006..0.02) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
            v_slope: slope,
            u_range: (-0.2, 1.2),
            presence: 0.9,
        });
    }
    // farther agents first so nearer ones occlude them
    agents.sort_by(|a, b| a.origin.1.total_cmp(&b.origin.1));

    SceneSpec {
        scene_id,
        layout_seed,
        taxonomy,
        statics,
        agents,
        lighting: LightingRange::default(),
    }
}
