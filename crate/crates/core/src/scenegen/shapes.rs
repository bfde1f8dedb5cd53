use serde::{Deserialize, Serialize};

/// Planar region in canonical scene coordinates (`u` right, `v` down).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Rect { u0: f64, v0: f64, u1: f64, v1: f64 },
    /// Convex polygon, vertices in either winding order.
    Polygon(Vec<(f64, f64)>),
    Ellipse { cu: f64, cv: f64, ru: f64, rv: f64 },
}

impl Shape {
    pub fn contains(&self, u: f64, v: f64) -> bool {
        match self {
            Shape::Rect { u0, v0, u1, v1 } => u >= *u0 && u < *u1 && v >= *v0 && v < *v1,
            Shape::Polygon(pts) => {
                let n = pts.len();
                let mut sign = 0.0f64;
                for i in 0..n {
                    let (a, b) = (pts[i], pts[(i + 1) % n]);
                    let cross = (b.0 - a.0) * (v - a.1) - (b.1 - a.1) * (u - a.0);
                    if cross == 0.0 {
                        continue;
                    }
                    if sign == 0.0 {
                        sign = cross.signum();
                    } else if cross.signum() != sign {
                        return false;
                    }
                }
                true
            }
            Shape::Ellipse { cu, cv, ru, rv } => {
                let (du, dv) = ((u - cu) / ru, (v - cv) / rv);
                du * du + dv * dv <= 1.0
            }
        }
    }

    /// Axis-aligned bounding box `(u0, v0, u1, v1)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match self {
            Shape::Rect { u0, v0, u1, v1 } => (*u0, *v0, *u1, *v1),
            Shape::Polygon(pts) => pts.iter().fold(
                (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
                |(a, b, c, d), &(u, v)| (a.min(u), b.min(v), c.max(u), d.max(v)),
            ),
            Shape::Ellipse { cu, cv, ru, rv } => (cu - ru, cv - rv, cu + ru, cv + rv),
        }
    }

    pub fn translated(&self, du: f64, dv: f64) -> Shape {
        match self {
            Shape::Rect { u0, v0, u1, v1 } => Shape::Rect {
                u0: u0 + du,
                v0: v0 + dv,
                u1: u1 + du,
                v1: v1 + dv,
            },
            Shape::Polygon(pts) => Shape::Polygon(pts.iter().map(|&(u, v)| (u + du, v + dv)).collect()),
            Shape::Ellipse { cu, cv, ru, rv } => Shape::Ellipse {
                cu: cu + du,
                cv: cv + dv,
                ru: *ru,
                rv: *rv,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_containment_is_winding_agnostic() {
        let ccw = Shape::Polygon(vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let cw = Shape::Polygon(vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)]);
        for s in [ccw, cw] {
            assert!(s.contains(0.5, 0.5));
            assert!(!s.contains(1.5, 0.5));
        }
    }

    #[test]
    fn ellipse_and_rect() {
        let e = Shape::Ellipse { cu: 0.0, cv: 0.0, ru: 2.0, rv: 1.0 };
        assert!(e.contains(1.9, 0.0) && !e.contains(0.0, 1.1));
        let r = Shape::Rect { u0: 0.0, v0: 0.0, u1: 1.0, v1: 1.0 };
        assert!(r.contains(0.0, 0.0) && !r.contains(1.0, 0.5));
        assert_eq!(r.translated(1.0, 2.0).bounds(), (1.0, 2.0, 2.0, 3.0));
    }
}
