//! Procedural 2D vehicles and occluder shapes.
//!
//! A vehicle is described in a canonical side-view frame (`u` along the
//! length, `v` up from the ground, both in `[0, 1]`) and placed in the image
//! by a similarity transform plus a vertical squash.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Number of procedural body archetypes; also the class count of the
/// recognizability proxy classifier.
pub const VEHICLE_CLASSES: usize = 8;

#[derive(Clone, Copy, Debug)]
struct Archetype {
    /// Length divided by height.
    aspect: f64,
    body_bottom: f64,
    body_top: f64,
    roof: f64,
    /// Cabin footprint along the length at the belt line and at the roof.
    cabin_base: (f64, f64),
    cabin_roof: (f64, f64),
    wheels: (f64, f64),
    wheel_r: f64,
    hood_drop: f64,
}

const ARCHETYPES: [Archetype; VEHICLE_CLASSES] = [
    // sedan
    Archetype { aspect: 2.6, body_bottom: 0.12, body_top: 0.5, roof: 0.9, cabin_base: (0.24, 0.78), cabin_roof: (0.36, 0.66), wheels: (0.2, 0.8), wheel_r: 0.15, hood_drop: 0.06 },
    // hatchback
    Archetype { aspect: 2.2, body_bottom: 0.12, body_top: 0.5, roof: 0.92, cabin_base: (0.28, 0.97), cabin_roof: (0.42, 0.9), wheels: (0.2, 0.8), wheel_r: 0.16, hood_drop: 0.06 },
    // suv
    Archetype { aspect: 2.1, body_bottom: 0.16, body_top: 0.55, roof: 0.98, cabin_base: (0.22, 0.98), cabin_roof: (0.3, 0.96), wheels: (0.2, 0.8), wheel_r: 0.17, hood_drop: 0.03 },
    // pickup
    Archetype { aspect: 2.7, body_bottom: 0.14, body_top: 0.52, roof: 0.95, cabin_base: (0.3, 0.6), cabin_roof: (0.36, 0.58), wheels: (0.18, 0.8), wheel_r: 0.16, hood_drop: 0.03 },
    // van
    Archetype { aspect: 2.0, body_bottom: 0.12, body_top: 0.45, roof: 1.0, cabin_base: (0.1, 0.99), cabin_roof: (0.2, 0.99), wheels: (0.18, 0.82), wheel_r: 0.14, hood_drop: 0.08 },
    // coupe
    Archetype { aspect: 2.8, body_bottom: 0.1, body_top: 0.45, roof: 0.8, cabin_base: (0.3, 0.75), cabin_roof: (0.45, 0.62), wheels: (0.2, 0.8), wheel_r: 0.15, hood_drop: 0.07 },
    // wagon
    Archetype { aspect: 2.6, body_bottom: 0.12, body_top: 0.5, roof: 0.9, cabin_base: (0.25, 0.97), cabin_roof: (0.36, 0.96), wheels: (0.2, 0.8), wheel_r: 0.15, hood_drop: 0.05 },
    // box truck
    Archetype { aspect: 2.4, body_bottom: 0.14, body_top: 0.6, roof: 1.0, cabin_base: (0.32, 0.99), cabin_roof: (0.32, 0.99), wheels: (0.16, 0.82), wheel_r: 0.13, hood_drop: 0.0 },
];

/// Placement and appearance parameters of one procedural vehicle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehiclePose {
    pub class: usize,
    /// Center of the vehicle's bounding box in image coordinates (row, col).
    pub center: (f64, f64),
    /// Length in pixels.
    pub length: f64,
    pub height_scale: f64,
    /// Rotation in radians, positive counter-clockwise.
    pub angle: f64,
    pub facing_left: bool,
    pub body_rgb: [f32; 3],
}

/// Part of the vehicle a pixel belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Body,
    Window,
    Tire,
    Hub,
}

impl VehiclePose {
    fn archetype(&self) -> &'static Archetype {
        &ARCHETYPES[self.class % VEHICLE_CLASSES]
    }

    pub fn height(&self) -> f64 {
        self.length / self.archetype().aspect * self.height_scale
    }

    /// Random pose whose axis-aligned extent fits inside a `side x side` frame.
    pub fn random(rng: &mut impl Rng, side: usize, length_range: (f64, f64)) -> Self {
        let class = rng.random_range(0..VEHICLE_CLASSES);
        let s = side as f64;
        let length = rng.random_range(length_range.0..length_range.1) * s;
        let height_scale = rng.random_range(0.85..1.15);
        let angle = rng.random_range(-0.14..0.14);
        let facing_left = rng.random_bool(0.5);
        let body_rgb = random_color(rng, 0.25, 0.95);
        let mut pose = Self { class, center: (0.0, 0.0), length, height_scale, angle, facing_left, body_rgb };
        let (half_h, half_w) = pose.half_extent();
        let margin = 1.0;
        let rmin = half_h + margin;
        let rmax = (s - half_h - margin).max(rmin + 1e-6);
        let cmin = half_w + margin;
        let cmax = (s - half_w - margin).max(cmin + 1e-6);
        pose.center = (rng.random_range(rmin..rmax), rng.random_range(cmin..cmax));
        pose
    }

    /// Half extents of the rotated bounding rectangle (rows, cols).
    pub fn half_extent(&self) -> (f64, f64) {
        let (hl, hh) = (self.length / 2.0, self.height() / 2.0);
        let (s, c) = self.angle.sin_cos();
        (hl * s.abs() + hh * c.abs(), hl * c.abs() + hh * s.abs())
    }

    /// Canonical `(u, v)` coordinates of the pixel center at `(row, col)`.
    fn to_canonical(&self, row: f64, col: f64) -> (f64, f64) {
        let dx = col - self.center.1;
        let dy = self.center.0 - row;
        let (s, c) = self.angle.sin_cos();
        let x = dx * c + dy * s;
        let y = -dx * s + dy * c;
        let mut u = x / self.length + 0.5;
        if self.facing_left {
            u = 1.0 - u;
        }
        let v = y / self.height() + 0.5;
        (u, v)
    }

    /// Which part, if any, covers the pixel center at `(row, col)`.
    pub fn part_at(&self, row: f64, col: f64) -> Option<Part> {
        let (u, v) = self.to_canonical(row, col);
        let a = self.archetype();
        let aspect = a.aspect / self.height_scale;
        for wx in [a.wheels.0, a.wheels.1] {
            let du = (u - wx) * aspect;
            let dv = v - a.wheel_r;
            let d2 = du * du + dv * dv;
            if d2 <= a.wheel_r * a.wheel_r {
                return Some(if d2 <= (0.45 * a.wheel_r).powi(2) { Part::Hub } else { Part::Tire });
            }
        }
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return None;
        }
        if in_polygon(u, v, &body_polygon(a)) {
            return Some(Part::Body);
        }
        let cabin = cabin_polygon(a);
        if in_polygon(u, v, &cabin) {
            let inner = shrink(&cabin, 0.72);
            return Some(if in_polygon(u, v, &inner) { Part::Window } else { Part::Body });
        }
        None
    }
}

fn body_polygon(a: &Archetype) -> [(f64, f64); 6] {
    let nose = a.body_top - a.hood_drop;
    [
        (0.0, a.body_bottom),
        (1.0, a.body_bottom),
        (1.0, nose),
        (0.92, a.body_top),
        (0.04, a.body_top),
        (0.0, a.body_top - a.hood_drop * 0.5),
    ]
}

fn cabin_polygon(a: &Archetype) -> [(f64, f64); 4] {
    [(a.cabin_base.0, a.body_top - 1e-3), (a.cabin_base.1, a.body_top - 1e-3), (a.cabin_roof.1, a.roof), (a.cabin_roof.0, a.roof)]
}

fn shrink<const N: usize>(poly: &[(f64, f64); N], factor: f64) -> [(f64, f64); N] {
    let cx = poly.iter().map(|p| p.0).sum::<f64>() / N as f64;
    let cy = poly.iter().map(|p| p.1).sum::<f64>() / N as f64;
    poly.map(|(x, y)| (cx + (x - cx) * factor, cy + (y - cy) * factor))
}

/// Even-odd point-in-polygon test.
pub fn in_polygon(x: f64, y: f64, poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

pub fn random_color(rng: &mut impl Rng, lo: f32, hi: f32) -> [f32; 3] {
    [rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)]
}

/// Occluder geometry in image coordinates, scalable about its center.
#[derive(Clone, Debug)]
pub enum OccluderShape {
    Ellipse { center: (f64, f64), radii: (f64, f64), angle: f64 },
    /// Star-shaped polygon: vertex `i` lies at `radii[i]` along angle `2πi/n + phase`.
    Polygon { center: (f64, f64), radii: Vec<f64>, phase: f64 },
    /// Binary silhouette stretched over a box of the given half extents.
    Silhouette { center: (f64, f64), half: (f64, f64), mask: crate::image::MaskTensor },
}

impl OccluderShape {
    pub fn center(&self) -> (f64, f64) {
        match self {
            OccluderShape::Ellipse { center, .. } | OccluderShape::Polygon { center, .. } | OccluderShape::Silhouette { center, .. } => *center,
        }
    }

    /// Bounding radius at unit scale.
    pub fn radius(&self) -> f64 {
        match self {
            OccluderShape::Ellipse { radii, .. } => radii.0.max(radii.1),
            OccluderShape::Polygon { radii, .. } => radii.iter().copied().fold(0.0, f64::max),
            OccluderShape::Silhouette { half, .. } => half.0.hypot(half.1),
        }
    }

    /// Whether the pixel center `(row, col)` is covered at the given scale.
    pub fn contains(&self, row: f64, col: f64, scale: f64) -> bool {
        let (cr, cc) = self.center();
        let (dy, dx) = ((row - cr) / scale, (col - cc) / scale);
        match self {
            OccluderShape::Ellipse { radii, angle, .. } => {
                let (s, c) = angle.sin_cos();
                let x = dx * c + dy * s;
                let y = -dx * s + dy * c;
                (x / radii.1).powi(2) + (y / radii.0).powi(2) <= 1.0
            }
            OccluderShape::Polygon { radii, phase, .. } => {
                let n = radii.len();
                let pts: Vec<(f64, f64)> = radii
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let t = phase + std::f64::consts::TAU * i as f64 / n as f64;
                        (r * t.cos(), r * t.sin())
                    })
                    .collect();
                in_polygon(dx, dy, &pts)
            }
            OccluderShape::Silhouette { half, mask, .. } => {
                let u = (dx + half.1) / (2.0 * half.1);
                let v = (dy + half.0) / (2.0 * half.0);
                if !(0.0..1.0).contains(&u) || !(0.0..1.0).contains(&v) {
                    return false;
                }
                let r = ((v * mask.height() as f64) as usize).min(mask.height() - 1);
                let c = ((u * mask.width() as f64) as usize).min(mask.width() - 1);
                mask.is_set(r, c)
            }
        }
    }

    /// Inclusive pixel bounds `(r0, c0, r1, c1)` at the given scale; may extend past the frame.
    pub fn pixel_bounds(&self, scale: f64) -> (isize, isize, isize, isize) {
        let (cr, cc) = self.center();
        let r = self.radius() * scale + 1.0;
        ((cr - r).floor() as isize, (cc - r).floor() as isize, (cr + r).ceil() as isize, (cc + r).ceil() as isize)
    }
}
