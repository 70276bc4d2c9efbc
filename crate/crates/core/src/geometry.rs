//! Planar geometry: vectors, axis-aligned rectangles and convex hulls with
//! separating-axis overlap tests.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Vec2::new(c, s)
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn length(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).length()
    }

    /// Unit vector in the same direction, or `None` for (near) zero vectors.
    pub fn normalized(self) -> Option<Vec2> {
        let len = self.length();
        (len > 1e-12).then(|| self * (1.0 / len))
    }

    /// Counter-clockwise rotation by `angle` radians.
    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    use std::f64::consts::PI;
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Axis-aligned rectangle given by its top-left `(x0, y0)` and bottom-right
/// `(x1, y1)` corners (y grows downward).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn is_well_formed(&self) -> bool {
        [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite())
            && self.x0 < self.x1
            && self.y0 < self.y1
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x.clamp(self.x0, self.x1), p.y.clamp(self.y0, self.y1))
    }

    /// Euclidean distance from `p` to the rectangle (zero inside).
    pub fn distance(&self, p: Vec2) -> f64 {
        p.distance(self.closest_point(p))
    }

    pub fn corners(&self) -> [Vec2; 4] {
        [
            Vec2::new(self.x0, self.y0),
            Vec2::new(self.x1, self.y0),
            Vec2::new(self.x1, self.y1),
            Vec2::new(self.x0, self.y1),
        ]
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }
}

/// Overlap between two bodies. `normal` is the unit direction along which the
/// first body must move by `depth` to separate from the second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub normal: Vec2,
    pub depth: f64,
}

/// Convex collision hull in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Hull {
    Circle { center: Vec2, radius: f64 },
    /// Counter-clockwise vertex loop.
    Polygon(Vec<Vec2>),
}

impl Hull {
    pub fn from_rect(rect: &Rect) -> Hull {
        Hull::Polygon(rect.corners().to_vec())
    }

    pub fn center(&self) -> Vec2 {
        match self {
            Hull::Circle { center, .. } => *center,
            Hull::Polygon(v) => {
                let sum = v.iter().fold(Vec2::ZERO, |acc, p| acc + *p);
                sum * (1.0 / v.len() as f64)
            }
        }
    }

    fn project(&self, axis: Vec2) -> (f64, f64) {
        match self {
            Hull::Circle { center, radius } => {
                let c = center.dot(axis);
                (c - radius, c + radius)
            }
            Hull::Polygon(v) => v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                let d = p.dot(axis);
                (lo.min(d), hi.max(d))
            }),
        }
    }

    fn edge_normals(&self, out: &mut Vec<Vec2>) {
        if let Hull::Polygon(v) = self {
            for i in 0..v.len() {
                let e = v[(i + 1) % v.len()] - v[i];
                if let Some(n) = e.perp().normalized() {
                    out.push(n);
                }
            }
        }
    }

    /// Every point of the hull lies inside `rect`.
    pub fn inside_rect(&self, rect: &Rect) -> bool {
        match self {
            Hull::Circle { center, radius } => {
                center.x - radius >= rect.x0
                    && center.x + radius <= rect.x1
                    && center.y - radius >= rect.y0
                    && center.y + radius <= rect.y1
            }
            Hull::Polygon(v) => v.iter().all(|p| rect.contains(*p)),
        }
    }

    /// Signed distance from `p` to the hull boundary (negative inside).
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        match self {
            Hull::Circle { center, radius } => p.distance(*center) - radius,
            Hull::Polygon(v) => {
                let closest = closest_on_loop(v, p);
                let d = p.distance(closest);
                if polygon_contains(v, p) {
                    -d
                } else {
                    d
                }
            }
        }
    }

    /// Closest point on the hull boundary to `p`.
    pub fn closest_boundary_point(&self, p: Vec2) -> Vec2 {
        match self {
            Hull::Circle { center, radius } => {
                let dir = (p - *center).normalized().unwrap_or(Vec2::new(1.0, 0.0));
                *center + dir * *radius
            }
            Hull::Polygon(v) => closest_on_loop(v, p),
        }
    }

    pub fn translated(&self, by: Vec2) -> Hull {
        match self {
            Hull::Circle { center, radius } => Hull::Circle {
                center: *center + by,
                radius: *radius,
            },
            Hull::Polygon(v) => Hull::Polygon(v.iter().map(|p| *p + by).collect()),
        }
    }
}

fn closest_on_segment(a: Vec2, b: Vec2, p: Vec2) -> Vec2 {
    let ab = b - a;
    let len2 = ab.length_squared();
    if len2 == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

fn closest_on_loop(v: &[Vec2], p: Vec2) -> Vec2 {
    let mut best = v[0];
    let mut best_d = f64::INFINITY;
    for i in 0..v.len() {
        let q = closest_on_segment(v[i], v[(i + 1) % v.len()], p);
        let d = q.distance(p);
        if d < best_d {
            best_d = d;
            best = q;
        }
    }
    best
}

fn polygon_contains(v: &[Vec2], p: Vec2) -> bool {
    (0..v.len()).all(|i| (v[(i + 1) % v.len()] - v[i]).cross(p - v[i]) >= 0.0)
}

/// Exact overlap of a circle against an axis-aligned rectangle.
pub fn circle_rect(center: Vec2, radius: f64, rect: &Rect) -> Option<Contact> {
    let closest = rect.closest_point(center);
    let offset = center - closest;
    let dist = offset.length();
    if dist > 1e-12 {
        let depth = radius - dist;
        return (depth > 0.0).then(|| Contact {
            normal: offset * (1.0 / dist),
            depth,
        });
    }
    // Center inside (or on) the rectangle: leave through the nearest face.
    let faces = [
        (center.x - rect.x0, Vec2::new(-1.0, 0.0)),
        (rect.x1 - center.x, Vec2::new(1.0, 0.0)),
        (center.y - rect.y0, Vec2::new(0.0, -1.0)),
        (rect.y1 - center.y, Vec2::new(0.0, 1.0)),
    ];
    let (inset, normal) = faces
        .into_iter()
        .fold((f64::INFINITY, Vec2::ZERO), |best, f| if f.0 < best.0 { f } else { best });
    Some(Contact {
        normal,
        depth: inset + radius,
    })
}

/// Separating-axis test between two convex hulls.
pub fn overlap(a: &Hull, b: &Hull) -> Option<Contact> {
    if let (
        Hull::Circle {
            center: ca,
            radius: ra,
        },
        Hull::Circle {
            center: cb,
            radius: rb,
        },
    ) = (a, b)
    {
        let offset = *ca - *cb;
        let dist = offset.length();
        let depth = ra + rb - dist;
        if depth <= 0.0 {
            return None;
        }
        let normal = offset.normalized().unwrap_or(Vec2::new(1.0, 0.0));
        return Some(Contact { normal, depth });
    }

    let mut axes = Vec::with_capacity(16);
    a.edge_normals(&mut axes);
    b.edge_normals(&mut axes);
    for (circle, poly) in [(a, b), (b, a)] {
        if let (Hull::Circle { center, .. }, Hull::Polygon(v)) = (circle, poly) {
            let nearest = v
                .iter()
                .copied()
                .fold((f64::INFINITY, v[0]), |best, p| {
                    let d = p.distance(*center);
                    if d < best.0 {
                        (d, p)
                    } else {
                        best
                    }
                })
                .1;
            if let Some(axis) = (*center - nearest).normalized() {
                axes.push(axis);
            }
        }
    }

    let mut best: Option<Contact> = None;
    for axis in axes {
        let (amin, amax) = a.project(axis);
        let (bmin, bmax) = b.project(axis);
        let depth = (amax - bmin).min(bmax - amin);
        if depth <= 0.0 {
            return None;
        }
        if best.is_none_or(|c| depth < c.depth) {
            best = Some(Contact {
                normal: axis,
                depth,
            });
        }
    }
    best.map(|mut c| {
        if (a.center() - b.center()).dot(c.normal) < 0.0 {
            c.normal = -c.normal;
        }
        c
    })
}
