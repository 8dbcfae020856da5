//! Planar primitives and the exact intersection predicates the rest of the
//! engine is built on.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Slack used when classifying near-parallel or near-collinear configurations.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector pointing along `angle`.
    #[inline]
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c, y: s }
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Rotate counter-clockwise by `angle`.
    #[inline]
    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    #[inline]
    pub const fn new(a: Vec2, b: Vec2) -> Self {
        Self { a, b }
    }

    #[inline]
    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&[self.a, self.b])
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }
}

/// Closed axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: Vec2 { x: f64::INFINITY, y: f64::INFINITY },
        max: Vec2 { x: f64::NEG_INFINITY, y: f64::NEG_INFINITY },
    };

    #[inline]
    pub fn new(min: Vec2, max: Vec2) -> Self {
        debug_assert!(min.x <= max.x && min.y <= max.y, "inverted aabb");
        Self { min, max }
    }

    pub fn from_points(points: &[Vec2]) -> Self {
        points.iter().fold(Aabb::EMPTY, |acc, &p| acc.including(p))
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y
    }

    #[inline]
    pub fn including(self, p: Vec2) -> Aabb {
        Aabb {
            min: Vec2::new(self.min.x.min(p.x), self.min.y.min(p.y)),
            max: Vec2::new(self.max.x.max(p.x), self.max.y.max(p.y)),
        }
    }

    #[inline]
    pub fn union(self, o: Aabb) -> Aabb {
        Aabb {
            min: Vec2::new(self.min.x.min(o.min.x), self.min.y.min(o.min.y)),
            max: Vec2::new(self.max.x.max(o.max.x), self.max.y.max(o.max.y)),
        }
    }

    #[inline]
    pub fn expanded(self, margin: f64) -> Aabb {
        Aabb {
            min: Vec2::new(self.min.x - margin, self.min.y - margin),
            max: Vec2::new(self.max.x + margin, self.max.y + margin),
        }
    }

    #[inline]
    pub fn intersects(&self, o: &Aabb) -> bool {
        self.min.x <= o.max.x && o.min.x <= self.max.x && self.min.y <= o.max.y && o.min.y <= self.max.y
    }

    #[inline]
    pub fn contains_point(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    #[inline]
    pub fn contains(&self, o: &Aabb) -> bool {
        o.min.x >= self.min.x && o.max.x <= self.max.x && o.min.y >= self.min.y && o.max.y <= self.max.y
    }

    #[inline]
    pub fn center(&self) -> Vec2 {
        Vec2::new(0.5 * (self.min.x + self.max.x), 0.5 * (self.min.y + self.max.y))
    }

    /// 2D analogue of surface area, used as the clustering cost.
    #[inline]
    pub fn half_perimeter(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (self.max.x - self.min.x) + (self.max.y - self.min.y)
    }
}

/// A rectangle of `length` along `heading` and `width` across it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        debug_assert!(length > 0.0 && width > 0.0, "degenerate box");
        Self { center, heading: normalize_angle(heading), length, width }
    }

    /// Unit vectors along the length and width directions.
    #[inline]
    pub fn axes(&self) -> (Vec2, Vec2) {
        let u = Vec2::from_angle(self.heading);
        (u, Vec2::new(-u.y, u.x))
    }

    /// Corners in counter-clockwise order starting at front-left.
    pub fn corners(&self) -> [Vec2; 4] {
        let (u, v) = self.axes();
        let hl = u * (0.5 * self.length);
        let hw = v * (0.5 * self.width);
        let c = self.center;
        [c + hl + hw, c - hl + hw, c - hl - hw, c + hl - hw]
    }

    pub fn edges(&self) -> [Segment; 4] {
        let c = self.corners();
        [
            Segment::new(c[0], c[1]),
            Segment::new(c[1], c[2]),
            Segment::new(c[2], c[3]),
            Segment::new(c[3], c[0]),
        ]
    }

    /// Bounding box of the corners and the center.
    pub fn aabb(&self) -> Aabb {
        let c = self.corners();
        Aabb::from_points(&c).including(self.center)
    }

    /// Coordinates of `p` in the box frame (x along heading).
    #[inline]
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        let (u, v) = self.axes();
        let d = p - self.center;
        Vec2::new(d.dot(u), d.dot(v))
    }

    #[inline]
    pub fn contains_point(&self, p: Vec2) -> bool {
        let l = self.to_local(p);
        l.x.abs() <= 0.5 * self.length && l.y.abs() <= 0.5 * self.width
    }

    /// Same pose with each extent reduced, never below a sliver.
    pub fn shrunk(&self, d_length: f64, d_width: f64) -> OrientedBox {
        const MIN_EXTENT: f64 = 1e-6;
        OrientedBox {
            length: (self.length - d_length).max(MIN_EXTENT),
            width: (self.width - d_width).max(MIN_EXTENT),
            ..*self
        }
    }

    /// Parameter interval `[t0, t1] ⊆ [0, 1]` along `a → b` lying inside the
    /// closed box, or `None` when the segment misses it.
    pub fn clip_segment(&self, a: Vec2, b: Vec2) -> Option<(f64, f64)> {
        let p = self.to_local(a);
        let q = self.to_local(b);
        let d = q - p;
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        // Liang-Barsky against the four slabs.
        for (start, delta, lo, hi) in [(p.x, d.x, -hl, hl), (p.y, d.y, -hw, hw)] {
            if delta == 0.0 {
                if start < lo || start > hi {
                    return None;
                }
                continue;
            }
            let mut ta = (lo - start) / delta;
            let mut tb = (hi - start) / delta;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }

    #[inline]
    pub fn intersects_segment(&self, s: &Segment) -> bool {
        self.clip_segment(s.a, s.b).is_some()
    }
}

/// A circular sector: points within `radius` of `apex` whose bearing lies
/// within `half_angle` of `direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cone {
    pub apex: Vec2,
    pub direction: f64,
    pub half_angle: f64,
    pub radius: f64,
}

impl Cone {
    pub fn new(apex: Vec2, direction: f64, half_angle: f64, radius: f64) -> Self {
        debug_assert!(half_angle > 0.0 && half_angle <= PI && radius > 0.0);
        Self { apex, direction: normalize_angle(direction), half_angle, radius }
    }

    #[inline]
    pub fn contains(&self, p: Vec2) -> bool {
        in_cone(p, self)
    }

    /// Tight box around the sector, padded slightly so that every point
    /// accepted by [`in_cone`] is inside it despite rounding.
    pub fn aabb(&self) -> Aabb {
        let pad = 1e-7 * (1.0 + self.radius + self.apex.x.abs().max(self.apex.y.abs()));
        if self.half_angle >= PI {
            return Aabb::new(
                Vec2::new(self.apex.x - self.radius, self.apex.y - self.radius),
                Vec2::new(self.apex.x + self.radius, self.apex.y + self.radius),
            )
            .expanded(pad);
        }
        let mut bb = Aabb::EMPTY.including(self.apex);
        let lo = self.direction - self.half_angle;
        let hi = self.direction + self.half_angle;
        bb = bb.including(self.apex + Vec2::from_angle(lo) * self.radius);
        bb = bb.including(self.apex + Vec2::from_angle(hi) * self.radius);
        // Axis-aligned extremes of the arc that fall inside the sector.
        for k in 0..4 {
            let axis = k as f64 * 0.5 * PI;
            if min_angle(axis, self.direction) <= self.half_angle {
                bb = bb.including(self.apex + Vec2::from_angle(axis) * self.radius);
            }
        }
        bb.expanded(pad)
    }
}

/// Wrap an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta % TAU;
    if a <= -PI {
        a += TAU;
    } else if a > PI {
        a -= TAU;
    }
    a
}

/// Signed difference `a - b` wrapped into `(-π, π]`.
#[inline]
pub fn signed_angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

/// Smallest rotation between two headings, in `[0, π]`.
#[inline]
pub fn min_angle(h1: f64, h2: f64) -> f64 {
    let d = (h1 - h2).abs();
    if d <= PI {
        // Exact for in-range differences; the wrap below would round.
        return d;
    }
    let d = d.rem_euclid(TAU);
    d.min(TAU - d)
}

pub fn in_cone(p: Vec2, cone: &Cone) -> bool {
    let d = p - cone.apex;
    if d.norm() > cone.radius {
        return false;
    }
    if cone.half_angle >= PI || (d.x == 0.0 && d.y == 0.0) {
        return true;
    }
    min_angle(d.angle(), cone.direction) <= cone.half_angle
}

fn point_on_segment(p: Vec2, s: &Segment) -> bool {
    let r = s.b - s.a;
    let len2 = r.norm_squared();
    if len2 == 0.0 {
        return p.distance(s.a) <= EPS;
    }
    let t = (p - s.a).dot(r) / len2;
    if !(-EPS..=1.0 + EPS).contains(&t) {
        return false;
    }
    (s.a + r * t.clamp(0.0, 1.0)).distance(p) <= EPS * (1.0 + len2.sqrt())
}

/// Intersection of two closed segments. Collinear overlaps yield the
/// midpoint of the shared piece; zero-length segments act as points.
pub fn segment_intersect(s1: &Segment, s2: &Segment) -> Option<Vec2> {
    let r = s1.b - s1.a;
    let s = s2.b - s2.a;
    let r_len = r.norm();
    let s_len = s.norm();
    match (r_len == 0.0, s_len == 0.0) {
        (true, true) => return (s1.a.distance(s2.a) <= EPS).then_some(s1.a),
        (true, false) => return point_on_segment(s1.a, s2).then_some(s1.a),
        (false, true) => return point_on_segment(s2.a, s1).then_some(s2.a),
        _ => {}
    }
    let qp = s2.a - s1.a;
    let denom = r.cross(s);
    if denom.abs() <= EPS * r_len * s_len {
        // Parallel: collinear when each start lies on the other's line.
        let off1 = qp.cross(r).abs() / r_len;
        let off2 = qp.cross(s).abs() / s_len;
        if off1.max(off2) > EPS * (1.0 + r_len.max(s_len)) {
            return None;
        }
        let rr = r_len * r_len;
        let t0 = qp.dot(r) / rr;
        let t1 = t0 + s.dot(r) / rr;
        let lo = t0.min(t1).max(0.0);
        let hi = t0.max(t1).min(1.0);
        if lo > hi + EPS {
            return None;
        }
        let mid = 0.5 * (lo + hi.max(lo));
        return Some(s1.a + r * mid);
    }
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    let range = -EPS..=1.0 + EPS;
    (range.contains(&t) && range.contains(&u)).then(|| s1.a + r * t.clamp(0.0, 1.0))
}

/// Whether any blocker covers part of the open sight line `origin → target`
/// before the target. Contact that touches only the target (or only the
/// origin) does not count.
pub fn ray_first_hit(origin: Vec2, target: Vec2, blockers: &[OrientedBox]) -> bool {
    blockers.iter().any(|b| ray_blocked_by(origin, target, b))
}

#[inline]
pub fn ray_blocked_by(origin: Vec2, target: Vec2, blocker: &OrientedBox) -> bool {
    match blocker.clip_segment(origin, target) {
        Some((t0, t1)) => t0 < 1.0 - EPS && t1 > EPS,
        None => false,
    }
}

/// Separating-axis overlap test on the four face normals. Touching
/// boundaries count as overlapping.
pub fn box_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    let (au, av) = a.axes();
    let (bu, bv) = b.axes();
    for axis in [au, av, bu, bv] {
        let (amin, amax) = project(&ca, axis);
        let (bmin, bmax) = project(&cb, axis);
        if amax < bmin - EPS || bmax < amin - EPS {
            return false;
        }
    }
    true
}

#[inline]
fn project(corners: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
        let d = c.dot(axis);
        (lo.min(d), hi.max(d))
    })
}
