//! Fixed-size ego-frame observation vectors and top-down rasters built from
//! what an ego can see.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{signed_angle_diff, Vec2};
use crate::map::RoadPoint;
use crate::scenario::{ObjectKind, RoadKind};
use crate::visibility::{visible_set, Frame, ObjectView, ViewConfig, VisibleSet};

pub const EGO_FEATURES: usize = 7;
pub const OBJECT_FEATURES: usize = 10;
pub const ROAD_POINT_FEATURES: usize = 11;
pub const STOP_SIGN_FEATURES: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum ObsError {
    #[error("raster resolution must be positive")]
    ZeroResolution,
    #[error("meters per pixel must be positive, got {0}")]
    BadScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsLayout {
    pub max_road_points: usize,
    pub max_objects: usize,
    pub max_stop_signs: usize,
}

impl Default for ObsLayout {
    fn default() -> Self {
        Self { max_road_points: 500, max_objects: 16, max_stop_signs: 4 }
    }
}

/// Machine-readable description of a flat observation vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayoutBlock {
    pub name: &'static str,
    pub offset: usize,
    pub slots: usize,
    pub width: usize,
    pub features: Vec<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayoutDescription {
    pub dimension: usize,
    pub mask_length: usize,
    pub blocks: Vec<LayoutBlock>,
}

impl ObsLayout {
    pub fn dimension(&self) -> usize {
        EGO_FEATURES
            + self.max_objects * OBJECT_FEATURES
            + self.max_road_points * ROAD_POINT_FEATURES
            + self.max_stop_signs * STOP_SIGN_FEATURES
    }

    /// Slots carrying a validity flag: objects, then road points, then stop signs.
    pub fn mask_len(&self) -> usize {
        self.max_objects + self.max_road_points + self.max_stop_signs
    }

    pub fn objects_offset(&self) -> usize {
        EGO_FEATURES
    }

    pub fn road_points_offset(&self) -> usize {
        self.objects_offset() + self.max_objects * OBJECT_FEATURES
    }

    pub fn stop_signs_offset(&self) -> usize {
        self.road_points_offset() + self.max_road_points * ROAD_POINT_FEATURES
    }

    pub fn describe(&self) -> LayoutDescription {
        let mut road = vec!["bearing", "distance", "neighbor_x", "neighbor_y"];
        road.extend(["is_lane", "is_road_line", "is_road_edge", "is_stop_sign", "is_crosswalk", "is_speed_bump", "is_unknown"]);
        LayoutDescription {
            dimension: self.dimension(),
            mask_length: self.mask_len(),
            blocks: vec![
                LayoutBlock {
                    name: "ego",
                    offset: 0,
                    slots: 1,
                    width: EGO_FEATURES,
                    features: vec!["speed", "goal_distance", "goal_bearing", "width", "length", "goal_speed_delta", "goal_heading_delta"],
                },
                LayoutBlock {
                    name: "objects",
                    offset: self.objects_offset(),
                    slots: self.max_objects,
                    width: OBJECT_FEATURES,
                    features: vec![
                        "speed",
                        "velocity_angle",
                        "width",
                        "length",
                        "bearing",
                        "distance",
                        "relative_heading",
                        "is_vehicle",
                        "is_pedestrian",
                        "is_cyclist",
                    ],
                },
                LayoutBlock {
                    name: "road_points",
                    offset: self.road_points_offset(),
                    slots: self.max_road_points,
                    width: ROAD_POINT_FEATURES,
                    features: road,
                },
                LayoutBlock {
                    name: "stop_signs",
                    offset: self.stop_signs_offset(),
                    slots: self.max_stop_signs,
                    width: STOP_SIGN_FEATURES,
                    features: vec!["bearing", "distance"],
                },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub position: Vec2,
    pub speed: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub values: Vec<f32>,
    pub mask: Vec<bool>,
}

/// Bearing (relative to the ego heading) and distance of `p`.
#[inline]
fn polar(ego: &ObjectView, p: Vec2) -> (f64, f64) {
    let d = p - ego.position();
    let dist = d.norm();
    let bearing = if dist == 0.0 { 0.0 } else { signed_angle_diff(d.angle(), ego.heading()) };
    (bearing, dist)
}

pub fn ego_features(ego: &ObjectView, goal: &Goal) -> [f32; EGO_FEATURES] {
    let (bearing, dist) = polar(ego, goal.position);
    [
        ego.speed as f32,
        dist as f32,
        bearing as f32,
        ego.bbox.width as f32,
        ego.bbox.length as f32,
        (goal.speed - ego.speed) as f32,
        signed_angle_diff(goal.heading, ego.heading()) as f32,
    ]
}

pub fn object_features(ego: &ObjectView, other: &ObjectView) -> [f32; OBJECT_FEATURES] {
    let (bearing, dist) = polar(ego, other.position());
    let one_hot = |k: ObjectKind| if other.kind == k { 1.0 } else { 0.0 };
    [
        other.speed as f32,
        signed_angle_diff(other.velocity_heading(), ego.velocity_heading()) as f32,
        other.bbox.width as f32,
        other.bbox.length as f32,
        bearing as f32,
        dist as f32,
        signed_angle_diff(other.heading(), ego.heading()) as f32,
        one_hot(ObjectKind::Vehicle),
        one_hot(ObjectKind::Pedestrian),
        one_hot(ObjectKind::Cyclist),
    ]
}

pub fn road_point_features(ego: &ObjectView, position: Vec2, neighbor: Vec2, kind: RoadKind) -> [f32; ROAD_POINT_FEATURES] {
    let (bearing, dist) = polar(ego, position);
    let local = neighbor.rotate(-ego.heading());
    let mut out = [0.0f32; ROAD_POINT_FEATURES];
    out[0] = bearing as f32;
    out[1] = dist as f32;
    out[2] = local.x as f32;
    out[3] = local.y as f32;
    out[4 + kind.index()] = 1.0;
    out
}

pub fn stop_sign_features(ego: &ObjectView, position: Vec2) -> [f32; STOP_SIGN_FEATURES] {
    let (bearing, dist) = polar(ego, position);
    [bearing as f32, dist as f32]
}

/// Keeps the `k` smallest `(distance, id)` keys, in ascending order.
fn nearest<K: Copy>(mut items: Vec<(f64, i64, K)>, k: usize) -> Vec<(f64, i64, K)> {
    let cmp = |a: &(f64, i64, K), b: &(f64, i64, K)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if items.len() > k && k > 0 {
        items.select_nth_unstable_by(k - 1, cmp);
    }
    items.truncate(k);
    items.sort_unstable_by(cmp);
    items
}

/// Flattens a visible set into the fixed layout.
pub fn encode(frame: &Frame<'_>, ego: usize, goal: &Goal, visible: &VisibleSet, layout: &ObsLayout) -> Observation {
    let me = frame.object(ego);
    let mut values = vec![0.0f32; layout.dimension()];
    let mut mask = vec![false; layout.mask_len()];
    values[..EGO_FEATURES].copy_from_slice(&ego_features(me, goal));

    let objs = nearest(
        visible.objects.iter().map(|&i| (frame.object(i).position().distance(me.position()), frame.object(i).id, i)).collect(),
        layout.max_objects,
    );
    for (slot, (_, _, i)) in objs.into_iter().enumerate() {
        let at = layout.objects_offset() + slot * OBJECT_FEATURES;
        values[at..at + OBJECT_FEATURES].copy_from_slice(&object_features(me, frame.object(i)));
        mask[slot] = true;
    }

    let points: &[RoadPoint] = frame.map().points();
    let road = nearest(
        visible.road_points.iter().map(|&id| (points[id].position.distance(me.position()), id as i64, id)).collect(),
        layout.max_road_points,
    );
    for (slot, (_, _, id)) in road.into_iter().enumerate() {
        let p = &points[id];
        let at = layout.road_points_offset() + slot * ROAD_POINT_FEATURES;
        values[at..at + ROAD_POINT_FEATURES].copy_from_slice(&road_point_features(me, p.position, p.neighbor, p.kind));
        mask[layout.max_objects + slot] = true;
    }

    let stops = nearest(
        visible.stop_signs.iter().map(|&id| (points[id].position.distance(me.position()), id as i64, id)).collect(),
        layout.max_stop_signs,
    );
    for (slot, (_, _, id)) in stops.into_iter().enumerate() {
        let at = layout.stop_signs_offset() + slot * STOP_SIGN_FEATURES;
        values[at..at + STOP_SIGN_FEATURES].copy_from_slice(&stop_sign_features(me, points[id].position));
        mask[layout.max_objects + layout.max_road_points + slot] = true;
    }
    Observation { values, mask }
}

pub fn build_observation(frame: &Frame<'_>, ego: usize, tilt: f64, goal: &Goal, layout: &ObsLayout, cfg: &ViewConfig) -> Observation {
    let visible = visible_set(frame, ego, tilt, cfg);
    encode(frame, ego, goal, &visible, layout)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RasterView {
    /// Only what the ego can see.
    Cone,
    /// Everything in the scene.
    Full,
}

pub const BACKGROUND: Rgb<u8> = Rgb([0, 0, 0]);
pub const EGO_COLOR: Rgb<u8> = Rgb([0, 200, 0]);
pub const VEHICLE_COLOR: Rgb<u8> = Rgb([60, 120, 255]);
pub const VRU_COLOR: Rgb<u8> = Rgb([255, 200, 0]);

pub fn road_color(kind: RoadKind) -> Rgb<u8> {
    match kind {
        RoadKind::LaneCenter => Rgb([90, 90, 90]),
        RoadKind::RoadLine => Rgb([160, 160, 160]),
        RoadKind::RoadEdge => Rgb([255, 255, 255]),
        RoadKind::StopSign => Rgb([255, 0, 0]),
        RoadKind::Crosswalk => Rgb([200, 120, 200]),
        RoadKind::SpeedBump => Rgb([200, 160, 60]),
        RoadKind::Unknown => Rgb([120, 60, 60]),
    }
}

/// Slack for pixel classification, so that rigidly transformed copies of
/// a scene whose geometry falls exactly on pixel boundaries rasterize
/// identically despite rounding noise.
const PIXEL_SNAP: f64 = 1e-7;

#[inline]
fn cell(v: f64) -> i64 {
    (v + PIXEL_SNAP).floor() as i64
}

/// Maps world points into an ego-centred, heading-up pixel grid.
struct PixelFrame {
    origin: Vec2,
    heading: f64,
    size: usize,
    mpp: f64,
}

impl PixelFrame {
    /// Continuous pixel coordinates (column, row).
    fn to_pixel(&self, p: Vec2) -> (f64, f64) {
        let l = (p - self.origin).rotate(-self.heading);
        let half = self.size as f64 / 2.0;
        (half - l.y / self.mpp, half - l.x / self.mpp)
    }

    fn to_world(&self, col: f64, row: f64) -> Vec2 {
        let half = self.size as f64 / 2.0;
        let local = Vec2::new((half - row) * self.mpp, (half - col) * self.mpp);
        self.origin + local.rotate(self.heading)
    }
}

/// Clips the segment to `[0, size)²` in continuous pixel space.
fn clip_to_image(a: (f64, f64), b: (f64, f64), size: f64) -> Option<((f64, f64), (f64, f64))> {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    let d = (b.0 - a.0, b.1 - a.1);
    let hi = size - 1e-9;
    for (start, delta) in [(a.0, d.0), (a.1, d.1)] {
        if delta == 0.0 {
            if start < 0.0 || start > hi {
                return None;
            }
            continue;
        }
        let (mut ta, mut tb) = ((0.0 - start) / delta, (hi - start) / delta);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    Some(((a.0 + d.0 * t0, a.1 + d.1 * t0), (a.0 + d.0 * t1, a.1 + d.1 * t1)))
}

/// Integer Bresenham between two pixel cells, inclusive.
pub fn bresenham(x0: i64, y0: i64, x1: i64, y1: i64) -> Vec<(i64, i64)> {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push((x, y));
        if x == x1 && y == y1 {
            return out;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn draw_segment(img: &mut RgbImage, pf: &PixelFrame, a: Vec2, b: Vec2, color: Rgb<u8>) {
    let Some((p, q)) = clip_to_image(pf.to_pixel(a), pf.to_pixel(b), pf.size as f64) else { return };
    let size = pf.size as i64;
    for (x, y) in bresenham(cell(p.0), cell(p.1), cell(q.0), cell(q.1)) {
        if (0..size).contains(&x) && (0..size).contains(&y) {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

fn fill_box(img: &mut RgbImage, pf: &PixelFrame, obj: &ObjectView, color: Rgb<u8>) {
    let corners = obj.bbox.corners().map(|c| pf.to_pixel(c));
    let size = pf.size as i64;
    let lo_c = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min).floor().max(0.0) as i64;
    let hi_c = (corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max).ceil() as i64).min(size - 1);
    let lo_r = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as i64;
    let hi_r = (corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max).ceil() as i64).min(size - 1);
    for r in lo_r..=hi_r {
        for c in lo_c..=hi_c {
            let l = obj.bbox.to_local(pf.to_world(c as f64 + 0.5, r as f64 + 0.5));
            let slack = PIXEL_SNAP * pf.mpp;
            if l.x.abs() <= 0.5 * obj.bbox.length + slack && l.y.abs() <= 0.5 * obj.bbox.width + slack {
                img.put_pixel(c as u32, r as u32, color);
            }
        }
    }
}

/// Ego-centred, heading-up top-down image. In [`RasterView::Cone`] only
/// visible objects and polyline pieces whose both ends are visible are
/// drawn; the ego itself is always drawn.
pub fn rasterize(
    frame: &Frame<'_>,
    ego: usize,
    tilt: f64,
    cfg: &ViewConfig,
    size: usize,
    meters_per_px: f64,
    view: RasterView,
) -> Result<RgbImage, ObsError> {
    if size == 0 {
        return Err(ObsError::ZeroResolution);
    }
    if !(meters_per_px > 0.0 && meters_per_px.is_finite()) {
        return Err(ObsError::BadScale(meters_per_px));
    }
    let me = frame.object(ego);
    let pf = PixelFrame { origin: me.position(), heading: me.heading(), size, mpp: meters_per_px };
    let mut img = RgbImage::from_pixel(size as u32, size as u32, BACKGROUND);
    let points = frame.map().points();

    let (objects, road_visible, stops): (Vec<usize>, Option<Vec<bool>>, Vec<usize>) = match view {
        RasterView::Full => (
            (0..frame.objects().len()).filter(|&i| i != ego).collect(),
            None,
            frame.map().stop_signs().to_vec(),
        ),
        RasterView::Cone => {
            let v = visible_set(frame, ego, tilt, cfg);
            let mut flags = vec![false; points.len()];
            for &id in &v.road_points {
                flags[id] = true;
            }
            (v.objects, Some(flags), v.stop_signs)
        }
    };

    for (id, p) in points.iter().enumerate() {
        if p.kind == RoadKind::StopSign || p.neighbor == Vec2::ZERO {
            continue;
        }
        if let Some(flags) = &road_visible {
            if !(flags[id] && flags.get(id + 1).copied().unwrap_or(false)) {
                continue;
            }
        }
        draw_segment(&mut img, &pf, p.position, p.position + p.neighbor, road_color(p.kind));
    }
    for &id in &stops {
        let (c, r) = pf.to_pixel(points[id].position);
        let (c, r) = (cell(c), cell(r));
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (x, y) = (c + dc, r + dr);
                if (0..size as i64).contains(&x) && (0..size as i64).contains(&y) {
                    img.put_pixel(x as u32, y as u32, road_color(RoadKind::StopSign));
                }
            }
        }
    }
    for &i in &objects {
        let o = frame.object(i);
        let color = if o.kind == ObjectKind::Vehicle { VEHICLE_COLOR } else { VRU_COLOR };
        fill_box(&mut img, &pf, o, color);
    }
    fill_box(&mut img, &pf, me, EGO_COLOR);
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::OrientedBox;
    use crate::map::RoadMap;
    use crate::scenario::{RoadLine, Scenario, DT};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn view(id: i64, x: f64, y: f64, heading: f64, speed: f64) -> ObjectView {
        ObjectView { id, kind: ObjectKind::Vehicle, bbox: OrientedBox::new(Vec2::new(x, y), heading, 4.5, 2.0), speed }
    }

    fn empty_map() -> RoadMap {
        RoadMap::build(&Scenario { name: "o".into(), dt: DT, objects: vec![], roads: vec![] })
    }

    fn close(a: &[f32], b: &[f32], tol: f32) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn default_dimension() {
        assert_eq!(ObsLayout::default().dimension(), 5675);
        let d = ObsLayout::default().describe();
        assert_eq!(d.dimension, 5675);
        for b in &d.blocks {
            assert_eq!(b.features.len(), b.width);
        }
        assert_eq!(d.blocks[3].offset + 4 * 2, 5675);
    }

    #[test]
    fn ego_at_goal() {
        let me = view(0, 3.0, 4.0, 0.7, 6.0);
        let f = ego_features(&me, &Goal { position: Vec2::new(3.0, 4.0), speed: 6.0, heading: 0.7 });
        assert_eq!(f, [6.0, 0.0, 0.0, 2.0, 4.5, 0.0, 0.0]);
    }

    #[test]
    fn goal_to_the_left() {
        let me = view(0, 0.0, 0.0, 0.0, 0.0);
        let f = ego_features(&me, &Goal { position: Vec2::new(0.0, 10.0), speed: 0.0, heading: 0.0 });
        assert!((f[1] - 10.0).abs() < 1e-6);
        assert!((f[2] - FRAC_PI_2 as f32).abs() < 1e-6);
    }

    #[test]
    fn frame_invariance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let me = view(0, rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-PI..PI), rng.gen_range(-5.0..20.0));
            let other = view(1, rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-PI..PI), rng.gen_range(0.0..20.0));
            let goal = Goal { position: Vec2::new(rng.gen_range(-90.0..90.0), rng.gen_range(-90.0..90.0)), speed: 4.0, heading: rng.gen_range(-PI..PI) };
            let pt = Vec2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
            let nb = Vec2::new(0.3, -0.4);
            let (rot, shift) = (rng.gen_range(-PI..PI), Vec2::new(rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0)));
            let tf = |p: Vec2| p.rotate(rot) + shift;
            let mv = |o: &ObjectView| ObjectView { bbox: OrientedBox::new(tf(o.bbox.center), o.bbox.heading + rot, o.bbox.length, o.bbox.width), ..*o };
            let goal2 = Goal { position: tf(goal.position), heading: goal.heading + rot, ..goal };
            // Angles may wrap across ±π; compare through sin/cos where needed.
            let a = ego_features(&me, &goal);
            let b = ego_features(&mv(&me), &goal2);
            for k in [0, 1, 3, 4, 5] {
                assert!((a[k] - b[k]).abs() < 1e-3);
            }
            for k in [2, 6] {
                assert!(crate::geom::min_angle(a[k] as f64, b[k] as f64) < 1e-4);
            }
            let a = object_features(&me, &other);
            let b = object_features(&mv(&me), &mv(&other));
            for k in [0, 2, 3, 5, 7, 8, 9] {
                assert!((a[k] - b[k]).abs() < 1e-3);
            }
            for k in [1, 4, 6] {
                assert!(crate::geom::min_angle(a[k] as f64, b[k] as f64) < 1e-4);
            }
            let a = road_point_features(&me, pt, nb, RoadKind::RoadEdge);
            let b = road_point_features(&mv(&me), tf(pt), nb.rotate(rot), RoadKind::RoadEdge);
            assert!(crate::geom::min_angle(a[0] as f64, b[0] as f64) < 1e-4);
            assert!(close(&a[1..], &b[1..], 1e-3));
        }
    }

    #[test]
    fn object_feature_examples() {
        let me = view(0, 0.0, 0.0, 0.3, 5.0);
        let twin = view(1, 0.0, 0.0, 0.3, 5.0);
        assert_eq!(object_features(&me, &twin), [5.0, 0.0, 2.0, 4.5, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let oncoming = view(2, 20.0, 0.0, PI, 5.0);
        let me = view(0, 0.0, 0.0, 0.0, 5.0);
        let f = object_features(&me, &oncoming);
        assert!((f[1].abs() - PI as f32).abs() < 1e-6);
    }

    #[test]
    fn road_point_examples() {
        let me = view(0, 0.0, 0.0, 0.0, 0.0);
        let f = road_point_features(&me, Vec2::new(5.0, 0.0), Vec2::new(0.5, 0.0), RoadKind::LaneCenter);
        assert_eq!(&f[..4], &[0.0, 5.0, 0.5, 0.0]);
        let f = road_point_features(&me, Vec2::new(5.0, 0.0), Vec2::ZERO, RoadKind::Crosswalk);
        assert_eq!(&f[2..4], &[0.0, 0.0]);
        for kind in RoadKind::ALL {
            let f = road_point_features(&me, Vec2::new(1.0, 1.0), Vec2::ZERO, kind);
            assert_eq!(f[4..].iter().filter(|&&v| v == 1.0).count(), 1);
        }
    }

    #[test]
    fn empty_scene_is_ego_plus_zeros() {
        let map = empty_map();
        let frame = Frame::new(&map, vec![view(0, 0.0, 0.0, 0.0, 3.0)]);
        let goal = Goal { position: Vec2::new(10.0, 0.0), speed: 3.0, heading: 0.0 };
        let o = build_observation(&frame, 0, 0.0, &goal, &ObsLayout::default(), &ViewConfig::default());
        assert_eq!(o.values.len(), 5675);
        assert!(o.values[EGO_FEATURES..].iter().all(|&v| v == 0.0));
        assert!(o.mask.iter().all(|&m| !m));
    }

    #[test]
    fn nearest_road_points_kept() {
        let pts: Vec<Vec2> = (0..600).map(|i| Vec2::new(3.0 + 0.1 * i as f64, 0.0)).collect();
        let map = RoadMap::build(&Scenario { name: "o".into(), dt: DT, objects: vec![], roads: vec![RoadLine { kind: RoadKind::LaneCenter, points: pts }] });
        let frame = Frame::new(&map, vec![view(0, 0.0, 0.0, 0.0, 0.0)]);
        let goal = Goal { position: Vec2::ZERO, speed: 0.0, heading: 0.0 };
        let layout = ObsLayout::default();
        let o = build_observation(&frame, 0, 0.0, &goal, &layout, &ViewConfig::default());
        let dists: Vec<f32> = (0..500).map(|s| o.values[layout.road_points_offset() + s * ROAD_POINT_FEATURES + 1]).collect();
        assert!(dists.windows(2).all(|w| w[0] <= w[1]));
        assert!((dists[499] - (3.0 + 49.9)).abs() < 1e-3);
        assert_eq!(o.mask.iter().filter(|&&m| m).count(), 500);
    }

    #[test]
    fn equidistant_objects_ordered_by_id() {
        let map = empty_map();
        let frame = Frame::new(&map, vec![view(0, 0.0, 0.0, 0.0, 0.0), view(9, 20.0, 5.0, 0.0, 1.0), view(4, 20.0, -5.0, 0.0, 2.0)]);
        let goal = Goal { position: Vec2::ZERO, speed: 0.0, heading: 0.0 };
        let layout = ObsLayout::default();
        let o = build_observation(&frame, 0, 0.0, &goal, &layout, &ViewConfig::default());
        let off = layout.objects_offset();
        assert_eq!(o.values[off], 2.0);
        assert_eq!(o.values[off + OBJECT_FEATURES], 1.0);
    }

    #[test]
    fn hidden_object_leaves_no_trace() {
        let map = empty_map();
        let goal = Goal { position: Vec2::ZERO, speed: 0.0, heading: 0.0 };
        let layout = ObsLayout::default();
        let cfg = ViewConfig::default();
        let mut hidden = view(2, 12.0, 0.0, 0.0, 7.0);
        hidden.bbox.width = 1.0;
        hidden.bbox.length = 1.0;
        let wall = ObjectView { bbox: OrientedBox::new(Vec2::new(6.0, 0.0), 0.0, 1.0, 6.0), ..view(1, 0.0, 0.0, 0.0, 3.0) };
        let with = build_observation(&Frame::new(&map, vec![view(0, 0.0, 0.0, 0.0, 0.0), wall, hidden]), 0, 0.0, &goal, &layout, &cfg);
        let without = build_observation(&Frame::new(&map, vec![view(0, 0.0, 0.0, 0.0, 0.0), wall]), 0, 0.0, &goal, &layout, &cfg);
        assert_eq!(with, without);
    }

    #[test]
    fn bresenham_counts() {
        assert_eq!(bresenham(0, 0, 9, 0).len(), 10);
        assert_eq!(bresenham(0, 0, 9, 9).len(), 10);
        assert_eq!(bresenham(0, 0, 9, 4).len(), 10);
        assert_eq!(bresenham(3, 7, 3, 7), vec![(3, 7)]);
    }

    #[test]
    fn raster_examples() {
        let map = empty_map();
        let frame = Frame::new(&map, vec![view(0, 0.0, 0.0, 0.0, 0.0)]);
        let cfg = ViewConfig::default();
        assert_eq!(rasterize(&frame, 0, 0.0, &cfg, 0, 1.0, RasterView::Full), Err(ObsError::ZeroResolution));
        let img = rasterize(&frame, 0, 0.0, &cfg, 64, 1.0, RasterView::Full).unwrap();
        let ego_px = img.pixels().filter(|p| **p == EGO_COLOR).count();
        assert!(img.pixels().all(|p| *p == BACKGROUND || *p == EGO_COLOR));
        // 4.5 m x 2 m at 1 m/px, centred on the pixel grid.
        assert!(ego_px > 0 && ego_px <= 15);
    }

    #[test]
    fn raster_cone_view_omits_occluded_vehicle() {
        let map = empty_map();
        // A wall-like vehicle 10 m ahead hides a car 20 m ahead.
        let wall = ObjectView { bbox: OrientedBox::new(Vec2::new(10.0, 0.0), 0.0, 2.0, 12.0), ..view(1, 0.0, 0.0, 0.0, 0.0) };
        let frame = Frame::new(&map, vec![view(0, 0.0, 0.0, 0.0, 0.0), wall, view(2, 20.0, 0.0, 0.0, 0.0)]);
        let cfg = ViewConfig::default();
        let cone = rasterize(&frame, 0, 0.0, &cfg, 64, 1.0, RasterView::Cone).unwrap();
        let full = rasterize(&frame, 0, 0.0, &cfg, 64, 1.0, RasterView::Full).unwrap();
        // Hidden car centre: row = 32 - 20, column 32.
        assert_eq!(*full.get_pixel(32, 12), VEHICLE_COLOR);
        assert_eq!(*cone.get_pixel(32, 12), BACKGROUND);
        // The wall itself is visible in both.
        assert_eq!(*cone.get_pixel(32, 22), VEHICLE_COLOR);
        assert_eq!(*full.get_pixel(32, 22), VEHICLE_COLOR);
    }

    #[test]
    fn raster_single_edge_pixel_count() {
        // Edge across the ego's path, 20 m ahead, spanning beyond the image.
        let edge: Vec<Vec2> = (0..=400).map(|i| Vec2::new(20.3, -100.0 + 0.5 * i as f64)).collect();
        let map = RoadMap::build(&Scenario { name: "o".into(), dt: DT, objects: vec![], roads: vec![RoadLine { kind: RoadKind::RoadEdge, points: edge }] });
        let tiny = ObjectView { bbox: OrientedBox::new(Vec2::ZERO, 0.0, 0.5, 0.5), ..view(0, 0.0, 0.0, 0.0, 0.0) };
        let frame = Frame::new(&map, vec![tiny]);
        let img = rasterize(&frame, 0, 0.0, &ViewConfig::default(), 100, 1.0, RasterView::Full).unwrap();
        let white = img.pixels().filter(|p| **p == road_color(RoadKind::RoadEdge)).count();
        // One row, every column: row = 50 - 20.3 -> 29.
        assert_eq!(white, 100);
        assert!((0..100).all(|c| *img.get_pixel(c, 29) == road_color(RoadKind::RoadEdge)));
    }

    #[test]
    fn raster_rotation_invariance() {
        let roads = |rot: f64, shift: Vec2| {
            let pts: Vec<Vec2> = (0..80).map(|i| Vec2::new(-10.3 + 0.5 * i as f64, 6.3).rotate(rot) + shift).collect();
            vec![RoadLine { kind: RoadKind::LaneCenter, points: pts }]
        };
        let objs = |rot: f64, shift: Vec2| {
            vec![
                ObjectView { bbox: OrientedBox::new(shift, rot, 4.5, 2.0), ..view(0, 0.0, 0.0, 0.0, 0.0) },
                ObjectView { bbox: OrientedBox::new(Vec2::new(15.3, -3.3).rotate(rot) + shift, rot + 0.4, 4.5, 2.0), ..view(1, 0.0, 0.0, 0.0, 0.0) },
            ]
        };
        let mut images = Vec::new();
        for (rot, shift) in [(0.0, Vec2::ZERO), (1.1, Vec2::new(40.0, -7.0)), (-2.6, Vec2::new(-300.0, 120.0))] {
            let map = RoadMap::build(&Scenario { name: "o".into(), dt: DT, objects: vec![], roads: roads(rot, shift) });
            let frame = Frame::new(&map, objs(rot, shift));
            images.push(rasterize(&frame, 0, 0.0, &ViewConfig::default(), 96, 0.5, RasterView::Cone).unwrap());
        }
        assert!(images[0].pixels().any(|p| *p == VEHICLE_COLOR));
        let diff = |a: &RgbImage, b: &RgbImage| a.pixels().zip(b.pixels()).filter(|(x, y)| x != y).count();
        assert_eq!(diff(&images[0], &images[1]), 0);
        assert_eq!(diff(&images[0], &images[2]), 0);
    }
}
