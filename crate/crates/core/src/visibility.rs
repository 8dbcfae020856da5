//! View-cone observability with occlusion by road objects.
//!
//! An element is visible when some sample point of it lies in the ego's
//! view cone and the sight line from the ego centre to that sample is not
//! covered by any other road object. Road geometry never occludes, and stop
//! signs skip the occlusion test entirely.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geom::{in_cone, ray_blocked_by, Aabb, Cone, OrientedBox, Segment, Vec2};
use crate::map::RoadMap;
use crate::scenario::ObjectKind;
use crate::spatial::Bvh;

/// Default cone: 120 degrees wide, 80 m deep.
pub const DEFAULT_VIEW_ANGLE: f64 = 120.0 * PI / 180.0;
pub const DEFAULT_VIEW_DISTANCE: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewConfig {
    /// Full opening angle of the cone (rad).
    pub view_angle: f64,
    pub view_distance: f64,
    /// 1 = centre only, 5 = centre and the four corners.
    pub samples_per_object: usize,
}

impl Default for ViewConfig {
    fn default() -> Self {
        Self { view_angle: DEFAULT_VIEW_ANGLE, view_distance: DEFAULT_VIEW_DISTANCE, samples_per_object: 5 }
    }
}

impl ViewConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.view_angle > 0.0 && self.view_angle <= 2.0 * PI) {
            return Err(format!("view_angle {} outside (0, 2π]", self.view_angle));
        }
        if !(self.view_distance > 0.0 && self.view_distance.is_finite()) {
            return Err(format!("view_distance {} must be positive", self.view_distance));
        }
        if !matches!(self.samples_per_object, 1 | 5) {
            return Err(format!("samples_per_object must be 1 or 5, got {}", self.samples_per_object));
        }
        Ok(())
    }

    pub fn cone(&self, ego: &ObjectView, tilt: f64) -> Cone {
        Cone::new(ego.bbox.center, ego.bbox.heading + tilt, 0.5 * self.view_angle, self.view_distance)
    }
}

/// A road object as seen in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectView {
    pub id: i64,
    pub kind: ObjectKind,
    pub bbox: OrientedBox,
    pub speed: f64,
}

impl ObjectView {
    pub fn position(&self) -> Vec2 {
        self.bbox.center
    }

    pub fn heading(&self) -> f64 {
        self.bbox.heading
    }

    /// Direction of travel; flips for negative speed.
    pub fn velocity_heading(&self) -> f64 {
        if self.speed < 0.0 {
            crate::geom::normalize_angle(self.bbox.heading + PI)
        } else {
            self.bbox.heading
        }
    }

    fn samples(&self, count: usize) -> ([Vec2; 5], usize) {
        let c = self.bbox.corners();
        ([self.bbox.center, c[0], c[1], c[2], c[3]], count.min(5))
    }
}

/// Frozen snapshot of the objects present at one step, with a BVH over
/// their footprints.
#[derive(Debug, Clone)]
pub struct Frame<'m> {
    map: &'m RoadMap,
    objects: Vec<ObjectView>,
    boxes: Vec<Aabb>,
    bvh: Bvh,
}

impl<'m> Frame<'m> {
    pub fn new(map: &'m RoadMap, objects: Vec<ObjectView>) -> Self {
        let boxes: Vec<Aabb> = objects.iter().map(|o| o.bbox.aabb()).collect();
        Frame { map, bvh: Bvh::build(&boxes), boxes, objects }
    }

    pub fn map(&self) -> &'m RoadMap {
        self.map
    }

    pub fn objects(&self) -> &[ObjectView] {
        &self.objects
    }

    pub fn object(&self, idx: usize) -> &ObjectView {
        &self.objects[idx]
    }

    pub fn index_of(&self, id: i64) -> Option<usize> {
        self.objects.iter().position(|o| o.id == id)
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    /// Frame indices of objects whose footprint AABB meets `q`, ascending.
    pub fn objects_in(&self, q: &Aabb) -> Vec<usize> {
        self.bvh.query(q)
    }

    pub fn aabb(&self, idx: usize) -> &Aabb {
        &self.boxes[idx]
    }
}

/// Everything one ego can see, as frame object indices and road-map
/// point ids, each ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VisibleSet {
    pub objects: Vec<usize>,
    pub road_points: Vec<usize>,
    pub stop_signs: Vec<usize>,
}

/// Potential occluders for one ego: every other object touching the cone's
/// bounding box. A sight line to a point in the cone stays inside the cone
/// (the sector is star-shaped around its apex), so nothing else can block.
struct Occluders {
    items: Vec<(usize, OrientedBox, Aabb)>,
}

impl Occluders {
    fn gather(frame: &Frame<'_>, ego: usize, cone_box: &Aabb) -> Self {
        let items = frame
            .objects_in(cone_box)
            .into_iter()
            .filter(|&i| i != ego)
            .map(|i| (i, frame.objects[i].bbox, frame.boxes[i]))
            .collect();
        Occluders { items }
    }

    fn blocked(&self, origin: Vec2, target: Vec2, skip: usize) -> bool {
        let seg_box = Segment::new(origin, target).aabb().expanded(1e-7);
        self.items
            .iter()
            .any(|(i, b, bb)| *i != skip && bb.intersects(&seg_box) && ray_blocked_by(origin, target, b))
    }
}

pub fn visible_objects(frame: &Frame<'_>, ego: usize, tilt: f64, cfg: &ViewConfig) -> Vec<usize> {
    let viewer = &frame.objects[ego];
    let cone = cfg.cone(viewer, tilt);
    let cone_box = cone.aabb();
    let occ = Occluders::gather(frame, ego, &cone_box);
    let origin = viewer.bbox.center;
    let mut out: Vec<usize> = occ
        .items
        .iter()
        .map(|(i, _, _)| *i)
        .filter(|&i| {
            let (samples, n) = frame.objects[i].samples(cfg.samples_per_object);
            samples[..n].iter().any(|&p| in_cone(p, &cone) && !occ.blocked(origin, p, i))
        })
        .collect();
    out.sort_unstable();
    out
}

pub fn visible_road_points(frame: &Frame<'_>, ego: usize, tilt: f64, cfg: &ViewConfig) -> Vec<usize> {
    let viewer = &frame.objects[ego];
    let cone = cfg.cone(viewer, tilt);
    let cone_box = cone.aabb();
    let occ = Occluders::gather(frame, ego, &cone_box);
    let origin = viewer.bbox.center;
    let points = frame.map.points();
    let mut candidates = Vec::new();
    frame.map.points_in(&cone_box, &mut candidates);
    candidates.retain(|&id| {
        let p = points[id].position;
        in_cone(p, &cone) && !occ.blocked(origin, p, usize::MAX)
    });
    candidates.sort_unstable();
    candidates
}

pub fn visible_stop_signs(frame: &Frame<'_>, ego: usize, tilt: f64, cfg: &ViewConfig) -> Vec<usize> {
    let cone = cfg.cone(&frame.objects[ego], tilt);
    let mut candidates = Vec::new();
    frame.map.stop_signs_in(&cone.aabb(), &mut candidates);
    let points = frame.map.points();
    candidates.retain(|&id| in_cone(points[id].position, &cone));
    candidates.sort_unstable();
    candidates
}

pub fn visible_set(frame: &Frame<'_>, ego: usize, tilt: f64, cfg: &ViewConfig) -> VisibleSet {
    VisibleSet {
        objects: visible_objects(frame, ego, tilt, cfg),
        road_points: visible_road_points(frame, ego, tilt, cfg),
        stop_signs: visible_stop_signs(frame, ego, tilt, cfg),
    }
}

/// Index-free reference implementation: every object is a candidate and a
/// potential occluder, every road point is tested.
pub mod brute {
    use super::*;

    fn blocked(frame: &Frame<'_>, origin: Vec2, target: Vec2, ego: usize, skip: usize) -> bool {
        frame
            .objects
            .iter()
            .enumerate()
            .any(|(i, o)| i != ego && i != skip && ray_blocked_by(origin, target, &o.bbox))
    }

    pub fn visible_objects(frame: &Frame<'_>, ego: usize, tilt: f64, cfg: &ViewConfig) -> Vec<usize> {
        let viewer = &frame.objects[ego];
        let cone = cfg.cone(viewer, tilt);
        let origin = viewer.bbox.center;
        (0..frame.objects.len())
            .filter(|&i| i != ego)
            .filter(|&i| {
                let (samples, n) = frame.objects[i].samples(cfg.samples_per_object);
                samples[..n].iter().any(|&p| in_cone(p, &cone) && !blocked(frame, origin, p, ego, i))
            })
            .collect()
    }

    pub fn visible_road_points(frame: &Frame<'_>, ego: usize, tilt: f64, cfg: &ViewConfig) -> Vec<usize> {
        let viewer = &frame.objects[ego];
        let cone = cfg.cone(viewer, tilt);
        let origin = viewer.bbox.center;
        let points = frame.map.points();
        (0..points.len())
            .filter(|&id| in_cone(points[id].position, &cone) && !blocked(frame, origin, points[id].position, ego, usize::MAX))
            .collect()
    }

    pub fn visible_stop_signs(frame: &Frame<'_>, ego: usize, tilt: f64, cfg: &ViewConfig) -> Vec<usize> {
        let cone = cfg.cone(&frame.objects[ego], tilt);
        let points = frame.map.points();
        frame.map.stop_signs().iter().copied().filter(|&id| in_cone(points[id].position, &cone)).collect()
    }

    pub fn visible_set(frame: &Frame<'_>, ego: usize, tilt: f64, cfg: &ViewConfig) -> VisibleSet {
        VisibleSet {
            objects: visible_objects(frame, ego, tilt, cfg),
            road_points: visible_road_points(frame, ego, tilt, cfg),
            stop_signs: visible_stop_signs(frame, ego, tilt, cfg),
        }
    }
}
