//! Static per-scenario indexes over road geometry, built once at load.

use crate::geom::{Aabb, OrientedBox, Segment, Vec2};
use crate::scenario::{RoadKind, Scenario};
use crate::spatial::{Bvh, RangeTree};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadPoint {
    pub position: Vec2,
    pub kind: RoadKind,
    /// Vector to the next point of the same polyline; zero at the end.
    pub neighbor: Vec2,
    pub line: u32,
}

/// Road-edge segments behind a BVH, for collision tests.
#[derive(Debug, Clone, Default)]
pub struct EdgeIndex {
    segments: Vec<Segment>,
    bvh: Bvh,
}

impl EdgeIndex {
    pub fn build(scenario: &Scenario) -> EdgeIndex {
        let segments: Vec<Segment> = scenario
            .roads
            .iter()
            .filter(|r| r.kind == RoadKind::RoadEdge)
            .flat_map(|r| r.points.windows(2).map(|w| Segment::new(w[0], w[1])))
            .filter(|s| s.a != s.b)
            .collect();
        let boxes: Vec<Aabb> = segments.iter().map(Segment::aabb).collect();
        EdgeIndex { bvh: Bvh::build(&boxes), segments }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn intersects_box(&self, b: &OrientedBox) -> bool {
        self.bvh.any(&b.aabb(), |i| b.intersects_segment(&self.segments[i]))
    }
}

/// All road points behind a 2D range tree, stop signs behind a second one,
/// and the road-edge collision index.
#[derive(Debug, Clone, Default)]
pub struct RoadMap {
    points: Vec<RoadPoint>,
    tree: RangeTree,
    stop_signs: Vec<usize>,
    stop_tree: RangeTree,
    edges: EdgeIndex,
}

impl RoadMap {
    pub fn build(scenario: &Scenario) -> RoadMap {
        let mut points = Vec::new();
        for (line, road) in scenario.roads.iter().enumerate() {
            let n = road.points.len();
            for (i, &p) in road.points.iter().enumerate() {
                let neighbor = if i + 1 < n { road.points[i + 1] - p } else { Vec2::ZERO };
                points.push(RoadPoint { position: p, kind: road.kind, neighbor, line: line as u32 });
            }
        }
        let positions: Vec<Vec2> = points.iter().map(|p| p.position).collect();
        let stop_signs: Vec<usize> = (0..points.len()).filter(|&i| points[i].kind == RoadKind::StopSign).collect();
        let stop_positions: Vec<Vec2> = stop_signs.iter().map(|&i| positions[i]).collect();
        RoadMap {
            tree: RangeTree::build(&positions),
            stop_tree: RangeTree::build(&stop_positions),
            points,
            stop_signs,
            edges: EdgeIndex::build(scenario),
        }
    }

    pub fn points(&self) -> &[RoadPoint] {
        &self.points
    }

    pub fn point(&self, id: usize) -> &RoadPoint {
        &self.points[id]
    }

    /// Point ids (into [`RoadMap::points`]) of every stop sign.
    pub fn stop_signs(&self) -> &[usize] {
        &self.stop_signs
    }

    pub fn edges(&self) -> &EdgeIndex {
        &self.edges
    }

    /// Road point ids inside `q`, unordered.
    pub fn points_in(&self, q: &Aabb, out: &mut Vec<usize>) {
        self.tree.query_with_stats(q, out);
    }

    /// Stop-sign point ids inside `q`, unordered.
    pub fn stop_signs_in(&self, q: &Aabb, out: &mut Vec<usize>) {
        let start = out.len();
        self.stop_tree.query_with_stats(q, out);
        for id in &mut out[start..] {
            *id = self.stop_signs[*id];
        }
    }
}
