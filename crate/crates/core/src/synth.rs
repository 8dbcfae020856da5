//! Synthetic scenario generators: straight multi-lane corridors for
//! benchmarking and planted-defect corpora for audit checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::Vec2;
use crate::scenario::{ObjectKind, RoadKind, RoadLine, RoadObject, Scenario, Trajectory, DT, TRAJECTORY_LEN};

/// Spacing of generated road points.
pub const POINT_SPACING: f64 = 0.5;
/// Half-width of a corridor, lane centre to road edge.
pub const CORRIDOR_HALF_WIDTH: f64 = 4.0;
const CORRIDOR_PITCH: f64 = 12.0;
const VEHICLE_GAP: f64 = 10.0;

/// A vehicle moving in a straight line at constant velocity; its goal is
/// the final state.
pub fn straight_vehicle(id: i64, start: Vec2, heading: f64, speed: f64) -> RoadObject {
    let dir = Vec2::from_angle(heading);
    let positions: Vec<Vec2> = (0..TRAJECTORY_LEN).map(|t| start + dir * (speed * DT * t as f64)).collect();
    let goal = positions[TRAJECTORY_LEN - 1];
    RoadObject {
        id,
        kind: ObjectKind::Vehicle,
        width: 2.0,
        length: 4.5,
        expert: Trajectory {
            positions,
            headings: vec![heading; TRAJECTORY_LEN],
            velocities: vec![dir * speed; TRAJECTORY_LEN],
            valid: vec![true; TRAJECTORY_LEN],
        },
        goal_position: goal,
        goal_speed: speed.abs(),
        goal_heading: heading,
    }
}

fn polyline(kind: RoadKind, y: f64, n: usize) -> RoadLine {
    RoadLine { kind, points: (0..n).map(|i| Vec2::new(i as f64 * POINT_SPACING, y)).collect() }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorridorSpec {
    pub corridors: usize,
    pub vehicles: usize,
    /// Approximate total road point count (rounded up to whole polylines).
    pub road_points: usize,
    pub stop_signs: usize,
    pub seed: u64,
}

impl CorridorSpec {
    /// 30 vehicles over about 16,000 road points.
    pub fn benchmark() -> Self {
        CorridorSpec { corridors: 5, vehicles: 30, road_points: 16_000, stop_signs: 5, seed: 0 }
    }
}

/// Parallel straight corridors along +x, each a lane centre between two
/// road edges. Vehicles are spread round-robin over the lanes, spaced
/// 10 m apart with a little seeded jitter, and every vehicle in a lane
/// drives at the lane's speed, so expert replay is collision-free.
pub fn corridor_scene(name: &str, spec: &CorridorSpec) -> Scenario {
    let corridors = spec.corridors.max(1);
    let per_line = spec.road_points.div_ceil(3 * corridors).max(2);
    let length = (per_line - 1) as f64 * POINT_SPACING;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut roads = Vec::with_capacity(3 * corridors + spec.stop_signs);
    for c in 0..corridors {
        let y = c as f64 * CORRIDOR_PITCH;
        roads.push(polyline(RoadKind::LaneCenter, y, per_line));
        roads.push(polyline(RoadKind::RoadEdge, y - CORRIDOR_HALF_WIDTH, per_line));
        roads.push(polyline(RoadKind::RoadEdge, y + CORRIDOR_HALF_WIDTH, per_line));
    }
    for k in 0..spec.stop_signs {
        let c = k % corridors;
        let x = length * (k / corridors + 1) as f64 / (spec.stop_signs / corridors + 2) as f64;
        roads.push(RoadLine { kind: RoadKind::StopSign, points: vec![Vec2::new(x, c as f64 * CORRIDOR_PITCH + CORRIDOR_HALF_WIDTH - 1.0)] });
    }
    let objects = (0..spec.vehicles)
        .map(|i| {
            let lane = i % corridors;
            let slot = i / corridors;
            let speed = 4.0 + lane as f64;
            let x = 10.0 + slot as f64 * VEHICLE_GAP + rng.gen_range(-1.0..1.0);
            straight_vehicle(i as i64, Vec2::new(x, lane as f64 * CORRIDOR_PITCH), 0.0, speed)
        })
        .collect();
    Scenario { name: name.to_string(), dt: DT, objects, roads }
}

/// The standard benchmark scene.
pub fn benchmark_scene(seed: u64) -> Scenario {
    corridor_scene("bench", &CorridorSpec { seed, ..CorridorSpec::benchmark() })
}

/// Ten ten-vehicle scenes. Three vehicles drift across a road edge
/// (infeasible goals) and one pair starts overlapping (two initial
/// collisions); the other 95 are clean.
pub fn planted_audit_corpus(seed: u64) -> Vec<Scenario> {
    let mut scenes: Vec<Scenario> = (0..10)
        .map(|k| {
            corridor_scene(
                &format!("audit_{k:02}"),
                &CorridorSpec { corridors: 5, vehicles: 10, road_points: 6000, stop_signs: 0, seed: seed.wrapping_add(k) },
            )
        })
        .collect();
    // Infeasible: slant out of the lane, crossing the upper edge mid-way.
    for (scene, idx) in [(1usize, 0usize), (4, 2), (7, 4)] {
        let o = &scenes[scene].objects[idx];
        let start = o.expert.positions[0];
        let speed = o.goal_speed;
        let slant = (2.0 * CORRIDOR_HALF_WIDTH / (speed * 9.0)).asin();
        scenes[scene].objects[idx] = RoadObject { id: o.id, ..straight_vehicle(o.id, start, slant, speed) };
    }
    // Initial collision: move a vehicle onto its lane neighbour's bumper.
    let scene = &mut scenes[5];
    let lead = scene.objects[3].expert.positions[0];
    let id = scene.objects[8].id;
    scene.objects[8] = straight_vehicle(id, lead + Vec2::new(3.0, 0.0), 0.0, scene.objects[3].goal_speed);
    scenes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{audit, AuditReport};

    #[test]
    fn benchmark_scene_shape() {
        let s = benchmark_scene(0);
        s.validate().unwrap();
        assert_eq!(s.vehicles().count(), 30);
        let pts: usize = s.roads.iter().map(|r| r.points.len()).sum();
        assert!((16_000..16_100).contains(&pts), "{pts}");
        let r = audit(&s);
        assert_eq!((r.initial_collisions, r.infeasible_goals, r.invalid_at_start), (0, 0, 0));
    }

    #[test]
    fn planted_corpus_rates() {
        let mut total = AuditReport::default();
        for s in planted_audit_corpus(0) {
            s.validate().unwrap();
            total.merge(&audit(&s));
        }
        assert_eq!(total.vehicles, 100);
        assert_eq!(total.infeasible_goals, 3);
        assert_eq!(total.initial_collisions, 2);
        assert_eq!(total.infeasible_rate(), 0.03);
        assert_eq!(total.initial_collision_rate(), 0.02);
    }
}
