//! Post-hoc scoring: goal and collision rates, displacement errors, and
//! the trajectory-crossing interaction proxy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geom::{segment_intersect, Aabb, Segment, Vec2};
use crate::scenario::{Role, Scenario};
use crate::sim::{CollisionKind, Simulation};

/// Interaction counts above this value share the top bin.
pub const INTERACTION_BIN_CAP: u32 = 3;
const DEDUP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleReport {
    pub id: i64,
    pub role: Role,
    pub goal: bool,
    pub collision: CollisionKind,
    pub ade: Option<f64>,
    pub fde: Option<f64>,
    pub interactions: u32,
    pub total_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub vehicles: usize,
    pub goal_rate: f64,
    pub collision_rate: f64,
    pub vehicle_collision_rate: f64,
    pub road_edge_collision_rate: f64,
    /// Neither at the goal nor collided.
    pub other_rate: f64,
    pub mean_ade: Option<f64>,
    pub mean_fde: Option<f64>,
}

/// Per-vehicle fractions; `None` for an empty set.
pub fn aggregate(reports: &[VehicleReport]) -> Option<Aggregate> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let frac = |f: &dyn Fn(&VehicleReport) -> bool| reports.iter().filter(|r| f(r)).count() as f64 / n;
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    Some(Aggregate {
        vehicles: reports.len(),
        goal_rate: frac(&|r| r.goal),
        collision_rate: frac(&|r| r.collision != CollisionKind::None),
        vehicle_collision_rate: frac(&|r| r.collision == CollisionKind::Vehicle),
        road_edge_collision_rate: frac(&|r| r.collision == CollisionKind::RoadEdge),
        other_rate: frac(&|r| !r.goal && r.collision == CollisionKind::None),
        mean_ade: mean(reports.iter().filter_map(|r| r.ade).collect()),
        mean_fde: mean(reports.iter().filter_map(|r| r.fde).collect()),
    })
}

/// Average and final displacement over the steps where both the expert
/// and the agent have a position. The final displacement is taken at the
/// last such step.
pub fn displacement(agent: &[Option<Vec2>], expert: &[Option<Vec2>]) -> Option<(f64, f64)> {
    let d: Vec<f64> = agent
        .iter()
        .zip(expert)
        .filter_map(|(a, e)| Some(a.as_ref()?.distance(*e.as_ref()?)))
        .collect();
    let fde = *d.last()?;
    Some((d.iter().sum::<f64>() / d.len() as f64, fde))
}

/// Expert trajectory pieces joining consecutive valid steps.
fn polyline(scenario: &Scenario, idx: usize) -> Vec<Segment> {
    let tr = &scenario.objects[idx].expert;
    (1..tr.valid.len())
        .filter(|&t| tr.valid[t - 1] && tr.valid[t])
        .map(|t| Segment::new(tr.positions[t - 1], tr.positions[t]))
        .collect()
}

/// Distinct crossing points of two polylines.
pub fn crossings(a: &[Segment], b: &[Segment]) -> usize {
    let bb_b: Vec<Aabb> = b.iter().map(Segment::aabb).collect();
    let mut points: Vec<Vec2> = Vec::new();
    for s in a {
        let bb = s.aabb().expanded(DEDUP_TOL);
        for (u, ub) in b.iter().zip(&bb_b) {
            if !bb.intersects(ub) {
                continue;
            }
            if let Some(p) = segment_intersect(s, u) {
                if !points.iter().any(|q| q.distance(p) <= DEDUP_TOL) {
                    points.push(p);
                }
            }
        }
    }
    points.len()
}

/// Raw crossing counts per vehicle, summed over every other vehicle.
pub fn count_interactions_raw(scenario: &Scenario) -> BTreeMap<i64, u32> {
    let vehicles: Vec<usize> = (0..scenario.objects.len()).filter(|&i| scenario.objects[i].is_vehicle()).collect();
    let lines: Vec<Vec<Segment>> = vehicles.iter().map(|&i| polyline(scenario, i)).collect();
    let boxes: Vec<Aabb> = lines.iter().map(|l| l.iter().fold(Aabb::EMPTY, |acc, s| acc.union(s.aabb()))).collect();
    let mut counts: BTreeMap<i64, u32> = vehicles.iter().map(|&i| (scenario.objects[i].id, 0)).collect();
    for x in 0..vehicles.len() {
        for y in x + 1..vehicles.len() {
            if boxes[x].is_empty() || boxes[y].is_empty() || !boxes[x].intersects(&boxes[y]) {
                continue;
            }
            let c = crossings(&lines[x], &lines[y]) as u32;
            *counts.get_mut(&scenario.objects[vehicles[x]].id).expect("vehicle") += c;
            *counts.get_mut(&scenario.objects[vehicles[y]].id).expect("vehicle") += c;
        }
    }
    counts
}

/// Crossing counts with everything above 3 reported as 3.
pub fn count_interactions(scenario: &Scenario) -> BTreeMap<i64, u32> {
    count_interactions_raw(scenario).into_iter().map(|(id, c)| (id, c.min(INTERACTION_BIN_CAP))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub scenario: String,
    pub steps: usize,
    pub vehicles: Vec<VehicleReport>,
    pub controlled: Option<Aggregate>,
    pub all: Option<Aggregate>,
}

/// Scores every vehicle that took part in the episode. Displacement is
/// measured over the control window, after the warm-up.
pub fn episode_report(sim: &Simulation<'_>) -> EpisodeReport {
    let scenario = sim.scenario();
    let interactions = count_interactions(scenario);
    let warm = sim.config().sim.warmup_steps;
    let vehicles: Vec<VehicleReport> = sim
        .agents()
        .iter()
        .filter(|a| a.role != Role::Removed && scenario.objects[a.object].is_vehicle())
        .map(|a| {
            let o = &scenario.objects[a.object];
            let expert: Vec<Option<Vec2>> = (0..a.trace.len()).map(|t| o.expert.position(t)).collect();
            let window = (warm + 1).min(a.trace.len());
            let disp = displacement(&a.trace[window..], &expert[window..]);
            VehicleReport {
                id: a.id,
                role: a.role,
                goal: a.goal_achieved,
                collision: a.collision,
                ade: disp.map(|d| d.0),
                fde: disp.map(|d| d.1),
                interactions: interactions.get(&a.id).copied().unwrap_or(0),
                total_reward: a.total_reward,
            }
        })
        .collect();
    let controlled: Vec<VehicleReport> = vehicles.iter().filter(|r| r.role == Role::Controlled).cloned().collect();
    EpisodeReport {
        scenario: scenario.name.clone(),
        steps: sim.t(),
        controlled: aggregate(&controlled),
        all: aggregate(&vehicles),
        vehicles,
    }
}
