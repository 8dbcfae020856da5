//! Scenario data model, the JSON file format, and the rules deciding which
//! vehicles are controlled, replayed, or removed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{box_overlap, min_angle, OrientedBox, Vec2};
use crate::map::EdgeIndex;

/// States per trajectory: 9 s at 10 Hz plus the initial state.
pub const TRAJECTORY_LEN: usize = 91;
pub const DT: f64 = 0.1;
/// Sentinel written at invalid steps. Never read back as geometry.
pub const INVALID_POSITION: f64 = -10_000.0;

/// Minimum peak expert speed for a vehicle to be worth controlling (m/s).
pub const MIN_MOVING_SPEED: f64 = 0.05;
/// Vehicles starting this close to their goal are left on replay (m).
pub const AT_GOAL_RADIUS: f64 = 0.2;
/// Extent reduction used by the infeasible-goal audit (m).
pub const INFEASIBLE_SHRINK_WIDTH: f64 = 0.1;
pub const INFEASIBLE_SHRINK_LENGTH: f64 = 0.3;

const GOAL_MATCH_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("object {id}: `{field}` has {len} entries, expected {TRAJECTORY_LEN}")]
    Length { id: i64, field: &'static str, len: usize },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("unsupported element `{0}`")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Vehicle,
    Pedestrian,
    Cyclist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RoadKind {
    LaneCenter,
    RoadLine,
    RoadEdge,
    StopSign,
    Crosswalk,
    SpeedBump,
    Unknown,
}

impl RoadKind {
    pub const ALL: [RoadKind; 7] = [
        RoadKind::LaneCenter,
        RoadKind::RoadLine,
        RoadKind::RoadEdge,
        RoadKind::StopSign,
        RoadKind::Crosswalk,
        RoadKind::SpeedBump,
        RoadKind::Unknown,
    ];

    /// Position in the one-hot road-point encoding.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RoadKind::LaneCenter => "lane",
            RoadKind::RoadLine => "road_line",
            RoadKind::RoadEdge => "road_edge",
            RoadKind::StopSign => "stop_sign",
            RoadKind::Crosswalk => "crosswalk",
            RoadKind::SpeedBump => "speed_bump",
            RoadKind::Unknown => "unknown",
        }
    }

    fn parse(s: &str) -> Result<RoadKind, ScenarioError> {
        Ok(match s {
            "lane" => RoadKind::LaneCenter,
            "road_line" => RoadKind::RoadLine,
            "road_edge" => RoadKind::RoadEdge,
            "stop_sign" => RoadKind::StopSign,
            "crosswalk" => RoadKind::Crosswalk,
            "speed_bump" => RoadKind::SpeedBump,
            "traffic_light" => return Err(ScenarioError::Unsupported(s.to_string())),
            _ => RoadKind::Unknown,
        })
    }
}

impl fmt::Display for RoadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadLine {
    pub kind: RoadKind,
    pub points: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub positions: Vec<Vec2>,
    pub headings: Vec<f64>,
    pub velocities: Vec<Vec2>,
    pub valid: Vec<bool>,
}

impl Trajectory {
    pub fn is_valid(&self, t: usize) -> bool {
        self.valid.get(t).copied().unwrap_or(false)
    }

    pub fn position(&self, t: usize) -> Option<Vec2> {
        self.is_valid(t).then(|| self.positions[t])
    }

    pub fn speed(&self, t: usize) -> Option<f64> {
        self.is_valid(t).then(|| self.velocities[t].norm())
    }

    pub fn last_valid(&self) -> Option<usize> {
        self.valid.iter().rposition(|&v| v)
    }

    pub fn valid_steps(&self) -> impl Iterator<Item = usize> + '_ {
        self.valid.iter().enumerate().filter(|(_, &v)| v).map(|(t, _)| t)
    }

    pub fn max_speed(&self) -> f64 {
        self.valid_steps().map(|t| self.velocities[t].norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadObject {
    pub id: i64,
    pub kind: ObjectKind,
    pub width: f64,
    pub length: f64,
    pub expert: Trajectory,
    pub goal_position: Vec2,
    pub goal_speed: f64,
    pub goal_heading: f64,
}

impl RoadObject {
    /// Footprint at expert step `t`, when valid.
    pub fn expert_box(&self, t: usize) -> Option<OrientedBox> {
        self.expert
            .is_valid(t)
            .then(|| OrientedBox::new(self.expert.positions[t], self.expert.headings[t], self.length, self.width))
    }

    pub fn is_vehicle(&self) -> bool {
        self.kind == ObjectKind::Vehicle
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub dt: f64,
    pub objects: Vec<RoadObject>,
    pub roads: Vec<RoadLine>,
}

#[derive(Serialize, Deserialize)]
struct RawScenario {
    name: String,
    dt: f64,
    objects: Vec<RawObject>,
    roads: Vec<RawRoad>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawObject {
    id: i64,
    #[serde(rename = "type")]
    kind: ObjectKind,
    width: f64,
    length: f64,
    goal_position: Vec2,
    goal_speed: f64,
    goal_heading: f64,
    position: Vec<Vec2>,
    heading: Vec<f64>,
    velocity: Vec<Vec2>,
    valid: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct RawRoad {
    #[serde(rename = "type")]
    kind: String,
    geometry: Vec<Vec2>,
}

impl Scenario {
    pub fn from_json(bytes: &[u8]) -> Result<Scenario, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        let raw: RawScenario = serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        let scenario = Scenario::from_raw(raw)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
        Scenario::from_json(&std::fs::read(path)?)
    }

    fn from_raw(raw: RawScenario) -> Result<Scenario, ScenarioError> {
        let mut objects = Vec::with_capacity(raw.objects.len());
        for o in raw.objects {
            for (field, len) in [
                ("position", o.position.len()),
                ("heading", o.heading.len()),
                ("velocity", o.velocity.len()),
                ("valid", o.valid.len()),
            ] {
                if len != TRAJECTORY_LEN {
                    return Err(ScenarioError::Length { id: o.id, field, len });
                }
            }
            objects.push(RoadObject {
                id: o.id,
                kind: o.kind,
                width: o.width,
                length: o.length,
                expert: Trajectory { positions: o.position, headings: o.heading, velocities: o.velocity, valid: o.valid },
                goal_position: o.goal_position,
                goal_speed: o.goal_speed,
                goal_heading: o.goal_heading,
            });
        }
        let roads = raw
            .roads
            .into_iter()
            .map(|r| Ok(RoadLine { kind: RoadKind::parse(&r.kind)?, points: r.geometry }))
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        Ok(Scenario { name: raw.name, dt: raw.dt, objects, roads })
    }

    /// Canonical compact JSON. `from_json(to_json(s)) == s` for any valid `s`.
    pub fn to_json(&self) -> Vec<u8> {
        let raw = RawScenario {
            name: self.name.clone(),
            dt: self.dt,
            objects: self
                .objects
                .iter()
                .map(|o| RawObject {
                    id: o.id,
                    kind: o.kind,
                    width: o.width,
                    length: o.length,
                    goal_position: o.goal_position,
                    goal_speed: o.goal_speed,
                    goal_heading: o.goal_heading,
                    position: o.expert.positions.clone(),
                    heading: o.expert.headings.clone(),
                    velocity: o.expert.velocities.clone(),
                    valid: o.expert.valid.clone(),
                })
                .collect(),
            roads: self
                .roads
                .iter()
                .map(|r| RawRoad { kind: r.kind.as_str().to_string(), geometry: r.points.clone() })
                .collect(),
        };
        serde_json::to_vec(&raw).expect("scenario serialization is infallible")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::Validation(msg));
        if (self.dt - DT).abs() > 1e-12 {
            return bad(format!("dt must be {DT}, got {}", self.dt));
        }
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.id) {
                return bad(format!("duplicate object id {}", o.id));
            }
            if !(o.width.is_finite() && o.width > 0.0 && o.length.is_finite() && o.length > 0.0) {
                return bad(format!("object {}: extents must be positive and finite", o.id));
            }
            let tr = &o.expert;
            for (field, len) in [
                ("position", tr.positions.len()),
                ("heading", tr.headings.len()),
                ("velocity", tr.velocities.len()),
                ("valid", tr.valid.len()),
            ] {
                if len != TRAJECTORY_LEN {
                    return Err(ScenarioError::Length { id: o.id, field, len });
                }
            }
            for t in tr.valid_steps() {
                if !(tr.positions[t].is_finite() && tr.headings[t].is_finite() && tr.velocities[t].is_finite()) {
                    return bad(format!("object {}: non-finite state at step {t}", o.id));
                }
            }
            if !(o.goal_position.is_finite() && o.goal_speed.is_finite() && o.goal_heading.is_finite()) {
                return bad(format!("object {}: non-finite goal", o.id));
            }
            if let Some(last) = tr.last_valid() {
                let pos_err = tr.positions[last].distance(o.goal_position);
                let speed_err = (tr.velocities[last].norm() - o.goal_speed).abs();
                let heading_err = min_angle(tr.headings[last], o.goal_heading);
                if pos_err > GOAL_MATCH_TOL || speed_err > GOAL_MATCH_TOL || heading_err > GOAL_MATCH_TOL {
                    return bad(format!("object {}: goal differs from final valid expert state", o.id));
                }
            }
        }
        for (i, r) in self.roads.iter().enumerate() {
            if r.points.is_empty() {
                return bad(format!("road {i}: empty geometry"));
            }
            if r.kind == RoadKind::StopSign && r.points.len() != 1 {
                return bad(format!("road {i}: stop sign must have exactly one point"));
            }
            if r.points.iter().any(|p| !p.is_finite()) {
                return bad(format!("road {i}: non-finite coordinate"));
            }
        }
        Ok(())
    }

    pub fn object(&self, id: i64) -> Option<&RoadObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &RoadObject> {
        self.objects.iter().filter(|o| o.is_vehicle())
    }
}

/// Whether the expert path, driven by a slightly slimmer copy of the
/// vehicle, touches a road edge at any valid step.
pub fn goal_infeasible(obj: &RoadObject, edges: &EdgeIndex) -> bool {
    goal_infeasible_with_shrink(obj, edges, INFEASIBLE_SHRINK_LENGTH, INFEASIBLE_SHRINK_WIDTH)
}

pub fn goal_infeasible_with_shrink(obj: &RoadObject, edges: &EdgeIndex, d_length: f64, d_width: f64) -> bool {
    obj.expert
        .valid_steps()
        .filter_map(|t| obj.expert_box(t))
        .any(|b| edges.intersects_box(&b.shrunk(d_length, d_width)))
}

/// Whether `obj` starts overlapping another vehicle present at step 0 or a
/// road edge.
pub fn initial_collision(obj: &RoadObject, scenario: &Scenario, edges: &EdgeIndex) -> bool {
    let Some(b) = obj.expert_box(0) else { return false };
    if edges.intersects_box(&b) {
        return true;
    }
    scenario
        .vehicles()
        .filter(|o| o.id != obj.id)
        .filter_map(|o| o.expert_box(0))
        .any(|other| box_overlap(&b, &other))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Controlled,
    ExpertReplay,
    Removed,
}

/// Role of every object in a scenario.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VehicleDisposition {
    pub roles: BTreeMap<i64, Role>,
}

impl VehicleDisposition {
    pub fn role(&self, id: i64) -> Option<Role> {
        self.roles.get(&id).copied()
    }

    pub fn ids_with(&self, role: Role) -> Vec<i64> {
        self.roles.iter().filter(|(_, &r)| r == role).map(|(&id, _)| id).collect()
    }

    pub fn controlled(&self) -> Vec<i64> {
        self.ids_with(Role::Controlled)
    }

    /// Every object in the scene on expert replay, except those that must
    /// be removed regardless.
    pub fn all_replay(scenario: &Scenario, include_vru: bool) -> VehicleDisposition {
        let edges = EdgeIndex::build(scenario);
        let roles = scenario
            .objects
            .iter()
            .map(|o| (o.id, base_role(o, scenario, &edges, include_vru).unwrap_or(Role::ExpertReplay)))
            .collect();
        VehicleDisposition { roles }
    }
}

/// `Some(Removed)` / `Some(ExpertReplay)` for objects whose role is fixed
/// before sampling; `None` for vehicles still in the running.
fn base_role(o: &RoadObject, scenario: &Scenario, edges: &EdgeIndex, include_vru: bool) -> Option<Role> {
    if !o.is_vehicle() {
        return Some(if include_vru && o.expert.is_valid(0) { Role::ExpertReplay } else { Role::Removed });
    }
    if !o.expert.is_valid(0) || initial_collision(o, scenario, edges) {
        return Some(Role::Removed);
    }
    None
}

/// Whether a surviving vehicle qualifies for control.
pub fn is_control_candidate(o: &RoadObject, edges: &EdgeIndex) -> bool {
    let Some(start) = o.expert.position(0) else { return false };
    o.expert.max_speed() > MIN_MOVING_SPEED
        && start.distance(o.goal_position) > AT_GOAL_RADIUS
        && !goal_infeasible(o, edges)
}

/// Partition objects into controlled, replayed, and removed. Up to
/// `max_controlled` candidates are drawn uniformly with a seeded RNG.
pub fn select_controlled(scenario: &Scenario, max_controlled: usize, include_vru: bool, seed: u64) -> VehicleDisposition {
    let edges = EdgeIndex::build(scenario);
    let mut roles = BTreeMap::new();
    let mut candidates = Vec::new();
    for o in &scenario.objects {
        match base_role(o, scenario, &edges, include_vru) {
            Some(role) => {
                roles.insert(o.id, role);
            }
            None => {
                if is_control_candidate(o, &edges) {
                    candidates.push(o.id);
                }
                roles.insert(o.id, Role::ExpertReplay);
            }
        }
    }
    let k = max_controlled.min(candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in sample(&mut rng, candidates.len(), k) {
        roles.insert(candidates[i], Role::Controlled);
    }
    VehicleDisposition { roles }
}

/// Per-scenario data-quality counts over vehicles. Categories are disjoint:
/// a vehicle absent at step 0 is counted only there, and an initially
/// colliding vehicle is not also audited for goal feasibility.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub name: String,
    pub vehicles: usize,
    pub invalid_at_start: usize,
    pub initial_collisions: usize,
    pub infeasible_goals: usize,
}

impl AuditReport {
    pub fn merge(&mut self, other: &AuditReport) {
        self.vehicles += other.vehicles;
        self.invalid_at_start += other.invalid_at_start;
        self.initial_collisions += other.initial_collisions;
        self.infeasible_goals += other.infeasible_goals;
    }

    fn rate(&self, n: usize) -> f64 {
        if self.vehicles == 0 {
            0.0
        } else {
            n as f64 / self.vehicles as f64
        }
    }

    pub fn infeasible_rate(&self) -> f64 {
        self.rate(self.infeasible_goals)
    }

    pub fn initial_collision_rate(&self) -> f64 {
        self.rate(self.initial_collisions)
    }

    pub fn invalid_at_start_rate(&self) -> f64 {
        self.rate(self.invalid_at_start)
    }
}

pub fn audit(scenario: &Scenario) -> AuditReport {
    let edges = EdgeIndex::build(scenario);
    let mut report = AuditReport { name: scenario.name.clone(), ..Default::default() };
    for o in scenario.vehicles() {
        report.vehicles += 1;
        if !o.expert.is_valid(0) {
            report.invalid_at_start += 1;
        } else if initial_collision(o, scenario, &edges) {
            report.initial_collisions += 1;
        } else if goal_infeasible(o, &edges) {
            report.infeasible_goals += 1;
        }
    }
    report
}
