//! The episode loop: expert warm-up, stepping controlled and replayed
//! vehicles, collision and goal bookkeeping, the dense reward, and removal.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EnvConfig;
use crate::dynamics::{bicycle_step, clamp_heading_rate, replay_step, Action, DynamicsError, KinState, MAX_HEADING_RATE};
use crate::geom::{box_overlap, min_angle, OrientedBox, Vec2};
use crate::map::RoadMap;
use crate::obs::{build_observation, Goal, Observation};
use crate::scenario::{ObjectKind, RoadObject, Role, Scenario, VehicleDisposition, TRAJECTORY_LEN};
use crate::visibility::{Frame, ObjectView};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub warmup_steps: usize,
    pub horizon: usize,
    pub goal_pos_tol: f64,
    pub goal_speed_tol: f64,
    pub goal_heading_tol: f64,
    /// Weights of the position, speed and heading terms of the dense reward.
    pub reward_weights: [f64; 3],
    pub speed_normalizer: f64,
    pub goal_bonus: f64,
    pub max_controlled: usize,
    pub remove_on_goal: bool,
    pub remove_on_collision: bool,
    pub v_max: f64,
    /// Post-integration heading-rate clamp (rad/s) for controlled vehicles.
    pub heading_rate_limit: Option<f64>,
    pub include_vru: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            warmup_steps: 10,
            horizon: 80,
            goal_pos_tol: 1.0,
            goal_speed_tol: 1.0,
            goal_heading_tol: 0.3,
            reward_weights: [0.2, 0.2, 0.2],
            speed_normalizer: 40.0,
            goal_bonus: 80.0,
            max_controlled: 20,
            remove_on_goal: true,
            remove_on_collision: true,
            v_max: crate::dynamics::DEFAULT_V_MAX,
            heading_rate_limit: Some(MAX_HEADING_RATE),
            include_vru: false,
        }
    }
}

impl SimConfig {
    pub fn last_step(&self) -> usize {
        self.warmup_steps + self.horizon
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.last_step() >= TRAJECTORY_LEN {
            return Err(format!("warmup_steps + horizon = {} exceeds {} intervals", self.last_step(), TRAJECTORY_LEN - 1));
        }
        for (name, v) in [
            ("goal_pos_tol", self.goal_pos_tol),
            ("goal_speed_tol", self.goal_speed_tol),
            ("goal_heading_tol", self.goal_heading_tol),
            ("speed_normalizer", self.speed_normalizer),
            ("v_max", self.v_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.reward_weights.iter().any(|w| !w.is_finite()) || !self.goal_bonus.is_finite() {
            return Err("reward weights and goal bonus must be finite".into());
        }
        if let Some(r) = self.heading_rate_limit {
            if !(r > 0.0 && r.is_finite()) {
                return Err(format!("heading_rate_limit must be positive, got {r}"));
            }
        }
        Ok(())
    }
}

/// Simultaneous position, speed and heading tolerance test (closed bounds).
pub fn goal_achieved(s: &KinState, goal: &Goal, cfg: &SimConfig) -> bool {
    s.position.distance(goal.position) <= cfg.goal_pos_tol
        && (s.speed - goal.speed).abs() <= cfg.goal_speed_tol
        && min_angle(s.heading, goal.heading) <= cfg.goal_heading_tol
}

/// The three weighted terms of the dense reward: position progress
/// relative to the start of control, speed match, heading match.
pub fn reward_terms(s: &KinState, goal: &Goal, x0: Vec2, cfg: &SimConfig) -> [f64; 3] {
    let [wp, wv, wh] = cfg.reward_weights;
    let ratios = penalty_ratios(s, goal, x0, cfg);
    [wp * (1.0 - ratios[0]), wv * (1.0 - ratios[1]), wh * (1.0 - ratios[2])]
}

fn penalty_ratios(s: &KinState, goal: &Goal, x0: Vec2, cfg: &SimConfig) -> [f64; 3] {
    let d0 = x0.distance(goal.position);
    // A vehicle that starts on its goal gets the full position term.
    let pos = if d0 == 0.0 { 0.0 } else { s.position.distance(goal.position) / d0 };
    [pos, (s.speed - goal.speed).abs() / cfg.speed_normalizer, min_angle(s.heading, goal.heading) / (2.0 * PI)]
}

/// Dense per-step reward. With equal weights the terms are summed before
/// scaling, dividing by the reciprocal weight so that the boundary values
/// (0.4 at the start, 0.6 on the goal with the default 0.2) are exact.
pub fn dense_reward(s: &KinState, goal: &Goal, x0: Vec2, cfg: &SimConfig) -> f64 {
    let [wp, wv, wh] = cfg.reward_weights;
    if wp == wv && wv == wh && wp != 0.0 {
        let r = penalty_ratios(s, goal, x0, cfg);
        ((1.0 - r[0]) + (1.0 - r[1]) + (1.0 - r[2])) / (1.0 / wp)
    } else {
        reward_terms(s, goal, x0, cfg).iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionKind {
    #[default]
    None,
    Vehicle,
    RoadEdge,
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("episode is over at step {0}")]
    EpisodeOver(usize),
    #[error("warm-up not finished: step {0} < {1}; call reset first")]
    WarmupPending(usize, usize),
    #[error("vehicle {0} is not in the scene")]
    UnknownVehicle(i64),
    #[error("vehicle {0} is not controlled")]
    NotControlled(i64),
    #[error("vehicle {0} has been removed and takes no actions")]
    DeadVehicle(i64),
    #[error("no action given for controlled vehicle {0}")]
    MissingAction(i64),
    #[error("vehicle {id}: {source}")]
    Dynamics { id: i64, source: DynamicsError },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("disposition does not match scenario: {0}")]
    Disposition(String),
}

/// What drives a vehicle for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    Act(Action),
    /// Follow the stored trajectory; a controlled vehicle without valid
    /// data for the step holds its last state.
    Expert,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    /// Index into `Scenario::objects`.
    pub object: usize,
    pub id: i64,
    pub kind: ObjectKind,
    pub role: Role,
    /// Current kinematic state; `None` while a replayed object is absent.
    pub state: Option<KinState>,
    pub alive: bool,
    pub collision: CollisionKind,
    pub goal_achieved: bool,
    /// Position at control handoff.
    pub x0: Option<Vec2>,
    pub tilt: f64,
    /// Position at each step so far, `None` where absent or removed.
    pub trace: Vec<Option<Vec2>>,
    pub total_reward: f64,
}

impl Agent {
    pub fn is_present(&self) -> bool {
        self.alive && self.state.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub collision: CollisionKind,
    pub goal_achieved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub id: i64,
    /// Fresh observation for vehicles still in the scene.
    pub observation: Option<Observation>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Warmup {
    /// One observation per warm-up step for each controlled vehicle.
    pub history: BTreeMap<i64, Vec<Observation>>,
    /// Observations at control handoff.
    pub observations: BTreeMap<i64, Observation>,
}

/// One episode over a scenario. Single-writer: `advance` and `step`
/// mutate; observation builds inside a step run in parallel against the
/// frozen post-dynamics frame.
pub struct Simulation<'a> {
    scenario: &'a Scenario,
    map: &'a RoadMap,
    cfg: EnvConfig,
    agents: Vec<Agent>,
    by_id: BTreeMap<i64, usize>,
    t: usize,
    frame: Frame<'a>,
}

fn goal_of(o: &RoadObject) -> Goal {
    Goal { position: o.goal_position, speed: o.goal_speed, heading: o.goal_heading }
}

impl<'a> Simulation<'a> {
    /// Places every non-removed object at its expert state for step 0.
    pub fn new(scenario: &'a Scenario, map: &'a RoadMap, disposition: &VehicleDisposition, cfg: EnvConfig) -> Result<Self, SimError> {
        cfg.validate().map_err(SimError::Config)?;
        if disposition.roles.len() != scenario.objects.len() || scenario.objects.iter().any(|o| disposition.role(o.id).is_none()) {
            return Err(SimError::Disposition("every object needs exactly one role".into()));
        }
        let mut agents = Vec::with_capacity(scenario.objects.len());
        let mut by_id = BTreeMap::new();
        for (object, o) in scenario.objects.iter().enumerate() {
            let role = disposition.role(o.id).expect("checked above");
            if role == Role::Controlled && !o.is_vehicle() {
                return Err(SimError::Disposition(format!("object {} is not a vehicle and cannot be controlled", o.id)));
            }
            let alive = role != Role::Removed;
            let state = if alive { replay_step(o, 0).expect("step 0 in range") } else { None };
            by_id.insert(o.id, agents.len());
            agents.push(Agent {
                object,
                id: o.id,
                kind: o.kind,
                role,
                state,
                alive,
                collision: CollisionKind::None,
                goal_achieved: false,
                x0: None,
                tilt: 0.0,
                trace: vec![if alive { state.map(|s| s.position) } else { None }],
                total_reward: 0.0,
            });
        }
        let frame = Frame::new(map, Vec::new());
        let mut sim = Simulation { scenario, map, cfg, agents, by_id, t: 0, frame };
        sim.rebuild_frame();
        Ok(sim)
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn agent(&self, id: i64) -> Option<&Agent> {
        self.by_id.get(&id).map(|&i| &self.agents[i])
    }

    pub fn frame(&self) -> &Frame<'a> {
        &self.frame
    }

    pub fn is_over(&self) -> bool {
        self.t >= self.cfg.sim.last_step()
    }

    /// Controlled vehicles still in the episode, ascending by id.
    pub fn alive_controlled(&self) -> Vec<i64> {
        self.agents.iter().filter(|a| a.role == Role::Controlled && a.alive).map(|a| a.id).collect()
    }

    fn rebuild_frame(&mut self) {
        let views = self
            .agents
            .iter()
            .filter(|a| a.is_present())
            .map(|a| {
                let o = &self.scenario.objects[a.object];
                let s = a.state.expect("present");
                ObjectView { id: a.id, kind: a.kind, bbox: OrientedBox::new(s.position, s.heading, o.length, o.width), speed: s.speed }
            })
            .collect();
        self.frame = Frame::new(self.map, views);
    }

    /// Replays the warm-up for every vehicle and returns the observation
    /// history of each controlled vehicle. Controlled vehicles lacking
    /// valid expert data anywhere in the warm-up are demoted to removed.
    pub fn reset(&mut self) -> Result<Warmup, SimError> {
        let warm = self.cfg.sim.warmup_steps;
        for a in &mut self.agents {
            let o = &self.scenario.objects[a.object];
            if a.role == Role::Controlled && !(0..=warm).all(|t| o.expert.is_valid(t)) {
                log::warn!("scenario {}: controlled vehicle {} is invalid during warm-up; removing it", self.scenario.name, a.id);
                a.role = Role::Removed;
                a.alive = false;
                a.state = None;
            }
            *a = Agent {
                state: if a.alive { replay_step(o, 0).expect("step 0 in range") } else { None },
                collision: CollisionKind::None,
                goal_achieved: false,
                x0: None,
                tilt: 0.0,
                total_reward: 0.0,
                trace: Vec::new(),
                ..a.clone()
            };
            a.trace.push(a.state.filter(|_| a.alive).map(|s| s.position));
        }
        self.t = 0;
        self.rebuild_frame();

        let controlled = self.alive_controlled();
        let mut history: BTreeMap<i64, Vec<Observation>> = controlled.iter().map(|&id| (id, Vec::with_capacity(warm))).collect();
        let experts: BTreeMap<i64, Control> = BTreeMap::new();
        while self.t < warm {
            for (id, obs) in self.observe_all() {
                history.get_mut(&id).expect("controlled").push(obs);
            }
            self.advance(&experts)?;
        }
        for a in &mut self.agents {
            if a.role == Role::Controlled && a.alive {
                a.x0 = a.state.map(|s| s.position);
            }
        }
        Ok(Warmup { history, observations: self.observe_all() })
    }

    /// Observation for one present vehicle under its current head tilt.
    pub fn observe(&self, id: i64) -> Option<Observation> {
        let a = self.agent(id)?;
        if !a.is_present() {
            return None;
        }
        let ego = self.frame.index_of(id)?;
        let goal = goal_of(&self.scenario.objects[a.object]);
        Some(build_observation(&self.frame, ego, a.tilt, &goal, &self.cfg.layout, &self.cfg.view))
    }

    /// Observations for every present controlled vehicle, built in parallel.
    pub fn observe_all(&self) -> BTreeMap<i64, Observation> {
        let ids: Vec<i64> = self.alive_controlled().into_iter().filter(|&id| self.agent(id).is_some_and(Agent::is_present)).collect();
        let obs = self.cfg.execution.map(&ids, |&id| self.observe(id).expect("present"));
        ids.into_iter().zip(obs).collect()
    }

    /// Advances the world by one step at any point of the episode.
    /// Vehicles absent from `controls` follow expert data. Returns the
    /// rewards earned by controlled vehicles after the warm-up.
    pub fn advance(&mut self, controls: &BTreeMap<i64, Control>) -> Result<BTreeMap<i64, f64>, SimError> {
        if self.is_over() {
            return Err(SimError::EpisodeOver(self.t));
        }
        for (&id, c) in controls {
            let a = self.agent(id).ok_or(SimError::UnknownVehicle(id))?;
            if !a.alive {
                return Err(SimError::DeadVehicle(id));
            }
            if let Control::Act(act) = c {
                if a.role != Role::Controlled {
                    return Err(SimError::NotControlled(id));
                }
                act.check_bounds().map_err(|source| SimError::Dynamics { id, source })?;
            }
        }
        let next_t = self.t + 1;
        let dt = self.scenario.dt;
        let (v_max, rate) = (self.cfg.sim.v_max, self.cfg.sim.heading_rate_limit);

        // 1. Dynamics.
        let mut next_states = Vec::with_capacity(self.agents.len());
        for a in &self.agents {
            if !a.alive {
                next_states.push((a.state, a.tilt));
                continue;
            }
            let o = &self.scenario.objects[a.object];
            let replayed = replay_step(o, next_t).expect("in range");
            let next = match (controls.get(&a.id), a.role) {
                (Some(Control::Act(act)), _) => {
                    let Some(cur) = a.state else { return Err(SimError::DeadVehicle(a.id)) };
                    let mut s = bicycle_step(&cur, act, dt, o.length, v_max).map_err(|source| SimError::Dynamics { id: a.id, source })?;
                    if let Some(r) = rate {
                        s = clamp_heading_rate(&cur, s, dt, r);
                    }
                    (Some(s), act.applied_tilt())
                }
                (_, Role::Controlled) => (replayed.or(a.state), 0.0),
                _ => (replayed, 0.0),
            };
            next_states.push(next);
        }
        for (a, (s, tilt)) in self.agents.iter_mut().zip(next_states) {
            if a.alive {
                a.state = s;
                a.tilt = tilt;
            }
        }
        self.t = next_t;
        self.rebuild_frame();

        let mut rewards = BTreeMap::new();
        if self.t > self.cfg.sim.warmup_steps {
            // 2. Collisions, sticky, among vehicles present this step.
            let hits = self.detect_collisions();
            for (a, hit) in self.agents.iter_mut().zip(hits) {
                if a.collision == CollisionKind::None {
                    a.collision = hit;
                }
            }
            // 3-4. Goals and rewards.
            for a in &mut self.agents {
                if !a.is_present() || a.kind != ObjectKind::Vehicle {
                    continue;
                }
                let o = &self.scenario.objects[a.object];
                let goal = goal_of(o);
                let s = a.state.expect("present");
                let newly = !a.goal_achieved && goal_achieved(&s, &goal, &self.cfg.sim);
                a.goal_achieved |= newly;
                if a.role == Role::Controlled {
                    let x0 = a.x0.unwrap_or(s.position);
                    let mut r = dense_reward(&s, &goal, x0, &self.cfg.sim);
                    if newly {
                        r += self.cfg.sim.goal_bonus;
                    }
                    a.total_reward += r;
                    rewards.insert(a.id, r);
                }
            }
            // 5. Removal.
            let mut removed_any = false;
            for a in &mut self.agents {
                if a.alive
                    && a.kind == ObjectKind::Vehicle
                    && ((self.cfg.sim.remove_on_goal && a.goal_achieved)
                        || (self.cfg.sim.remove_on_collision && a.collision != CollisionKind::None))
                {
                    a.alive = false;
                    removed_any = true;
                }
            }
            if removed_any {
                self.rebuild_frame();
            }
        }
        for a in &mut self.agents {
            a.trace.push(if a.alive { a.state.map(|s| s.position) } else { None });
        }
        Ok(rewards)
    }

    /// Collision found this step for each agent (in agent order).
    fn detect_collisions(&self) -> Vec<CollisionKind> {
        let frame = &self.frame;
        let edges = self.map.edges();
        let objs = frame.objects();
        let mut by_frame = vec![CollisionKind::None; objs.len()];
        for (i, o) in objs.iter().enumerate() {
            if o.kind != ObjectKind::Vehicle {
                continue;
            }
            let hit_vehicle = frame
                .objects_in(frame.aabb(i))
                .into_iter()
                .any(|j| j != i && objs[j].kind == ObjectKind::Vehicle && box_overlap(&o.bbox, &objs[j].bbox));
            by_frame[i] = if hit_vehicle {
                CollisionKind::Vehicle
            } else if edges.intersects_box(&o.bbox) {
                CollisionKind::RoadEdge
            } else {
                CollisionKind::None
            };
        }
        let mut out = vec![CollisionKind::None; self.agents.len()];
        for (i, o) in objs.iter().enumerate() {
            out[self.by_id[&o.id]] = by_frame[i];
        }
        out
    }

    /// One control step: every alive controlled vehicle must have an action.
    pub fn step(&mut self, actions: &BTreeMap<i64, Action>) -> Result<Vec<Transition>, SimError> {
        let controls = actions.iter().map(|(&id, &a)| (id, Control::Act(a))).collect();
        self.step_with(&controls)
    }

    /// Like [`Simulation::step`], allowing expert control per vehicle.
    pub fn step_with(&mut self, controls: &BTreeMap<i64, Control>) -> Result<Vec<Transition>, SimError> {
        if self.t < self.cfg.sim.warmup_steps {
            return Err(SimError::WarmupPending(self.t, self.cfg.sim.warmup_steps));
        }
        if self.is_over() {
            return Err(SimError::EpisodeOver(self.t));
        }
        let acting = self.alive_controlled();
        for &id in controls.keys() {
            let a = self.agent(id).ok_or(SimError::UnknownVehicle(id))?;
            if a.role != Role::Controlled {
                return Err(SimError::NotControlled(id));
            }
            if !a.alive {
                return Err(SimError::DeadVehicle(id));
            }
        }
        if let Some(&id) = acting.iter().find(|id| !controls.contains_key(id)) {
            return Err(SimError::MissingAction(id));
        }
        let rewards = self.advance(controls)?;
        let mut observations = self.observe_all();
        let last = self.is_over();
        Ok(acting
            .into_iter()
            .map(|id| {
                let a = self.agent(id).expect("known");
                Transition {
                    id,
                    observation: observations.remove(&id),
                    reward: rewards.get(&id).copied().unwrap_or(0.0),
                    done: !a.alive || last,
                    info: StepInfo { collision: a.collision, goal_achieved: a.goal_achieved },
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::{edge, straight_object};
    use crate::scenario::{select_controlled, DT};

    fn cfg() -> SimConfig {
        SimConfig::default()
    }

    fn ks(x: f64, y: f64, h: f64, v: f64) -> KinState {
        KinState { position: Vec2::new(x, y), heading: h, speed: v }
    }

    fn goal(x: f64, y: f64, v: f64, h: f64) -> Goal {
        Goal { position: Vec2::new(x, y), speed: v, heading: h }
    }

    #[test]
    fn reward_boundary_values() {
        let g = goal(50.0, 0.0, 10.0, 0.0);
        let x0 = Vec2::new(0.0, 0.0);
        assert_eq!(dense_reward(&ks(0.0, 0.0, 0.0, 10.0), &g, x0, &cfg()), 0.4);
        assert_eq!(dense_reward(&ks(50.0, 0.0, 0.0, 10.0), &g, x0, &cfg()), 0.6);
        assert_eq!(reward_terms(&ks(20.0, 0.0, 0.0, 50.0), &g, x0, &cfg())[1], 0.0);
        assert_eq!(reward_terms(&ks(20.0, 0.0, 0.0, -30.0), &g, x0, &cfg())[1], 0.0);
        // Starting on the goal: full position term.
        assert_eq!(reward_terms(&ks(50.0, 0.0, 0.0, 10.0), &g, g.position, &cfg())[0], 0.2);
    }

    #[test]
    fn reward_bounded_between_start_and_goal() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let g = goal(40.0, 10.0, 8.0, 0.3);
        let x0 = Vec2::new(-10.0, 3.0);
        for _ in 0..1000 {
            let f: f64 = rng.gen();
            let p = x0 + (g.position - x0) * f;
            let s = KinState { position: p, heading: rng.gen_range(-PI..PI), speed: rng.gen_range(-32.0..48.0) };
            let r = dense_reward(&s, &g, x0, &cfg());
            assert!((-1e-12..=0.6 + 1e-12).contains(&r), "{r}");
            let sum: f64 = reward_terms(&s, &g, x0, &cfg()).iter().sum();
            assert!((sum - r).abs() < 1e-12);
        }
    }

    #[test]
    fn goal_tolerance_triple() {
        let g = goal(0.0, 0.0, 5.0, 0.0);
        assert!(goal_achieved(&ks(0.9, 0.0, 0.2, 5.5), &g, &cfg()));
        assert!(!goal_achieved(&ks(1.1, 0.0, 0.0, 5.0), &g, &cfg()));
        assert!(!goal_achieved(&ks(0.5, 0.0, 0.31, 5.0), &g, &cfg()));
    }

    fn corridor(objects: Vec<RoadObject>) -> Scenario {
        Scenario {
            name: "sim".into(),
            dt: DT,
            objects,
            roads: vec![edge(-100.0, -6.0, 400.0, -6.0), edge(-100.0, 6.0, 400.0, 6.0)],
        }
    }

    fn env(sim: SimConfig) -> EnvConfig {
        EnvConfig { sim, execution: crate::par::Execution::Sequential, ..EnvConfig::default() }
    }

    #[test]
    fn replay_closure_and_history() {
        let s = corridor(vec![
            straight_object(1, Vec2::new(0.0, 0.0), 0.0, 5.0),
            straight_object(2, Vec2::new(30.0, 3.0), 0.0, 3.0),
        ]);
        let map = RoadMap::build(&s);
        let d = VehicleDisposition::all_replay(&s, false);
        let mut sim = Simulation::new(&s, &map, &d, env(SimConfig { remove_on_goal: false, remove_on_collision: false, ..cfg() })).unwrap();
        let w = sim.reset().unwrap();
        assert!(w.history.is_empty());
        for a in sim.agents() {
            assert_eq!(a.state, replay_step(&s.objects[a.object], 10).unwrap());
        }
        while !sim.is_over() {
            sim.advance(&BTreeMap::new()).unwrap();
        }
        assert_eq!(sim.t(), 90);
        for a in sim.agents() {
            let o = &s.objects[a.object];
            assert_eq!(a.trace, (0..91).map(|t| o.expert.position(t)).collect::<Vec<_>>());
            assert!(a.goal_achieved);
            assert_eq!(a.collision, CollisionKind::None);
        }
        assert_eq!(sim.advance(&BTreeMap::new()), Err(SimError::EpisodeOver(90)));
    }

    #[test]
    fn controlled_history_and_step_contract() {
        let s = corridor(vec![straight_object(1, Vec2::new(0.0, 0.0), 0.0, 5.0), straight_object(2, Vec2::new(0.0, 3.0), 0.0, 0.0)]);
        let map = RoadMap::build(&s);
        let d = select_controlled(&s, 20, false, 0);
        assert_eq!(d.controlled(), vec![1]);
        let mut sim = Simulation::new(&s, &map, &d, env(cfg())).unwrap();
        assert_eq!(sim.step(&BTreeMap::new()), Err(SimError::WarmupPending(0, 10)));
        let w = sim.reset().unwrap();
        assert_eq!(w.history[&1].len(), 10);
        assert_eq!(w.observations.len(), 1);
        assert_eq!(sim.agent(1).unwrap().x0, Some(Vec2::new(5.0, 0.0)));
        assert_eq!(sim.step(&BTreeMap::new()), Err(SimError::MissingAction(1)));
        let bad: BTreeMap<i64, Action> = [(1, Action::default()), (2, Action::default())].into();
        assert_eq!(sim.step(&bad), Err(SimError::NotControlled(2)));
        let tr = sim.step(&[(1, Action::default())].into()).unwrap();
        assert_eq!(tr.len(), 1);
        assert!(tr[0].observation.is_some());
        assert!(!tr[0].done);
        assert!(tr[0].reward.is_finite());
    }

    #[test]
    fn lone_vehicle_reaches_goal_once() {
        let s = corridor(vec![straight_object(1, Vec2::new(0.0, 0.0), 0.0, 5.0)]);
        let map = RoadMap::build(&s);
        let d = select_controlled(&s, 20, false, 0);
        let mut sim = Simulation::new(&s, &map, &d, env(cfg())).unwrap();
        sim.reset().unwrap();
        let mut total = 0.0;
        let mut bonus_steps = 0;
        loop {
            let tr = sim.step_with(&[(1, Control::Expert)].into()).unwrap();
            total += tr[0].reward;
            if tr[0].reward > 1.0 {
                bonus_steps += 1;
            }
            if tr[0].done {
                assert!(tr[0].info.goal_achieved);
                assert!(tr[0].observation.is_none());
                break;
            }
        }
        assert_eq!(bonus_steps, 1);
        assert!(total > 80.0);
        assert!(!sim.agent(1).unwrap().alive);
        assert_eq!(sim.step(&BTreeMap::new()).unwrap(), vec![]);
    }

    #[test]
    fn head_on_collision() {
        let s = corridor(vec![
            straight_object(1, Vec2::new(0.0, 0.0), 0.0, 5.0),
            straight_object(2, Vec2::new(120.0, 0.0), PI, 5.0),
        ]);
        let map = RoadMap::build(&s);
        let d = select_controlled(&s, 20, false, 0);
        assert_eq!(d.controlled(), vec![1, 2]);
        let mut sim = Simulation::new(&s, &map, &d, env(cfg())).unwrap();
        sim.reset().unwrap();
        let go: BTreeMap<i64, Action> = [(1, Action::new(2.0, 0.0, 0.0)), (2, Action::new(2.0, 0.0, 0.0))].into();
        let mut done = false;
        while !done {
            let tr = sim.step(&go).unwrap();
            done = tr.iter().all(|t| t.done);
        }
        for id in [1, 2] {
            let a = sim.agent(id).unwrap();
            assert_eq!(a.collision, CollisionKind::Vehicle);
            assert!(!a.alive);
        }
        assert!(sim.t() < 90);
    }

    #[test]
    fn road_edge_collision_is_sticky() {
        let s = corridor(vec![straight_object(1, Vec2::new(0.0, 0.0), 0.0, 8.0)]);
        let map = RoadMap::build(&s);
        let d = select_controlled(&s, 20, false, 0);
        let mut sim = Simulation::new(&s, &map, &d, env(SimConfig { remove_on_collision: false, ..cfg() })).unwrap();
        sim.reset().unwrap();
        let left: BTreeMap<i64, Action> = [(1, Action::new(0.0, 0.6, 0.0))].into();
        let mut hit_at = None;
        let straight: BTreeMap<i64, Action> = [(1, Action::new(0.0, -0.6, 0.0))].into();
        while !sim.is_over() {
            let act = if hit_at.is_none() { &left } else { &straight };
            let tr = sim.step(act).unwrap();
            if hit_at.is_none() && tr[0].info.collision != CollisionKind::None {
                hit_at = Some(sim.t());
                assert_eq!(tr[0].info.collision, CollisionKind::RoadEdge);
            }
            if hit_at.is_some() {
                assert_eq!(tr[0].info.collision, CollisionKind::RoadEdge);
            }
        }
        assert!(hit_at.is_some());
    }

    #[test]
    fn heading_rate_is_limited() {
        let s = corridor(vec![straight_object(1, Vec2::new(0.0, 0.0), 0.0, 15.0)]);
        let map = RoadMap::build(&s);
        let d = select_controlled(&s, 20, false, 0);
        let mut sim = Simulation::new(&s, &map, &d, env(SimConfig { remove_on_collision: false, ..cfg() })).unwrap();
        sim.reset().unwrap();
        let mut prev = sim.agent(1).unwrap().state.unwrap().heading;
        for _ in 0..10 {
            sim.step(&[(1, Action::new(0.0, 0.7, 0.0))].into()).unwrap();
            let h = sim.agent(1).unwrap().state.unwrap().heading;
            assert!(min_angle(h, prev) <= MAX_HEADING_RATE * DT + 1e-12);
            prev = h;
        }
    }

    #[test]
    fn warmup_invalid_controlled_is_demoted() {
        let mut o = straight_object(1, Vec2::new(0.0, 0.0), 0.0, 5.0);
        o.expert.valid[4] = false;
        o.expert.positions[4] = Vec2::new(crate::scenario::INVALID_POSITION, crate::scenario::INVALID_POSITION);
        let s = corridor(vec![o]);
        let map = RoadMap::build(&s);
        let d = VehicleDisposition { roles: [(1, Role::Controlled)].into() };
        let mut sim = Simulation::new(&s, &map, &d, env(cfg())).unwrap();
        let w = sim.reset().unwrap();
        assert!(w.history.is_empty());
        assert_eq!(sim.agent(1).unwrap().role, Role::Removed);
    }

    #[test]
    fn flickering_replay_vanishes() {
        let mut o = straight_object(7, Vec2::new(0.0, 0.0), 0.0, 5.0);
        for t in 40..45 {
            o.expert.valid[t] = false;
            o.expert.positions[t] = Vec2::new(crate::scenario::INVALID_POSITION, crate::scenario::INVALID_POSITION);
        }
        let s = corridor(vec![o]);
        let map = RoadMap::build(&s);
        let d = VehicleDisposition::all_replay(&s, false);
        let mut sim = Simulation::new(&s, &map, &d, env(SimConfig { remove_on_goal: false, ..cfg() })).unwrap();
        sim.reset().unwrap();
        while !sim.is_over() {
            sim.advance(&BTreeMap::new()).unwrap();
            let present = sim.frame().index_of(7).is_some();
            assert_eq!(present, !(40..45).contains(&sim.t()));
        }
    }

    #[test]
    fn determinism() {
        let s = corridor(vec![
            straight_object(1, Vec2::new(0.0, 0.0), 0.0, 5.0),
            straight_object(2, Vec2::new(10.0, 3.0), 0.0, 6.0),
        ]);
        let map = RoadMap::build(&s);
        let d = select_controlled(&s, 20, false, 3);
        let run = || {
            let mut sim = Simulation::new(&s, &map, &d, env(cfg())).unwrap();
            let w = sim.reset().unwrap();
            let mut log = vec![];
            while !sim.is_over() {
                let acts: BTreeMap<i64, Action> = sim.alive_controlled().into_iter().map(|id| (id, Action::new(0.5, 0.01 * id as f64, 0.3))).collect();
                log.push(sim.step(&acts).unwrap());
            }
            (w, log, sim.agents().to_vec())
        };
        assert_eq!(run(), run());
    }
}
