//! Per-vehicle policy assignment and the episode runner.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dynamics::{Action, ActionGrid, KinState};
use crate::obs::Observation;
use crate::scenario::VehicleDisposition;
use crate::sim::{Control, SimError, Simulation, Transition};

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("controlled vehicle {0} has no policy")]
    Unmapped(i64),
    #[error("vehicle {0} is not controlled")]
    NotControlled(i64),
    #[error("unknown policy `{0}`; expected replay, random, or constant(accel,steer)")]
    UnknownPolicy(String),
    #[error("bad action grid: {0}")]
    Grid(String),
}

/// What a policy sees when asked for an action.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext<'s> {
    pub id: i64,
    pub t: usize,
    pub state: Option<KinState>,
    pub observation: Option<&'s Observation>,
}

pub trait Policy: Send {
    fn act(&mut self, ctx: &PolicyContext<'_>) -> Control;
}

/// Follows the stored trajectory.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpertPolicy;

impl Policy for ExpertPolicy {
    fn act(&mut self, _: &PolicyContext<'_>) -> Control {
        Control::Expert
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub Action);

impl Policy for ConstantPolicy {
    fn act(&mut self, _: &PolicyContext<'_>) -> Control {
        Control::Act(self.0)
    }
}

/// Uniform draws from the action grid with its own seeded stream.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    actions: Vec<Action>,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(grid: &ActionGrid, seed: u64) -> Result<Self, PolicyError> {
        let actions = grid.actions().map_err(|e| PolicyError::Grid(e.to_string()))?;
        if actions.is_empty() {
            return Err(PolicyError::Grid("empty grid".into()));
        }
        Ok(RandomPolicy { actions, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn sample(&mut self) -> Action {
        self.actions[self.rng.gen_range(0..self.actions.len())]
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _: &PolicyContext<'_>) -> Control {
        Control::Act(self.sample())
    }
}

/// Seed of vehicle `id`'s private stream under a run seed.
pub fn vehicle_seed(seed: u64, id: i64) -> u64 {
    seed ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// A built-in policy chosen by name: `replay`, `random`, or
/// `constant(accel,steer)` (also `constant:accel,steer`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicySpec {
    Replay,
    Random,
    Constant(Action),
}

impl PolicySpec {
    pub fn parse(name: &str) -> Result<PolicySpec, PolicyError> {
        let bad = || PolicyError::UnknownPolicy(name.to_string());
        let n = name.trim();
        match n {
            "replay" | "expert" => return Ok(PolicySpec::Replay),
            "random" => return Ok(PolicySpec::Random),
            _ => {}
        }
        let args = n
            .strip_prefix("constant(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| n.strip_prefix("constant:"))
            .ok_or_else(bad)?;
        let vals: Vec<f64> = args.split(',').map(|v| v.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
        match vals[..] {
            [a, d] => Ok(PolicySpec::Constant(Action::new(a, d, 0.0))),
            [a, d, tilt] => Ok(PolicySpec::Constant(Action::new(a, d, tilt))),
            _ => Err(bad()),
        }
    }

    pub fn build(&self, grid: &ActionGrid, seed: u64, id: i64) -> Result<Box<dyn Policy>, PolicyError> {
        Ok(match *self {
            PolicySpec::Replay => Box::new(ExpertPolicy),
            PolicySpec::Random => Box::new(RandomPolicy::new(grid, vehicle_seed(seed, id))?),
            PolicySpec::Constant(a) => Box::new(ConstantPolicy(a)),
        })
    }
}

/// Queries each controlled vehicle's own policy every step.
pub struct Runner {
    policies: BTreeMap<i64, Box<dyn Policy>>,
}

/// Binds policies to controlled vehicles; every controlled vehicle must
/// have one and no other vehicle may.
pub fn assign_policies(disposition: &VehicleDisposition, policies: BTreeMap<i64, Box<dyn Policy>>) -> Result<Runner, PolicyError> {
    let controlled = disposition.controlled();
    if let Some(&id) = controlled.iter().find(|id| !policies.contains_key(id)) {
        return Err(PolicyError::Unmapped(id));
    }
    if let Some(&id) = policies.keys().find(|id| !controlled.contains(id)) {
        return Err(PolicyError::NotControlled(id));
    }
    Ok(Runner { policies })
}

impl Runner {
    /// Same built-in policy for every controlled vehicle.
    pub fn uniform(disposition: &VehicleDisposition, spec: PolicySpec, grid: &ActionGrid, seed: u64) -> Result<Runner, PolicyError> {
        let policies = disposition
            .controlled()
            .into_iter()
            .map(|id| Ok((id, spec.build(grid, seed, id)?)))
            .collect::<Result<_, PolicyError>>()?;
        assign_policies(disposition, policies)
    }

    /// Resets the simulation and steps it to the end of the horizon.
    /// Returns the transitions of every control step.
    pub fn run_episode(&mut self, sim: &mut Simulation<'_>) -> Result<Vec<Vec<Transition>>, SimError> {
        let warm = sim.reset()?;
        let mut last: BTreeMap<i64, Observation> = warm.observations;
        let mut log = Vec::new();
        while !sim.is_over() {
            let mut controls = BTreeMap::new();
            for id in sim.alive_controlled() {
                let ctx = PolicyContext { id, t: sim.t(), state: sim.agent(id).and_then(|a| a.state), observation: last.get(&id) };
                let policy = self.policies.get_mut(&id).expect("assigned at construction; demoted vehicles are not alive");
                controls.insert(id, policy.act(&ctx));
            }
            let transitions = sim.step_with(&controls)?;
            last = transitions.iter().filter_map(|t| Some((t.id, t.observation.clone()?))).collect();
            log.push(transitions);
        }
        Ok(log)
    }
}
