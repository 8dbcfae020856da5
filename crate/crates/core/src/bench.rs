//! Steps-per-second harness for the two benchmark procedures.
//!
//! Single-agent: every vehicle is controllable; each step one random agent
//! builds its observation and takes a random action while the rest follow
//! expert data. Multi-agent: every controlled agent observes and acts each
//! step. Timings cover observation construction plus dynamics; index
//! builds for the static map are excluded.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EnvConfig;
use crate::dynamics::Action;
use crate::map::RoadMap;
use crate::par::Execution;
use crate::scenario::{Role, Scenario, VehicleDisposition};
use crate::sim::{Control, SimError, Simulation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    Single,
    Multi,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no scenarios to benchmark")]
    Empty,
    #[error("repeats must be at least 1")]
    NoRepeats,
    #[error("scenario {0} has no vehicle present at step 0")]
    NoVehicles(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Controlled agents (multi mode) or vehicles in the scene (single mode).
    pub agents: usize,
    pub sps_mean: f64,
    pub sps_std: f64,
    /// Mean wall time of one step, seconds.
    pub step_time_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub mode: BenchMode,
    pub scenarios: usize,
    pub repeats: usize,
    pub steps_per_repeat: usize,
    pub sps_mean: f64,
    /// Population standard deviation of the per-repeat SPS values.
    pub sps_std: f64,
    pub sps_per_repeat: Vec<f64>,
    pub curve: Vec<CurvePoint>,
    /// Digest of every final state; identical for identical seeds.
    pub checksum: String,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Least-squares line through the points: (slope, intercept, R²).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

/// Every vehicle present at step 0 controlled; everything else removed.
pub fn all_controlled(scenario: &Scenario) -> VehicleDisposition {
    let roles = scenario
        .objects
        .iter()
        .map(|o| (o.id, if o.is_vehicle() && o.expert.is_valid(0) { Role::Controlled } else { Role::Removed }))
        .collect();
    VehicleDisposition { roles }
}

/// The first `k` controllable vehicles (by id) controlled, other vehicles
/// replayed.
pub fn first_k_controlled(scenario: &Scenario, k: usize) -> VehicleDisposition {
    let mut d = all_controlled(scenario);
    for (_, role) in d.roles.iter_mut().filter(|(_, r)| **r == Role::Controlled).skip(k) {
        *role = Role::ExpertReplay;
    }
    d
}

fn bench_config(execution: Execution) -> EnvConfig {
    let mut cfg = EnvConfig::benchmark();
    cfg.sim.remove_on_goal = false;
    cfg.sim.remove_on_collision = false;
    cfg.execution = execution;
    cfg
}

/// FNV-1a step over the bytes of `v`.
fn fold(h: &mut u64, v: u64) {
    for b in v.to_le_bytes() {
        *h ^= b as u64;
        *h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
}

fn digest(sim: &Simulation<'_>, h: &mut u64) {
    for a in sim.agents() {
        for bits in a.state.map_or([0; 3], |s| [s.position.x.to_bits(), s.position.y.to_bits(), s.heading.to_bits()]) {
            fold(h, bits);
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

struct Prepared<'s> {
    scenario: &'s Scenario,
    map: RoadMap,
    disposition: VehicleDisposition,
}

/// Runs one full episode (all 90 steps) of the chosen procedure and
/// returns (steps, time spent stepping).
fn run_once(p: &Prepared<'_>, mode: BenchMode, cfg: EnvConfig, rng: &mut ChaCha8Rng, actions: &[Action], h: &mut u64) -> Result<(usize, Duration), BenchError> {
    let mut sim = Simulation::new(p.scenario, &p.map, &p.disposition, cfg)?;
    let mut steps = 0;
    let mut elapsed = Duration::ZERO;
    while !sim.is_over() {
        let ids = sim.alive_controlled();
        let start = Instant::now();
        let mut controls = BTreeMap::new();
        match mode {
            BenchMode::Single => {
                let present: Vec<i64> = ids.into_iter().filter(|&id| sim.agent(id).is_some_and(|a| a.is_present())).collect();
                if !present.is_empty() {
                    let id = present[rng.gen_range(0..present.len())];
                    let obs = sim.observe(id).expect("present");
                    std::hint::black_box(&obs);
                    controls.insert(id, Control::Act(actions[rng.gen_range(0..actions.len())]));
                }
            }
            BenchMode::Multi => {
                let obs = sim.observe_all();
                std::hint::black_box(&obs);
                for id in obs.into_keys() {
                    controls.insert(id, Control::Act(actions[rng.gen_range(0..actions.len())]));
                }
            }
        }
        sim.advance(&controls)?;
        elapsed += start.elapsed();
        steps += 1;
    }
    digest(&sim, h);
    Ok((steps, elapsed))
}

/// Benchmarks `scenarios` with the given procedure, `repeats` times.
pub fn run_bench(scenarios: &[Scenario], mode: BenchMode, repeats: usize, seed: u64, execution: Execution) -> Result<BenchResult, BenchError> {
    if scenarios.is_empty() {
        return Err(BenchError::Empty);
    }
    if repeats == 0 {
        return Err(BenchError::NoRepeats);
    }
    let actions = EnvConfig::benchmark().actions.actions().map_err(|e| SimError::Config(e.to_string()))?;
    let prepared: Vec<Prepared<'_>> = scenarios
        .iter()
        .map(|s| {
            let disposition = all_controlled(s);
            if disposition.controlled().is_empty() {
                return Err(BenchError::NoVehicles(s.name.clone()));
            }
            Ok(Prepared { scenario: s, map: RoadMap::build(s), disposition })
        })
        .collect::<Result<_, _>>()?;

    // Scenarios fan out across workers; a single scenario may instead
    // parallelise observation builds within each step.
    let inner = bench_config(if prepared.len() > 1 { Execution::Sequential } else { execution });
    let indices: Vec<usize> = (0..prepared.len()).collect();
    let mut h = FNV_OFFSET;
    let mut sps = Vec::with_capacity(repeats);
    let mut steps_per_repeat = 0;
    // Per scene vehicle count: (steps, stepping time) of every run.
    let mut by_count: BTreeMap<usize, Vec<(usize, Duration)>> = BTreeMap::new();
    for r in 0..repeats {
        let start = Instant::now();
        let runs = execution.map(&indices, |&i| {
            // Each scenario gets its own stream, independent of scheduling.
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((r as u64) << 32 | i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut digest_h = FNV_OFFSET;
            run_once(&prepared[i], mode, inner, &mut rng, &actions, &mut digest_h).map(|(s, t)| (s, t, digest_h))
        });
        let wall = start.elapsed();
        let mut steps = 0;
        for (p, run) in prepared.iter().zip(runs) {
            let (s, t, d) = run?;
            steps += s;
            fold(&mut h, d);
            by_count.entry(p.disposition.controlled().len()).or_default().push((s, t));
        }
        steps_per_repeat = steps;
        sps.push(steps as f64 / wall.as_secs_f64().max(1e-12));
    }
    let (sps_mean, sps_std) = mean_std(&sps);
    let curve = by_count
        .into_iter()
        .map(|(agents, runs)| {
            let rates: Vec<f64> = runs.iter().map(|(s, t)| *s as f64 / t.as_secs_f64().max(1e-12)).collect();
            let (m, sd) = mean_std(&rates);
            let (steps, time) = runs.iter().fold((0, 0.0), |(a, b), (s, t)| (a + s, b + t.as_secs_f64()));
            CurvePoint { agents, sps_mean: m, sps_std: sd, step_time_mean: time / steps as f64 }
        })
        .collect();
    Ok(BenchResult { mode, scenarios: scenarios.len(), repeats, steps_per_repeat, sps_mean, sps_std, sps_per_repeat: sps, curve, checksum: format!("{h:016x}") })
}

/// Multi-agent step time as a function of controlled-agent count on one
/// scene: for each count, `steps` steps starting after the warm-up.
pub fn scaling_curve(scenario: &Scenario, counts: &[usize], steps: usize, repeats: usize, seed: u64, execution: Execution) -> Result<Vec<CurvePoint>, BenchError> {
    let map = RoadMap::build(scenario);
    let cfg = bench_config(execution);
    let actions = cfg.actions.actions().map_err(|e| SimError::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(counts.len());
    for &k in counts {
        let d = first_k_controlled(scenario, k);
        let mut rates = Vec::with_capacity(repeats);
        let mut total = Duration::ZERO;
        let mut total_steps = 0;
        for r in 0..repeats.max(1) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
            let mut sim = Simulation::new(scenario, &map, &d, cfg)?;
            sim.reset()?;
            let mut elapsed = Duration::ZERO;
            let mut n = 0;
            while n < steps && !sim.is_over() {
                let start = Instant::now();
                let obs = sim.observe_all();
                std::hint::black_box(&obs);
                let controls = obs.into_keys().map(|id| (id, Control::Act(actions[rng.gen_range(0..actions.len())]))).collect();
                sim.advance(&controls)?;
                elapsed += start.elapsed();
                n += 1;
            }
            rates.push(n as f64 / elapsed.as_secs_f64().max(1e-12));
            total += elapsed;
            total_steps += n;
        }
        let (m, sd) = mean_std(&rates);
        out.push(CurvePoint { agents: d.controlled().len(), sps_mean: m, sps_std: sd, step_time_mean: total.as_secs_f64() / total_steps.max(1) as f64 });
    }
    Ok(out)
}
