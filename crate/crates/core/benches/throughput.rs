//! Sequential versus parallel execution of the three fan-out points:
//! per-agent observation builds within a step, whole-episode rollouts
//! across scenarios, and corpus validation across files.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use drivesim::bench::{all_controlled, run_bench, BenchMode};
use drivesim::corpus::{scenario_files, validate_files};
use drivesim::synth::{benchmark_scene, corridor_scene, planted_audit_corpus, CorridorSpec};
use drivesim::{EnvConfig, Execution, RoadMap, Simulation};

const STRATEGIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn observe_all(c: &mut Criterion) {
    let scene = benchmark_scene(0);
    let map = RoadMap::build(&scene);
    let d = all_controlled(&scene);
    let mut group = c.benchmark_group("observe_all_30_agents");
    for (name, exec) in STRATEGIES {
        let mut cfg = EnvConfig::benchmark();
        cfg.sim.max_controlled = usize::MAX;
        cfg.execution = exec;
        let mut sim = Simulation::new(&scene, &map, &d, cfg).unwrap();
        sim.reset().unwrap();
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| sim.observe_all()));
    }
    group.finish();
}

fn rollouts(c: &mut Criterion) {
    let scenes: Vec<_> = (0..4).map(|k| corridor_scene(&format!("c{k}"), &CorridorSpec { vehicles: 10, road_points: 4000, seed: k, ..CorridorSpec::benchmark() })).collect();
    let mut group = c.benchmark_group("multi_agent_episodes_4_scenes");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run_bench(&scenes, BenchMode::Multi, 1, 0, exec).unwrap()));
    }
    group.finish();
}

fn validation(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    for s in planted_audit_corpus(0) {
        s.save(dir.path().join(format!("{}.json", s.name))).unwrap();
    }
    let files = scenario_files(dir.path()).unwrap();
    let mut group = c.benchmark_group("validate_10_files");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| validate_files(&files, exec)));
    }
    group.finish();
}

criterion_group!(benches, observe_all, rollouts, validation);
criterion_main!(benches);
