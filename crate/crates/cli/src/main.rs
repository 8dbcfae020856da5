//! `drivesim`: benchmark, validate, roll out, and render driving scenarios.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use drivesim::bench::{run_bench, BenchMode};
use drivesim::corpus::{resolve, validate_files};
use drivesim::metrics::{aggregate, episode_report, EpisodeReport, VehicleReport};
use drivesim::obs::{rasterize, RasterView};
use drivesim::policy::{PolicySpec, Runner};
use drivesim::scenario::{select_controlled, Role, Scenario, VehicleDisposition};
use drivesim::sim::{Control, Simulation};
use drivesim::synth::{benchmark_scene, corridor_scene, planted_audit_corpus, CorridorSpec};
use drivesim::{EnvConfig, Execution, RoadMap};

#[derive(Parser)]
#[command(name = "drivesim", version, about = "Partially observable multi-agent driving simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure steps per second on a scenario directory.
    Bench(BenchArgs),
    /// Check scenario files and report data-quality statistics.
    Validate(ValidateArgs),
    /// Run full episodes with a built-in policy and write a report.
    Rollout(RolloutArgs),
    /// Draw one vehicle's view at a given step as a PNG.
    Render(RenderArgs),
    /// Write synthetic scenarios.
    Synth(SynthArgs),
    /// Print the environment config, including the observation layout.
    Config(ConfigArgs),
}

#[derive(Args)]
struct Common {
    /// Output path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for fanning out across scenarios.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Single,
    Multi,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    scenarios: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Single)]
    mode: Mode,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ValidateArgs {
    /// A scenario file or a directory of them.
    #[arg(long, alias = "scenario")]
    scenarios: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RolloutArgs {
    /// A scenario file or a directory of them.
    #[arg(long, alias = "scenario")]
    scenarios: PathBuf,
    /// replay, random, constant(accel,steer), or stdin (one JSON object of
    /// id -> action per control step; single scenario only).
    #[arg(long, default_value = "replay")]
    policy: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep vehicles in the scene after goals and collisions.
    #[arg(long)]
    no_removal: bool,
    /// Environment config file; defaults to the benchmark preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum View {
    Cone,
    Full,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long, alias = "scenarios")]
    scenario: PathBuf,
    #[arg(long, default_value_t = 10)]
    step: usize,
    #[arg(long)]
    ego: i64,
    #[arg(long, value_enum, default_value_t = View::Cone)]
    view: View,
    #[arg(long, default_value_t = 0.0)]
    tilt: f64,
    #[arg(long, default_value_t = 400)]
    size: usize,
    #[arg(long, default_value_t = 0.5)]
    meters_per_px: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// One 30-vehicle, 16,000-point corridor scene.
    Bench,
    /// Ten scenes, 100 vehicles, with 3 infeasible goals and 2 initial collisions.
    Audit,
    /// One corridor scene with the given vehicle count.
    Corridor,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthKind::Bench)]
    kind: SynthKind,
    #[arg(long, default_value_t = 30)]
    vehicles: usize,
    #[arg(long, default_value_t = 16_000)]
    road_points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory to write into.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file to echo back; defaults to the benchmark preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().context("building worker pool")
}

fn execution_for(workers: usize) -> Execution {
    if workers > 1 {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

fn load_all(path: &Path) -> Result<Vec<Scenario>> {
    let files = resolve(path).with_context(|| format!("reading {}", path.display()))?;
    if files.is_empty() {
        bail!("no scenario files in {}", path.display());
    }
    files.iter().map(|f| Scenario::load(f).with_context(|| format!("loading {}", f.display()))).collect()
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let scenarios = load_all(&a.scenarios)?;
    let mode = match a.mode {
        Mode::Single => BenchMode::Single,
        Mode::Multi => BenchMode::Multi,
    };
    let exec = execution_for(a.common.workers);
    let result = pool(a.common.workers)?.install(|| run_bench(&scenarios, mode, a.repeats, a.seed, exec))?;
    log::info!("{:?} mode: {:.0} ± {:.0} SPS", mode, result.sps_mean, result.sps_std);
    write_output(a.common.out.as_deref(), &to_json(&result)?)
}

fn cmd_validate(a: ValidateArgs) -> Result<bool> {
    let files = resolve(&a.scenarios).with_context(|| format!("reading {}", a.scenarios.display()))?;
    if files.is_empty() {
        bail!("no scenario files in {}", a.scenarios.display());
    }
    let exec = execution_for(a.common.workers);
    let report = pool(a.common.workers)?.install(|| validate_files(&files, exec));
    for f in files.iter().zip(&report.files).filter_map(|(p, r)| r.error.as_ref().map(|e| (p, e))) {
        log::error!("{}: {}", f.0.display(), f.1);
    }
    write_output(a.common.out.as_deref(), &to_json(&report)?)?;
    Ok(report.schema_failures == 0)
}

#[derive(Serialize)]
struct RolloutReport {
    policy: String,
    seed: u64,
    removal: bool,
    episodes: Vec<EpisodeReport>,
    controlled: Option<drivesim::metrics::Aggregate>,
    all: Option<drivesim::metrics::Aggregate>,
}

fn env_config(path: Option<&Path>, no_removal: bool) -> Result<EnvConfig> {
    let mut cfg = match path {
        Some(p) => EnvConfig::load(p)?,
        None => EnvConfig::benchmark(),
    };
    if no_removal {
        cfg.sim.remove_on_goal = false;
        cfg.sim.remove_on_collision = false;
    }
    // Scenarios already fan out across workers.
    cfg.execution = Execution::Sequential;
    Ok(cfg)
}

fn rollout_one(s: &Scenario, spec: PolicySpec, cfg: EnvConfig, seed: u64) -> Result<EpisodeReport> {
    let map = RoadMap::build(s);
    let d = select_controlled(s, cfg.sim.max_controlled, cfg.sim.include_vru, seed);
    let mut runner = Runner::uniform(&d, spec, &cfg.actions, seed)?;
    let mut sim = Simulation::new(s, &map, &d, cfg)?;
    runner.run_episode(&mut sim).with_context(|| format!("scenario {}", s.name))?;
    Ok(episode_report(&sim))
}

/// Actions for every alive controlled vehicle read from stdin, one JSON
/// object per control step: `{"<id>": {"accel": a, "steer": d, "head_tilt": t}}`
/// or `{"<id>": "expert"}`. Every alive controlled vehicle needs an entry.
fn rollout_stdin(s: &Scenario, cfg: EnvConfig, seed: u64) -> Result<EpisodeReport> {
    let map = RoadMap::build(s);
    let d: VehicleDisposition = select_controlled(s, cfg.sim.max_controlled, cfg.sim.include_vru, seed);
    let mut sim = Simulation::new(s, &map, &d, cfg)?;
    sim.reset()?;
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    while !sim.is_over() {
        let line = match lines.next() {
            Some(l) => l?,
            None => bail!("standard input ended at step {}", sim.t()),
        };
        let raw: BTreeMap<i64, serde_json::Value> = serde_json::from_str(&line).with_context(|| format!("step {}: bad action line", sim.t()))?;
        // Entries for vehicles already removed are ignored; a writer that
        // cannot see the simulation may keep sending them.
        let alive = sim.alive_controlled();
        let mut controls = BTreeMap::new();
        for (id, v) in raw.into_iter().filter(|(id, _)| alive.contains(id)) {
            let c = if v.as_str() == Some("expert") { Control::Expert } else { Control::Act(serde_json::from_value(v)?) };
            controls.insert(id, c);
        }
        sim.step_with(&controls)?;
    }
    Ok(episode_report(&sim))
}

fn cmd_rollout(a: RolloutArgs) -> Result<()> {
    let cfg = env_config(a.config.as_deref(), a.no_removal)?;
    let scenarios = load_all(&a.scenarios)?;
    let episodes: Vec<EpisodeReport> = if a.policy.trim() == "stdin" {
        if scenarios.len() != 1 {
            bail!("the stdin policy drives exactly one scenario");
        }
        vec![rollout_stdin(&scenarios[0], cfg, a.seed)?]
    } else {
        let spec = PolicySpec::parse(&a.policy)?;
        let seed = a.seed;
        let pool = pool(a.common.workers)?;
        let exec = execution_for(a.common.workers);
        pool.install(|| exec.map(&scenarios, |s| rollout_one(s, spec, cfg, seed).map_err(|e| format!("{e:#}"))))
            .into_iter()
            .collect::<Result<_, String>>()
            .map_err(anyhow::Error::msg)?
    };
    let rows: Vec<VehicleReport> = episodes.iter().flat_map(|e| e.vehicles.iter().cloned()).collect();
    let controlled: Vec<VehicleReport> = rows.iter().filter(|r| r.role == Role::Controlled).cloned().collect();
    let report = RolloutReport {
        policy: a.policy.clone(),
        seed: a.seed,
        removal: !a.no_removal,
        controlled: aggregate(&controlled),
        all: aggregate(&rows),
        episodes,
    };
    write_output(a.common.out.as_deref(), &to_json(&report)?)
}

fn cmd_render(a: RenderArgs) -> Result<()> {
    let s = Scenario::load(&a.scenario)?;
    let map = RoadMap::build(&s);
    let mut cfg = env_config(None, true)?;
    cfg.sim.include_vru = true;
    let d = VehicleDisposition::all_replay(&s, true);
    let mut sim = Simulation::new(&s, &map, &d, cfg)?;
    if a.step > cfg.sim.last_step() {
        bail!("step {} is past the end of the episode ({})", a.step, cfg.sim.last_step());
    }
    while sim.t() < a.step {
        sim.advance(&BTreeMap::new())?;
    }
    let ego = sim.frame().index_of(a.ego).with_context(|| format!("vehicle {} is not present at step {}", a.ego, a.step))?;
    let view = match a.view {
        View::Cone => RasterView::Cone,
        View::Full => RasterView::Full,
    };
    let img = rasterize(sim.frame(), ego, a.tilt, &cfg.view, a.size, a.meters_per_px, view)?;
    img.save_with_format(&a.out, image::ImageFormat::Png).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let scenes = match a.kind {
        SynthKind::Bench => vec![benchmark_scene(a.seed)],
        SynthKind::Audit => planted_audit_corpus(a.seed),
        SynthKind::Corridor => vec![corridor_scene(
            &format!("corridor_{}", a.vehicles),
            &CorridorSpec { vehicles: a.vehicles, road_points: a.road_points, seed: a.seed, ..CorridorSpec::benchmark() },
        )],
    };
    for s in scenes {
        let path = a.out.join(format!("{}.json", s.name));
        s.save(&path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_config(a: ConfigArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => EnvConfig::load(p)?,
        None => EnvConfig::benchmark(),
    };
    if let Err(e) = cfg.check_benchmark_rules() {
        log::warn!("{e}");
    }
    write_output(a.out.as_deref(), cfg.to_json().as_bytes())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(a) => cmd_bench(a).map(|_| true),
        Command::Validate(a) => cmd_validate(a),
        Command::Rollout(a) => cmd_rollout(a).map(|_| true),
        Command::Render(a) => cmd_render(a).map(|_| true),
        Command::Synth(a) => cmd_synth(a).map(|_| true),
        Command::Config(a) => cmd_config(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
