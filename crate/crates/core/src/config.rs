//! One config document for the environment: simulation rules, view cone,
//! action grid, observation layout and execution strategy, plus the
//! benchmark preset that pins the rule values.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ActionGrid, MAX_ACCEL, MAX_HEADING_RATE};
use crate::obs::{LayoutDescription, ObsLayout};
use crate::par::Execution;
use crate::sim::SimConfig;
use crate::visibility::{ViewConfig, DEFAULT_VIEW_ANGLE, DEFAULT_VIEW_DISTANCE};

/// The benchmark preset as shipped.
pub const BENCHMARK_PRESET: &str = include_str!("../presets/benchmark.json");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("benchmark rule violated: {0}")]
    Rule(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvConfig {
    pub sim: SimConfig,
    pub view: ViewConfig,
    pub actions: ActionGrid,
    pub layout: ObsLayout,
    #[serde(default)]
    pub execution: Execution,
}

/// The on-disk document: the config fields plus the derived observation
/// layout, so consumers can parse flat vectors without this crate. A layout
/// block present on input must match the one derived from `layout`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    sim: SimConfig,
    view: ViewConfig,
    actions: ActionGrid,
    layout: ObsLayout,
    #[serde(default)]
    execution: Execution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    observation_layout: Option<serde_json::Value>,
}

fn layout_value(layout: &ObsLayout) -> serde_json::Value {
    let d: LayoutDescription = layout.describe();
    serde_json::to_value(d).expect("layout serializes")
}

impl EnvConfig {
    /// Every rule value fixed for benchmark runs.
    pub fn benchmark() -> EnvConfig {
        EnvConfig::default()
    }

    pub fn validate(&self) -> Result<(), String> {
        self.sim.validate()?;
        self.view.validate()?;
        self.actions.actions().map_err(|e| e.to_string())?;
        Ok(())
    }

    /// Checks the fixed rules of the benchmark: cone size, episode
    /// timing, goal tolerances, reward, and action bounds.
    pub fn check_benchmark_rules(&self) -> Result<(), ConfigError> {
        let rule = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(ConfigError::Rule(msg.to_string())) };
        let reference = SimConfig::default();
        rule(self.view.view_angle == DEFAULT_VIEW_ANGLE, "view cone must be 120 degrees")?;
        rule(self.view.view_distance == DEFAULT_VIEW_DISTANCE, "view distance must be 80 m")?;
        let s = &self.sim;
        rule(s.warmup_steps == reference.warmup_steps && s.horizon == reference.horizon, "episodes are 10 warm-up + 80 control steps")?;
        rule(
            s.goal_pos_tol == reference.goal_pos_tol
                && s.goal_speed_tol == reference.goal_speed_tol
                && s.goal_heading_tol == reference.goal_heading_tol,
            "goal tolerances are 1 m, 1 m/s, 0.3 rad",
        )?;
        rule(
            s.reward_weights == reference.reward_weights && s.speed_normalizer == reference.speed_normalizer && s.goal_bonus == reference.goal_bonus,
            "reward is fixed",
        )?;
        rule(s.max_controlled == reference.max_controlled, "at most 20 controlled vehicles")?;
        rule(s.heading_rate_limit.is_some_and(|r| r <= MAX_HEADING_RATE), "heading may not change faster than 40 degrees per second")?;
        let accel_ok = [self.actions.accel.min, self.actions.accel.max].iter().all(|a| a.abs() <= MAX_ACCEL);
        rule(accel_ok, "acceleration must lie in [-6, 6] m/s^2")?;
        // Tilt bins beyond ±π/2 are accepted: the applied tilt is clamped.
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<EnvConfig, ConfigError> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        let doc: Document = serde_path_to_error::deserialize(de)
            .map_err(|e| ConfigError::Parse { path: e.path().to_string(), message: e.inner().to_string() })?;
        if doc.observation_layout.as_ref().is_some_and(|v| *v != layout_value(&doc.layout)) {
            return Err(ConfigError::Invalid("observation_layout does not match layout".into()));
        }
        let config = EnvConfig { sim: doc.sim, view: doc.view, actions: doc.actions, layout: doc.layout, execution: doc.execution };
        config.validate().map_err(ConfigError::Invalid)?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EnvConfig, ConfigError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        EnvConfig::from_json(&bytes)
    }

    /// Pretty JSON including the derived observation layout block.
    pub fn to_json(&self) -> String {
        let doc = Document {
            sim: self.sim,
            view: self.view,
            actions: self.actions,
            layout: self.layout,
            execution: self.execution,
            observation_layout: Some(layout_value(&self.layout)),
        };
        serde_json::to_string_pretty(&doc).expect("config serializes") + "\n"
    }
}
