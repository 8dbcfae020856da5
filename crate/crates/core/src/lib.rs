//! A 2D partially observable multi-agent driving simulator: polyline maps,
//! replayed and controlled vehicles, occluded view-cone observations, and
//! goal/collision/displacement scoring.

pub mod bench;
pub mod config;
pub mod corpus;
pub mod dynamics;
pub mod geom;
pub mod map;
pub mod metrics;
pub mod obs;
pub mod par;
pub mod policy;
pub mod scenario;
pub mod sim;
pub mod spatial;
pub mod synth;
pub mod visibility;

pub use config::EnvConfig;
pub use dynamics::{Action, ActionGrid, KinState};
pub use geom::{Aabb, Cone, OrientedBox, Segment, Vec2};
pub use map::RoadMap;
pub use obs::{ObsLayout, Observation};
pub use par::Execution;
pub use scenario::{Role, Scenario, VehicleDisposition};
pub use sim::{Control, SimConfig, Simulation};
pub use visibility::ViewConfig;
