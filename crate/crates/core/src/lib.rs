//! Microscopic highway traffic simulation with a stress-testing driver model
//! that provokes critical scenarios around an ego vehicle under test.
//!
//! Module map:
//! - [`world`]: shared domain types (vehicles, road, clock).
//! - [`config`]: validated TOML run configuration.
//! - [`traffic`]: background flow, car following and the ego controller.
//! - [`injector`]: the external driver-model plugin protocol.
//! - [`stm`]: the stress-testing engine and its plugin implementation.
//! - [`maneuvers`]: braking and lane-change behavior models.
//! - [`evaluation`]: criticality metrics and run comparison.

pub mod config;
pub mod evaluation;
pub mod injector;
pub mod maneuvers;
pub mod stm;
pub mod traffic;
pub mod world;

pub use config::{BrakingConfig, RunConfig, SimConfig};
pub use evaluation::{CriticalityLevel, CriticalityThresholds, RunSummary};
pub use injector::{InjectorPlugin, InjectorSettings, NeighborView, VehicleCommand};
pub use stm::{BrakeModel, ScenarioRecord, StmPlugin};
pub use traffic::{EgoControllerParams, SpawnMode, StepReport, TrafficDemand, World};
pub use world::{
    ConfigError, ControlledBy, RoadConfig, SimClock, StmParameters, VehicleId, VehicleKind,
    VehicleState,
};
