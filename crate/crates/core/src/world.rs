//! Shared domain types: vehicles, road geometry, simulation clock and the
//! validated run configuration.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Geometry of the simulated motorway segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadConfig {
    /// Number of lanes, 2 or 3. Lane 1 is the leftmost lane.
    #[serde(default = "default_lanes")]
    pub lanes: usize,
    #[serde(default = "default_lane_width")]
    pub lane_width_m: f64,
    #[serde(default = "default_length")]
    pub length_m: f64,
    #[serde(default = "default_speed_limit")]
    pub speed_limit_ms: f64,
}

fn default_lanes() -> usize {
    3
}
fn default_lane_width() -> f64 {
    3.5
}
fn default_length() -> f64 {
    10_000.0
}
fn default_speed_limit() -> f64 {
    36.11 // 130 km/h
}

impl Default for RoadConfig {
    fn default() -> Self {
        RoadConfig {
            lanes: default_lanes(),
            lane_width_m: default_lane_width(),
            length_m: default_length(),
            speed_limit_ms: default_speed_limit(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleKind {
    Ego,
    Traffic,
}

/// Who currently produces the vehicle's acceleration command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlledBy {
    InternalModel,
    StmPlugin,
}

pub type VehicleId = u64;

/// Kinematic record of one driver-vehicle unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub kind: VehicleKind,
    /// Lane index 1..=lane_count, 1 = leftmost.
    pub lane: usize,
    /// Longitudinal position of the front bumper in meters along the road.
    pub s: f64,
    /// Lateral offset from the current lane center, meters. Positive toward
    /// higher lane indices (to the right).
    pub y_lat: f64,
    /// Speed in m/s, never negative.
    pub v: f64,
    /// Longitudinal acceleration in m/s^2.
    pub a: f64,
    /// Vehicle length in meters.
    pub len: f64,
    pub controlled_by: ControlledBy,
}

impl VehicleState {
    /// Absolute lateral position of the vehicle center, measured from the
    /// center of lane 1.
    pub fn lateral_center(&self, lane_width: f64) -> f64 {
        (self.lane as f64 - 1.0) * lane_width + self.y_lat
    }

    /// Rear bumper position.
    pub fn rear(&self) -> f64 {
        self.s - self.len
    }
}

/// Fixed-step simulation clock. `t` is always `step_index * dt` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    pub dt: f64,
    pub step_index: u64,
}

impl SimClock {
    pub fn new(dt: f64) -> Self {
        SimClock { dt, step_index: 0 }
    }

    pub fn t(&self) -> f64 {
        self.step_index as f64 * self.dt
    }

    pub fn tick(&mut self) {
        self.step_index += 1;
    }
}

/// Scenario time frame bounds around a trigger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameBounds {
    #[serde(default = "default_frame_lower")]
    pub lower_s: f64,
    #[serde(default = "default_frame_upper")]
    pub upper_s: f64,
}

fn default_frame_lower() -> f64 {
    5.0
}
fn default_frame_upper() -> f64 {
    10.0
}

impl Default for FrameBounds {
    fn default() -> Self {
        FrameBounds {
            lower_s: default_frame_lower(),
            upper_s: default_frame_upper(),
        }
    }
}

/// Parameters of the stress-testing engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StmParameters {
    /// Safety interval times t1 < t2 < t3 in seconds.
    #[serde(default = "default_sit")]
    pub sit_s: [f64; 3],
    /// Fourth interval time defining the outer edge of the third distance
    /// band (the paper never gives a numeric value for it).
    #[serde(default = "default_t_max")]
    pub t_max_s: f64,
    /// Maximum number of triggers per combination mask.
    #[serde(default = "default_n_ct_max")]
    pub n_ct_max: u32,
    #[serde(default)]
    pub frame: FrameBounds,
    /// Target speed that manipulated vehicles brake down to, km/h.
    #[serde(default = "default_v_final")]
    pub v_final_kmh: f64,
}

fn default_sit() -> [f64; 3] {
    [2.0, 4.0, 6.0]
}
fn default_t_max() -> f64 {
    8.0
}
fn default_n_ct_max() -> u32 {
    10
}
fn default_v_final() -> f64 {
    20.0
}

impl Default for StmParameters {
    fn default() -> Self {
        StmParameters {
            sit_s: default_sit(),
            t_max_s: default_t_max(),
            n_ct_max: default_n_ct_max(),
            frame: FrameBounds::default(),
            v_final_kmh: default_v_final(),
        }
    }
}

/// One configuration invariant violation, with the config key that caused it.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{} configuration violation(s):\n{}", .0.len(), format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("  - {x}"))
        .collect::<Vec<_>>()
        .join("\n")
}
