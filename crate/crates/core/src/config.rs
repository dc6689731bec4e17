//! Run configuration: TOML parsing with full-default round-tripping and
//! invariant validation that reports every violation at once.

use crate::evaluation::CriticalityThresholds;
use crate::maneuvers::{AccBrakeParams, DriverBrakeParams, LceParams, EMERGENCY_DECEL_LIMIT};
use crate::stm::BrakeModel;
use crate::traffic::{EgoControllerParams, TrafficDemand};
use crate::world::{ConfigError, RoadConfig, StmParameters, Violation};
use serde::{Deserialize, Serialize};

/// Braking behavior selection plus the parameters of both models in one
/// section; only the selected model's parameters are used at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BrakingConfig {
    #[serde(default = "default_model")]
    pub model: BrakeModel,
    #[serde(flatten, default)]
    pub driver: DriverBrakeParams,
    #[serde(flatten, default)]
    pub acc: AccBrakeParams,
}

fn default_model() -> BrakeModel {
    BrakeModel::Driver
}

impl Default for BrakeModel {
    fn default() -> Self {
        BrakeModel::Driver
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_km")]
    pub km: f64,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
}

fn default_seed() -> u64 {
    1
}
fn default_km() -> f64 {
    200.0
}
fn default_dt() -> f64 {
    0.1
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: default_seed(),
            km: default_km(),
            dt_s: default_dt(),
        }
    }
}

/// Complete run configuration. Every field has a default, so the empty
/// string parses to the default configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SimConfig {
    #[serde(default)]
    pub road: RoadConfig,
    #[serde(default)]
    pub traffic: TrafficDemand,
    #[serde(default)]
    pub ego: EgoControllerParams,
    #[serde(default)]
    pub stm: StmParameters,
    #[serde(default)]
    pub braking: BrakingConfig,
    #[serde(default)]
    pub lce: LceParams,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub thresholds: CriticalityThresholds,
}

/// Plausible range of the driver braking duration, seconds.
pub const T_D_RANGE_S: (f64, f64) = (10.1, 17.2);

impl SimConfig {
    /// Parse and validate. Validation collects all violations instead of
    /// stopping at the first.
    pub fn from_toml(text: &str) -> Result<SimConfig, ConfigError> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v: Vec<Violation> = Vec::new();
        let mut check = |ok: bool, key: &str, msg: &str| {
            if !ok {
                v.push(Violation {
                    key: key.to_string(),
                    message: msg.to_string(),
                });
            }
        };

        check(
            self.road.lanes == 2 || self.road.lanes == 3,
            "road.lanes",
            "lane_count must be 2 or 3",
        );
        check(self.road.lane_width_m > 0.0, "road.lane_width_m", "must be positive");
        check(self.road.length_m > 0.0, "road.length_m", "must be positive");
        check(
            self.road.speed_limit_ms > 0.0,
            "road.speed_limit_ms",
            "must be positive",
        );

        check(
            self.traffic.inflow_per_lane_veh_h > 0.0,
            "traffic.inflow_per_lane_veh_h",
            "must be positive",
        );
        check(
            self.traffic.desired_speed_mean_ms > 0.0,
            "traffic.desired_speed_mean_ms",
            "must be positive",
        );
        check(
            self.traffic.desired_speed_sd_ms >= 0.0,
            "traffic.desired_speed_sd_ms",
            "must be non-negative",
        );

        check(self.ego.time_gap_s > 0.0, "ego.time_gap_s", "must be positive");
        check(
            self.ego.acc_max_decel_ms2 > 0.0,
            "ego.acc_max_decel_ms2",
            "must be positive",
        );
        check(
            self.ego.acc_max_decel_ms2 <= self.ego.emergency_decel_ms2,
            "ego.acc_max_decel_ms2",
            "must not exceed the emergency deceleration",
        );
        check(
            self.ego.emergency_decel_ms2 <= EMERGENCY_DECEL_LIMIT,
            "ego.emergency_decel_ms2",
            "must not exceed 8.5",
        );
        check(
            self.ego.acc_max_accel_ms2 > 0.0,
            "ego.acc_max_accel_ms2",
            "must be positive",
        );
        check(
            self.ego.desired_speed_ms > 0.0,
            "ego.desired_speed_ms",
            "must be positive",
        );

        let s = self.stm.sit_s;
        check(
            s[0] > 0.0 && s[0] < s[1] && s[1] < s[2],
            "stm.sit_s",
            "sit not strictly increasing",
        );
        check(
            self.stm.t_max_s > s[2],
            "stm.t_max_s",
            "must exceed the largest safety interval time",
        );
        check(self.stm.n_ct_max >= 1, "stm.n_ct_max", "must be at least 1");
        check(
            self.stm.frame.lower_s >= 0.0,
            "stm.frame.lower_s",
            "must be non-negative",
        );
        check(
            self.stm.frame.upper_s > 0.0,
            "stm.frame.upper_s",
            "must be positive",
        );
        check(
            self.stm.v_final_kmh >= 0.0,
            "stm.v_final_kmh",
            "must be non-negative",
        );

        check(
            self.braking.driver.a_peak_ms2 < 0.0
                && self.braking.driver.a_peak_ms2 >= -EMERGENCY_DECEL_LIMIT,
            "braking.a_peak_ms2",
            "must be negative and not below -8.5",
        );
        check(
            (T_D_RANGE_S.0..=T_D_RANGE_S.1).contains(&self.braking.driver.t_d_s),
            "braking.t_d_s",
            "must lie within the observed braking duration range 10.1..17.2 s",
        );
        check(
            self.braking.driver.shape_m > 0.0,
            "braking.shape_m",
            "must be positive",
        );
        check(self.braking.acc.a1_ms2 < 0.0, "braking.a1_ms2", "must be negative");
        check(
            self.braking.acc.a0_ms2 <= 0.0 && self.braking.acc.a0_ms2 > self.braking.acc.a1_ms2,
            "braking.a0_ms2",
            "must be non-positive and above a1",
        );
        check(self.braking.acc.jerk_ms3 > 0.0, "braking.jerk_ms3", "must be positive");

        check(self.lce.t_m_s > 0.0, "lce.t_m_s", "must be positive");
        check(self.lce.h_m > 0.0, "lce.h_m", "must be positive");
        check(self.lce.a_max_ms2 >= 0.0, "lce.a_max_ms2", "must be non-negative");
        check(
            self.lce.t_int_min_s >= 0.0,
            "lce.t_int_min_s",
            "must be non-negative",
        );
        check(
            self.lce.init_times_s.iter().all(|&t| t >= 0.0)
                && self.lce.init_times_s.windows(2).all(|w| w[0] <= w[1]),
            "lce.init_times_s",
            "must be non-negative and sorted",
        );

        check(self.run.km > 0.0, "run.km", "must be positive");
        check(
            self.run.dt_s > 0.0 && self.run.dt_s <= 0.5,
            "run.dt_s",
            "must lie in (0, 0.5]",
        );

        check(
            self.thresholds.ttb_very_s > 0.0
                && self.thresholds.ttb_very_s < self.thresholds.ttb_eventually_s,
            "thresholds.ttb_very_s",
            "must be positive and below the eventually-critical bound",
        );
        check(
            self.thresholds.req_decel_eventually_ms2 > 0.0
                && self.thresholds.req_decel_eventually_ms2 < self.thresholds.req_decel_very_ms2,
            "thresholds.req_decel_eventually_ms2",
            "must be positive and below the very-critical bound",
        );

        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }
}
