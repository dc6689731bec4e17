//! Behavior models for manipulated vehicles: driver braking, ACC braking
//! under ISO 22179 limits, and the aggressive lane-change maneuver with its
//! event scheduler.

use crate::world::{ControlledBy, VehicleId, VehicleState};
use serde::{Deserialize, Serialize};

pub const KMH_TO_MS: f64 = 1.0 / 3.6;
pub const MS_TO_KMH: f64 = 3.6;

/// Hardest deceleration any driver model is allowed to demand, m/s^2.
pub const EMERGENCY_DECEL_LIMIT: f64 = 8.5;

/// Driver braking: single-peak polynomial deceleration pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverBrakeParams {
    /// Total braking duration, seconds.
    #[serde(default = "default_t_d")]
    pub t_d_s: f64,
    /// Peak deceleration, m/s^2 (negative). When profiles are derived from a
    /// speed delta this acts as a feasibility bound only.
    #[serde(default = "default_a_peak")]
    pub a_peak_ms2: f64,
    /// Skew parameter of the pulse shape.
    #[serde(default = "default_shape_m")]
    pub shape_m: f64,
}

fn default_t_d() -> f64 {
    12.0
}
fn default_a_peak() -> f64 {
    -1.7
}
fn default_shape_m() -> f64 {
    1.0
}

impl Default for DriverBrakeParams {
    fn default() -> Self {
        DriverBrakeParams {
            t_d_s: default_t_d(),
            a_peak_ms2: default_a_peak(),
            shape_m: default_shape_m(),
        }
    }
}

/// ACC braking: parabolic deceleration transitions limited by jerk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccBrakeParams {
    /// Initial deceleration rate, m/s^2.
    #[serde(default)]
    pub a0_ms2: f64,
    /// Final (held) deceleration rate, m/s^2.
    #[serde(default = "default_a1")]
    pub a1_ms2: f64,
    /// Requested jerk bound, m/s^3 (positive magnitude). The effective bound
    /// is additionally capped by the speed-dependent ISO limit.
    #[serde(default = "default_jerk")]
    pub jerk_ms3: f64,
}

fn default_a1() -> f64 {
    -3.0
}
fn default_jerk() -> f64 {
    1.5
}

impl Default for AccBrakeParams {
    fn default() -> Self {
        AccBrakeParams {
            a0_ms2: 0.0,
            a1_ms2: default_a1(),
            jerk_ms3: default_jerk(),
        }
    }
}

/// Lane-change event parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LceParams {
    /// Maneuver time, seconds.
    #[serde(default = "default_t_m")]
    pub t_m_s: f64,
    /// Lateral displacement at the end of the maneuver, meters.
    #[serde(default = "default_h")]
    pub h_m: f64,
    /// Peak longitudinal acceleration during the maneuver, m/s^2.
    #[serde(default = "default_lce_a_max")]
    pub a_max_ms2: f64,
    /// Minimum time between two lane-change events, seconds.
    #[serde(default = "default_t_int_min")]
    pub t_int_min_s: f64,
    /// Initialization times of the first events, seconds since run start.
    #[serde(default = "default_init_times")]
    pub init_times_s: Vec<f64>,
}

fn default_t_m() -> f64 {
    6.0
}
fn default_h() -> f64 {
    3.5
}
fn default_lce_a_max() -> f64 {
    1.2
}
fn default_t_int_min() -> f64 {
    300.0
}
fn default_init_times() -> Vec<f64> {
    vec![120.0]
}

impl Default for LceParams {
    fn default() -> Self {
        LceParams {
            t_m_s: default_t_m(),
            h_m: default_h(),
            a_max_ms2: default_lce_a_max(),
            t_int_min_s: default_t_int_min(),
            init_times_s: default_init_times(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverKind {
    DriverBrake,
    AccBrake,
    LaneChange,
}

/// Lateral movement direction. Lane 1 is leftmost, so `Right` increases the
/// lane index and the lateral offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneChangeDirection {
    Left,
    Right,
}

impl LaneChangeDirection {
    pub fn sign(self) -> f64 {
        match self {
            LaneChangeDirection::Left => -1.0,
            LaneChangeDirection::Right => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    /// Longitudinal acceleration command, m/s^2.
    pub a: f64,
    /// Lateral displacement since maneuver start, meters (signed).
    pub y_lat: f64,
    /// Lateral velocity, m/s (signed).
    pub y_lat_rate: f64,
}

/// A time-indexed command sequence produced by one of the behavior models.
/// Samples are spaced `dt` apart starting at t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverProfile {
    pub kind: ManeuverKind,
    pub dt: f64,
    pub duration_s: f64,
    pub samples: Vec<ProfileSample>,
}

impl ManeuverProfile {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_at_step(&self, step: usize) -> Option<&ProfileSample> {
        self.samples.get(step)
    }

    /// Speed change obtained by integrating the acceleration samples
    /// (trapezoidal rule).
    pub fn integrated_delta_v(&self) -> f64 {
        trapezoid(self.samples.iter().map(|s| s.a), self.dt)
    }
}

fn trapezoid(values: impl Iterator<Item = f64>, dt: f64) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.len() < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for w in v.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * dt;
    }
    acc
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ManeuverError {
    #[error("infeasible braking demand: derived peak deceleration {0:.3} m/s^2 exceeds -8.5")]
    InfeasibleBrakingDemand(f64),
    #[error("final deceleration {a1:.2} m/s^2 exceeds the ISO cap {cap:.2} at {v:.1} m/s")]
    DecelAboveIsoCap { a1: f64, cap: f64, v: f64 },
    #[error("initial speed must exceed the target speed")]
    NoSpeedReduction,
}

/// Normalized single-peak pulse f(x) = x * (1 - x^m)^2 on [0, 1].
fn brake_pulse(x: f64, m: f64) -> f64 {
    let p = 1.0 - x.powf(m);
    x * p * p
}

/// Peak value of the pulse, attained at x = (1 / (1 + 2m))^(1/m).
fn brake_pulse_peak(m: f64) -> f64 {
    let x = (1.0 / (1.0 + 2.0 * m)).powf(1.0 / m);
    brake_pulse(x, m)
}

/// Closed-form integral of the pulse over [0, 1].
fn brake_pulse_integral(m: f64) -> f64 {
    0.5 - 2.0 / (m + 2.0) + 1.0 / (2.0 * m + 2.0)
}

/// Peak deceleration implied by slowing from `v0` to `v_final` in `t_d`
/// seconds with the pulse shape `m`.
pub fn derived_peak_decel(v0_ms: f64, v_final_ms: f64, t_d: f64, m: f64) -> f64 {
    let delta_v = v_final_ms - v0_ms;
    delta_v * brake_pulse_peak(m) / (t_d * brake_pulse_integral(m))
}

/// Driver braking profile: a(t) = r * a_peak * x (1 - x^m)^2 with x = t/t_d,
/// where the peak is derived from the demanded speed change so the integral
/// of the profile equals v_final - v0.
pub fn driver_brake_profile(
    v0_ms: f64,
    v_final_ms: f64,
    params: &DriverBrakeParams,
    dt: f64,
) -> Result<ManeuverProfile, ManeuverError> {
    let t_d = params.t_d_s;
    let m = params.shape_m;
    if v0_ms <= v_final_ms {
        // No braking needed: zero profile.
        return Ok(ManeuverProfile {
            kind: ManeuverKind::DriverBrake,
            dt,
            duration_s: 0.0,
            samples: vec![ProfileSample {
                a: 0.0,
                y_lat: 0.0,
                y_lat_rate: 0.0,
            }],
        });
    }
    let a_peak = derived_peak_decel(v0_ms, v_final_ms, t_d, m);
    if a_peak < -EMERGENCY_DECEL_LIMIT {
        return Err(ManeuverError::InfeasibleBrakingDemand(a_peak));
    }
    let scale = a_peak / brake_pulse_peak(m);
    let steps = (t_d / dt).round() as usize;
    let samples = (0..=steps)
        .map(|k| {
            let x = (k as f64 * dt / t_d).min(1.0);
            ProfileSample {
                a: scale * brake_pulse(x, m),
                y_lat: 0.0,
                y_lat_rate: 0.0,
            }
        })
        .collect();
    Ok(ManeuverProfile {
        kind: ManeuverKind::DriverBrake,
        dt,
        duration_s: t_d,
        samples,
    })
}

/// ISO 22179 limits: (max mean deceleration m/s^2, max jerk m/s^3) as a
/// function of speed. 3.5 / 2.5 above 20 m/s, 5.0 / 5.0 below 5 m/s, linear
/// in between.
pub fn iso_limits(v_ms: f64) -> (f64, f64) {
    let f = ((v_ms - 5.0) / 15.0).clamp(0.0, 1.0);
    let decel = 5.0 + (3.5 - 5.0) * f;
    let jerk = 5.0 + (2.5 - 5.0) * f;
    (decel, jerk)
}

/// Deceleration value of the parabolic transition y(t) = A t^2 + B t + C
/// with A = (a0 - a1)/delta^2, B = -2 A delta, C = a0.
fn parabola(t: f64, a0: f64, a1: f64, delta: f64) -> f64 {
    if delta <= 0.0 {
        return a1;
    }
    let a = (a0 - a1) / (delta * delta);
    a * t * t - 2.0 * a * delta * t + a0
}

/// Speed change over the full parabolic transition [0, delta].
fn parabola_delta_v(a0: f64, a1: f64, delta: f64) -> f64 {
    a0 * delta - (2.0 / 3.0) * (a0 - a1) * delta
}

/// ACC braking profile: jerk-limited parabolic transition from a0 to a1,
/// hold at a1 until the demanded speed change is covered, then a mirrored
/// parabolic release back to zero.
pub fn acc_brake_profile(
    params: &AccBrakeParams,
    v0_ms: f64,
    v_target_ms: f64,
    dt: f64,
) -> Result<ManeuverProfile, ManeuverError> {
    if v0_ms <= v_target_ms {
        return Err(ManeuverError::NoSpeedReduction);
    }
    let (decel_cap, jerk_cap) = iso_limits(v0_ms);
    if params.a1_ms2.abs() > decel_cap {
        return Err(ManeuverError::DecelAboveIsoCap {
            a1: params.a1_ms2,
            cap: decel_cap,
            v: v0_ms,
        });
    }
    let jerk = params.jerk_ms3.min(jerk_cap);
    let a0 = params.a0_ms2;
    let a1 = params.a1_ms2;

    // Transition duration chosen so the peak slope 2|a0 - a1|/delta stays at
    // the jerk bound.
    let delta1 = if (a0 - a1).abs() < 1e-12 {
        0.0
    } else {
        2.0 * (a0 - a1).abs() / jerk
    };
    let delta2 = if a1.abs() < 1e-12 {
        0.0
    } else {
        2.0 * a1.abs() / jerk
    };

    let dv_total = v_target_ms - v0_ms;
    let dv_trans = parabola_delta_v(a0, a1, delta1);
    let dv_release = parabola_delta_v(a1, 0.0, delta2);
    let t_hold = if a1 < 0.0 {
        ((dv_total - dv_trans - dv_release) / a1).max(0.0)
    } else {
        0.0
    };

    let duration = delta1 + t_hold + delta2;
    let steps = (duration / dt).ceil() as usize;
    let samples = (0..=steps)
        .map(|k| {
            let t = (k as f64 * dt).min(duration);
            let a = if t < delta1 {
                parabola(t, a0, a1, delta1)
            } else if t < delta1 + t_hold {
                a1
            } else {
                parabola((t - delta1 - t_hold).min(delta2), a1, 0.0, delta2)
            };
            ProfileSample {
                a,
                y_lat: 0.0,
                y_lat_rate: 0.0,
            }
        })
        .collect();
    Ok(ManeuverProfile {
        kind: ManeuverKind::AccBrake,
        dt,
        duration_s: duration,
        samples,
    })
}

/// Quintic lateral displacement: |y(t)| = (6h/tm^5) t^5 - (15h/tm^4) t^4 +
/// (10h/tm^3) t^3, signed by direction.
pub fn lane_change_lateral(t: f64, h: f64, t_m: f64) -> f64 {
    let x = (t / t_m).clamp(0.0, 1.0);
    h * (6.0 * x.powi(5) - 15.0 * x.powi(4) + 10.0 * x.powi(3))
}

/// Lateral velocity of the quintic: 30 h t^2 (t - tm)^2 / tm^5.
pub fn lane_change_lateral_rate(t: f64, h: f64, t_m: f64) -> f64 {
    if !(0.0..=t_m).contains(&t) {
        return 0.0;
    }
    30.0 * h * t * t * (t - t_m) * (t - t_m) / t_m.powi(5)
}

/// Aggressive lane-change trajectory: quintic lateral displacement reaching
/// the signed lane offset at t_m, sinusoidal longitudinal acceleration.
pub fn lane_change_trajectory(
    params: &LceParams,
    _v_m_ms: f64,
    direction: LaneChangeDirection,
    dt: f64,
) -> ManeuverProfile {
    let t_m = params.t_m_s;
    let h = params.h_m;
    let sign = direction.sign();
    let steps = (t_m / dt).round() as usize;
    let samples = (0..=steps)
        .map(|k| {
            let t = (k as f64 * dt).min(t_m);
            ProfileSample {
                a: params.a_max_ms2 * (2.0 * std::f64::consts::PI * t / t_m).sin(),
                y_lat: sign * lane_change_lateral(t, h, t_m),
                y_lat_rate: sign * lane_change_lateral_rate(t, h, t_m),
            }
        })
        .collect();
    ManeuverProfile {
        kind: ManeuverKind::LaneChange,
        dt,
        duration_s: t_m,
        samples,
    }
}

/// Average deceleration rates by approach speed and speed during
/// deceleration. Rows are speed intervals 0-10 .. 80-90 km/h, columns are
/// approach speeds 40-50 .. 80-90 km/h. Cells hold (mean speed km/h,
/// deceleration m/s^2); the lower-left triangle is undefined.
#[derive(Debug, Clone)]
pub struct DecelLookup {
    cells: [[Option<(f64, f64)>; 5]; 9],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecelEntry {
    pub mean_speed_kmh: f64,
    pub decel_ms2: f64,
    /// Set when the requested cell was undefined and the nearest defined
    /// cell in the same approach-speed column was used instead.
    pub fallback: bool,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LookupError {
    #[error("approach speed {0:.1} km/h outside table domain 40-90")]
    ApproachOutOfDomain(f64),
    #[error("speed {0:.1} km/h outside table domain 0-90")]
    SpeedOutOfDomain(f64),
}

impl Default for DecelLookup {
    fn default() -> Self {
        Self::new()
    }
}

impl DecelLookup {
    pub fn new() -> Self {
        const T: [[Option<(f64, f64)>; 5]; 9] = [
            [
                Some((2.64, 0.91)),
                Some((2.81, 0.84)),
                Some((2.43, 0.88)),
                Some((2.62, 0.89)),
                Some((2.6, 0.87)),
            ],
            [
                Some((14.95, 1.92)),
                Some((14.91, 1.87)),
                Some((14.82, 1.91)),
                Some((14.95, 2.0)),
                Some((14.77, 1.9)),
            ],
            [
                Some((25.1, 1.82)),
                Some((25.03, 1.92)),
                Some((25.07, 2.12)),
                Some((24.84, 1.71)),
                Some((24.87, 2.07)),
            ],
            [
                Some((35.46, 1.26)),
                Some((35.32, 1.67)),
                Some((35.2, 2.06)),
                Some((35.29, 1.83)),
                Some((34.57, 2.12)),
            ],
            [
                Some((44.04, 0.67)),
                Some((45.46, 1.1)),
                Some((45.23, 1.75)),
                Some((44.83, 1.76)),
                Some((45.12, 2.02)),
            ],
            [
                None,
                Some((54.01, 0.58)),
                Some((55.41, 1.07)),
                Some((55.16, 1.37)),
                Some((55.3, 1.83)),
            ],
            [
                None,
                None,
                Some((63.69, 0.58)),
                Some((65.49, 0.78)),
                Some((65.2, 1.34)),
            ],
            [
                None,
                None,
                None,
                Some((72.88, 0.45)),
                Some((75.86, 0.91)),
            ],
            [None, None, None, None, Some((82.9, 0.48))],
        ];
        DecelLookup { cells: T }
    }

    /// Table cell for the given approach speed and current speed, both in
    /// km/h. Undefined cells fall back to the nearest defined cell in the
    /// same approach-speed column.
    pub fn lookup(&self, approach_kmh: f64, current_kmh: f64) -> Result<DecelEntry, LookupError> {
        if !(40.0..=90.0).contains(&approach_kmh) {
            return Err(LookupError::ApproachOutOfDomain(approach_kmh));
        }
        if !(0.0..=90.0).contains(&current_kmh) {
            return Err(LookupError::SpeedOutOfDomain(current_kmh));
        }
        let col = (((approach_kmh - 40.0) / 10.0) as usize).min(4);
        let row = ((current_kmh / 10.0) as usize).min(8);
        if let Some((mean, decel)) = self.cells[row][col] {
            return Ok(DecelEntry {
                mean_speed_kmh: mean,
                decel_ms2: decel,
                fallback: false,
            });
        }
        // Nearest defined row in the same column.
        let mut best: Option<(usize, (f64, f64))> = None;
        for (r, cell) in self.cells.iter().enumerate() {
            if let Some(v) = cell[col] {
                let better = match best {
                    Some((br, _)) => {
                        (r as i64 - row as i64).abs() < (br as i64 - row as i64).abs()
                    }
                    None => true,
                };
                if better {
                    best = Some((r, v));
                }
            }
        }
        let (_, (mean, decel)) = best.expect("every column has at least one defined cell");
        Ok(DecelEntry {
            mean_speed_kmh: mean,
            decel_ms2: decel,
            fallback: true,
        })
    }
}

/// One cut-in event class from the lane-change event catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutInSide {
    /// A vehicle on the lane left of the ego cuts in to the right.
    FromLeft,
    /// A vehicle on the lane right of the ego cuts in to the left.
    FromRight,
    /// Whichever adjacent side has a candidate (left checked first).
    Either,
}

/// Longitudinal window, relative to the ego front bumper, inside which a
/// neighbor qualifies as a cut-in candidate.
const LCE_WINDOW_M: (f64, f64) = (0.0, 30.0);
/// If the pending event class stays infeasible this long while the scheduler
/// is otherwise ready, it advances to the next class.
const LCE_PATIENCE_S: f64 = 60.0;

/// Cycles through the lane-change event catalog, firing one cut-in at a time
/// with at least `t_int_min` between events.
#[derive(Debug, Clone)]
pub struct LceScheduler {
    params: LceParams,
    catalog: Vec<CutInSide>,
    next_idx: usize,
    fired: usize,
    last_fire_t: Option<f64>,
    eligible_since: Option<f64>,
}

impl LceScheduler {
    pub fn new(params: LceParams, lane_count: usize) -> Self {
        let catalog = if lane_count >= 3 {
            vec![CutInSide::FromLeft, CutInSide::FromRight, CutInSide::Either]
        } else {
            vec![CutInSide::FromLeft, CutInSide::FromRight]
        };
        LceScheduler {
            params,
            catalog,
            next_idx: 0,
            fired: 0,
            last_fire_t: None,
            eligible_since: None,
        }
    }

    pub fn fired_count(&self) -> usize {
        self.fired
    }

    pub fn params(&self) -> &LceParams {
        &self.params
    }

    fn earliest_fire_time(&self) -> f64 {
        let scheduled = self
            .params
            .init_times_s
            .get(self.fired)
            .copied()
            .unwrap_or(0.0);
        match self.last_fire_t {
            Some(t) => scheduled.max(t + self.params.t_int_min_s),
            None => scheduled,
        }
    }

    fn candidate(
        &self,
        side: CutInSide,
        ego: &VehicleState,
        neighbors: &[VehicleState],
        lane_count: usize,
    ) -> Option<(VehicleId, LaneChangeDirection)> {
        let try_side = |lane_offset: i64, dir: LaneChangeDirection| {
            let lane = ego.lane as i64 + lane_offset;
            if lane < 1 || lane > lane_count as i64 {
                return None;
            }
            neighbors
                .iter()
                .filter(|v| {
                    v.lane as i64 == lane
                        && v.kind != crate::world::VehicleKind::Ego
                        && v.controlled_by == ControlledBy::InternalModel
                        && v.y_lat.abs() < 0.2
                        && (v.s - ego.s) >= LCE_WINDOW_M.0
                        && (v.s - ego.s) <= LCE_WINDOW_M.1
                })
                .min_by(|a, b| {
                    (a.s, a.id)
                        .partial_cmp(&(b.s, b.id))
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .map(|v| (v.id, dir))
        };
        match side {
            CutInSide::FromLeft => try_side(-1, LaneChangeDirection::Right),
            CutInSide::FromRight => try_side(1, LaneChangeDirection::Left),
            CutInSide::Either => try_side(-1, LaneChangeDirection::Right)
                .or_else(|| try_side(1, LaneChangeDirection::Left)),
        }
    }

    /// Called once per step. Returns the vehicle to command and the movement
    /// direction when an event fires.
    pub fn poll(
        &mut self,
        t: f64,
        ego: &VehicleState,
        neighbors: &[VehicleState],
        lane_count: usize,
    ) -> Option<(VehicleId, LaneChangeDirection)> {
        if t < self.earliest_fire_time() {
            self.eligible_since = None;
            return None;
        }
        let side = self.catalog[self.next_idx];
        if let Some(hit) = self.candidate(side, ego, neighbors, lane_count) {
            self.fired += 1;
            self.last_fire_t = Some(t);
            self.next_idx = (self.next_idx + 1) % self.catalog.len();
            self.eligible_since = None;
            return Some(hit);
        }
        // Track how long the pending class has been infeasible.
        match self.eligible_since {
            None => self.eligible_since = Some(t),
            Some(since) if t - since > LCE_PATIENCE_S => {
                self.next_idx = (self.next_idx + 1) % self.catalog.len();
                self.eligible_since = Some(t);
            }
            _ => {}
        }
        None
    }
}
