//! Background microscopic traffic: spawning, car-following, free lane
//! changes, the ego ACC controller, and the fixed-step world update.

use crate::injector::{
    extract_neighbors, InjectorError, InjectorPlugin, InjectorSettings, VehicleCommand,
};
use crate::maneuvers::{lane_change_lateral_rate, LaneChangeDirection};
use crate::world::{ControlledBy, RoadConfig, SimClock, VehicleId, VehicleKind, VehicleState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// Traffic volume and speed distribution of the background flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficDemand {
    #[serde(default = "default_inflow")]
    pub inflow_per_lane_veh_h: f64,
    #[serde(default = "default_speed_mean")]
    pub desired_speed_mean_ms: f64,
    #[serde(default = "default_speed_sd")]
    pub desired_speed_sd_ms: f64,
    /// Seed of the run RNG; 0 means "inherit run.seed".
    #[serde(default)]
    pub seed: u64,
}

fn default_inflow() -> f64 {
    600.0
}
fn default_speed_mean() -> f64 {
    28.0
}
fn default_speed_sd() -> f64 {
    2.5
}

impl Default for TrafficDemand {
    fn default() -> Self {
        TrafficDemand {
            inflow_per_lane_veh_h: default_inflow(),
            desired_speed_mean_ms: default_speed_mean(),
            desired_speed_sd_ms: default_speed_sd(),
            seed: 0,
        }
    }
}

/// The ego ACC + lane-change automation under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoControllerParams {
    #[serde(default = "default_time_gap")]
    pub time_gap_s: f64,
    #[serde(default = "default_acc_max_decel")]
    pub acc_max_decel_ms2: f64,
    #[serde(default = "default_acc_max_accel")]
    pub acc_max_accel_ms2: f64,
    #[serde(default = "default_emergency_decel")]
    pub emergency_decel_ms2: f64,
    #[serde(default = "default_ego_speed")]
    pub desired_speed_ms: f64,
}

fn default_time_gap() -> f64 {
    1.5
}
fn default_acc_max_decel() -> f64 {
    3.5
}
fn default_acc_max_accel() -> f64 {
    1.5
}
fn default_emergency_decel() -> f64 {
    8.5
}
fn default_ego_speed() -> f64 {
    30.0
}

impl Default for EgoControllerParams {
    fn default() -> Self {
        EgoControllerParams {
            time_gap_s: default_time_gap(),
            acc_max_decel_ms2: default_acc_max_decel(),
            acc_max_accel_ms2: default_acc_max_accel(),
            emergency_decel_ms2: default_emergency_decel(),
            desired_speed_ms: default_ego_speed(),
        }
    }
}

/// Intelligent-driver-model parameters of the background traffic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmParams {
    pub time_headway_s: f64,
    pub max_accel_ms2: f64,
    pub comfortable_decel_ms2: f64,
    pub jam_distance_m: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            time_headway_s: 1.5,
            max_accel_ms2: 1.4,
            comfortable_decel_ms2: 2.0,
            jam_distance_m: 2.0,
        }
    }
}

/// Car-following acceleration. `leader` is (net gap to leader rear, leader
/// speed). Free road at the desired speed gives exactly zero; standstill at
/// the jam distance gives exactly zero.
pub fn idm_accel(p: &IdmParams, v: f64, v_desired: f64, leader: Option<(f64, f64)>) -> f64 {
    let free = p.max_accel_ms2 * (1.0 - (v / v_desired).powi(4));
    let a = match leader {
        None => free,
        Some((gap, v_lead)) => {
            let dv = v - v_lead;
            let dyn_part =
                v * p.time_headway_s + v * dv / (2.0 * (p.max_accel_ms2 * p.comfortable_decel_ms2).sqrt());
            let s_star = p.jam_distance_m + dyn_part.max(0.0);
            let gap = gap.max(0.1);
            p.max_accel_ms2 * (1.0 - (v / v_desired).powi(4) - (s_star / gap).powi(2))
        }
    };
    a.clamp(-crate::maneuvers::EMERGENCY_DECEL_LIMIT, p.max_accel_ms2)
}

const K_SPEED: f64 = 0.4;
const K_GAP: f64 = 0.25;
const K_REL: f64 = 0.9;
const MIN_STANDSTILL_GAP: f64 = 2.0;

/// Ego ACC command. Returns (commanded acceleration, requested deceleration
/// magnitude before clamping). Deceleration beyond the comfort bound is only
/// granted when the kinematically required deceleration exceeds it.
pub fn ego_acc_command(
    p: &EgoControllerParams,
    v: f64,
    leader: Option<(f64, f64)>,
) -> (f64, f64) {
    let free = (K_SPEED * (p.desired_speed_ms - v)).min(p.acc_max_accel_ms2);
    let raw = match leader {
        None => free,
        Some((gap, v_lead)) => {
            let d_des = MIN_STANDSTILL_GAP.max(v * p.time_gap_s);
            let follow = K_GAP * (gap - d_des) + K_REL * (v_lead - v);
            free.min(follow)
        }
    };
    let requested_decel = (-raw).max(0.0);
    let a = if raw < -p.acc_max_decel_ms2 {
        let emergency = match leader {
            Some((gap, v_lead)) => {
                let v_rel = v - v_lead;
                if gap <= 0.05 {
                    true
                } else if v_rel > 0.0 {
                    v_rel * v_rel / (2.0 * gap) > p.acc_max_decel_ms2
                } else {
                    false
                }
            }
            None => false,
        };
        if emergency {
            raw.max(-p.emergency_decel_ms2)
        } else {
            -p.acc_max_decel_ms2
        }
    } else {
        raw.min(p.acc_max_accel_ms2)
    };
    (a, requested_decel)
}

#[derive(Debug, Clone, Copy)]
struct ActiveLaneChange {
    dir: LaneChangeDirection,
    start_step: u64,
    t_m: f64,
    h: f64,
}

#[derive(Debug, Clone)]
struct Vehicle {
    state: VehicleState,
    desired_speed: f64,
    override_a: Option<f64>,
    override_lat_rate: Option<f64>,
    lc: Option<ActiveLaneChange>,
    lc_cooldown_until: f64,
}

/// How background vehicles enter the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpawnMode {
    /// Poisson arrivals at s = 0 only (the module contract; suits short
    /// roads and unit experiments).
    Boundary,
    /// Moving window around the ego: ambient traffic is seeded ahead of the
    /// advancing window front and dropped once it falls far behind. Suits
    /// long batch runs.
    Window { front_m: f64, rear_m: f64 },
}

struct PluginSlot {
    plugin: Box<dyn InjectorPlugin>,
    settings: InjectorSettings,
    buffer: BTreeMap<VehicleId, VehicleCommand>,
}

/// Telemetry of the ego at the end of a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoTelemetry {
    pub s: f64,
    pub v: f64,
    pub lane: usize,
    /// Net gap to the leader, if any.
    pub gap: Option<f64>,
    pub leader_speed: Option<f64>,
    /// Time-to-brake against the leader at the emergency deceleration.
    pub ttb: f64,
    /// Deceleration the controller asked for before clamping, magnitude.
    pub requested_decel: f64,
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub t: f64,
    pub step_index: u64,
    /// Collision episodes that started this step.
    pub new_collisions: Vec<(VehicleId, VehicleId)>,
    pub ego: Option<EgoTelemetry>,
    /// Set on the first step where a plugin override was applied.
    pub override_applied: bool,
}

const VEHICLE_LEN: f64 = 4.5;
const VEHICLE_WIDTH: f64 = 2.0;
const INTERNAL_LC_TM: f64 = 4.0;
const EGO_LC_COOLDOWN: f64 = 15.0;
const TRAFFIC_LC_COOLDOWN: f64 = 30.0;

/// The simulated road segment with all driver-vehicle units. Single
/// threaded; one world per seed.
pub struct World {
    pub road: RoadConfig,
    pub clock: SimClock,
    pub demand: TrafficDemand,
    pub ego_params: EgoControllerParams,
    pub idm: IdmParams,
    vehicles: Vec<Vehicle>,
    next_id: VehicleId,
    rng: ChaCha8Rng,
    plugin: Option<PluginSlot>,
    spawn_mode: SpawnMode,
    lane_frontier: Vec<f64>,
    /// Arrivals deferred by a blocked entry, per lane (desired speeds).
    pending_entries: Vec<VecDeque<f64>>,
    active_collisions: BTreeSet<(VehicleId, VehicleId)>,
    pub incidents: Vec<String>,
    ego_id: VehicleId,
    collision_count: u64,
    override_ever_applied: bool,
}

impl World {
    pub fn new(
        road: RoadConfig,
        demand: TrafficDemand,
        ego_params: EgoControllerParams,
        dt: f64,
    ) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(demand.seed);
        let ego_lane = if road.lanes >= 3 { 2 } else { 2.min(road.lanes) };
        let ego = Vehicle {
            state: VehicleState {
                id: 0,
                kind: VehicleKind::Ego,
                lane: ego_lane,
                s: 0.0,
                y_lat: 0.0,
                v: ego_params.desired_speed_ms,
                a: 0.0,
                len: VEHICLE_LEN,
                controlled_by: ControlledBy::InternalModel,
            },
            desired_speed: ego_params.desired_speed_ms,
            override_a: None,
            override_lat_rate: None,
            lc: None,
            lc_cooldown_until: 0.0,
        };
        let lanes = road.lanes;
        World {
            road,
            clock: SimClock::new(dt),
            demand,
            ego_params,
            idm: IdmParams::default(),
            vehicles: vec![ego],
            next_id: 1,
            rng,
            plugin: None,
            spawn_mode: SpawnMode::Boundary,
            lane_frontier: vec![50.0; lanes],
            pending_entries: vec![VecDeque::new(); lanes],
            active_collisions: BTreeSet::new(),
            incidents: Vec::new(),
            ego_id: 0,
            collision_count: 0,
            override_ever_applied: false,
        }
    }

    pub fn set_spawn_mode(&mut self, mode: SpawnMode) {
        self.spawn_mode = mode;
    }

    pub fn ego_id(&self) -> VehicleId {
        self.ego_id
    }

    pub fn collision_count(&self) -> u64 {
        self.collision_count
    }

    pub fn vehicle_states(&self) -> Vec<VehicleState> {
        self.vehicles.iter().map(|v| v.state).collect()
    }

    pub fn vehicle_count(&self) -> usize {
        self.vehicles.len()
    }

    pub fn ego_state(&self) -> Option<VehicleState> {
        self.find(self.ego_id).map(|v| v.state)
    }

    fn find(&self, id: VehicleId) -> Option<&Vehicle> {
        self.vehicles.iter().find(|v| v.state.id == id)
    }

    fn find_mut(&mut self, id: VehicleId) -> Option<&mut Vehicle> {
        self.vehicles.iter_mut().find(|v| v.state.id == id)
    }

    /// Install the external driver-model plugin. Only one plugin may be
    /// active per world.
    pub fn register_plugin(
        &mut self,
        mut plugin: Box<dyn InjectorPlugin>,
        settings: InjectorSettings,
    ) -> Result<(), InjectorError> {
        if self.plugin.is_some() {
            return Err(InjectorError::AlreadyInstalled);
        }
        plugin.on_start(&settings);
        self.plugin = Some(PluginSlot {
            plugin,
            settings,
            buffer: BTreeMap::new(),
        });
        Ok(())
    }

    pub fn has_plugin(&self) -> bool {
        self.plugin.is_some()
    }

    pub fn finish_plugin(&mut self) {
        let km = self.ego_state().map(|e| e.s / 1000.0).unwrap_or(0.0);
        if let Some(slot) = &mut self.plugin {
            slot.plugin.on_finish(km);
        }
    }

    fn draw_desired_speed(&mut self) -> f64 {
        // Box-Muller; two uniform draws per sample keeps the stream layout
        // independent of call history.
        let u1: f64 = self.rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = self.rng.gen::<f64>();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        let v = self.demand.desired_speed_mean_ms + self.demand.desired_speed_sd_ms * z;
        v.clamp(10.0, self.road.speed_limit_ms * 1.15)
    }

    fn spawn_vehicle(&mut self, lane: usize, s: f64, v: f64, desired: f64) -> VehicleId {
        let id = self.next_id;
        self.next_id += 1;
        self.vehicles.push(Vehicle {
            state: VehicleState {
                id,
                kind: VehicleKind::Traffic,
                lane,
                s,
                y_lat: 0.0,
                v,
                a: 0.0,
                len: VEHICLE_LEN,
                controlled_by: ControlledBy::InternalModel,
            },
            desired_speed: desired,
            override_a: None,
            override_lat_rate: None,
            lc: None,
            lc_cooldown_until: 0.0,
        });
        id
    }

    /// Place a background vehicle explicitly (experiment setup).
    pub fn add_vehicle(&mut self, lane: usize, s: f64, v: f64, desired: f64) -> VehicleId {
        self.spawn_vehicle(lane, s, v, desired)
    }

    /// Entry is blocked when the new vehicle would tailgate the next vehicle
    /// ahead or be tailgated by the next vehicle behind.
    fn entry_blocked(&self, lane: usize, entry_s: f64, desired: f64) -> bool {
        self.vehicles.iter().any(|v| {
            if v.state.lane != lane {
                return false;
            }
            if v.state.rear() >= entry_s - VEHICLE_LEN {
                v.state.rear() - entry_s < 2.0 * desired
            } else {
                entry_s - VEHICLE_LEN - v.state.s < 2.0 * v.state.v
            }
        })
    }

    /// Poisson (Bernoulli per step) arrivals at the given entry position.
    /// Blocked arrivals queue up and enter once the entry clears, at most
    /// one per lane per step.
    fn boundary_spawn(&mut self, entry_s: f64) {
        let p = self.demand.inflow_per_lane_veh_h / 3600.0 * self.clock.dt;
        for lane in 1..=self.road.lanes {
            let u: f64 = self.rng.gen();
            if u < p {
                let desired = self.draw_desired_speed();
                self.pending_entries[lane - 1].push_back(desired);
            }
            if let Some(&desired) = self.pending_entries[lane - 1].front() {
                if !self.entry_blocked(lane, entry_s, desired) {
                    self.pending_entries[lane - 1].pop_front();
                    self.spawn_vehicle(lane, entry_s, desired, desired);
                }
            }
        }
    }

    /// Arrivals waiting for a clear entry.
    pub fn pending_entry_count(&self) -> usize {
        self.pending_entries.iter().map(|q| q.len()).sum()
    }

    /// Spec-level spawn operation: arrivals at s = 0.
    pub fn spawn_step(&mut self) {
        self.boundary_spawn(0.0);
    }

    fn window_spawn(&mut self, front_m: f64, rear_m: f64) {
        let Some(ego) = self.ego_state() else { return };
        // Seed ambient traffic ahead of the advancing window front.
        let mean_spacing =
            self.demand.desired_speed_mean_ms * 3600.0 / self.demand.inflow_per_lane_veh_h.max(1.0);
        for lane in 1..=self.road.lanes {
            while self.lane_frontier[lane - 1] < ego.s + front_m {
                let u: f64 = self.rng.gen_range(f64::EPSILON..1.0);
                let gap = (-u.ln() * mean_spacing).max(0.0);
                let desired = self.draw_desired_speed();
                let min_gap = 2.0 * desired + 2.0 * VEHICLE_LEN;
                // Vehicles placed earlier keep moving; never seed behind the
                // current front-most vehicle of the lane. Vehicles changing
                // into the lane count as occupying it.
                let lead = (0..self.vehicles.len())
                    .filter(|&j| {
                        self.vehicles[j].state.lane == lane || self.effective_lane(j) == lane
                    })
                    .map(|j| self.vehicles[j].state.s)
                    .fold(f64::NEG_INFINITY, f64::max);
                let s = (self.lane_frontier[lane - 1] + gap.max(min_gap)).max(lead + min_gap);
                self.lane_frontier[lane - 1] = s;
                if s < self.road.length_m {
                    self.spawn_vehicle(lane, s, desired, desired);
                }
            }
        }
        let _ = rear_m;
    }

    fn despawn_outside_window(&mut self, front_m: f64, rear_m: f64) {
        let Some(ego) = self.ego_state() else { return };
        let lo = ego.s - rear_m - 200.0;
        let hi = ego.s + front_m + 400.0;
        let ego_id = self.ego_id;
        self.vehicles
            .retain(|v| v.state.id == ego_id || (v.state.s >= lo && v.state.s <= hi));
    }

    /// Leader of `idx` in lane `lane`: nearest vehicle ahead by front
    /// position. Returns (net gap, leader speed).
    fn leader_in_lane(&self, idx: usize, lane: usize) -> Option<(f64, f64)> {
        let me = &self.vehicles[idx].state;
        self.vehicles
            .iter()
            .enumerate()
            .filter(|(j, v)| *j != idx && v.state.lane == lane && v.state.s > me.s)
            .min_by(|a, b| {
                (a.1.state.s, a.1.state.id)
                    .partial_cmp(&(b.1.state.s, b.1.state.id))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .map(|(_, v)| (v.state.rear() - me.s, v.state.v))
    }


    /// Lane a vehicle must be treated as occupying for safety checks: the
    /// destination lane while a lane change is in progress.
    fn effective_lane(&self, idx: usize) -> usize {
        let v = &self.vehicles[idx];
        match &v.lc {
            Some(lc) => {
                let target = v.state.lane as i64
                    + match lc.dir {
                        LaneChangeDirection::Left => -1,
                        LaneChangeDirection::Right => 1,
                    };
                target.clamp(1, self.road.lanes as i64) as usize
            }
            None => v.state.lane,
        }
    }

    fn lane_change_safe(&self, idx: usize, target_lane: usize) -> bool {
        let me = &self.vehicles[idx].state;
        let mut front: Option<(f64, f64)> = None;
        let mut rear: Option<(f64, f64)> = None;
        for j in 0..self.vehicles.len() {
            if j == idx {
                continue;
            }
            let o = &self.vehicles[j].state;
            // Vehicles heading into the target lane count as already there.
            if self.vehicles[j].state.lane != target_lane && self.effective_lane(j) != target_lane
            {
                continue;
            }
            // Anyone alongside makes the move unsafe outright.
            if o.s > me.rear() - MIN_STANDSTILL_GAP && o.rear() < me.s + MIN_STANDSTILL_GAP {
                return false;
            }
            if o.s > me.s {
                let gap = o.rear() - me.s;
                if front.map(|(g, _)| gap < g).unwrap_or(true) {
                    front = Some((gap, o.v));
                }
            } else {
                let gap = me.rear() - o.s;
                if rear.map(|(g, _)| gap < g).unwrap_or(true) {
                    rear = Some((gap, o.v));
                }
            }
        }
        let front_ok = match front {
            None => true,
            Some((gap, v_lead)) => {
                gap > 2.0 * MIN_STANDSTILL_GAP.max(me.v * self.idm.time_headway_s)
                    && v_lead >= me.v - 1.0
            }
        };
        let rear_ok = match rear {
            None => true,
            Some((gap, v_f)) => gap > v_f * 1.0 + 2.0 * MIN_STANDSTILL_GAP && v_f - me.v < 2.0,
        };
        front_ok && rear_ok
    }

    fn start_lane_change(&mut self, idx: usize, dir: LaneChangeDirection) {
        let h = self.road.lane_width_m;
        let start_step = self.clock.step_index;
        let t = self.clock.t();
        let cooldown = if self.vehicles[idx].state.kind == VehicleKind::Ego {
            EGO_LC_COOLDOWN
        } else {
            TRAFFIC_LC_COOLDOWN
        };
        let v = &mut self.vehicles[idx];
        v.lc = Some(ActiveLaneChange {
            dir,
            start_step,
            t_m: INTERNAL_LC_TM,
            h,
        });
        v.lc_cooldown_until = t + cooldown + INTERNAL_LC_TM;
    }

    /// Free lane-change decisions for internally controlled vehicles
    /// (gap-acceptance rule), staggered across steps.
    fn lane_change_decisions(&mut self) {
        let t = self.clock.t();
        let step = self.clock.step_index;
        for idx in 0..self.vehicles.len() {
            let v = &self.vehicles[idx];
            if v.state.controlled_by != ControlledBy::InternalModel
                || v.lc.is_some()
                || t < v.lc_cooldown_until
                || (step + v.state.id) % 5 != 0
            {
                continue;
            }
            let lane = v.state.lane;
            let speed = v.state.v;
            let desired = v.desired_speed;
            let Some((gap, v_lead)) = self.leader_in_lane(idx, lane) else {
                continue;
            };
            let close = gap < 1.6 * MIN_STANDSTILL_GAP.max(speed * self.idm.time_headway_s);
            let slower = v_lead < desired - 2.0;
            if !(close && slower) {
                continue;
            }
            for dir in [LaneChangeDirection::Left, LaneChangeDirection::Right] {
                let target = v.state.lane as i64
                    + match dir {
                        LaneChangeDirection::Left => -1,
                        LaneChangeDirection::Right => 1,
                    };
                if target < 1 || target > self.road.lanes as i64 {
                    continue;
                }
                let target = target as usize;
                let better = match self.leader_in_lane(idx, target) {
                    None => true,
                    Some((g2, vl2)) => g2 > gap * 1.5 && vl2 > v_lead + 1.0,
                };
                if better && self.lane_change_safe(idx, target) {
                    self.start_lane_change(idx, dir);
                    break;
                }
            }
        }
    }

    fn apply_buffered_commands(&mut self) {
        let Some(mut slot) = self.plugin.take() else {
            return;
        };
        if self.clock.step_index % slot.settings.apply_every_n_steps == 0 {
            for (_, cmd) in std::mem::take(&mut slot.buffer) {
                if !cmd.is_valid() {
                    self.incidents.push(format!(
                        "step {}: invalid command for vehicle {} (release with overrides)",
                        self.clock.step_index, cmd.target_id
                    ));
                    continue;
                }
                match self.find_mut(cmd.target_id) {
                    None => self.incidents.push(format!(
                        "step {}: command for unknown vehicle {} skipped",
                        self.clock.step_index, cmd.target_id
                    )),
                    Some(v) => {
                        if cmd.release {
                            v.state.controlled_by = ControlledBy::InternalModel;
                            v.override_a = None;
                            v.override_lat_rate = None;
                        } else {
                            v.state.controlled_by = ControlledBy::StmPlugin;
                            v.override_a = cmd.accel_override;
                            v.override_lat_rate = cmd.lateral_rate;
                            self.override_ever_applied = true;
                        }
                    }
                }
            }
        }
        self.plugin = Some(slot);
    }

    fn plugin_phase(&mut self) {
        let Some(mut slot) = self.plugin.take() else {
            return;
        };
        let states = self.vehicle_states();
        let view = extract_neighbors(&states, &slot.settings, self.road.lanes);
        if let Some(ego) = view.ego {
            let commands = slot.plugin.inject(&self.clock, &ego, &view);
            for cmd in commands {
                slot.buffer.insert(cmd.target_id, cmd);
            }
        }
        self.plugin = Some(slot);
        self.apply_buffered_commands();
    }

    /// Acceleration command for one vehicle from its current controller.
    fn compute_accel(&self, idx: usize) -> (f64, f64) {
        let v = &self.vehicles[idx];
        if v.state.controlled_by == ControlledBy::StmPlugin {
            if let Some(a) = v.override_a {
                return (a, 0.0);
            }
        }
        let leader = self.leader_in_lane(idx, v.state.lane);
        if v.state.kind == VehicleKind::Ego {
            ego_acc_command(&self.ego_params, v.state.v, leader)
        } else {
            (
                idm_accel(&self.idm, v.state.v, v.desired_speed, leader),
                0.0,
            )
        }
    }

    fn lateral_rate(&self, idx: usize) -> f64 {
        let v = &self.vehicles[idx];
        if v.state.controlled_by == ControlledBy::StmPlugin {
            return v.override_lat_rate.unwrap_or(0.0);
        }
        if let Some(lc) = &v.lc {
            let t_in = (self.clock.step_index - lc.start_step) as f64 * self.clock.dt;
            return lc.dir.sign() * lane_change_lateral_rate(t_in, lc.h, lc.t_m);
        }
        // Recentring toward the lane center after interrupted maneuvers.
        if v.state.y_lat.abs() > 1e-9 {
            return (-2.0 * v.state.y_lat).clamp(-1.0, 1.0);
        }
        0.0
    }

    fn integrate(&mut self, accels: &[f64], rates: &[f64]) {
        let dt = self.clock.dt;
        let half_width = self.road.lane_width_m / 2.0;
        let lanes = self.road.lanes;
        for (i, veh) in self.vehicles.iter_mut().enumerate() {
            let a = accels[i];
            let v_new = (veh.state.v + a * dt).max(0.0);
            veh.state.s += v_new * dt;
            veh.state.v = v_new;
            veh.state.a = a;
            veh.state.y_lat += rates[i] * dt;
            if veh.state.y_lat >= half_width {
                if veh.state.lane < lanes {
                    veh.state.lane += 1;
                    veh.state.y_lat -= self.road.lane_width_m;
                } else {
                    veh.state.y_lat = half_width - 1e-6;
                }
            } else if veh.state.y_lat <= -half_width {
                if veh.state.lane > 1 {
                    veh.state.lane -= 1;
                    veh.state.y_lat += self.road.lane_width_m;
                } else {
                    veh.state.y_lat = -half_width + 1e-6;
                }
            }
            // Completed internal lane changes.
            if let Some(lc) = &veh.lc {
                let t_in = (self.clock.step_index - lc.start_step) as f64 * dt;
                if t_in >= lc.t_m {
                    veh.lc = None;
                }
            }
        }
    }

    /// Detect overlapping vehicle boxes. Reports each pair once per contact
    /// episode.
    pub fn detect_collisions(&mut self) -> Vec<(VehicleId, VehicleId)> {
        let width = self.road.lane_width_m;
        let mut order: Vec<usize> = (0..self.vehicles.len()).collect();
        order.sort_by(|&a, &b| {
            self.vehicles[a]
                .state
                .s
                .partial_cmp(&self.vehicles[b].state.s)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut current: BTreeSet<(VehicleId, VehicleId)> = BTreeSet::new();
        for (k, &i) in order.iter().enumerate() {
            let a = &self.vehicles[i].state;
            for &j in order.iter().skip(k + 1) {
                let b = &self.vehicles[j].state;
                if b.rear() >= a.s {
                    break;
                }
                let lat = (a.lateral_center(width) - b.lateral_center(width)).abs();
                if lat < VEHICLE_WIDTH && a.rear() < b.s && b.rear() < a.s {
                    let pair = if a.id < b.id { (a.id, b.id) } else { (b.id, a.id) };
                    current.insert(pair);
                }
            }
        }
        let new: Vec<(VehicleId, VehicleId)> = current
            .iter()
            .filter(|p| !self.active_collisions.contains(p))
            .copied()
            .collect();
        self.collision_count += new.len() as u64;
        self.active_collisions = current;
        new
    }

    fn ego_telemetry(&mut self, requested_decel: f64) -> Option<EgoTelemetry> {
        let idx = self
            .vehicles
            .iter()
            .position(|v| v.state.id == self.ego_id)?;
        let ego = self.vehicles[idx].state;
        let leader = self.leader_in_lane(idx, ego.lane);
        let ttb = match leader {
            Some((gap, v_lead)) => crate::evaluation::ttb_from(
                gap,
                ego.v - v_lead,
                self.ego_params.emergency_decel_ms2,
            ),
            None => f64::INFINITY,
        };
        Some(EgoTelemetry {
            s: ego.s,
            v: ego.v,
            lane: ego.lane,
            gap: leader.map(|l| l.0),
            leader_speed: leader.map(|l| l.1),
            ttb,
            requested_decel,
        })
    }

    /// One fixed time step: spawn, extract/inject/apply, decide, advance,
    /// detect collisions.
    pub fn step(&mut self) -> StepReport {
        match self.spawn_mode {
            SpawnMode::Boundary => self.spawn_step(),
            SpawnMode::Window { front_m, rear_m } => {
                self.window_spawn(front_m, rear_m);
            }
        }

        let applied_before = self.override_ever_applied;
        self.plugin_phase();

        self.lane_change_decisions();

        let n = self.vehicles.len();
        let mut accels = vec![0.0; n];
        let mut rates = vec![0.0; n];
        let mut ego_requested = 0.0;
        for i in 0..n {
            let (a, req) = self.compute_accel(i);
            accels[i] = a;
            if self.vehicles[i].state.id == self.ego_id {
                ego_requested = req;
            }
            rates[i] = self.lateral_rate(i);
        }
        self.integrate(&accels, &rates);

        let new_collisions = self.detect_collisions();
        if let SpawnMode::Window { front_m, rear_m } = self.spawn_mode {
            self.despawn_outside_window(front_m, rear_m);
        }

        let ego = self.ego_telemetry(ego_requested);
        let report = StepReport {
            t: self.clock.t(),
            step_index: self.clock.step_index,
            new_collisions,
            ego,
            override_applied: !applied_before && self.override_ever_applied,
        };
        self.clock.tick();
        report
    }
}
