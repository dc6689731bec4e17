//! External driver-model plugin framework: per-step vehicle data flow,
//! neighbor extraction around the ego, and buffered command application.
//!
//! The step protocol is extract -> inject -> apply -> advance: the plugin
//! sees the post-advance state of the previous step, its commands are
//! buffered (latest per vehicle wins) and applied before the next advance on
//! steps where `step_index % apply_every_n_steps == 0`.

use crate::stm::{tvc_bands, TvcBands, TVC_COLUMNS};
use crate::world::{SimClock, VehicleId, VehicleState};

/// Settings fixed at plugin registration.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectorSettings {
    pub ego_id: VehicleId,
    /// Radius of interest around the ego, meters.
    pub neighbor_threshold_m: f64,
    /// When set, vehicles behind the ego are not stored.
    pub front_only: bool,
    /// Commands are applied on steps divisible by this.
    pub apply_every_n_steps: u64,
    /// Safety interval times used to place neighbors into band cells.
    pub sit_s: [f64; 3],
    pub t_max_s: f64,
}

impl Default for InjectorSettings {
    fn default() -> Self {
        InjectorSettings {
            ego_id: 0,
            neighbor_threshold_m: 300.0,
            front_only: false,
            apply_every_n_steps: 1,
            sit_s: [2.0, 4.0, 6.0],
            t_max_s: 8.0,
        }
    }
}

/// Grid of nearest vehicles per (lane, band) cell, mirroring the placement
/// of vehicles relative to the ego on the road.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelativeMap {
    pub lane_count: usize,
    cells: Vec<Option<VehicleId>>,
}

impl RelativeMap {
    pub fn empty(lane_count: usize) -> Self {
        RelativeMap {
            lane_count,
            cells: vec![None; lane_count * TVC_COLUMNS],
        }
    }

    pub fn get(&self, lane: usize, tvc: usize) -> Option<VehicleId> {
        self.cells[(lane - 1) * TVC_COLUMNS + (tvc - 1)]
    }

    fn set(&mut self, lane: usize, tvc: usize, id: VehicleId) {
        self.cells[(lane - 1) * TVC_COLUMNS + (tvc - 1)] = Some(id);
    }

    pub fn occupied(&self) -> impl Iterator<Item = (usize, usize, VehicleId)> + '_ {
        (0..self.cells.len()).filter_map(move |i| {
            self.cells[i].map(|id| (i / TVC_COLUMNS + 1, i % TVC_COLUMNS + 1, id))
        })
    }
}

/// Snapshot of the traffic around the ego handed to the plugin each step.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborView {
    pub ego: Option<VehicleState>,
    /// All vehicles within the threshold, ordered by id.
    pub flat: Vec<VehicleState>,
    pub relative_map: RelativeMap,
    /// Set when the ego was not found; the view is then empty.
    pub ego_missing: bool,
}

impl NeighborView {
    pub fn state_of(&self, id: VehicleId) -> Option<&VehicleState> {
        self.flat.iter().find(|v| v.id == id)
    }
}

/// Build the neighbor view from the full vehicle list. Cell occupants are
/// the nearest vehicle whose distance lies in the cell's band; ties break to
/// the lower id.
pub fn extract_neighbors(
    vehicles: &[VehicleState],
    settings: &InjectorSettings,
    lane_count: usize,
) -> NeighborView {
    let ego = vehicles.iter().find(|v| v.id == settings.ego_id).copied();
    let Some(ego) = ego else {
        return NeighborView {
            ego: None,
            flat: Vec::new(),
            relative_map: RelativeMap::empty(lane_count),
            ego_missing: true,
        };
    };

    let mut flat: Vec<VehicleState> = vehicles
        .iter()
        .filter(|v| {
            v.id != ego.id
                && (v.s - ego.s).abs() <= settings.neighbor_threshold_m
                && (!settings.front_only || v.s >= ego.s)
        })
        .copied()
        .collect();
    flat.sort_by_key(|v| v.id);

    let bands: TvcBands = tvc_bands(ego.v, settings.sit_s, settings.t_max_s);
    let mut map = RelativeMap::empty(lane_count);
    for v in &flat {
        if v.lane < 1 || v.lane > lane_count {
            continue;
        }
        let d = v.s - ego.s;
        if let Some(tvc) = bands.column_of(d) {
            match map.get(v.lane, tvc) {
                None => map.set(v.lane, tvc, v.id),
                Some(existing) => {
                    let cur = flat.iter().find(|x| x.id == existing).unwrap();
                    let cur_d = cur.s - ego.s;
                    if d < cur_d || (d == cur_d && v.id < existing) {
                        map.set(v.lane, tvc, v.id);
                    }
                }
            }
        }
    }

    NeighborView {
        ego: Some(ego),
        flat,
        relative_map: map,
        ego_missing: false,
    }
}

/// One instruction for one vehicle. A release command returns the vehicle to
/// its internal model and carries no overrides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleCommand {
    pub target_id: VehicleId,
    pub accel_override: Option<f64>,
    /// Lateral velocity command (d y_lat / dt) in m/s.
    pub lateral_rate: Option<f64>,
    pub release: bool,
}

impl VehicleCommand {
    pub fn control(target_id: VehicleId, accel: Option<f64>, lateral_rate: Option<f64>) -> Self {
        VehicleCommand {
            target_id,
            accel_override: accel,
            lateral_rate,
            release: false,
        }
    }

    pub fn release(target_id: VehicleId) -> Self {
        VehicleCommand {
            target_id,
            accel_override: None,
            lateral_rate: None,
            release: true,
        }
    }

    pub fn is_valid(&self) -> bool {
        !(self.release && (self.accel_override.is_some() || self.lateral_rate.is_some()))
    }
}

/// The user-implemented driver-model contract. `inject` is called once per
/// step between state extraction and state advance; implementations must not
/// retain references to the passed state across steps.
pub trait InjectorPlugin {
    fn on_start(&mut self, _settings: &InjectorSettings) {}

    fn inject(
        &mut self,
        clock: &SimClock,
        ego: &VehicleState,
        view: &NeighborView,
    ) -> Vec<VehicleCommand>;

    fn on_finish(&mut self, _km_driven: f64) {}
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum InjectorError {
    #[error("injector already installed")]
    AlreadyInstalled,
}
