//! The stress-testing engine: speed-dependent distance bands, distance and
//! event matrices, combination-mask matching, event counting and scenario
//! time-frame capture.

use crate::injector::{InjectorPlugin, InjectorSettings, NeighborView, VehicleCommand};
use crate::maneuvers::{
    acc_brake_profile, driver_brake_profile, lane_change_trajectory, AccBrakeParams,
    DriverBrakeParams, LceParams, LceScheduler, ManeuverKind, ManeuverProfile, KMH_TO_MS,
};
use crate::world::{ControlledBy, SimClock, StmParameters, VehicleId, VehicleState};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::{BTreeMap, VecDeque};
use std::rc::Rc;

/// The three distance bands ahead of the ego, recomputed from the ego speed
/// every step: d_k = v_ego * t_k for k in {1, 2, 3, max}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvcBands {
    pub d: [f64; 4],
}

pub fn tvc_bands(v_ego: f64, sit_s: [f64; 3], t_max_s: f64) -> TvcBands {
    TvcBands {
        d: [
            v_ego * sit_s[0],
            v_ego * sit_s[1],
            v_ego * sit_s[2],
            v_ego * t_max_s,
        ],
    }
}

impl TvcBands {
    /// Band column (1..=3) containing the distance, or None. Band edges are
    /// excluded (strict inequalities).
    pub fn column_of(&self, d: f64) -> Option<usize> {
        if d > self.d[0] && d < self.d[1] {
            Some(1)
        } else if d > self.d[1] && d < self.d[2] {
            Some(2)
        } else if d > self.d[2] && d < self.d[3] {
            Some(3)
        } else {
            None
        }
    }
}

pub const TVC_COLUMNS: usize = 3;

/// Distances from the ego to the vehicle occupying each (lane, band) cell.
/// Rows are lanes, columns are the three bands. Empty cells hold +infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub lane_count: usize,
    cells: Vec<f64>,
}

impl DistanceMatrix {
    pub fn empty(lane_count: usize) -> Self {
        DistanceMatrix {
            lane_count,
            cells: vec![f64::INFINITY; lane_count * TVC_COLUMNS],
        }
    }

    fn idx(&self, lane: usize, tvc: usize) -> usize {
        debug_assert!((1..=self.lane_count).contains(&lane) && (1..=TVC_COLUMNS).contains(&tvc));
        (lane - 1) * TVC_COLUMNS + (tvc - 1)
    }

    pub fn get(&self, lane: usize, tvc: usize) -> f64 {
        self.cells[self.idx(lane, tvc)]
    }

    pub fn set(&mut self, lane: usize, tvc: usize, d: f64) {
        let i = self.idx(lane, tvc);
        self.cells[i] = d;
    }

    /// Row-major rows (one per lane), +infinity mapped to None.
    pub fn rows(&self) -> Vec<Vec<Option<f64>>> {
        (1..=self.lane_count)
            .map(|lane| {
                (1..=TVC_COLUMNS)
                    .map(|tvc| {
                        let d = self.get(lane, tvc);
                        d.is_finite().then_some(d)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Distance matrix from the current neighbor view: d = s_traffic - s_ego for
/// every occupied cell.
pub fn distance_matrix(ego: &VehicleState, view: &NeighborView) -> DistanceMatrix {
    let mut m = DistanceMatrix::empty(view.relative_map.lane_count);
    for lane in 1..=view.relative_map.lane_count {
        for tvc in 1..=TVC_COLUMNS {
            if let Some(id) = view.relative_map.get(lane, tvc) {
                if let Some(v) = view.state_of(id) {
                    m.set(lane, tvc, v.s - ego.s);
                }
            }
        }
    }
    m
}

/// Boolean occupancy of the (lane, band) grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventMatrix {
    pub lane_count: usize,
    cells: Vec<bool>,
}

impl EventMatrix {
    pub fn empty(lane_count: usize) -> Self {
        EventMatrix {
            lane_count,
            cells: vec![false; lane_count * TVC_COLUMNS],
        }
    }

    pub fn from_cells(lane_count: usize, occupied: &[(usize, usize)]) -> Self {
        let mut e = Self::empty(lane_count);
        for &(lane, tvc) in occupied {
            e.set(lane, tvc, true);
        }
        e
    }

    fn idx(&self, lane: usize, tvc: usize) -> usize {
        (lane - 1) * TVC_COLUMNS + (tvc - 1)
    }

    pub fn get(&self, lane: usize, tvc: usize) -> bool {
        self.cells[self.idx(lane, tvc)]
    }

    pub fn set(&mut self, lane: usize, tvc: usize, v: bool) {
        let i = self.idx(lane, tvc);
        self.cells[i] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.cells.iter().all(|c| !c)
    }
}

/// Event matrix from distances: a cell is set iff its distance lies strictly
/// inside the band of its own column.
pub fn compute_tem(d: &DistanceMatrix, bands: &TvcBands) -> EventMatrix {
    let mut e = EventMatrix::empty(d.lane_count);
    for lane in 1..=d.lane_count {
        for tvc in 1..=TVC_COLUMNS {
            e.set(lane, tvc, bands.column_of(d.get(lane, tvc)) == Some(tvc));
        }
    }
    e
}

/// One grid position: lane row and band column, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub lane: usize,
    pub tvc: usize,
}

/// A don't-care-masked pattern over the event matrix. Positions listed in
/// `ones` must be occupied for the mask to match; they are also the vehicles
/// commanded to brake.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombinationMask {
    pub id: u32,
    pub lane_count: usize,
    pub ones: Vec<Cell>,
}

impl CombinationMask {
    pub fn matches(&self, e: &EventMatrix) -> bool {
        self.ones.iter().all(|c| e.get(c.lane, c.tvc))
    }

    /// Band column shared by all one-positions, if there is a single one.
    pub fn single_tvc_column(&self) -> Option<usize> {
        let first = self.ones.first()?.tvc;
        self.ones
            .iter()
            .all(|c| c.tvc == first)
            .then_some(first)
    }

    pub fn covers_lane(&self, lane: usize) -> bool {
        self.ones.iter().any(|c| c.lane == lane)
    }
}

/// An ordered set of combination masks for one lane count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskCatalog {
    pub lane_count: usize,
    pub masks: Vec<CombinationMask>,
}

fn mask(id: u32, lane_count: usize, ones: &[(usize, usize)]) -> CombinationMask {
    CombinationMask {
        id,
        lane_count,
        ones: ones.iter().map(|&(lane, tvc)| Cell { lane, tvc }).collect(),
    }
}

impl MaskCatalog {
    /// The published 9-mask table for 2-lane roads. Subscripts read as
    /// (lane, band column).
    pub fn printed_two_lane() -> Self {
        MaskCatalog {
            lane_count: 2,
            masks: vec![
                mask(1, 2, &[(1, 1)]),
                mask(2, 2, &[(1, 1), (2, 1)]),
                mask(3, 2, &[(1, 2)]),
                mask(4, 2, &[(1, 2), (2, 2)]),
                mask(5, 2, &[(1, 3)]),
                mask(6, 2, &[(1, 3), (2, 3)]),
                mask(7, 2, &[(2, 1)]),
                mask(8, 2, &[(2, 2)]),
                mask(9, 2, &[(2, 3)]),
            ],
        }
    }

    /// The published 12-mask table for 3-lane roads, same subscript reading.
    /// Masks 6 and 9 span two band columns and therefore can never satisfy
    /// the single-column braking requirement; they are retained verbatim.
    pub fn printed_three_lane() -> Self {
        MaskCatalog {
            lane_count: 3,
            masks: vec![
                mask(1, 3, &[(1, 1), (2, 1), (3, 1)]),
                mask(2, 3, &[(1, 2), (2, 2), (3, 2)]),
                mask(3, 3, &[(1, 3), (2, 3), (3, 3)]),
                mask(4, 3, &[(1, 1)]),
                mask(5, 3, &[(2, 1)]),
                mask(6, 3, &[(1, 3), (3, 1)]),
                mask(7, 3, &[(1, 2)]),
                mask(8, 3, &[(2, 2)]),
                mask(9, 3, &[(1, 3), (3, 2)]),
                mask(10, 3, &[(1, 3)]),
                mask(11, 3, &[(2, 3)]),
                mask(12, 3, &[(3, 3)]),
            ],
        }
    }

    /// Catalog generated from the trigger requirements: for every band
    /// column, every non-empty set of lanes inside that column. Ordered by
    /// band column first, then larger lane sets before smaller ones. For
    /// 2-lane roads this reproduces the published table as a set.
    pub fn generated(lane_count: usize) -> Self {
        let mut masks = Vec::new();
        let mut id = 1;
        for tvc in 1..=TVC_COLUMNS {
            let mut subsets: Vec<Vec<usize>> = (1u32..(1 << lane_count))
                .map(|bits| {
                    (1..=lane_count)
                        .filter(|lane| bits & (1 << (lane - 1)) != 0)
                        .collect()
                })
                .collect();
            subsets.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
            for lanes in subsets {
                masks.push(CombinationMask {
                    id,
                    lane_count,
                    ones: lanes.into_iter().map(|lane| Cell { lane, tvc }).collect(),
                });
                id += 1;
            }
        }
        MaskCatalog { lane_count, masks }
    }

    pub fn for_lane_count(lane_count: usize) -> Self {
        Self::generated(lane_count)
    }
}

/// Per-mask trigger counts, capped at `n_ct_max`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventCounter {
    counts: Vec<u32>,
    pub n_ct_max: u32,
}

impl EventCounter {
    pub fn new(catalog: &MaskCatalog, n_ct_max: u32) -> Self {
        EventCounter {
            counts: vec![0; catalog.masks.len() + 1],
            n_ct_max,
        }
    }

    pub fn count(&self, mask_id: u32) -> u32 {
        self.counts.get(mask_id as usize).copied().unwrap_or(0)
    }

    pub fn saturated(&self, mask_id: u32) -> bool {
        self.count(mask_id) >= self.n_ct_max
    }

    pub fn increment(&mut self, mask_id: u32) {
        let c = &mut self.counts[mask_id as usize];
        debug_assert!(*c < self.n_ct_max);
        *c += 1;
    }

    pub fn all_saturated(&self) -> bool {
        self.counts[1..].iter().all(|&c| c >= self.n_ct_max)
    }
}

/// Outcome of one matching pass: the triggered mask and the grid cells whose
/// occupants must brake.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerDecision {
    pub mask_id: u32,
    pub cells: Vec<Cell>,
}

/// Match the event matrix against the catalog under the four trigger
/// requirements:
///   1/3. braked vehicles must all lie in a single band column,
///   2.   at least one of them must share the ego's lane,
///   4.   lower band columns take precedence and saturated masks are skipped.
/// At most one mask triggers per step (the first in requirement-4 order).
pub fn match_combinations(
    e: &EventMatrix,
    catalog: &MaskCatalog,
    counters: &EventCounter,
    ego_lane: usize,
) -> Option<TriggerDecision> {
    let mut order: Vec<&CombinationMask> = catalog
        .masks
        .iter()
        .filter(|m| m.single_tvc_column().is_some())
        .collect();
    order.sort_by_key(|m| m.single_tvc_column().unwrap());
    for m in order {
        if counters.saturated(m.id) {
            continue;
        }
        if !m.covers_lane(ego_lane) {
            continue;
        }
        if m.matches(e) {
            return Some(TriggerDecision {
                mask_id: m.id,
                cells: m.ones.clone(),
            });
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Braking,
    LaneChange,
}

/// State of one relevant traffic vehicle at one frame sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSample {
    pub tvc: usize,
    pub lane: usize,
    pub id: VehicleId,
    pub s: f64,
    pub v: f64,
    pub a: f64,
    pub len: f64,
}

/// All stored quantities at one simulation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSample {
    pub time: f64,
    pub s_ego: f64,
    pub v_ego: f64,
    pub a_ego: f64,
    pub ego_lane: usize,
    /// Driven distance of the ego since run start.
    pub distance: f64,
    pub traffic: Vec<TrafficSample>,
    /// Distance matrix rows (one per lane), empty cells null.
    pub d: Vec<Vec<Option<f64>>>,
}

/// Captured time frame of all relevant vehicle states around one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub trigger_time: f64,
    pub event_kind: EventKind,
    pub triggered_mask_id: Option<u32>,
    pub triggered_vehicle_ids: Vec<VehicleId>,
    /// Set when the frame was truncated at run start.
    pub partial: bool,
    pub samples: Vec<FrameSample>,
}

/// Ring buffer of past frame samples, long enough to serve the lower frame
/// bound plus a small margin.
#[derive(Debug, Clone)]
pub struct HistoryRing {
    capacity: usize,
    buf: VecDeque<FrameSample>,
}

impl HistoryRing {
    pub fn new(t_lower: f64, dt: f64) -> Self {
        let capacity = (t_lower / dt).ceil() as usize + 10;
        HistoryRing {
            capacity,
            buf: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, sample: FrameSample) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(sample);
    }

    pub fn iter(&self) -> impl Iterator<Item = &FrameSample> {
        self.buf.iter()
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
}

/// An in-progress capture; seals once the upper frame bound passes.
#[derive(Debug, Clone)]
struct OpenCapture {
    record: ScenarioRecord,
    t_lower_edge: f64,
    t_upper_edge: f64,
}

/// Opens scenario captures at trigger time, seeds them from the history ring
/// and completes them as new samples arrive. Both sides of the frame are
/// open intervals: t_trigger - t_lower < t < t_trigger + t_upper.
#[derive(Debug, Clone, Default)]
pub struct CaptureManager {
    open: Vec<OpenCapture>,
    sealed: Vec<ScenarioRecord>,
}

impl CaptureManager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open_capture(
        &mut self,
        ring: &HistoryRing,
        trigger_time: f64,
        t_lower: f64,
        t_upper: f64,
        event_kind: EventKind,
        mask_id: Option<u32>,
        vehicle_ids: Vec<VehicleId>,
    ) {
        let lower_edge = trigger_time - t_lower;
        let record = ScenarioRecord {
            trigger_time,
            event_kind,
            triggered_mask_id: mask_id,
            triggered_vehicle_ids: vehicle_ids,
            partial: lower_edge < 0.0,
            samples: ring
                .iter()
                .filter(|s| s.time > lower_edge)
                .cloned()
                .collect(),
        };
        self.open.push(OpenCapture {
            record,
            t_lower_edge: lower_edge,
            t_upper_edge: trigger_time + t_upper,
        });
    }

    /// Feed the sample of the current step to every open capture (the same
    /// sample must already have been pushed to the ring by the caller).
    pub fn on_sample(&mut self, sample: &FrameSample) {
        let mut i = 0;
        while i < self.open.len() {
            let cap = &mut self.open[i];
            if sample.time >= cap.t_upper_edge {
                let done = self.open.remove(i);
                self.sealed.push(done.record);
                continue;
            }
            if sample.time > cap.t_lower_edge
                && cap
                    .record
                    .samples
                    .last()
                    .map(|last| sample.time > last.time)
                    .unwrap_or(true)
            {
                cap.record.samples.push(sample.clone());
            }
            i += 1;
        }
    }

    /// Seal everything still open (end of run).
    pub fn finish(&mut self) {
        for cap in self.open.drain(..) {
            self.sealed.push(cap.record);
        }
    }

    pub fn take_sealed(&mut self) -> Vec<ScenarioRecord> {
        std::mem::take(&mut self.sealed)
    }

    pub fn open_count(&self) -> usize {
        self.open.len()
    }
}

/// Which braking behavior manipulated vehicles execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrakeModel {
    Driver,
    Acc,
}

/// Minimum time between two braking triggers, on top of the counter caps.
/// Prevents the same standing constellation from re-triggering every step.
const BRAKE_REFRACTORY_S: f64 = 15.0;

struct ActiveManeuver {
    profile: ManeuverProfile,
    start_step: u64,
}

/// The stress-testing driver model: watches the neighbor grid, triggers
/// braking events on combination-mask matches, schedules cut-in events and
/// captures scenario time frames around both.
pub struct StmPlugin {
    params: StmParameters,
    brake_model: BrakeModel,
    driver_params: DriverBrakeParams,
    acc_params: AccBrakeParams,
    lane_count: usize,
    dt: f64,
    catalog: MaskCatalog,
    counters: EventCounter,
    ring: HistoryRing,
    captures: CaptureManager,
    lce: LceScheduler,
    active: BTreeMap<VehicleId, ActiveManeuver>,
    last_brake_trigger_t: Option<f64>,
    pub events: Vec<String>,
    trigger_count: u64,
}

impl StmPlugin {
    pub fn new(
        params: StmParameters,
        brake_model: BrakeModel,
        driver_params: DriverBrakeParams,
        acc_params: AccBrakeParams,
        lce_params: LceParams,
        lane_count: usize,
        dt: f64,
    ) -> Self {
        let catalog = MaskCatalog::for_lane_count(lane_count);
        let counters = EventCounter::new(&catalog, params.n_ct_max);
        let ring = HistoryRing::new(params.frame.lower_s, dt);
        StmPlugin {
            params,
            brake_model,
            driver_params,
            acc_params,
            lane_count,
            dt,
            catalog,
            counters,
            ring,
            captures: CaptureManager::new(),
            lce: LceScheduler::new(lce_params, lane_count),
            active: BTreeMap::new(),
            last_brake_trigger_t: None,
            events: Vec::new(),
            trigger_count: 0,
        }
    }

    pub fn counters(&self) -> &EventCounter {
        &self.counters
    }

    pub fn trigger_count(&self) -> u64 {
        self.trigger_count
    }

    pub fn lce_fired_count(&self) -> usize {
        self.lce.fired_count()
    }

    pub fn take_scenarios(&mut self) -> Vec<ScenarioRecord> {
        self.captures.take_sealed()
    }

    fn frame_sample(&self, clock: &SimClock, ego: &VehicleState, view: &NeighborView, d: &DistanceMatrix) -> FrameSample {
        let traffic = view
            .relative_map
            .occupied()
            .filter_map(|(lane, tvc, id)| {
                view.state_of(id).map(|v| TrafficSample {
                    tvc,
                    lane,
                    id,
                    s: v.s,
                    v: v.v,
                    a: v.a,
                    len: v.len,
                })
            })
            .collect();
        FrameSample {
            time: clock.t(),
            s_ego: ego.s,
            v_ego: ego.v,
            a_ego: ego.a,
            ego_lane: ego.lane,
            distance: ego.s,
            traffic,
            d: d.rows(),
        }
    }

    fn brake_profile_for(&self, v0_ms: f64) -> Result<ManeuverProfile, crate::maneuvers::ManeuverError> {
        let v_final = self.params.v_final_kmh * KMH_TO_MS;
        match self.brake_model {
            BrakeModel::Driver => driver_brake_profile(v0_ms, v_final, &self.driver_params, self.dt),
            BrakeModel::Acc => acc_brake_profile(&self.acc_params, v0_ms, v_final, self.dt),
        }
    }

    /// Advance running maneuvers; emits per-step commands and releases.
    fn drive_active(&mut self, clock: &SimClock, commands: &mut Vec<VehicleCommand>) {
        let mut done = Vec::new();
        for (&id, m) in &self.active {
            let step = (clock.step_index - m.start_step) as usize;
            match m.profile.sample_at_step(step) {
                Some(s) => {
                    let lat = (m.profile.kind == ManeuverKind::LaneChange).then_some(s.y_lat_rate);
                    commands.push(VehicleCommand::control(id, Some(s.a), lat));
                }
                None => {
                    commands.push(VehicleCommand::release(id));
                    done.push(id);
                }
            }
        }
        for id in done {
            self.active.remove(&id);
            self.events.push(format!("t={:.2} release vehicle={}", clock.t(), id));
        }
    }

    fn try_brake_trigger(
        &mut self,
        clock: &SimClock,
        ego: &VehicleState,
        view: &NeighborView,
        e: &EventMatrix,
        commands: &mut Vec<VehicleCommand>,
    ) {
        if !self.active.is_empty() {
            return;
        }
        if let Some(last) = self.last_brake_trigger_t {
            if clock.t() - last < BRAKE_REFRACTORY_S {
                return;
            }
        }
        let Some(decision) = match_combinations(e, &self.catalog, &self.counters, ego.lane) else {
            return;
        };
        let mut braked = Vec::new();
        for cell in &decision.cells {
            let Some(id) = view.relative_map.get(cell.lane, cell.tvc) else {
                continue;
            };
            let Some(v) = view.state_of(id) else { continue };
            if v.controlled_by != ControlledBy::InternalModel {
                continue;
            }
            match self.brake_profile_for(v.v) {
                Ok(profile) => {
                    if let Some(s) = profile.sample_at_step(0) {
                        commands.push(VehicleCommand::control(id, Some(s.a), None));
                    }
                    self.active.insert(id, ActiveManeuver { profile, start_step: clock.step_index });
                    braked.push(id);
                }
                Err(err) => {
                    self.events.push(format!(
                        "t={:.2} skip vehicle={} mask={}: {}",
                        clock.t(), id, decision.mask_id, err
                    ));
                }
            }
        }
        if braked.is_empty() {
            return;
        }
        self.counters.increment(decision.mask_id);
        self.trigger_count += 1;
        self.last_brake_trigger_t = Some(clock.t());
        self.events.push(format!(
            "t={:.2} brake trigger mask={} vehicles={:?} count={}/{}",
            clock.t(),
            decision.mask_id,
            braked,
            self.counters.count(decision.mask_id),
            self.counters.n_ct_max
        ));
        self.captures.open_capture(
            &self.ring,
            clock.t(),
            self.params.frame.lower_s,
            self.params.frame.upper_s,
            EventKind::Braking,
            Some(decision.mask_id),
            braked,
        );
    }

    fn try_lane_change_event(
        &mut self,
        clock: &SimClock,
        ego: &VehicleState,
        view: &NeighborView,
        commands: &mut Vec<VehicleCommand>,
    ) {
        if !self.active.is_empty() {
            return;
        }
        let Some((id, dir)) = self.lce.poll(clock.t(), ego, &view.flat, self.lane_count) else {
            return;
        };
        let v_m = view.state_of(id).map(|v| v.v).unwrap_or(ego.v);
        let profile = lane_change_trajectory(&self.lce_params_clone(), v_m, dir, self.dt);
        if let Some(s) = profile.sample_at_step(0) {
            commands.push(VehicleCommand::control(id, Some(s.a), Some(s.y_lat_rate)));
        }
        self.active.insert(id, ActiveManeuver { profile, start_step: clock.step_index });
        self.events.push(format!(
            "t={:.2} cut-in vehicle={} direction={:?}",
            clock.t(), id, dir
        ));
        self.captures.open_capture(
            &self.ring,
            clock.t(),
            self.params.frame.lower_s,
            self.params.frame.upper_s,
            EventKind::LaneChange,
            None,
            vec![id],
        );
    }

    fn lce_params_clone(&self) -> LceParams {
        self.lce.params().clone()
    }
}

impl InjectorPlugin for StmPlugin {
    fn on_start(&mut self, settings: &InjectorSettings) {
        debug_assert_eq!(settings.sit_s, self.params.sit_s);
    }

    fn inject(
        &mut self,
        clock: &SimClock,
        ego: &VehicleState,
        view: &NeighborView,
    ) -> Vec<VehicleCommand> {
        let bands = tvc_bands(ego.v, self.params.sit_s, self.params.t_max_s);
        let d = distance_matrix(ego, view);
        let e = compute_tem(&d, &bands);

        let sample = self.frame_sample(clock, ego, view, &d);
        self.ring.push(sample.clone());
        self.captures.on_sample(&sample);

        let mut commands = Vec::new();
        self.drive_active(clock, &mut commands);
        self.try_brake_trigger(clock, ego, view, &e, &mut commands);
        self.try_lane_change_event(clock, ego, view, &mut commands);
        commands
    }

    fn on_finish(&mut self, _km_driven: f64) {
        self.captures.finish();
    }
}

/// Shared handle so the runner keeps access to the plugin after handing it to
/// the world. Worlds are single threaded.
impl InjectorPlugin for Rc<RefCell<StmPlugin>> {
    fn on_start(&mut self, settings: &InjectorSettings) {
        self.borrow_mut().on_start(settings);
    }

    fn inject(
        &mut self,
        clock: &SimClock,
        ego: &VehicleState,
        view: &NeighborView,
    ) -> Vec<VehicleCommand> {
        self.borrow_mut().inject(clock, ego, view)
    }

    fn on_finish(&mut self, km_driven: f64) {
        self.borrow_mut().on_finish(km_driven);
    }
}
