use stresslane_core::injector::*;
use stresslane_core::world::{ControlledBy, RoadConfig, SimClock, VehicleKind, VehicleState};
use stresslane_core::{EgoControllerParams, TrafficDemand, VehicleId, World};

fn state(id: VehicleId, lane: usize, s: f64, v: f64) -> VehicleState {
    VehicleState {
        id,
        kind: if id == 0 {
            VehicleKind::Ego
        } else {
            VehicleKind::Traffic
        },
        lane,
        s,
        y_lat: 0.0,
        v,
        a: 0.0,
        len: 4.5,
        controlled_by: ControlledBy::InternalModel,
    }
}

#[test]
fn missing_ego_yields_empty_view() {
    let view = extract_neighbors(&[state(5, 1, 0.0, 20.0)], &InjectorSettings::default(), 3);
    assert!(view.ego_missing);
    assert!(view.ego.is_none());
    assert!(view.flat.is_empty());
    assert!(view.relative_map.occupied().next().is_none());
}

#[test]
fn single_neighbor_lands_in_first_band() {
    // Ego at 30 m/s: bands at 60/120/180/240 m; a vehicle 70 m ahead in the
    // ego's lane occupies the first band cell of that lane.
    let vehicles = [state(0, 2, 1000.0, 30.0), state(7, 2, 1070.0, 25.0)];
    let view = extract_neighbors(&vehicles, &InjectorSettings::default(), 3);
    assert!(!view.ego_missing);
    assert_eq!(view.relative_map.get(2, 1), Some(7));
    for (lane, tvc) in [(1, 1), (3, 1), (2, 2), (2, 3)] {
        assert_eq!(view.relative_map.get(lane, tvc), None);
    }
    assert_eq!(view.flat.len(), 1);
    assert_eq!(view.state_of(7).unwrap().v, 25.0);
}

#[test]
fn nearest_vehicle_wins_the_cell() {
    let vehicles = [
        state(0, 2, 1000.0, 30.0),
        state(7, 2, 1080.0, 25.0),
        state(3, 2, 1070.0, 26.0),
    ];
    let view = extract_neighbors(&vehicles, &InjectorSettings::default(), 3);
    assert_eq!(view.relative_map.get(2, 1), Some(3));
    // Both are still in the flat list.
    assert_eq!(view.flat.len(), 2);
}

#[test]
fn equal_distance_ties_break_to_lower_id() {
    let vehicles = [
        state(0, 2, 1000.0, 30.0),
        state(9, 2, 1070.0, 25.0),
        state(4, 2, 1070.0, 26.0),
    ];
    let view = extract_neighbors(&vehicles, &InjectorSettings::default(), 3);
    assert_eq!(view.relative_map.get(2, 1), Some(4));
}

#[test]
fn threshold_and_front_only_filters() {
    let vehicles = [
        state(0, 2, 1000.0, 30.0),
        state(1, 2, 1350.0, 25.0), // beyond the 300 m radius
        state(2, 2, 900.0, 25.0),  // behind the ego
    ];
    let view = extract_neighbors(&vehicles, &InjectorSettings::default(), 3);
    assert_eq!(view.flat.len(), 1);
    assert_eq!(view.flat[0].id, 2);
    // Behind the ego means no band cell.
    assert!(view.relative_map.occupied().next().is_none());

    let front_only = InjectorSettings {
        front_only: true,
        ..InjectorSettings::default()
    };
    let view = extract_neighbors(&vehicles, &front_only, 3);
    assert!(view.flat.is_empty());
}

#[test]
fn release_with_overrides_is_invalid() {
    assert!(VehicleCommand::control(3, Some(-3.0), None).is_valid());
    assert!(VehicleCommand::release(3).is_valid());
    let bad = VehicleCommand {
        target_id: 3,
        accel_override: Some(-3.0),
        lateral_rate: None,
        release: true,
    };
    assert!(!bad.is_valid());
}

fn quiet_world(dt: f64) -> World {
    let demand = TrafficDemand {
        inflow_per_lane_veh_h: 0.0,
        seed: 1,
        ..TrafficDemand::default()
    };
    World::new(RoadConfig::default(), demand, EgoControllerParams::default(), dt)
}

/// Plugin that issues a fixed command list keyed by step index.
struct ScriptedPlugin {
    script: Vec<(u64, VehicleCommand)>,
}

impl InjectorPlugin for ScriptedPlugin {
    fn inject(
        &mut self,
        clock: &SimClock,
        _ego: &VehicleState,
        _view: &NeighborView,
    ) -> Vec<VehicleCommand> {
        self.script
            .iter()
            .filter(|(step, _)| *step == clock.step_index)
            .map(|(_, cmd)| *cmd)
            .collect()
    }
}

#[test]
fn second_plugin_registration_fails() {
    let mut world = quiet_world(0.1);
    world
        .register_plugin(Box::new(ScriptedPlugin { script: vec![] }), InjectorSettings::default())
        .unwrap();
    let err = world
        .register_plugin(Box::new(ScriptedPlugin { script: vec![] }), InjectorSettings::default())
        .unwrap_err();
    assert_eq!(err.to_string(), "injector already installed");
}

#[test]
fn command_issued_between_apply_steps_takes_effect_on_the_next_one() {
    let mut world = quiet_world(0.1);
    let target = world.add_vehicle(2, 200.0, 25.0, 25.0);
    let settings = InjectorSettings {
        apply_every_n_steps: 5,
        ..InjectorSettings::default()
    };
    let plugin = ScriptedPlugin {
        script: vec![(3, VehicleCommand::control(target, Some(-3.0), None))],
    };
    world.register_plugin(Box::new(plugin), settings).unwrap();

    let find = |w: &World| {
        w.vehicle_states()
            .into_iter()
            .find(|v| v.id == target)
            .unwrap()
    };
    // Steps 0..=4: the command sits in the buffer, the internal model drives.
    for _ in 0..5 {
        let r = world.step();
        assert!(!r.override_applied);
        assert_ne!(find(&world).a, -3.0);
        assert_eq!(find(&world).controlled_by, ControlledBy::InternalModel);
    }
    // Step 5 is an apply step: the override lands before the advance.
    let r = world.step();
    assert!(r.override_applied);
    let v = find(&world);
    assert_eq!(v.a, -3.0);
    assert_eq!(v.controlled_by, ControlledBy::StmPlugin);
}

#[test]
fn release_returns_vehicle_to_internal_model() {
    let mut world = quiet_world(0.1);
    let target = world.add_vehicle(2, 200.0, 25.0, 25.0);
    let plugin = ScriptedPlugin {
        script: vec![
            (0, VehicleCommand::control(target, Some(-3.0), None)),
            (10, VehicleCommand::release(target)),
        ],
    };
    world
        .register_plugin(Box::new(plugin), InjectorSettings::default())
        .unwrap();
    let find = |w: &World| {
        w.vehicle_states()
            .into_iter()
            .find(|v| v.id == target)
            .unwrap()
    };
    world.step();
    assert_eq!(find(&world).a, -3.0);
    for _ in 0..10 {
        world.step();
    }
    let v = find(&world);
    assert_eq!(v.controlled_by, ControlledBy::InternalModel);
    assert_ne!(v.a, -3.0);
}

#[test]
fn invalid_and_unknown_commands_are_logged_not_applied() {
    let mut world = quiet_world(0.1);
    let target = world.add_vehicle(2, 200.0, 25.0, 25.0);
    let bad = VehicleCommand {
        target_id: target,
        accel_override: Some(-3.0),
        lateral_rate: None,
        release: true,
    };
    let plugin = ScriptedPlugin {
        script: vec![(0, bad), (1, VehicleCommand::control(999, Some(-1.0), None))],
    };
    world
        .register_plugin(Box::new(plugin), InjectorSettings::default())
        .unwrap();
    world.step();
    world.step();
    assert_eq!(world.incidents.len(), 2);
    assert!(world.incidents[0].contains("invalid command"));
    assert!(world.incidents[1].contains("unknown vehicle"));
    let v = world
        .vehicle_states()
        .into_iter()
        .find(|v| v.id == target)
        .unwrap();
    assert_eq!(v.controlled_by, ControlledBy::InternalModel);
}

/// A plugin that observes but never commands must not perturb the run.
struct IdentityPlugin;

impl InjectorPlugin for IdentityPlugin {
    fn inject(
        &mut self,
        _clock: &SimClock,
        _ego: &VehicleState,
        _view: &NeighborView,
    ) -> Vec<VehicleCommand> {
        Vec::new()
    }
}

#[test]
fn identity_plugin_leaves_the_run_bitwise_identical() {
    for seed in [1u64, 7, 42] {
        let demand = TrafficDemand {
            seed,
            ..TrafficDemand::default()
        };
        let mut plain = World::new(
            RoadConfig::default(),
            demand.clone(),
            EgoControllerParams::default(),
            0.1,
        );
        let mut observed = World::new(
            RoadConfig::default(),
            demand,
            EgoControllerParams::default(),
            0.1,
        );
        observed
            .register_plugin(Box::new(IdentityPlugin), InjectorSettings::default())
            .unwrap();
        for _ in 0..2000 {
            plain.step();
            observed.step();
        }
        assert_eq!(plain.vehicle_states(), observed.vehicle_states(), "seed {seed}");
    }
}
