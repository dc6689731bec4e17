use stresslane_core::world::ConfigError;
use stresslane_core::SimConfig;

fn violation_keys(err: ConfigError) -> Vec<String> {
    match err {
        ConfigError::Invalid(v) => v.into_iter().map(|x| x.key).collect(),
        other => panic!("expected violations, got {other}"),
    }
}

fn violations(err: ConfigError) -> Vec<(String, String)> {
    match err {
        ConfigError::Invalid(v) => v.into_iter().map(|x| (x.key, x.message)).collect(),
        other => panic!("expected violations, got {other}"),
    }
}

#[test]
fn empty_input_parses_to_the_default_configuration() {
    let cfg = SimConfig::from_toml("").unwrap();
    assert_eq!(cfg, SimConfig::default());
    assert_eq!(cfg.road.lanes, 3);
    assert_eq!(cfg.stm.sit_s, [2.0, 4.0, 6.0]);
    assert_eq!(cfg.run.km, 200.0);
    cfg.validate().unwrap();
}

#[test]
fn reference_parameterization_is_valid() {
    let text = r#"
        [road]
        lanes = 3

        [stm]
        sit_s = [2.0, 4.0, 6.0]
        t_max_s = 8.0
        n_ct_max = 10
        v_final_kmh = 20.0

        [braking]
        model = "driver"
        t_d_s = 12.0
        a_peak_ms2 = -1.7
        shape_m = 1.0
        a1_ms2 = -3.0
        jerk_ms3 = 1.5

        [lce]
        t_m_s = 6.0
        h_m = 3.5
        a_max_ms2 = 1.2
        t_int_min_s = 300.0
        init_times_s = [120.0]

        [run]
        seed = 1
        km = 200.0
        dt_s = 0.1
    "#;
    let cfg = SimConfig::from_toml(text).unwrap();
    assert_eq!(cfg.braking.driver.t_d_s, 12.0);
    assert_eq!(cfg.lce.t_int_min_s, 300.0);
}

#[test]
fn malformed_toml_is_a_parse_error() {
    let err = SimConfig::from_toml("[road\nlanes = 3").unwrap_err();
    assert!(matches!(err, ConfigError::Parse(_)));
}

#[test]
fn four_lanes_are_rejected_with_the_exact_message() {
    let err = SimConfig::from_toml("[road]\nlanes = 4").unwrap_err();
    let v = violations(err);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].0, "road.lanes");
    assert_eq!(v[0].1, "lane_count must be 2 or 3");
}

#[test]
fn non_increasing_safety_intervals_are_rejected() {
    let err = SimConfig::from_toml("[stm]\nsit_s = [4.0, 2.0, 6.0]").unwrap_err();
    let v = violations(err);
    assert!(v
        .iter()
        .any(|(k, m)| k == "stm.sit_s" && m == "sit not strictly increasing"));
}

#[test]
fn braking_duration_must_stay_in_the_observed_range() {
    for t_d in [5.0, 20.0] {
        let err = SimConfig::from_toml(&format!("[braking]\nt_d_s = {t_d}")).unwrap_err();
        assert!(violation_keys(err).contains(&"braking.t_d_s".to_string()));
    }
    SimConfig::from_toml("[braking]\nt_d_s = 10.1").unwrap();
    SimConfig::from_toml("[braking]\nt_d_s = 17.2").unwrap();
}

#[test]
fn zero_distance_and_bad_dt_are_rejected() {
    let err = SimConfig::from_toml("[run]\nkm = 0.0").unwrap_err();
    assert_eq!(violation_keys(err), vec!["run.km"]);
    let err = SimConfig::from_toml("[run]\ndt_s = 0.0").unwrap_err();
    assert_eq!(violation_keys(err), vec!["run.dt_s"]);
    let err = SimConfig::from_toml("[run]\ndt_s = 0.6").unwrap_err();
    assert_eq!(violation_keys(err), vec!["run.dt_s"]);
}

#[test]
fn every_violation_is_reported_at_once() {
    let text = r#"
        [road]
        lanes = 5

        [stm]
        sit_s = [6.0, 4.0, 2.0]

        [run]
        km = -1.0
    "#;
    let keys = violation_keys(SimConfig::from_toml(text).unwrap_err());
    for expected in ["road.lanes", "stm.sit_s", "run.km"] {
        assert!(keys.contains(&expected.to_string()), "missing {expected}");
    }
}

#[test]
fn acc_brake_parameter_ordering_is_enforced() {
    // a0 below a1 breaks the transition direction.
    let err = SimConfig::from_toml("[braking]\na0_ms2 = -4.0\na1_ms2 = -3.0").unwrap_err();
    assert!(violation_keys(err).contains(&"braking.a0_ms2".to_string()));
    let err = SimConfig::from_toml("[braking]\na1_ms2 = 1.0").unwrap_err();
    assert!(violation_keys(err).contains(&"braking.a1_ms2".to_string()));
}

#[test]
fn threshold_ordering_is_enforced() {
    let err = SimConfig::from_toml("[thresholds]\nttb_very_s = 2.0").unwrap_err();
    assert!(violation_keys(err).contains(&"thresholds.ttb_very_s".to_string()));
    let err =
        SimConfig::from_toml("[thresholds]\nreq_decel_eventually_ms2 = 6.0").unwrap_err();
    assert!(violation_keys(err).contains(&"thresholds.req_decel_eventually_ms2".to_string()));
}

#[test]
fn configuration_round_trips_through_toml() {
    let cfg = SimConfig::default();
    let text = toml::to_string(&cfg).unwrap();
    let back = SimConfig::from_toml(&text).unwrap();
    assert_eq!(cfg, back);
}

#[test]
fn violation_list_prints_every_entry() {
    let err = SimConfig::from_toml("[road]\nlanes = 4\n[run]\nkm = 0.0").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("road.lanes"));
    assert!(msg.contains("run.km"));
}
