use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use stresslane_core::maneuvers::*;

const DT: f64 = 0.1;

#[test]
fn quintic_coefficients_match_reference_magnitudes() {
    let (h, t_m): (f64, f64) = (3.5, 5.0);
    let c5 = 6.0 * h / t_m.powi(5);
    let c4 = 15.0 * h / t_m.powi(4);
    let c3 = 10.0 * h / t_m.powi(3);
    assert!((c5 - 0.00672).abs() < 5e-4);
    assert!((c4 - 0.0840).abs() < 5e-4);
    assert!((c3 - 0.2800).abs() < 5e-4);
    // The closed form used by the model equals the coefficient expansion.
    for k in 0..=50 {
        let t = k as f64 * t_m / 50.0;
        let poly = c5 * t.powi(5) - c4 * t.powi(4) + c3 * t.powi(3);
        assert_abs_diff_eq!(lane_change_lateral(t, h, t_m), poly.abs(), epsilon = 1e-9);
    }
}

#[test]
fn quintic_endpoint_and_midpoint() {
    let (h, t_m) = (3.5, 5.0);
    assert!((lane_change_lateral(t_m, h, t_m) - h).abs() < 1e-9);
    assert!((lane_change_lateral(t_m / 2.0, h, t_m) - h / 2.0).abs() < 1e-12);
}

#[test]
fn quintic_rate_vanishes_at_both_ends() {
    let (h, t_m) = (3.5, 5.0);
    assert_eq!(lane_change_lateral_rate(0.0, h, t_m), 0.0);
    assert_eq!(lane_change_lateral_rate(t_m, h, t_m), 0.0);
    assert!(lane_change_lateral_rate(t_m / 2.0, h, t_m) > 0.0);
}

#[test]
fn lane_change_accel_peaks_at_quarter_period() {
    let params = LceParams {
        t_m_s: 6.0,
        a_max_ms2: 1.2,
        ..LceParams::default()
    };
    let p = lane_change_trajectory(&params, 25.0, LaneChangeDirection::Right, 0.01);
    let peak_step = (params.t_m_s / 4.0 / 0.01).round() as usize;
    assert_abs_diff_eq!(p.samples[peak_step].a, 1.2, epsilon = 1e-9);
    let max = p.samples.iter().map(|s| s.a).fold(f64::MIN, f64::max);
    assert_abs_diff_eq!(max, 1.2, epsilon = 1e-6);
}

#[test]
fn lane_change_direction_sign() {
    let params = LceParams::default();
    let left = lane_change_trajectory(&params, 25.0, LaneChangeDirection::Left, DT);
    let right = lane_change_trajectory(&params, 25.0, LaneChangeDirection::Right, DT);
    assert!(left.samples.last().unwrap().y_lat < 0.0);
    assert!(right.samples.last().unwrap().y_lat > 0.0);
}

proptest! {
    #[test]
    fn quintic_displacement_is_monotone(h in 1.0f64..6.0, t_m in 2.0f64..10.0) {
        let mut prev = -1e-12;
        for k in 0..=200 {
            let t = k as f64 * t_m / 200.0;
            let y = lane_change_lateral(t, h, t_m);
            prop_assert!(y >= prev - 1e-12);
            prev = y;
        }
        prop_assert!((prev - h).abs() < 1e-9);
    }
}

// Closed-form deceleration pulse used by the driver model, integrated with
// Simpson's rule at a far finer resolution than the runtime profile.
fn quadrature_delta_v(v0: f64, vf: f64, t_d: f64, m: f64) -> f64 {
    let a_peak = derived_peak_decel(v0, vf, t_d, m);
    let pulse_peak = {
        let x = (1.0 / (1.0 + 2.0 * m)).powf(1.0 / m);
        let p = 1.0 - x.powf(m);
        x * p * p
    };
    let scale = a_peak / pulse_peak;
    let a = |t: f64| {
        let x = t / t_d;
        let p = 1.0 - x.powf(m);
        scale * x * p * p
    };
    let n = 12_000; // even
    let h = t_d / n as f64;
    let mut acc = a(0.0) + a(t_d);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * a(k as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn driver_brake_peak_matches_reference_case() {
    let v0 = 71.03 * KMH_TO_MS;
    let vf = 28.67 * KMH_TO_MS;
    let peak = derived_peak_decel(v0, vf, 12.0, 1.0);
    assert!((peak - (-1.71)).abs() / 1.71 < 0.05, "peak {peak}");
}

#[test]
fn driver_brake_delta_v_matches_quadrature_oracle() {
    let cases = [
        (71.03 * KMH_TO_MS, 28.67 * KMH_TO_MS, 12.0, 1.0),
        (30.0, 10.0, 15.0, 1.0),
        (25.0, 5.555, 10.5, 2.0),
    ];
    for (v0, vf, t_d, m) in cases {
        let oracle = quadrature_delta_v(v0, vf, t_d, m);
        assert!((oracle - (vf - v0)).abs() < 1e-6, "quadrature self-check");
        let params = DriverBrakeParams {
            t_d_s: t_d,
            shape_m: m,
            ..DriverBrakeParams::default()
        };
        let profile = driver_brake_profile(v0, vf, &params, t_d / 12_000.0).unwrap();
        assert!(
            (profile.integrated_delta_v() - (vf - v0)).abs() < 1e-3,
            "profile integral off for v0={v0}"
        );
    }
}

#[test]
fn driver_brake_no_speed_reduction_gives_zero_profile() {
    let p = driver_brake_profile(10.0, 10.0, &DriverBrakeParams::default(), DT).unwrap();
    assert!(p.samples.iter().all(|s| s.a == 0.0));
}

#[test]
fn driver_brake_rejects_infeasible_demand() {
    // Slowing 50 m/s to 0 in 12 s needs a peak beyond the hard limit.
    let err = driver_brake_profile(60.0, 0.0, &DriverBrakeParams::default(), DT).unwrap_err();
    assert!(matches!(err, ManeuverError::InfeasibleBrakingDemand(_)));
}

#[test]
fn acc_brake_transition_vertex() {
    let params = AccBrakeParams::default(); // a0=0, a1=-3, jerk 1.5
    let dt = 0.001;
    let p = acc_brake_profile(&params, 70.97 * KMH_TO_MS, 42.25 * KMH_TO_MS, dt).unwrap();
    let delta = 2.0 * 3.0 / 1.5;
    assert_abs_diff_eq!(delta, 4.0);
    let k = (delta / dt).round() as usize;
    assert_abs_diff_eq!(p.samples[k].a, -3.0, epsilon = 1e-6);
    // Zero slope at the vertex.
    let slope = (p.samples[k].a - p.samples[k - 1].a) / dt;
    assert!(slope.abs() < 0.01, "slope {slope}");
}

#[test]
fn acc_brake_jerk_never_exceeds_cap() {
    let params = AccBrakeParams::default();
    for dt in [0.1, 0.01] {
        let p = acc_brake_profile(&params, 70.97 * KMH_TO_MS, 42.25 * KMH_TO_MS, dt).unwrap();
        for w in p.samples.windows(2) {
            let jerk = (w[1].a - w[0].a).abs() / dt;
            assert!(jerk <= 1.5 + 1e-6, "jerk {jerk} at dt {dt}");
        }
    }
}

#[test]
fn acc_brake_reaches_reference_speed_after_ramp_in() {
    // Speed once the deceleration build-up (and any hold) has finished.
    let params = AccBrakeParams::default();
    let dt = 0.001;
    let v0 = 70.97 * KMH_TO_MS;
    let p = acc_brake_profile(&params, v0, 42.25 * KMH_TO_MS, dt).unwrap();
    let ramp_steps = (4.0 / dt).round() as usize;
    let mut v = v0;
    for w in p.samples.windows(2).take(ramp_steps) {
        v += 0.5 * (w[0].a + w[1].a) * dt;
    }
    assert!(
        (v * MS_TO_KMH - 42.25).abs() < 0.5,
        "speed after ramp-in {}",
        v * MS_TO_KMH
    );
}

#[test]
fn acc_brake_degenerate_constant_segment() {
    let params = AccBrakeParams {
        a0_ms2: -2.0,
        a1_ms2: -2.0,
        jerk_ms3: 1.5,
    };
    let p = acc_brake_profile(&params, 30.0, 20.0, DT).unwrap();
    // No transition: profile starts directly at the hold value.
    assert_abs_diff_eq!(p.samples[0].a, -2.0, epsilon = 1e-9);
    let held = p
        .samples
        .iter()
        .filter(|s| (s.a - (-2.0)).abs() < 1e-9)
        .count();
    assert!(held > p.len() / 2);
}

#[test]
fn acc_brake_errors() {
    let err = acc_brake_profile(&AccBrakeParams::default(), 10.0, 12.0, DT).unwrap_err();
    assert!(matches!(err, ManeuverError::NoSpeedReduction));
    let steep = AccBrakeParams {
        a1_ms2: -4.0,
        ..AccBrakeParams::default()
    };
    let err = acc_brake_profile(&steep, 25.0, 10.0, DT).unwrap_err();
    assert!(matches!(err, ManeuverError::DecelAboveIsoCap { .. }));
}

#[test]
fn iso_limit_interpolation() {
    assert_eq!(iso_limits(25.0), (3.5, 2.5));
    assert_eq!(iso_limits(3.0), (5.0, 5.0));
    assert_eq!(iso_limits(12.5), (4.25, 3.75));
}

#[test]
fn decel_table_defined_cells() {
    let table = DecelLookup::new();
    let e = table.lookup(75.0, 65.0).unwrap();
    assert_eq!(e.decel_ms2, 0.78);
    assert!(!e.fallback);
    let e = table.lookup(85.0, 15.0).unwrap();
    assert_eq!(e.decel_ms2, 1.9);
    let e = table.lookup(45.0, 45.0).unwrap();
    assert_eq!(e.decel_ms2, 0.67);
}

#[test]
fn decel_table_fallback_and_domain() {
    let table = DecelLookup::new();
    // (40-50 approach, 50-60 interval) is undefined; nearest defined row in
    // that column is 40-50.
    let e = table.lookup(45.0, 55.0).unwrap();
    assert!(e.fallback);
    assert_eq!(e.decel_ms2, 0.67);
    assert!(matches!(
        table.lookup(30.0, 20.0),
        Err(LookupError::ApproachOutOfDomain(_))
    ));
    assert!(matches!(
        table.lookup(50.0, 95.0),
        Err(LookupError::SpeedOutOfDomain(_))
    ));
}

mod scheduler {
    use super::*;
    use stresslane_core::{ControlledBy, VehicleKind, VehicleState};

    fn veh(id: u64, lane: usize, s: f64) -> VehicleState {
        VehicleState {
            id,
            kind: VehicleKind::Traffic,
            lane,
            s,
            y_lat: 0.0,
            v: 25.0,
            a: 0.0,
            len: 4.5,
            controlled_by: ControlledBy::InternalModel,
        }
    }

    fn ego(lane: usize) -> VehicleState {
        VehicleState {
            id: 0,
            kind: VehicleKind::Ego,
            lane,
            s: 100.0,
            y_lat: 0.0,
            v: 30.0,
            a: 0.0,
            len: 4.5,
            controlled_by: ControlledBy::InternalModel,
        }
    }

    #[test]
    fn no_candidates_means_no_events() {
        let mut sched = LceScheduler::new(LceParams::default(), 3);
        let ego = ego(2);
        for step in 0..10_000 {
            assert!(sched.poll(step as f64 * 0.1, &ego, &[], 3).is_none());
        }
        assert_eq!(sched.fired_count(), 0);
    }

    #[test]
    fn respects_init_time_and_minimum_interval() {
        let params = LceParams {
            init_times_s: vec![120.0],
            t_int_min_s: 300.0,
            ..LceParams::default()
        };
        let mut sched = LceScheduler::new(params, 3);
        let ego = ego(2);
        // Candidates on both sides the whole time.
        let neighbors = [veh(1, 1, 110.0), veh(2, 3, 115.0)];
        let mut fire_times = Vec::new();
        for step in 0..20_000u64 {
            let t = step as f64 * 0.1;
            if sched.poll(t, &ego, &neighbors, 3).is_some() {
                fire_times.push(t);
            }
        }
        assert!(!fire_times.is_empty());
        assert!(fire_times[0] >= 120.0);
        for w in fire_times.windows(2) {
            assert!(w[1] - w[0] >= 300.0, "gap {} too small", w[1] - w[0]);
        }
    }

    #[test]
    fn two_lane_catalog_has_no_either_class() {
        // On a 2-lane road the ego has one adjacent lane per side; only the
        // two directed cut-in classes exist, so with a candidate on a single
        // side every other event is skipped via patience.
        let params = LceParams {
            init_times_s: vec![0.0],
            t_int_min_s: 10.0,
            ..LceParams::default()
        };
        let mut sched = LceScheduler::new(params, 2);
        let e = ego(2);
        let neighbors = [veh(1, 1, 110.0)]; // only a left-side candidate
        let mut fired = 0;
        for step in 0..5_000u64 {
            if sched.poll(step as f64 * 0.1, &e, &neighbors, 2).is_some() {
                fired += 1;
            }
        }
        // FromLeft fires, FromRight starves until patience rotates past it.
        assert!(fired >= 2);
    }
}
