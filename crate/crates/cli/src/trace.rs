//! Plot-ready (t, value) series for the three behavior models.

use anyhow::Result;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use stresslane_core::maneuvers::{
    acc_brake_profile, driver_brake_profile, lane_change_trajectory, LaneChangeDirection,
    ManeuverProfile, KMH_TO_MS,
};
use stresslane_core::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    DriverBrake,
    AccBrake,
    LaneChange,
}

impl std::str::FromStr for TraceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "driver_brake" => Ok(TraceKind::DriverBrake),
            "acc_brake" => Ok(TraceKind::AccBrake),
            "lane_change" => Ok(TraceKind::LaneChange),
            other => Err(format!(
                "unknown trace kind '{other}', expected driver_brake | acc_brake | lane_change"
            )),
        }
    }
}

/// Reference speeds for the braking traces, km/h.
const DRIVER_TRACE_V0_KMH: f64 = 71.03;
const DRIVER_TRACE_VFINAL_KMH: f64 = 28.67;
const ACC_TRACE_V0_KMH: f64 = 70.97;
const ACC_TRACE_VFINAL_KMH: f64 = 42.25;

fn series(profile: &ManeuverProfile, f: impl Fn(usize) -> f64) -> String {
    let mut s = String::new();
    for k in 0..profile.len() {
        let _ = writeln!(s, "{:.3}\t{:.6}", k as f64 * profile.dt, f(k));
    }
    s
}

fn speed_series(profile: &ManeuverProfile, v0_ms: f64) -> Vec<f64> {
    // Trapezoidal speed integration matching the profile sampling.
    let mut v = v0_ms;
    let mut out = vec![v0_ms];
    for w in profile.samples.windows(2) {
        v += 0.5 * (w[0].a + w[1].a) * profile.dt;
        out.push(v);
    }
    out
}

/// Write one file per plotted quantity into `out`. Returns the file names.
pub fn emit_trace(kind: TraceKind, cfg: &SimConfig, out: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(out)?;
    let dt = cfg.run.dt_s;
    let mut written = Vec::new();
    let mut put = |name: &str, content: String| -> Result<()> {
        fs::write(out.join(name), content)?;
        written.push(name.to_string());
        Ok(())
    };
    match kind {
        TraceKind::DriverBrake => {
            let p = driver_brake_profile(
                DRIVER_TRACE_V0_KMH * KMH_TO_MS,
                DRIVER_TRACE_VFINAL_KMH * KMH_TO_MS,
                &cfg.braking.driver,
                dt,
            )?;
            let v = speed_series(&p, DRIVER_TRACE_V0_KMH * KMH_TO_MS);
            put("trace_driver_brake_decel.tsv", series(&p, |k| p.samples[k].a))?;
            put("trace_driver_brake_speed.tsv", series(&p, |k| v[k]))?;
        }
        TraceKind::AccBrake => {
            let p = acc_brake_profile(
                &cfg.braking.acc,
                ACC_TRACE_V0_KMH * KMH_TO_MS,
                ACC_TRACE_VFINAL_KMH * KMH_TO_MS,
                dt,
            )?;
            let v = speed_series(&p, ACC_TRACE_V0_KMH * KMH_TO_MS);
            put("trace_acc_brake_decel.tsv", series(&p, |k| p.samples[k].a))?;
            put("trace_acc_brake_speed.tsv", series(&p, |k| v[k]))?;
        }
        TraceKind::LaneChange => {
            let p = lane_change_trajectory(
                &cfg.lce,
                cfg.traffic.desired_speed_mean_ms,
                LaneChangeDirection::Right,
                dt,
            );
            put("trace_lane_change_ylat.tsv", series(&p, |k| p.samples[k].y_lat))?;
            put("trace_lane_change_accel.tsv", series(&p, |k| p.samples[k].a))?;
        }
    }
    Ok(written)
}
