//! Batch execution: one world per (seed, stm-mode), paired runs for
//! comparison, and artifact serialization.

use anyhow::{bail, Context, Result};
use std::cell::RefCell;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::rc::Rc;
use stresslane_core::evaluation::CriticalityMonitor;
use stresslane_core::stm::ScenarioRecord;
use stresslane_core::{
    InjectorSettings, RunSummary, SimConfig, SpawnMode, StmPlugin, World,
};

/// Moving traffic window around the ego used for batch runs.
const WINDOW_FRONT_M: f64 = 1500.0;
const WINDOW_REAR_M: f64 = 500.0;

/// Everything produced by one run.
pub struct RunOutcome {
    pub summary: RunSummary,
    pub scenarios: Vec<ScenarioRecord>,
    pub events: Vec<String>,
    pub incidents: Vec<String>,
    pub trigger_count: u64,
    pub lce_fired: usize,
}

/// Execute one seeded run to the configured distance.
pub fn run_once(cfg: &SimConfig, seed: u64, stm_on: bool) -> Result<RunOutcome> {
    let mut road = cfg.road.clone();
    // The window spawner needs road ahead of the ego for the whole run.
    road.length_m = road.length_m.max(cfg.run.km * 1000.0 + 10_000.0);
    let mut demand = cfg.traffic.clone();
    demand.seed = if demand.seed == 0 { seed } else { demand.seed ^ seed };

    let mut world = World::new(road, demand, cfg.ego.clone(), cfg.run.dt_s);
    world.set_spawn_mode(SpawnMode::Window {
        front_m: WINDOW_FRONT_M,
        rear_m: WINDOW_REAR_M,
    });

    let plugin = if stm_on {
        let handle = Rc::new(RefCell::new(StmPlugin::new(
            cfg.stm.clone(),
            cfg.braking.model,
            cfg.braking.driver.clone(),
            cfg.braking.acc.clone(),
            cfg.lce.clone(),
            cfg.road.lanes,
            cfg.run.dt_s,
        )));
        let settings = InjectorSettings {
            ego_id: world.ego_id(),
            sit_s: cfg.stm.sit_s,
            t_max_s: cfg.stm.t_max_s,
            ..InjectorSettings::default()
        };
        world
            .register_plugin(Box::new(handle.clone()), settings)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        Some(handle)
    } else {
        None
    };

    let mut monitor = CriticalityMonitor::new(cfg.thresholds);
    let target_m = cfg.run.km * 1000.0;
    let max_steps = ((cfg.run.km * 1000.0 / 1.0) / cfg.run.dt_s) as u64; // 1 m/s floor
    let ego_id = world.ego_id();
    let mut steps = 0u64;
    loop {
        let report = world.step();
        steps += 1;
        let Some(ego) = report.ego else {
            bail!("ego vehicle disappeared at t = {:.2}", report.t);
        };
        let ego_hit = report
            .new_collisions
            .iter()
            .any(|&(a, b)| a == ego_id || b == ego_id);
        monitor.on_step(report.t, ego.ttb, ego.requested_decel, ego_hit);
        if ego.s >= target_m {
            break;
        }
        if steps > max_steps {
            bail!("run did not reach {} km within {} steps", cfg.run.km, max_steps);
        }
    }
    monitor.finish();
    world.finish_plugin();

    let (scenarios, events, trigger_count, lce_fired) = match plugin {
        Some(handle) => {
            let mut p = handle.borrow_mut();
            (
                p.take_scenarios(),
                std::mem::take(&mut p.events),
                p.trigger_count(),
                p.lce_fired_count(),
            )
        }
        None => (Vec::new(), Vec::new(), 0, 0),
    };
    Ok(RunOutcome {
        summary: RunSummary {
            seed,
            km: cfg.run.km,
            stm_on,
            collisions: world.collision_count(),
            eventually_critical: monitor.eventually_critical,
            very_critical: monitor.very_critical,
        },
        scenarios,
        events,
        incidents: std::mem::take(&mut world.incidents),
        trigger_count,
        lce_fired,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StmMode {
    On,
    Off,
    Both,
}

impl StmMode {
    pub fn runs(self) -> &'static [bool] {
        match self {
            StmMode::On => &[true],
            StmMode::Off => &[false],
            StmMode::Both => &[false, true],
        }
    }
}

fn mode_tag(stm_on: bool) -> &'static str {
    if stm_on {
        "on"
    } else {
        "off"
    }
}

fn scenario_path(out: &Path, seed: u64, stm_on: bool) -> PathBuf {
    out.join(format!("scenarios_seed{}_stm{}.jsonl", seed, mode_tag(stm_on)))
}

fn events_path(out: &Path, seed: u64, stm_on: bool) -> PathBuf {
    out.join(format!("events_seed{}_stm{}.log", seed, mode_tag(stm_on)))
}

/// Serialize one run's artifacts. scenarios.jsonl is one JSON object per
/// line, events.log is plain text.
pub fn write_artifacts(out: &Path, outcome: &RunOutcome) -> Result<()> {
    let seed = outcome.summary.seed;
    let stm_on = outcome.summary.stm_on;
    let mut jsonl = Vec::new();
    for record in &outcome.scenarios {
        serde_json::to_writer(&mut jsonl, record)?;
        jsonl.push(b'\n');
    }
    fs::write(scenario_path(out, seed, stm_on), jsonl)
        .with_context(|| format!("writing scenarios for seed {seed}"))?;
    let mut log = String::new();
    for line in outcome.events.iter().chain(outcome.incidents.iter()) {
        log.push_str(line);
        log.push('\n');
    }
    fs::write(events_path(out, seed, stm_on), log)
        .with_context(|| format!("writing events for seed {seed}"))?;
    Ok(())
}

pub fn summary_csv(rows: &[RunSummary]) -> String {
    let mut csv = String::from("seed,km,stm,collisions,eventually_critical,very_critical\n");
    for r in rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.seed,
            r.km,
            mode_tag(r.stm_on),
            r.collisions,
            r.eventually_critical,
            r.very_critical
        ));
    }
    csv
}

/// Run every (seed, mode) combination, seeds fanned out across threads.
/// Summary rows come back in seed order, off before on.
pub fn run_batch(cfg: &SimConfig, seeds: &[u64], mode: StmMode, out: &Path) -> Result<Vec<RunSummary>> {
    fs::create_dir_all(out).with_context(|| format!("creating output dir {}", out.display()))?;
    let mut handles = Vec::new();
    for &seed in seeds {
        let cfg = cfg.clone();
        let out = out.to_path_buf();
        handles.push((
            seed,
            std::thread::spawn(move || -> Result<Vec<RunSummary>> {
                let mut rows = Vec::new();
                for &stm_on in mode.runs() {
                    let outcome = run_once(&cfg, seed, stm_on)?;
                    write_artifacts(&out, &outcome)?;
                    rows.push(outcome.summary);
                }
                Ok(rows)
            }),
        ));
    }
    let mut rows = Vec::new();
    for (seed, h) in handles {
        let seed_rows = h
            .join()
            .map_err(|_| anyhow::anyhow!("worker for seed {seed} panicked"))??;
        rows.extend(seed_rows);
    }
    rows.sort_by_key(|r| (r.seed, r.stm_on));
    let csv = summary_csv(&rows);
    let mut f = fs::File::create(out.join("summary.csv"))?;
    f.write_all(csv.as_bytes())?;
    Ok(rows)
}
