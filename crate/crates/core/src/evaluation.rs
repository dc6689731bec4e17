//! Criticality evaluation: time-to-brake, per-step classification, episode
//! counting and run comparison.

use crate::stm::ScenarioRecord;
use serde::{Deserialize, Serialize};

/// Time until braking at `a_max` is the last option to avoid closing the gap.
/// ttb = (gap - v_rel^2 / (2 a_max)) / v_rel for closing speeds, infinite
/// otherwise. Clamped below at zero.
pub fn ttb_from(gap_m: f64, v_rel_ms: f64, a_max_ms2: f64) -> f64 {
    if v_rel_ms <= 0.0 || a_max_ms2 <= 0.0 {
        return f64::INFINITY;
    }
    ((gap_m - v_rel_ms * v_rel_ms / (2.0 * a_max_ms2)) / v_rel_ms).max(0.0)
}

/// Classification thresholds. A step is very critical below/above the `very`
/// pair, eventually critical below/above the `eventually` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalityThresholds {
    #[serde(default = "default_ttb_very")]
    pub ttb_very_s: f64,
    #[serde(default = "default_ttb_eventually")]
    pub ttb_eventually_s: f64,
    #[serde(default = "default_decel_very")]
    pub req_decel_very_ms2: f64,
    #[serde(default = "default_decel_eventually")]
    pub req_decel_eventually_ms2: f64,
}

fn default_ttb_very() -> f64 {
    0.8
}
fn default_ttb_eventually() -> f64 {
    1.6
}
fn default_decel_very() -> f64 {
    5.5
}
fn default_decel_eventually() -> f64 {
    3.5
}

impl Default for CriticalityThresholds {
    fn default() -> Self {
        CriticalityThresholds {
            ttb_very_s: default_ttb_very(),
            ttb_eventually_s: default_ttb_eventually(),
            req_decel_very_ms2: default_decel_very(),
            req_decel_eventually_ms2: default_decel_eventually(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalityLevel {
    NonCritical,
    EventuallyCritical,
    VeryCritical,
}

impl CriticalityThresholds {
    /// Instantaneous level from the ego's time-to-brake and the deceleration
    /// its controller requested. A collision is always very critical.
    pub fn classify(&self, ttb_s: f64, requested_decel_ms2: f64, collided: bool) -> CriticalityLevel {
        if collided || ttb_s < self.ttb_very_s || requested_decel_ms2 > self.req_decel_very_ms2 {
            CriticalityLevel::VeryCritical
        } else if ttb_s < self.ttb_eventually_s
            || requested_decel_ms2 > self.req_decel_eventually_ms2
        {
            CriticalityLevel::EventuallyCritical
        } else {
            CriticalityLevel::NonCritical
        }
    }
}

/// Aggregate of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub km: f64,
    pub stm_on: bool,
    pub collisions: u64,
    pub eventually_critical: u64,
    pub very_critical: u64,
}

/// Counts criticality episodes online. An episode is a contiguous stretch of
/// critical steps (short non-critical dropouts up to the hangover are
/// bridged) and is counted once, at its maximum level.
#[derive(Debug, Clone)]
pub struct CriticalityMonitor {
    thresholds: CriticalityThresholds,
    hangover_s: f64,
    episode_max: Option<CriticalityLevel>,
    last_critical_t: f64,
    pub eventually_critical: u64,
    pub very_critical: u64,
}

impl CriticalityMonitor {
    pub fn new(thresholds: CriticalityThresholds) -> Self {
        CriticalityMonitor {
            thresholds,
            hangover_s: 1.0,
            episode_max: None,
            last_critical_t: 0.0,
            eventually_critical: 0,
            very_critical: 0,
        }
    }

    fn close_episode(&mut self) {
        match self.episode_max.take() {
            Some(CriticalityLevel::VeryCritical) => self.very_critical += 1,
            Some(CriticalityLevel::EventuallyCritical) => self.eventually_critical += 1,
            _ => {}
        }
    }

    pub fn on_step(&mut self, t: f64, ttb_s: f64, requested_decel_ms2: f64, collided: bool) {
        let level = self.thresholds.classify(ttb_s, requested_decel_ms2, collided);
        if level > CriticalityLevel::NonCritical {
            self.last_critical_t = t;
            self.episode_max = Some(match self.episode_max {
                Some(prev) => prev.max(level),
                None => level,
            });
        } else if self.episode_max.is_some() && t - self.last_critical_t > self.hangover_s {
            self.close_episode();
        }
    }

    pub fn finish(&mut self) {
        self.close_episode();
    }
}

/// Ego length assumed when re-checking captured frames for overlap.
const EGO_LEN_M: f64 = 4.5;

/// Worst criticality reached inside a captured scenario, judged from the
/// stored samples alone.
pub fn classify_record(
    record: &ScenarioRecord,
    thresholds: &CriticalityThresholds,
    emergency_decel_ms2: f64,
) -> CriticalityLevel {
    let mut worst = CriticalityLevel::NonCritical;
    for sample in &record.samples {
        let mut min_ttb = f64::INFINITY;
        let mut collided = false;
        for tr in &sample.traffic {
            if tr.lane != sample.ego_lane {
                continue;
            }
            if tr.s > sample.s_ego {
                let gap = tr.s - tr.len - sample.s_ego;
                if gap <= 0.0 && tr.s - tr.len < sample.s_ego && sample.s_ego - EGO_LEN_M < tr.s {
                    collided = true;
                }
                let ttb = ttb_from(gap.max(0.0), sample.v_ego - tr.v, emergency_decel_ms2);
                min_ttb = min_ttb.min(ttb);
            }
        }
        let decel = (-sample.a_ego).max(0.0);
        worst = worst.max(thresholds.classify(min_ttb, decel, collided));
    }
    worst
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("cannot compare runs over different distances: {0:.3} km vs {1:.3} km")]
    MismatchedDistance(f64, f64),
    #[error("cannot compare runs with different seeds: {0} vs {1}")]
    MismatchedSeed(u64, u64),
}

/// Paired comparison of a baseline run and a stress run with the same seed
/// and distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunComparison {
    pub seed: u64,
    pub collision_delta: i64,
    pub eventually_delta: i64,
    pub very_delta: i64,
    /// True when the stress run is strictly worse in every count.
    pub strictly_worse: bool,
}

pub fn compare_runs(baseline: &RunSummary, stressed: &RunSummary) -> Result<RunComparison, EvalError> {
    if baseline.seed != stressed.seed {
        return Err(EvalError::MismatchedSeed(baseline.seed, stressed.seed));
    }
    if (baseline.km - stressed.km).abs() > 1e-6 {
        return Err(EvalError::MismatchedDistance(baseline.km, stressed.km));
    }
    let collision_delta = stressed.collisions as i64 - baseline.collisions as i64;
    let eventually_delta =
        stressed.eventually_critical as i64 - baseline.eventually_critical as i64;
    let very_delta = stressed.very_critical as i64 - baseline.very_critical as i64;
    Ok(RunComparison {
        seed: baseline.seed,
        collision_delta,
        eventually_delta,
        very_delta,
        strictly_worse: collision_delta > 0 && eventually_delta > 0 && very_delta > 0,
    })
}
