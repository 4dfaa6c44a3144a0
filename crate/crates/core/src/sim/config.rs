//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! schema_version = 1
//!
//! [map]
//! x_min = 0.0
//! x_max = 600.0
//! y_min = 0.0
//! y_max = 600.0
//!
//! [filter]
//! dt = 1.0
//! q = 0.5
//! init_pos_std = 15.0
//! init_vel_std = 2.0
//!
//! [[targets]]
//! kind = "cv"             # or "dubins"
//! position = [100.0, 200.0]   # optional, random when absent
//! velocity = [3.0, 0.0]       # optional
//!
//! [[sensors]]
//! z = 300.0
//! position = [300.0, 300.0]   # optional
//! [sensors.caps]
//! move_step_distances = [20.0, 40.0]
//! max_turn = 0.8
//! fov_half_angle = 0.6
//! range_min = 300.0
//! range_max = 600.0
//! boresight_depression = 0.6
//! [sensors.noise]
//! theta_bw = 0.05
//! k_m = 1.6
//! delta_r = 15.0
//! snr_ref = 100.0
//! r_ref = 400.0
//!
//! [planning]
//! mode = "olf"
//! horizon = 4
//!
//! [run]
//! num_steps = 60
//! num_mc_runs = 20
//! seed = 1
//! ```
//!
//! Unknown keys are rejected. See `scenarios/` for complete files.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{CvModel, MapBounds, RadarNoiseParams, SensorCaps};
use crate::planner::LearnerParams;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    Myopic,
    Ol,
    Olf,
}

impl PlanMode {
    pub const ALL: [PlanMode; 3] = [PlanMode::Myopic, PlanMode::Ol, PlanMode::Olf];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlanMode::Myopic => "myopic",
            PlanMode::Ol => "ol",
            PlanMode::Olf => "olf",
        }
    }
}

impl fmt::Display for PlanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlanMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "myopic" => Ok(PlanMode::Myopic),
            "ol" => Ok(PlanMode::Ol),
            "olf" => Ok(PlanMode::Olf),
            other => Err(format!("unknown mode `{other}` (expected myopic, ol or olf)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Cv,
    Dubins,
}

/// Tracking filter model and initial belief spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub dt: f64,
    pub q: f64,
    pub init_pos_std: f64,
    pub init_vel_std: f64,
}

impl FilterConfig {
    pub fn model(&self) -> CvModel {
        CvModel { dt: self.dt, q: self.q }
    }
}

/// Ranges used when a target or sensor leaves a field unset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomInit {
    #[serde(default = "defaults::speed_min")]
    pub speed_min: f64,
    #[serde(default = "defaults::speed_max")]
    pub speed_max: f64,
    /// Distance kept from the map edge when drawing positions.
    #[serde(default = "defaults::margin")]
    pub margin: f64,
}

impl Default for RandomInit {
    fn default() -> Self {
        RandomInit {
            speed_min: defaults::speed_min(),
            speed_max: defaults::speed_max(),
            margin: defaults::margin(),
        }
    }
}

mod defaults {
    pub fn speed_min() -> f64 {
        2.0
    }
    pub fn speed_max() -> f64 {
        5.0
    }
    pub fn margin() -> f64 {
        50.0
    }
    pub fn turn_period() -> f64 {
        40.0
    }
    pub fn commit() -> usize {
        2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub kind: TargetKind,
    #[serde(default)]
    pub position: Option<[f64; 2]>,
    #[serde(default)]
    pub velocity: Option<[f64; 2]>,
    /// Fixed speed with a random direction, used when `velocity` is unset.
    #[serde(default)]
    pub speed: Option<f64>,
    /// Truth process-noise intensity of a CV target; the filter value if unset.
    #[serde(default)]
    pub q: Option<f64>,
    /// Dubins turn rate `amplitude * sin(2 pi t / period + phase)` in rad/s.
    #[serde(default)]
    pub turn_amplitude: f64,
    #[serde(default = "defaults::turn_period")]
    pub turn_period: f64,
    /// Phase of the turn schedule; random when unset.
    #[serde(default)]
    pub turn_phase: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    #[serde(default)]
    pub position: Option<[f64; 2]>,
    #[serde(default)]
    pub theta: Option<f64>,
    pub z: f64,
    pub caps: SensorCaps,
    pub noise: RadarNoiseParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningConfig {
    pub mode: PlanMode,
    /// Horizon of the non-myopic modes; myopic planning always spans 2 steps.
    pub horizon: usize,
    /// Steps executed per plan in `olf` mode.
    #[serde(default = "defaults::commit")]
    pub commit: usize,
    #[serde(default)]
    pub learner: LearnerParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub num_steps: usize,
    pub num_mc_runs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub map: MapBounds,
    pub filter: FilterConfig,
    #[serde(default)]
    pub random_init: RandomInit,
    pub targets: Vec<TargetConfig>,
    pub sensors: Vec<SensorConfig>,
    pub planning: PlanningConfig,
    pub run: RunConfig,
}

fn check(ok: bool, path: impl Into<String>, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(path, msg))
    }
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let path = e
                .span()
                .map(|s| locate(text, s.start))
                .unwrap_or_else(|| "<document>".into());
            Error::config(path, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read file: {e}")))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn model(&self) -> CvModel {
        self.filter.model()
    }

    pub fn validate(&self) -> Result<()> {
        check(
            self.schema_version == SCHEMA_VERSION,
            "schema_version",
            "unsupported schema version (expected 1)",
        )?;
        let m = &self.map;
        check(
            finite(&[m.x_min, m.x_max, m.y_min, m.y_max]) && m.x_min < m.x_max && m.y_min < m.y_max,
            "map",
            "bounds must be finite with min < max",
        )?;
        let f = &self.filter;
        check(f.dt > 0.0 && f.dt.is_finite(), "filter.dt", "must be positive")?;
        check(f.q >= 0.0 && f.q.is_finite(), "filter.q", "must be non-negative")?;
        check(f.init_pos_std > 0.0, "filter.init_pos_std", "must be positive")?;
        check(f.init_vel_std > 0.0, "filter.init_vel_std", "must be positive")?;
        let ri = &self.random_init;
        check(
            ri.speed_min >= 0.0 && ri.speed_min <= ri.speed_max,
            "random_init.speed_min",
            "must satisfy 0 <= speed_min <= speed_max",
        )?;
        check(
            ri.margin >= 0.0 && 2.0 * ri.margin < (m.x_max - m.x_min).min(m.y_max - m.y_min),
            "random_init.margin",
            "must leave room inside the map",
        )?;
        check(!self.targets.is_empty(), "targets", "at least one target is required")?;
        for (j, t) in self.targets.iter().enumerate() {
            let p = format!("targets[{j}]");
            if let Some(pos) = t.position {
                check(m.contains((pos[0], pos[1])), format!("{p}.position"), "must lie inside the map")?;
            }
            if let Some(v) = t.velocity {
                check(finite(&v), format!("{p}.velocity"), "must be finite")?;
            }
            if let Some(v) = t.speed {
                check(v >= 0.0 && v.is_finite(), format!("{p}.speed"), "must be non-negative")?;
            }
            if let Some(q) = t.q {
                check(q >= 0.0 && q.is_finite(), format!("{p}.q"), "must be non-negative")?;
            }
            check(t.turn_amplitude.is_finite(), format!("{p}.turn_amplitude"), "must be finite")?;
            check(t.turn_period > 0.0, format!("{p}.turn_period"), "must be positive")?;
        }
        check(!self.sensors.is_empty(), "sensors", "at least one sensor is required")?;
        for (i, s) in self.sensors.iter().enumerate() {
            let p = format!("sensors[{i}]");
            check(s.z > 0.0 && s.z.is_finite(), format!("{p}.z"), "must be positive")?;
            if let Some(pos) = s.position {
                check(m.contains((pos[0], pos[1])), format!("{p}.position"), "must lie inside the map")?;
            }
            if let Some(th) = s.theta {
                check(th.is_finite() && th.abs() <= 2.0 * PI, format!("{p}.theta"), "must be an angle")?;
            }
            s.caps.validate().map_err(|e| Error::config(format!("{p}.caps"), e))?;
            s.noise.validate().map_err(|e| Error::config(format!("{p}.noise"), e))?;
            for (o, other) in self.sensors.iter().enumerate().take(i) {
                check(
                    (other.z - s.z).abs() > 1e-9,
                    format!("{p}.z"),
                    &format!("altitude must differ from sensors[{o}].z"),
                )?;
            }
        }
        let pl = &self.planning;
        check(pl.horizon >= 1, "planning.horizon", "must be at least 1")?;
        check(
            pl.commit >= 1 && pl.commit <= pl.horizon.max(1),
            "planning.commit",
            "must lie in 1..=horizon",
        )?;
        pl.learner
            .validate()
            .map_err(|e| Error::config("planning.learner", e))?;
        check(self.run.num_steps >= 1, "run.num_steps", "must be at least 1")?;
        check(self.run.num_mc_runs >= 1, "run.num_mc_runs", "must be at least 1")?;
        Ok(())
    }
}

/// Dotted key path of the table enclosing byte offset `at`, with line number.
fn locate(text: &str, at: usize) -> String {
    let head = &text[..at.min(text.len())];
    let line = head.matches('\n').count() + 1;
    let mut table = String::new();
    let mut counts: std::collections::HashMap<String, usize> = Default::default();
    for l in head.lines() {
        let l = l.trim();
        if let Some(name) = l.strip_prefix("[[").and_then(|r| r.strip_suffix("]]")) {
            let n = counts.entry(name.to_string()).or_insert(0);
            table = format!("{name}[{n}]");
            *n += 1;
        } else if let Some(name) = l.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            table = match name.split_once('.') {
                Some((parent, rest)) if counts.contains_key(parent) => {
                    format!("{parent}[{}].{rest}", counts[parent] - 1)
                }
                _ => name.to_string(),
            };
        }
    }
    let key = text[at.min(text.len())..]
        .lines()
        .next()
        .and_then(|l| l.split_once('='))
        .map(|(k, _)| k.trim().to_string())
        .filter(|k| !k.is_empty() && !k.starts_with('['));
    let path = match (table.is_empty(), key) {
        (true, Some(k)) => k,
        (false, Some(k)) => format!("{table}.{k}"),
        (false, None) => table,
        (true, None) => "<document>".into(),
    };
    format!("{path} (line {line})")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
schema_version = 1
[map]
x_min = 0.0
x_max = 600.0
y_min = 0.0
y_max = 600.0
[filter]
dt = 1.0
q = 0.5
init_pos_std = 10.0
init_vel_std = 1.0
[[targets]]
kind = "cv"
[[sensors]]
z = 300.0
[sensors.caps]
move_step_distances = [20.0, 40.0]
max_turn = 0.8
fov_half_angle = 0.6
range_min = 300.0
range_max = 600.0
boresight_depression = 0.6
[sensors.noise]
theta_bw = 0.05
k_m = 1.6
delta_r = 15.0
snr_ref = 100.0
r_ref = 400.0
[planning]
mode = "olf"
horizon = 3
[run]
num_steps = 5
num_mc_runs = 2
seed = 3
"#;

    #[test]
    fn minimal_parses_with_defaults() {
        let c = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.planning.commit, 2);
        assert_eq!(c.planning.learner, LearnerParams::default());
        assert_eq!(c.sensors[0].caps.num_directions, 8);
    }

    #[test]
    fn unknown_key_reports_table_path() {
        let text = MINIMAL.replace("r_ref = 400.0", "r_ref = 400.0\nbogus = 1");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("sensors[0].noise"), "{err}");
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn validation_reports_field_path() {
        let text = MINIMAL.replace("horizon = 3", "horizon = 0");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("planning.horizon"), "{err}");
    }

    #[test]
    fn equal_altitudes_rejected() {
        let sensor = &MINIMAL[MINIMAL.find("[[sensors]]").unwrap()..MINIMAL.find("[planning]").unwrap()];
        let text = MINIMAL.replace("[planning]", &format!("{sensor}[planning]"));
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("sensors[1].z"), "{err}");
    }

    #[test]
    fn toml_round_trip() {
        let c = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        let back = ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
    }
}
