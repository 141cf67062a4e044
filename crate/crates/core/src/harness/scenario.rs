//! Scenario files: one JSON document describing terrain, hazards, rover
//! configuration, the route, and optional multi-robot traffic.

use crate::coord::{Agent, AgentRole, BusConfig, CoordConfig, Task};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::gnc::{GncConfig, TELEOP_SPEED_CAP};
use crate::perception::DetectorConfig;
use crate::terrain::{HazardSpec, TerrainParams};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    /// Integration step, seconds.
    pub dt: f64,
    /// Hard stop for the run clock, seconds.
    pub max_time: f64,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 0.1,
            max_time: 600.0,
            seed: 0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return Err(Error::validation(
                "sim.dt",
                format!("must be in (0, 1] (got {})", self.dt),
            ));
        }
        if !(self.max_time >= self.dt) {
            return Err(Error::validation(
                "sim.max_time",
                format!("must be at least one step (got {})", self.max_time),
            ));
        }
        Ok(())
    }
}

/// Where the rover drives. Direct routes are planned and replanned on the
/// live map; waypoint and winding routes are fixed courses to be tracked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Route {
    Direct {
        start: Vec2,
        goal: Vec2,
    },
    Waypoints {
        points: Vec<Vec2>,
    },
    /// Sinusoidal course: `length` metres along `heading_deg`, swinging
    /// `amplitude` either side with the given `wavelength`, sampled every
    /// `spacing` metres of run.
    Winding {
        start: Vec2,
        heading_deg: f64,
        length: f64,
        amplitude: f64,
        wavelength: f64,
        spacing: f64,
    },
}

impl Route {
    pub fn validate(&self) -> Result<()> {
        match self {
            Route::Direct { .. } => Ok(()),
            Route::Waypoints { points } => {
                if points.len() < 2 {
                    return Err(Error::validation(
                        "route.points",
                        format!("need at least 2 waypoints (got {})", points.len()),
                    ));
                }
                Ok(())
            }
            Route::Winding {
                length,
                amplitude,
                wavelength,
                spacing,
                ..
            } => {
                for (name, v) in [
                    ("route.length", *length),
                    ("route.wavelength", *wavelength),
                    ("route.spacing", *spacing),
                ] {
                    if !(v > 0.0) {
                        return Err(Error::validation(name, format!("must be > 0 (got {v})")));
                    }
                }
                if !(*amplitude >= 0.0) {
                    return Err(Error::validation(
                        "route.amplitude",
                        format!("must be >= 0 (got {amplitude})"),
                    ));
                }
                if *spacing > *length {
                    return Err(Error::validation(
                        "route.spacing",
                        "must not exceed the course length".to_string(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// The course as a polyline. Direct routes return endpoints only; the
    /// simulator plans between them.
    pub fn polyline(&self) -> Vec<Vec2> {
        match self {
            Route::Direct { start, goal } => vec![*start, *goal],
            Route::Waypoints { points } => points.clone(),
            Route::Winding {
                start,
                heading_deg,
                length,
                amplitude,
                wavelength,
                spacing,
            } => {
                let th = heading_deg.to_radians();
                let u = Vec2::new(th.cos(), th.sin());
                let n = Vec2::new(-th.sin(), th.cos());
                let mut pts = Vec::new();
                let mut s = 0.0;
                while s < *length {
                    let w = amplitude * (2.0 * std::f64::consts::PI * s / wavelength).sin();
                    pts.push(*start + u.scale(s) + n.scale(w));
                    s += spacing;
                }
                let w = amplitude * (2.0 * std::f64::consts::PI * length / wavelength).sin();
                pts.push(*start + u.scale(*length) + n.scale(w));
                pts
            }
        }
    }

    pub fn start(&self) -> Vec2 {
        self.polyline()[0]
    }

    pub fn goal(&self) -> Vec2 {
        *self.polyline().last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeleopConfig {
    /// Operator speed command, m/s. Capped by the platform limit.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FallSpec {
    pub agent: String,
    pub time: f64,
}

fn default_detector() -> Option<DetectorConfig> {
    Some(DetectorConfig::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub terrain: TerrainParams,
    /// Hazards placed on top of whatever the terrain seed generates.
    #[serde(default)]
    pub hazards: Vec<HazardSpec>,
    /// `null` disables far detection entirely; omitting the field keeps the
    /// stock detector.
    #[serde(default = "default_detector")]
    pub detector: Option<DetectorConfig>,
    #[serde(default)]
    pub gnc: GncConfig,
    pub route: Route,
    #[serde(default)]
    pub sim: SimParams,
    #[serde(default)]
    pub teleop: Option<TeleopConfig>,
    #[serde(default)]
    pub bus: BusConfig,
    #[serde(default)]
    pub coord: CoordConfig,
    #[serde(default)]
    pub agents: Vec<Agent>,
    #[serde(default)]
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub fall_schedule: Vec<FallSpec>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::validation("name", "must not be empty".to_string()));
        }
        self.terrain.validate()?;
        let extent = self.terrain.extent();
        for (i, h) in self.hazards.iter().enumerate() {
            h.validate(&format!("hazards[{i}]"))?;
            let p = h.position;
            if !(p.x >= 0.0 && p.x <= extent && p.y >= 0.0 && p.y <= extent) {
                return Err(Error::validation(
                    format!("hazards[{i}].position"),
                    format!("outside the {extent:.1} m terrain extent"),
                ));
            }
        }
        if let Some(d) = &self.detector {
            d.validate()?;
        }
        self.gnc.validate()?;
        self.route.validate()?;
        for (i, p) in self.route.polyline().iter().enumerate() {
            if !(p.x >= 0.0 && p.x <= extent && p.y >= 0.0 && p.y <= extent) {
                return Err(Error::validation(
                    format!("route[{i}]"),
                    format!(
                        "({:.1}, {:.1}) outside the {extent:.1} m terrain extent",
                        p.x, p.y
                    ),
                ));
            }
        }
        self.sim.validate()?;
        if let Some(t) = &self.teleop {
            if !(t.speed > 0.0 && t.speed <= TELEOP_SPEED_CAP) {
                return Err(Error::validation(
                    "teleop.speed",
                    format!("must be in (0, {TELEOP_SPEED_CAP}] (got {})", t.speed),
                ));
            }
        }
        self.bus.validate()?;
        self.coord.validate()?;
        for (i, f) in self.fall_schedule.iter().enumerate() {
            if !(f.time >= 0.0) {
                return Err(Error::validation(
                    format!("fall_schedule[{i}].time"),
                    format!("must be >= 0 (got {})", f.time),
                ));
            }
            match self.agents.iter().find(|a| a.id == f.agent) {
                None => {
                    return Err(Error::validation(
                        format!("fall_schedule[{i}].agent"),
                        format!("no agent named {:?}", f.agent),
                    ))
                }
                Some(a) if a.role != AgentRole::Astronaut => {
                    return Err(Error::validation(
                        format!("fall_schedule[{i}].agent"),
                        format!("{:?} is not an astronaut", f.agent),
                    ))
                }
                _ => {}
            }
        }
        if !self.fall_schedule.is_empty() {
            let has = |r: AgentRole| self.agents.iter().any(|a| a.role == r);
            if !has(AgentRole::Leader) || !has(AgentRole::Secondary) {
                return Err(Error::validation(
                    "agents",
                    "fall handling needs a leader and a secondary responder".to_string(),
                ));
            }
        }
        if !self.tasks.is_empty() && !self.agents.iter().any(|a| a.role == AgentRole::Leader) {
            return Err(Error::validation(
                "agents",
                "task allocation needs a leader".to_string(),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let sc: Scenario = serde_json::from_str(text)?;
        sc.validate()?;
        Ok(sc)
    }
}

pub fn load_scenario<P: AsRef<Path>>(path: P) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_json(&text)
}
