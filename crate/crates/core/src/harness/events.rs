//! Run logs: one JSON object per line, tagged by event type. The leading
//! `meta` line echoes the full scenario so a log is self-describing and any
//! metric can be recomputed from the file alone.

use crate::coord::{CoordEvent, MsgKind};
use crate::error::Result;
use crate::geom::Vec2;
use crate::gnc::NavMode;
use crate::harness::scenario::Scenario;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// One raw detector return, already rotated into the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub confidence: f64,
    /// Survived confidence thresholding and was fused into the map.
    pub kept: bool,
    /// Corresponds to a real hazard (telemetry only).
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Meta {
        scenario: Scenario,
        seed: u64,
    },
    /// Rover command and pose at the start of a step; `speed` and `omega`
    /// hold for the following `dt`.
    Rover {
        time: f64,
        x: f64,
        y: f64,
        heading: f64,
        speed: f64,
        omega: f64,
        mode: NavMode,
        commanded: f64,
        turning: bool,
    },
    /// One detector publish cycle. `visible` counts hazards inside the
    /// sensing sector at that instant.
    Detections {
        time: f64,
        visible: usize,
        items: Vec<DetectionRecord>,
    },
    Plan {
        time: f64,
        waypoints: usize,
        length: f64,
        cost: f64,
    },
    PlanFailed {
        time: f64,
        reason: String,
    },
    Mode {
        time: f64,
        from: NavMode,
        to: NavMode,
    },
    TurnStart {
        time: f64,
        from_heading: f64,
        to_heading: f64,
    },
    TurnEnd {
        time: f64,
        duration: f64,
    },
    Collision {
        time: f64,
        x: f64,
        y: f64,
        hazard: usize,
    },
    Goal {
        time: f64,
    },
    MsgSent {
        time: f64,
        sender: String,
        recipient: String,
        msg: MsgKind,
    },
    MsgDropped {
        time: f64,
        sender: String,
        recipient: String,
        msg: MsgKind,
    },
    MsgDelivered {
        time: f64,
        sender: String,
        recipient: String,
        msg: MsgKind,
        latency: f64,
    },
    Fall {
        time: f64,
        agent: String,
    },
    Alert {
        time: f64,
        agent: String,
        response: f64,
    },
    AlertMissed {
        time: f64,
        agent: String,
    },
    TaskAssigned {
        time: f64,
        task: usize,
        agent: String,
    },
    TaskAck {
        time: f64,
        task: usize,
        ok: bool,
    },
    TaskDone {
        time: f64,
        task: usize,
        agent: String,
    },
    AgentPose {
        time: f64,
        agent: String,
        x: f64,
        y: f64,
    },
}

impl Event {
    pub fn time(&self) -> f64 {
        match self {
            Event::Meta { .. } => 0.0,
            Event::Rover { time, .. }
            | Event::Detections { time, .. }
            | Event::Plan { time, .. }
            | Event::PlanFailed { time, .. }
            | Event::Mode { time, .. }
            | Event::TurnStart { time, .. }
            | Event::TurnEnd { time, .. }
            | Event::Collision { time, .. }
            | Event::Goal { time }
            | Event::MsgSent { time, .. }
            | Event::MsgDropped { time, .. }
            | Event::MsgDelivered { time, .. }
            | Event::Fall { time, .. }
            | Event::Alert { time, .. }
            | Event::AlertMissed { time, .. }
            | Event::TaskAssigned { time, .. }
            | Event::TaskAck { time, .. }
            | Event::TaskDone { time, .. }
            | Event::AgentPose { time, .. } => *time,
        }
    }
}

impl From<CoordEvent> for Event {
    fn from(e: CoordEvent) -> Event {
        match e {
            CoordEvent::MsgSent {
                time,
                sender,
                recipient,
                msg,
            } => Event::MsgSent {
                time,
                sender,
                recipient,
                msg,
            },
            CoordEvent::MsgDropped {
                time,
                sender,
                recipient,
                msg,
            } => Event::MsgDropped {
                time,
                sender,
                recipient,
                msg,
            },
            CoordEvent::MsgDelivered {
                time,
                sender,
                recipient,
                msg,
                latency,
            } => Event::MsgDelivered {
                time,
                sender,
                recipient,
                msg,
                latency,
            },
            CoordEvent::Fall { time, agent } => Event::Fall { time, agent },
            CoordEvent::Alert {
                time,
                agent,
                response,
            } => Event::Alert {
                time,
                agent,
                response,
            },
            CoordEvent::AlertMissed { time, agent } => Event::AlertMissed { time, agent },
            CoordEvent::TaskAssigned { time, task, agent } => {
                Event::TaskAssigned { time, task, agent }
            }
            CoordEvent::TaskAck { time, task, ok } => Event::TaskAck { time, task, ok },
            CoordEvent::TaskDone { time, task, agent } => Event::TaskDone { time, task, agent },
            CoordEvent::AgentPose {
                time,
                agent,
                position,
            } => Event::AgentPose {
                time,
                agent,
                x: position.x,
                y: position.y,
            },
        }
    }
}

pub fn to_jsonl(events: &[Event]) -> Result<String> {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_log<P: AsRef<Path>>(path: P, events: &[Event]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(to_jsonl(events)?.as_bytes())?;
    Ok(())
}

pub fn read_log<P: AsRef<Path>>(path: P) -> Result<Vec<Event>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut events = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line)?);
    }
    Ok(events)
}

/// World-frame pose trace of the rover, in step order.
pub fn rover_positions(events: &[Event]) -> Vec<Vec2> {
    events
        .iter()
        .filter_map(|e| match e {
            Event::Rover { x, y, .. } => Some(Vec2::new(*x, *y)),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trips() {
        let events = vec![
            Event::Rover {
                time: 0.1,
                x: 1.0,
                y: 2.0,
                heading: 0.5,
                speed: 0.7,
                omega: 0.0,
                mode: NavMode::Faster,
                commanded: 0.7,
                turning: false,
            },
            Event::TaskAck {
                time: 1.2,
                task: 3,
                ok: true,
            },
            Event::Goal { time: 9.0 },
        ];
        let text = to_jsonl(&events).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().contains("\"type\":\"rover\""));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        write_log(&path, &events).unwrap();
        assert_eq!(read_log(&path).unwrap(), events);
    }

    #[test]
    fn mode_names_serialize_in_upper_snake_case() {
        let e = Event::Mode {
            time: 1.0,
            from: NavMode::SafeStop,
            to: NavMode::Rapid,
        };
        let line = serde_json::to_string(&e).unwrap();
        assert!(line.contains("SAFE_STOP") && line.contains("RAPID"), "{line}");
    }
}
