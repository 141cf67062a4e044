//! Reduce an event log to headline numbers. Everything here is computed from
//! the log alone; the `meta` line supplies the scenario (and thus terrain)
//! when a metric needs context.

use crate::coord::{coverage_metric, measure_task_completion, TaskEvent, TaskEventKind};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::gnc::{NavMode, Path, TELEOP_SPEED_CAP};
use crate::harness::events::{rover_positions, Event};
use crate::harness::scenario::{Route, Scenario};
use crate::rover::rms_cross_track;
use crate::terrain::generate_terrain;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Productive hours per sol used for traverse projections.
pub const DEFAULT_OPS_HOURS: f64 = 0.23;

/// A tick counts as uptime when the rover is not point-turning and moves at
/// least this fraction of the active mode's nominal speed.
pub const UPTIME_SPEED_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub elapsed: f64,
    pub distance: f64,
    pub avg_speed: f64,
    /// Nominal speed of the mode the rover spent the most time in.
    pub commanded_speed: f64,
    pub uptime_fraction: f64,
    pub mode_time: BTreeMap<String, f64>,
    pub point_turns: usize,
    pub point_turn_time: f64,
    pub collisions: usize,
    pub goal_reached: bool,
    /// Only reported for fixed-course routes.
    pub rms_cross_track: Option<f64>,
    pub detection_cycles: usize,
    /// Cycles with at least one hazard inside the sensing sector.
    pub detection_opportunities: usize,
    /// Opportunity cycles where a real hazard survived thresholding.
    pub detection_hits: usize,
    pub detection_rate: Option<f64>,
    /// Kept detections that correspond to real hazards, over all kept.
    pub precision: Option<f64>,
    pub falls: usize,
    pub alerts: usize,
    pub alerts_missed: usize,
    pub mean_response: Option<f64>,
    pub max_response: Option<f64>,
    pub msgs_sent: usize,
    pub msgs_dropped: usize,
    pub msgs_delivered: usize,
    pub acks_ok: usize,
    pub acks_failed: usize,
    pub tasks_assigned: usize,
    pub tasks_done: usize,
    pub task_makespan: Option<f64>,
    pub coverage: Option<f64>,
    /// Hours of driving per sol assumed for the projection.
    pub ops_hours: f64,
    /// Metres per sol at the measured average speed.
    pub daily_traverse_m: f64,
}

fn nominal_speed(mode: NavMode, sc: &Scenario) -> f64 {
    match mode {
        NavMode::Faster => sc.gnc.v_cmd_faster,
        NavMode::Rapid => sc.gnc.v_rapid,
        NavMode::Teleop => sc
            .teleop
            .map(|t| t.speed.min(TELEOP_SPEED_CAP))
            .unwrap_or(0.0),
        NavMode::SafeStop => 0.0,
    }
}

pub fn compute_metrics(events: &[Event], ops_hours: f64) -> Result<MetricsReport> {
    let sc = match events.first() {
        Some(Event::Meta { scenario, .. }) => scenario.clone(),
        _ => {
            return Err(Error::LogIntegrity(
                "log must start with a meta line".to_string(),
            ))
        }
    };
    let dt = sc.sim.dt;

    let mut ticks = 0usize;
    let mut up_ticks = 0usize;
    let mut distance = 0.0;
    let mut mode_ticks: BTreeMap<NavMode, usize> = BTreeMap::new();
    let mut point_turns = 0usize;
    let mut point_turn_time = 0.0;
    let mut open_turns = 0usize;
    let mut collisions = 0usize;
    let mut goal_reached = false;
    let mut detection_cycles = 0usize;
    let mut opportunities = 0usize;
    let mut hits = 0usize;
    let mut kept_total = 0usize;
    let mut kept_matched = 0usize;
    let mut falls = 0usize;
    let mut responses: Vec<f64> = Vec::new();
    let mut alerts_missed = 0usize;
    let mut msgs_sent = 0usize;
    let mut msgs_dropped = 0usize;
    let mut msgs_delivered = 0usize;
    let mut acks_ok = 0usize;
    let mut acks_failed = 0usize;
    let mut task_events: Vec<TaskEvent> = Vec::new();
    let mut agent_logs: BTreeMap<String, Vec<Vec2>> = BTreeMap::new();

    for e in events {
        match e {
            Event::Meta { .. } => {}
            Event::Rover {
                speed,
                mode,
                turning,
                ..
            } => {
                ticks += 1;
                distance += speed * dt;
                *mode_ticks.entry(*mode).or_insert(0) += 1;
                let nominal = nominal_speed(*mode, &sc);
                if !turning && nominal > 1e-9 && *speed >= UPTIME_SPEED_FRACTION * nominal - 1e-9 {
                    up_ticks += 1;
                }
            }
            Event::Detections { visible, items, .. } => {
                detection_cycles += 1;
                let kept: Vec<_> = items.iter().filter(|d| d.kept).collect();
                kept_total += kept.len();
                kept_matched += kept.iter().filter(|d| d.matched).count();
                if *visible > 0 {
                    opportunities += 1;
                    if kept.iter().any(|d| d.matched) {
                        hits += 1;
                    }
                }
            }
            Event::Plan { .. } | Event::PlanFailed { .. } | Event::Mode { .. } => {}
            Event::TurnStart { .. } => {
                point_turns += 1;
                open_turns += 1;
            }
            Event::TurnEnd { duration, .. } => {
                if open_turns == 0 {
                    return Err(Error::LogIntegrity(
                        "turn end without a matching start".to_string(),
                    ));
                }
                open_turns -= 1;
                point_turn_time += duration;
            }
            Event::Collision { .. } => collisions += 1,
            Event::Goal { .. } => goal_reached = true,
            Event::MsgSent { .. } => msgs_sent += 1,
            Event::MsgDropped { .. } => msgs_dropped += 1,
            Event::MsgDelivered { .. } => msgs_delivered += 1,
            Event::Fall { .. } => falls += 1,
            Event::Alert { response, .. } => responses.push(*response),
            Event::AlertMissed { .. } => alerts_missed += 1,
            Event::TaskAssigned { time, task, .. } => task_events.push(TaskEvent {
                time: *time,
                task: *task,
                kind: TaskEventKind::Assigned,
            }),
            Event::TaskAck { ok, .. } => {
                if *ok {
                    acks_ok += 1;
                } else {
                    acks_failed += 1;
                }
            }
            Event::TaskDone { time, task, .. } => task_events.push(TaskEvent {
                time: *time,
                task: *task,
                kind: TaskEventKind::Done,
            }),
            Event::AgentPose { agent, x, y, .. } => agent_logs
                .entry(agent.clone())
                .or_default()
                .push(Vec2::new(*x, *y)),
        }
    }

    let records = measure_task_completion(&task_events)?;
    let tasks_done = records.iter().filter(|r| r.done.is_some()).count();
    let task_makespan = if tasks_done > 0 {
        let first = records.iter().map(|r| r.assigned).fold(f64::INFINITY, f64::min);
        let last = records
            .iter()
            .filter_map(|r| r.done)
            .fold(f64::NEG_INFINITY, f64::max);
        Some(last - first)
    } else {
        None
    };

    let elapsed = ticks as f64 * dt;
    let avg_speed = if elapsed > 0.0 { distance / elapsed } else { 0.0 };
    let dominant = mode_ticks
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then_with(|| a.0.name().cmp(b.0.name())))
        .map(|(m, _)| *m);
    let commanded_speed = dominant.map(|m| nominal_speed(m, &sc)).unwrap_or(0.0);
    let mode_time: BTreeMap<String, f64> = mode_ticks
        .iter()
        .map(|(m, n)| (m.name().to_string(), *n as f64 * dt))
        .collect();

    let rms = match &sc.route {
        Route::Direct { .. } => None,
        fixed => {
            let course = Path::from_points(fixed.polyline());
            let poses = rover_positions(events);
            if poses.is_empty() {
                None
            } else {
                Some(rms_cross_track(&poses, &course))
            }
        }
    };

    let coverage = if agent_logs.is_empty() {
        None
    } else {
        let mut grid = generate_terrain(&sc.terrain)?;
        grid.add_hazards(&sc.hazards)?;
        let logs: Vec<Vec<Vec2>> = agent_logs.into_values().collect();
        Some(coverage_metric(&logs, &grid, sc.coord.sensor_radius))
    };

    let mean_response = if responses.is_empty() {
        None
    } else {
        Some(responses.iter().sum::<f64>() / responses.len() as f64)
    };
    let max_response = responses.iter().copied().fold(f64::NAN, f64::max);

    Ok(MetricsReport {
        scenario: sc.name.clone(),
        elapsed,
        distance,
        avg_speed,
        commanded_speed,
        uptime_fraction: if ticks > 0 {
            up_ticks as f64 / ticks as f64
        } else {
            0.0
        },
        mode_time,
        point_turns,
        point_turn_time,
        collisions,
        goal_reached,
        rms_cross_track: rms,
        detection_cycles,
        detection_opportunities: opportunities,
        detection_hits: hits,
        detection_rate: if opportunities > 0 {
            Some(hits as f64 / opportunities as f64)
        } else {
            None
        },
        precision: if kept_total > 0 {
            Some(kept_matched as f64 / kept_total as f64)
        } else {
            None
        },
        falls,
        alerts: responses.len(),
        alerts_missed,
        mean_response,
        max_response: if responses.is_empty() {
            None
        } else {
            Some(max_response)
        },
        msgs_sent,
        msgs_dropped,
        msgs_delivered,
        acks_ok,
        acks_failed,
        tasks_assigned: records.len(),
        tasks_done,
        task_makespan,
        coverage,
        ops_hours,
        daily_traverse_m: avg_speed * 3600.0 * ops_hours,
    })
}

impl MetricsReport {
    pub fn csv_header() -> String {
        [
            "scenario",
            "elapsed_s",
            "distance_m",
            "avg_speed_mps",
            "commanded_speed_mps",
            "uptime_fraction",
            "point_turns",
            "point_turn_time_s",
            "collisions",
            "goal_reached",
            "rms_cross_track_m",
            "detection_rate",
            "precision",
            "alerts",
            "alerts_missed",
            "mean_response_s",
            "msgs_dropped",
            "acks_ok",
            "acks_failed",
            "tasks_done",
            "task_makespan_s",
            "coverage",
            "daily_traverse_m",
        ]
        .join(",")
    }

    pub fn csv_row(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| format!("{x:.6}")).unwrap_or_default()
        }
        format!(
            "{},{:.1},{:.3},{:.4},{:.4},{:.4},{},{:.1},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.1}",
            self.scenario,
            self.elapsed,
            self.distance,
            self.avg_speed,
            self.commanded_speed,
            self.uptime_fraction,
            self.point_turns,
            self.point_turn_time,
            self.collisions,
            self.goal_reached,
            opt(self.rms_cross_track),
            opt(self.detection_rate),
            opt(self.precision),
            self.alerts,
            self.alerts_missed,
            opt(self.mean_response),
            self.msgs_dropped,
            self.acks_ok,
            self.acks_failed,
            self.tasks_done,
            opt(self.task_makespan),
            opt(self.coverage),
            self.daily_traverse_m,
        )
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("scenario:        {}\n", self.scenario));
        s.push_str(&format!(
            "elapsed:         {:.1} s   distance: {:.1} m   goal: {}\n",
            self.elapsed, self.distance, self.goal_reached
        ));
        s.push_str(&format!(
            "speed:           avg {:.3} m/s   commanded {:.3} m/s   uptime {:.1}%\n",
            self.avg_speed,
            self.commanded_speed,
            100.0 * self.uptime_fraction
        ));
        s.push_str(&format!(
            "point turns:     {} ({:.1} s)   collisions: {}\n",
            self.point_turns, self.point_turn_time, self.collisions
        ));
        if let Some(r) = self.rms_cross_track {
            s.push_str(&format!("tracking:        rms cross-track {r:.3} m\n"));
        }
        if let Some(r) = self.detection_rate {
            s.push_str(&format!(
                "detection:       rate {:.3} over {} cycles, precision {}\n",
                r,
                self.detection_cycles,
                self.precision
                    .map(|p| format!("{p:.3}"))
                    .unwrap_or_else(|| "n/a".to_string())
            ));
        }
        if self.falls > 0 {
            s.push_str(&format!(
                "emergencies:     {} falls, {} alerted, {} missed, mean response {}\n",
                self.falls,
                self.alerts,
                self.alerts_missed,
                self.mean_response
                    .map(|r| format!("{r:.2} s"))
                    .unwrap_or_else(|| "n/a".to_string())
            ));
        }
        if self.tasks_assigned > 0 {
            s.push_str(&format!(
                "tasks:           {}/{} done, makespan {}, acks {} ok / {} failed\n",
                self.tasks_done,
                self.tasks_assigned,
                self.task_makespan
                    .map(|m| format!("{m:.1} s"))
                    .unwrap_or_else(|| "n/a".to_string()),
                self.acks_ok,
                self.acks_failed
            ));
        }
        if let Some(c) = self.coverage {
            s.push_str(&format!("coverage:        {:.1}%\n", 100.0 * c));
        }
        s.push_str(&format!(
            "daily traverse:  {:.0} m/sol at {:.2} h/sol\n",
            self.daily_traverse_m, self.ops_hours
        ));
        s
    }
}
