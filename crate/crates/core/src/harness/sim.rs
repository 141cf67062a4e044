//! The closed-loop run: sense, fuse, decay, replan, arbitrate, steer, step,
//! once per tick, with the coordination layer sharing the same clock.

use crate::coord::run_coordination;
use crate::error::Result;
use crate::geom::{angle_diff, Vec2};
use crate::gnc::{
    mode_transition, needs_point_turn, plan_path, speed_command, ModeInputs, Path,
};
use crate::harness::events::{DetectionRecord, Event};
use crate::harness::scenario::{Route, Scenario};
use crate::perception::{sense, threshold_detections, to_world_frame, visible_hazards};
use crate::rover::{pure_pursuit, step_kinematics, RoverState, TURN_DONE_TOL};
use crate::terrain::{generate_terrain, TerrainGrid};
use crate::travmap::{decay, fuse_detection, query_corridor, FarTraversabilityMap, DEFAULT_DECAY_RATE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// Stop when the rover is this close to the route goal, metres.
pub const GOAL_TOLERANCE: f64 = 0.5;
/// Half-width of the swept corridor checked for mapped hazards, metres.
pub const CORRIDOR_HALF_WIDTH: f64 = 0.8;
/// Corridor lookahead past the slow-down distance, metres.
const CORRIDOR_MARGIN: f64 = 5.0;
/// Tracking lookahead floor and speed gain, metres and seconds.
const LOOKAHEAD_MIN: f64 = 1.5;
const LOOKAHEAD_GAIN: f64 = 1.0;

const SENSE_STREAM: u64 = 0x53454E53;
const COORD_STREAM: u64 = 0x434F4F52;

enum TurnPhase {
    Rolling,
    Braking,
    Turning { target: f64, start: f64 },
}

pub struct SimOutput {
    pub events: Vec<Event>,
    pub grid: TerrainGrid,
    pub final_state: RoverState,
    pub goal_reached: bool,
    pub collisions: usize,
}

fn segment_heading(points: &[Vec2]) -> f64 {
    for w in points.windows(2) {
        let d = w[1] - w[0];
        if d.norm() > 1e-9 {
            return d.y.atan2(d.x);
        }
    }
    0.0
}

/// Course samples from the rover's projection forward by `window` metres.
fn remaining_course(course: &Path, position: Vec2, window: f64, step: f64) -> Vec<Vec2> {
    let total = course.length();
    let (s0, _) = course.project(position);
    let end = (s0 + window).min(total);
    let mut pts = Vec::new();
    let mut s = s0;
    while s < end {
        pts.push(course.point_at(s));
        s += step;
    }
    pts.push(course.point_at(end));
    pts
}

pub fn run_scenario(sc: &Scenario) -> Result<SimOutput> {
    sc.validate()?;
    let mut grid = generate_terrain(&sc.terrain)?;
    grid.add_hazards(&sc.hazards)?;
    let mut map = FarTraversabilityMap::new(grid.size, grid.cell_size, Vec2::new(0.0, 0.0))?;

    let seed = sc.sim.seed;
    let mut rng_sense = ChaCha8Rng::seed_from_u64(seed ^ SENSE_STREAM);
    let mut rng_coord = ChaCha8Rng::seed_from_u64(seed ^ COORD_STREAM);

    let dt = sc.sim.dt;
    let gnc = &sc.gnc;
    let goal = sc.route.goal();
    let fixed_course = !matches!(sc.route, Route::Direct { .. });
    let teleop_speed = sc.teleop.map(|t| t.speed).unwrap_or(0.0);

    let mut events: Vec<Event> = vec![Event::Meta {
        scenario: sc.clone(),
        seed,
    }];

    let mut course;
    let mut plan_ok;
    if fixed_course {
        course = Path::from_points(sc.route.polyline());
        plan_ok = true;
    } else {
        match plan_path(&map, sc.route.start(), goal) {
            Ok(p) => {
                events.push(Event::Plan {
                    time: 0.0,
                    waypoints: p.points.len(),
                    length: p.length(),
                    cost: p.cost,
                });
                course = p;
                plan_ok = true;
            }
            Err(e) => {
                events.push(Event::PlanFailed {
                    time: 0.0,
                    reason: e.to_string(),
                });
                course = Path::from_points(vec![sc.route.start(), goal]);
                plan_ok = false;
            }
        }
    }

    let mut state = RoverState::new(sc.route.start(), segment_heading(&course.points));
    let mut fod_age = f64::INFINITY;
    let mut phase = TurnPhase::Rolling;
    let mut collided: BTreeSet<usize> = BTreeSet::new();
    let mut goal_reached = false;

    let sense_period = sc
        .detector
        .as_ref()
        .map(|d| ((1.0 / (d.publish_hz * dt)).round() as usize).max(1));
    let replan_period = ((1.0 / (gnc.replan_hz * dt)).round() as usize).max(1);
    let corridor_window = gnc.d_slow + CORRIDOR_MARGIN;
    let n_ticks = (sc.sim.max_time / dt).round() as usize;

    for k in 0..n_ticks {
        let t = k as f64 * dt;

        if let (Some(det), Some(period)) = (&sc.detector, sense_period) {
            if k % period == 0 {
                let visible =
                    visible_hazards(state.position, state.heading, &grid.hazards, det).len();
                let raw = sense(state.position, state.heading, &grid.hazards, det, t, &mut rng_sense);
                let kept = threshold_detections(&raw, det.confidence_threshold);
                let items: Vec<DetectionRecord> = raw
                    .iter()
                    .map(|d| {
                        let w = to_world_frame(d, state.position, state.heading);
                        DetectionRecord {
                            x: w.x,
                            y: w.y,
                            radius: d.radius,
                            confidence: d.confidence,
                            kept: d.confidence >= det.confidence_threshold,
                            matched: d.is_ground_truth_match,
                        }
                    })
                    .collect();
                events.push(Event::Detections { time: t, visible, items });
                for d in &kept {
                    let w = to_world_frame(d, state.position, state.heading);
                    let p_hit = d.confidence.clamp(1e-6, 1.0 - 1e-6);
                    fuse_detection(&mut map, w, d.radius, p_hit)?;
                }
                fod_age = 0.0;
            } else {
                fod_age += dt;
            }
        }

        decay(&mut map, dt, DEFAULT_DECAY_RATE);

        let window = remaining_course(&course, state.position, corridor_window, map.cell_size / 2.0);
        let mut nearest = query_corridor(&map, &window, CORRIDOR_HALF_WIDTH);

        if !fixed_course && k % replan_period == 0 && (!plan_ok || nearest.is_some()) {
            match plan_path(&map, state.position, goal) {
                Ok(p) => {
                    events.push(Event::Plan {
                        time: t,
                        waypoints: p.points.len(),
                        length: p.length(),
                        cost: p.cost,
                    });
                    course = p;
                    plan_ok = true;
                    let window =
                        remaining_course(&course, state.position, corridor_window, map.cell_size / 2.0);
                    nearest = query_corridor(&map, &window, CORRIDOR_HALF_WIDTH);
                }
                Err(e) => {
                    events.push(Event::PlanFailed {
                        time: t,
                        reason: e.to_string(),
                    });
                    plan_ok = false;
                }
            }
        }

        let inputs = ModeInputs {
            fod_age,
            nearest_hazard: nearest,
            teleop_active: sc.teleop.is_some(),
            plan_ok,
        };
        let next_mode = mode_transition(state.mode, &inputs, gnc);
        if next_mode != state.mode {
            events.push(Event::Mode {
                time: t,
                from: state.mode,
                to: next_mode,
            });
            state.mode = next_mode;
        }
        let mut v_cmd = speed_command(state.mode, nearest, teleop_speed, gnc);

        // Tracking and the point-turn state machine. While rolling, yaw
        // authority is capped at the point-turn rate; curvature demands past
        // the chassis limit force a stop-and-turn.
        let lookahead = LOOKAHEAD_MIN.max(LOOKAHEAD_GAIN * state.speed);
        let steer = pure_pursuit(&state, &course, lookahead);
        let mut curvature = if steer.path_complete {
            let rel = goal - state.position;
            let d = rel.norm().max(GOAL_TOLERANCE);
            let (sin_h, cos_h) = state.heading.sin_cos();
            2.0 * (-sin_h * rel.x + cos_h * rel.y) / (d * d)
        } else {
            steer.curvature
        };

        if matches!(phase, TurnPhase::Rolling) && needs_point_turn(curvature, gnc) {
            phase = TurnPhase::Braking;
        }
        if let TurnPhase::Braking = phase {
            v_cmd = 0.0;
            if state.speed <= 1e-9 {
                let bearing = {
                    let rel = steer.target - state.position;
                    if rel.norm() > 1e-9 {
                        rel.y.atan2(rel.x)
                    } else {
                        state.heading
                    }
                };
                if angle_diff(bearing, state.heading).abs() <= TURN_DONE_TOL {
                    phase = TurnPhase::Rolling;
                } else {
                    events.push(Event::TurnStart {
                        time: t,
                        from_heading: state.heading,
                        to_heading: bearing,
                    });
                    phase = TurnPhase::Turning {
                        target: bearing,
                        start: t,
                    };
                }
            }
        }

        let mut omega;
        let turning;
        match phase {
            TurnPhase::Turning { target, start } => {
                let diff = angle_diff(target, state.heading);
                if diff.abs() <= TURN_DONE_TOL {
                    events.push(Event::TurnEnd {
                        time: t,
                        duration: t - start,
                    });
                    phase = TurnPhase::Rolling;
                    v_cmd = speed_command(state.mode, nearest, teleop_speed, gnc);
                    omega = 0.0;
                    turning = false;
                } else {
                    v_cmd = 0.0;
                    omega = diff.signum() * gnc.point_turn_rate.min(diff.abs() / dt);
                    turning = true;
                }
            }
            TurnPhase::Braking => {
                omega = 0.0;
                turning = true;
            }
            TurnPhase::Rolling => {
                omega = 0.0;
                turning = false;
            }
        }

        let v = if v_cmd > state.speed {
            (state.speed + gnc.a_max * dt).min(v_cmd)
        } else {
            (state.speed - gnc.a_max * dt).max(v_cmd)
        };
        if !turning {
            if steer.path_complete && v < 1e-9 {
                curvature = 0.0;
            }
            omega = (v * curvature).clamp(-gnc.point_turn_rate, gnc.point_turn_rate);
        } else if matches!(phase, TurnPhase::Braking) {
            omega = (v * curvature).clamp(-gnc.point_turn_rate, gnc.point_turn_rate);
        }

        events.push(Event::Rover {
            time: t,
            x: state.position.x,
            y: state.position.y,
            heading: state.heading,
            speed: v,
            omega,
            mode: state.mode,
            commanded: v_cmd,
            turning,
        });

        step_kinematics(&mut state, v, omega, dt);

        for (i, h) in grid.hazards.iter().enumerate() {
            if !collided.contains(&i) && h.contains(state.position) {
                collided.insert(i);
                events.push(Event::Collision {
                    time: state.time,
                    x: state.position.x,
                    y: state.position.y,
                    hazard: i,
                });
            }
        }

        if state.position.dist(goal) <= GOAL_TOLERANCE {
            events.push(Event::Goal { time: state.time });
            goal_reached = true;
            break;
        }
    }

    if let TurnPhase::Turning { start, .. } = phase {
        if !goal_reached {
            events.push(Event::TurnEnd {
                time: state.time,
                duration: state.time - start,
            });
        }
    }

    if !sc.agents.is_empty() && (!sc.tasks.is_empty() || !sc.fall_schedule.is_empty()) {
        let falls: Vec<(String, f64)> = sc
            .fall_schedule
            .iter()
            .map(|f| (f.agent.clone(), f.time))
            .collect();
        let run = run_coordination(
            &sc.agents,
            &sc.tasks,
            &falls,
            &sc.bus,
            &sc.coord,
            &mut rng_coord,
        )?;
        events.extend(run.events.into_iter().map(Event::from));
    }

    events.sort_by(|a, b| a.time().total_cmp(&b.time()));

    Ok(SimOutput {
        events,
        grid,
        final_state: state,
        goal_reached,
        collisions: collided.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnc::NavMode;
    use crate::harness::events::{rover_positions, to_jsonl};
    use crate::harness::scenario::{SimParams, TeleopConfig};
    use crate::rover::rms_cross_track;
    use crate::terrain::TerrainParams;

    fn flat_direct(name: &str) -> Scenario {
        Scenario {
            name: name.to_string(),
            terrain: TerrainParams {
                amplitude: 0.0,
                ..TerrainParams::default()
            },
            hazards: Vec::new(),
            detector: Some(Default::default()),
            gnc: Default::default(),
            route: Route::Direct {
                start: Vec2::new(2.0, 16.0),
                goal: Vec2::new(30.0, 16.0),
            },
            sim: SimParams {
                max_time: 120.0,
                ..SimParams::default()
            },
            teleop: None,
            bus: Default::default(),
            coord: Default::default(),
            agents: Vec::new(),
            tasks: Vec::new(),
            fall_schedule: Vec::new(),
        }
    }

    #[test]
    fn clear_direct_route_reaches_the_goal_at_speed() {
        let out = run_scenario(&flat_direct("clear")).unwrap();
        assert!(out.goal_reached);
        assert_eq!(out.collisions, 0);
        let faster_ticks = out
            .events
            .iter()
            .filter(|e| matches!(e, Event::Rover { mode: NavMode::Faster, .. }))
            .count();
        let total_ticks = rover_positions(&out.events).len();
        assert!(
            faster_ticks as f64 > 0.8 * total_ticks as f64,
            "{faster_ticks}/{total_ticks} ticks in FASTER"
        );
    }

    #[test]
    fn reruns_are_byte_identical() {
        let sc = flat_direct("repeat");
        let a = to_jsonl(&run_scenario(&sc).unwrap().events).unwrap();
        let b = to_jsonl(&run_scenario(&sc).unwrap().events).unwrap();
        assert_eq!(a, b);
        let mut sc2 = sc;
        sc2.sim.seed = 1;
        let c = to_jsonl(&run_scenario(&sc2).unwrap().events).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn boulder_on_the_route_is_avoided_without_collision() {
        let mut sc = flat_direct("dodge");
        sc.hazards = vec![crate::terrain::HazardSpec {
            kind: crate::terrain::HazardKind::Boulder,
            position: Vec2::new(16.0, 16.0),
            radius: 1.0,
            height: 0.5,
        }];
        sc.sim.max_time = 240.0;
        let out = run_scenario(&sc).unwrap();
        assert!(out.goal_reached, "rover should route around the boulder");
        assert_eq!(out.collisions, 0);
        let replans = out
            .events
            .iter()
            .filter(|e| matches!(e, Event::Plan { .. }))
            .count();
        assert!(replans >= 2, "expected a swerve replan, got {replans}");
    }

    #[test]
    fn no_detector_means_creep_speed_only() {
        let mut sc = flat_direct("blind");
        sc.detector = None;
        sc.sim.max_time = 60.0;
        let out = run_scenario(&sc).unwrap();
        for e in &out.events {
            if let Event::Rover { mode, speed, .. } = e {
                assert_ne!(*mode, NavMode::Faster);
                assert!(*speed <= sc.gnc.v_rapid + 1e-9);
            }
        }
    }

    #[test]
    fn teleop_tracks_at_the_operator_speed() {
        let mut sc = flat_direct("teleop");
        sc.teleop = Some(TeleopConfig { speed: 1.15 });
        let out = run_scenario(&sc).unwrap();
        assert!(out.goal_reached);
        let teleop_ticks = out
            .events
            .iter()
            .filter(|e| matches!(e, Event::Rover { mode: NavMode::Teleop, .. }))
            .count();
        assert!(teleop_ticks > 0);
        let top = out
            .events
            .iter()
            .filter_map(|e| match e {
                Event::Rover { speed, .. } => Some(*speed),
                _ => None,
            })
            .fold(0.0, f64::max);
        assert!((top - 1.15).abs() < 1e-9, "top speed {top}");
    }

    #[test]
    fn winding_course_is_tracked_tightly_at_default_speed() {
        let mut sc = flat_direct("winding");
        sc.route = Route::Winding {
            start: Vec2::new(2.0, 16.0),
            heading_deg: 0.0,
            length: 28.0,
            amplitude: 3.0,
            wavelength: 20.0,
            spacing: 0.5,
        };
        sc.sim.max_time = 120.0;
        let out = run_scenario(&sc).unwrap();
        assert!(out.goal_reached);
        let course = Path::from_points(sc.route.polyline());
        let rms = rms_cross_track(&rover_positions(&out.events), &course);
        assert!(rms < 0.3, "rms cross-track {rms}");
        let turns = out
            .events
            .iter()
            .filter(|e| matches!(e, Event::TurnStart { .. }))
            .count();
        assert_eq!(turns, 0, "default speed should hold the curve");
    }

    #[test]
    fn coordination_events_share_the_mission_clock() {
        let mut sc = flat_direct("mixed");
        sc.agents = vec![
            crate::coord::Agent {
                id: "lead".into(),
                role: crate::coord::AgentRole::Leader,
                position: Vec2::new(1.0, 1.0),
            },
            crate::coord::Agent {
                id: "scout".into(),
                role: crate::coord::AgentRole::Secondary,
                position: Vec2::new(2.0, 1.0),
            },
            crate::coord::Agent {
                id: "eva".into(),
                role: crate::coord::AgentRole::Astronaut,
                position: Vec2::new(3.0, 1.0),
            },
        ];
        sc.fall_schedule = vec![crate::harness::scenario::FallSpec {
            agent: "eva".into(),
            time: 5.0,
        }];
        let out = run_scenario(&sc).unwrap();
        let alert = out.events.iter().find_map(|e| match e {
            Event::Alert { time, response, .. } => Some((*time, *response)),
            _ => None,
        });
        let (time, response) = alert.expect("fall should produce an alert");
        assert!((response - 1.2).abs() < 1e-9);
        assert!((time - 6.2).abs() < 1e-9);
        for w in out.events.windows(2) {
            assert!(w[0].time() <= w[1].time() + 1e-12);
        }
    }
}
