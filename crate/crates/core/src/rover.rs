//! Rover motion: unicycle kinematics with exact arc integration, pure-pursuit
//! path tracking, in-place point turns, and tracking-error measurement.

use crate::geom::{angle_diff, wrap_angle, Vec2};
use crate::gnc::{GncConfig, NavMode, Path};
use serde::{Deserialize, Serialize};

/// Heading error below which a point turn counts as complete, radians (0.5 deg).
pub const TURN_DONE_TOL: f64 = 0.5 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoverState {
    pub position: Vec2,
    /// Radians in (-pi, pi], zero along +x.
    pub heading: f64,
    pub speed: f64,
    pub omega: f64,
    pub mode: NavMode,
    pub time: f64,
}

impl RoverState {
    pub fn new(position: Vec2, heading: f64) -> RoverState {
        RoverState {
            position,
            heading: wrap_angle(heading),
            speed: 0.0,
            omega: 0.0,
            mode: NavMode::Rapid,
            time: 0.0,
        }
    }
}

/// Advance the unicycle by `dt` at speed `v` and yaw rate `omega`, using the
/// exact circular-arc solution (straight line below |omega| = 1e-9).
pub fn step_kinematics(state: &mut RoverState, v: f64, omega: f64, dt: f64) {
    let th = state.heading;
    if omega.abs() < 1e-9 {
        state.position = state.position + Vec2::new(v * th.cos() * dt, v * th.sin() * dt);
        state.heading = wrap_angle(th + omega * dt);
    } else {
        let r = v / omega;
        let th1 = th + omega * dt;
        state.position =
            state.position + Vec2::new(r * (th1.sin() - th.sin()), r * (th.cos() - th1.cos()));
        state.heading = wrap_angle(th1);
    }
    state.speed = v;
    state.omega = omega;
    state.time += dt;
}

/// Output of the tracking law for one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Steering {
    /// Commanded curvature, 1/m. Positive turns left.
    pub curvature: f64,
    /// The chased point on the path, world frame.
    pub target: Vec2,
    /// True once the rover's projection has reached the path end.
    pub path_complete: bool,
}

/// Pure pursuit: chase the point `lookahead` metres further along the path
/// than the rover's projection. Curvature is 2 y_l / L^2 with y_l the lateral
/// offset of that point in the rover frame.
pub fn pure_pursuit(state: &RoverState, path: &Path, lookahead: f64) -> Steering {
    let total = path.length();
    let (s0, _) = path.project(state.position);
    if s0 >= total - 1e-9 {
        return Steering {
            curvature: 0.0,
            target: *path.points.last().unwrap(),
            path_complete: true,
        };
    }
    let target = path.point_at((s0 + lookahead).min(total));
    let rel = target - state.position;
    let (sin_h, cos_h) = state.heading.sin_cos();
    let y_l = -sin_h * rel.x + cos_h * rel.y;
    Steering {
        curvature: 2.0 * y_l / (lookahead * lookahead),
        target,
        path_complete: false,
    }
}

/// Rotate in place toward `target_heading` at the configured rate, one state
/// per `dt` step (the last step is shortened to land on the target). The
/// rover does not translate and elapsed time is |heading error| / rate.
pub fn execute_point_turn(
    state: &RoverState,
    target_heading: f64,
    cfg: &GncConfig,
    dt: f64,
) -> Vec<RoverState> {
    let mut states = Vec::new();
    let mut s = *state;
    s.speed = 0.0;
    loop {
        let err = angle_diff(target_heading, s.heading);
        if err.abs() < TURN_DONE_TOL {
            break;
        }
        let step = err.abs().min(cfg.point_turn_rate * dt);
        let omega = cfg.point_turn_rate * err.signum();
        s.heading = wrap_angle(s.heading + step * err.signum());
        s.omega = omega;
        s.time += step / cfg.point_turn_rate;
        states.push(s);
    }
    states
}

/// RMS distance from each pose to the nearest point of the path, with the
/// path densely resampled at 0.05 m.
pub fn rms_cross_track(poses: &[Vec2], path: &Path) -> f64 {
    if poses.is_empty() {
        return 0.0;
    }
    let dense = path.resample(0.05);
    let sum_sq: f64 = poses
        .iter()
        .map(|p| {
            dense
                .iter()
                .map(|q| p.dist(*q))
                .fold(f64::INFINITY, f64::min)
                .powi(2)
        })
        .sum();
    (sum_sq / poses.len() as f64).sqrt()
}
