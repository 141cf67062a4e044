//! Guidance and mode logic: the four navigation modes, the transition
//! priority between them, the speed policy, and the small closed-form
//! relations (reaction time, stopping distance, improvement ratio) the
//! performance analysis is built on.

pub mod planner;

pub use planner::plan_path;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use serde::{Deserialize, Serialize};

/// Hard ceiling on operator-commanded speed in TELEOP, m/s.
pub const TELEOP_SPEED_CAP: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NavMode {
    /// Full-speed autonomous traverse guided by the far traversability map.
    Faster,
    /// Conventional short-horizon creep; the fallback when far sensing is
    /// stale or planning fails.
    Rapid,
    /// Operator in the loop, capped at [`TELEOP_SPEED_CAP`].
    Teleop,
    /// Emergency stop; exits through RAPID once the hazard clears.
    SafeStop,
}

impl NavMode {
    pub fn name(self) -> &'static str {
        match self {
            NavMode::Faster => "FASTER",
            NavMode::Rapid => "RAPID",
            NavMode::Teleop => "TELEOP",
            NavMode::SafeStop => "SAFE_STOP",
        }
    }
}

impl std::fmt::Display for NavMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GncConfig {
    /// Commanded traverse speed in FASTER, m/s.
    pub v_cmd_faster: f64,
    /// Creep speed in RAPID, m/s. Must stay below `v_cmd_faster`.
    pub v_rapid: f64,
    /// Hazard distance at or below which the rover must stop, metres.
    pub d_stop: f64,
    /// Hazard distance at which the speed ramp starts, metres.
    pub d_slow: f64,
    /// Replan cadence, Hz.
    pub replan_hz: f64,
    /// Tightest arc the chassis can follow while rolling, metres.
    pub min_turn_radius: f64,
    /// Detector silence after which FASTER degrades to RAPID, seconds.
    pub fod_staleness_timeout: f64,
    /// Acceleration and braking limit, m/s^2.
    pub a_max: f64,
    /// Yaw rate during point turns, rad/s. Doubles as the drive yaw-rate
    /// budget: the same actuators steer while rolling.
    pub point_turn_rate: f64,
}

impl Default for GncConfig {
    fn default() -> Self {
        GncConfig {
            v_cmd_faster: 0.7,
            v_rapid: 0.1,
            d_stop: 1.5,
            d_slow: 10.0,
            replan_hz: 2.0,
            min_turn_radius: 2.0,
            fod_staleness_timeout: 2.0,
            a_max: 0.5,
            point_turn_rate: 0.3,
        }
    }
}

impl GncConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gnc.v_cmd_faster", self.v_cmd_faster),
            ("gnc.v_rapid", self.v_rapid),
            ("gnc.d_stop", self.d_stop),
            ("gnc.replan_hz", self.replan_hz),
            ("gnc.min_turn_radius", self.min_turn_radius),
            ("gnc.fod_staleness_timeout", self.fod_staleness_timeout),
            ("gnc.a_max", self.a_max),
            ("gnc.point_turn_rate", self.point_turn_rate),
        ] {
            if !(v > 0.0) {
                return Err(Error::validation(name, format!("must be > 0 (got {v})")));
            }
        }
        if !(self.v_rapid < self.v_cmd_faster) {
            return Err(Error::validation(
                "gnc.v_rapid",
                format!(
                    "must be below v_cmd_faster (got {} >= {})",
                    self.v_rapid, self.v_cmd_faster
                ),
            ));
        }
        if !(self.d_slow > self.d_stop) {
            return Err(Error::validation(
                "gnc.d_slow",
                format!(
                    "must exceed d_stop (got {} <= {})",
                    self.d_slow, self.d_stop
                ),
            ));
        }
        // A stop from full commanded speed must fit inside d_stop.
        let needed = self.v_cmd_faster * self.v_cmd_faster / (2.0 * self.d_stop);
        if self.a_max < needed {
            return Err(Error::validation(
                "gnc.a_max",
                format!(
                    "must be at least v_cmd_faster^2 / (2 d_stop) = {needed:.3} (got {})",
                    self.a_max
                ),
            ));
        }
        Ok(())
    }
}

/// Everything the mode arbiter looks at on one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeInputs {
    /// Seconds since the detector last published; infinity if it never has.
    pub fod_age: f64,
    /// Arc distance to the nearest hazard on the route, if any.
    pub nearest_hazard: Option<f64>,
    pub teleop_active: bool,
    pub plan_ok: bool,
}

/// Arbitrate the next mode. Priority: imminent hazard, then operator
/// control, then degraded sensing or planning, then full-speed traverse.
/// SAFE_STOP recovers through RAPID rather than jumping straight to FASTER.
pub fn mode_transition(current: NavMode, inputs: &ModeInputs, cfg: &GncConfig) -> NavMode {
    if inputs.nearest_hazard.map_or(false, |d| d <= cfg.d_stop) {
        return NavMode::SafeStop;
    }
    if inputs.teleop_active {
        return NavMode::Teleop;
    }
    if inputs.fod_age > cfg.fod_staleness_timeout || !inputs.plan_ok {
        return NavMode::Rapid;
    }
    if current == NavMode::SafeStop {
        return NavMode::Rapid;
    }
    NavMode::Faster
}

/// Speed setpoint for the mode. FASTER ramps down linearly between `d_slow`
/// and `d_stop`; TELEOP passes the operator value through the cap.
pub fn speed_command(
    mode: NavMode,
    nearest_hazard: Option<f64>,
    teleop_speed: f64,
    cfg: &GncConfig,
) -> f64 {
    match mode {
        NavMode::SafeStop => 0.0,
        NavMode::Rapid => cfg.v_rapid,
        NavMode::Teleop => teleop_speed.clamp(0.0, TELEOP_SPEED_CAP),
        NavMode::Faster => {
            let d = nearest_hazard.unwrap_or(f64::INFINITY);
            let scale = ((d - cfg.d_stop) / (cfg.d_slow - cfg.d_stop)).clamp(0.0, 1.0);
            cfg.v_cmd_faster * scale
        }
    }
}

/// Seconds between first possible detection and reaching the hazard.
pub fn reaction_time(detection_range: f64, traverse_speed: f64) -> Result<f64> {
    if !(traverse_speed > 0.0) {
        return Err(Error::validation(
            "reaction_time.traverse_speed",
            format!("must be > 0 (got {traverse_speed})"),
        ));
    }
    if !(detection_range >= 0.0) {
        return Err(Error::validation(
            "reaction_time.detection_range",
            format!("must be >= 0 (got {detection_range})"),
        ));
    }
    Ok(detection_range / traverse_speed)
}

/// Percentage gain of `new` over `baseline`.
pub fn improvement_ratio(new: f64, baseline: f64) -> Result<f64> {
    if baseline == 0.0 {
        return Err(Error::validation(
            "improvement_ratio.baseline",
            "must be nonzero".to_string(),
        ));
    }
    Ok((new - baseline) / baseline * 100.0)
}

/// Distance covered while braking from `speed` at `a_max`.
pub fn stopping_distance(speed: f64, a_max: f64) -> Result<f64> {
    if !(a_max > 0.0) {
        return Err(Error::validation(
            "stopping_distance.a_max",
            format!("must be > 0 (got {a_max})"),
        ));
    }
    Ok(speed * speed / (2.0 * a_max))
}

/// True when the commanded arc is tighter than the chassis can roll.
pub fn needs_point_turn(curvature: f64, cfg: &GncConfig) -> bool {
    curvature.abs() > 1.0 / cfg.min_turn_radius
}

/// A planned route: a polyline with per-vertex discrete curvature and the
/// traversal cost under the planner's cost model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub points: Vec<Vec2>,
    /// Discrete curvature at each vertex (zero at the ends), 1/m.
    pub curvatures: Vec<f64>,
    pub cost: f64,
}

impl Path {
    pub fn from_points(points: Vec<Vec2>) -> Path {
        let curvatures = vertex_curvatures(&points);
        Path {
            points,
            curvatures,
            cost: 0.0,
        }
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    /// Point at arc length `s`, clamped to the ends.
    pub fn point_at(&self, s: f64) -> Vec2 {
        if self.points.len() == 1 || s <= 0.0 {
            return self.points[0];
        }
        let mut acc = 0.0;
        for w in self.points.windows(2) {
            let len = w[0].dist(w[1]);
            if acc + len >= s && len > 0.0 {
                let t = (s - acc) / len;
                return w[0] + (w[1] - w[0]).scale(t);
            }
            acc += len;
        }
        *self.points.last().unwrap()
    }

    /// Arc length of the closest point to `p` and the distance to it.
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        if self.points.len() == 1 {
            return (0.0, p.dist(self.points[0]));
        }
        let mut best = (0.0, f64::INFINITY);
        let mut acc = 0.0;
        for w in self.points.windows(2) {
            let seg = w[1] - w[0];
            let len = seg.norm();
            if len > 0.0 {
                let t = ((p - w[0]).dot(seg) / (len * len)).clamp(0.0, 1.0);
                let d = p.dist(w[0] + seg.scale(t));
                if d < best.1 {
                    best = (acc + t * len, d);
                }
            }
            acc += len;
        }
        best
    }

    /// Evenly spaced points along the polyline, at most `step` apart.
    pub fn resample(&self, step: f64) -> Vec<Vec2> {
        let total = self.length();
        if total == 0.0 {
            return vec![self.points[0]];
        }
        let n = (total / step).ceil() as usize;
        (0..=n)
            .map(|k| self.point_at(total * k as f64 / n as f64))
            .collect()
    }
}

/// Turn angle at each interior vertex over the mean adjacent segment length.
pub fn vertex_curvatures(points: &[Vec2]) -> Vec<f64> {
    let n = points.len();
    let mut out = vec![0.0; n];
    for i in 1..n.saturating_sub(1) {
        let a = points[i] - points[i - 1];
        let b = points[i + 1] - points[i];
        let (la, lb) = (a.norm(), b.norm());
        if la == 0.0 || lb == 0.0 {
            continue;
        }
        let turn = crate::geom::angle_diff(b.angle(), a.angle());
        out[i] = turn / (0.5 * (la + lb));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_config_is_valid_and_brakes_inside_d_stop() {
        let cfg = GncConfig::default();
        cfg.validate().unwrap();
        let d = stopping_distance(cfg.v_cmd_faster, cfg.a_max).unwrap();
        assert!(d < cfg.d_stop);
    }

    #[test]
    fn infeasible_braking_is_rejected_at_load() {
        let cfg = GncConfig {
            v_cmd_faster: 2.0,
            ..GncConfig::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("a_max"), "{err}");
    }

    #[test]
    fn rapid_must_stay_below_faster() {
        let cfg = GncConfig {
            v_rapid: 0.7,
            ..GncConfig::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("v_rapid"), "{err}");
    }

    #[test]
    fn hazard_inside_d_stop_wins_over_everything() {
        let cfg = GncConfig::default();
        for current in [NavMode::Faster, NavMode::Rapid, NavMode::Teleop, NavMode::SafeStop] {
            for teleop in [false, true] {
                for plan_ok in [false, true] {
                    let m = mode_transition(
                        current,
                        &ModeInputs {
                            fod_age: 0.1,
                            nearest_hazard: Some(1.5),
                            teleop_active: teleop,
                            plan_ok,
                        },
                        &cfg,
                    );
                    assert_eq!(m, NavMode::SafeStop);
                }
            }
        }
    }

    #[test]
    fn mode_priority_ladder() {
        let cfg = GncConfig::default();
        let base = ModeInputs {
            fod_age: 0.1,
            nearest_hazard: Some(12.0),
            teleop_active: false,
            plan_ok: true,
        };
        assert_eq!(mode_transition(NavMode::Faster, &base, &cfg), NavMode::Faster);
        assert_eq!(
            mode_transition(
                NavMode::Faster,
                &ModeInputs {
                    teleop_active: true,
                    ..base
                },
                &cfg
            ),
            NavMode::Teleop
        );
        assert_eq!(
            mode_transition(NavMode::Faster, &ModeInputs { fod_age: 2.5, ..base }, &cfg),
            NavMode::Rapid
        );
        assert_eq!(
            mode_transition(
                NavMode::Faster,
                &ModeInputs {
                    plan_ok: false,
                    ..base
                },
                &cfg
            ),
            NavMode::Rapid
        );
        // Teleop outranks degraded sensing.
        assert_eq!(
            mode_transition(
                NavMode::Faster,
                &ModeInputs {
                    fod_age: 99.0,
                    teleop_active: true,
                    ..base
                },
                &cfg
            ),
            NavMode::Teleop
        );
    }

    #[test]
    fn safe_stop_recovers_through_rapid() {
        let cfg = GncConfig::default();
        let cleared = ModeInputs {
            fod_age: 0.1,
            nearest_hazard: Some(5.0),
            teleop_active: false,
            plan_ok: true,
        };
        let m = mode_transition(NavMode::SafeStop, &cleared, &cfg);
        assert_eq!(m, NavMode::Rapid);
        assert_eq!(mode_transition(m, &cleared, &cfg), NavMode::Faster);
    }

    #[test]
    fn speed_ramp_hits_the_documented_points() {
        let cfg = GncConfig::default();
        let v = |d: Option<f64>| speed_command(NavMode::Faster, d, 0.0, &cfg);
        assert_relative_eq!(v(Some(5.75)), 0.35, epsilon = 1e-12);
        assert_relative_eq!(v(Some(1.5)), 0.0, epsilon = 1e-12);
        assert_relative_eq!(v(Some(0.5)), 0.0, epsilon = 1e-12);
        assert_relative_eq!(v(Some(10.0)), 0.7, epsilon = 1e-12);
        assert_relative_eq!(v(Some(25.0)), 0.7, epsilon = 1e-12);
        assert_relative_eq!(v(None), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn speed_ramp_is_monotone_in_distance() {
        let cfg = GncConfig::default();
        let mut prev = 0.0;
        for k in 0..200 {
            let d = 0.1 * k as f64;
            let v = speed_command(NavMode::Faster, Some(d), 0.0, &cfg);
            assert!(v >= prev - 1e-12);
            assert!((0.0..=cfg.v_cmd_faster).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn teleop_is_capped_and_other_modes_are_fixed() {
        let cfg = GncConfig::default();
        assert_relative_eq!(
            speed_command(NavMode::Teleop, None, 1.5, &cfg),
            TELEOP_SPEED_CAP
        );
        assert_relative_eq!(speed_command(NavMode::Teleop, None, 0.9, &cfg), 0.9);
        assert_relative_eq!(speed_command(NavMode::Rapid, Some(3.0), 0.0, &cfg), 0.1);
        assert_relative_eq!(speed_command(NavMode::SafeStop, None, 1.0, &cfg), 0.0);
    }

    #[test]
    fn reaction_time_matches_range_over_speed() {
        let t = reaction_time(20.0, 0.7).unwrap();
        assert_relative_eq!(t, 28.571428571428573, epsilon = 1e-12);
        assert!(reaction_time(20.0, 0.0).is_err());
        assert!(reaction_time(-1.0, 0.5).is_err());
    }

    #[test]
    fn improvement_ratio_examples() {
        assert_relative_eq!(improvement_ratio(0.7, 0.1).unwrap(), 600.0, epsilon = 1e-9);
        assert_relative_eq!(improvement_ratio(1.0, 0.1).unwrap(), 900.0, epsilon = 1e-9);
        assert!(improvement_ratio(1.0, 0.0).is_err());
    }

    #[test]
    fn stopping_distances() {
        assert_relative_eq!(stopping_distance(1.2, 0.5).unwrap(), 1.44, epsilon = 1e-12);
        assert_relative_eq!(stopping_distance(0.7, 0.5).unwrap(), 0.49, epsilon = 1e-12);
        assert!(stopping_distance(1.0, 0.0).is_err());
    }

    #[test]
    fn point_turn_trigger_uses_min_turn_radius() {
        let cfg = GncConfig::default();
        assert!(needs_point_turn(0.6, &cfg));
        assert!(needs_point_turn(-0.6, &cfg));
        assert!(!needs_point_turn(0.4, &cfg));
        assert!(!needs_point_turn(0.5, &cfg));
    }

    #[test]
    fn path_projection_and_sampling() {
        let p = Path::from_points(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(4.0, 0.0),
            Vec2::new(4.0, 3.0),
        ]);
        assert_relative_eq!(p.length(), 7.0);
        let (s, d) = p.project(Vec2::new(2.0, 1.0));
        assert_relative_eq!(s, 2.0);
        assert_relative_eq!(d, 1.0);
        let (s, d) = p.project(Vec2::new(5.0, 2.0));
        assert_relative_eq!(s, 6.0);
        assert_relative_eq!(d, 1.0);
        assert_eq!(p.point_at(5.0), Vec2::new(4.0, 1.0));
        let dense = p.resample(0.05);
        assert!(dense.len() >= 140);
        assert_eq!(dense[0], Vec2::new(0.0, 0.0));
        assert_eq!(*dense.last().unwrap(), Vec2::new(4.0, 3.0));
        // Right-angle corner at the middle vertex.
        assert_relative_eq!(
            p.curvatures[1],
            std::f64::consts::FRAC_PI_2 / 3.5,
            epsilon = 1e-12
        );
    }
}
