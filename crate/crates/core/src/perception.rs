//! Far obstacle detector: a statistical stand-in for the onboard vision stack.
//!
//! Each publish cycle rolls per-hazard Bernoulli detection inside the sensing
//! sector, perturbs range and bearing, and draws a confidence score whose
//! distribution separates real hazards from clutter: true positives follow
//! Beta(8, 2) (mean 0.8), false positives Beta(2, 5) (mean 2/7). Thresholding
//! on confidence therefore keeps most real detections while shedding clutter.

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Vec2};
use crate::terrain::HazardSpec;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Poisson};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Maximum sensing range, metres.
    pub max_range: f64,
    /// Per-cycle probability of detecting a hazard inside the sector.
    pub reliability: f64,
    /// Publish cadence, Hz, in [1, 5].
    pub publish_hz: f64,
    /// Confidence below which detections are discarded.
    pub confidence_threshold: f64,
    /// Range noise sigma as a fraction of true range.
    pub range_noise_frac: f64,
    /// Bearing noise sigma, degrees.
    pub bearing_noise_deg: f64,
    /// Expected false positives per publish cycle.
    pub false_positive_rate: f64,
    /// Full field-of-view width, degrees.
    pub fov_deg: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            max_range: 20.0,
            reliability: 0.95,
            publish_hz: 1.0,
            confidence_threshold: 0.5,
            range_noise_frac: 0.02,
            bearing_noise_deg: 1.0,
            false_positive_rate: 0.05,
            fov_deg: 90.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_range > 0.0) {
            return Err(Error::validation(
                "detector.max_range",
                format!("must be > 0 (got {})", self.max_range),
            ));
        }
        if !(0.0..=1.0).contains(&self.reliability) {
            return Err(Error::validation(
                "detector.reliability",
                format!("must be in [0, 1] (got {})", self.reliability),
            ));
        }
        if !(1.0..=5.0).contains(&self.publish_hz) {
            return Err(Error::validation(
                "detector.publish_hz",
                format!("must be in [1, 5] (got {})", self.publish_hz),
            ));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::validation(
                "detector.confidence_threshold",
                format!("must be in [0, 1] (got {})", self.confidence_threshold),
            ));
        }
        if !(self.range_noise_frac >= 0.0) {
            return Err(Error::validation(
                "detector.range_noise_frac",
                format!("must be >= 0 (got {})", self.range_noise_frac),
            ));
        }
        if !(self.bearing_noise_deg >= 0.0) {
            return Err(Error::validation(
                "detector.bearing_noise_deg",
                format!("must be >= 0 (got {})", self.bearing_noise_deg),
            ));
        }
        if !(self.false_positive_rate >= 0.0) {
            return Err(Error::validation(
                "detector.false_positive_rate",
                format!("must be >= 0 (got {})", self.false_positive_rate),
            ));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg <= 360.0) {
            return Err(Error::validation(
                "detector.fov_deg",
                format!("must be in (0, 360] (got {})", self.fov_deg),
            ));
        }
        Ok(())
    }
}

/// One detector return, in the rover frame (x forward, y left).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub relative_position: Vec2,
    /// Estimated hazard footprint radius, metres.
    pub radius: f64,
    pub confidence: f64,
    pub timestamp: f64,
    /// True when the return corresponds to a real hazard (telemetry only;
    /// the guidance side never reads this).
    pub is_ground_truth_match: bool,
}

/// Indices of hazards currently inside the sensing sector.
pub fn visible_hazards(
    rover_pos: Vec2,
    rover_heading: f64,
    hazards: &[HazardSpec],
    cfg: &DetectorConfig,
) -> Vec<usize> {
    let half_fov = cfg.fov_deg.to_radians() / 2.0;
    hazards
        .iter()
        .enumerate()
        .filter(|(_, h)| {
            let rel = h.position - rover_pos;
            let range = rel.norm();
            range <= cfg.max_range
                && wrap_angle(rel.angle() - rover_heading).abs() <= half_fov
        })
        .map(|(i, _)| i)
        .collect()
}

/// Run one publish cycle. Deterministic given the RNG state.
pub fn sense(
    rover_pos: Vec2,
    rover_heading: f64,
    hazards: &[HazardSpec],
    cfg: &DetectorConfig,
    time: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Detection> {
    let tp_conf = Beta::<f64>::new(8.0, 2.0).expect("valid shape");
    let fp_conf = Beta::<f64>::new(2.0, 5.0).expect("valid shape");
    let half_fov = cfg.fov_deg.to_radians() / 2.0;
    let mut out = Vec::new();

    for &i in &visible_hazards(rover_pos, rover_heading, hazards, cfg) {
        if !rng.gen_bool(cfg.reliability) {
            continue;
        }
        let h = &hazards[i];
        let rel = h.position - rover_pos;
        let true_range = rel.norm();
        let true_bearing = wrap_angle(rel.angle() - rover_heading);
        let range = sample_normal(rng, true_range, cfg.range_noise_frac * true_range)
            .clamp(0.0, 1.1 * cfg.max_range);
        let bearing = sample_normal(rng, true_bearing, cfg.bearing_noise_deg.to_radians());
        out.push(Detection {
            relative_position: Vec2::new(range * bearing.cos(), range * bearing.sin()),
            radius: h.radius,
            confidence: tp_conf.sample(rng).clamp(0.0, 1.0),
            timestamp: time,
            is_ground_truth_match: true,
        });
    }

    let n_fp = if cfg.false_positive_rate > 0.0 {
        Poisson::new(cfg.false_positive_rate)
            .expect("positive rate")
            .sample(rng) as usize
    } else {
        0
    };
    for _ in 0..n_fp {
        let range = rng.gen_range(0.0..cfg.max_range);
        let bearing = rng.gen_range(-half_fov..half_fov);
        out.push(Detection {
            relative_position: Vec2::new(range * bearing.cos(), range * bearing.sin()),
            radius: rng.gen_range(0.3..0.8),
            confidence: fp_conf.sample(rng).clamp(0.0, 1.0),
            timestamp: time,
            is_ground_truth_match: false,
        });
    }
    out
}

fn sample_normal(rng: &mut ChaCha8Rng, mean: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return mean;
    }
    rand_distr::Normal::new(mean, sigma)
        .expect("finite sigma")
        .sample(rng)
}

/// Keep detections at or above the confidence threshold.
pub fn threshold_detections(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    dets.iter()
        .copied()
        .filter(|d| d.confidence >= threshold)
        .collect()
}

/// Rover-frame detection position to world coordinates.
pub fn to_world_frame(det: &Detection, rover_pos: Vec2, rover_heading: f64) -> Vec2 {
    let (s, c) = rover_heading.sin_cos();
    let r = det.relative_position;
    rover_pos + Vec2::new(c * r.x - s * r.y, s * r.x + c * r.y)
}
