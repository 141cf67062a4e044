//! Far traversability map: a log-odds occupancy grid fed by detections.
//!
//! Each cell holds clamped log-odds of "hazardous". Detections add the logit
//! of their confidence, so repeated independent evidence compounds; linear
//! decay pulls every cell back toward the unknown prior (log-odds 0) so stale
//! false positives fade out.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use serde::{Deserialize, Serialize};

/// Default decay rate toward the prior, log-odds units per second.
pub const DEFAULT_DECAY_RATE: f64 = 0.02;

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn expit(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarTraversabilityMap {
    pub size: usize,
    pub cell_size: f64,
    /// World position of the grid's (0, 0) corner.
    pub origin: Vec2,
    /// Row-major log-odds, index = iy * size + ix.
    pub cells: Vec<f64>,
    /// Probability at or above which a cell counts as hazardous.
    pub hazard_prob_threshold: f64,
    pub l_min: f64,
    pub l_max: f64,
}

impl FarTraversabilityMap {
    pub fn new(size: usize, cell_size: f64, origin: Vec2) -> Result<Self> {
        if size == 0 {
            return Err(Error::validation("map.size", "must be > 0"));
        }
        if !(cell_size > 0.0) {
            return Err(Error::validation(
                "map.cell_size",
                format!("must be > 0 (got {cell_size})"),
            ));
        }
        Ok(FarTraversabilityMap {
            size,
            cell_size,
            origin,
            cells: vec![0.0; size * size],
            hazard_prob_threshold: 0.7,
            l_min: -4.0,
            l_max: 4.0,
        })
    }

    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.size + ix
    }

    pub fn extent(&self) -> f64 {
        self.size as f64 * self.cell_size
    }

    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let q = p - self.origin;
        if q.x < 0.0 || q.y < 0.0 || q.x >= self.extent() || q.y >= self.extent() {
            return None;
        }
        Some((
            ((q.x / self.cell_size) as usize).min(self.size - 1),
            ((q.y / self.cell_size) as usize).min(self.size - 1),
        ))
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Vec2 {
        self.origin
            + Vec2::new(
                (ix as f64 + 0.5) * self.cell_size,
                (iy as f64 + 0.5) * self.cell_size,
            )
    }

    /// Hazard probability of a cell.
    pub fn probability(&self, ix: usize, iy: usize) -> f64 {
        expit(self.cells[self.idx(ix, iy)])
    }

    pub fn probability_at(&self, p: Vec2) -> Option<f64> {
        self.cell_of(p).map(|(ix, iy)| self.probability(ix, iy))
    }

    pub fn is_hazardous(&self, ix: usize, iy: usize) -> bool {
        self.probability(ix, iy) >= self.hazard_prob_threshold
    }

    /// Probability grid as CSV, one row per y index.
    pub fn probability_csv(&self) -> String {
        let mut out = String::new();
        for iy in 0..self.size {
            let row: Vec<String> = (0..self.size)
                .map(|ix| format!("{:.4}", self.probability(ix, iy)))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Add the logit of `p_hit` to every cell whose center lies within `radius`
/// of `world_position` (at minimum the containing cell), clamped to the map's
/// log-odds range. Updates aimed outside the map are ignored with a warning.
pub fn fuse_detection(
    map: &mut FarTraversabilityMap,
    world_position: Vec2,
    radius: f64,
    p_hit: f64,
) -> Result<()> {
    if !(p_hit > 0.0 && p_hit < 1.0) {
        return Err(Error::validation(
            "fuse.p_hit",
            format!("must be in (0, 1) (got {p_hit})"),
        ));
    }
    let Some((cx, cy)) = map.cell_of(world_position) else {
        log::warn!(
            "detection at ({:.2}, {:.2}) outside map, ignored",
            world_position.x,
            world_position.y
        );
        return Ok(());
    };
    let dl = logit(p_hit);
    let reach = (radius.max(0.0) / map.cell_size).ceil() as i64;
    let mut touched = vec![(cx, cy)];
    if reach > 0 {
        touched.clear();
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let (ix, iy) = (cx as i64 + dx, cy as i64 + dy);
                if ix < 0 || iy < 0 || ix >= map.size as i64 || iy >= map.size as i64 {
                    continue;
                }
                let (ix, iy) = (ix as usize, iy as usize);
                if map.cell_center(ix, iy).dist(world_position) <= radius {
                    touched.push((ix, iy));
                }
            }
        }
    }
    for (ix, iy) in touched {
        let i = map.idx(ix, iy);
        map.cells[i] = (map.cells[i] + dl).clamp(map.l_min, map.l_max);
    }
    Ok(())
}

/// Arc length along `path` to the first point whose surrounding cells (centers
/// within `half_width`) include a hazardous one. None if the corridor is clear.
pub fn query_corridor(
    map: &FarTraversabilityMap,
    path: &[Vec2],
    half_width: f64,
) -> Option<f64> {
    if path.is_empty() {
        return None;
    }
    let step = map.cell_size / 2.0;
    let reach = (half_width / map.cell_size).ceil() as i64;
    let mut arc = 0.0;
    let check = |p: Vec2, arc: f64| -> Option<f64> {
        let (cx, cy) = match map.cell_of(p) {
            Some(c) => c,
            None => return None,
        };
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let (ix, iy) = (cx as i64 + dx, cy as i64 + dy);
                if ix < 0 || iy < 0 || ix >= map.size as i64 || iy >= map.size as i64 {
                    continue;
                }
                let (ix, iy) = (ix as usize, iy as usize);
                if map.cell_center(ix, iy).dist(p) <= half_width && map.is_hazardous(ix, iy) {
                    return Some(arc);
                }
            }
        }
        None
    };
    if let Some(hit) = check(path[0], 0.0) {
        return Some(hit);
    }
    for w in path.windows(2) {
        let seg = w[1] - w[0];
        let len = seg.norm();
        if len == 0.0 {
            continue;
        }
        let n = (len / step).ceil() as usize;
        for k in 1..=n {
            let t = k as f64 / n as f64;
            if let Some(hit) = check(w[0] + seg.scale(t), arc + len * t) {
                return Some(hit);
            }
        }
        arc += len;
    }
    None
}

/// Move every cell linearly toward log-odds 0 by `rate * dt`, never crossing.
pub fn decay(map: &mut FarTraversabilityMap, dt: f64, rate: f64) {
    let shift = rate * dt;
    if shift <= 0.0 {
        return;
    }
    for l in &mut map.cells {
        *l -= l.signum() * shift.min(l.abs());
    }
}
