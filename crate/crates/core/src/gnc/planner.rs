//! Grid path planner over the far traversability map.
//!
//! A* on the 8-connected cell graph. Cells at or above the hazard threshold
//! are blocked; cells within two cells of a blocked one carry a proximity
//! cost multiplier of 1 + 4p, which steers full-speed routes away from
//! marked hazards instead of shaving past them. The raw grid path is then
//! shortcut-smoothed wherever the straightened segment is collision-free and
//! no more expensive.

use super::{vertex_curvatures, Path};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::travmap::FarTraversabilityMap;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Chebyshev distance, in cells, over which blocked cells project a penalty.
const PENALTY_REACH: i64 = 2;
/// Fine sampling step for off-grid segment costs, as a fraction of cell size.
const SAMPLE_FRAC: f64 = 0.125;

struct CostField {
    size: usize,
    blocked: Vec<bool>,
    /// Per-cell traversal multiplier: 1 + 4p near blocked cells, else 1.
    mult: Vec<f64>,
}

impl CostField {
    fn build(map: &FarTraversabilityMap) -> CostField {
        let size = map.size;
        let mut blocked = vec![false; size * size];
        for iy in 0..size {
            for ix in 0..size {
                blocked[iy * size + ix] = map.is_hazardous(ix, iy);
            }
        }
        let mut near = vec![false; size * size];
        for iy in 0..size as i64 {
            for ix in 0..size as i64 {
                if !blocked[(iy * size as i64 + ix) as usize] {
                    continue;
                }
                for dy in -PENALTY_REACH..=PENALTY_REACH {
                    for dx in -PENALTY_REACH..=PENALTY_REACH {
                        let (nx, ny) = (ix + dx, iy + dy);
                        if nx >= 0 && ny >= 0 && nx < size as i64 && ny < size as i64 {
                            near[(ny * size as i64 + nx) as usize] = true;
                        }
                    }
                }
            }
        }
        let mut mult = vec![1.0; size * size];
        for i in 0..size * size {
            if near[i] && !blocked[i] {
                mult[i] = 1.0 + 4.0 * crate::travmap::expit(map.cells[i]);
            }
        }
        CostField { size, blocked, mult }
    }

    fn is_blocked(&self, ix: i64, iy: i64) -> bool {
        self.blocked[(iy * self.size as i64 + ix) as usize]
    }

    fn mult_of(&self, ix: i64, iy: i64) -> f64 {
        self.mult[(iy * self.size as i64 + ix) as usize]
    }
}

#[derive(PartialEq)]
struct OpenNode {
    f: f64,
    g: f64,
    idx: usize,
}

impl Eq for OpenNode {}

impl Ord for OpenNode {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap by f, then g, then index, for deterministic tie-breaking.
        other
            .f
            .total_cmp(&self.f)
            .then(other.g.total_cmp(&self.g))
            .then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Plan a route from `start` to `goal` over the map. Both endpoints must lie
/// inside the map; a saturated goal or start cell, or a fully walled-off
/// goal, yields an unreachable error.
pub fn plan_path(map: &FarTraversabilityMap, start: Vec2, goal: Vec2) -> Result<Path> {
    let (sx, sy) = map.cell_of(start).ok_or(Error::OutOfBounds {
        x: start.x,
        y: start.y,
    })?;
    let (gx, gy) = map.cell_of(goal).ok_or(Error::OutOfBounds {
        x: goal.x,
        y: goal.y,
    })?;
    let field = CostField::build(map);
    let unreachable = || Error::Unreachable {
        start: (start.x, start.y),
        goal: (goal.x, goal.y),
    };
    if field.is_blocked(sx as i64, sy as i64) || field.is_blocked(gx as i64, gy as i64) {
        return Err(unreachable());
    }

    let size = map.size;
    let start_idx = sy * size + sx;
    let goal_idx = gy * size + gx;
    let goal_center = map.cell_center(gx, gy);

    let mut g_score = vec![f64::INFINITY; size * size];
    let mut came_from = vec![usize::MAX; size * size];
    let mut closed = vec![false; size * size];
    let mut open = BinaryHeap::new();
    g_score[start_idx] = 0.0;
    open.push(OpenNode {
        f: map.cell_center(sx, sy).dist(goal_center),
        g: 0.0,
        idx: start_idx,
    });

    while let Some(OpenNode { idx, g, .. }) = open.pop() {
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        if idx == goal_idx {
            break;
        }
        let (ix, iy) = ((idx % size) as i64, (idx / size) as i64);
        for (dx, dy) in [
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ] {
            let (nx, ny) = (ix + dx, iy + dy);
            if nx < 0 || ny < 0 || nx >= size as i64 || ny >= size as i64 {
                continue;
            }
            if field.is_blocked(nx, ny) {
                continue;
            }
            // A diagonal move must not squeeze between two blocked cells.
            if dx != 0 && dy != 0 && (field.is_blocked(ix + dx, iy) || field.is_blocked(ix, iy + dy))
            {
                continue;
            }
            let len = map.cell_size * ((dx * dx + dy * dy) as f64).sqrt();
            let step = len * 0.5 * (field.mult_of(ix, iy) + field.mult_of(nx, ny));
            let nidx = (ny as usize) * size + nx as usize;
            let ng = g + step;
            if ng < g_score[nidx] {
                g_score[nidx] = ng;
                came_from[nidx] = idx;
                open.push(OpenNode {
                    f: ng + map.cell_center(nx as usize, ny as usize).dist(goal_center),
                    g: ng,
                    idx: nidx,
                });
            }
        }
    }

    if !closed[goal_idx] {
        return Err(unreachable());
    }

    let mut cells = vec![goal_idx];
    while *cells.last().unwrap() != start_idx {
        cells.push(came_from[*cells.last().unwrap()]);
    }
    cells.reverse();

    let mut points: Vec<Vec2> = Vec::with_capacity(cells.len() + 2);
    points.push(start);
    for &c in &cells {
        let p = map.cell_center(c % size, c / size);
        if points.last().map_or(true, |q| q.dist(p) > 1e-9) {
            points.push(p);
        }
    }
    if points.last().map_or(true, |q| q.dist(goal) > 1e-9) {
        points.push(goal);
    }

    let points = smooth(points, map, &field);
    let cost = polyline_cost(&points, map, &field);
    let curvatures = vertex_curvatures(&points);
    Ok(Path {
        points,
        curvatures,
        cost,
    })
}

/// Greedy shortcutting: from each vertex, jump to the farthest later vertex
/// whose direct segment stays on free cells and does not raise the cost.
fn smooth(points: Vec<Vec2>, map: &FarTraversabilityMap, field: &CostField) -> Vec<Vec2> {
    if points.len() <= 2 {
        return points;
    }
    let mut out = vec![points[0]];
    let mut i = 0;
    while i + 1 < points.len() {
        let mut next = i + 1;
        for j in (i + 2..points.len()).rev() {
            if !segment_free(points[i], points[j], map, field) {
                continue;
            }
            let direct = segment_cost(points[i], points[j], map, field);
            let through: f64 = points[i..=j]
                .windows(2)
                .map(|w| segment_cost(w[0], w[1], map, field))
                .sum();
            if direct <= through + 1e-9 {
                next = j;
                break;
            }
        }
        out.push(points[next]);
        i = next;
    }
    out
}

fn segment_free(a: Vec2, b: Vec2, map: &FarTraversabilityMap, field: &CostField) -> bool {
    let len = a.dist(b);
    let n = (len / (map.cell_size * 0.25)).ceil().max(1.0) as usize;
    for k in 0..=n {
        let p = a + (b - a).scale(k as f64 / n as f64);
        match map.cell_of(p) {
            Some((ix, iy)) if !field.is_blocked(ix as i64, iy as i64) => {}
            _ => return false,
        }
    }
    true
}

/// Cost of a straight segment under the cell-multiplier field, by midpoint
/// sampling. For center-to-center grid steps this equals
/// `len * (mult(src) + mult(dst)) / 2`, the closed form A* uses.
fn segment_cost(a: Vec2, b: Vec2, map: &FarTraversabilityMap, field: &CostField) -> f64 {
    let len = a.dist(b);
    if len == 0.0 {
        return 0.0;
    }
    let n = (len / (map.cell_size * SAMPLE_FRAC)).ceil().max(1.0) as usize;
    let step = len / n as f64;
    let mut cost = 0.0;
    for k in 0..n {
        let p = a + (b - a).scale((k as f64 + 0.5) / n as f64);
        let m = match map.cell_of(p) {
            Some((ix, iy)) => field.mult_of(ix as i64, iy as i64),
            None => 1.0,
        };
        cost += step * m;
    }
    cost
}

fn polyline_cost(points: &[Vec2], map: &FarTraversabilityMap, field: &CostField) -> f64 {
    points
        .windows(2)
        .map(|w| segment_cost(w[0], w[1], map, field))
        .sum()
}
