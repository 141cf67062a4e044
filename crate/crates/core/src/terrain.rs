//! Procedural terrain: fractal heightmaps, analytic hazards, and cell labels.
//!
//! Heights live on a square grid of cell centers. The heightmap comes from
//! midpoint displacement (diamond-square) whose per-level falloff is the
//! `roughness` persistence, rescaled so the peak-to-peak relief equals
//! `amplitude`. Hazards are point-plus-radius shapes superposed analytically,
//! and every cell gets exactly one label with fixed priority
//! Boulder > Crater > Shadow > Slope > Safe.

use crate::error::{Error, Result};
use crate::geom::Vec2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HazardKind {
    Boulder,
    Crater,
    Dune,
}

/// A single obstacle: a radial bump (or pit) centred at `position`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardSpec {
    pub kind: HazardKind,
    pub position: Vec2,
    /// Footprint radius, metres. Must be positive.
    pub radius: f64,
    /// Peak height offset at the centre, metres. Positive for boulders and
    /// dunes, negative for craters.
    pub height: f64,
}

impl HazardSpec {
    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::validation(
                format!("{field}.radius"),
                format!("must be > 0 (got {})", self.radius),
            ));
        }
        match self.kind {
            HazardKind::Boulder if !(self.height > 0.0) => Err(Error::validation(
                format!("{field}.height"),
                format!("boulder height must be > 0 (got {})", self.height),
            )),
            HazardKind::Crater if !(self.height < 0.0) => Err(Error::validation(
                format!("{field}.height"),
                format!("crater height must be < 0 (got {})", self.height),
            )),
            _ => Ok(()),
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.dist(self.position) <= self.radius
    }

    /// Height contribution at `p`: a C1 radial bump, zero outside the footprint.
    pub fn profile(&self, p: Vec2) -> f64 {
        let r = p.dist(self.position) / self.radius;
        if r >= 1.0 {
            0.0
        } else {
            let w = 1.0 - r * r;
            self.height * w * w
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellLabel {
    Safe,
    Crater,
    Boulder,
    Shadow,
    Slope,
}

impl CellLabel {
    pub fn short(self) -> &'static str {
        match self {
            CellLabel::Safe => "safe",
            CellLabel::Crater => "crater",
            CellLabel::Boulder => "boulder",
            CellLabel::Shadow => "shadow",
            CellLabel::Slope => "slope",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerrainParams {
    /// Grid side length in cells. At least 8.
    pub size_cells: usize,
    /// Cell edge length, metres.
    pub cell_size: f64,
    /// Fractal persistence in [0, 1]; higher means rougher relief.
    pub roughness: f64,
    /// Peak-to-peak relief of the base heightmap, metres.
    pub amplitude: f64,
    /// Expected boulders per 100 m^2.
    pub rock_density: f64,
    /// Expected craters per 100 m^2.
    pub crater_density: f64,
    /// Sun direction from +x, counter-clockwise, degrees.
    pub sun_azimuth: f64,
    /// Sun elevation above the horizon, degrees in (0, 90].
    pub sun_elevation: f64,
    /// Gradient angle above which a cell is labeled Slope, degrees.
    pub slope_threshold: f64,
    pub seed: u64,
}

impl Default for TerrainParams {
    fn default() -> Self {
        TerrainParams {
            size_cells: 64,
            cell_size: 0.5,
            roughness: 0.5,
            amplitude: 0.4,
            rock_density: 0.0,
            crater_density: 0.0,
            sun_azimuth: 0.0,
            sun_elevation: 45.0,
            slope_threshold: 15.0,
            seed: 0,
        }
    }
}

impl TerrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.size_cells < 8 {
            return Err(Error::validation(
                "terrain.size_cells",
                format!("must be >= 8 (got {})", self.size_cells),
            ));
        }
        if !(self.cell_size > 0.0) {
            return Err(Error::validation(
                "terrain.cell_size",
                format!("must be > 0 (got {})", self.cell_size),
            ));
        }
        if !(0.0..=1.0).contains(&self.roughness) {
            return Err(Error::validation(
                "terrain.roughness",
                format!("must be in [0, 1] (got {})", self.roughness),
            ));
        }
        if !(self.amplitude >= 0.0) {
            return Err(Error::validation(
                "terrain.amplitude",
                format!("must be >= 0 (got {})", self.amplitude),
            ));
        }
        if !(self.rock_density >= 0.0) {
            return Err(Error::validation(
                "terrain.rock_density",
                format!("must be >= 0 (got {})", self.rock_density),
            ));
        }
        if !(self.crater_density >= 0.0) {
            return Err(Error::validation(
                "terrain.crater_density",
                format!("must be >= 0 (got {})", self.crater_density),
            ));
        }
        if !(self.sun_elevation > 0.0 && self.sun_elevation <= 90.0) {
            return Err(Error::validation(
                "terrain.sun_elevation",
                format!("must be in (0, 90] (got {})", self.sun_elevation),
            ));
        }
        if !(self.slope_threshold > 0.0) {
            return Err(Error::validation(
                "terrain.slope_threshold",
                format!("must be > 0 (got {})", self.slope_threshold),
            ));
        }
        Ok(())
    }

    /// World side length, metres.
    pub fn extent(&self) -> f64 {
        self.size_cells as f64 * self.cell_size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerrainGrid {
    pub size: usize,
    pub cell_size: f64,
    /// Row-major heights at cell centers, metres; index = iy * size + ix.
    pub heights: Vec<f64>,
    pub labels: Vec<CellLabel>,
    pub hazards: Vec<HazardSpec>,
    pub params: TerrainParams,
}

impl TerrainGrid {
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.size + ix
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Vec2 {
        Vec2::new(
            (ix as f64 + 0.5) * self.cell_size,
            (iy as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn extent(&self) -> f64 {
        self.size as f64 * self.cell_size
    }

    pub fn in_bounds(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.extent() && p.y < self.extent()
    }

    /// Cell containing `p`, or None outside the grid.
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        if !self.in_bounds(p) {
            return None;
        }
        let ix = ((p.x / self.cell_size) as usize).min(self.size - 1);
        let iy = ((p.y / self.cell_size) as usize).min(self.size - 1);
        Some((ix, iy))
    }

    /// Bilinear height between cell centers, clamped at the edges.
    pub fn height_at(&self, p: Vec2) -> f64 {
        bilinear(&self.heights, self.size, self.cell_size, p)
    }

    pub fn label_at(&self, p: Vec2) -> Option<CellLabel> {
        self.cell_of(p).map(|(ix, iy)| self.labels[self.idx(ix, iy)])
    }

    /// Central-difference gradient (dz/dx, dz/dy) at a cell, one-sided at edges.
    pub fn gradient_at_cell(&self, ix: usize, iy: usize) -> (f64, f64) {
        let h = |x: usize, y: usize| self.heights[y * self.size + x];
        let n = self.size - 1;
        let (x0, x1, dx) = if ix == 0 {
            (0, 1, self.cell_size)
        } else if ix == n {
            (n - 1, n, self.cell_size)
        } else {
            (ix - 1, ix + 1, 2.0 * self.cell_size)
        };
        let (y0, y1, dy) = if iy == 0 {
            (0, 1, self.cell_size)
        } else if iy == n {
            (n - 1, n, self.cell_size)
        } else {
            (iy - 1, iy + 1, 2.0 * self.cell_size)
        };
        (
            (h(x1, iy) - h(x0, iy)) / dx,
            (h(ix, y1) - h(ix, y0)) / dy,
        )
    }

    /// Superpose extra hazards onto the heightmap and refresh the labels.
    pub fn add_hazards(&mut self, extra: &[HazardSpec]) -> Result<()> {
        for (i, h) in extra.iter().enumerate() {
            h.validate(&format!("hazards[{i}]"))?;
            if !self.in_bounds(h.position) {
                return Err(Error::validation(
                    format!("hazards[{i}].position"),
                    "must lie inside the terrain bounds".to_string(),
                ));
            }
        }
        for iy in 0..self.size {
            for ix in 0..self.size {
                let c = self.cell_center(ix, iy);
                let add: f64 = extra.iter().map(|h| h.profile(c)).sum();
                self.heights[iy * self.size + ix] += add;
            }
        }
        self.hazards.extend_from_slice(extra);
        self.labels = classify_cells(&self.heights, self.size, &self.hazards, &self.params);
        Ok(())
    }

    /// Heights as CSV, one row per y index.
    pub fn heights_csv(&self) -> String {
        grid_csv(self.size, |ix, iy| {
            format!("{:.4}", self.heights[iy * self.size + ix])
        })
    }

    /// Labels as CSV, one row per y index.
    pub fn labels_csv(&self) -> String {
        grid_csv(self.size, |ix, iy| {
            self.labels[iy * self.size + ix].short().to_string()
        })
    }
}

fn grid_csv(size: usize, cell: impl Fn(usize, usize) -> String) -> String {
    let mut out = String::new();
    for iy in 0..size {
        let row: Vec<String> = (0..size).map(|ix| cell(ix, iy)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn bilinear(heights: &[f64], size: usize, cell_size: f64, p: Vec2) -> f64 {
    let n = size - 1;
    let fx = (p.x / cell_size - 0.5).clamp(0.0, n as f64);
    let fy = (p.y / cell_size - 0.5).clamp(0.0, n as f64);
    let x0 = (fx as usize).min(n - 1 + usize::from(n == 0));
    let y0 = (fy as usize).min(n - 1 + usize::from(n == 0));
    let x1 = (x0 + 1).min(n);
    let y1 = (y0 + 1).min(n);
    let tx = fx - x0 as f64;
    let ty = fy - y0 as f64;
    let h = |x: usize, y: usize| heights[y * size + x];
    let top = h(x0, y0) * (1.0 - tx) + h(x1, y0) * tx;
    let bot = h(x0, y1) * (1.0 - tx) + h(x1, y1) * tx;
    top * (1.0 - ty) + bot * ty
}

/// Generate a terrain grid: fractal base relief, Poisson-placed hazards,
/// hazard profiles superposed, cells labeled. Deterministic in `params.seed`.
pub fn generate_terrain(params: &TerrainParams) -> Result<TerrainGrid> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let size = params.size_cells;

    let mut heights = fractal_heights(size, params.roughness, &mut rng);
    let (lo, hi) = heights
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &h| {
            (lo.min(h), hi.max(h))
        });
    if params.amplitude > 0.0 && hi > lo {
        let k = params.amplitude / (hi - lo);
        for h in &mut heights {
            *h = (*h - lo) * k;
        }
    } else {
        heights.iter_mut().for_each(|h| *h = 0.0);
    }

    let extent = params.extent();
    let area = extent * extent;
    let mut hazards = Vec::new();
    let boulder_count = poisson_count(params.rock_density * area / 100.0, &mut rng);
    for _ in 0..boulder_count {
        hazards.push(HazardSpec {
            kind: HazardKind::Boulder,
            position: Vec2::new(rng.gen_range(0.0..extent), rng.gen_range(0.0..extent)),
            radius: rng.gen_range(0.4..1.2),
            height: rng.gen_range(0.2..0.8),
        });
    }
    let crater_count = poisson_count(params.crater_density * area / 100.0, &mut rng);
    for _ in 0..crater_count {
        hazards.push(HazardSpec {
            kind: HazardKind::Crater,
            position: Vec2::new(rng.gen_range(0.0..extent), rng.gen_range(0.0..extent)),
            radius: rng.gen_range(0.8..2.0),
            height: -rng.gen_range(0.2..0.6),
        });
    }

    for iy in 0..size {
        for ix in 0..size {
            let c = Vec2::new(
                (ix as f64 + 0.5) * params.cell_size,
                (iy as f64 + 0.5) * params.cell_size,
            );
            let add: f64 = hazards.iter().map(|h| h.profile(c)).sum();
            heights[iy * size + ix] += add;
        }
    }

    let labels = classify_cells(&heights, size, &hazards, params);
    Ok(TerrainGrid {
        size,
        cell_size: params.cell_size,
        heights,
        labels,
        hazards,
        params: *params,
    })
}

fn poisson_count(lambda: f64, rng: &mut ChaCha8Rng) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive lambda").sample(rng) as usize
}

/// Diamond-square on the smallest (2^n + 1) grid covering `size`, cropped.
/// Displacement amplitude shrinks by `persistence` per subdivision level.
fn fractal_heights(size: usize, persistence: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut g = 1usize;
    while g + 1 < size {
        g *= 2;
    }
    let side = g + 1;
    let mut h = vec![0.0f64; side * side];
    let at = |x: usize, y: usize| y * side + x;

    for &(x, y) in &[(0, 0), (g, 0), (0, g), (g, g)] {
        h[at(x, y)] = rng.gen_range(-1.0..1.0);
    }

    let mut step = g;
    let mut amp = persistence;
    while step > 1 {
        let half = step / 2;
        // Diamond: square centers from their four corners.
        for y in (half..side).step_by(step) {
            for x in (half..side).step_by(step) {
                let avg = (h[at(x - half, y - half)]
                    + h[at(x + half, y - half)]
                    + h[at(x - half, y + half)]
                    + h[at(x + half, y + half)])
                    / 4.0;
                h[at(x, y)] = avg + rng.gen_range(-1.0..1.0) * amp;
            }
        }
        // Square: edge midpoints from their available diamond neighbors.
        for y in (0..side).step_by(half) {
            let x_start = if (y / half) % 2 == 0 { half } else { 0 };
            for x in (x_start..side).step_by(step) {
                let mut sum = 0.0;
                let mut n = 0.0;
                if x >= half {
                    sum += h[at(x - half, y)];
                    n += 1.0;
                }
                if x + half < side {
                    sum += h[at(x + half, y)];
                    n += 1.0;
                }
                if y >= half {
                    sum += h[at(x, y - half)];
                    n += 1.0;
                }
                if y + half < side {
                    sum += h[at(x, y + half)];
                    n += 1.0;
                }
                h[at(x, y)] = sum / n + rng.gen_range(-1.0..1.0) * amp;
            }
        }
        amp *= persistence;
        step = half;
    }

    let mut out = vec![0.0f64; size * size];
    for y in 0..size {
        for x in 0..size {
            out[y * size + x] = h[at(x, y)];
        }
    }
    out
}

/// Label every cell with priority Boulder > Crater > Shadow > Slope > Safe.
pub fn classify_cells(
    heights: &[f64],
    size: usize,
    hazards: &[HazardSpec],
    params: &TerrainParams,
) -> Vec<CellLabel> {
    assert_eq!(heights.len(), size * size, "heights length must be size^2");
    let cell_size = params.cell_size;
    let tan_thresh = params.slope_threshold.to_radians().tan();
    let mut labels = vec![CellLabel::Safe; size * size];
    for iy in 0..size {
        for ix in 0..size {
            let c = Vec2::new(
                (ix as f64 + 0.5) * cell_size,
                (iy as f64 + 0.5) * cell_size,
            );
            let label = if hazards
                .iter()
                .any(|h| h.kind == HazardKind::Boulder && h.contains(c))
            {
                CellLabel::Boulder
            } else if hazards
                .iter()
                .any(|h| h.kind == HazardKind::Crater && h.contains(c))
            {
                CellLabel::Crater
            } else if is_shadowed(heights, size, cell_size, c, params) {
                CellLabel::Shadow
            } else {
                let (gx, gy) = gradient(heights, size, cell_size, ix, iy);
                if gx.hypot(gy) > tan_thresh {
                    CellLabel::Slope
                } else {
                    CellLabel::Safe
                }
            };
            labels[iy * size + ix] = label;
        }
    }
    labels
}

fn gradient(heights: &[f64], size: usize, cell_size: f64, ix: usize, iy: usize) -> (f64, f64) {
    let h = |x: usize, y: usize| heights[y * size + x];
    let n = size - 1;
    let (x0, x1, dx) = if ix == 0 {
        (0, 1, cell_size)
    } else if ix == n {
        (n - 1, n, cell_size)
    } else {
        (ix - 1, ix + 1, 2.0 * cell_size)
    };
    let (y0, y1, dy) = if iy == 0 {
        (0, 1, cell_size)
    } else if iy == n {
        (n - 1, n, cell_size)
    } else {
        (iy - 1, iy + 1, 2.0 * cell_size)
    };
    ((h(x1, iy) - h(x0, iy)) / dx, (h(ix, y1) - h(ix, y0)) / dy)
}

/// March a ray toward the sun in quarter-cell steps; the cell is shadowed if
/// the terrain rises above the ray before the ray leaves the grid.
fn is_shadowed(
    heights: &[f64],
    size: usize,
    cell_size: f64,
    from: Vec2,
    params: &TerrainParams,
) -> bool {
    let az = params.sun_azimuth.to_radians();
    let rise = params.sun_elevation.to_radians().tan();
    let dir = Vec2::new(az.cos(), az.sin());
    let h0 = bilinear(heights, size, cell_size, from);
    let extent = size as f64 * cell_size;
    let step = cell_size / 4.0;
    let mut s = step;
    loop {
        let p = from + dir.scale(s);
        if p.x < 0.0 || p.y < 0.0 || p.x >= extent || p.y >= extent {
            return false;
        }
        let ray_h = h0 + rise * s;
        if bilinear(heights, size, cell_size, p) > ray_h + 1e-9 {
            return true;
        }
        s += step;
    }
}

/// Terrain slope angle at an arbitrary position, degrees. Gradient components
/// are computed per cell by central differences and blended bilinearly.
pub fn slope_at(grid: &TerrainGrid, position: Vec2) -> Result<f64> {
    if !grid.in_bounds(position) {
        return Err(Error::OutOfBounds {
            x: position.x,
            y: position.y,
        });
    }
    let n = grid.size - 1;
    let fx = (position.x / grid.cell_size - 0.5).clamp(0.0, n as f64);
    let fy = (position.y / grid.cell_size - 0.5).clamp(0.0, n as f64);
    let x0 = (fx as usize).min(n.saturating_sub(1));
    let y0 = (fy as usize).min(n.saturating_sub(1));
    let x1 = (x0 + 1).min(n);
    let y1 = (y0 + 1).min(n);
    let tx = fx - x0 as f64;
    let ty = fy - y0 as f64;
    let mut gx = 0.0;
    let mut gy = 0.0;
    for &(x, y, w) in &[
        (x0, y0, (1.0 - tx) * (1.0 - ty)),
        (x1, y0, tx * (1.0 - ty)),
        (x0, y1, (1.0 - tx) * ty),
        (x1, y1, tx * ty),
    ] {
        let (cgx, cgy) = grid.gradient_at_cell(x, y);
        gx += w * cgx;
        gy += w * cgy;
    }
    Ok(gx.hypot(gy).atan().to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat_params(size: usize) -> TerrainParams {
        TerrainParams {
            size_cells: size,
            amplitude: 0.0,
            ..TerrainParams::default()
        }
    }

    /// Grid with hand-built heights, classified with the given params.
    fn grid_from(heights: Vec<f64>, hazards: Vec<HazardSpec>, params: TerrainParams) -> TerrainGrid {
        let size = params.size_cells;
        let labels = classify_cells(&heights, size, &hazards, &params);
        TerrainGrid {
            size,
            cell_size: params.cell_size,
            heights,
            labels,
            hazards,
            params,
        }
    }

    #[test]
    fn rejects_small_grid() {
        let p = TerrainParams {
            size_cells: 4,
            ..TerrainParams::default()
        };
        let err = generate_terrain(&p).unwrap_err().to_string();
        assert!(err.contains("size_cells"), "{err}");
    }

    #[test]
    fn rejects_roughness_outside_unit_interval() {
        for r in [-0.1, 1.5] {
            let p = TerrainParams {
                roughness: r,
                ..TerrainParams::default()
            };
            let err = generate_terrain(&p).unwrap_err().to_string();
            assert!(err.contains("roughness"), "{err}");
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let p = TerrainParams {
            rock_density: 3.0,
            crater_density: 1.0,
            seed: 42,
            ..TerrainParams::default()
        };
        let a = generate_terrain(&p).unwrap();
        let b = generate_terrain(&p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn heights_are_finite_and_match_amplitude() {
        let p = TerrainParams {
            seed: 7,
            amplitude: 2.5,
            ..TerrainParams::default()
        };
        let g = generate_terrain(&p).unwrap();
        assert_eq!(g.labels.len(), g.size * g.size);
        assert!(g.heights.iter().all(|h| h.is_finite()));
        let (lo, hi) = g
            .heights
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &h| {
                (lo.min(h), hi.max(h))
            });
        assert_relative_eq!(hi - lo, 2.5, epsilon = 1e-9);
    }

    /// Mean finite-difference gradient must grow with roughness at equal
    /// amplitude, swept over every interior cell.
    #[test]
    fn rougher_terrain_has_steeper_mean_gradient() {
        let mean_grad = |roughness: f64| {
            let p = TerrainParams {
                roughness,
                amplitude: 1.0,
                seed: 11,
                ..TerrainParams::default()
            };
            let g = generate_terrain(&p).unwrap();
            let mut sum = 0.0;
            let mut n = 0.0;
            for iy in 1..g.size - 1 {
                for ix in 1..g.size - 1 {
                    let gx = (g.heights[g.idx(ix + 1, iy)] - g.heights[g.idx(ix - 1, iy)])
                        / (2.0 * g.cell_size);
                    let gy = (g.heights[g.idx(ix, iy + 1)] - g.heights[g.idx(ix, iy - 1)])
                        / (2.0 * g.cell_size);
                    sum += gx.hypot(gy);
                    n += 1.0;
                }
            }
            sum / n
        };
        assert!(mean_grad(0.8) > mean_grad(0.3));
    }

    #[test]
    fn hazard_counts_track_poisson_mean_over_seeds() {
        let mut total = 0usize;
        let seeds = 20u64;
        let p0 = TerrainParams {
            size_cells: 32,
            rock_density: 5.0,
            crater_density: 2.0,
            ..TerrainParams::default()
        };
        let area = p0.extent() * p0.extent();
        for seed in 0..seeds {
            let g = generate_terrain(&TerrainParams { seed, ..p0 }).unwrap();
            total += g.hazards.len();
        }
        let lambda = (p0.rock_density + p0.crater_density) * area / 100.0 * seeds as f64;
        let sigma = lambda.sqrt();
        assert!(
            (total as f64 - lambda).abs() <= 3.0 * sigma,
            "total {total} vs lambda {lambda:.1} +/- {:.1}",
            3.0 * sigma
        );
    }

    #[test]
    fn hazard_labels_stay_inside_footprints() {
        let p = TerrainParams {
            rock_density: 4.0,
            crater_density: 2.0,
            seed: 3,
            ..TerrainParams::default()
        };
        let g = generate_terrain(&p).unwrap();
        for iy in 0..g.size {
            for ix in 0..g.size {
                let c = g.cell_center(ix, iy);
                match g.labels[g.idx(ix, iy)] {
                    CellLabel::Boulder => assert!(g
                        .hazards
                        .iter()
                        .any(|h| h.kind == HazardKind::Boulder && h.contains(c))),
                    CellLabel::Crater => assert!(g
                        .hazards
                        .iter()
                        .any(|h| h.kind == HazardKind::Crater && h.contains(c))),
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn uniform_ramp_reads_its_analytic_angle_and_labels_slope() {
        // h = tan(20 deg) * x, sun high enough that nothing self-shadows.
        let mut params = flat_params(16);
        params.sun_elevation = 80.0;
        let size = params.size_cells;
        let slope = 20f64.to_radians().tan();
        let mut heights = vec![0.0; size * size];
        for iy in 0..size {
            for ix in 0..size {
                let x = (ix as f64 + 0.5) * params.cell_size;
                heights[iy * size + ix] = slope * x;
            }
        }
        let g = grid_from(heights, vec![], params);
        for iy in 0..size {
            for ix in 0..size {
                assert_eq!(g.labels[g.idx(ix, iy)], CellLabel::Slope);
            }
        }
        let a = slope_at(&g, Vec2::new(4.0, 4.0)).unwrap();
        assert_relative_eq!(a, 20.0, epsilon = 1e-9);
    }

    #[test]
    fn plane_slope_matches_arctangent() {
        // h = 0.5 x: slope angle is atan(0.5) everywhere, edges included
        // because one-sided differences are exact on a plane.
        let params = flat_params(16);
        let size = params.size_cells;
        let mut heights = vec![0.0; size * size];
        for iy in 0..size {
            for ix in 0..size {
                heights[iy * size + ix] = 0.5 * (ix as f64 + 0.5) * params.cell_size;
            }
        }
        let mut p2 = params;
        p2.slope_threshold = 30.0;
        let g = grid_from(heights, vec![], p2);
        for probe in [
            Vec2::new(1.3, 2.7),
            Vec2::new(4.05, 4.05),
            Vec2::new(7.9, 0.2),
        ] {
            let a = slope_at(&g, probe).unwrap();
            assert_relative_eq!(a, 0.5f64.atan().to_degrees(), epsilon = 1e-9);
        }
        assert!(slope_at(&g, Vec2::new(-1.0, 0.0)).is_err());
    }

    #[test]
    fn boulder_casts_contiguous_shadow_on_anti_sun_side() {
        // Sun shines from +x at 10 degrees; the shadow must fall at x below
        // the boulder and match an 8x finer ray-march oracle.
        let mut params = flat_params(32);
        params.sun_azimuth = 0.0;
        params.sun_elevation = 10.0;
        let boulder = HazardSpec {
            kind: HazardKind::Boulder,
            position: Vec2::new(8.0, 8.0),
            radius: 1.2,
            height: 1.0,
        };
        let size = params.size_cells;
        let mut heights = vec![0.0; size * size];
        for iy in 0..size {
            for ix in 0..size {
                let c = Vec2::new(
                    (ix as f64 + 0.5) * params.cell_size,
                    (iy as f64 + 0.5) * params.cell_size,
                );
                heights[iy * size + ix] = boulder.profile(c);
            }
        }
        let g = grid_from(heights, vec![boulder], params);

        let shadow: Vec<(usize, usize)> = (0..size * size)
            .filter(|&i| g.labels[i] == CellLabel::Shadow)
            .map(|i| (i % size, i / size))
            .collect();
        assert!(!shadow.is_empty());
        for &(ix, _) in &shadow {
            let x = (ix as f64 + 0.5) * g.cell_size;
            assert!(x < boulder.position.x, "shadow cell at x = {x}");
        }

        // Contiguity: one 8-connected component.
        let mut seen = vec![false; size * size];
        let first = shadow[0];
        let mut stack = vec![first];
        seen[first.1 * size + first.0] = true;
        let in_shadow = |x: usize, y: usize| g.labels[y * size + x] == CellLabel::Shadow;
        while let Some((x, y)) = stack.pop() {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= size as i64 || ny >= size as i64 {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if in_shadow(nx, ny) && !seen[ny * size + nx] {
                        seen[ny * size + nx] = true;
                        stack.push((nx, ny));
                    }
                }
            }
        }
        assert!(shadow.iter().all(|&(x, y)| seen[y * size + x]));

        // Oracle: independent march at cell_size / 32 steps.
        let oracle = |from: Vec2| -> bool {
            let rise = params.sun_elevation.to_radians().tan();
            let h0 = g.height_at(from);
            let step = g.cell_size / 32.0;
            let mut s = step;
            while from.x + s < g.extent() {
                if g.height_at(Vec2::new(from.x + s, from.y)) > h0 + rise * s + 1e-9 {
                    return true;
                }
                s += step;
            }
            false
        };
        let mut mismatches = 0;
        for iy in 0..size {
            for ix in 0..size {
                let c = g.cell_center(ix, iy);
                if boulder.contains(c) {
                    continue;
                }
                let got = g.labels[g.idx(ix, iy)] == CellLabel::Shadow;
                if got != oracle(c) {
                    mismatches += 1;
                }
            }
        }
        assert!(
            mismatches * 50 <= size * size,
            "{mismatches} cells disagree with the fine-step oracle"
        );
    }

    #[test]
    fn add_hazards_superposes_and_relabels() {
        let p = flat_params(16);
        let mut g = generate_terrain(&p).unwrap();
        let b = HazardSpec {
            kind: HazardKind::Boulder,
            position: Vec2::new(4.25, 4.25),
            radius: 0.9,
            height: 0.5,
        };
        g.add_hazards(&[b]).unwrap();
        assert_relative_eq!(g.height_at(b.position), 0.5, epsilon = 1e-6);
        assert_eq!(g.label_at(b.position), Some(CellLabel::Boulder));

        let bad = HazardSpec {
            kind: HazardKind::Crater,
            position: Vec2::new(1.0, 1.0),
            radius: 1.0,
            height: 0.3,
        };
        let err = g.add_hazards(&[bad]).unwrap_err().to_string();
        assert!(err.contains("height"), "{err}");
    }
}
