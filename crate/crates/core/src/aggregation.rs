//! Multi-frame candidate fusion on the floor grid.
//!
//! Candidates are binned per tile, the densest `top_c` tiles are visited in
//! order, and the first one whose tolerance circle holds more than
//! `toler_per` of all candidates wins.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodb::{FloorCoord, TILE_M};
use crate::retrieval::Candidate;

/// Slack on the squared circle radius, in tiles². Keeps `3.0 / 0.3` from
/// landing a rounding error short of 10.
const RADIUS_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DensityGrid {
    width: usize,
    height: usize,
    counts: Vec<u32>,
    total: u64,
}

impl DensityGrid {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            counts: vec![0; width * height],
            total: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, x: usize, y: usize) -> u32 {
        self.counts[y * self.width + x]
    }

    /// Row-major counts, row `y` at offset `y * width`.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// One CSV line per row, south row first.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.counts.chunks(self.width) {
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{c}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregationParams {
    pub top_c: usize,
    pub toler_per: f64,
    pub radius_m: f64,
    pub tile_m: f64,
}

impl Default for AggregationParams {
    fn default() -> Self {
        Self {
            top_c: 10,
            toler_per: 0.20,
            radius_m: 3.0,
            tile_m: TILE_M,
        }
    }
}

impl AggregationParams {
    pub fn validate(&self) -> Result<()> {
        if self.top_c == 0 {
            return Err(Error::InvalidParams("top_c must be at least 1".into()));
        }
        if !(self.toler_per > 0.0 && self.toler_per <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "toler_per must be in (0, 1], got {}",
                self.toler_per
            )));
        }
        if !(self.radius_m > 0.0 && self.radius_m.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "radius_m must be positive, got {}",
                self.radius_m
            )));
        }
        if !(self.tile_m > 0.0 && self.tile_m.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "tile_m must be positive, got {}",
                self.tile_m
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedTile {
    pub coord: FloorCoord,
    pub count: u32,
    pub circle_count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationEstimate {
    pub coord: FloorCoord,
    pub confidence: f64,
    pub low_confidence: bool,
    pub ranked_tiles: Vec<RankedTile>,
}

pub fn bin_candidates(candidates: &[Candidate], width: usize, height: usize) -> Result<DensityGrid> {
    let mut grid = DensityGrid::zeros(width, height);
    for c in candidates {
        if !c.coord.in_grid(width, height) {
            let x_bad = c.coord.x < 0 || c.coord.x as usize >= width;
            return Err(Error::OutOfRange {
                what: if x_bad { "candidate tile x" } else { "candidate tile y" },
                index: if x_bad { c.coord.x } else { c.coord.y } as i64,
                limit: if x_bad { width } else { height },
            });
        }
        grid.counts[c.coord.y as usize * width + c.coord.x as usize] += 1;
    }
    grid.total = candidates.len() as u64;
    Ok(grid)
}

/// Nonzero tiles by descending count, ties by ascending `y` then `x`.
pub fn rank_tiles(grid: &DensityGrid, top_c: usize) -> Vec<(FloorCoord, u32)> {
    let mut tiles: Vec<(FloorCoord, u32)> = grid
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| {
            (
                FloorCoord::new((i % grid.width) as i32, (i / grid.width) as i32),
                c,
            )
        })
        .collect();
    // Row-major enumeration is already (y, x) ascending; a stable sort on
    // count alone keeps that tie order.
    tiles.sort_by_key(|t| std::cmp::Reverse(t.1));
    tiles.truncate(top_c);
    tiles
}

/// Candidates on tiles whose centers lie within `radius_m` of `center`.
pub fn circle_count(grid: &DensityGrid, center: FloorCoord, radius_m: f64, tile_m: f64) -> u64 {
    let r = radius_m / tile_m;
    let r2 = r * r + RADIUS_SLACK;
    let reach = r.floor() as i64 + 1;
    let (cx, cy) = (center.x as i64, center.y as i64);
    let mut sum = 0u64;
    for y in (cy - reach).max(0)..=(cy + reach).min(grid.height as i64 - 1) {
        for x in (cx - reach).max(0)..=(cx + reach).min(grid.width as i64 - 1) {
            let (dx, dy) = ((x - cx) as f64, (y - cy) as f64);
            if dx * dx + dy * dy <= r2 {
                sum += grid.counts[y as usize * grid.width + x as usize] as u64;
            }
        }
    }
    sum
}

pub fn aggregate(
    candidates: &[Candidate],
    width: usize,
    height: usize,
    params: &AggregationParams,
) -> Result<LocalizationEstimate> {
    params.validate()?;
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let grid = bin_candidates(candidates, width, height)?;
    Ok(aggregate_grid(&grid, params))
}

/// The ranked scan on an already binned, non-empty grid.
pub fn aggregate_grid(grid: &DensityGrid, params: &AggregationParams) -> LocalizationEstimate {
    let total = grid.total;
    let ranked_tiles: Vec<RankedTile> = rank_tiles(grid, params.top_c)
        .into_iter()
        .map(|(coord, count)| RankedTile {
            coord,
            count,
            circle_count: circle_count(grid, coord, params.radius_m, params.tile_m),
        })
        .collect();
    let threshold = params.toler_per * total as f64;
    let confidence = |t: &RankedTile| t.circle_count as f64 / total as f64;

    if let Some(hit) = ranked_tiles
        .iter()
        .find(|t| t.circle_count as f64 > threshold)
    {
        return LocalizationEstimate {
            coord: hit.coord,
            confidence: confidence(hit),
            low_confidence: false,
            ranked_tiles: ranked_tiles.clone(),
        };
    }
    // No tile passed: answer with the best-supported ranked tile (earliest
    // rank on equal support).
    let best = ranked_tiles
        .iter()
        .reduce(|best, t| if t.circle_count > best.circle_count { t } else { best })
        .copied()
        .expect("grid has at least one candidate");
    LocalizationEstimate {
        coord: best.coord,
        confidence: confidence(&best),
        low_confidence: true,
        ranked_tiles,
    }
}
