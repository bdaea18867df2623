//! Geo-referenced feature database.
//!
//! A database is a set of subspaces (one per modeled path or floor). Each
//! subspace stores its descriptors as one contiguous row-major matrix next to
//! the floor tile of every frame.

mod format;
mod manifest;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::{extract_feature, extract_profile, CircularProfile, OmniFeature, PanoImage};

pub use format::{load_database, read_database, save_database, write_database, FORMAT_VERSION, MAGIC};
pub use manifest::{Anchor, GeoManifest};

/// Edge length of one floor tile in meters.
pub const TILE_M: f64 = 0.30;

const NORM_TOL: f64 = 1e-9;

/// Tile index on the floor plan; `x` grows west to east, `y` south to north.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FloorCoord {
    pub x: i32,
    pub y: i32,
}

impl FloorCoord {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    /// Meters of the tile center.
    pub fn center_m(self) -> (f64, f64) {
        ((self.x as f64 + 0.5) * TILE_M, (self.y as f64 + 0.5) * TILE_M)
    }

    pub fn in_grid(self, width: usize, height: usize) -> bool {
        self.x >= 0 && self.y >= 0 && (self.x as usize) < width && (self.y as usize) < height
    }
}

/// One modeled path: descriptors plus the tile each frame was captured on.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    id: u32,
    name: String,
    dim: usize,
    coeffs: Vec<f64>,
    degenerate: Vec<bool>,
    coords: Vec<FloorCoord>,
}

impl Subspace {
    pub fn new(
        id: u32,
        name: impl Into<String>,
        features: &[OmniFeature],
        coords: Vec<FloorCoord>,
    ) -> Result<Self> {
        let first = features
            .first()
            .ok_or_else(|| Error::InvalidDatabase(format!("subspace {id} has no frames")))?;
        let dim = first.dim();
        let mut coeffs = Vec::with_capacity(features.len() * dim);
        let mut degenerate = Vec::with_capacity(features.len());
        for f in features {
            coeffs.extend_from_slice(f.coeffs());
            degenerate.push(f.is_degenerate());
        }
        Self::from_raw(id, name.into(), dim, coeffs, degenerate, coords)
    }

    pub(crate) fn from_raw(
        id: u32,
        name: String,
        dim: usize,
        coeffs: Vec<f64>,
        degenerate: Vec<bool>,
        coords: Vec<FloorCoord>,
    ) -> Result<Self> {
        let n = degenerate.len();
        if n == 0 {
            return Err(Error::InvalidDatabase(format!("subspace {id} has no frames")));
        }
        if dim == 0 || coeffs.len() != n * dim {
            return Err(Error::InvalidDatabase(format!(
                "subspace {id}: descriptor dimensions are not uniform"
            )));
        }
        if coords.len() != n {
            return Err(Error::InvalidDatabase(format!(
                "subspace {id}: {n} frames but {} coordinates",
                coords.len()
            )));
        }
        if name.len() > u16::MAX as usize {
            return Err(Error::InvalidDatabase(format!("subspace {id}: name too long")));
        }
        for (t, (row, &deg)) in coeffs.chunks_exact(dim).zip(&degenerate).enumerate() {
            if row.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return Err(Error::InvalidDatabase(format!(
                    "subspace {id} frame {t}: negative or non-finite coefficient"
                )));
            }
            if deg {
                if row.iter().any(|&c| c != 0.0) {
                    return Err(Error::InvalidDatabase(format!(
                        "subspace {id} frame {t}: degenerate feature with nonzero coefficients"
                    )));
                }
            } else {
                let norm = row.iter().map(|c| c * c).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > NORM_TOL {
                    return Err(Error::InvalidDatabase(format!(
                        "subspace {id} frame {t}: feature norm {norm} is not 1"
                    )));
                }
            }
        }
        Ok(Self {
            id,
            name,
            dim,
            coeffs,
            degenerate,
            coords,
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.degenerate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degenerate.is_empty()
    }

    /// Descriptor of frame `t` as a borrowed row.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.coeffs[t * self.dim..(t + 1) * self.dim]
    }

    pub(crate) fn matrix(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn feature(&self, t: usize) -> OmniFeature {
        OmniFeature::from_parts(self.row(t).to_vec(), self.degenerate[t])
    }

    pub fn features(&self) -> impl Iterator<Item = OmniFeature> + '_ {
        (0..self.len()).map(|t| self.feature(t))
    }

    pub fn is_degenerate(&self, t: usize) -> bool {
        self.degenerate[t]
    }

    pub fn coords(&self) -> &[FloorCoord] {
        &self.coords
    }
}

/// All subspaces of one site plus the floor grid they live on.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDatabase {
    subspaces: Vec<Subspace>,
    grid_width: usize,
    grid_height: usize,
    dim: usize,
}

impl FeatureDatabase {
    /// Subspaces are stored in id order; ids must be exactly `1..=n_s`.
    pub fn new(mut subspaces: Vec<Subspace>, grid_width: usize, grid_height: usize) -> Result<Self> {
        if subspaces.is_empty() {
            return Err(Error::InvalidDatabase("database has no subspaces".into()));
        }
        if grid_width == 0 || grid_height == 0 {
            return Err(Error::InvalidDatabase("grid has zero extent".into()));
        }
        subspaces.sort_by_key(|s| s.id);
        for (i, s) in subspaces.iter().enumerate() {
            if s.id as usize != i + 1 {
                return Err(Error::InvalidDatabase(format!(
                    "subspace ids must be unique and dense from 1; found {} at position {}",
                    s.id,
                    i + 1
                )));
            }
        }
        let dim = subspaces[0].dim;
        if let Some(s) = subspaces.iter().find(|s| s.dim != dim) {
            return Err(Error::InvalidDatabase(format!(
                "subspace {} has dimension {}, expected {dim}",
                s.id, s.dim
            )));
        }
        for s in &subspaces {
            if let Some(c) = s.coords.iter().find(|c| !c.in_grid(grid_width, grid_height)) {
                return Err(Error::InvalidDatabase(format!(
                    "subspace {}: coordinate ({}, {}) outside {grid_width}x{grid_height} grid",
                    s.id, c.x, c.y
                )));
            }
        }
        Ok(Self {
            subspaces,
            grid_width,
            grid_height,
            dim,
        })
    }

    pub fn subspaces(&self) -> &[Subspace] {
        &self.subspaces
    }

    pub fn subspace(&self, id: u32) -> Result<&Subspace> {
        (id as usize)
            .checked_sub(1)
            .and_then(|i| self.subspaces.get(i))
            .ok_or(Error::OutOfRange {
                what: "subspace id",
                index: id as i64,
                limit: self.subspaces.len(),
            })
    }

    pub fn grid_width(&self) -> usize {
        self.grid_width
    }

    pub fn grid_height(&self) -> usize {
        self.grid_height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn format_version(&self) -> u32 {
        FORMAT_VERSION
    }

    pub fn total_frames(&self) -> usize {
        self.subspaces.iter().map(Subspace::len).sum()
    }
}

/// Anything that can be reduced to a circular profile.
pub trait FrameInput {
    fn to_profile(&self) -> Result<CircularProfile>;
}

impl FrameInput for CircularProfile {
    fn to_profile(&self) -> Result<CircularProfile> {
        Ok(self.clone())
    }
}

impl FrameInput for PanoImage {
    fn to_profile(&self) -> Result<CircularProfile> {
        extract_profile(self)
    }
}

pub fn build_subspace<T: FrameInput>(
    inputs: &[T],
    manifest: &GeoManifest,
    id: u32,
    name: impl Into<String>,
) -> Result<Subspace> {
    if inputs.is_empty() {
        return Err(Error::Manifest("no frames to model".into()));
    }
    let coords = manifest.frame_coords(inputs.len())?;
    let features = inputs
        .iter()
        .map(|i| extract_feature(&i.to_profile()?))
        .collect::<Result<Vec<_>>>()?;
    Subspace::new(id, name, &features, coords)
}

pub fn map_candidate_to_floor(
    subspace_id: u32,
    frame_index: usize,
    db: &FeatureDatabase,
) -> Result<FloorCoord> {
    let s = db.subspace(subspace_id)?;
    s.coords.get(frame_index).copied().ok_or(Error::OutOfRange {
        what: "frame index",
        index: frame_index as i64,
        limit: s.len(),
    })
}
