use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FloorCoord;
use crate::error::{Error, Result};

/// A frame whose tile was surveyed by hand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    pub frame: usize,
    pub x: i32,
    pub y: i32,
}

impl Anchor {
    pub const fn new(frame: usize, x: i32, y: i32) -> Self {
        Self { frame, x, y }
    }
}

/// Anchor points of one walking path. Frames between anchors are placed by
/// linear interpolation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeoManifest {
    rows: Vec<Anchor>,
}

impl GeoManifest {
    pub fn new(rows: Vec<Anchor>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Manifest("manifest has no anchors".into()))?;
        if first.frame != 0 {
            return Err(Error::Manifest(format!(
                "first anchor must be frame 0, found {}",
                first.frame
            )));
        }
        if let Some(w) = rows.windows(2).find(|w| w[1].frame <= w[0].frame) {
            return Err(Error::Manifest(format!(
                "anchor frames must be strictly increasing ({} then {})",
                w[0].frame, w[1].frame
            )));
        }
        Ok(Self { rows })
    }

    /// Reads a CSV with header `frame,x,y`.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Manifest(e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["frame", "x", "y"] {
            return Err(Error::Manifest(format!(
                "expected header frame,x,y, found {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let rows = rdr
            .deserialize::<Anchor>()
            .map(|r| r.map_err(|e| Error::Manifest(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,x,y\n");
        for a in &self.rows {
            out.push_str(&format!("{},{},{}\n", a.frame, a.x, a.y));
        }
        out
    }

    pub fn rows(&self) -> &[Anchor] {
        &self.rows
    }

    /// Tile of every frame of an `n_frames`-long path. The last anchor must be
    /// the last frame.
    pub fn frame_coords(&self, n_frames: usize) -> Result<Vec<FloorCoord>> {
        let last = self.rows.last().expect("non-empty by construction");
        if n_frames == 0 {
            return Err(Error::Manifest("path has no frames".into()));
        }
        if last.frame >= n_frames {
            return Err(Error::OutOfRange {
                what: "manifest frame index",
                index: last.frame as i64,
                limit: n_frames,
            });
        }
        if last.frame != n_frames - 1 {
            return Err(Error::Manifest(format!(
                "manifest ends at frame {} but the path has {n_frames} frames",
                last.frame
            )));
        }
        if self.rows.len() == 1 {
            return Ok(vec![FloorCoord::new(last.x, last.y)]);
        }
        let mut out = Vec::with_capacity(n_frames);
        for seg in self.rows.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let span = (b.frame - a.frame) as i64;
            for t in a.frame..b.frame {
                let step = (t - a.frame) as i64;
                out.push(FloorCoord::new(
                    a.x + lerp_offset(b.x as i64 - a.x as i64, step, span) as i32,
                    a.y + lerp_offset(b.y as i64 - a.y as i64, step, span) as i32,
                ));
            }
        }
        out.push(FloorCoord::new(last.x, last.y));
        Ok(out)
    }
}

/// `delta * step / span` rounded to the nearest integer, halves going toward
/// the later anchor (away from zero, in the direction of `delta`).
fn lerp_offset(delta: i64, step: i64, span: i64) -> i64 {
    let num = delta * step;
    let mag = (2 * num.abs() + span) / (2 * span);
    if num < 0 {
        -mag
    } else {
        mag
    }
}
