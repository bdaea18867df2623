//! Binary database layout, all integers and reals little-endian:
//!
//! ```text
//! "OMNIDB\x01"  u32 version  u32 K  u32 grid_width  u32 grid_height  u32 n_s
//! per subspace: u32 id  u16 name_len  name (UTF-8)  u32 frames
//!   per frame:  i32 x  i32 y  K x f64  u8 degenerate
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{FeatureDatabase, FloorCoord, Subspace};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 7] = b"OMNIDB\x01";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_database<W: Write>(db: &FeatureDatabase, mut out: W) -> std::io::Result<()> {
    out.write_all(MAGIC)?;
    for v in [
        FORMAT_VERSION,
        db.dim as u32,
        db.grid_width as u32,
        db.grid_height as u32,
        db.subspaces.len() as u32,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    for s in &db.subspaces {
        out.write_all(&s.id.to_le_bytes())?;
        out.write_all(&(s.name.len() as u16).to_le_bytes())?;
        out.write_all(s.name.as_bytes())?;
        out.write_all(&(s.len() as u32).to_le_bytes())?;
        for t in 0..s.len() {
            let c = s.coords[t];
            out.write_all(&c.x.to_le_bytes())?;
            out.write_all(&c.y.to_le_bytes())?;
            for v in s.row(t) {
                out.write_all(&v.to_le_bytes())?;
            }
            out.write_all(&[s.degenerate[t] as u8])?;
        }
    }
    out.flush()
}

pub fn save_database(db: &FeatureDatabase, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_database(db, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_database(path: &Path) -> Result<FeatureDatabase> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_database(&bytes)
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        self.array().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }

    fn i32(&mut self) -> Result<i32> {
        self.array().map(i32::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.array().map(f64::from_le_bytes)
    }
}

pub fn read_database(bytes: &[u8]) -> Result<FeatureDatabase> {
    let n = bytes.len().min(MAGIC.len());
    if bytes[..n] != MAGIC[..n] {
        return Err(Error::MagicMismatch);
    }
    let mut cur = Cursor { buf: bytes };
    cur.take(MAGIC.len())?;
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let dim = cur.u32()? as usize;
    let grid_width = cur.u32()? as usize;
    let grid_height = cur.u32()? as usize;
    let n_s = cur.u32()?;
    if dim == 0 {
        return Err(Error::InvalidDatabase("descriptor length is zero".into()));
    }

    let mut subspaces = Vec::new();
    for _ in 0..n_s {
        let id = cur.u32()?;
        let name_len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::InvalidDatabase(format!("subspace {id}: name is not UTF-8")))?
            .to_owned();
        let frames = cur.u32()? as usize;
        // Every frame needs at least this many bytes; reject absurd counts
        // before allocating.
        let frame_bytes = 8 + 8 * dim + 1;
        if frames.saturating_mul(frame_bytes) > cur.buf.len() {
            return Err(Error::Truncated);
        }
        let mut coeffs = Vec::with_capacity(frames * dim);
        let mut degenerate = Vec::with_capacity(frames);
        let mut coords = Vec::with_capacity(frames);
        for _ in 0..frames {
            let x = cur.i32()?;
            let y = cur.i32()?;
            coords.push(FloorCoord::new(x, y));
            for _ in 0..dim {
                coeffs.push(cur.f64()?);
            }
            degenerate.push(match cur.u8()? {
                0 => false,
                1 => true,
                b => {
                    return Err(Error::InvalidDatabase(format!(
                        "subspace {id}: degenerate flag {b}"
                    )))
                }
            });
        }
        subspaces.push(Subspace::from_raw(id, name, dim, coeffs, degenerate, coords)?);
    }
    if !cur.buf.is_empty() {
        return Err(Error::InvalidDatabase(format!(
            "{} trailing bytes after last subspace",
            cur.buf.len()
        )));
    }
    FeatureDatabase::new(subspaces, grid_width, grid_height)
}
