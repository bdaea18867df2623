//! Raster and text inputs.
//!
//! Profile files start with the line `PROFILE v1`; every following non-blank
//! line is one frame, written as whitespace-separated reals. Lines starting
//! with `#` are comments.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::feature::{CircularProfile, PanoImage};

pub const PROFILE_HEADER: &str = "PROFILE v1";

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "pgm", "ppm", "pnm", "bmp"];

/// Decodes an 8-bit grayscale or RGB raster. Color is reduced with the
/// 0.299/0.587/0.114 luma weights.
pub fn load_image(path: &Path) -> Result<PanoImage> {
    let img = image::open(path)
        .map_err(|e| Error::InvalidImage(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<f64> = match img {
        image::DynamicImage::ImageLuma8(g) => {
            g.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()
        }
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| {
                let y = LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64;
                (y / 255.0).clamp(0.0, 1.0)
            })
            .collect(),
    };
    PanoImage::new(w, h, pixels)
}

/// Image files in `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn parse_profiles(text: &str) -> Result<Vec<CircularProfile>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, PROFILE_HEADER)) => {}
        Some((n, other)) => {
            return Err(Error::InvalidProfile(format!(
                "line {n}: expected header {PROFILE_HEADER:?}, found {other:?}"
            )))
        }
        None => return Err(Error::InvalidProfile("empty profile file".into())),
    }
    lines
        .map(|(n, line)| {
            let values = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        Error::InvalidProfile(format!("line {n}: bad number {tok:?}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            CircularProfile::new(values)
                .map_err(|e| Error::InvalidProfile(format!("line {n}: {e}")))
        })
        .collect()
}

pub fn read_profiles(path: &Path) -> Result<Vec<CircularProfile>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_profiles(&text)
}

/// Shortest round-trip decimal form, so reading back is lossless.
pub fn format_profiles(profiles: &[CircularProfile]) -> String {
    let mut out = String::from(PROFILE_HEADER);
    out.push('\n');
    for p in profiles {
        for (i, v) in p.values().iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{v:?}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_profiles(path: &Path, profiles: &[CircularProfile]) -> Result<()> {
    fs::write(path, format_profiles(profiles)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_text_round_trip() {
        let ps = vec![
            CircularProfile::new(vec![0.1, 0.2, 1.0 / 3.0]).unwrap(),
            CircularProfile::new(vec![1e-300, 0.5]).unwrap(),
        ];
        let back = parse_profiles(&format_profiles(&ps)).unwrap();
        assert_eq!(back, ps);
    }

    #[test]
    fn header_required() {
        assert!(parse_profiles("0.1 0.2\n").is_err());
        assert!(parse_profiles("").is_err());
        assert!(parse_profiles("PROFILE v1\n0.1 x\n").is_err());
        let ok = parse_profiles("# comment\nPROFILE v1\n\n0.5 0.5\n").unwrap();
        assert_eq!(ok.len(), 1);
    }

    #[test]
    fn rgb_uses_luma_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        let mut img = image::RgbImage::new(128, 2);
        for p in img.pixels_mut() {
            *p = image::Rgb([255, 0, 0]);
        }
        img.save(&path).unwrap();
        let pano = load_image(&path).unwrap();
        assert_eq!(pano.width(), 128);
        assert!(pano.pixels().iter().all(|&v| (v - 0.299).abs() < 1e-12));
        assert_eq!(list_images(dir.path()).unwrap(), vec![path]);
    }

    #[test]
    fn gray_is_scaled_by_255() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        image::GrayImage::from_pixel(130, 3, image::Luma([51])).save(&path).unwrap();
        let pano = load_image(&path).unwrap();
        assert!(pano.pixels().iter().all(|&v| (v - 0.2).abs() < 1e-12));
    }
}
