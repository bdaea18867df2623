//! Rotation-invariant omnidirectional descriptors.
//!
//! A panorama is reduced to a circular profile (one mean intensity per
//! azimuth column). The descriptor is the magnitude spectrum of that profile
//! over bins `1..=K`, L2-normalized. Dropping the DC bin removes additive
//! brightness offsets, normalization removes gain, and taking magnitudes
//! removes the phase term a cyclic shift (a change of heading) introduces.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Number of retained non-DC magnitude bins.
pub const DESCRIPTOR_LEN: usize = 64;

/// Minimum panorama width: the descriptor needs `DESCRIPTOR_LEN` bins below
/// Nyquist.
pub const MIN_WIDTH: usize = 2 * DESCRIPTOR_LEN;

/// Spectral norm at or below which a profile is treated as flat.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// Grayscale panorama, row-major, intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PanoImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl PanoImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "empty image ({width}x{height})"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidImage(format!(
                "intensity {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.width];
        for row in self.pixels.chunks_exact(self.width) {
            for (s, p) in sums.iter_mut().zip(row) {
                *s += p;
            }
        }
        let h = self.height as f64;
        sums.into_iter().map(|s| s / h).collect()
    }
}

/// One value per azimuth column, cyclic in the index.
#[derive(Clone, Debug, PartialEq)]
pub struct CircularProfile {
    values: Vec<f64>,
}

impl CircularProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidProfile("empty profile".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile(format!("non-finite value {bad}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Cyclic shift: `out[w] = in[(w + shift) mod W]`.
    pub fn rotated(&self, shift: isize) -> Self {
        let w = self.values.len() as isize;
        let s = shift.rem_euclid(w) as usize;
        let mut values = self.values.clone();
        values.rotate_left(s);
        Self { values }
    }
}

/// Unit-norm magnitude spectrum, or all zeros when `degenerate`.
#[derive(Clone, Debug, PartialEq)]
pub struct OmniFeature {
    coeffs: Vec<f64>,
    degenerate: bool,
}

impl OmniFeature {
    /// Wraps coefficients received from storage or the wire. Only the
    /// component domain is checked; normalization is the producer's job.
    pub fn from_coeffs(coeffs: Vec<f64>) -> Result<Self> {
        if let Some(bad) = coeffs.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::InvalidProfile(format!(
                "descriptor coefficient {bad} is negative or non-finite"
            )));
        }
        let degenerate = coeffs.iter().all(|&c| c == 0.0);
        Ok(Self { coeffs, degenerate })
    }

    pub(crate) fn from_parts(coeffs: Vec<f64>, degenerate: bool) -> Self {
        Self { coeffs, degenerate }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

/// Mean intensity of every column.
pub fn extract_profile(image: &PanoImage) -> Result<CircularProfile> {
    if image.width < MIN_WIDTH {
        return Err(Error::ImageTooNarrow {
            width: image.width,
            min: MIN_WIDTH,
        });
    }
    CircularProfile::new(image.column_means())
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

/// Descriptor of a profile: `|X[k]|` for `k = 1..=K` under the unnormalized
/// forward DFT, divided by its L2 norm.
pub fn extract_feature(profile: &CircularProfile) -> Result<OmniFeature> {
    let w = profile.len();
    if w < MIN_WIDTH {
        return Err(Error::InvalidProfile(format!(
            "profile has {w} samples; at least {MIN_WIDTH} are required"
        )));
    }
    let mut buf: Vec<Complex<f64>> = profile
        .values
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .collect();
    forward_plan(w).process(&mut buf);

    let mut mags: Vec<f64> = buf[1..=DESCRIPTOR_LEN].iter().map(|c| c.norm()).collect();
    let norm = mags.iter().map(|m| m * m).sum::<f64>().sqrt();
    if norm > DEGENERATE_EPS {
        for m in &mut mags {
            *m /= norm;
        }
        Ok(OmniFeature::from_parts(mags, false))
    } else {
        Ok(OmniFeature::from_parts(vec![0.0; DESCRIPTOR_LEN], true))
    }
}

/// Squared-sum-then-root L2 distance. Every ranking path goes through this
/// one function so parallel and sequential scans agree to the bit.
#[inline]
pub(crate) fn l2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Eight independent lanes so the loop vectorizes. Every distance in the
    // crate goes through here, so the summation order is the same everywhere.
    let mut lanes = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        let (x, y): (&[f64; 8], &[f64; 8]) = (x.try_into().unwrap(), y.try_into().unwrap());
        for i in 0..8 {
            let d = x[i] - y[i];
            lanes[i] += d * d;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        tail += d * d;
    }
    let [l0, l1, l2, l3, l4, l5, l6, l7] = lanes;
    (((l0 + l4) + (l1 + l5)) + ((l2 + l6) + (l3 + l7)) + tail).sqrt()
}

pub fn feature_distance(a: &OmniFeature, b: &OmniFeature) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(l2(&a.coeffs, &b.coeffs))
}
