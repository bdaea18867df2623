//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::TAU;

use omniloc::aggregation::{AggregationParams, LocalizationEstimate, RankedTile};
use omniloc::geodb::{FeatureDatabase, FloorCoord, Subspace};
use omniloc::locsvc::LocationReport;
use omniloc::retrieval::Candidate;
use omniloc::synthbench::{PathSpec, SynthSpec};
use omniloc::{CircularProfile, OmniFeature};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unit-norm non-negative vector. With `levels > 0` entries are drawn from a
/// small set so exact distance ties are common.
pub fn random_coeffs(rng: &mut ChaCha8Rng, k: usize, levels: u32) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k)
        .map(|_| {
            if levels > 0 {
                rng.random_range(0..levels) as f64 + 1.0
            } else {
                rng.random_range(0.0..1.0)
            }
        })
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

pub fn random_feature(rng: &mut ChaCha8Rng, k: usize, levels: u32) -> OmniFeature {
    OmniFeature::from_coeffs(random_coeffs(rng, k, levels)).unwrap()
}

/// `n_sub` subspaces of `frames` frames each on a `w x h` grid.
pub fn random_db(
    rng: &mut ChaCha8Rng,
    n_sub: usize,
    frames: std::ops::RangeInclusive<usize>,
    k: usize,
    levels: u32,
    (w, h): (usize, usize),
) -> FeatureDatabase {
    let subspaces = (0..n_sub)
        .map(|s| {
            let n = rng.random_range(frames.clone());
            let feats: Vec<_> = (0..n).map(|_| random_feature(rng, k, levels)).collect();
            let coords: Vec<_> = (0..n)
                .map(|_| FloorCoord::new(rng.random_range(0..w as i32), rng.random_range(0..h as i32)))
                .collect();
            Subspace::new(s as u32 + 1, format!("s{}", s + 1), &feats, coords).unwrap()
        })
        .collect();
    FeatureDatabase::new(subspaces, w, h).unwrap()
}

pub fn random_profile(rng: &mut ChaCha8Rng, w: usize) -> CircularProfile {
    CircularProfile::new((0..w).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

/// Direct-summation DFT magnitudes of bins 1..=64, L2-normalized.
pub fn naive_descriptor(x: &[f64]) -> Vec<f64> {
    let w = x.len() as f64;
    let mags: Vec<f64> = (1..=64)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, v) in x.iter().enumerate() {
                let a = -TAU * k as f64 * n as f64 / w;
                re += v * a.cos();
                im += v * a.sin();
            }
            re.hypot(im)
        })
        .collect();
    let norm = mags.iter().map(|m| m * m).sum::<f64>().sqrt();
    if norm <= 1e-12 {
        return vec![0.0; 64];
    }
    mags.iter().map(|m| m / norm).collect()
}

pub fn cand(x: i32, y: i32) -> Candidate {
    Candidate {
        subspace_id: 1,
        frame_index: 0,
        query_frame: 0,
        distance: 0.0,
        coord: FloorCoord::new(x, y),
    }
}

/// Exhaustive aggregation: circle counts for every tile by a full distance
/// filter, full sort for the ranking, then the same ranked scan.
pub fn brute_aggregate(
    cands: &[Candidate],
    w: usize,
    h: usize,
    p: &AggregationParams,
) -> LocalizationEstimate {
    let mut counts = vec![vec![0u32; w]; h];
    for c in cands {
        counts[c.coord.y as usize][c.coord.x as usize] += 1;
    }
    let total = cands.len() as u64;
    let circle = |cx: usize, cy: usize| -> u64 {
        let mut s = 0;
        for (y, row) in counts.iter().enumerate() {
            for (x, &n) in row.iter().enumerate() {
                let d = ((x as f64 - cx as f64).powi(2) + (y as f64 - cy as f64).powi(2)).sqrt();
                if d * p.tile_m <= p.radius_m * (1.0 + 1e-12) {
                    s += n as u64;
                }
            }
        }
        s
    };
    let mut tiles = Vec::new();
    for (y, row) in counts.iter().enumerate() {
        for (x, &n) in row.iter().enumerate() {
            if n > 0 {
                tiles.push((n, y, x));
            }
        }
    }
    tiles.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let ranked: Vec<RankedTile> = tiles
        .iter()
        .take(p.top_c)
        .map(|&(n, y, x)| RankedTile {
            coord: FloorCoord::new(x as i32, y as i32),
            count: n,
            circle_count: circle(x, y),
        })
        .collect();
    let pick = ranked
        .iter()
        .position(|t| t.circle_count as f64 > p.toler_per * total as f64);
    let (i, low) = match pick {
        Some(i) => (i, false),
        None => {
            let mut best = 0;
            for (i, t) in ranked.iter().enumerate() {
                if t.circle_count > ranked[best].circle_count {
                    best = i;
                }
            }
            (best, true)
        }
    };
    LocalizationEstimate {
        coord: ranked[i].coord,
        confidence: ranked[i].circle_count as f64 / total as f64,
        low_confidence: low,
        ranked_tiles: ranked,
    }
}

/// A 9 m x 6 m floor with a three-sided walk repeated three times, for tests
/// that need files on disk.
pub fn small_floor() -> SynthSpec {
    let mut spec = SynthSpec::default_floor();
    let lap = |name: &str, inset: f64, spacing: f64, jitter: f64| PathSpec {
        name: name.into(),
        waypoints: vec![[3.0 + inset, 3.0 + inset], [26.0 - inset, 3.0 + inset], [26.0 - inset, 16.0 - inset], [3.0 + inset, 16.0 - inset]],
        frame_spacing: spacing,
        heading_jitter: jitter,
    };
    spec.grid_width = 30;
    spec.grid_height = 20;
    spec.train_paths = (0..3).map(|i| lap(&format!("lap{i}"), 0.3 * i as f64, 0.3, 0.0)).collect();
    spec.test_paths = vec![lap("walk", 1.0, 0.4, 3.0)];
    spec.scene.landmarks = 40;
    spec
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

/// Field comparison of a wire-decoded report, reals within 1e-9.
pub fn reports_match(wire: &Value, cli: &LocationReport) -> Result<(), String> {
    let srv: LocationReport = serde_json::from_value(wire.clone()).map_err(|e| e.to_string())?;
    let ok = srv.x == cli.x
        && srv.y == cli.y
        && close(srv.x_m, cli.x_m)
        && close(srv.y_m, cli.y_m)
        && close(srv.confidence, cli.confidence)
        && srv.low_confidence == cli.low_confidence
        && srv.ranked_tiles == cli.ranked_tiles
        && srv.candidate_count == cli.candidate_count
        && match (&srv.best_candidate, &cli.best_candidate) {
            (Some(a), Some(b)) => {
                (a.subspace_id, a.frame_index, a.query_frame, a.coord) == (b.subspace_id, b.frame_index, b.query_frame, b.coord)
                    && close(a.distance, b.distance)
            }
            (None, None) => true,
            _ => false,
        };
    if ok {
        Ok(())
    } else {
        Err(format!("service {srv:?}\n    expected {cli:?}"))
    }
}

