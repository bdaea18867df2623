//! Seeded synthetic floors and the accuracy/throughput harness.
//!
//! A floor is a set of point landmarks. Standing at a position with some
//! heading, each landmark shows up in the circular profile as a smooth bump
//! at its relative bearing, weaker with distance. Profiles are sampled on a
//! fixed 256-column azimuth grid; landmark bumps are periodic and band-limited
//! well below Nyquist, so a heading change is a pure cyclic shift of the
//! underlying signal.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationParams;
use crate::error::{Error, Result};
use crate::feature::{extract_feature, CircularProfile, OmniFeature};
use crate::geodb::{Anchor, FeatureDatabase, FloorCoord, GeoManifest, Subspace, TILE_M};
use crate::locsvc::{locate, LocateParams};
use crate::retrieval::{select_nearby_frames, RetrievalParams};

/// Azimuth columns per rendered profile.
pub const PROFILE_WIDTH: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub name: String,
    /// Polyline vertices in tile units (tile `i` is centered at `i`).
    pub waypoints: Vec<[f64; 2]>,
    /// Distance between consecutive frames, in tiles.
    pub frame_spacing: f64,
    /// Each frame's heading is the walking direction plus a uniform offset
    /// in `[-heading_jitter, heading_jitter]` radians.
    #[serde(default)]
    pub heading_jitter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub landmarks: usize,
    /// Angular half-width of a landmark bump, radians.
    pub angular_width: f64,
    /// Peak landmark amplitude before distance falloff.
    pub contrast: f64,
    pub noise_sigma: f64,
    /// Distance (tiles) at which a landmark's amplitude halves.
    pub falloff_tiles: f64,
    /// Fraction of landmarks repeated half a floor away.
    pub duplicate_fraction: f64,
    /// Landmarks are kept at least this far (tiles) from every training path.
    #[serde(default)]
    pub clearance_tiles: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub grid_width: usize,
    pub grid_height: usize,
    pub train_paths: Vec<PathSpec>,
    pub test_paths: Vec<PathSpec>,
    pub scene: SceneParams,
    pub seed: u64,
}

impl SynthSpec {
    /// An 18 m x 9 m floor with one rectangular corridor loop. The loop is
    /// walked five times along lines a few centimeters apart (frames every
    /// 3 cm); the test walk runs one tile inside the loop with arbitrary
    /// headings.
    pub fn default_floor() -> Self {
        let (w, h, margin) = (60usize, 30usize, 5.0);
        let x1 = (w - 1) as f64 - margin;
        let y1 = (h - 1) as f64 - margin;
        let lap = |name: String, inset: f64, jitter: f64| {
            let (a, b, c, d) = (margin + inset, margin + inset, x1 - inset, y1 - inset);
            PathSpec {
                name,
                waypoints: vec![[a, b], [c, b], [c, d], [a, d], [a, b]],
                frame_spacing: 0.1,
                heading_jitter: jitter,
            }
        };
        Self {
            grid_width: w,
            grid_height: h,
            train_paths: (0..5)
                .map(|i| lap(format!("lap{}", i + 1), 0.2 * i as f64 - 0.4, 0.0))
                .collect(),
            test_paths: vec![lap("test".into(), 1.0, PI)],
            scene: SceneParams {
                landmarks: 120,
                angular_width: 0.12,
                contrast: 1.0,
                noise_sigma: 0.02,
                falloff_tiles: 12.0,
                duplicate_fraction: 0.2,
                clearance_tiles: 3.0,
            },
            seed: 2016,
        }
    }

    pub fn from_json_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if self.grid_width == 0 || self.grid_height == 0 {
            return Err(Error::InvalidParams("grid has zero extent".into()));
        }
        let s = &self.scene;
        if !(s.angular_width > 0.0) || !(s.falloff_tiles > 0.0) || !(s.noise_sigma >= 0.0) {
            return Err(Error::InvalidParams(
                "angular_width and falloff_tiles must be positive, noise_sigma non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&s.duplicate_fraction) {
            return Err(Error::InvalidParams("duplicate_fraction must be in [0, 1]".into()));
        }
        let (maxx, maxy) = ((self.grid_width - 1) as f64, (self.grid_height - 1) as f64);
        for p in self.train_paths.iter().chain(&self.test_paths) {
            if p.waypoints.is_empty() {
                return Err(Error::InvalidParams(format!("path {} has no waypoints", p.name)));
            }
            if !(p.frame_spacing > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "path {}: frame_spacing must be positive",
                    p.name
                )));
            }
            if let Some(w) = p
                .waypoints
                .iter()
                .find(|w| !(0.0..=maxx).contains(&w[0]) || !(0.0..=maxy).contains(&w[1]))
            {
                return Err(Error::InvalidParams(format!(
                    "path {}: waypoint ({}, {}) outside the grid",
                    p.name, w[0], w[1]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Landmark {
    x: f64,
    y: f64,
    amplitude: f64,
    concentration: f64,
}

/// One sampled pose along a path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: [f64; 2],
    pub heading: f64,
}

impl Pose {
    pub fn tile(&self) -> FloorCoord {
        FloorCoord::new(self.position[0].round() as i32, self.position[1].round() as i32)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(seed), |h, p| splitmix(h ^ p))
}

fn name_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (abx, aby) = (b[0] - a[0], b[1] - a[1]);
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * abx).hypot(p[1] - a[1] - t * aby)
}

/// A rendered floor: the spec plus its landmark layout.
#[derive(Clone, Debug)]
pub struct SynthWorld {
    spec: SynthSpec,
    landmarks: Vec<Landmark>,
}

impl SynthWorld {
    pub fn new(spec: &SynthSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let (w, h) = (spec.grid_width as f64, spec.grid_height as f64);
        let s = &spec.scene;
        let segments: Vec<([f64; 2], [f64; 2])> = spec
            .train_paths
            .iter()
            .flat_map(|p| {
                let wp = &p.waypoints;
                (0..wp.len()).map(move |i| (wp[i], wp[(i + 1).min(wp.len() - 1)]))
            })
            .collect();
        let clear = |x: f64, y: f64| {
            segments
                .iter()
                .all(|(a, b)| point_segment_distance([x, y], *a, *b) >= s.clearance_tiles)
        };
        let mut landmarks = Vec::with_capacity(s.landmarks);
        let mut attempts = 0usize;
        while landmarks.len() < s.landmarks {
            attempts += 1;
            if attempts > 1000 * (s.landmarks + 1) {
                return Err(Error::InvalidParams(
                    "clearance_tiles leaves no room for landmarks".into(),
                ));
            }
            let (x, y) = (rng.random_range(0.0..w), rng.random_range(0.0..h));
            let width = s.angular_width * rng.random_range(0.6..1.4);
            let amplitude = s.contrast * rng.random_range(-1.0..1.0);
            if clear(x, y) {
                landmarks.push(Landmark {
                    x,
                    y,
                    amplitude,
                    concentration: 1.0 / (width * width),
                });
            }
        }
        // Scene similarity: copy part of the layout half a floor east.
        let copies = (s.landmarks as f64 * s.duplicate_fraction).round() as usize;
        let dupes: Vec<Landmark> = landmarks[..copies]
            .iter()
            .map(|l| Landmark {
                x: (l.x + w / 2.0) % w,
                ..*l
            })
            .filter(|l| clear(l.x, l.y))
            .collect();
        landmarks.extend(dupes);
        Ok(Self {
            spec: spec.clone(),
            landmarks,
        })
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    /// Noise-free signal before squashing; `out[w]` looks along bearing
    /// `heading + 2*pi*w/W`.
    fn signal(&self, position: [f64; 2], heading: f64) -> Vec<f64> {
        let falloff2 = self.spec.scene.falloff_tiles * self.spec.scene.falloff_tiles;
        let mut out = vec![0.0; PROFILE_WIDTH];
        for l in &self.landmarks {
            let (dx, dy) = (l.x - position[0], l.y - position[1]);
            let gain = l.amplitude / (1.0 + (dx * dx + dy * dy) / falloff2);
            let bearing = dy.atan2(dx);
            for (w, v) in out.iter_mut().enumerate() {
                let rel = heading + TAU * w as f64 / PROFILE_WIDTH as f64 - bearing;
                *v += gain * (l.concentration * (rel.cos() - 1.0)).exp();
            }
        }
        out
    }

    /// Profile seen at `position` (tile units) facing `heading` (radians,
    /// counter-clockwise from east). Noise is drawn from a stream seeded by
    /// the spec seed and the pose.
    pub fn render_profile(&self, position: [f64; 2], heading: f64) -> CircularProfile {
        let mut sig = self.signal(position, heading);
        let sigma = self.spec.scene.noise_sigma;
        if sigma > 0.0 {
            let seed = mix(
                self.spec.seed,
                &[position[0].to_bits(), position[1].to_bits(), heading.to_bits()],
            );
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
            for v in &mut sig {
                *v += normal.sample(&mut rng);
            }
        }
        let values = sig.into_iter().map(|s| 0.5 + 0.5 * s.tanh()).collect();
        CircularProfile::new(values).expect("rendered values are finite")
    }

    /// Poses every `frame_spacing` tiles of arc length along the path.
    pub fn path_poses(&self, path: &PathSpec) -> Vec<Pose> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.spec.seed, &[name_hash(&path.name)]));
        let mut jitter = || {
            if path.heading_jitter > 0.0 {
                rng.random_range(-path.heading_jitter..=path.heading_jitter)
            } else {
                0.0
            }
        };
        let wp = &path.waypoints;
        if wp.len() == 1 {
            return vec![Pose {
                position: wp[0],
                heading: jitter(),
            }];
        }
        let mut poses = Vec::new();
        let mut carry = 0.0;
        for (i, seg) in wp.windows(2).enumerate() {
            let (a, b) = (seg[0], seg[1]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len = dx.hypot(dy);
            let dir = dy.atan2(dx);
            let mut s = carry;
            while s < len || (i == wp.len() - 2 && (s - len).abs() < 1e-9) {
                let t = if len > 0.0 { s / len } else { 0.0 };
                poses.push(Pose {
                    position: [a[0] + t * dx, a[1] + t * dy],
                    heading: dir + jitter(),
                });
                s += path.frame_spacing;
            }
            carry = s - len;
        }
        poses
    }

    pub fn path_profiles(&self, path: &PathSpec) -> (Vec<Pose>, Vec<CircularProfile>) {
        let poses = self.path_poses(path);
        let profiles = poses
            .iter()
            .map(|p| self.render_profile(p.position, p.heading))
            .collect();
        (poses, profiles)
    }

    /// Manifest with one anchor per frame.
    pub fn manifest(poses: &[Pose]) -> GeoManifest {
        GeoManifest::new(
            poses
                .iter()
                .enumerate()
                .map(|(f, p)| {
                    let t = p.tile();
                    Anchor::new(f, t.x, t.y)
                })
                .collect(),
        )
        .expect("frames are strictly increasing from 0")
    }

    /// Database of the first `paths` training paths, one subspace each.
    pub fn build_database(&self, paths: usize) -> Result<FeatureDatabase> {
        if self.spec.train_paths.len() < paths || paths == 0 {
            return Err(Error::InvalidParams(format!(
                "need {paths} training paths, spec has {}",
                self.spec.train_paths.len()
            )));
        }
        let subspaces = self.spec.train_paths[..paths]
            .iter()
            .enumerate()
            .map(|(i, path)| {
                let (poses, profiles) = self.path_profiles(path);
                let coords = Self::manifest(&poses).frame_coords(poses.len())?;
                let features = profiles
                    .iter()
                    .map(extract_feature)
                    .collect::<Result<Vec<_>>>()?;
                Subspace::new(i as u32 + 1, path.name.clone(), &features, coords)
            })
            .collect::<Result<Vec<_>>>()?;
        FeatureDatabase::new(subspaces, self.spec.grid_width, self.spec.grid_height)
    }
}

/// Free-function form of [`SynthWorld::render_profile`].
pub fn render_profile(spec: &SynthSpec, position: [f64; 2], heading: f64) -> Result<CircularProfile> {
    Ok(SynthWorld::new(spec)?.render_profile(position, heading))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExperimentParams {
    /// Frames per query bundle (M).
    pub window: usize,
    /// Hits per (frame, subspace) (N).
    pub top_n: usize,
    /// Training paths modeled into the database (P).
    pub paths: usize,
    pub aggregation: AggregationParams,
    pub worker_budget: usize,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            window: 11,
            top_n: 15,
            paths: 5,
            aggregation: AggregationParams::default(),
            worker_budget: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub path: String,
    pub frame: usize,
    pub truth: FloorCoord,
    pub estimate: FloorCoord,
    pub error_m: f64,
    pub confidence: f64,
    pub low_confidence: bool,
    pub candidates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateAudit {
    /// `N x M x P`.
    pub nominal_per_query: usize,
    /// Queries whose count differs from `bundle frames x sum(min(N, |s|))`.
    pub mismatches: usize,
    pub min_actual: usize,
    pub max_actual: usize,
    /// Every query produced exactly the nominal count.
    pub all_nominal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub queries: usize,
    pub median_error_m: f64,
    pub p90_error_m: f64,
    pub mean_error_m: f64,
    /// Fraction of estimates within one tile (8-neighborhood) of the truth.
    pub within_one_tile: f64,
    pub low_confidence_fraction: f64,
    pub audit: CandidateAudit,
    pub per_query: Vec<QueryOutcome>,
    pub localizations_per_sec: f64,
    pub elapsed_s: f64,
}

impl EvalReport {
    pub fn errors_m(&self) -> Vec<f64> {
        self.per_query.iter().map(|q| q.error_m).collect()
    }

    /// Copy with the wall-clock fields zeroed, for determinism checks.
    pub fn without_timing(&self) -> Self {
        Self {
            localizations_per_sec: 0.0,
            elapsed_s: 0.0,
            ..self.clone()
        }
    }

    pub fn per_query_csv(&self) -> String {
        let mut out = String::from(
            "path,frame,truth_x,truth_y,est_x,est_y,error_m,confidence,low_confidence,candidates\n",
        );
        for q in &self.per_query {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                q.path,
                q.frame,
                q.truth.x,
                q.truth.y,
                q.estimate.x,
                q.estimate.y,
                q.error_m,
                q.confidence,
                q.low_confidence,
                q.candidates
            )
            .unwrap();
        }
        out
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Models the first `paths` training walks, then localizes every frame of
/// every test walk through the full pipeline.
pub fn run_experiment(spec: &SynthSpec, params: &ExperimentParams) -> Result<EvalReport> {
    if spec.test_paths.is_empty() {
        return Err(Error::InvalidParams("spec has no test paths".into()));
    }
    let world = SynthWorld::new(spec)?;
    let db = world.build_database(params.paths)?;
    let locate_params = LocateParams {
        retrieval: RetrievalParams {
            top_n: params.top_n,
            worker_budget: params.worker_budget,
        },
        aggregation: params.aggregation,
    };
    let per_group: usize = db.subspaces().iter().map(|s| s.len().min(params.top_n)).sum();
    let nominal = params.top_n * params.window * params.paths;

    let mut per_query = Vec::new();
    let mut mismatches = 0;
    let mut elapsed_s = 0.0;
    for path in &spec.test_paths {
        let (poses, profiles) = world.path_profiles(path);
        let video = profiles
            .iter()
            .map(extract_feature)
            .collect::<Result<Vec<OmniFeature>>>()?;
        for (m, pose) in poses.iter().enumerate() {
            let bundle = select_nearby_frames(&video, m, params.window)?;
            let started = Instant::now();
            let loc = locate(&db, &bundle, &locate_params)?;
            elapsed_s += started.elapsed().as_secs_f64();
            if loc.candidates.len() != bundle.len() * per_group {
                mismatches += 1;
            }
            let truth = pose.tile();
            let est = loc.estimate.coord;
            let (dx, dy) = ((est.x - truth.x) as f64, (est.y - truth.y) as f64);
            per_query.push(QueryOutcome {
                path: path.name.clone(),
                frame: m,
                truth,
                estimate: est,
                error_m: dx.hypot(dy) * TILE_M,
                confidence: loc.estimate.confidence,
                low_confidence: loc.estimate.low_confidence,
                candidates: loc.candidates.len(),
            });
        }
    }

    let n = per_query.len();
    let mut errs: Vec<f64> = per_query.iter().map(|q| q.error_m).collect();
    errs.sort_by(f64::total_cmp);
    let counts = per_query.iter().map(|q| q.candidates);
    Ok(EvalReport {
        queries: n,
        median_error_m: quantile(&errs, 0.5),
        p90_error_m: quantile(&errs, 0.9),
        mean_error_m: errs.iter().sum::<f64>() / n as f64,
        within_one_tile: per_query
            .iter()
            .filter(|q| (q.estimate.x - q.truth.x).abs() <= 1 && (q.estimate.y - q.truth.y).abs() <= 1)
            .count() as f64
            / n as f64,
        low_confidence_fraction: per_query.iter().filter(|q| q.low_confidence).count() as f64 / n as f64,
        audit: CandidateAudit {
            nominal_per_query: nominal,
            mismatches,
            min_actual: counts.clone().min().unwrap_or(0),
            max_actual: counts.clone().max().unwrap_or(0),
            all_nominal: per_query.iter().all(|q| q.candidates == nominal),
        },
        per_query,
        localizations_per_sec: n as f64 / elapsed_s.max(f64::MIN_POSITIVE),
        elapsed_s,
    })
}

/// The spec rewired so the test walks are the first `paths` training walks,
/// noise-free: every query frame is a database frame.
pub fn self_query_spec(spec: &SynthSpec, paths: usize) -> SynthSpec {
    let mut s = spec.clone();
    s.test_paths = spec.train_paths.iter().take(paths).cloned().collect();
    s.scene.noise_sigma = 0.0;
    s
}

/// Writes a training/test dataset the CLI can consume: per-path profile and
/// manifest files, the test ground truth, and the database itself.
pub fn write_dataset(spec: &SynthSpec, paths: usize, out_dir: &Path) -> Result<FeatureDatabase> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let world = SynthWorld::new(spec)?;
    let write = |name: &str, text: String| {
        let p = out_dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(p, e))
    };
    for path in &spec.train_paths {
        let (poses, profiles) = world.path_profiles(path);
        write(&format!("train_{}.profiles", path.name), crate::ingest::format_profiles(&profiles))?;
        write(&format!("train_{}.csv", path.name), SynthWorld::manifest(&poses).to_csv())?;
    }
    for path in &spec.test_paths {
        let (poses, profiles) = world.path_profiles(path);
        write(&format!("test_{}.profiles", path.name), crate::ingest::format_profiles(&profiles))?;
        write(&format!("test_{}.csv", path.name), SynthWorld::manifest(&poses).to_csv())?;
    }
    write("spec.json", serde_json::to_string_pretty(spec)?)?;
    let db = world.build_database(paths)?;
    crate::geodb::save_database(&db, &out_dir.join("train.omnidb"))?;
    Ok(db)
}
