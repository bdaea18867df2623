use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{locate, LocateParams};
use crate::error::Result;
use crate::feature::OmniFeature;
use crate::geodb::FeatureDatabase;
use crate::retrieval::QueryBundle;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl StageLatency {
    fn from_samples(mut ms: Vec<f64>) -> Self {
        ms.sort_by(f64::total_cmp);
        let pick = |q: f64| ms[((ms.len() - 1) as f64 * q).round() as usize];
        Self {
            mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
            p50_ms: pick(0.5),
            p95_ms: pick(0.95),
            max_ms: *ms.last().unwrap(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub db_features: usize,
    pub subspaces: usize,
    pub bundle_frames: usize,
    pub top_n: usize,
    pub localizations: usize,
    pub elapsed_s: f64,
    pub localizations_per_sec: f64,
    pub retrieve: StageLatency,
    pub aggregate: StageLatency,
    pub end_to_end: StageLatency,
}

/// Bundles of `window` consecutive database frames, lightly perturbed.
fn sample_bundle(db: &FeatureDatabase, window: usize, rng: &mut ChaCha8Rng) -> Result<QueryBundle> {
    let s = &db.subspaces()[rng.random_range(0..db.subspaces().len())];
    let len = window.min(s.len());
    let start = rng.random_range(0..=s.len() - len);
    let frames = (start..start + len)
        .map(|t| {
            let mut c: Vec<f64> = s
                .row(t)
                .iter()
                .map(|v| (v + rng.random_range(-0.01..0.01)).abs())
                .collect();
            let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                c.iter_mut().for_each(|v| *v /= n);
            }
            OmniFeature::from_coeffs(c)
        })
        .collect::<Result<Vec<_>>>()?;
    QueryBundle::new(frames, len / 2)
}

/// Times `iterations` full localizations (after a short warm-up).
pub fn run_bench(
    db: &FeatureDatabase,
    params: &LocateParams,
    window: usize,
    iterations: usize,
    seed: u64,
) -> Result<BenchReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let iterations = iterations.max(1);
    let bundles = (0..iterations + 2)
        .map(|_| sample_bundle(db, window, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    for b in &bundles[..2] {
        locate(db, b, params)?;
    }
    let (mut retrieve, mut aggregate, mut total) = (Vec::new(), Vec::new(), Vec::new());
    let started = Instant::now();
    for b in &bundles[2..] {
        let t = Instant::now();
        let loc = locate(db, b, params)?;
        total.push(t.elapsed().as_secs_f64() * 1e3);
        retrieve.push(loc.retrieve_ms);
        aggregate.push(loc.aggregate_ms);
    }
    let elapsed_s = started.elapsed().as_secs_f64();
    Ok(BenchReport {
        db_features: db.total_frames(),
        subspaces: db.subspaces().len(),
        bundle_frames: window,
        top_n: params.retrieval.top_n,
        localizations: iterations,
        elapsed_s,
        localizations_per_sec: iterations as f64 / elapsed_s,
        retrieve: StageLatency::from_samples(retrieve),
        aggregate: StageLatency::from_samples(aggregate),
        end_to_end: StageLatency::from_samples(total),
    })
}
