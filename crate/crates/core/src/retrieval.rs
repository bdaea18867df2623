//! Exhaustive top-N retrieval over every (query frame, subspace) pair.
//!
//! Work is split into row blocks of each subspace; a block is scored against
//! every frame of the bundle while it is hot in cache. Each block keeps its
//! own top-N per frame under the total order `(distance, frame_index)`;
//! merging partial lists under the same order gives a result that does not
//! depend on how the work was cut or scheduled.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::{l2, OmniFeature};
use crate::geodb::{FeatureDatabase, FloorCoord, Subspace};

/// Rows per work item (512 KiB of 64-dim descriptors).
const SCAN_CHUNK: usize = 1024;

/// The M temporally adjacent query descriptors sent for one localization.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryBundle {
    frames: Vec<OmniFeature>,
    center_index: usize,
}

impl QueryBundle {
    pub fn new(frames: Vec<OmniFeature>, center_index: usize) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidParams("query bundle has no frames".into()))?;
        let dim = first.dim();
        if let Some(f) = frames.iter().find(|f| f.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: f.dim(),
            });
        }
        if center_index >= frames.len() {
            return Err(Error::OutOfRange {
                what: "bundle center",
                index: center_index as i64,
                limit: frames.len(),
            });
        }
        Ok(Self {
            frames,
            center_index,
        })
    }

    pub fn frames(&self) -> &[OmniFeature] {
        &self.frames
    }

    pub fn center_index(&self) -> usize {
        self.center_index
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].dim()
    }
}

/// One retrieval hit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub subspace_id: u32,
    pub frame_index: usize,
    pub query_frame: usize,
    pub distance: f64,
    pub coord: FloorCoord,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RetrievalParams {
    /// Hits kept per (query frame, subspace).
    pub top_n: usize,
    /// Worker threads; 0 uses the process-wide pool.
    pub worker_budget: usize,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            top_n: 15,
            worker_budget: 0,
        }
    }
}

impl RetrievalParams {
    fn validate(&self) -> Result<()> {
        if self.top_n == 0 {
            return Err(Error::InvalidParams("N must be at least 1".into()));
        }
        Ok(())
    }
}

/// Window of `window` frames centered on `m`, shifted inward at either end
/// of the video so it never leaves the sequence.
pub fn select_nearby_frames(
    video: &[OmniFeature],
    m: usize,
    window: usize,
) -> Result<QueryBundle> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidParams(format!(
            "window size M must be odd and positive, got {window}"
        )));
    }
    if m >= video.len() {
        return Err(Error::OutOfRange {
            what: "query frame",
            index: m as i64,
            limit: video.len(),
        });
    }
    let len = window.min(video.len());
    let start = m.saturating_sub((window - 1) / 2).min(video.len() - len);
    QueryBundle::new(video[start..start + len].to_vec(), m - start)
}

#[inline]
fn rank_order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Ascending bounded list of `(distance, frame_index)`.
struct TopN {
    cap: usize,
    items: Vec<(f64, usize)>,
}

impl TopN {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            items: Vec::with_capacity(cap + 1),
        }
    }

    #[inline]
    fn offer(&mut self, item: (f64, usize)) {
        if self.items.len() == self.cap
            && rank_order(&item, self.items.last().expect("cap >= 1")) != Ordering::Less
        {
            return;
        }
        let pos = self
            .items
            .partition_point(|probe| rank_order(probe, &item) == Ordering::Less);
        self.items.insert(pos, item);
        self.items.truncate(self.cap);
    }

    fn merge(mut self, other: TopN) -> TopN {
        for item in other.items {
            self.offer(item);
        }
        self
    }
}

fn scan_rows(q: &[f64], s: &Subspace, rows: std::ops::Range<usize>, n: usize) -> TopN {
    let dim = s.dim();
    let mut top = TopN::new(n);
    let matrix = &s.matrix()[rows.start * dim..rows.end * dim];
    for (offset, row) in matrix.chunks_exact(dim).enumerate() {
        top.offer((l2(q, row), rows.start + offset));
    }
    top
}

fn to_candidates(top: TopN, s: &Subspace, query_frame: usize) -> Vec<Candidate> {
    top.items
        .into_iter()
        .map(|(distance, frame_index)| Candidate {
            subspace_id: s.id(),
            frame_index,
            query_frame,
            distance,
            coord: s.coords()[frame_index],
        })
        .collect()
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// The `n` nearest frames of one subspace, ascending by distance then frame
/// index. `query_frame` is left at 0.
pub fn query_subspace(q: &OmniFeature, s: &Subspace, n: usize) -> Result<Vec<Candidate>> {
    check_dim(s.dim(), q.dim())?;
    if n == 0 {
        return Err(Error::InvalidParams("N must be at least 1".into()));
    }
    Ok(to_candidates(scan_rows(q.coeffs(), s, 0..s.len(), n), s, 0))
}

/// Scores one block of rows against every bundle frame, so each row is
/// loaded once per localization instead of once per frame.
fn scan_block(frames: &[OmniFeature], s: &Subspace, rows: std::ops::Range<usize>, n: usize) -> Vec<TopN> {
    let dim = s.dim();
    let mut tops: Vec<TopN> = frames.iter().map(|_| TopN::new(n)).collect();
    let matrix = &s.matrix()[rows.start * dim..rows.end * dim];
    for (offset, row) in matrix.chunks_exact(dim).enumerate() {
        for (top, q) in tops.iter_mut().zip(frames) {
            top.offer((l2(q.coeffs(), row), rows.start + offset));
        }
    }
    tops
}

static POOLS: Lazy<Mutex<HashMap<usize, Arc<rayon::ThreadPool>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

fn pool_for(budget: usize) -> Arc<rayon::ThreadPool> {
    let mut pools = POOLS.lock().unwrap_or_else(|e| e.into_inner());
    pools
        .entry(budget)
        .or_insert_with(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(budget)
                    .thread_name(move |i| format!("omniloc-{budget}-{i}"))
                    .build()
                    .expect("failed to start retrieval workers"),
            )
        })
        .clone()
}

/// All `M x n_s` top-N lists, concatenated by query frame, then subspace id,
/// then rank.
pub fn parallel_retrieve(
    bundle: &QueryBundle,
    db: &FeatureDatabase,
    params: &RetrievalParams,
) -> Result<Vec<Candidate>> {
    params.validate()?;
    check_dim(db.dim(), bundle.dim())?;
    let n = params.top_n;
    let run = || {
        let subs = db.subspaces();
        let frames = bundle.frames();
        let blocks: Vec<(usize, std::ops::Range<usize>)> = subs
            .iter()
            .enumerate()
            .flat_map(|(i, s)| {
                (0..s.len().div_ceil(SCAN_CHUNK))
                    .map(move |c| (i, c * SCAN_CHUNK..((c + 1) * SCAN_CHUNK).min(s.len())))
            })
            .collect();
        let partial: Vec<Vec<TopN>> = blocks
            .par_iter()
            .map(|(i, rows)| scan_block(frames, &subs[*i], rows.clone(), n))
            .collect();
        // Fold block results per subspace; merging is order-free under the
        // total (distance, frame) order.
        let mut per_sub: Vec<Vec<TopN>> = subs
            .iter()
            .map(|_| frames.iter().map(|_| TopN::new(n)).collect())
            .collect();
        for ((i, _), tops) in blocks.iter().zip(partial) {
            let acc = std::mem::take(&mut per_sub[*i]);
            per_sub[*i] = acc.into_iter().zip(tops).map(|(a, b)| a.merge(b)).collect();
        }
        let mut out = Vec::with_capacity(frames.len() * subs.len() * n);
        let mut columns: Vec<_> = per_sub.into_iter().map(Vec::into_iter).collect();
        for f in 0..frames.len() {
            for (column, s) in columns.iter_mut().zip(subs) {
                out.extend(to_candidates(column.next().expect("one list per frame"), s, f));
            }
        }
        out
    };
    Ok(if params.worker_budget == 0 {
        run()
    } else {
        pool_for(params.worker_budget).install(run)
    })
}

/// Plain nested-loop scan with a full sort per group. Same contract as
/// [`parallel_retrieve`]; kept as its oracle.
pub fn sequential_retrieve_reference(
    bundle: &QueryBundle,
    db: &FeatureDatabase,
    params: &RetrievalParams,
) -> Result<Vec<Candidate>> {
    params.validate()?;
    check_dim(db.dim(), bundle.dim())?;
    let mut out = Vec::new();
    for (qi, q) in bundle.frames.iter().enumerate() {
        for s in db.subspaces() {
            let mut all: Vec<(f64, usize)> =
                (0..s.len()).map(|t| (l2(q.coeffs(), s.row(t)), t)).collect();
            all.sort_by(rank_order);
            for &(distance, frame_index) in all.iter().take(params.top_n) {
                out.push(Candidate {
                    subspace_id: s.id(),
                    frame_index,
                    query_frame: qi,
                    distance,
                    coord: s.coords()[frame_index],
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::DESCRIPTOR_LEN;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_feature(rng: &mut impl Rng) -> OmniFeature {
        let mut c: Vec<f64> = (0..DESCRIPTOR_LEN).map(|_| rng.random()).collect();
        let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        c.iter_mut().for_each(|v| *v /= n);
        OmniFeature::from_coeffs(c).unwrap()
    }

    fn random_subspace(rng: &mut impl Rng, id: u32, n: usize) -> Subspace {
        let feats: Vec<_> = (0..n).map(|_| random_feature(rng)).collect();
        let coords = (0..n).map(|t| FloorCoord::new((t % 50) as i32, id as i32)).collect();
        Subspace::new(id, format!("s{id}"), &feats, coords).unwrap()
    }

    fn video(n: usize) -> Vec<OmniFeature> {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        (0..n).map(|_| random_feature(&mut rng)).collect()
    }

    #[test]
    fn window_shapes() {
        let v = video(20);
        let b = select_nearby_frames(&v, 5, 3).unwrap();
        assert_eq!(b.frames(), &v[4..7]);
        assert_eq!(b.center_index(), 1);
        let b = select_nearby_frames(&v, 0, 5).unwrap();
        assert_eq!(b.frames(), &v[0..5]);
        assert_eq!(b.center_index(), 0);
        let b = select_nearby_frames(&v, 19, 5).unwrap();
        assert_eq!(b.frames(), &v[15..20]);
        assert_eq!(b.center_index(), 4);
        let b = select_nearby_frames(&v, 7, 1).unwrap();
        assert_eq!(b.frames(), &v[7..8]);
        let short = video(4);
        let b = select_nearby_frames(&short, 2, 11).unwrap();
        assert_eq!(b.len(), 4);
        assert_eq!(b.center_index(), 2);
        assert!(select_nearby_frames(&v, 20, 3).is_err());
        assert!(select_nearby_frames(&v, 3, 4).is_err());
    }

    #[test]
    fn self_match_ranks_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_subspace(&mut rng, 1, 40);
        let q = s.feature(17);
        let hits = query_subspace(&q, &s, 15).unwrap();
        assert_eq!(hits[0].frame_index, 17);
        assert_eq!(hits[0].distance, 0.0);
        assert_eq!(hits.len(), 15);
    }

    #[test]
    fn undersized_subspace_returns_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_subspace(&mut rng, 1, 7);
        assert_eq!(query_subspace(&random_feature(&mut rng), &s, 15).unwrap().len(), 7);
    }

    #[test]
    fn matches_sort_all_oracle_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // duplicate rows force distance ties
        let base: Vec<_> = (0..100).map(|_| random_feature(&mut rng)).collect();
        let feats: Vec<_> = (0..1000).map(|t| base[t % 100].clone()).collect();
        let coords = (0..1000).map(|t| FloorCoord::new(t % 40, 0)).collect();
        let s = Subspace::new(1, "dup", &feats, coords).unwrap();
        let q = random_feature(&mut rng);
        let got = query_subspace(&q, &s, 15).unwrap();
        let mut all: Vec<(f64, usize)> = (0..s.len())
            .map(|t| {
                let d: f64 = q
                    .coeffs()
                    .iter()
                    .zip(s.row(t))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d.sqrt(), t)
            })
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want: Vec<usize> = all.iter().take(15).map(|p| p.1).collect();
        assert_eq!(got.iter().map(|c| c.frame_index).collect::<Vec<_>>(), want);
        // duplicates are adjacent
        assert_eq!(got[1].frame_index, got[0].frame_index + 100);
    }

    #[test]
    fn dimension_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_subspace(&mut rng, 1, 3);
        let db = FeatureDatabase::new(vec![s.clone()], 50, 5).unwrap();
        let short = OmniFeature::from_coeffs(vec![0.0; 8]).unwrap();
        assert!(matches!(
            query_subspace(&short, &s, 3),
            Err(Error::DimensionMismatch { .. })
        ));
        let bundle = QueryBundle::new(vec![short], 0).unwrap();
        assert!(parallel_retrieve(&bundle, &db, &RetrievalParams::default()).is_err());
        assert!(QueryBundle::new(vec![], 0).is_err());
    }

    #[test]
    fn large_subspace_chunked_scan_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let subs = vec![
            random_subspace(&mut rng, 1, 3 * SCAN_CHUNK + 17),
            random_subspace(&mut rng, 2, 9),
        ];
        let db = FeatureDatabase::new(subs, 50, 5).unwrap();
        let bundle = QueryBundle::new((0..3).map(|_| random_feature(&mut rng)).collect(), 1).unwrap();
        let reference = sequential_retrieve_reference(&bundle, &db, &RetrievalParams::default()).unwrap();
        for budget in [0, 1, 3] {
            let p = RetrievalParams { top_n: 15, worker_budget: budget };
            assert_eq!(parallel_retrieve(&bundle, &db, &p).unwrap(), reference);
        }
        assert_eq!(reference.len(), 3 * (15 + 9));
    }

    #[test]
    fn single_frame_single_subspace_global_nearest() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = random_subspace(&mut rng, 1, 200);
        let target = s.feature(123);
        let db = FeatureDatabase::new(vec![s], 50, 5).unwrap();
        let bundle = QueryBundle::new(vec![target], 0).unwrap();
        let p = RetrievalParams { top_n: 1, worker_budget: 2 };
        let got = parallel_retrieve(&bundle, &db, &p).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].frame_index, 123);
    }
}
