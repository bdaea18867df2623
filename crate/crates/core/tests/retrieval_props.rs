mod common;

use common::{random_db, random_feature, rng};
use omniloc::retrieval::{parallel_retrieve, query_subspace, sequential_retrieve_reference, QueryBundle, RetrievalParams};
use proptest::prelude::*;

fn params(top_n: usize, worker_budget: usize) -> RetrievalParams {
    RetrievalParams { top_n, worker_budget }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn schedule_independent(seed in any::<u64>(), n_sub in 1usize..6, m in 0usize..4, n in 1usize..25, levels in 0u32..3) {
        let mut r = rng(seed);
        let db = random_db(&mut r, n_sub, 1..=2500, 16, levels, (20, 20));
        let frames = (0..2 * m + 1).map(|_| random_feature(&mut r, 16, levels)).collect();
        let bundle = QueryBundle::new(frames, m).unwrap();
        let want = sequential_retrieve_reference(&bundle, &db, &params(n, 1)).unwrap();
        for budget in [0, 1, 3, 8] {
            prop_assert_eq!(&parallel_retrieve(&bundle, &db, &params(n, budget)).unwrap(), &want);
        }
    }

    #[test]
    fn cardinality_law(seed in any::<u64>(), n_sub in 1usize..8, len in 1usize..12, n in 1usize..40) {
        let mut r = rng(seed);
        let db = random_db(&mut r, n_sub, 1..=60, 8, 0, (10, 10));
        let frames = (0..len).map(|_| random_feature(&mut r, 8, 0)).collect();
        let bundle = QueryBundle::new(frames, 0).unwrap();
        let got = parallel_retrieve(&bundle, &db, &params(n, 0)).unwrap();
        let per_frame: usize = db.subspaces().iter().map(|s| s.len().min(n)).sum();
        prop_assert_eq!(got.len(), len * per_frame);
        // Grouped by frame, then subspace id, ascending within a group.
        for w in got.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            prop_assert!((a.query_frame, a.subspace_id) <= (b.query_frame, b.subspace_id));
            if (a.query_frame, a.subspace_id) == (b.query_frame, b.subspace_id) {
                prop_assert!((a.distance, a.frame_index) < (b.distance, b.frame_index));
            }
        }
    }

    #[test]
    fn larger_n_extends_prefix(seed in any::<u64>(), n in 1usize..30, extra in 1usize..10) {
        let mut r = rng(seed);
        let db = random_db(&mut r, 1, 1..=200, 8, 2, (10, 10));
        let q = random_feature(&mut r, 8, 2);
        let s = &db.subspaces()[0];
        let small = query_subspace(&q, s, n).unwrap();
        let large = query_subspace(&q, s, n + extra).unwrap();
        prop_assert_eq!(&large[..small.len()], &small[..]);
        // Nothing left out is closer than the last kept hit.
        if let Some(last) = small.last() {
            let kept: Vec<usize> = small.iter().map(|c| c.frame_index).collect();
            for t in (0..s.len()).filter(|t| !kept.contains(t)) {
                let d = omniloc::feature_distance(&q, &s.feature(t)).unwrap();
                prop_assert!((d, t) > (last.distance, last.frame_index));
            }
        }
    }
}

#[test]
fn dimension_mismatch_rejected() {
    let mut r = rng(3);
    let db = random_db(&mut r, 2, 5..=5, 8, 0, (5, 5));
    let bundle = QueryBundle::new(vec![random_feature(&mut r, 9, 0)], 0).unwrap();
    assert!(matches!(
        parallel_retrieve(&bundle, &db, &params(3, 0)),
        Err(omniloc::Error::DimensionMismatch { expected: 8, found: 9 })
    ));
    let bundle = QueryBundle::new(vec![random_feature(&mut r, 8, 0)], 0).unwrap();
    assert!(parallel_retrieve(&bundle, &db, &params(0, 0)).is_err());
}
