//! Indoor localization from panoramic image features.
//!
//! Each modeled location is stored as a rotation-invariant descriptor of its
//! panorama ([`feature`]). A query is a short burst of frames; every frame is
//! matched against every database subspace ([`retrieval`]) and the hits are
//! voted onto a 30 cm floor grid to pick one robust position
//! ([`aggregation`]). [`locsvc`] wraps the pipeline as a TCP service and
//! [`synthbench`] generates seeded synthetic floors for evaluation.

pub mod aggregation;
pub mod error;
pub mod feature;
pub mod geodb;
pub mod ingest;
pub mod locsvc;
pub mod retrieval;
pub mod synthbench;

pub use aggregation::{
    aggregate, bin_candidates, circle_count, rank_tiles, AggregationParams, DensityGrid,
    LocalizationEstimate, RankedTile,
};
pub use error::{Error, Result};
pub use feature::{
    extract_feature, extract_profile, feature_distance, CircularProfile, OmniFeature, PanoImage,
    DESCRIPTOR_LEN,
};
pub use geodb::{
    build_subspace, load_database, map_candidate_to_floor, save_database, Anchor,
    FeatureDatabase, FloorCoord, GeoManifest, Subspace, TILE_M,
};
pub use retrieval::{
    parallel_retrieve, query_subspace, select_nearby_frames, sequential_retrieve_reference,
    Candidate, QueryBundle, RetrievalParams,
};
