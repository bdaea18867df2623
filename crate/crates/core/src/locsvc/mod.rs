//! The localization pipeline behind the CLI and the TCP service.
//!
//! Wire protocol: one UTF-8 JSON object per line in each direction. A request
//! carries a correlation `id`, `features` (M arrays of K reals) and optional
//! `params` overrides (`n`, `top_c`, `toler_per`, `radius_m`). Every request
//! line gets exactly one response line: either a location or
//! `{"id": ..., "error": {"code": ..., "message": ...}}`.

mod bench;
mod server;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aggregation::{aggregate, AggregationParams, LocalizationEstimate, RankedTile};
use crate::error::{Error, Result};
use crate::feature::OmniFeature;
use crate::geodb::FeatureDatabase;
use crate::retrieval::{parallel_retrieve, Candidate, QueryBundle, RetrievalParams};

pub use bench::{run_bench, BenchReport, StageLatency};
pub use server::Server;

/// Environment variable that overrides the retrieval worker budget.
pub const WORKERS_ENV: &str = "OMNILOC_WORKERS";

/// Upper bound on frames per request.
pub const MAX_BUNDLE: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct LocateParams {
    pub retrieval: RetrievalParams,
    pub aggregation: AggregationParams,
}

impl LocateParams {
    /// Applies `OMNILOC_WORKERS` when it is set to an integer.
    pub fn with_env_override(mut self) -> Self {
        if let Some(n) = std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
        {
            self.retrieval.worker_budget = n;
        }
        self
    }

    fn with_overrides(mut self, o: &ParamOverrides) -> Self {
        if let Some(n) = o.n {
            self.retrieval.top_n = n;
        }
        if let Some(c) = o.top_c {
            self.aggregation.top_c = c;
        }
        if let Some(t) = o.toler_per {
            self.aggregation.toler_per = t;
        }
        if let Some(r) = o.radius_m {
            self.aggregation.radius_m = r;
        }
        self
    }
}

/// Everything one localization produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Localization {
    pub estimate: LocalizationEstimate,
    pub candidates: Vec<Candidate>,
    pub retrieve_ms: f64,
    pub aggregate_ms: f64,
}

impl Localization {
    /// Smallest-distance hit; the earliest in output order on ties.
    pub fn best_candidate(&self) -> Option<&Candidate> {
        self.candidates
            .iter()
            .reduce(|best, c| if c.distance < best.distance { c } else { best })
    }

    pub fn report(&self) -> LocationReport {
        let (x_m, y_m) = self.estimate.coord.center_m();
        LocationReport {
            x: self.estimate.coord.x,
            y: self.estimate.coord.y,
            x_m,
            y_m,
            confidence: self.estimate.confidence,
            low_confidence: self.estimate.low_confidence,
            ranked_tiles: self.estimate.ranked_tiles.clone(),
            candidate_count: self.candidates.len(),
            best_candidate: self.best_candidate().copied(),
        }
    }
}

/// Retrieval followed by aggregation.
pub fn locate(db: &FeatureDatabase, bundle: &QueryBundle, params: &LocateParams) -> Result<Localization> {
    params.aggregation.validate()?;
    let t0 = Instant::now();
    let candidates = parallel_retrieve(bundle, db, &params.retrieval)?;
    let t1 = Instant::now();
    let estimate = aggregate(&candidates, db.grid_width(), db.grid_height(), &params.aggregation)?;
    let t2 = Instant::now();
    Ok(Localization {
        estimate,
        candidates,
        retrieve_ms: (t1 - t0).as_secs_f64() * 1e3,
        aggregate_ms: (t2 - t1).as_secs_f64() * 1e3,
    })
}

/// The location part shared by CLI output and service responses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationReport {
    /// Winning tile.
    pub x: i32,
    pub y: i32,
    /// Tile center in meters.
    pub x_m: f64,
    pub y_m: f64,
    pub confidence: f64,
    pub low_confidence: bool,
    pub ranked_tiles: Vec<RankedTile>,
    pub candidate_count: usize,
    pub best_candidate: Option<Candidate>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_c: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toler_per: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_m: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocateRequest {
    pub id: Value,
    pub features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamOverrides>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocateResponse {
    pub id: Value,
    #[serde(flatten)]
    pub location: LocationReport,
    pub timing_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub id: Value,
    pub error: ErrorBody,
}

/// Either response shape, for clients decoding a line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Error(ErrorResponse),
    Located(LocateResponse),
}

/// Stable error codes on the wire.
pub fn error_code(e: &Error) -> &'static str {
    match e {
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::InvalidParams(_) => "invalid_params",
        Error::InvalidProfile(_) | Error::OutOfRange { .. } => "invalid_request",
        Error::NoCandidates => "no_candidates",
        _ => "internal",
    }
}

fn error_line(id: Value, code: &str, message: String) -> String {
    serde_json::to_string(&ErrorResponse {
        id,
        error: ErrorBody {
            code: code.to_owned(),
            message,
        },
    })
    .expect("error response serializes")
}

impl LocateRequest {
    pub fn bundle(&self) -> Result<QueryBundle> {
        if self.features.is_empty() || self.features.len() > MAX_BUNDLE {
            return Err(Error::InvalidParams(format!(
                "a request carries 1..={MAX_BUNDLE} frames, got {}",
                self.features.len()
            )));
        }
        let frames = self
            .features
            .iter()
            .map(|f| OmniFeature::from_coeffs(f.clone()))
            .collect::<Result<Vec<_>>>()?;
        let center = frames.len() / 2;
        QueryBundle::new(frames, center)
    }
}

/// Answers one request line. Never fails: problems become error responses.
pub fn handle_line(db: &FeatureDatabase, line: &str, defaults: &LocateParams) -> String {
    let started = Instant::now();
    let value: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return error_line(Value::Null, "parse_error", e.to_string()),
    };
    let id = value.get("id").cloned().unwrap_or(Value::Null);
    let req: LocateRequest = match serde_json::from_value(value) {
        Ok(r) => r,
        Err(e) => return error_line(id, "invalid_request", e.to_string()),
    };
    let params = match &req.params {
        Some(o) => defaults.with_overrides(o),
        None => *defaults,
    };
    let result = req
        .bundle()
        .and_then(|b| {
            if b.dim() != db.dim() {
                return Err(Error::DimensionMismatch {
                    expected: db.dim(),
                    found: b.dim(),
                });
            }
            locate(db, &b, &params)
        });
    match result {
        Ok(loc) => serde_json::to_string(&LocateResponse {
            id: req.id,
            location: loc.report(),
            timing_ms: started.elapsed().as_secs_f64() * 1e3,
        })
        .expect("response serializes"),
        Err(e) => error_line(req.id, error_code(&e), e.to_string()),
    }
}
