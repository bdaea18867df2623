use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use omniloc::aggregation::{bin_candidates, AggregationParams};
use omniloc::geodb::{build_subspace, load_database, save_database, FeatureDatabase, GeoManifest, Subspace};
use omniloc::ingest::{list_images, load_image, read_profiles};
use omniloc::locsvc::{locate, run_bench, LocateParams, Server};
use omniloc::retrieval::{select_nearby_frames, RetrievalParams};
use omniloc::synthbench::{run_experiment, self_query_spec, write_dataset, ExperimentParams, SynthSpec};
use omniloc::{extract_feature, Error};

const EXIT_FAILURE: u8 = 1;
const EXIT_DB_LOAD: u8 = 3;
const EXIT_BIND: u8 = 4;

#[derive(Parser)]
#[command(name = "omniloc", version, about = "Panoramic-feature indoor localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Model walking paths into a feature database, one subspace per manifest.
    Build(BuildArgs),
    /// Localize one frame of a profile video against a database.
    Query(QueryArgs),
    /// Serve newline-delimited JSON localization requests over TCP.
    Serve(ServeArgs),
    /// Measure end-to-end localization throughput on a database.
    Bench(BenchArgs),
    /// Generate a synthetic floor dataset and optionally evaluate on it.
    Synth(SynthArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Directory of panoramas for one path (sorted by file name). Repeat in
    /// the same order as --manifest.
    #[arg(long, num_args = 1.., required_unless_present = "profiles")]
    images: Vec<PathBuf>,
    /// PROFILE v1 file for one path. Repeat in the same order as --manifest.
    #[arg(long, num_args = 1.., conflicts_with = "images")]
    profiles: Vec<PathBuf>,
    /// CSV anchors (`frame,x,y`) for each path.
    #[arg(long, num_args = 1.., required = true)]
    manifest: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Grid width in tiles; defaults to the largest x coordinate + 1.
    #[arg(long)]
    grid_width: Option<usize>,
    /// Grid height in tiles; defaults to the largest y coordinate + 1.
    #[arg(long)]
    grid_height: Option<usize>,
}

#[derive(Args, Clone, Copy)]
struct PipelineArgs {
    /// Frames per query bundle.
    #[arg(long = "M", alias = "window", default_value_t = 11)]
    window: usize,
    /// Candidates per (frame, subspace).
    #[arg(long = "N", alias = "top-n", default_value_t = 15)]
    top_n: usize,
    #[arg(long, default_value_t = 10)]
    top_c: usize,
    #[arg(long, default_value_t = 0.20)]
    toler_per: f64,
    #[arg(long, default_value_t = 3.0)]
    radius_m: f64,
    /// Retrieval worker threads (0 = all cores). OMNILOC_WORKERS overrides.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl PipelineArgs {
    fn params(&self) -> LocateParams {
        LocateParams {
            retrieval: RetrievalParams {
                top_n: self.top_n,
                worker_budget: self.workers,
            },
            aggregation: AggregationParams {
                top_c: self.top_c,
                toler_per: self.toler_per,
                radius_m: self.radius_m,
                ..AggregationParams::default()
            },
        }
        .with_env_override()
    }
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    db: PathBuf,
    /// PROFILE v1 file holding the query video.
    #[arg(long)]
    profiles: PathBuf,
    /// Index of the frame to localize.
    #[arg(long)]
    frame: usize,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Also write the candidate density grid as CSV.
    #[arg(long)]
    grid_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7878")]
    bind: String,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    db: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Print the full report as JSON instead of a summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// SynthSpec JSON; the built-in default floor when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, required_unless_present = "print_default_spec")]
    out: Option<PathBuf>,
    /// Training paths modeled into the database.
    #[arg(long, default_value_t = 5)]
    paths: usize,
    /// Run the evaluation and print the report as JSON.
    #[arg(long)]
    eval: bool,
    /// Evaluate on the training walks themselves, noise-free.
    #[arg(long, requires = "eval")]
    self_query: bool,
    /// Per-query errors as CSV.
    #[arg(long, requires = "eval")]
    errors_csv: Option<PathBuf>,
    #[arg(long)]
    print_default_spec: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: EXIT_FAILURE,
            message: e.to_string(),
        }
    }
}

fn fail(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_FAILURE,
        message: message.into(),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("report serializes")
}

fn build(args: BuildArgs) -> Result<(), Failure> {
    let inputs = if args.profiles.is_empty() { &args.images } else { &args.profiles };
    if inputs.len() != args.manifest.len() {
        return Err(fail(format!(
            "{} inputs but {} manifests; give one manifest per path",
            inputs.len(),
            args.manifest.len()
        )));
    }
    let mut subspaces = Vec::new();
    for (i, (input, manifest_path)) in inputs.iter().zip(&args.manifest).enumerate() {
        let manifest = GeoManifest::from_csv_path(manifest_path)?;
        let id = i as u32 + 1;
        let name = manifest_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("path{id}"));
        let sub: Subspace = if args.profiles.is_empty() {
            let images = list_images(input)?
                .iter()
                .map(|p| load_image(p))
                .collect::<Result<Vec<_>, _>>()?;
            if images.is_empty() {
                return Err(fail(format!("{}: no images found", input.display())));
            }
            build_subspace(&images, &manifest, id, name)?
        } else {
            build_subspace(&read_profiles(input)?, &manifest, id, name)?
        };
        subspaces.push(sub);
    }
    let max = |f: fn(&omniloc::FloorCoord) -> i32| {
        subspaces
            .iter()
            .flat_map(|s| s.coords().iter().map(f))
            .max()
            .unwrap_or(0)
            .max(0) as usize
            + 1
    };
    let width = args.grid_width.unwrap_or_else(|| max(|c| c.x));
    let height = args.grid_height.unwrap_or_else(|| max(|c| c.y));
    let db = FeatureDatabase::new(subspaces, width, height)?;
    save_database(&db, &args.out)?;
    eprintln!(
        "wrote {} ({} subspaces, {} frames, {}x{} grid)",
        args.out.display(),
        db.subspaces().len(),
        db.total_frames(),
        width,
        height
    );
    Ok(())
}

fn query(args: QueryArgs) -> Result<(), Failure> {
    let db = load_database(&args.db)?;
    let video = read_profiles(&args.profiles)?
        .iter()
        .map(extract_feature)
        .collect::<Result<Vec<_>, _>>()?;
    let bundle = select_nearby_frames(&video, args.frame, args.pipeline.window)?;
    let loc = locate(&db, &bundle, &args.pipeline.params())?;
    if let Some(path) = &args.grid_csv {
        let grid = bin_candidates(&loc.candidates, db.grid_width(), db.grid_height())?;
        write_file(path, &grid.to_csv())?;
    }
    println!("{}", to_json(&loc.report()));
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), Failure> {
    let db = load_database(&args.db).map_err(|e| Failure {
        code: EXIT_DB_LOAD,
        message: e.to_string(),
    })?;
    let server = Server::bind(&args.bind, Arc::new(db), args.pipeline.params()).map_err(|e| Failure {
        code: EXIT_BIND,
        message: format!("cannot bind {}: {e}", args.bind),
    })?;
    let addr = server.local_addr().map_err(|e| fail(e.to_string()))?;
    eprintln!("omniloc serving on {addr}");
    server.run().map_err(|e| fail(e.to_string()))
}

fn bench(args: BenchArgs) -> Result<(), Failure> {
    let db = load_database(&args.db)?;
    let p = args.pipeline;
    let report = run_bench(&db, &p.params(), p.window, args.iterations, args.seed)?;
    if args.json {
        println!("{}", to_json(&report));
    } else {
        println!(
            "{} features in {} subspaces, M={} N={}",
            report.db_features, report.subspaces, report.bundle_frames, report.top_n
        );
        println!("localizations/sec: {:.2}", report.localizations_per_sec);
        for (name, s) in [
            ("retrieve", report.retrieve),
            ("aggregate", report.aggregate),
            ("end-to-end", report.end_to_end),
        ] {
            println!(
                "{name:>10}: mean {:.3} ms  p50 {:.3} ms  p95 {:.3} ms  max {:.3} ms",
                s.mean_ms, s.p50_ms, s.p95_ms, s.max_ms
            );
        }
    }
    Ok(())
}

fn synth(args: SynthArgs) -> Result<(), Failure> {
    let spec = match &args.spec {
        Some(p) => SynthSpec::from_json_path(p)?,
        None => SynthSpec::default_floor(),
    };
    if args.print_default_spec {
        println!("{}", serde_json::to_string_pretty(&spec).expect("spec serializes"));
        return Ok(());
    }
    let out = args.out.expect("clap enforces --out");
    let db = write_dataset(&spec, args.paths, &out)?;
    eprintln!("wrote dataset to {} ({} frames)", out.display(), db.total_frames());
    if args.eval {
        let p = args.pipeline.params();
        let params = ExperimentParams {
            window: args.pipeline.window,
            top_n: p.retrieval.top_n,
            paths: args.paths,
            aggregation: p.aggregation,
            worker_budget: p.retrieval.worker_budget,
        };
        let eval_spec = if args.self_query { self_query_spec(&spec, args.paths) } else { spec };
        let report = run_experiment(&eval_spec, &params)?;
        if let Some(path) = &args.errors_csv {
            write_file(path, &report.per_query_csv())?;
        }
        println!("{}", to_json(&report));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(a) => build(a),
        Command::Query(a) => query(a),
        Command::Serve(a) => serve(a),
        Command::Bench(a) => bench(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("omniloc: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
