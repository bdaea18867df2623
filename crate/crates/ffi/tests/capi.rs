use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use omniloc::geodb::{save_database, FeatureDatabase, FloorCoord, Subspace};
use omniloc::locsvc::{locate, LocateParams};
use omniloc::retrieval::QueryBundle;
use omniloc::{extract_feature, CircularProfile, OmniFeature};
use omniloc_ffi::*;

fn unit(seed: usize, k: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..k)
        .map(|j| ((seed * 7919 + j * 104_729) as f64 * 0.618_033_988_7).fract() + 0.01)
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn fixture(dir: &Path) -> (FeatureDatabase, CString) {
    let subspaces = (0..3u32)
        .map(|s| {
            let feats: Vec<_> = (0..40)
                .map(|t| OmniFeature::from_coeffs(unit(s as usize * 100 + t, 64)).unwrap())
                .collect();
            let coords: Vec<_> = (0..40).map(|t| FloorCoord::new(t / 2, 3 * s as i32)).collect();
            Subspace::new(s + 1, format!("p{s}"), &feats, coords).unwrap()
        })
        .collect();
    let db = FeatureDatabase::new(subspaces, 20, 10).unwrap();
    let path = dir.join("f.omnidb");
    save_database(&db, &path).unwrap();
    (db, CString::new(path.to_str().unwrap()).unwrap())
}

fn last_error() -> String {
    let p = omniloc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn open(path: &CString) -> *mut OmnilocDb {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { omniloc_db_open(path.as_ptr(), &mut h) }, OmnilocStatus::Ok);
    assert!(!h.is_null());
    h
}

#[test]
fn open_reports_distinct_failures() {
    let dir = tempfile::tempdir().unwrap();
    let mut h = ptr::null_mut();

    let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { omniloc_db_open(missing.as_ptr(), &mut h) }, OmnilocStatus::Io);
    assert!(h.is_null());
    assert!(last_error().contains("nope"));

    let junk = dir.path().join("junk");
    std::fs::write(&junk, b"definitely not a database").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { omniloc_db_open(junk.as_ptr(), &mut h) }, OmnilocStatus::BadDatabase);
    assert!(last_error().contains("magic"));

    assert_eq!(unsafe { omniloc_db_open(ptr::null(), &mut h) }, OmnilocStatus::NullPointer);
    assert_eq!(
        unsafe { omniloc_db_open(junk.as_ptr(), ptr::null_mut()) },
        OmnilocStatus::NullPointer
    );
}

#[test]
fn handle_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let (db, path) = fixture(dir.path());
    let h = open(&path);
    assert!(omniloc_last_error().is_null());
    unsafe {
        assert_eq!(omniloc_db_dim(h), 64);
        assert_eq!(omniloc_db_frames(h), db.total_frames());
        assert_eq!(omniloc_db_dim(ptr::null()), 0);
        omniloc_db_free(h);
        omniloc_db_free(ptr::null_mut());
    }
}

#[test]
fn extract_feature_matches_core() {
    let profile: Vec<f64> = (0..256).map(|i| (i as f64 * 0.11).sin().abs()).collect();
    let want = extract_feature(&CircularProfile::new(profile.clone()).unwrap()).unwrap();
    let mut out = vec![0.0; 64];
    let st = unsafe { omniloc_extract_feature(profile.as_ptr(), profile.len(), out.as_mut_ptr(), out.len()) };
    assert_eq!(st, OmnilocStatus::Ok);
    assert_eq!(out, want.coeffs());

    let st = unsafe { omniloc_extract_feature(profile.as_ptr(), profile.len(), out.as_mut_ptr(), 10) };
    assert_eq!(st, OmnilocStatus::BufferTooSmall);

    let st = unsafe { omniloc_extract_feature(profile.as_ptr(), 100, out.as_mut_ptr(), 64) };
    assert_eq!(st, OmnilocStatus::InvalidArgument);
    assert!(last_error().contains("100"));

    let nan = vec![f64::NAN; 256];
    let st = unsafe { omniloc_extract_feature(nan.as_ptr(), 256, out.as_mut_ptr(), 64) };
    assert_eq!(st, OmnilocStatus::InvalidArgument);
}

#[test]
fn locate_matches_core() {
    let dir = tempfile::tempdir().unwrap();
    let (db, path) = fixture(dir.path());
    let h = open(&path);
    let sub = &db.subspaces()[1];
    let m = 5;
    let flat: Vec<f64> = (10..10 + m).flat_map(|t| sub.row(t).to_vec()).collect();

    let bundle = QueryBundle::new((10..10 + m).map(|t| sub.feature(t)).collect(), m / 2).unwrap();
    let want = locate(&db, &bundle, &LocateParams::default()).unwrap().report();

    for params in [ptr::null(), &omniloc_default_params() as *const OmnilocParams] {
        let mut est = OmnilocEstimate::default();
        let st = unsafe { omniloc_locate(h, flat.as_ptr(), m, 64, params, &mut est) };
        assert_eq!(st, OmnilocStatus::Ok);
        assert_eq!((est.x, est.y), (want.x, want.y));
        assert_eq!((est.x_m, est.y_m), (want.x_m, want.y_m));
        assert_eq!(est.confidence, want.confidence);
        assert_eq!(est.low_confidence != 0, want.low_confidence);
        assert_eq!(est.candidate_count as usize, want.candidate_count);
        assert_eq!(est.candidate_count, 3 * 15 * m as u32);
    }
    unsafe { omniloc_db_free(h) };
}

#[test]
fn locate_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let (_, path) = fixture(dir.path());
    let h = open(&path);
    let mut est = OmnilocEstimate::default();
    let short = unit(1, 32);
    unsafe {
        let st = omniloc_locate(h, short.as_ptr(), 1, 32, ptr::null(), &mut est);
        assert_eq!(st, OmnilocStatus::DimensionMismatch);
        assert!(last_error().contains("64"));

        let f = unit(2, 64);
        assert_eq!(omniloc_locate(h, f.as_ptr(), 0, 64, ptr::null(), &mut est), OmnilocStatus::InvalidArgument);
        assert_eq!(omniloc_locate(ptr::null(), f.as_ptr(), 1, 64, ptr::null(), &mut est), OmnilocStatus::NullPointer);

        let mut p = omniloc_default_params();
        p.toler_per = 1.5;
        assert_eq!(omniloc_locate(h, f.as_ptr(), 1, 64, &p, &mut est), OmnilocStatus::InvalidArgument);

        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        assert_eq!(omniloc_locate(h, neg.as_ptr(), 1, 64, ptr::null(), &mut est), OmnilocStatus::InvalidArgument);
        omniloc_db_free(h);
    }
}

#[test]
fn errors_are_per_thread() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { omniloc_db_open(ptr::null(), &mut h) }, OmnilocStatus::NullPointer);
    std::thread::spawn(|| assert!(omniloc_last_error().is_null())).join().unwrap();
    assert!(!omniloc_last_error().is_null());
}

#[test]
fn header_compiles_as_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(include.join("omniloc.h")).unwrap();
    for name in [
        "omniloc_db_open",
        "omniloc_db_free",
        "omniloc_locate",
        "omniloc_extract_feature",
        "omniloc_last_error",
        "typedef struct OmnilocDb OmnilocDb;",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; header syntax check skipped");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"omniloc.h\"\n\
         int run(const char *p) {\n\
           OmnilocDb *db = NULL;\n\
           OmnilocParams params = omniloc_default_params();\n\
           OmnilocEstimate est;\n\
           double f[64] = {1.0};\n\
           if (omniloc_db_open(p, &db) != OMNILOC_STATUS_OK) return -1;\n\
           OmnilocStatus st = omniloc_locate(db, f, 1, omniloc_db_dim(db), &params, &est);\n\
           omniloc_db_free(db);\n\
           return st == OMNILOC_STATUS_OK ? est.x : -1;\n\
         }\n",
    )
    .unwrap();
    let out = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
