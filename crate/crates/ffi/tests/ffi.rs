use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use glance_ffi::*;

fn last_error() -> String {
    let p = glance_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn synthesize(subjects: usize) -> *mut GlanceDataset {
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { glance_dataset_synthesize(GlanceProfile::Mixed as u32, subjects, 7, &mut ds) }, GlanceStatus::Ok);
    assert!(glance_last_error().is_null());
    ds
}

#[test]
fn dataset_lifecycle_and_counts() {
    let ds = synthesize(4);
    let (mut n, mut subjects, mut forward) = (0usize, 0usize, 0usize);
    unsafe {
        assert_eq!(glance_dataset_len(ds, &mut n), GlanceStatus::Ok);
        assert_eq!(glance_dataset_subject_count(ds, &mut subjects), GlanceStatus::Ok);
        let region = CString::new("forward").unwrap();
        assert_eq!(glance_dataset_count_label(ds, region.as_ptr(), &mut forward), GlanceStatus::Ok);
    }
    assert_eq!(subjects, 4);
    assert!(forward > 0 && forward < n);

    let tmp = tempfile::tempdir().unwrap();
    let path = CString::new(tmp.path().join("d.csv").to_str().unwrap()).unwrap();
    let mut back = ptr::null_mut();
    let (a, b) = (CString::new("forward").unwrap(), CString::new("center-stack").unwrap());
    let mut pair = ptr::null_mut();
    let (mut n_back, mut n_pair, mut cs) = (0, 0, 0);
    unsafe {
        assert_eq!(glance_dataset_write(ds, path.as_ptr()), GlanceStatus::Ok);
        assert_eq!(glance_dataset_load(path.as_ptr(), &mut back), GlanceStatus::Ok);
        glance_dataset_len(back, &mut n_back);
        assert_eq!(glance_dataset_filter_pair(back, a.as_ptr(), b.as_ptr(), &mut pair), GlanceStatus::Ok);
        glance_dataset_len(pair, &mut n_pair);
        glance_dataset_count_label(pair, b.as_ptr(), &mut cs);
        glance_dataset_free(pair);
        glance_dataset_free(back);
        glance_dataset_free(ds);
        glance_dataset_free(ptr::null_mut());
    }
    assert_eq!(n_back, n);
    assert_eq!(n_pair, forward + cs);
}

#[test]
fn errors_set_status_and_message() {
    let mut ds = ptr::null_mut();
    let missing = CString::new("/definitely/not/here.csv").unwrap();
    unsafe {
        assert_eq!(glance_dataset_load(missing.as_ptr(), &mut ds), GlanceStatus::Io);
        assert!(last_error().contains("/definitely/not/here.csv"));
        assert!(ds.is_null());
        assert_eq!(glance_dataset_load(ptr::null(), &mut ds), GlanceStatus::NullArgument);
        assert_eq!(glance_dataset_synthesize(9, 4, 0, &mut ds), GlanceStatus::InvalidArgument);
        assert_eq!(glance_dataset_synthesize(0, 1, 0, &mut ds), GlanceStatus::Validation);
        let mut n = 0;
        assert_eq!(glance_dataset_len(ptr::null(), &mut n), GlanceStatus::NullArgument);
        let bad = CString::new("{\"drivers\": 3}").unwrap();
        assert_eq!(glance_dataset_synthesize_json(bad.as_ptr(), &mut ds), GlanceStatus::Parse);
        let ok = synthesize(3);
        let unknown = CString::new("moon").unwrap();
        assert_eq!(glance_dataset_count_label(ok, unknown.as_ptr(), &mut n), GlanceStatus::Validation);
        assert!(last_error().contains("moon"));
        glance_dataset_free(ok);
    }
}

#[test]
fn metrics_pose_and_experiment() {
    let mut m = GlanceMetrics::default();
    unsafe {
        assert_eq!(glance_metrics_from_counts(40, 10, 10, 40, &mut m), GlanceStatus::Ok);
        assert_eq!(glance_metrics_from_counts(0, 0, 0, 0, &mut m), GlanceStatus::InvalidArgument);
    }
    assert!((m.kappa - 0.6).abs() < 1e-12 && (m.accuracy - 0.8).abs() < 1e-12);

    use glance_core::pose::{project_face, HeadRotation, Point2, ReferenceFace};
    let pts = project_face(&ReferenceFace::default(), HeadRotation::new(-5.0, 25.0, 3.0), 80.0, Point2::new(200.0, 150.0));
    let xy: Vec<f64> = pts.iter().flat_map(|p| [p.x, p.y]).collect();
    let mut r = GlanceRotation::default();
    assert_eq!(unsafe { glance_estimate_rotation(xy.as_ptr(), &mut r) }, GlanceStatus::Ok);
    assert!((r.rot_x + 5.0).abs() < 1e-6 && (r.rot_y - 25.0).abs() < 1e-6 && (r.rot_z - 3.0).abs() < 1e-6);

    let ds = synthesize(6);
    let setup = CString::new(
        r#"{"class_a": "forward", "class_b": "center-stack", "condition": "balanced",
            "plan": {"iterations": 3}, "normalize": "train"}"#,
    )
    .unwrap();
    let knn = CString::new("knn").unwrap();
    let mut report = ptr::null_mut();
    unsafe {
        assert_eq!(
            glance_run_experiment(ds, setup.as_ptr(), knn.as_ptr(), ptr::null(), &mut m, &mut report),
            GlanceStatus::Ok
        );
        let text = CStr::from_ptr(report).to_str().unwrap().to_owned();
        glance_string_free(report);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["iterations"].as_array().unwrap().len(), 3);
        let params = CString::new(r#"{"knn": {"k": 4}}"#).unwrap();
        assert_eq!(
            glance_run_experiment(ds, setup.as_ptr(), knn.as_ptr(), params.as_ptr(), &mut m, ptr::null_mut()),
            GlanceStatus::Validation
        );
        let minimal = CString::new(r#"{"class_a":"forward","class_b":"center-stack","condition":"original","plan":{"iterations":2}}"#).unwrap();
        assert_eq!(
            glance_run_experiment(ds, minimal.as_ptr(), knn.as_ptr(), ptr::null(), &mut m, ptr::null_mut()),
            GlanceStatus::Ok
        );
        glance_dataset_free(ds);
    }
    assert!((0.0..=1.0).contains(&m.accuracy));
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(glance_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// Compile a C program against the generated header and the shared library.
#[test]
fn c_program_links_against_header() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib_dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).parent().unwrap().join("debug");
    assert!(lib_dir.join("libglance_ffi.so").exists(), "shared library not built in {}", lib_dir.display());
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(crate_dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lglance_ffi")
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).env("LD_LIBRARY_PATH", &lib_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
