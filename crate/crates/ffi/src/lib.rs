//! C ABI over glance-core.
//!
//! Every fallible function returns a [`GlanceStatus`]; on failure the message
//! is available from [`glance_last_error`] on the same thread. Datasets are
//! opaque handles released with [`glance_dataset_free`]. Strings returned to
//! the caller are released with [`glance_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use glance_core::classifiers::{ClassifierKind, ClassifierParams};
use glance_core::data::{filter_binary, load_dataset, write_dataset, Format};
use glance_core::evaluation::{run_experiment, ClassifierLearner, ConfusionCounts, ExperimentSetup};
use glance_core::pose::{estimate_rotation, MergedFrame, Point2, ReferenceFace};
use glance_core::synth::{default_scenario, generate, Profile, ScenarioSpec};
use glance_core::{Dataset, Error, GlanceRegion};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlanceStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Precondition = 6,
    Runtime = 7,
    Panic = 8,
}

/// Built-in driver populations.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlanceProfile {
    Mixed = 0,
    AllOwl = 1,
    AllLizard = 2,
}

/// Opaque dataset handle.
pub struct GlanceDataset(Dataset);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GlanceMetrics {
    pub accuracy: f64,
    pub f1: f64,
    pub kappa: f64,
}

/// Head rotation in degrees: pitch, yaw, roll.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GlanceRotation {
    pub rot_x: f64,
    pub rot_y: f64,
    pub rot_z: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(GlanceStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => GlanceStatus::Io,
            Error::Csv(_) | Error::Json(_) => GlanceStatus::Parse,
            Error::UnknownGlance(_)
            | Error::UnknownTask(_)
            | Error::UnknownLandmark(_)
            | Error::InvalidRows { .. }
            | Error::Config(_) => GlanceStatus::Validation,
            Error::Diverged { .. } | Error::StateStarvation { .. } | Error::NonFiniteLikelihood(_) => {
                GlanceStatus::Runtime
            }
            _ => GlanceStatus::Precondition,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Run `f`, converting errors and panics into a status and a last-error message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GlanceStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            GlanceStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {message}"));
            GlanceStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(GlanceStatus::NullArgument, format!("{name} is null"))
}

/// # Safety
/// `p` must be null or a valid nul-terminated string.
unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(GlanceStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

/// # Safety
/// `p` must be null or a handle from this library that has not been freed.
unsafe fn dataset<'a>(p: *const GlanceDataset) -> Result<&'a Dataset, Failure> {
    p.as_ref().map(|d| &d.0).ok_or_else(|| null("dataset"))
}

fn region(name: &str) -> Result<GlanceRegion, Failure> {
    name.parse().map_err(Failure::from)
}

/// # Safety
/// `out` must be null or valid for writes.
unsafe fn put<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

fn into_handle(ds: Dataset) -> *mut GlanceDataset {
    Box::into_raw(Box::new(GlanceDataset(ds)))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn glance_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null after a success.
/// Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn glance_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Load a CSV or JSON dataset (chosen by extension).
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn glance_dataset_load(path: *const c_char, out: *mut *mut GlanceDataset) -> GlanceStatus {
    guard(|| {
        let path = Path::new(text(path, "path")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let ds = load_dataset(path, Format::from_path(path))?;
        put(out, into_handle(ds), "out")
    })
}

/// Generate a built-in synthetic population; `profile` is a [`GlanceProfile`] value.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn glance_dataset_synthesize(
    profile: u32,
    subjects: usize,
    seed: u64,
    out: *mut *mut GlanceDataset,
) -> GlanceStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let profile = match profile {
            p if p == GlanceProfile::Mixed as u32 => Profile::Mixed,
            p if p == GlanceProfile::AllOwl as u32 => Profile::AllOwl,
            p if p == GlanceProfile::AllLizard as u32 => Profile::AllLizard,
            p => return Err(Failure(GlanceStatus::InvalidArgument, format!("unknown profile {p}"))),
        };
        let ds = generate(&default_scenario(profile, subjects, seed)?)?;
        put(out, into_handle(ds), "out")
    })
}

/// Generate a dataset from a scenario JSON document.
///
/// # Safety
/// `scenario_json` must be a nul-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn glance_dataset_synthesize_json(
    scenario_json: *const c_char,
    out: *mut *mut GlanceDataset,
) -> GlanceStatus {
    guard(|| {
        let spec: ScenarioSpec = serde_json::from_str(text(scenario_json, "scenario_json")?).map_err(Error::from)?;
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, into_handle(generate(&spec)?), "out")
    })
}

/// Release a dataset handle. Null is ignored.
///
/// # Safety
/// `ds` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn glance_dataset_free(ds: *mut GlanceDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of samples.
///
/// # Safety
/// `ds` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn glance_dataset_len(ds: *const GlanceDataset, out: *mut usize) -> GlanceStatus {
    guard(|| put(out, dataset(ds)?.len(), "out"))
}

/// Number of distinct subjects.
///
/// # Safety
/// `ds` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn glance_dataset_subject_count(ds: *const GlanceDataset, out: *mut usize) -> GlanceStatus {
    guard(|| put(out, dataset(ds)?.subjects().len(), "out"))
}

/// Samples labelled with `region` (for example "center-stack").
///
/// # Safety
/// `ds` must be a live handle; `region` a nul-terminated string; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn glance_dataset_count_label(
    ds: *const GlanceDataset,
    region_name: *const c_char,
    out: *mut usize,
) -> GlanceStatus {
    guard(|| {
        let ds = dataset(ds)?;
        let r = region(text(region_name, "region")?)?;
        put(out, ds.count_label(r), "out")
    })
}

/// Write the dataset as CSV or JSON (chosen by extension).
///
/// # Safety
/// `ds` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn glance_dataset_write(ds: *const GlanceDataset, path: *const c_char) -> GlanceStatus {
    guard(|| {
        let ds = dataset(ds)?;
        let path = Path::new(text(path, "path")?);
        Ok(write_dataset(ds, path, Format::from_path(path))?)
    })
}

/// New dataset holding only samples of the two regions.
///
/// # Safety
/// `ds` must be a live handle; `a` and `b` nul-terminated strings; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn glance_dataset_filter_pair(
    ds: *const GlanceDataset,
    a: *const c_char,
    b: *const c_char,
    out: *mut *mut GlanceDataset,
) -> GlanceStatus {
    guard(|| {
        let ds = dataset(ds)?;
        let (a, b) = (region(text(a, "a")?)?, region(text(b, "b")?)?);
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, into_handle(filter_binary(ds, a, b)?), "out")
    })
}

/// Accuracy, F1 and Cohen's kappa of a binary confusion table.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn glance_metrics_from_counts(
    tp: u64,
    fp: u64,
    fn_: u64,
    tn: u64,
    out: *mut GlanceMetrics,
) -> GlanceStatus {
    guard(|| {
        let c = ConfusionCounts { tp, fp, fn_, tn };
        if c.total() == 0 {
            return Err(Failure(GlanceStatus::InvalidArgument, "confusion table is empty".into()));
        }
        let m = c.metrics();
        put(out, GlanceMetrics { accuracy: m.accuracy, f1: m.f1, kappa: m.kappa }, "out")
    })
}

/// Head rotation from seven merged landmarks with the built-in reference face.
///
/// `xy` holds 14 values (x, y pairs in pixels) in the order right-eye-outer,
/// right-eye-inner, left-eye-outer, left-eye-inner, nose-tip, mouth-right,
/// mouth-left.
///
/// # Safety
/// `xy` must point to 14 readable doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn glance_estimate_rotation(xy: *const f64, out: *mut GlanceRotation) -> GlanceStatus {
    guard(|| {
        if xy.is_null() {
            return Err(null("xy"));
        }
        let v = std::slice::from_raw_parts(xy, 14);
        let points = std::array::from_fn(|i| Point2::new(v[2 * i], v[2 * i + 1]));
        let frame = MergedFrame { frame_id: 0, points, disagreement: 0.0 };
        let r = estimate_rotation(&frame, &ReferenceFace::default())?;
        put(out, GlanceRotation { rot_x: r.rot_x, rot_y: r.rot_y, rot_z: r.rot_z }, "out")
    })
}

/// Run one Monte-Carlo experiment.
///
/// `setup_json` is an experiment setup object (class_a, class_b, condition,
/// plan, normalize, optional balance_scope). `classifier` is one of "knn",
/// "forest", "mlp", "hmm". `params_json` may be null for defaults. The mean
/// metrics go to `mean`; when `report_json` is non-null it receives the full
/// report, to be released with [`glance_string_free`].
///
/// # Safety
/// `ds` must be a live handle; string arguments nul-terminated or null where
/// allowed; output pointers valid for writes or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn glance_run_experiment(
    ds: *const GlanceDataset,
    setup_json: *const c_char,
    classifier: *const c_char,
    params_json: *const c_char,
    mean: *mut GlanceMetrics,
    report_json: *mut *mut c_char,
) -> GlanceStatus {
    guard(|| {
        let ds = dataset(ds)?;
        let setup: ExperimentSetup = serde_json::from_str(text(setup_json, "setup_json")?).map_err(Error::from)?;
        let kind: ClassifierKind = text(classifier, "classifier")?.parse()?;
        let params: ClassifierParams = if params_json.is_null() {
            ClassifierParams::default()
        } else {
            serde_json::from_str(text(params_json, "params_json")?).map_err(Error::from)?
        };
        params.validate()?;
        if mean.is_null() {
            return Err(null("mean"));
        }
        let report = run_experiment(ds, &ClassifierLearner { kind, params }, &setup)?;
        let m = report.mean;
        put(mean, GlanceMetrics { accuracy: m.accuracy, f1: m.f1, kappa: m.kappa }, "mean")?;
        if !report_json.is_null() {
            let json = glance_core::format::to_json_fixed(&report).map_err(Error::from)?;
            let c = CString::new(json).map_err(|e| Failure(GlanceStatus::Runtime, e.to_string()))?;
            report_json.write(c.into_raw());
        }
        Ok(())
    })
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn glance_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
