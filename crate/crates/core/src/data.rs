//! Domain types, the [`Dataset`] container, and CSV/JSON interchange.
//!
//! The canonical file format is a flat CSV with columns
//! `subject_id, task_id, timestamp_ms, rot_x, rot_y, rot_z, glance`.
//! Rotations are degrees (pitch, yaw, roll). The JSON form is an array of
//! records with the same field names. All emitted floats carry six fractional
//! digits.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowProblem};
use crate::format::fixed6;

/// The sixteen manually coded glance locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlanceRegion {
    Forward,
    LeftForward,
    RightForward,
    RearviewMirror,
    LeftWindowMirror,
    RightWindowMirror,
    OverShoulder,
    InstrumentCluster,
    CenterStack,
    CellPhone,
    InteriorObject,
    Passenger,
    NoEyesUnknown,
    NoEyesOffroad,
    EyesClosed,
    Other,
}

impl GlanceRegion {
    pub const ALL: [GlanceRegion; 16] = [
        GlanceRegion::Forward,
        GlanceRegion::LeftForward,
        GlanceRegion::RightForward,
        GlanceRegion::RearviewMirror,
        GlanceRegion::LeftWindowMirror,
        GlanceRegion::RightWindowMirror,
        GlanceRegion::OverShoulder,
        GlanceRegion::InstrumentCluster,
        GlanceRegion::CenterStack,
        GlanceRegion::CellPhone,
        GlanceRegion::InteriorObject,
        GlanceRegion::Passenger,
        GlanceRegion::NoEyesUnknown,
        GlanceRegion::NoEyesOffroad,
        GlanceRegion::EyesClosed,
        GlanceRegion::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GlanceRegion::Forward => "forward",
            GlanceRegion::LeftForward => "left-forward",
            GlanceRegion::RightForward => "right-forward",
            GlanceRegion::RearviewMirror => "rearview-mirror",
            GlanceRegion::LeftWindowMirror => "left-window-mirror",
            GlanceRegion::RightWindowMirror => "right-window-mirror",
            GlanceRegion::OverShoulder => "over-shoulder",
            GlanceRegion::InstrumentCluster => "instrument-cluster",
            GlanceRegion::CenterStack => "center-stack",
            GlanceRegion::CellPhone => "cell-phone",
            GlanceRegion::InteriorObject => "interior-object",
            GlanceRegion::Passenger => "passenger",
            GlanceRegion::NoEyesUnknown => "no-eyes-unknown",
            GlanceRegion::NoEyesOffroad => "no-eyes-offroad",
            GlanceRegion::EyesClosed => "eyes-closed",
            GlanceRegion::Other => "other",
        }
    }

    /// Position in [`GlanceRegion::ALL`]; stable across releases.
    pub fn code(self) -> u32 {
        GlanceRegion::ALL.iter().position(|r| *r == self).unwrap() as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        GlanceRegion::ALL.get(code as usize).copied()
    }

    /// Ordering used for deterministic tie-breaks: by label text.
    pub fn label_cmp(self, other: Self) -> std::cmp::Ordering {
        self.as_str().cmp(other.as_str())
    }
}

impl fmt::Display for GlanceRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GlanceRegion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GlanceRegion::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::UnknownGlance(s.to_string()))
    }
}

/// The five scripted in-vehicle tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    ReportSpeed,
    AdjacentVehicles,
    RadioOnOff,
    LocatePhone,
    PhoneConversation,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::ReportSpeed,
        TaskKind::AdjacentVehicles,
        TaskKind::RadioOnOff,
        TaskKind::LocatePhone,
        TaskKind::PhoneConversation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::ReportSpeed => "report-speed",
            TaskKind::AdjacentVehicles => "adjacent-vehicles",
            TaskKind::RadioOnOff => "radio-on-off",
            TaskKind::LocatePhone => "locate-phone",
            TaskKind::PhoneConversation => "phone-conversation",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

/// Largest admissible absolute rotation, degrees (exclusive).
pub const MAX_ROTATION_DEG: f64 = 180.0;

/// One timestamped head-rotation estimate with its coded glance.
///
/// Subject and task identifiers are opaque strings; synthetic data uses the
/// [`TaskKind`] names for `task_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationSample {
    pub subject_id: Arc<str>,
    pub task_id: Arc<str>,
    pub timestamp_ms: i64,
    pub rot_x: f64,
    pub rot_y: f64,
    pub rot_z: f64,
    pub glance: GlanceRegion,
}

impl RotationSample {
    pub fn rotation(&self) -> [f64; 3] {
        [self.rot_x, self.rot_y, self.rot_z]
    }

    pub fn set_rotation(&mut self, r: [f64; 3]) {
        self.rot_x = r[0];
        self.rot_y = r[1];
        self.rot_z = r[2];
    }

    fn stream_key(&self) -> (Arc<str>, Arc<str>) {
        (self.subject_id.clone(), self.task_id.clone())
    }
}

/// Ordered, immutable collection of rotation samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<RotationSample>,
    subjects: BTreeSet<Arc<str>>,
    provenance: String,
}

/// Supported interchange formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Guess from a file extension; anything other than `.json` is CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

pub const CSV_COLUMNS: [&str; 7] = [
    "subject_id",
    "task_id",
    "timestamp_ms",
    "rot_x",
    "rot_y",
    "rot_z",
    "glance",
];

impl Dataset {
    /// Build a dataset, checking every invariant.
    ///
    /// Rotations must be finite with magnitude below 180 degrees, and
    /// timestamps must strictly increase within each `(subject, task)` stream.
    pub fn new(samples: Vec<RotationSample>, provenance: impl Into<String>) -> Result<Self> {
        let problems = validate_samples(&samples, |i| i + 1);
        if !problems.is_empty() {
            return Err(Error::rows(problems));
        }
        Ok(Self::from_trusted(samples, provenance))
    }

    /// Build from samples already known to satisfy the invariants, e.g. a
    /// subsequence of a valid dataset or rescaled rotations.
    pub(crate) fn from_trusted(samples: Vec<RotationSample>, provenance: impl Into<String>) -> Self {
        let subjects = samples.iter().map(|s| s.subject_id.clone()).collect();
        Dataset {
            samples,
            subjects,
            provenance: provenance.into(),
        }
    }

    pub fn samples(&self) -> &[RotationSample] {
        &self.samples
    }

    pub fn subjects(&self) -> &BTreeSet<Arc<str>> {
        &self.subjects
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count_label(&self, region: GlanceRegion) -> usize {
        self.samples.iter().filter(|s| s.glance == region).count()
    }

    /// Keep samples matching `keep`, preserving order.
    pub fn retain(&self, mut keep: impl FnMut(&RotationSample) -> bool) -> Dataset {
        let samples = self.samples.iter().filter(|s| keep(s)).cloned().collect();
        Dataset::from_trusted(samples, self.provenance.clone())
    }

    /// Apply `f` to every rotation triple, keeping all other fields.
    pub fn map_rotations(&self, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> Dataset {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.set_rotation(f(s.rotation()));
                s
            })
            .collect();
        Dataset::from_trusted(samples, self.provenance.clone())
    }

    pub fn into_samples(self) -> Vec<RotationSample> {
        self.samples
    }
}

fn validate_samples(samples: &[RotationSample], row_of: impl Fn(usize) -> usize) -> Vec<RowProblem> {
    let mut problems = Vec::new();
    let mut last: HashMap<(Arc<str>, Arc<str>), i64> = HashMap::new();
    for (i, s) in samples.iter().enumerate() {
        if let Some(msg) = rotation_problem(s.rotation()) {
            problems.push(RowProblem { row: row_of(i), message: msg });
            continue;
        }
        let key = s.stream_key();
        if let Some(&prev) = last.get(&key) {
            if s.timestamp_ms <= prev {
                problems.push(RowProblem {
                    row: row_of(i),
                    message: format!(
                        "timestamp {} not after {} within ({}, {})",
                        s.timestamp_ms, prev, s.subject_id, s.task_id
                    ),
                });
                continue;
            }
        }
        last.insert(key, s.timestamp_ms);
    }
    problems
}

fn rotation_problem(r: [f64; 3]) -> Option<String> {
    for (name, v) in ["rot_x", "rot_y", "rot_z"].iter().zip(r) {
        if !v.is_finite() {
            return Some(format!("non-finite {name}"));
        }
        if v.abs() >= MAX_ROTATION_DEG {
            return Some(format!("{name} = {v} outside (-180, 180)"));
        }
    }
    None
}

/// Keep only samples labelled `class_a` or `class_b`, in their original order.
pub fn filter_binary(ds: &Dataset, class_a: GlanceRegion, class_b: GlanceRegion) -> Result<Dataset> {
    if class_a == class_b {
        return Err(Error::Precondition(format!(
            "class pair must be two distinct regions, got {class_a} twice"
        )));
    }
    let out = ds.retain(|s| s.glance == class_a || s.glance == class_b);
    if out.is_empty() {
        return Err(Error::EmptyPair(class_a.to_string(), class_b.to_string()));
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    subject_id: String,
    task_id: String,
    timestamp_ms: i64,
    rot_x: f64,
    rot_y: f64,
    rot_z: f64,
    glance: String,
}

/// Read a dataset from `path`.
pub fn load_dataset(path: impl AsRef<Path>, format: Format) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let provenance = path.display().to_string();
    match format {
        Format::Csv => parse_csv(&text, provenance),
        Format::Json => parse_json(&text, provenance),
    }
}

/// Parse the canonical CSV form. Columns are located by header name.
pub fn parse_csv(text: &str, provenance: impl Into<String>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let mut index = [0usize; 7];
    for (slot, name) in index.iter_mut().zip(CSV_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("missing required column '{name}'")))?;
    }

    let mut samples = Vec::new();
    let mut lines = Vec::new();
    let mut problems = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = record
            .as_ref()
            .ok()
            .and_then(|r| r.position())
            .map(|p| p.line() as usize)
            .unwrap_or(i + 2);
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                problems.push(RowProblem { row: line, message: e.to_string() });
                continue;
            }
        };
        let field = |k: usize| record.get(index[k]).unwrap_or("");
        match parse_fields(
            field(0),
            field(1),
            field(2),
            [field(3), field(4), field(5)],
            field(6),
        ) {
            Ok(s) => {
                samples.push(s);
                lines.push(line);
            }
            Err(message) => problems.push(RowProblem { row: line, message }),
        }
    }
    problems.extend(validate_samples(&samples, |i| lines[i]));
    finish(samples, problems, provenance)
}

/// Parse the JSON form: an array of sample records.
pub fn parse_json(text: &str, provenance: impl Into<String>) -> Result<Dataset> {
    let raw: Vec<RawRecord> = serde_json::from_str(text)?;
    let mut samples = Vec::with_capacity(raw.len());
    let mut rows = Vec::with_capacity(raw.len());
    let mut problems = Vec::new();
    for (i, r) in raw.into_iter().enumerate() {
        let glance = match r.glance.parse::<GlanceRegion>() {
            Ok(g) => g,
            Err(e) => {
                problems.push(RowProblem { row: i + 1, message: e.to_string() });
                continue;
            }
        };
        samples.push(RotationSample {
            subject_id: r.subject_id.into(),
            task_id: r.task_id.into(),
            timestamp_ms: r.timestamp_ms,
            rot_x: r.rot_x,
            rot_y: r.rot_y,
            rot_z: r.rot_z,
            glance,
        });
        rows.push(i + 1);
    }
    problems.extend(validate_samples(&samples, |i| rows[i]));
    finish(samples, problems, provenance)
}

fn finish(samples: Vec<RotationSample>, mut problems: Vec<RowProblem>, provenance: impl Into<String>) -> Result<Dataset> {
    if problems.is_empty() {
        Ok(Dataset::from_trusted(samples, provenance))
    } else {
        problems.sort_by_key(|p| p.row);
        Err(Error::rows(problems))
    }
}

fn parse_fields(
    subject: &str,
    task: &str,
    timestamp: &str,
    rot: [&str; 3],
    glance: &str,
) -> std::result::Result<RotationSample, String> {
    if subject.is_empty() {
        return Err("empty subject_id".into());
    }
    if task.is_empty() {
        return Err("empty task_id".into());
    }
    let timestamp_ms: i64 = timestamp
        .parse()
        .map_err(|_| format!("invalid timestamp_ms '{timestamp}'"))?;
    let mut r = [0.0; 3];
    for (slot, (text, name)) in r.iter_mut().zip(rot.iter().zip(["rot_x", "rot_y", "rot_z"])) {
        *slot = text
            .parse::<f64>()
            .map_err(|_| format!("invalid {name} '{text}'"))?;
    }
    let glance: GlanceRegion = glance.parse().map_err(|e: Error| e.to_string())?;
    Ok(RotationSample {
        subject_id: subject.into(),
        task_id: task.into(),
        timestamp_ms,
        rot_x: r[0],
        rot_y: r[1],
        rot_z: r[2],
        glance,
    })
}

/// Canonical CSV text for `ds`.
pub fn to_csv_string(ds: &Dataset) -> String {
    let mut out = String::with_capacity(64 * (ds.len() + 1));
    out.push_str(&CSV_COLUMNS.join(","));
    out.push('\n');
    for s in ds.samples() {
        out.push_str(&csv_field(&s.subject_id));
        out.push(',');
        out.push_str(&csv_field(&s.task_id));
        out.push(',');
        out.push_str(&s.timestamp_ms.to_string());
        for v in s.rotation() {
            out.push(',');
            out.push_str(&fixed6(v));
        }
        out.push(',');
        out.push_str(s.glance.as_str());
        out.push('\n');
    }
    out
}

/// JSON text for `ds`: one record per line inside a top-level array.
pub fn to_json_string(ds: &Dataset) -> String {
    let mut out = String::from("[\n");
    for (i, s) in ds.samples().iter().enumerate() {
        out.push_str(&format!(
            "  {{\"subject_id\": {}, \"task_id\": {}, \"timestamp_ms\": {}, \"rot_x\": {}, \"rot_y\": {}, \"rot_z\": {}, \"glance\": \"{}\"}}",
            serde_json::to_string(&*s.subject_id).expect("string"),
            serde_json::to_string(&*s.task_id).expect("string"),
            s.timestamp_ms,
            fixed6(s.rot_x),
            fixed6(s.rot_y),
            fixed6(s.rot_z),
            s.glance.as_str()
        ));
        out.push_str(if i + 1 < ds.len() { ",\n" } else { "\n" });
    }
    out.push_str("]\n");
    out
}

/// Write `ds` to `path` in `format`.
pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        Format::Csv => to_csv_string(ds),
        Format::Json => to_json_string(ds),
    };
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
