//! Landmark reduction and geometric head-pose estimation.
//!
//! Two analysts annotate seven facial landmarks per video frame. Their
//! annotations are averaged, frames with missing points or large
//! disagreement are dropped, and the surviving frames are turned into head
//! rotations by fitting a weak-perspective projection of a 3D reference face.
//!
//! Coordinates: the camera frame has x to the image right, y up and z towards
//! the camera. Pixel `v` grows downwards and is flipped on entry. The head
//! rotation is `Rz(roll) * Ry(-yaw) * Rx(-pitch)`, so positive pitch lifts the
//! chin, positive yaw turns the face towards the subject's right, and positive
//! roll is counter-clockwise as seen in the image.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GlanceRegion, RotationSample};
use crate::error::{Error, Result, RowProblem};

/// The seven annotated landmarks, in annotation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LandmarkRole {
    RightEyeOuter,
    RightEyeInner,
    LeftEyeOuter,
    LeftEyeInner,
    NoseTip,
    MouthRight,
    MouthLeft,
}

impl LandmarkRole {
    pub const ALL: [LandmarkRole; 7] = [
        LandmarkRole::RightEyeOuter,
        LandmarkRole::RightEyeInner,
        LandmarkRole::LeftEyeOuter,
        LandmarkRole::LeftEyeInner,
        LandmarkRole::NoseTip,
        LandmarkRole::MouthRight,
        LandmarkRole::MouthLeft,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LandmarkRole::RightEyeOuter => "right-eye-outer",
            LandmarkRole::RightEyeInner => "right-eye-inner",
            LandmarkRole::LeftEyeOuter => "left-eye-outer",
            LandmarkRole::LeftEyeInner => "left-eye-inner",
            LandmarkRole::NoseTip => "nose-tip",
            LandmarkRole::MouthRight => "mouth-right",
            LandmarkRole::MouthLeft => "mouth-left",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for LandmarkRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LandmarkRole::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::UnknownLandmark(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    fn dist(self, o: Point2) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

/// One analyst's seven points; `None` marks a landmark flagged missing.
pub type Annotation = [Option<Point2>; 7];

/// All annotations of one video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    pub frame_id: u64,
    pub analysts: Vec<Annotation>,
}

/// Two annotations averaged into one set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedFrame {
    pub frame_id: u64,
    pub points: [Point2; 7],
    /// Mean per-landmark distance between the analysts, pixels.
    pub disagreement: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exclusion {
    Disagreement,
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MergeOutcome {
    Merged(MergedFrame),
    Excluded(Exclusion),
}

/// Mean-disagreement threshold above which a frame is dropped, pixels.
pub const DEFAULT_DISAGREEMENT_PX: f64 = 3.5;

/// Average two analysts' annotations of a frame.
///
/// A frame with any missing point is excluded; otherwise it is excluded when
/// the mean Euclidean distance between corresponding points exceeds
/// `threshold_px`.
pub fn merge_annotations(frame: &LandmarkFrame, threshold_px: f64) -> Result<MergeOutcome> {
    let [a, b] = frame.analysts.as_slice() else {
        return Err(Error::Precondition(format!(
            "frame {} has {} analyst annotation(s), expected 2",
            frame.frame_id,
            frame.analysts.len()
        )));
    };
    let mut points = [Point2::new(0.0, 0.0); 7];
    let mut total = 0.0;
    for i in 0..7 {
        let (Some(p), Some(q)) = (a[i], b[i]) else {
            return Ok(MergeOutcome::Excluded(Exclusion::Missing));
        };
        points[i] = Point2::new((p.x + q.x) / 2.0, (p.y + q.y) / 2.0);
        total += p.dist(q);
    }
    let disagreement = total / 7.0;
    if disagreement > threshold_px {
        return Ok(MergeOutcome::Excluded(Exclusion::Disagreement));
    }
    Ok(MergeOutcome::Merged(MergedFrame {
        frame_id: frame.frame_id,
        points,
        disagreement,
    }))
}

/// Landmark positions of a rigid face model in a face-fixed frame.
///
/// At zero rotation the face frame coincides with the camera frame: x to the
/// image right (the subject's left), y up, z out of the face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceFace {
    pub right_eye_outer: [f64; 3],
    pub right_eye_inner: [f64; 3],
    pub left_eye_outer: [f64; 3],
    pub left_eye_inner: [f64; 3],
    pub nose_tip: [f64; 3],
    pub mouth_right: [f64; 3],
    pub mouth_left: [f64; 3],
}

impl Default for ReferenceFace {
    /// Outer eye corners one unit apart, nose tip 0.35 in front of the eye
    /// plane, mouth corners 0.55 below the eye line and 0.65 apart.
    fn default() -> Self {
        ReferenceFace {
            right_eye_outer: [-0.5, 0.0, 0.0],
            right_eye_inner: [-0.18, 0.0, 0.0],
            left_eye_outer: [0.5, 0.0, 0.0],
            left_eye_inner: [0.18, 0.0, 0.0],
            nose_tip: [0.0, -0.3, 0.35],
            mouth_right: [-0.325, -0.55, 0.0],
            mouth_left: [0.325, -0.55, 0.0],
        }
    }
}

impl ReferenceFace {
    pub fn points(&self) -> [[f64; 3]; 7] {
        [
            self.right_eye_outer,
            self.right_eye_inner,
            self.left_eye_outer,
            self.left_eye_inner,
            self.nose_tip,
            self.mouth_right,
            self.mouth_left,
        ]
    }

    /// Mirror symmetry about the x = 0 plane with the nose tip on it.
    pub fn validate(&self) -> Result<()> {
        let mirrored = |r: [f64; 3], l: [f64; 3]| {
            (r[0] + l[0]).abs() < 1e-9 && (r[1] - l[1]).abs() < 1e-9 && (r[2] - l[2]).abs() < 1e-9
        };
        let pairs = [
            (self.right_eye_outer, self.left_eye_outer, "eye outer corners"),
            (self.right_eye_inner, self.left_eye_inner, "eye inner corners"),
            (self.mouth_right, self.mouth_left, "mouth corners"),
        ];
        for (r, l, what) in pairs {
            if !mirrored(r, l) {
                return Err(Error::Config(format!("reference face {what} are not mirror-symmetric")));
            }
        }
        if self.nose_tip[0].abs() > 1e-9 {
            return Err(Error::Config("reference face nose tip is off the midplane".into()));
        }
        if (self.left_eye_outer[0] - self.right_eye_outer[0]).abs() < 1e-9 {
            return Err(Error::Config("reference face has zero inter-ocular distance".into()));
        }
        let centered = center3(&self.points());
        if det3(&scatter3(&centered)).abs() < 1e-12 {
            return Err(Error::Config("reference face landmarks are coplanar".into()));
        }
        Ok(())
    }
}

/// Head rotation in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadRotation {
    /// Pitch about the lateral axis.
    pub rot_x: f64,
    /// Yaw about the vertical axis.
    pub rot_y: f64,
    /// Roll about the optical axis.
    pub rot_z: f64,
}

impl HeadRotation {
    pub fn new(rot_x: f64, rot_y: f64, rot_z: f64) -> Self {
        HeadRotation { rot_x, rot_y, rot_z }
    }

    pub fn as_array(self) -> [f64; 3] {
        [self.rot_x, self.rot_y, self.rot_z]
    }
}

type Mat3 = [[f64; 3]; 3];

fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Rotation matrix for angles given in radians as (pitch, yaw, roll).
fn rotation_matrix(angles: [f64; 3]) -> Mat3 {
    matmul(&rot_z(angles[2]), &matmul(&rot_y(-angles[1]), &rot_x(-angles[0])))
}

/// Inverse of [`rotation_matrix`].
fn matrix_angles(r: &Mat3) -> [f64; 3] {
    let beta = (-r[2][0]).clamp(-1.0, 1.0).asin();
    let alpha = r[2][1].atan2(r[2][2]);
    let gamma = r[1][0].atan2(r[0][0]);
    [-alpha, -beta, gamma]
}

/// Weak-perspective image of a reference face.
///
/// Returns pixel coordinates (v grows downward) for the given rotation,
/// pixel scale per face unit, and image position of the face-frame origin.
pub fn project_face(face: &ReferenceFace, rotation: HeadRotation, scale: f64, origin: Point2) -> [Point2; 7] {
    let r = rotation_matrix(rotation.as_array().map(f64::to_radians));
    face.points().map(|p| {
        let x: f64 = (0..3).map(|k| r[0][k] * p[k]).sum();
        let y: f64 = (0..3).map(|k| r[1][k] * p[k]).sum();
        Point2::new(origin.x + scale * x, origin.y - scale * y)
    })
}

/// Fitted pose: rotation plus the weak-perspective scale (pixels per face unit).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseFit {
    pub rotation: HeadRotation,
    pub scale: f64,
    /// Root-mean-square reprojection error, pixels.
    pub rms_px: f64,
    pub iterations: usize,
}

const FIT_STEP_TOL: f64 = 1e-8;
const FIT_MAX_ITER: usize = 100;

/// Estimate head rotation from merged landmarks.
///
/// Minimises the squared pixel error of a weak-perspective projection of
/// `face` over rotation, uniform scale and image translation. Translation and
/// scale are solved in closed form; the rotation is initialised from an
/// orthonormalised affine camera and refined with Levenberg-Marquardt.
pub fn estimate_rotation(frame: &MergedFrame, face: &ReferenceFace) -> Result<HeadRotation> {
    fit_pose(&frame.points, face).map(|f| f.rotation)
}

/// Full pose fit; see [`estimate_rotation`].
pub fn fit_pose(points: &[Point2; 7], face: &ReferenceFace) -> Result<PoseFit> {
    let obs: Vec<[f64; 2]> = points.iter().map(|p| [p.x, -p.y]).collect();
    if obs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateLandmarks("non-finite landmark coordinate".into()));
    }
    let interocular = points[LandmarkRole::RightEyeOuter.index()].dist(points[LandmarkRole::LeftEyeOuter.index()]);
    let spread = {
        let c = center2(&obs);
        let s = scatter2(&c);
        let tr = s[0][0] + s[1][1];
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        if tr <= 0.0 {
            return Err(Error::DegenerateLandmarks("all landmarks coincide".into()));
        }
        // ratio of the smaller to the larger principal spread
        let disc = ((tr * tr / 4.0) - det).max(0.0).sqrt();
        let hi = tr / 2.0 + disc;
        let lo = (tr / 2.0 - disc).max(0.0);
        if lo / hi < 1e-10 {
            return Err(Error::DegenerateLandmarks("landmarks are collinear".into()));
        }
        hi.sqrt()
    };
    if interocular < 1e-9 * spread.max(1.0) {
        return Err(Error::DegenerateLandmarks("zero inter-ocular distance".into()));
    }

    let model = center3(&face.points());
    let w = center2(&obs);

    let mut angles = affine_initialisation(&model, &w)?;
    let mut cost = reduced_cost(&model, &w, angles);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < FIT_MAX_ITER {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&model, &w, angles);
        let mut accepted = false;
        let mut step_norm = 0.0;
        for _ in 0..30 {
            let mut a = jtj;
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += lambda * (jtj[i][i].max(1e-12));
            }
            let Some(step) = solve3(&a, &jtr.map(|v| -v)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [angles[0] + step[0], angles[1] + step[1], angles[2] + step[2]];
            let trial_cost = reduced_cost(&model, &w, trial);
            step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
            if trial_cost <= cost {
                angles = trial;
                cost = trial_cost;
                lambda = (lambda * 0.1).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
            if step_norm < FIT_STEP_TOL {
                break;
            }
        }
        if !accepted || step_norm < FIT_STEP_TOL {
            break;
        }
    }

    let scale = optimal_scale(&model, &w, angles);
    if !(scale > 0.0) || !cost.is_finite() {
        return Err(Error::DegenerateLandmarks("no valid weak-perspective fit".into()));
    }
    let angles = wrap_angles(angles);
    Ok(PoseFit {
        rotation: HeadRotation::new(angles[0].to_degrees(), angles[1].to_degrees(), angles[2].to_degrees()),
        scale,
        rms_px: (cost / 7.0).sqrt(),
        iterations,
    })
}

fn wrap_angles(a: [f64; 3]) -> [f64; 3] {
    // Canonical Euler triple via the matrix round trip.
    matrix_angles(&rotation_matrix(a))
}

fn center3(p: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let n = p.len() as f64;
    let mut m = [0.0; 3];
    for q in p {
        for k in 0..3 {
            m[k] += q[k] / n;
        }
    }
    p.iter().map(|q| [q[0] - m[0], q[1] - m[1], q[2] - m[2]]).collect()
}

fn center2(p: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = p.len() as f64;
    let mx = p.iter().map(|q| q[0]).sum::<f64>() / n;
    let my = p.iter().map(|q| q[1]).sum::<f64>() / n;
    p.iter().map(|q| [q[0] - mx, q[1] - my]).collect()
}

fn scatter2(p: &[[f64; 2]]) -> [[f64; 2]; 2] {
    let mut s = [[0.0; 2]; 2];
    for q in p {
        for i in 0..2 {
            for j in 0..2 {
                s[i][j] += q[i] * q[j];
            }
        }
    }
    s
}

fn scatter3(p: &[[f64; 3]]) -> Mat3 {
    let mut s = [[0.0; 3]; 3];
    for q in p {
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] += q[i] * q[j];
            }
        }
    }
    s
}

fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn solve3(a: &Mat3, b: &[f64; 3]) -> Option<[f64; 3]> {
    let d = det3(a);
    if d.abs() < 1e-300 || !d.is_finite() {
        return None;
    }
    let mut x = [0.0; 3];
    for (col, xi) in x.iter_mut().enumerate() {
        let mut m = *a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        *xi = det3(&m) / d;
    }
    Some(x)
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (n > 1e-12).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

/// Least-squares affine camera `w ≈ A X`, orthonormalised into a rotation.
fn affine_initialisation(model: &[[f64; 3]], w: &[[f64; 2]]) -> Result<[f64; 3]> {
    let xxt = scatter3(model);
    let mut a = [[0.0; 3]; 2];
    for (row, a_row) in a.iter_mut().enumerate() {
        let mut wxt = [0.0; 3];
        for (x, o) in model.iter().zip(w) {
            for k in 0..3 {
                wxt[k] += o[row] * x[k];
            }
        }
        // row of A solves (X Xᵀ) aᵀ = X wᵀ, X Xᵀ being symmetric
        *a_row = solve3(&xxt, &wxt).ok_or_else(|| Error::DegenerateLandmarks("singular reference geometry".into()))?;
    }
    let r1 = normalize(a[0]).ok_or_else(|| Error::DegenerateLandmarks("degenerate affine fit".into()))?;
    let dot: f64 = (0..3).map(|k| a[1][k] * r1[k]).sum();
    let r2 = normalize([a[1][0] - dot * r1[0], a[1][1] - dot * r1[1], a[1][2] - dot * r1[2]])
        .ok_or_else(|| Error::DegenerateLandmarks("degenerate affine fit".into()))?;
    let r3 = cross(r1, r2);
    Ok(matrix_angles(&[r1, r2, r3]))
}

fn projected(model: &[[f64; 3]], angles: [f64; 3]) -> Vec<[f64; 2]> {
    let r = rotation_matrix(angles);
    model
        .iter()
        .map(|p| {
            [
                r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2],
                r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
            ]
        })
        .collect()
}

fn optimal_scale(model: &[[f64; 3]], w: &[[f64; 2]], angles: [f64; 3]) -> f64 {
    let q = projected(model, angles);
    let num: f64 = q.iter().zip(w).map(|(a, b)| a[0] * b[0] + a[1] * b[1]).sum();
    let den: f64 = q.iter().map(|a| a[0] * a[0] + a[1] * a[1]).sum();
    num / den
}

fn residuals(model: &[[f64; 3]], w: &[[f64; 2]], angles: [f64; 3]) -> Vec<f64> {
    let q = projected(model, angles);
    let num: f64 = q.iter().zip(w).map(|(a, b)| a[0] * b[0] + a[1] * b[1]).sum();
    let den: f64 = q.iter().map(|a| a[0] * a[0] + a[1] * a[1]).sum();
    let s = num / den;
    q.iter()
        .zip(w)
        .flat_map(|(a, b)| [s * a[0] - b[0], s * a[1] - b[1]])
        .collect()
}

fn reduced_cost(model: &[[f64; 3]], w: &[[f64; 2]], angles: [f64; 3]) -> f64 {
    residuals(model, w, angles).iter().map(|r| r * r).sum()
}

fn normal_equations(model: &[[f64; 3]], w: &[[f64; 2]], angles: [f64; 3]) -> (Mat3, [f64; 3]) {
    const H: f64 = 1e-6;
    let r0 = residuals(model, w, angles);
    let mut jac = vec![[0.0; 3]; r0.len()];
    for k in 0..3 {
        let mut plus = angles;
        let mut minus = angles;
        plus[k] += H;
        minus[k] -= H;
        let rp = residuals(model, w, plus);
        let rm = residuals(model, w, minus);
        for (row, (p, m)) in jac.iter_mut().zip(rp.iter().zip(&rm)) {
            row[k] = (p - m) / (2.0 * H);
        }
    }
    let mut jtj = [[0.0; 3]; 3];
    let mut jtr = [0.0; 3];
    for (row, r) in jac.iter().zip(&r0) {
        for i in 0..3 {
            jtr[i] += row[i] * r;
            for j in 0..3 {
                jtj[i][j] += row[i] * row[j];
            }
        }
    }
    (jtj, jtr)
}

/// Per-reason counts from a reduction run. The four counts partition the input frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionSummary {
    /// Frames that produced a rotation estimate.
    pub merged: usize,
    pub excluded_disagreement: usize,
    pub excluded_missing: usize,
    pub excluded_degenerate: usize,
}

/// A frame's rotation estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRotation {
    pub frame_id: u64,
    pub rotation: HeadRotation,
}

/// Merge, filter and estimate every frame.
pub fn reduce_frames(
    frames: &[LandmarkFrame],
    face: &ReferenceFace,
    threshold_px: f64,
) -> Result<(Vec<FrameRotation>, ReductionSummary)> {
    face.validate()?;
    let outcomes: Vec<Result<std::result::Result<FrameRotation, Option<Exclusion>>>> = frames
        .par_iter()
        .map(|f| {
            Ok(match merge_annotations(f, threshold_px)? {
                MergeOutcome::Excluded(e) => Err(Some(e)),
                MergeOutcome::Merged(m) => match estimate_rotation(&m, face) {
                    Ok(rotation) => Ok(FrameRotation { frame_id: m.frame_id, rotation }),
                    Err(Error::DegenerateLandmarks(_)) => Err(None),
                    Err(e) => return Err(e),
                },
            })
        })
        .collect();
    let mut summary = ReductionSummary::default();
    let mut rotations = Vec::new();
    for o in outcomes {
        match o? {
            Ok(r) => {
                summary.merged += 1;
                rotations.push(r);
            }
            Err(Some(Exclusion::Disagreement)) => summary.excluded_disagreement += 1,
            Err(Some(Exclusion::Missing)) => summary.excluded_missing += 1,
            Err(None) => summary.excluded_degenerate += 1,
        }
    }
    Ok((rotations, summary))
}

/// Parse landmark CSV with columns
/// `frame_id, analyst_id, landmark_role, x_px, y_px, missing_flag`.
///
/// Frames come back ordered by `frame_id`, analysts by `analyst_id`. Every
/// analyst of a frame must supply all seven roles (a point or a missing flag).
pub fn parse_landmark_csv(text: &str) -> Result<Vec<LandmarkFrame>> {
    const COLS: [&str; 6] = ["frame_id", "analyst_id", "landmark_role", "x_px", "y_px", "missing_flag"];
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(COLS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("missing required column '{name}'")))?;
    }

    type Slots = [Option<Option<Point2>>; 7];
    let mut frames: BTreeMap<u64, BTreeMap<String, Slots>> = BTreeMap::new();
    let mut problems = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                problems.push(RowProblem { row, message: e.to_string() });
                continue;
            }
        };
        let get = |k: usize| rec.get(idx[k]).unwrap_or("");
        let parsed = (|| -> std::result::Result<(u64, String, LandmarkRole, Option<Point2>), String> {
            let frame: u64 = get(0).parse().map_err(|_| format!("invalid frame_id '{}'", get(0)))?;
            let analyst = get(1).to_string();
            if analyst.is_empty() {
                return Err("empty analyst_id".into());
            }
            let role: LandmarkRole = get(2).parse().map_err(|e: Error| e.to_string())?;
            let missing = match get(5).to_ascii_lowercase().as_str() {
                "" | "0" | "false" => false,
                "1" | "true" => true,
                other => return Err(format!("invalid missing_flag '{other}'")),
            };
            let point = if missing {
                None
            } else {
                let x: f64 = get(3).parse().map_err(|_| format!("invalid x_px '{}'", get(3)))?;
                let y: f64 = get(4).parse().map_err(|_| format!("invalid y_px '{}'", get(4)))?;
                if !x.is_finite() || !y.is_finite() {
                    return Err("non-finite pixel coordinate".into());
                }
                Some(Point2::new(x, y))
            };
            Ok((frame, analyst, role, point))
        })();
        match parsed {
            Ok((frame, analyst, role, point)) => {
                let slots = frames.entry(frame).or_default().entry(analyst).or_insert([None; 7]);
                if slots[role.index()].is_some() {
                    problems.push(RowProblem { row, message: format!("duplicate {} for frame {frame}", role.as_str()) });
                } else {
                    slots[role.index()] = Some(point);
                }
            }
            Err(message) => problems.push(RowProblem { row, message }),
        }
    }
    if !problems.is_empty() {
        return Err(Error::rows(problems));
    }

    let mut out = Vec::with_capacity(frames.len());
    for (frame_id, analysts) in frames {
        let mut annotations = Vec::with_capacity(analysts.len());
        for (analyst, slots) in analysts {
            if let Some(role) = LandmarkRole::ALL.iter().find(|r| slots[r.index()].is_none()) {
                return Err(Error::Config(format!(
                    "frame {frame_id}, analyst {analyst}: no entry for {}",
                    role.as_str()
                )));
            }
            annotations.push(slots.map(|s| s.flatten()));
        }
        out.push(LandmarkFrame { frame_id, analysts: annotations });
    }
    Ok(out)
}

pub fn load_landmarks(path: impl AsRef<Path>) -> Result<Vec<LandmarkFrame>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_landmark_csv(&text)
}

/// A rotation estimate with its capture time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedRotation {
    pub timestamp_ms: i64,
    pub rotation: HeadRotation,
}

/// A coded glance covering `[start_ms, end_ms]` (both ends inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlanceSpan {
    pub start_ms: i64,
    pub end_ms: i64,
    pub glance: GlanceRegion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledStream {
    pub dataset: Dataset,
    /// Rotations outside every glance span.
    pub dropped: usize,
}

/// Label each rotation with the glance span containing its timestamp.
///
/// Both inputs must be sorted by time; spans may not overlap (touching
/// endpoints count as overlap since the ends are inclusive).
pub fn merge_glance_labels(
    subject_id: &str,
    task_id: &str,
    rotations: &[TimedRotation],
    spans: &[GlanceSpan],
) -> Result<LabelledStream> {
    for s in spans {
        if s.end_ms < s.start_ms {
            return Err(Error::Precondition(format!("glance span [{}, {}] is reversed", s.start_ms, s.end_ms)));
        }
    }
    for w in spans.windows(2) {
        if w[1].start_ms < w[0].start_ms {
            return Err(Error::Precondition("glance spans are not sorted by start time".into()));
        }
        if w[1].start_ms <= w[0].end_ms {
            return Err(Error::OverlappingSpans(w[1].start_ms));
        }
    }
    if rotations.windows(2).any(|w| w[1].timestamp_ms <= w[0].timestamp_ms) {
        return Err(Error::Precondition("rotations are not strictly increasing in time".into()));
    }

    let subject: std::sync::Arc<str> = subject_id.into();
    let task: std::sync::Arc<str> = task_id.into();
    let mut samples = Vec::new();
    let mut dropped = 0;
    let mut j = 0;
    for r in rotations {
        while j < spans.len() && spans[j].end_ms < r.timestamp_ms {
            j += 1;
        }
        match spans.get(j) {
            Some(span) if span.start_ms <= r.timestamp_ms => samples.push(RotationSample {
                subject_id: subject.clone(),
                task_id: task.clone(),
                timestamp_ms: r.timestamp_ms,
                rot_x: r.rotation.rot_x,
                rot_y: r.rotation.rot_y,
                rot_z: r.rotation.rot_z,
                glance: span.glance,
            }),
            _ => dropped += 1,
        }
    }
    let dataset = Dataset::new(samples, format!("{subject_id}/{task_id}"))?;
    Ok(LabelledStream { dataset, dropped })
}
