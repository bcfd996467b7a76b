//! Per-driver yaw profiles during one task and their population correlation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{csv_field, Dataset, GlanceRegion};
use crate::error::{Error, Result};
use crate::format::fixed6;

/// How the width of a yaw distribution is measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RangeKind {
    /// Width between two linear-interpolation percentiles (0..=100).
    Percentile { low: f64, high: f64 },
    MinMax,
}

impl Default for RangeKind {
    fn default() -> Self {
        RangeKind::Percentile { low: 5.0, high: 95.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoverThresholds {
    pub range_deg: f64,
    pub diff_deg: f64,
}

impl Default for MoverThresholds {
    fn default() -> Self {
        MoverThresholds { range_deg: 10.0, diff_deg: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub range: RangeKind,
    /// Both region counts must reach this before a mover type is assigned.
    pub min_count: usize,
    pub thresholds: MoverThresholds,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig { range: RangeKind::default(), min_count: 10, thresholds: MoverThresholds::default() }
    }
}

impl ProfileConfig {
    pub fn validate(&self) -> Result<()> {
        if let RangeKind::Percentile { low, high } = self.range {
            if !(0.0..=100.0).contains(&low) || !(0.0..=100.0).contains(&high) || low >= high {
                return Err(Error::Config(format!("percentile range [{low}, {high}] must satisfy 0 <= low < high <= 100")));
            }
        }
        let t = self.thresholds;
        if !(t.range_deg >= 0.0 && t.diff_deg >= 0.0) {
            return Err(Error::Config("mover thresholds must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoverType {
    Owl,
    Lizard,
    Unassigned,
}

impl MoverType {
    pub fn as_str(self) -> &'static str {
        match self {
            MoverType::Owl => "owl",
            MoverType::Lizard => "lizard",
            MoverType::Unassigned => "unassigned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: Arc<str>,
    /// Width of rot_y during target-region glances, degrees.
    pub y_range: f64,
    /// |mean rot_y on target - mean rot_y on forward|, degrees.
    pub y_mean_diff: f64,
    pub target_count: usize,
    pub forward_count: usize,
    pub mover_type: MoverType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExclusionReason {
    NoTargetGlances,
    NoForwardGlances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSet {
    pub task: String,
    pub target: GlanceRegion,
    pub profiles: Vec<SubjectProfile>,
    pub excluded: Vec<(Arc<str>, ExclusionReason)>,
}

/// Linear-interpolation percentile of sorted values, `p` in 0..=100.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Width of a non-empty value set.
pub fn value_range(values: &[f64], kind: RangeKind) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match kind {
        RangeKind::MinMax => v[v.len() - 1] - v[0],
        RangeKind::Percentile { low, high } => percentile(&v, high) - percentile(&v, low),
    }
}

/// Mean over values summed in sorted order, so the result ignores input order.
fn stable_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Two-threshold owl/lizard rule.
pub fn classify_mover(y_range: f64, y_mean_diff: f64, t: &MoverThresholds) -> MoverType {
    if y_range < t.range_deg && y_mean_diff < t.diff_deg {
        MoverType::Lizard
    } else if y_range > t.range_deg && y_mean_diff > t.diff_deg {
        MoverType::Owl
    } else {
        MoverType::Unassigned
    }
}

/// One profile per subject that glanced at `target` during `task`.
pub fn profile_subjects(ds: &Dataset, task: &str, target: GlanceRegion, config: &ProfileConfig) -> Result<ProfileSet> {
    config.validate()?;
    if target == GlanceRegion::Forward {
        return Err(Error::Precondition("target region must differ from forward".into()));
    }
    let mut per_subject: BTreeMap<Arc<str>, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for s in ds.samples().iter().filter(|s| &*s.task_id == task) {
        let entry = per_subject.entry(s.subject_id.clone()).or_default();
        if s.glance == target {
            entry.0.push(s.rot_y);
        } else if s.glance == GlanceRegion::Forward {
            entry.1.push(s.rot_y);
        }
    }
    if per_subject.is_empty() {
        return Err(Error::Precondition(format!("dataset has no samples for task '{task}'")));
    }
    let outcomes: Vec<(Arc<str>, std::result::Result<SubjectProfile, ExclusionReason>)> = per_subject
        .into_par_iter()
        .map(|(subject, (tv, fv))| {
            let outcome = if tv.is_empty() {
                Err(ExclusionReason::NoTargetGlances)
            } else if fv.is_empty() {
                Err(ExclusionReason::NoForwardGlances)
            } else {
                let y_range = value_range(&tv, config.range);
                let y_mean_diff = (stable_mean(&tv) - stable_mean(&fv)).abs();
                let mover_type = if tv.len() >= config.min_count && fv.len() >= config.min_count {
                    classify_mover(y_range, y_mean_diff, &config.thresholds)
                } else {
                    MoverType::Unassigned
                };
                Ok(SubjectProfile {
                    subject_id: subject.clone(),
                    y_range,
                    y_mean_diff,
                    target_count: tv.len(),
                    forward_count: fv.len(),
                    mover_type,
                })
            };
            (subject, outcome)
        })
        .collect();
    let mut profiles = Vec::new();
    let mut excluded = Vec::new();
    for (subject, o) in outcomes {
        match o {
            Ok(p) => profiles.push(p),
            Err(reason) => excluded.push((subject, reason)),
        }
    }
    if profiles.is_empty() {
        return Err(Error::Precondition(format!("no subject glanced at {target} during task '{task}'")));
    }
    Ok(ProfileSet { task: task.to_string(), target, profiles, excluded })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub n: usize,
    pub df: usize,
    pub t: f64,
    /// Two-sided, from Student's t with n - 2 degrees of freedom.
    pub p_value: f64,
    pub p_flag: &'static str,
}

fn p_flag(p: f64) -> &'static str {
    if p < 0.001 {
        "p < .001"
    } else if p < 0.01 {
        "p < .01"
    } else if p < 0.05 {
        "p < .05"
    } else {
        "n.s."
    }
}

/// Pearson correlation with a two-sided t-test.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::Precondition("correlation inputs differ in length".into()));
    }
    if n < 3 {
        return Err(Error::Precondition(format!("correlation needs at least 3 points, got {n}")));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if !(sxx > 0.0) {
        return Err(Error::UndefinedCorrelation("first variable has zero variance"));
    }
    if !(syy > 0.0) {
        return Err(Error::UndefinedCorrelation("second variable has zero variance"));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = n - 2;
    let (t, p) = if r.abs() == 1.0 {
        (f64::INFINITY.copysign(r), 0.0)
    } else {
        let t = r * (df as f64 / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
        (t, 2.0 * (1.0 - dist.cdf(t.abs())))
    };
    Ok(Correlation { r, n, df, t, p_value: p, p_flag: p_flag(p) })
}

/// Correlation between y_range and y_mean_diff across profiles.
pub fn correlate_profiles(profiles: &[SubjectProfile]) -> Result<Correlation> {
    let xs: Vec<f64> = profiles.iter().map(|p| p.y_range).collect();
    let ys: Vec<f64> = profiles.iter().map(|p| p.y_mean_diff).collect();
    pearson(&xs, &ys)
}

/// Plot-ready profile table: x = y_mean_diff, y = y_range, label = subject_id.
pub fn profiles_csv(set: &ProfileSet) -> String {
    let mut out = String::from("subject_id,y_mean_diff,y_range,target_count,forward_count,mover_type\n");
    for p in &set.profiles {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            csv_field(&p.subject_id),
            fixed6(p.y_mean_diff),
            fixed6(p.y_range),
            p.target_count,
            p.forward_count,
            p.mover_type.as_str()
        );
    }
    out
}

/// Yaw trace of one subject during one task, in timestamp order.
pub fn time_series_csv(ds: &Dataset, subject: &str, task: &str) -> String {
    let mut rows: Vec<_> = ds.samples().iter().filter(|s| &*s.subject_id == subject && &*s.task_id == task).collect();
    rows.sort_by_key(|s| s.timestamp_ms);
    let mut out = String::from("timestamp_ms,rot_y,glance\n");
    for s in rows {
        let _ = writeln!(out, "{},{},{}", s.timestamp_ms, fixed6(s.rot_y), s.glance);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::sample;
    use GlanceRegion::{CenterStack as C, Forward as F};

    #[test]
    fn constant_target_yaw() {
        let mut rows = Vec::new();
        for t in 0..5 {
            rows.push(sample("s1", "radio", t, [0.0, 8.0, 0.0], C));
        }
        for t in 0..5 {
            rows.push(sample("s1", "radio", 100 + t, [0.0, 1.0, 0.0], F));
        }
        let ds = Dataset::new(rows, "t").unwrap();
        let set = profile_subjects(&ds, "radio", C, &ProfileConfig::default()).unwrap();
        assert_eq!(set.profiles.len(), 1);
        assert_eq!(set.profiles[0].y_range, 0.0);
        assert_eq!(set.profiles[0].y_mean_diff, 7.0);
        // counts below the minimum leave the type unassigned
        assert_eq!(set.profiles[0].mover_type, MoverType::Unassigned);
    }

    #[test]
    fn subject_without_target_glances_is_excluded() {
        let ds = Dataset::new(
            vec![
                sample("s1", "radio", 0, [0.0, 8.0, 0.0], C),
                sample("s1", "radio", 1, [0.0, 1.0, 0.0], F),
                sample("s2", "radio", 0, [0.0, 1.0, 0.0], F),
            ],
            "t",
        )
        .unwrap();
        let set = profile_subjects(&ds, "radio", C, &ProfileConfig::default()).unwrap();
        assert_eq!(set.excluded, vec![(Arc::from("s2"), ExclusionReason::NoTargetGlances)]);
        assert!(profile_subjects(&ds, "other-task", C, &ProfileConfig::default()).is_err());
    }

    #[test]
    fn range_definitions() {
        let v = [-3.0, 2.0, 7.0];
        assert_eq!(value_range(&v, RangeKind::MinMax), 10.0);
        assert!((value_range(&v, RangeKind::default()) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn mover_examples() {
        let t = MoverThresholds::default();
        assert_eq!(classify_mover(6.0, 1.05, &t), MoverType::Lizard);
        assert_eq!(classify_mover(25.0, 15.0, &t), MoverType::Owl);
        assert_eq!(classify_mover(25.0, 2.0, &t), MoverType::Unassigned);
    }

    #[test]
    fn pearson_line_and_hand_computation() {
        let c = pearson(&[1.0, 2.0, 3.0, 4.0], &[3.0, 5.0, 7.0, 9.0]).unwrap();
        assert!((c.r - 1.0).abs() < 1e-12);
        // hand-picked points; direct summation formula
        let xs = [1.0, 2.0, 4.0, 5.0, 8.0];
        let ys = [2.0, 1.0, 5.0, 4.0, 9.0];
        let n = 5.0;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
        let sxx: f64 = xs.iter().map(|a| a * a).sum();
        let syy: f64 = ys.iter().map(|a| a * a).sum();
        let want = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
        let got = pearson(&xs, &ys).unwrap();
        assert!((got.r - want).abs() < 1e-12);
        assert_eq!(got.df, 3);
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn p_value_matches_reference() {
        // r = 0.73 with 19 degrees of freedom is far below .001
        let r: f64 = 0.73;
        let t = r * (19.0 / (1.0 - r * r)).sqrt();
        let p = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, 19.0).unwrap().cdf(t));
        assert!(p < 0.001 && p > 1e-5, "{p}");
        assert_eq!(p_flag(p), "p < .001");
    }
}
