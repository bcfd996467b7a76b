//! Normalisation, subject-wise Monte-Carlo splits and class balancing.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GlanceRegion};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

const AXES: [&str; 3] = ["rot_x", "rot_y", "rot_z"];

/// Per-axis z-score parameters (population standard deviation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

/// Which samples the normaliser is fitted on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeScope {
    /// Training fold only (no leakage into the test fold).
    #[default]
    Train,
    /// Every sample of the evaluated dataset.
    All,
}

/// Pooled mean and standard deviation of each rotation axis.
pub fn fit_normalizer(train: &Dataset) -> Result<NormalizationParams> {
    if train.is_empty() {
        return Err(Error::Precondition("cannot fit a normaliser on an empty dataset".into()));
    }
    let n = train.len() as f64;
    let mut mean = [0.0; 3];
    for s in train.samples() {
        for (m, v) in mean.iter_mut().zip(s.rotation()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; 3];
    for s in train.samples() {
        for k in 0..3 {
            let d = s.rotation()[k] - mean[k];
            var[k] += d * d;
        }
    }
    let mut std = [0.0; 3];
    for k in 0..3 {
        std[k] = (var[k] / n).sqrt();
        if !(std[k] > 0.0) || !std[k].is_finite() {
            return Err(Error::ZeroVariance(AXES[k]));
        }
    }
    Ok(NormalizationParams { mean, std })
}

/// Replace every rotation by its z-score; labels and timestamps are untouched.
pub fn apply_normalizer(ds: &Dataset, p: &NormalizationParams) -> Dataset {
    ds.map_rotations(|r| std::array::from_fn(|k| (r[k] - p.mean[k]) / p.std[k]))
}

/// Monte-Carlo resampling plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitPlan {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_iterations() -> usize {
    50
}

fn default_train_fraction() -> f64 {
    0.8
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            iterations: default_iterations(),
            train_fraction: default_train_fraction(),
            seed: 0,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        Ok(())
    }

    /// Training subject count: round-half-up of `fraction * n`, clamped to `[1, n-1]`.
    pub fn train_subject_count(&self, n: usize) -> usize {
        let raw = (self.train_fraction * n as f64 + 0.5).floor() as usize;
        raw.clamp(1, n.saturating_sub(1).max(1))
    }
}

/// One Monte-Carlo partition of a dataset by subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSplit {
    pub train: Dataset,
    pub test: Dataset,
    pub train_subjects: BTreeSet<Arc<str>>,
    pub test_subjects: BTreeSet<Arc<str>>,
}

/// Partition subjects for `iteration` of `plan`.
///
/// Deterministic in `(plan.seed, iteration)`; sample order (hence per-subject
/// timestamp order) is preserved inside both folds.
pub fn split_subjects(ds: &Dataset, plan: &SplitPlan, iteration: usize) -> Result<SubjectSplit> {
    plan.validate()?;
    let n = ds.subjects().len();
    if n < 2 {
        return Err(Error::Precondition(format!("subject split needs at least 2 subjects, found {n}")));
    }
    let n_train = plan.train_subject_count(n);
    if n_train == 0 || n_train >= n {
        return Err(Error::Precondition("subject split leaves an empty fold".into()));
    }
    let mut subjects: Vec<Arc<str>> = ds.subjects().iter().cloned().collect();
    let mut rng = stream(plan.seed, Purpose::Split, iteration as u64);
    subjects.shuffle(&mut rng);
    let train_subjects: BTreeSet<Arc<str>> = subjects[..n_train].iter().cloned().collect();
    let test_subjects: BTreeSet<Arc<str>> = subjects[n_train..].iter().cloned().collect();
    let train = ds.retain(|s| train_subjects.contains(&s.subject_id));
    let test = ds.retain(|s| test_subjects.contains(&s.subject_id));
    Ok(SubjectSplit { train, test, train_subjects, test_subjects })
}

/// Subsample the majority of `class_a`/`class_b` without replacement down to
/// the minority count. Minority samples and samples of other classes are kept;
/// order is preserved.
pub fn balance(ds: &Dataset, class_a: GlanceRegion, class_b: GlanceRegion, seed: u64) -> Result<Dataset> {
    let count_a = ds.count_label(class_a);
    let count_b = ds.count_label(class_b);
    for (c, n) in [(class_a, count_a), (class_b, count_b)] {
        if n == 0 {
            return Err(Error::Precondition(format!("class {c} is absent; cannot balance")));
        }
    }
    if count_a == count_b {
        return Ok(ds.clone());
    }
    let (major, n_major, n_minor) = if count_a > count_b {
        (class_a, count_a, count_b)
    } else {
        (class_b, count_b, count_a)
    };
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut keep = vec![false; n_major];
    for i in index::sample(&mut rng, n_major, n_minor) {
        keep[i] = true;
    }
    let mut k = 0;
    Ok(ds.retain(|s| {
        if s.glance == major {
            k += 1;
            keep[k - 1]
        } else {
            true
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RotationSample;
    use proptest::prelude::*;

    fn ds_from(rows: &[(&str, i64, [f64; 3], GlanceRegion)]) -> Dataset {
        Dataset::new(
            rows.iter()
                .map(|(s, t, r, g)| RotationSample {
                    subject_id: (*s).into(),
                    task_id: "t".into(),
                    timestamp_ms: *t,
                    rot_x: r[0],
                    rot_y: r[1],
                    rot_z: r[2],
                    glance: *g,
                })
                .collect(),
            "mem",
        )
        .unwrap()
    }

    fn skewed(n_major: usize, n_minor: usize, subjects: usize) -> Dataset {
        let mut rows = Vec::new();
        for i in 0..(n_major + n_minor) {
            let g = if i % (n_major + n_minor) < n_minor { GlanceRegion::CenterStack } else { GlanceRegion::Forward };
            rows.push((i, g));
        }
        let names: Vec<String> = (0..subjects).map(|s| format!("s{s:02}")).collect();
        let tuples: Vec<_> = rows
            .iter()
            .map(|(i, g)| (names[i % subjects].as_str(), *i as i64, [*i as f64 % 7.0, 1.0, -1.0], *g))
            .collect();
        ds_from(&tuples)
    }

    #[test]
    fn two_point_mean_and_population_std() {
        let ds = ds_from(&[
            ("a", 0, [1.0, 8.0, 3.0], GlanceRegion::Forward),
            ("b", 0, [2.0, 12.0, 4.0], GlanceRegion::Forward),
        ]);
        let p = fit_normalizer(&ds).unwrap();
        assert_eq!(p.mean[1], 10.0);
        assert_eq!(p.std[1], 2.0);
    }

    #[test]
    fn constant_axis_is_zero_variance() {
        let ds = ds_from(&[
            ("a", 0, [1.0, 8.0, 3.0], GlanceRegion::Forward),
            ("b", 0, [2.0, 12.0, 3.0], GlanceRegion::Forward),
        ]);
        assert!(matches!(fit_normalizer(&ds), Err(Error::ZeroVariance("rot_z"))));
    }

    #[test]
    fn apply_maps_to_z_scores() {
        let p = NormalizationParams { mean: [10.0; 3], std: [2.0; 3] };
        let ds = ds_from(&[
            ("a", 0, [12.0, 10.0, 8.0], GlanceRegion::Forward),
        ]);
        let z = apply_normalizer(&ds, &p);
        assert_eq!(z.samples()[0].rotation(), [1.0, 0.0, -1.0]);
        assert_eq!(z.samples()[0].timestamp_ms, 0);
        assert_eq!(z.samples()[0].glance, GlanceRegion::Forward);
    }

    #[test]
    fn normalising_twice_differs_from_once() {
        // values 1, 2, 6 on every axis: mean 3, population std sqrt(14/3)
        let ds = ds_from(&[
            ("a", 0, [1.0; 3], GlanceRegion::Forward),
            ("a", 1, [2.0; 3], GlanceRegion::Forward),
            ("a", 2, [6.0; 3], GlanceRegion::Forward),
        ]);
        let p = fit_normalizer(&ds).unwrap();
        let once = apply_normalizer(&ds, &p);
        let twice = apply_normalizer(&once, &p);
        let s = (14.0f64 / 3.0).sqrt();
        let expected_once = (1.0 - 3.0) / s;
        let expected_twice = (expected_once - 3.0) / s;
        assert!((once.samples()[0].rot_x - expected_once).abs() < 1e-12);
        assert!((twice.samples()[0].rot_x - expected_twice).abs() < 1e-12);
        assert_ne!(once, twice);
    }

    #[test]
    fn split_sizes_follow_rounding_rule() {
        let plan = SplitPlan { iterations: 50, train_fraction: 0.8, seed: 1 };
        assert_eq!(plan.train_subject_count(22), 18);
        assert_eq!(plan.train_subject_count(2), 1);
        let half = SplitPlan { train_fraction: 0.5, ..plan };
        assert_eq!(half.train_subject_count(2), 1);
        assert_eq!(half.train_subject_count(5), 3);
        let tiny = SplitPlan { train_fraction: 0.01, ..plan };
        assert_eq!(tiny.train_subject_count(10), 1);
        let huge = SplitPlan { train_fraction: 0.99, ..plan };
        assert_eq!(huge.train_subject_count(10), 9);

        let ds = skewed(200, 20, 22);
        let split = split_subjects(&ds, &plan, 0).unwrap();
        assert_eq!(split.train_subjects.len(), 18);
        assert_eq!(split.test_subjects.len(), 4);
        assert_eq!(split.train.len() + split.test.len(), ds.len());
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ds = skewed(300, 30, 22);
        let plan = SplitPlan { iterations: 50, train_fraction: 0.8, seed: 99 };
        let a = split_subjects(&ds, &plan, 7).unwrap();
        let b = split_subjects(&ds, &plan, 7).unwrap();
        assert_eq!(a, b);
        let mut distinct = BTreeSet::new();
        for it in 0..plan.iterations {
            let s = split_subjects(&ds, &plan, it).unwrap();
            assert!(s.train_subjects.is_disjoint(&s.test_subjects));
            assert!(s.train.samples().windows(2).all(|w| w[0].timestamp_ms < w[1].timestamp_ms));
            distinct.insert(s.test_subjects.iter().cloned().collect::<Vec<_>>());
        }
        assert!(distinct.len() > 40, "splits should vary across iterations");
    }

    #[test]
    fn split_needs_two_subjects() {
        let ds = skewed(10, 2, 1);
        assert!(split_subjects(&ds, &SplitPlan::default(), 0).is_err());
        let ds = skewed(10, 2, 2);
        let plan = SplitPlan { train_fraction: 0.5, ..SplitPlan::default() };
        let s = split_subjects(&ds, &plan, 0).unwrap();
        assert_eq!((s.train_subjects.len(), s.test_subjects.len()), (1, 1));
    }

    #[test]
    fn plan_validation() {
        assert!(SplitPlan { train_fraction: 1.0, ..SplitPlan::default() }.validate().is_err());
        assert!(SplitPlan { train_fraction: 0.0, ..SplitPlan::default() }.validate().is_err());
        assert!(SplitPlan { iterations: 0, ..SplitPlan::default() }.validate().is_err());
        let p: SplitPlan = serde_json::from_str(r#"{"iterations": 3, "train_fraction": 0.5, "seed": 4}"#).unwrap();
        assert_eq!(p, SplitPlan { iterations: 3, train_fraction: 0.5, seed: 4 });
    }

    #[test]
    fn balance_950_50() {
        let ds = skewed(950, 50, 5);
        let b = balance(&ds, GlanceRegion::Forward, GlanceRegion::CenterStack, 3).unwrap();
        assert_eq!(b.count_label(GlanceRegion::Forward), 50);
        assert_eq!(b.count_label(GlanceRegion::CenterStack), 50);
        // minority untouched
        let minority: Vec<_> = ds.samples().iter().filter(|s| s.glance == GlanceRegion::CenterStack).collect();
        let kept: Vec<_> = b.samples().iter().filter(|s| s.glance == GlanceRegion::CenterStack).collect();
        assert_eq!(minority, kept);
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let ds = skewed(40, 40, 4);
        let b = balance(&ds, GlanceRegion::Forward, GlanceRegion::CenterStack, 3).unwrap();
        assert_eq!(b, ds);
    }

    #[test]
    fn balance_requires_both_classes() {
        let ds = skewed(40, 0, 4);
        assert!(balance(&ds, GlanceRegion::Forward, GlanceRegion::CenterStack, 3).is_err());
    }

    proptest! {
        #[test]
        fn balance_equalises_and_only_removes(n_major in 1usize..300, n_minor in 1usize..300, seed in any::<u64>()) {
            let ds = skewed(n_major, n_minor, 3);
            let b = balance(&ds, GlanceRegion::Forward, GlanceRegion::CenterStack, seed).unwrap();
            let m = n_major.min(n_minor);
            prop_assert_eq!(b.count_label(GlanceRegion::Forward), m);
            prop_assert_eq!(b.count_label(GlanceRegion::CenterStack), m);
            // survivors appear in the original, in the original relative order, unmodified
            let mut it = ds.samples().iter();
            for s in b.samples() {
                prop_assert!(it.any(|o| o == s));
            }
        }

        #[test]
        fn normalised_train_has_unit_moments(values in proptest::collection::vec((-90.0f64..90.0, -90.0f64..90.0, -90.0f64..90.0), 3..200)) {
            let rows: Vec<_> = values.iter().enumerate().map(|(i, v)| ("s", i as i64, [v.0, v.1, v.2], GlanceRegion::Forward)).collect();
            let ds = ds_from(&rows);
            if let Ok(p) = fit_normalizer(&ds) {
                prop_assume!(p.std.iter().all(|s| *s > 1e-3));
                let z = apply_normalizer(&ds, &p);
                let q = fit_normalizer(&z).unwrap();
                for k in 0..3 {
                    prop_assert!(q.mean[k].abs() < 1e-9);
                    prop_assert!((q.std[k] - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
