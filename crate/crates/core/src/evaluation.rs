//! Metrics and the Monte-Carlo experiment harness.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{make_sequences, ClassifierKind, ClassifierParams, Feature, Label, TrainedModel};
use crate::data::{filter_binary, Dataset, GlanceRegion, RotationSample};
use crate::error::{Error, Result};
use crate::format::fixed6;
use crate::preprocess::{apply_normalizer, balance, fit_normalizer, split_subjects, NormalizeScope, SplitPlan};
use crate::rng::{derive_seed, Purpose};

/// Binary confusion counts for a designated positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    /// Count (predicted positive, truly positive) pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = ConfusionCounts::default();
        for (pred, truth) in pairs {
            match (pred, truth) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// Harmonic mean of precision and sensitivity; 0 when there are no true positives.
    pub fn f1(&self) -> f64 {
        if self.tp == 0 {
            return 0.0;
        }
        let ppv = self.tp as f64 / (self.tp + self.fp) as f64;
        let sens = self.tp as f64 / (self.tp + self.fn_) as f64;
        2.0 * ppv * sens / (ppv + sens)
    }

    /// Cohen's kappa against the true labels; 0 when chance agreement is 1.
    pub fn kappa(&self) -> f64 {
        let n = self.total() as f64;
        let (tp, fp, fn_, tn) = (self.tp as f64, self.fp as f64, self.fn_ as f64, self.tn as f64);
        let pa = (tp + tn) / n;
        let pe = ((tp + fp) * (tp + fn_) + (fn_ + tn) * (fp + tn)) / (n * n);
        if pe == 1.0 {
            0.0
        } else {
            (pa - pe) / (1.0 - pe)
        }
    }

    pub fn metrics(&self) -> Metrics {
        Metrics { accuracy: self.accuracy(), f1: self.f1(), kappa: self.kappa() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
    pub kappa: f64,
}

impl Metrics {
    pub fn mean(items: &[Metrics]) -> Metrics {
        let n = items.len() as f64;
        let sum = |f: fn(&Metrics) -> f64| items.iter().map(f).sum::<f64>() / n;
        Metrics { accuracy: sum(|m| m.accuracy), f1: sum(|m| m.f1), kappa: sum(|m| m.kappa) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// No balancing anywhere.
    Original,
    /// Training fold subsampled to equal class counts; test fold untouched.
    Balanced,
}

/// Which folds the balanced condition subsamples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BalanceScope {
    #[default]
    Train,
    /// Test fold balanced as well, with an independent draw.
    TrainAndTest,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::Original, Condition::Balanced];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Original => "original",
            Condition::Balanced => "balanced",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a predictor sees for one unit of classification.
pub struct PredictInput<'a> {
    /// Normalised features, in timestamp order.
    pub features: &'a [Feature],
    /// The raw samples behind the features. Real classifiers ignore these;
    /// test doubles may read them.
    pub samples: &'a [&'a RotationSample],
}

pub trait Predictor: Send + Sync {
    fn predict(&self, input: &PredictInput<'_>) -> Result<Label>;
}

/// Something the harness can train once per iteration.
pub trait Learner: Sync {
    fn name(&self) -> String;

    /// Sequential learners classify whole same-label runs instead of single samples.
    fn sequential(&self) -> bool;

    /// `sequence_ids` groups consecutive samples into runs; labels are class indices.
    fn fit(&self, x: &[Feature], y: &[Label], sequence_ids: &[usize], n_classes: usize, seed: u64)
        -> Result<Box<dyn Predictor>>;
}

/// One of the four in-crate classifiers.
#[derive(Debug, Clone, Copy)]
pub struct ClassifierLearner {
    pub kind: ClassifierKind,
    pub params: ClassifierParams,
}

struct ModelPredictor(TrainedModel);

impl Predictor for ModelPredictor {
    fn predict(&self, input: &PredictInput<'_>) -> Result<Label> {
        self.0.classify(input.features)
    }
}

impl Learner for ClassifierLearner {
    fn name(&self) -> String {
        self.kind.as_str().to_string()
    }

    fn sequential(&self) -> bool {
        self.kind.is_sequential()
    }

    fn fit(&self, x: &[Feature], y: &[Label], ids: &[usize], n_classes: usize, seed: u64) -> Result<Box<dyn Predictor>> {
        let model = TrainedModel::train(self.kind, x, y, ids, n_classes, &self.params, seed)?;
        Ok(Box::new(ModelPredictor(model)))
    }
}

/// Experiment description shared by every iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSetup {
    pub class_a: GlanceRegion,
    /// Positive class for FS and KP.
    pub class_b: GlanceRegion,
    pub condition: Condition,
    #[serde(default)]
    pub plan: SplitPlan,
    #[serde(default)]
    pub normalize: NormalizeScope,
    #[serde(default)]
    pub balance_scope: BalanceScope,
}

/// Split, normalisation and balancing choices shared by a sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub plan: SplitPlan,
    pub normalize: NormalizeScope,
    pub balance_scope: BalanceScope,
}

/// Invariants measured on one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationChecks {
    pub subjects_disjoint: bool,
    pub train_subjects: usize,
    pub test_subjects: usize,
    /// Largest |mean| over axes of the normalised normaliser-fitting set.
    pub normalized_mean_max_abs: f64,
    /// Largest |std - 1| over axes of the same set.
    pub normalized_std_max_dev: f64,
    /// Training counts of (class_a, class_b) after any balancing.
    pub train_counts: (usize, usize),
    /// Test counts of (class_a, class_b), in samples.
    pub test_counts: (usize, usize),
    /// Units classified (samples, or sequences for sequential learners).
    pub test_units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub confusion: ConfusionCounts,
    pub metrics: Metrics,
    /// Sequence predictions expanded to their samples (sequential learners only).
    pub per_sample: Option<(ConfusionCounts, Metrics)>,
    pub checks: IterationChecks,
    /// (predicted positive, truly positive) per classified unit.
    #[serde(skip)]
    pub pairs: Vec<(bool, bool)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum IterationOutcome {
    Completed(IterationResult),
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    #[serde(flatten)]
    pub outcome: IterationOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub classifier: String,
    pub setup: ExperimentSetup,
    /// "samples" or "sequences".
    pub unit: String,
    pub iterations: Vec<IterationRecord>,
    pub skipped: usize,
    pub mean: Metrics,
    pub mean_per_sample: Option<Metrics>,
}

impl EvaluationReport {
    pub fn completed(&self) -> impl Iterator<Item = (usize, &IterationResult)> {
        self.iterations.iter().filter_map(|r| match &r.outcome {
            IterationOutcome::Completed(res) => Some((r.iteration, res)),
            IterationOutcome::Skipped { .. } => None,
        })
    }

    pub fn pair_label(&self) -> String {
        format!("{}/{}", self.setup.class_a, self.setup.class_b)
    }
}

fn axis_stats(ds: &Dataset) -> (f64, f64) {
    let n = ds.len() as f64;
    let mut worst_mean: f64 = 0.0;
    let mut worst_std: f64 = 0.0;
    for k in 0..3 {
        let mean = ds.samples().iter().map(|s| s.rotation()[k]).sum::<f64>() / n;
        let var = ds.samples().iter().map(|s| (s.rotation()[k] - mean).powi(2)).sum::<f64>() / n;
        worst_mean = worst_mean.max(mean.abs());
        worst_std = worst_std.max((var.sqrt() - 1.0).abs());
    }
    (worst_mean, worst_std)
}

/// Classes in lexicographic label order, so index 0 is the smaller name.
fn class_order(a: GlanceRegion, b: GlanceRegion) -> [GlanceRegion; 2] {
    if a.as_str() <= b.as_str() {
        [a, b]
    } else {
        [b, a]
    }
}

fn run_iteration(
    filtered: &Dataset,
    learner: &dyn Learner,
    setup: &ExperimentSetup,
    iteration: usize,
) -> Result<IterationOutcome> {
    let (a, b) = (setup.class_a, setup.class_b);
    let classes = class_order(a, b);
    let index_of = |g: GlanceRegion| usize::from(g == classes[1]);
    let positive = index_of(b);

    let split = split_subjects(filtered, &setup.plan, iteration)?;
    for (fold, ds) in [("test", &split.test), ("train", &split.train)] {
        for c in [a, b] {
            if ds.count_label(c) == 0 {
                return Ok(IterationOutcome::Skipped { reason: format!("class {c} absent from {fold} fold") });
            }
        }
    }
    let norm_source = match setup.normalize {
        NormalizeScope::Train => &split.train,
        NormalizeScope::All => filtered,
    };
    let norm = fit_normalizer(norm_source)?;
    let train = apply_normalizer(&split.train, &norm);
    let test = apply_normalizer(&split.test, &norm);
    let (mean_dev, std_dev) = axis_stats(&apply_normalizer(norm_source, &norm));
    let (train, test) = match (setup.condition, setup.balance_scope) {
        (Condition::Original, _) => (train, test),
        (Condition::Balanced, scope) => {
            let seed = derive_seed(setup.plan.seed, Purpose::Balance, iteration as u64);
            let train = balance(&train, a, b, seed)?;
            let test = match scope {
                BalanceScope::Train => test,
                BalanceScope::TrainAndTest => balance(&test, a, b, derive_seed(seed, Purpose::Balance, 1))?,
            };
            (train, test)
        }
    };

    let samples = train.samples();
    let mut x = Vec::with_capacity(samples.len());
    let mut y = Vec::with_capacity(samples.len());
    let mut ids = Vec::with_capacity(samples.len());
    for (sid, seq) in make_sequences(&train).iter().enumerate() {
        for &i in &seq.indices {
            x.push(samples[i].rotation());
            y.push(index_of(samples[i].glance));
            ids.push(sid);
        }
    }
    let model = learner.fit(&x, &y, &ids, 2, derive_seed(setup.plan.seed, Purpose::Model, iteration as u64))?;

    let test_samples = test.samples();
    let mut pairs = Vec::new();
    let mut expanded = Vec::new();
    if learner.sequential() {
        for seq in make_sequences(&test) {
            let refs: Vec<&RotationSample> = seq.indices.iter().map(|&i| &test_samples[i]).collect();
            let feats: Vec<Feature> = refs.iter().map(|s| s.rotation()).collect();
            let pred = model.predict(&PredictInput { features: &feats, samples: &refs })? == positive;
            let truth = index_of(seq.glance) == positive;
            pairs.push((pred, truth));
            expanded.extend(std::iter::repeat((pred, truth)).take(seq.indices.len()));
        }
    } else {
        for s in test_samples {
            let feats = [s.rotation()];
            let pred = model.predict(&PredictInput { features: &feats, samples: &[s] })? == positive;
            pairs.push((pred, index_of(s.glance) == positive));
        }
    }
    let confusion = ConfusionCounts::from_pairs(pairs.iter().copied());
    let per_sample = learner.sequential().then(|| {
        let c = ConfusionCounts::from_pairs(expanded);
        (c, c.metrics())
    });
    let disjoint = split.train_subjects.is_disjoint(&split.test_subjects)
        && split.train.samples().iter().all(|s| split.train_subjects.contains(&s.subject_id))
        && split.test.samples().iter().all(|s| split.test_subjects.contains(&s.subject_id));
    let checks = IterationChecks {
        subjects_disjoint: disjoint,
        train_subjects: split.train_subjects.len(),
        test_subjects: split.test_subjects.len(),
        normalized_mean_max_abs: mean_dev,
        normalized_std_max_dev: std_dev,
        train_counts: (train.count_label(a), train.count_label(b)),
        test_counts: (test.count_label(a), test.count_label(b)),
        test_units: pairs.len(),
    };
    Ok(IterationOutcome::Completed(IterationResult {
        metrics: confusion.metrics(),
        confusion,
        per_sample,
        checks,
        pairs,
    }))
}

/// Run every Monte-Carlo iteration of `setup` for one learner.
///
/// Iterations run on the current rayon pool; results are merged in iteration
/// order, so the report does not depend on the worker count.
pub fn run_experiment(ds: &Dataset, learner: &dyn Learner, setup: &ExperimentSetup) -> Result<EvaluationReport> {
    setup.plan.validate()?;
    let filtered = filter_binary(ds, setup.class_a, setup.class_b)?;
    for c in [setup.class_a, setup.class_b] {
        if filtered.count_label(c) == 0 {
            return Err(Error::Precondition(format!("dataset has no samples of class {c}")));
        }
    }
    let n_subjects = filtered.subjects().len();
    if n_subjects < 2 {
        return Err(Error::Precondition(format!("experiment needs at least 2 subjects, found {n_subjects}")));
    }
    let outcomes: Vec<IterationOutcome> = (0..setup.plan.iterations)
        .into_par_iter()
        .map(|i| run_iteration(&filtered, learner, setup, i))
        .collect::<Result<_>>()?;
    let skipped = outcomes.iter().filter(|o| matches!(o, IterationOutcome::Skipped { .. })).count();
    let total = outcomes.len();
    if skipped * 2 > total {
        return Err(Error::TooManySkips { skipped, total });
    }
    let iterations: Vec<IterationRecord> =
        outcomes.into_iter().enumerate().map(|(iteration, outcome)| IterationRecord { iteration, outcome }).collect();
    let done: Vec<&IterationResult> = iterations
        .iter()
        .filter_map(|r| match &r.outcome {
            IterationOutcome::Completed(res) => Some(res),
            IterationOutcome::Skipped { .. } => None,
        })
        .collect();
    let mean = Metrics::mean(&done.iter().map(|r| r.metrics).collect::<Vec<_>>());
    let mean_per_sample = learner
        .sequential()
        .then(|| Metrics::mean(&done.iter().filter_map(|r| r.per_sample.map(|p| p.1)).collect::<Vec<_>>()));
    Ok(EvaluationReport {
        classifier: learner.name(),
        setup: *setup,
        unit: if learner.sequential() { "sequences" } else { "samples" }.to_string(),
        iterations,
        skipped,
        mean,
        mean_per_sample,
    })
}

pub const REPORT_CSV_HEADER: &str = "classifier,pair,condition,unit,iteration,AC,FS,KP";

/// Per-iteration rows followed by a `mean` row.
pub fn report_csv_rows(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let prefix = format!("{},{},{},{}", report.classifier, report.pair_label(), report.setup.condition, report.unit);
    for (i, r) in report.completed() {
        let m = r.metrics;
        let _ = writeln!(out, "{prefix},{i},{},{},{}", fixed6(m.accuracy), fixed6(m.f1), fixed6(m.kappa));
    }
    let m = report.mean;
    let _ = writeln!(out, "{prefix},mean,{},{},{}", fixed6(m.accuracy), fixed6(m.f1), fixed6(m.kappa));
    out
}

pub fn reports_csv(reports: &[EvaluationReport]) -> String {
    let mut out = format!("{REPORT_CSV_HEADER}\n");
    for r in reports {
        out.push_str(&report_csv_rows(r));
    }
    out
}

/// Mean metrics arranged as (pair, classifier) rows by condition columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub conditions: Vec<Condition>,
    pub rows: Vec<SummaryRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub class_a: GlanceRegion,
    pub class_b: GlanceRegion,
    pub classifier: String,
    /// One entry per table condition; `None` when that run is missing.
    pub cells: Vec<Option<Metrics>>,
}

fn display_classifier(name: &str) -> String {
    name.parse::<ClassifierKind>().map(|k| k.display_name().to_string()).unwrap_or_else(|_| name.to_string())
}

impl SummaryTable {
    /// Rows keep first-appearance order of (pair, classifier) across `reports`.
    pub fn from_reports(reports: &[EvaluationReport]) -> Self {
        let conditions: Vec<Condition> =
            Condition::ALL.into_iter().filter(|c| reports.iter().any(|r| r.setup.condition == *c)).collect();
        let mut rows: Vec<SummaryRow> = Vec::new();
        for r in reports {
            let key = (r.setup.class_a, r.setup.class_b, r.classifier.as_str());
            let pos = match rows.iter().position(|row| (row.class_a, row.class_b, row.classifier.as_str()) == key) {
                Some(p) => p,
                None => {
                    rows.push(SummaryRow {
                        class_a: key.0,
                        class_b: key.1,
                        classifier: key.2.to_string(),
                        cells: vec![None; conditions.len()],
                    });
                    rows.len() - 1
                }
            };
            let col = conditions.iter().position(|c| *c == r.setup.condition).unwrap();
            rows[pos].cells[col] = Some(r.mean);
        }
        SummaryTable { conditions, rows }
    }

    /// Number of metric cells (3 per condition per row).
    pub fn cell_count(&self) -> usize {
        self.rows.iter().map(|r| r.cells.len() * 3).sum()
    }

    /// Aligned plain text with two-decimal metrics.
    pub fn to_text(&self) -> String {
        let name_w = self
            .rows
            .iter()
            .map(|r| display_classifier(&r.classifier).len())
            .chain(std::iter::once("Classifier".len()))
            .max()
            .unwrap();
        let region_w = self
            .rows
            .iter()
            .map(|r| r.class_b.as_str().len())
            .chain(std::iter::once("Versus".len()))
            .max()
            .unwrap();
        let block_w = "0.00  0.00  0.00".len();
        let mut out = String::new();
        let _ = write!(out, "{:region_w$}  {:name_w$}", "", "");
        for c in &self.conditions {
            let title = match c {
                Condition::Original => "Original",
                Condition::Balanced => "Balanced",
            };
            let _ = write!(out, "    {title:block_w$}");
        }
        out = out.trim_end().to_string();
        out.push('\n');
        let _ = write!(out, "{:region_w$}  {:name_w$}", "Versus", "Classifier");
        for _ in &self.conditions {
            let _ = write!(out, "    {:block_w$}", "AC    FS    KP");
        }
        out = out.trim_end().to_string();
        out.push('\n');
        for r in &self.rows {
            let mut line = format!("{:region_w$}  {:name_w$}", r.class_b.as_str(), display_classifier(&r.classifier));
            for cell in &r.cells {
                let block = match cell {
                    Some(m) => format!("{:.2}  {:.2}  {:.2}", m.accuracy, m.f1, m.kappa),
                    None => "-     -     -".to_string(),
                };
                let _ = write!(line, "    {block:block_w$}");
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class_a,class_b,classifier");
        for c in &self.conditions {
            let _ = write!(out, ",{c}_AC,{c}_FS,{c}_KP");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{}", r.class_a, r.class_b, r.classifier);
            for cell in &r.cells {
                match cell {
                    Some(m) => {
                        let _ = write!(out, ",{},{},{}", fixed6(m.accuracy), fixed6(m.f1), fixed6(m.kappa));
                    }
                    None => out.push_str(",,,"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Forward (or any reference region) against each target region in turn,
/// for every learner and condition. Reports come out region-major.
pub fn eccentricity_sweep(
    ds: &Dataset,
    reference: GlanceRegion,
    regions: &[GlanceRegion],
    learners: &[&dyn Learner],
    conditions: &[Condition],
    protocol: &Protocol,
) -> Result<Vec<EvaluationReport>> {
    if regions.is_empty() {
        return Err(Error::Precondition("eccentricity sweep needs at least one region".into()));
    }
    let mut out = Vec::new();
    for &region in regions {
        for learner in learners {
            for &condition in conditions {
                let setup = ExperimentSetup {
                    class_a: reference,
                    class_b: region,
                    condition,
                    plan: protocol.plan,
                    normalize: protocol.normalize,
                    balance_scope: protocol.balance_scope,
                };
                out.push(run_experiment(ds, *learner, &setup)?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cc(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(cc(9, 1, 0, 0).accuracy(), 0.9);
        assert_eq!(cc(5, 0, 0, 5).accuracy(), 1.0);
        assert_eq!(cc(0, 5, 5, 0).accuracy(), 0.0);
    }

    #[test]
    fn f1_examples() {
        assert!((cc(3, 1, 1, 0).f1() - 0.75).abs() < 1e-15);
        assert_eq!(cc(0, 4, 3, 10).f1(), 0.0);
    }

    #[test]
    fn kappa_examples() {
        // P(A) = 0.8 and P(E) = 0.5
        let c = cc(40, 10, 10, 40);
        assert!((c.kappa() - 0.6).abs() < 1e-12);
        assert_eq!(cc(5, 0, 0, 95).kappa(), 1.0);
        // constant predictor on a 95/5 skew
        let c = cc(0, 0, 5, 95);
        assert_eq!(c.accuracy(), 0.95);
        assert_eq!(c.kappa(), 0.0);
        // everything in one cell: P(E) = 1
        assert_eq!(cc(0, 0, 0, 7).kappa(), 0.0);
    }

    #[test]
    fn summary_text_layout() {
        let report = EvaluationReport {
            classifier: "hmm".into(),
            setup: ExperimentSetup {
                class_a: GlanceRegion::Forward,
                class_b: GlanceRegion::CenterStack,
                condition: Condition::Balanced,
                plan: SplitPlan::default(),
                normalize: NormalizeScope::Train,
                balance_scope: BalanceScope::Train,
            },
            unit: "sequences".into(),
            iterations: vec![],
            skipped: 0,
            mean: Metrics { accuracy: 0.83, f1: 0.68, kappa: 0.57 },
            mean_per_sample: None,
        };
        let table = SummaryTable::from_reports(&[report]);
        let text = table.to_text();
        let last = text.lines().last().unwrap();
        assert!(last.starts_with("center-stack  Hidden Markov Model"));
        assert!(last.ends_with("0.83  0.68  0.57"), "{text}");
        assert_eq!(table.cell_count(), 3);
        assert!(table.to_csv().contains("forward,center-stack,hmm,0.830000,0.680000,0.570000"));
    }
}
