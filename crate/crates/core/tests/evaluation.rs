use glance_core::classifiers::{Feature, Label};
use glance_core::evaluation::{
    eccentricity_sweep, run_experiment, BalanceScope, ClassifierLearner, Condition, ConfusionCounts, EvaluationReport,
    ExperimentSetup, Learner, PredictInput, Predictor, Protocol, SummaryTable,
};
use glance_core::preprocess::{NormalizeScope, SplitPlan};
use glance_core::synth::{default_scenario, generate, Profile};
use glance_core::{Dataset, GlanceRegion, Result, RotationSample};

const A: GlanceRegion = GlanceRegion::Forward;
const B: GlanceRegion = GlanceRegion::CenterStack;

fn dataset() -> Dataset {
    let mut spec = default_scenario(Profile::Mixed, 10, 11).unwrap();
    spec.frames_per_task = 300;
    generate(&spec).unwrap()
}

fn plan(iterations: usize) -> SplitPlan {
    SplitPlan { iterations, ..SplitPlan::default() }
}

fn setup(condition: Condition, iterations: usize) -> ExperimentSetup {
    ExperimentSetup {
        class_a: A,
        class_b: B,
        condition,
        plan: plan(iterations),
        normalize: NormalizeScope::Train,
        balance_scope: BalanceScope::Train,
    }
}

/// Label index the harness assigns to a region of the pair.
fn index_of(g: GlanceRegion) -> Label {
    let (lo, hi) = if A.to_string() <= B.to_string() { (A, B) } else { (B, A) };
    assert!(g == lo || g == hi);
    usize::from(g == hi)
}

#[derive(Clone, Copy)]
struct Echo;
#[derive(Clone, Copy)]
struct Coin;

impl Predictor for Echo {
    fn predict(&self, input: &PredictInput<'_>) -> Result<Label> {
        Ok(index_of(input.samples[0].glance))
    }
}

fn mix(s: &RotationSample) -> u64 {
    let mut h = s.timestamp_ms as u64 ^ 0x9e37_79b9_7f4a_7c15;
    for b in s.subject_id.bytes().chain(s.task_id.bytes()) {
        h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
    }
    h ^= h >> 31;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^ (h >> 29)
}

impl Predictor for Coin {
    fn predict(&self, input: &PredictInput<'_>) -> Result<Label> {
        Ok((mix(input.samples[0]) & 1) as Label)
    }
}

/// Learner that ignores its training data; the flag marks it sequential.
struct Double<P: Predictor + Copy + 'static>(P, bool);

impl<P: Predictor + Copy + 'static> Learner for Double<P> {
    fn name(&self) -> String {
        "double".into()
    }
    fn sequential(&self) -> bool {
        self.1
    }
    fn fit(&self, _: &[Feature], _: &[Label], _: &[usize], _: usize, _: u64) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(self.0))
    }
}

fn brute_metrics(pairs: &[(bool, bool)]) -> (f64, f64, f64) {
    let n = pairs.len() as f64;
    let agree = pairs.iter().filter(|(p, t)| p == t).count() as f64;
    let tp = pairs.iter().filter(|(p, t)| *p && *t).count() as f64;
    let pred_pos = pairs.iter().filter(|(p, _)| *p).count() as f64;
    let true_pos = pairs.iter().filter(|(_, t)| *t).count() as f64;
    let ac = agree / n;
    let f1 = if pred_pos + true_pos == 0.0 { 0.0 } else { 2.0 * tp / (pred_pos + true_pos) };
    let pe = (pred_pos * true_pos + (n - pred_pos) * (n - true_pos)) / (n * n);
    let kp = if pe == 1.0 { 0.0 } else { (ac - pe) / (1.0 - pe) };
    (ac, f1, kp)
}

fn check_iterations(report: &EvaluationReport) {
    assert!(report.completed().count() > 0);
    for (i, res) in report.completed() {
        let recount = ConfusionCounts::from_pairs(res.pairs.iter().copied());
        assert_eq!(recount, res.confusion, "iteration {i}");
        let (ac, f1, kp) = brute_metrics(&res.pairs);
        assert!((ac - res.metrics.accuracy).abs() < 1e-12);
        assert!((f1 - res.metrics.f1).abs() < 1e-12);
        assert!((kp - res.metrics.kappa).abs() < 1e-12);
        let c = &res.checks;
        assert!(c.subjects_disjoint);
        assert!(c.normalized_mean_max_abs < 1e-9 && c.normalized_std_max_dev < 1e-9);
        if report.setup.condition == Condition::Balanced {
            assert_eq!(c.train_counts.0, c.train_counts.1, "iteration {i}");
        }
    }
}

#[test]
fn echo_double_scores_perfectly() {
    let ds = dataset();
    for sequential in [false, true] {
        for condition in Condition::ALL {
            let r = run_experiment(&ds, &Double(Echo, sequential), &setup(condition, 8)).unwrap();
            check_iterations(&r);
            assert_eq!((r.mean.accuracy, r.mean.f1, r.mean.kappa), (1.0, 1.0, 1.0));
        }
    }
}

#[test]
fn coin_flip_has_no_agreement_beyond_chance() {
    let ds = dataset();
    let r = run_experiment(&ds, &Double(Coin, false), &setup(Condition::Original, 20)).unwrap();
    check_iterations(&r);
    assert!(r.mean.kappa.abs() < 0.1, "{}", r.mean.kappa);
    assert!((r.mean.accuracy - 0.5).abs() < 0.05);
}

#[test]
fn balancing_both_folds_equalises_test_counts() {
    let ds = dataset();
    let mut s = setup(Condition::Balanced, 6);
    s.balance_scope = BalanceScope::TrainAndTest;
    let r = run_experiment(&ds, &Double(Coin, false), &s).unwrap();
    for (_, res) in r.completed() {
        assert_eq!(res.checks.test_counts.0, res.checks.test_counts.1);
    }
}

#[test]
fn real_classifiers_pass_recounts() {
    let ds = dataset();
    for kind in glance_core::classifiers::ClassifierKind::ALL {
        let mut params = glance_core::classifiers::ClassifierParams::default();
        params.forest.tree_count = 10;
        params.mlp.epochs = 10;
        let learner = ClassifierLearner { kind, params };
        let r = run_experiment(&ds, &learner, &setup(Condition::Balanced, 3)).unwrap();
        check_iterations(&r);
    }
}

#[test]
fn sweep_shape_and_duplicate_regions() {
    let ds = dataset();
    let coin = Double(Coin, false);
    let learners: [&dyn Learner; 1] = [&coin];
    let protocol = Protocol { plan: plan(5), ..Protocol::default() };
    let one = eccentricity_sweep(&ds, A, &[B], &learners, &Condition::ALL, &protocol).unwrap();
    let table = SummaryTable::from_reports(&one);
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.cell_count(), 6);

    let twice = eccentricity_sweep(&ds, A, &[B, B], &learners, &[Condition::Original], &protocol).unwrap();
    assert_eq!(twice.len(), 2);
    assert!((twice[0].mean.accuracy - twice[1].mean.accuracy).abs() < 0.05);
    assert!(eccentricity_sweep(&ds, A, &[], &learners, &Condition::ALL, &protocol).is_err());
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let ds = dataset();
    let learner = ClassifierLearner {
        kind: glance_core::classifiers::ClassifierKind::Knn,
        params: Default::default(),
    };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_experiment(&ds, &learner, &setup(Condition::Balanced, 6)).unwrap())
    };
    assert_eq!(run(1), run(3));
}
