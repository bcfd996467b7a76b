//! The `glance` command line: argument parsing, experiment configs, manifests
//! and exit codes.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifiers::{ClassifierKind, ClassifierParams, MODEL_FORMAT_VERSION};
use crate::data::{filter_binary, load_dataset, write_dataset, Format};
use crate::diffs::{correlate_profiles, profile_subjects, profiles_csv, time_series_csv, ProfileConfig, RangeKind};
use crate::error::Error;
use crate::evaluation::{
    reports_csv, run_experiment, BalanceScope, ClassifierLearner, Condition, EvaluationReport, ExperimentSetup,
    SummaryTable,
};
use crate::format::{fixed6, to_json_fixed};
use crate::pca::{averaged_components, fit_pca, project};
use crate::pose::{load_landmarks, reduce_frames, ReferenceFace, DEFAULT_DISAGREEMENT_PX};
use crate::preprocess::{split_subjects, NormalizeScope, SplitPlan};
use crate::synth::{default_scenario, generate, Profile, ScenarioSpec};
use crate::{Dataset, GlanceRegion};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "glance", version, about = "Glance-region classification from head rotation")]
pub struct Cli {
    /// Worker threads; defaults to the number of cores. Outputs do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic rotation dataset.
    Synth(SynthArgs),
    /// Reduce two-analyst landmark annotations to head rotations.
    Pose(PoseArgs),
    /// Run a Monte-Carlo classification experiment.
    Run(RunArgs),
    /// Principal components of the rotation variables for one class pair.
    Pca(PcaArgs),
    /// Per-driver head-movement profiles and their correlation.
    Diffs(DiffsArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario JSON; without it a built-in population is generated.
    pub scenario: Option<PathBuf>,
    /// Built-in population: mixed, all-owl or all-lizard.
    #[arg(long, conflicts_with = "scenario")]
    pub profile: Option<Profile>,
    /// Drivers in the built-in population.
    #[arg(long, conflicts_with = "scenario")]
    pub subjects: Option<usize>,
    /// Frames per (driver, task) stream.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset format: csv or json.
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    pub format: Format,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PoseArgs {
    /// Landmark CSV: frame_id, analyst_id, landmark_role, x_px, y_px, missing_flag.
    pub landmarks: PathBuf,
    /// Reference face JSON; the built-in face is used otherwise.
    #[arg(long)]
    pub face: Option<PathBuf>,
    /// Mean inter-analyst distance above which a frame is excluded, pixels.
    #[arg(long, default_value_t = DEFAULT_DISAGREEMENT_PX)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config JSON.
    pub config: PathBuf,
    /// Overrides `plan.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    pub dataset: PathBuf,
    /// Class pair as `a,b`.
    #[arg(long, default_value = "forward,center-stack", value_parser = parse_pair)]
    pub pair: (GlanceRegion, GlanceRegion),
    /// Components kept in the projection table (1 to 3).
    #[arg(long, default_value_t = 2)]
    pub components: usize,
    /// Monte-Carlo training sets averaged for the component summary.
    #[arg(long, default_value_t = 50)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiffsArgs {
    pub dataset: PathBuf,
    #[arg(long, default_value = "radio-on-off")]
    pub task: String,
    #[arg(long, default_value = "center-stack")]
    pub target: GlanceRegion,
    /// Yaw range definition: percentile or min-max.
    #[arg(long, default_value = "percentile")]
    pub range: String,
    #[arg(long, default_value_t = 5.0)]
    pub low: f64,
    #[arg(long, default_value_t = 95.0)]
    pub high: f64,
    /// Glances needed in each class before a mover type is assigned.
    #[arg(long)]
    pub min_count: Option<usize>,
    #[arg(long)]
    pub range_threshold: Option<f64>,
    #[arg(long)]
    pub diff_threshold: Option<f64>,
    /// Subject whose yaw trace is exported; repeatable.
    #[arg(long = "series")]
    pub series: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_format(s: &str) -> std::result::Result<Format, String> {
    match s {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        _ => Err(format!("unknown format '{s}', expected csv or json")),
    }
}

fn parse_pair(s: &str) -> std::result::Result<(GlanceRegion, GlanceRegion), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected 'a,b', got '{s}'"))?;
    let a: GlanceRegion = a.trim().parse().map_err(|e: Error| e.to_string())?;
    let b: GlanceRegion = b.trim().parse().map_err(|e: Error| e.to_string())?;
    Ok((a, b))
}

/// Where a run's rotation data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// CSV or JSON dataset; relative paths resolve against the config file.
    File(PathBuf),
    Scenario(ScenarioSpec),
    Synthetic(SyntheticSource),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub profile: Profile,
    pub subjects: usize,
    pub seed: u64,
}

fn default_pairs() -> Vec<(GlanceRegion, GlanceRegion)> {
    vec![(GlanceRegion::Forward, GlanceRegion::CenterStack)]
}

fn default_classifiers() -> Vec<ClassifierKind> {
    ClassifierKind::ALL.to_vec()
}

fn default_conditions() -> Vec<Condition> {
    Condition::ALL.to_vec()
}

/// Experiment grid: every pair × classifier × condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// (class_a, class_b); class_b is the positive class.
    #[serde(default = "default_pairs")]
    pub pairs: Vec<(GlanceRegion, GlanceRegion)>,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<ClassifierKind>,
    #[serde(default = "default_conditions")]
    pub conditions: Vec<Condition>,
    #[serde(default)]
    pub plan: SplitPlan,
    #[serde(default)]
    pub normalize: NormalizeScope,
    #[serde(default)]
    pub balance_scope: BalanceScope,
    #[serde(default)]
    pub params: ClassifierParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::Config("no class pairs".into()));
        }
        for (a, b) in &self.pairs {
            if a == b {
                return Err(Error::Config(format!("pair ({a}, {b}) needs two distinct regions")));
            }
        }
        for (name, empty) in [("classifiers", self.classifiers.is_empty()), ("conditions", self.conditions.is_empty())] {
            if empty {
                return Err(Error::Config(format!("no {name} selected")));
            }
        }
        if let Some(dup) = first_duplicate(&self.classifiers) {
            return Err(Error::Config(format!("classifier {} listed twice", dup.as_str())));
        }
        if let Some(dup) = first_duplicate(&self.conditions) {
            return Err(Error::Config(format!("condition {dup} listed twice")));
        }
        self.plan.validate()?;
        self.params.validate()?;
        match &self.dataset {
            DatasetSource::Scenario(spec) => spec.validate(),
            DatasetSource::Synthetic(s) if s.subjects < 2 => {
                Err(Error::Config(format!("synthetic source needs at least 2 subjects, got {}", s.subjects)))
            }
            _ => Ok(()),
        }
    }
}

fn first_duplicate<T: PartialEq + Copy>(items: &[T]) -> Option<T> {
    items.iter().enumerate().find(|(i, x)| items[..*i].contains(x)).map(|(_, x)| *x)
}

/// A failure with its exit class. Printed as one JSON line on stderr.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
    pub path: Option<PathBuf>,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into(), path: None }
    }

    fn validation(message: impl Into<String>) -> Self {
        CliError { code: EXIT_VALIDATION, message: message.into(), path: None }
    }

    /// An error raised while reading or checking inputs.
    fn input(e: Error) -> Self {
        let code = match e {
            Error::Diverged { .. }
            | Error::StateStarvation { .. }
            | Error::NonFiniteLikelihood(_)
            | Error::TooManySkips { .. }
            | Error::UndefinedCorrelation(_)
            | Error::ZeroVariance(_) => EXIT_RUNTIME,
            _ => EXIT_VALIDATION,
        };
        CliError::with_code(e, code)
    }

    fn with_code(e: Error, code: i32) -> Self {
        let path = match &e {
            Error::Io { path, .. } => Some(path.clone()),
            _ => None,
        };
        CliError { code, message: e.to_string(), path }
    }

    pub fn to_json_line(&self) -> String {
        let kind = match self.code {
            EXIT_USAGE => "usage",
            EXIT_VALIDATION => "validation",
            _ => "runtime",
        };
        let mut v = serde_json::json!({ "error": kind, "code": self.code, "message": self.message });
        if let Some(p) = &self.path {
            v["path"] = serde_json::Value::String(p.display().to_string());
        }
        serde_json::to_string(&v).expect("json value")
    }
}

impl From<Error> for CliError {
    /// Errors after validation are runtime failures.
    fn from(e: Error) -> Self {
        CliError::with_code(e, EXIT_RUNTIME)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parse `args`, run the command, print any error; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::usage(first).to_json_line());
            return EXIT_USAGE;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            e.code
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let jobs = match cli.jobs {
        Some(0) => return Err(CliError::usage("--jobs must be at least 1")),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError { code: EXIT_RUNTIME, message: e.to_string(), path: None })?;
    pool.install(|| match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Pose(a) => cmd_pose(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Pca(a) => cmd_pca(&a),
        Command::Diffs(a) => cmd_diffs(&a),
    })
}

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    bytes: u64,
    sha256: String,
}

/// Provenance record written beside every command's outputs.
#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    glance_version: &'static str,
    model_format_version: u32,
    seed: Option<u64>,
    config_sha256: String,
    config: &'a C,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::input(Error::io(path, e)))
}

fn digest_file(path: &Path, label: String) -> CliResult<FileDigest> {
    let bytes = read_input(path)?;
    Ok(FileDigest { path: label, bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) })
}

/// Output directory plus the files written into it so far.
struct OutDir {
    dir: PathBuf,
    inputs: Vec<PathBuf>,
    written: Vec<String>,
}

impl OutDir {
    fn create(dir: &Path, inputs: &[&Path]) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::input(Error::io(dir, e)))?;
        Ok(OutDir { dir: dir.to_path_buf(), inputs: inputs.iter().map(|p| p.to_path_buf()).collect(), written: vec![] })
    }

    fn path(&self, name: &str) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        if let Ok(target) = path.canonicalize() {
            if self.inputs.iter().any(|i| i.canonicalize().is_ok_and(|c| c == target)) {
                return Err(CliError::validation(format!("output {} would overwrite an input", path.display())));
            }
        }
        Ok(path)
    }

    fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.path(name)?;
        fs::write(&path, contents).map_err(|e| CliError::from(Error::io(&path, e)))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn write_dataset(&mut self, name: &str, ds: &Dataset, format: Format) -> CliResult<()> {
        let path = self.path(name)?;
        write_dataset(ds, &path, format)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn finish<C: Serialize>(self, command: &str, seed: Option<u64>, config: &C) -> CliResult<()> {
        let config_text = serde_json::to_string(config).map_err(Error::from)?;
        let inputs = self
            .inputs
            .iter()
            .map(|p| digest_file(p, p.display().to_string()))
            .collect::<CliResult<Vec<_>>>()?;
        let outputs = self
            .written
            .iter()
            .map(|name| digest_file(&self.dir.join(name), name.clone()))
            .collect::<CliResult<Vec<_>>>()?;
        let manifest = Manifest {
            command,
            glance_version: env!("CARGO_PKG_VERSION"),
            model_format_version: MODEL_FORMAT_VERSION,
            seed,
            config_sha256: sha256_hex(config_text.as_bytes()),
            config,
            inputs,
            outputs,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(Error::from)? + "\n";
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(|e| CliError::from(Error::io(&path, e)))
    }
}

fn json_fixed<T: Serialize + ?Sized>(value: &T) -> CliResult<String> {
    Ok(to_json_fixed(value).map_err(Error::from)?)
}

fn load_input_dataset(path: &Path) -> CliResult<Dataset> {
    load_dataset(path, Format::from_path(path)).map_err(CliError::input)
}

fn parse_json_input<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let bytes = read_input(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError {
        code: EXIT_VALIDATION,
        message: format!("{}: {e}", path.display()),
        path: Some(path.to_path_buf()),
    })
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let mut spec = match &a.scenario {
        Some(path) => parse_json_input::<ScenarioSpec>(path)?,
        None => default_scenario(a.profile.unwrap_or(Profile::Mixed), a.subjects.unwrap_or(22), a.seed.unwrap_or(0))
            .map_err(CliError::input)?,
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(frames) = a.frames {
        spec.frames_per_task = frames;
    }
    spec.validate().map_err(CliError::input)?;
    let inputs: Vec<&Path> = a.scenario.iter().map(PathBuf::as_path).collect();
    let mut out = OutDir::create(&a.out, &inputs)?;
    let ds = generate(&spec)?;
    let name = match a.format {
        Format::Csv => "dataset.csv",
        Format::Json => "dataset.json",
    };
    out.write_dataset(name, &ds, a.format)?;
    out.write("scenario.json", &(serde_json::to_string_pretty(&spec).map_err(Error::from)? + "\n"))?;
    out.finish("synth", Some(spec.seed), &spec)
}

pub fn cmd_pose(a: &PoseArgs) -> CliResult<()> {
    if !(a.threshold.is_finite() && a.threshold > 0.0) {
        return Err(CliError::validation(format!("--threshold must be positive, got {}", a.threshold)));
    }
    let face = match &a.face {
        Some(path) => parse_json_input::<ReferenceFace>(path)?,
        None => ReferenceFace::default(),
    };
    face.validate().map_err(CliError::input)?;
    let frames = load_landmarks(&a.landmarks).map_err(CliError::input)?;
    let mut inputs = vec![a.landmarks.as_path()];
    inputs.extend(a.face.as_deref());
    let mut out = OutDir::create(&a.out, &inputs)?;
    let (rotations, summary) = reduce_frames(&frames, &face, a.threshold)?;
    let mut csv = String::from("frame_id,rot_x,rot_y,rot_z\n");
    for r in &rotations {
        let [x, y, z] = r.rotation.as_array().map(fixed6);
        let _ = writeln!(csv, "{},{x},{y},{z}", r.frame_id);
    }
    out.write("rotations.csv", &csv)?;
    out.write("reduction.json", &json_fixed(&summary)?)?;
    #[derive(Serialize)]
    struct PoseConfig<'a> {
        face: &'a ReferenceFace,
        threshold_px: f64,
    }
    out.finish("pose", None, &PoseConfig { face: &face, threshold_px: a.threshold })
}

/// Resolve and validate an experiment config; relative dataset paths follow the config file.
pub fn load_experiment_config(path: &Path) -> CliResult<ExperimentConfig> {
    let mut config: ExperimentConfig = parse_json_input(path)?;
    if let DatasetSource::File(p) = &mut config.dataset {
        if p.is_relative() {
            *p = path.parent().unwrap_or(Path::new("")).join(&*p);
        }
    }
    config.validate().map_err(|e| CliError {
        code: EXIT_VALIDATION,
        message: format!("{}: {e}", path.display()),
        path: Some(path.to_path_buf()),
    })?;
    Ok(config)
}

pub fn cmd_run(a: &RunArgs) -> CliResult<()> {
    let mut config = load_experiment_config(&a.config)?;
    if let Some(seed) = a.seed {
        config.plan.seed = seed;
    }
    if let Some(out) = &a.out {
        config.output_dir = Some(out.clone());
    }
    let Some(out_dir) = config.output_dir.clone() else {
        return Err(CliError::usage("no output directory: pass --out or set output_dir"));
    };
    let ds = match &config.dataset {
        DatasetSource::File(p) => load_input_dataset(p)?,
        DatasetSource::Scenario(spec) => generate(spec)?,
        DatasetSource::Synthetic(s) => generate(&default_scenario(s.profile, s.subjects, s.seed).map_err(CliError::input)?)?,
    };
    for &(x, y) in &config.pairs {
        filter_binary(&ds, x, y).map_err(CliError::input)?;
    }
    let mut inputs = vec![a.config.as_path()];
    if let DatasetSource::File(p) = &config.dataset {
        inputs.push(p);
    }
    let mut out = OutDir::create(&out_dir, &inputs)?;

    let mut reports: Vec<EvaluationReport> = Vec::new();
    for &(class_a, class_b) in &config.pairs {
        for &kind in &config.classifiers {
            let learner = ClassifierLearner { kind, params: config.params };
            for &condition in &config.conditions {
                let setup = ExperimentSetup {
                    class_a,
                    class_b,
                    condition,
                    plan: config.plan,
                    normalize: config.normalize,
                    balance_scope: config.balance_scope,
                };
                reports.push(run_experiment(&ds, &learner, &setup)?);
            }
        }
    }
    let table = SummaryTable::from_reports(&reports);
    out.write("reports.csv", &reports_csv(&reports))?;
    out.write("summary.csv", &table.to_csv())?;
    out.write("summary.txt", &table.to_text())?;
    out.write("reports.json", &json_fixed(&reports)?)?;
    let mut recorded = config.clone();
    recorded.output_dir = None;
    out.finish("run", Some(config.plan.seed), &recorded)
}

pub fn cmd_pca(a: &PcaArgs) -> CliResult<()> {
    if !(1..=3).contains(&a.components) {
        return Err(CliError::validation(format!("--components must be 1, 2 or 3, got {}", a.components)));
    }
    if a.pair.0 == a.pair.1 {
        return Err(CliError::validation("--pair needs two distinct regions"));
    }
    let plan = SplitPlan { iterations: a.iterations, train_fraction: a.train_fraction, seed: a.seed };
    plan.validate().map_err(CliError::input)?;
    let ds = load_input_dataset(&a.dataset)?;
    let pair = filter_binary(&ds, a.pair.0, a.pair.1).map_err(CliError::input)?;
    let mut out = OutDir::create(&a.out, &[&a.dataset])?;

    let model = fit_pca(&pair)?;
    let rows = project(&model, &pair, a.components)?;
    let mut csv = String::from("subject_id,glance");
    for k in 1..=a.components {
        let _ = write!(csv, ",pc_{k}");
    }
    csv.push('\n');
    for r in &rows {
        csv.push_str(&crate::data::csv_field(&r.subject_id));
        csv.push(',');
        csv.push_str(r.glance.as_str());
        for v in &r.scores {
            csv.push(',');
            csv.push_str(&fixed6(*v));
        }
        csv.push('\n');
    }
    let runs = (0..plan.iterations)
        .into_par_iter()
        .map(|i| fit_pca(&split_subjects(&pair, &plan, i)?.train))
        .collect::<crate::Result<Vec<_>>>()?;
    let average = averaged_components(&runs)?;

    #[derive(Serialize)]
    struct Components<'a> {
        pair: [GlanceRegion; 2],
        samples: usize,
        components: [[f64; 3]; 3],
        eigenvalues: [f64; 3],
        explained_variance_ratio: [f64; 3],
        mean: [f64; 3],
        monte_carlo: &'a crate::pca::ComponentAverage,
    }
    let summary = Components {
        pair: [a.pair.0, a.pair.1],
        samples: pair.len(),
        components: model.components,
        eigenvalues: model.eigenvalues,
        explained_variance_ratio: model.explained_variance_ratio(),
        mean: model.mean,
        monte_carlo: &average,
    };
    out.write("projection.csv", &csv)?;
    out.write("components.json", &json_fixed(&summary)?)?;
    #[derive(Serialize)]
    struct PcaConfig {
        pair: [GlanceRegion; 2],
        components: usize,
        plan: SplitPlan,
    }
    out.finish("pca", Some(a.seed), &PcaConfig { pair: [a.pair.0, a.pair.1], components: a.components, plan })
}

pub fn cmd_diffs(a: &DiffsArgs) -> CliResult<()> {
    let mut config = ProfileConfig::default();
    config.range = match a.range.as_str() {
        "percentile" => RangeKind::Percentile { low: a.low, high: a.high },
        "min-max" | "minmax" => RangeKind::MinMax,
        other => return Err(CliError::usage(format!("unknown --range '{other}', expected percentile or min-max"))),
    };
    if let Some(n) = a.min_count {
        config.min_count = n;
    }
    if let Some(t) = a.range_threshold {
        config.thresholds.range_deg = t;
    }
    if let Some(t) = a.diff_threshold {
        config.thresholds.diff_deg = t;
    }
    config.validate().map_err(CliError::input)?;
    let ds = load_input_dataset(&a.dataset)?;
    for s in &a.series {
        if !ds.subjects().contains(s.as_str()) {
            return Err(CliError::validation(format!("--series subject '{s}' is not in the dataset")));
        }
    }
    let set = profile_subjects(&ds, &a.task, a.target, &config).map_err(CliError::input)?;
    let correlation = correlate_profiles(&set.profiles)?;
    let mut out = OutDir::create(&a.out, &[&a.dataset])?;
    out.write("profiles.csv", &profiles_csv(&set))?;

    #[derive(Serialize)]
    struct Report<'a> {
        task: &'a str,
        target: GlanceRegion,
        correlation: crate::diffs::Correlation,
        excluded: &'a [(std::sync::Arc<str>, crate::diffs::ExclusionReason)],
    }
    out.write(
        "correlation.json",
        &json_fixed(&Report { task: &set.task, target: set.target, correlation, excluded: &set.excluded })?,
    )?;
    for s in &a.series {
        out.write(&format!("series-{}.csv", file_safe(s)), &time_series_csv(&ds, s, &a.task))?;
    }
    #[derive(Serialize)]
    struct DiffsConfig<'a> {
        task: &'a str,
        target: GlanceRegion,
        profile: &'a ProfileConfig,
        series: &'a [String],
    }
    out.finish("diffs", None, &DiffsConfig { task: &a.task, target: a.target, profile: &config, series: &a.series })
}

fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_validation() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"dataset": {"file": "d.csv"}}"#).unwrap();
        assert_eq!(c.classifiers.len(), 4);
        assert_eq!(c.conditions.len(), 2);
        assert_eq!(c.plan, SplitPlan::default());
        c.validate().unwrap();
        let bad: ExperimentConfig =
            serde_json::from_str(r#"{"dataset": {"file": "d.csv"}, "pairs": [["forward", "forward"]]}"#).unwrap();
        assert!(bad.validate().is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"dataset": {"file": "d"}, "extra": 1}"#).is_err());
        let knn: ExperimentConfig =
            serde_json::from_str(r#"{"dataset": {"file": "d"}, "params": {"knn": {"k": 4}}}"#).unwrap();
        assert!(knn.validate().is_err());
    }

    #[test]
    fn error_line_is_single_json_object() {
        let e = CliError::input(Error::io("/no/such", std::io::Error::from(std::io::ErrorKind::NotFound)));
        let line = e.to_json_line();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["code"], 3);
        assert_eq!(v["path"], "/no/such");
    }

    #[test]
    fn hex_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
