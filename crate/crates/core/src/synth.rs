//! Seeded driver simulator.
//!
//! Each (driver, task) stream runs a semi-Markov glance process: a jump chain
//! between regions (zero diagonal) with geometric dwell times per region. Head
//! rotation is the driver's resting offset plus gain times the region's
//! eccentricity plus AR(1)-smoothed Gaussian noise.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GlanceRegion, RotationSample, TaskKind};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// AR(1) coefficient of the head-noise process.
pub const NOISE_SMOOTHING: f64 = 0.7;

/// Tolerance between the chain's stationary forward share and `forward_share`.
pub const FORWARD_SHARE_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Eccentricity {
    pub yaw: f64,
    pub pitch: f64,
}

/// Nominal gaze direction of each region, degrees. Forward must be (0, 0).
pub type RegionLayout = BTreeMap<GlanceRegion, Eccentricity>;

/// Row-stochastic jump probabilities between regions; the diagonal is zero.
pub type TransitionMatrix = BTreeMap<GlanceRegion, BTreeMap<GlanceRegion, f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadOffset {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverSpec {
    pub subject_id: String,
    /// Share of gaze eccentricity expressed as head rotation (0 lizard, 1 owl).
    pub head_gain: f64,
    /// Stationary noise standard deviation for (rot_x, rot_y, rot_z), degrees.
    pub noise_sigma: [f64; 3],
    /// Mean dwell time per region, frames.
    pub dwell_frames: BTreeMap<GlanceRegion, f64>,
    pub resting_offset: HeadOffset,
}

fn default_period() -> f64 {
    1.0 / 15.0
}

fn default_share() -> f64 {
    0.95
}

fn default_tasks() -> Vec<TaskKind> {
    TaskKind::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub drivers: Vec<DriverSpec>,
    pub layout: RegionLayout,
    pub transitions: TransitionMatrix,
    /// Per-task replacements for `transitions`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub task_transitions: BTreeMap<TaskKind, TransitionMatrix>,
    #[serde(default = "default_share")]
    pub forward_share: f64,
    pub frames_per_task: usize,
    #[serde(default = "default_period")]
    pub frame_period_s: f64,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<TaskKind>,
    pub seed: u64,
}

/// Stationary distribution of a row-stochastic matrix by power iteration on its lazy version.
pub fn stationary(p: &[Vec<f64>]) -> Vec<f64> {
    let n = p.len();
    let mut v = vec![1.0 / n as f64; n];
    for _ in 0..100_000 {
        let mut next = vec![0.0; n];
        for i in 0..n {
            next[i] += 0.5 * v[i];
            for j in 0..n {
                next[j] += 0.5 * v[i] * p[i][j];
            }
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        if delta < 1e-15 {
            break;
        }
    }
    v
}

/// Compiled chain for one driver and task: regions, jump rows, dwell means.
#[derive(Debug, Clone)]
pub struct GlanceChain {
    pub regions: Vec<GlanceRegion>,
    pub jumps: Vec<Vec<f64>>,
    pub dwell: Vec<f64>,
}

impl GlanceChain {
    pub fn new(matrix: &TransitionMatrix, dwell: &BTreeMap<GlanceRegion, f64>) -> Result<Self> {
        let regions: Vec<GlanceRegion> = matrix.keys().copied().collect();
        let index: BTreeMap<GlanceRegion, usize> = regions.iter().enumerate().map(|(i, r)| (*r, i)).collect();
        let mut jumps = vec![vec![0.0; regions.len()]; regions.len()];
        for (from, row) in matrix {
            let i = index[from];
            for (to, p) in row {
                let Some(&j) = index.get(to) else {
                    return Err(Error::Config(format!("transition {from} -> {to} targets a region without a row")));
                };
                if !(p.is_finite() && *p >= 0.0) {
                    return Err(Error::Config(format!("transition {from} -> {to} has invalid probability {p}")));
                }
                if i == j && *p != 0.0 {
                    return Err(Error::Config(format!("self-transition for {from} must be 0; dwell times set persistence")));
                }
                jumps[i][j] = *p;
            }
            let sum: f64 = jumps[i].iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("transition row {from} sums to {sum}, expected 1")));
            }
        }
        let dwell = regions
            .iter()
            .map(|r| match dwell.get(r) {
                Some(d) if d.is_finite() && *d >= 1.0 => Ok(*d),
                Some(d) => Err(Error::Config(format!("dwell mean for {r} must be >= 1 frame, got {d}"))),
                None => Err(Error::Config(format!("no dwell mean for {r}"))),
            })
            .collect::<Result<_>>()?;
        Ok(GlanceChain { regions, jumps, dwell })
    }

    /// Per-frame transition matrix: stay with probability 1 - 1/dwell, else jump.
    pub fn frame_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.regions.len();
        (0..n)
            .map(|i| {
                let leave = 1.0 / self.dwell[i];
                (0..n).map(|j| if i == j { 1.0 - leave } else { leave * self.jumps[i][j] }).collect()
            })
            .collect()
    }

    pub fn stationary_share(&self, region: GlanceRegion) -> f64 {
        let pi = stationary(&self.frame_matrix());
        self.regions.iter().position(|r| *r == region).map_or(0.0, |i| pi[i])
    }

    /// Label sequence of `frames` frames, started from the stationary distribution.
    pub fn sample_labels<R: Rng>(&self, frames: usize, rng: &mut R) -> Vec<usize> {
        let pi = stationary(&self.frame_matrix());
        let mut state = draw(&pi, rng);
        let mut out = Vec::with_capacity(frames);
        while out.len() < frames {
            out.push(state);
            if rng.random::<f64>() < 1.0 / self.dwell[state] {
                state = draw(&self.jumps[state], rng);
            }
        }
        out
    }
}

fn draw<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let mut u = rng.random::<f64>() * weights.iter().sum::<f64>();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

impl ScenarioSpec {
    pub fn matrix_for(&self, task: TaskKind) -> &TransitionMatrix {
        self.task_transitions.get(&task).unwrap_or(&self.transitions)
    }

    pub fn validate(&self) -> Result<()> {
        if self.drivers.is_empty() {
            return Err(Error::Config("scenario has no drivers".into()));
        }
        let mut ids = BTreeSet::new();
        for d in &self.drivers {
            if d.subject_id.is_empty() || !ids.insert(d.subject_id.as_str()) {
                return Err(Error::Config(format!("driver id '{}' is empty or duplicated", d.subject_id)));
            }
            if !(0.0..=1.0).contains(&d.head_gain) {
                return Err(Error::Config(format!("driver {}: head_gain {} outside [0, 1]", d.subject_id, d.head_gain)));
            }
            if d.noise_sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(Error::Config(format!("driver {}: noise sigma must be positive", d.subject_id)));
            }
            let o = d.resting_offset;
            if ![o.yaw, o.pitch, o.roll].iter().all(|v| v.is_finite()) {
                return Err(Error::Config(format!("driver {}: resting offset must be finite", d.subject_id)));
            }
        }
        match self.layout.get(&GlanceRegion::Forward) {
            Some(e) if e.yaw == 0.0 && e.pitch == 0.0 => {}
            _ => return Err(Error::Config("layout must place forward at (0, 0)".into())),
        }
        if self.layout.values().any(|e| !(e.yaw.is_finite() && e.pitch.is_finite())) {
            return Err(Error::Config("layout angles must be finite".into()));
        }
        if !(self.forward_share > 0.0 && self.forward_share < 1.0) {
            return Err(Error::Config(format!("forward_share {} outside (0, 1)", self.forward_share)));
        }
        if self.frames_per_task == 0 || !(self.frame_period_s > 0.0 && self.frame_period_s.is_finite()) {
            return Err(Error::Config("frames_per_task and frame_period_s must be positive".into()));
        }
        if self.tasks.is_empty() {
            return Err(Error::Config("scenario has no tasks".into()));
        }
        let period_ms = self.frame_period_s * 1000.0;
        if ((self.frames_per_task as f64) * period_ms).round() >= i64::MAX as f64 || period_ms < 1.0 {
            return Err(Error::Config("frame period must be at least 1 ms".into()));
        }
        for task in &self.tasks {
            let matrix = self.matrix_for(*task);
            if !matrix.contains_key(&GlanceRegion::Forward) {
                return Err(Error::Config("transition matrix must include forward".into()));
            }
            if let Some(r) = matrix.keys().find(|r| !self.layout.contains_key(r)) {
                return Err(Error::Config(format!("region {r} has transitions but no layout entry")));
            }
            for d in &self.drivers {
                let chain = GlanceChain::new(matrix, &d.dwell_frames)?;
                let share = chain.stationary_share(GlanceRegion::Forward);
                if (share - self.forward_share).abs() > FORWARD_SHARE_TOLERANCE {
                    return Err(Error::Config(format!(
                        "driver {} task {task}: stationary forward share {share:.4} is not within {FORWARD_SHARE_TOLERANCE} of {}",
                        d.subject_id, self.forward_share
                    )));
                }
            }
        }
        Ok(())
    }
}

fn generate_stream(spec: &ScenarioSpec, d: &DriverSpec, task: TaskKind, stream_index: u64) -> Result<Vec<RotationSample>> {
    let chain = GlanceChain::new(spec.matrix_for(task), &d.dwell_frames)?;
    let mut rng = stream(spec.seed, Purpose::Synth, stream_index);
    let labels = chain.sample_labels(spec.frames_per_task, &mut rng);
    let subject: Arc<str> = d.subject_id.as_str().into();
    let task_id: Arc<str> = task.as_str().into();
    let innovation = (1.0 - NOISE_SMOOTHING * NOISE_SMOOTHING).sqrt();
    let mut noise: [f64; 3] = std::array::from_fn(|k| d.noise_sigma[k] * rng.sample::<f64, _>(StandardNormal));
    let period_ms = spec.frame_period_s * 1000.0;
    let mut out = Vec::with_capacity(labels.len());
    for (frame, &state) in labels.iter().enumerate() {
        if frame > 0 {
            for k in 0..3 {
                let e: f64 = StandardNormal.sample(&mut rng);
                noise[k] = NOISE_SMOOTHING * noise[k] + innovation * d.noise_sigma[k] * e;
            }
        }
        let region = chain.regions[state];
        let ecc = spec.layout[&region];
        let o = d.resting_offset;
        out.push(RotationSample {
            subject_id: subject.clone(),
            task_id: task_id.clone(),
            timestamp_ms: (frame as f64 * period_ms).round() as i64,
            rot_x: o.pitch + d.head_gain * ecc.pitch + noise[0],
            rot_y: o.yaw + d.head_gain * ecc.yaw + noise[1],
            rot_z: o.roll + noise[2],
            glance: region,
        });
    }
    Ok(out)
}

/// Simulate every (driver, task) stream. Deterministic in the scenario, independent of thread count.
pub fn generate(spec: &ScenarioSpec) -> Result<Dataset> {
    spec.validate()?;
    let n_tasks = spec.tasks.len() as u64;
    let chunks: Vec<Vec<RotationSample>> = spec
        .drivers
        .par_iter()
        .enumerate()
        .map(|(di, d)| {
            let mut rows = Vec::new();
            for (ti, task) in spec.tasks.iter().enumerate() {
                rows.extend(generate_stream(spec, d, *task, di as u64 * n_tasks + ti as u64)?);
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Dataset::new(chunks.concat(), format!("synthetic scenario (seed {})", spec.seed))
}

/// Population preset for [`default_scenario`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Mixed,
    AllOwl,
    AllLizard,
}

impl Profile {
    pub fn gain_range(self) -> (f64, f64) {
        match self {
            Profile::Mixed => (0.05, 0.95),
            Profile::AllOwl => (0.7, 0.95),
            Profile::AllLizard => (0.05, 0.3),
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixed" => Ok(Profile::Mixed),
            "all-owl" | "all_owl" => Ok(Profile::AllOwl),
            "all-lizard" | "all_lizard" => Ok(Profile::AllLizard),
            _ => Err(Error::Config(format!("unknown scenario profile '{s}'"))),
        }
    }
}

/// Default in-cab geometry, degrees. Illustrative values, not measurements.
pub fn default_layout() -> RegionLayout {
    use GlanceRegion::*;
    BTreeMap::from([
        (Forward, Eccentricity { yaw: 0.0, pitch: 0.0 }),
        (InstrumentCluster, Eccentricity { yaw: 0.0, pitch: -15.0 }),
        (LeftWindowMirror, Eccentricity { yaw: -40.0, pitch: 0.0 }),
        (CenterStack, Eccentricity { yaw: 30.0, pitch: -20.0 }),
        (RightWindowMirror, Eccentricity { yaw: 55.0, pitch: 0.0 }),
    ])
}

fn forward_row(ic: f64, lm: f64, cs: f64, rm: f64) -> TransitionMatrix {
    use GlanceRegion::*;
    let mut m: TransitionMatrix = BTreeMap::new();
    m.insert(
        Forward,
        BTreeMap::from([(InstrumentCluster, ic), (LeftWindowMirror, lm), (CenterStack, cs), (RightWindowMirror, rm)]),
    );
    for r in [InstrumentCluster, LeftWindowMirror, CenterStack, RightWindowMirror] {
        m.insert(r, BTreeMap::from([(Forward, 1.0)]));
    }
    m
}

/// Off-road glances return to forward; forward splits 0.2/0.2/0.4/0.2 over
/// instrument cluster, left mirror, center stack and right mirror.
pub fn default_transitions() -> TransitionMatrix {
    forward_row(0.2, 0.2, 0.4, 0.2)
}

/// The radio task sends most off-road glances to the center stack.
pub fn radio_transitions() -> TransitionMatrix {
    forward_row(0.05, 0.05, 0.85, 0.05)
}

pub const DEFAULT_FRAMES_PER_TASK: usize = 400;

/// Head-noise sigma grows with gain: owls move more, so their rotations spread wider.
pub fn default_noise_sigma(gain: f64) -> [f64; 3] {
    [1.0 + 2.0 * gain, 1.0 + 4.0 * gain, 1.0]
}

/// A population of `n_subjects` drivers with gains drawn uniformly from the profile's range.
///
/// Off-road dwell means are drawn per driver from [8, 16] frames and shared by
/// all off-road regions; the forward dwell is then set so the stationary
/// forward share equals `forward_share` exactly under every task's matrix.
pub fn default_scenario(profile: Profile, n_subjects: usize, seed: u64) -> Result<ScenarioSpec> {
    if n_subjects < 2 {
        return Err(Error::Config(format!("default scenario needs at least 2 subjects, got {n_subjects}")));
    }
    let forward_share = 0.95;
    let layout = default_layout();
    let (lo, hi) = profile.gain_range();
    let drivers = (0..n_subjects)
        .map(|i| {
            let mut rng = stream(seed, Purpose::Scenario, i as u64);
            let gain = rng.random_range(lo..=hi);
            let off_dwell = rng.random_range(8.0..=16.0);
            let forward_dwell = forward_share / (1.0 - forward_share) * off_dwell;
            let mut dwell: BTreeMap<GlanceRegion, f64> =
                layout.keys().map(|r| (*r, off_dwell)).collect();
            dwell.insert(GlanceRegion::Forward, forward_dwell);
            let mut offset = || 2.0 * rng.sample::<f64, _>(StandardNormal);
            let resting_offset = HeadOffset { yaw: offset(), pitch: offset(), roll: offset() };
            DriverSpec {
                subject_id: format!("S{:03}", i + 1),
                head_gain: gain,
                noise_sigma: default_noise_sigma(gain),
                dwell_frames: dwell,
                resting_offset,
            }
        })
        .collect();
    let spec = ScenarioSpec {
        drivers,
        layout,
        transitions: default_transitions(),
        task_transitions: BTreeMap::from([(TaskKind::RadioOnOff, radio_transitions())]),
        forward_share,
        frames_per_task: DEFAULT_FRAMES_PER_TASK,
        frame_period_s: default_period(),
        tasks: default_tasks(),
        seed,
    };
    spec.validate()?;
    Ok(spec)
}
