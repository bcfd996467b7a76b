//! The four glance classifiers over normalised rotation features.
//!
//! Labels are dense class indices `0..n_classes`. Every model is a
//! deterministic function of its training data, parameters and seed.

pub mod forest;
pub mod hmm;
pub mod knn;
pub mod mlp;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use forest::{ForestModel, ForestParams};
pub use hmm::{HmmClassifier, HmmModel, HmmParams};
pub use knn::{KnnModel, KnnParams};
pub use mlp::{MlpModel, MlpParams};

use crate::data::{Dataset, GlanceRegion};
use crate::error::{Error, Result};

/// Normalised (rot_x, rot_y, rot_z).
pub type Feature = [f64; 3];
pub type Label = usize;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Knn,
    Forest,
    Mlp,
    Hmm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [ClassifierKind::Knn, ClassifierKind::Forest, ClassifierKind::Mlp, ClassifierKind::Hmm];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Knn => "knn",
            ClassifierKind::Forest => "forest",
            ClassifierKind::Mlp => "mlp",
            ClassifierKind::Hmm => "hmm",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ClassifierKind::Knn => "k-Nearest Neighbor",
            ClassifierKind::Forest => "Random Forest",
            ClassifierKind::Mlp => "Multilayer Perceptron",
            ClassifierKind::Hmm => "Hidden Markov Model",
        }
    }

    /// Whether the classifier labels whole sequences rather than single samples.
    pub fn is_sequential(self) -> bool {
        self == ClassifierKind::Hmm
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown classifier '{s}'")))
    }
}

/// Hyperparameters for all classifiers; missing fields take the defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierParams {
    pub knn: KnnParams,
    pub forest: ForestParams,
    pub mlp: MlpParams,
    pub hmm: HmmParams,
}

impl ClassifierParams {
    pub fn validate(&self) -> Result<()> {
        self.knn.validate()?;
        self.forest.validate()?;
        self.mlp.validate()?;
        self.hmm.validate()
    }
}

pub(crate) fn check_training(x: &[Feature], y: &[Label], n_classes: usize) -> Result<()> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Precondition(format!(
            "training set needs matching non-empty features and labels ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if let Some(bad) = y.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Precondition(format!("label {bad} out of range for {n_classes} classes")));
    }
    if x.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::Precondition("training features contain non-finite values".into()));
    }
    Ok(())
}

/// Most frequent label; ties go to the smaller label.
pub(crate) fn majority(labels: impl Iterator<Item = Label>, n_classes: usize) -> Label {
    let mut counts = vec![0usize; n_classes];
    labels.for_each(|l| counts[l] += 1);
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

/// A timestamp-ordered run of same-label samples from one (subject, task) stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSequence {
    pub subject_id: Arc<str>,
    pub task_id: Arc<str>,
    pub glance: GlanceRegion,
    /// Positions in the source dataset's sample list.
    pub indices: Vec<usize>,
}

/// Split every (subject, task) stream into maximal same-label runs.
///
/// Sequences come out ordered by (subject, task, first timestamp).
pub fn make_sequences(ds: &Dataset) -> Vec<SampleSequence> {
    let samples = ds.samples();
    let mut streams: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        streams.entry((&s.subject_id, &s.task_id)).or_default().push(i);
    }
    let mut out: Vec<SampleSequence> = Vec::new();
    for idx in streams.into_values() {
        let mut idx = idx;
        idx.sort_by_key(|&i| samples[i].timestamp_ms);
        let mut current: Option<SampleSequence> = None;
        for i in idx {
            let s = &samples[i];
            match current.as_mut() {
                Some(seq) if seq.glance == s.glance => seq.indices.push(i),
                _ => {
                    out.extend(current.take());
                    current = Some(SampleSequence {
                        subject_id: s.subject_id.clone(),
                        task_id: s.task_id.clone(),
                        glance: s.glance,
                        indices: vec![i],
                    });
                }
            }
        }
        out.extend(current);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum TrainedModel {
    Knn(KnnModel),
    Forest(ForestModel),
    Mlp(MlpModel),
    Hmm(HmmClassifier),
}

impl PartialEq for KnnModel {
    fn eq(&self, other: &Self) -> bool {
        serde_json::to_value(self).ok() == serde_json::to_value(other).ok()
    }
}

impl TrainedModel {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            TrainedModel::Knn(_) => ClassifierKind::Knn,
            TrainedModel::Forest(_) => ClassifierKind::Forest,
            TrainedModel::Mlp(_) => ClassifierKind::Mlp,
            TrainedModel::Hmm(_) => ClassifierKind::Hmm,
        }
    }

    /// Train `kind` on labelled samples. The HMM groups samples into runs of
    /// consecutive equal labels with `sequence_ids` (same id = same sequence).
    pub fn train(
        kind: ClassifierKind,
        x: &[Feature],
        y: &[Label],
        sequence_ids: &[usize],
        n_classes: usize,
        params: &ClassifierParams,
        seed: u64,
    ) -> Result<Self> {
        Ok(match kind {
            ClassifierKind::Knn => TrainedModel::Knn(KnnModel::fit(x, y, n_classes, &params.knn)?),
            ClassifierKind::Forest => TrainedModel::Forest(ForestModel::fit(x, y, n_classes, &params.forest, seed)?),
            ClassifierKind::Mlp => TrainedModel::Mlp(MlpModel::fit(x, y, n_classes, &params.mlp, seed)?),
            ClassifierKind::Hmm => {
                check_training(x, y, n_classes)?;
                if sequence_ids.len() != x.len() {
                    return Err(Error::Precondition("hmm training needs one sequence id per sample".into()));
                }
                let mut per_class: Vec<Vec<&[Feature]>> = vec![Vec::new(); n_classes];
                let mut start = 0;
                for end in 1..=x.len() {
                    if end == x.len() || sequence_ids[end] != sequence_ids[start] {
                        per_class[y[start]].push(&x[start..end]);
                        start = end;
                    }
                }
                TrainedModel::Hmm(HmmClassifier::fit(&per_class, &params.hmm, seed)?)
            }
        })
    }

    /// Label for one sample (non-sequential models) or one sequence (HMM).
    pub fn classify(&self, seq: &[Feature]) -> Result<Label> {
        match self {
            TrainedModel::Hmm(m) => m.classify(seq),
            _ if seq.len() != 1 => Err(Error::Precondition("sample classifiers take exactly one feature vector".into())),
            TrainedModel::Knn(m) => Ok(m.classify(&seq[0])),
            TrainedModel::Forest(m) => Ok(m.classify(&seq[0])),
            TrainedModel::Mlp(m) => Ok(m.classify(&seq[0])),
        }
    }
}

/// On-disk model envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SavedModel {
    pub version: u32,
    pub seed: u64,
    /// Region for each class index.
    pub classes: Vec<GlanceRegion>,
    pub params: ClassifierParams,
    pub normalization: Option<crate::preprocess::NormalizationParams>,
    #[serde(flatten)]
    pub model: TrainedModel,
}

impl SavedModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let saved: SavedModel = serde_json::from_str(&text)?;
        if saved.version > MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "model format version {} is newer than supported version {MODEL_FORMAT_VERSION}",
                saved.version
            )));
        }
        Ok(saved)
    }
}
