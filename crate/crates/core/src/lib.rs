//! Driver glance-region classification from head rotation.
//!
//! The crate covers the whole pipeline: landmark reduction and pose
//! estimation ([`pose`]), dataset handling ([`data`]), subject-wise
//! Monte-Carlo preprocessing ([`preprocess`]), exploratory PCA ([`pca`]),
//! four classifiers ([`classifiers`]), metrics and the experiment harness
//! ([`evaluation`]), per-driver head-movement profiles ([`diffs`]) and a
//! seeded driver simulator ([`synth`]).

pub mod classifiers;
pub mod cli;
pub mod data;
pub mod diffs;
pub mod error;
pub mod evaluation;
pub mod format;
pub mod pca;
pub mod pose;
pub mod preprocess;
pub mod rng;
pub mod synth;

pub use data::{Dataset, GlanceRegion, RotationSample, TaskKind};
pub use error::{Error, Result};
