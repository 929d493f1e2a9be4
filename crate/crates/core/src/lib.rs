//! Desk-scale toolkit for imbalanced gaming-chat toxicity classification.
//!
//! The crate covers the whole experimental loop: ingesting and analysing
//! labelled chat corpora ([`corpus`]), hashed n-gram featurization
//! ([`features`]), a linear softmax classifier with class-weighted and focal
//! losses ([`model`]), alternative decision strategies ([`strategies`]),
//! paraphrase-based minority-class augmentation ([`augment`]), post-hoc
//! calibration ([`calibrate`]) and the evaluation harness ([`evaluate`]).
//! [`generator`] produces a deterministic synthetic corpus to run it all on.

pub mod augment;
pub mod calibrate;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod generator;
pub mod model;
pub mod strategies;

pub use corpus::{ClassId, Dataset, LabeledExample, Origin, NUM_CLASSES};
pub use error::{Error, Result};
pub use features::{FeatureConfig, SparseVector};
pub use model::{ModelParams, ProbDist, TrainConfig};
