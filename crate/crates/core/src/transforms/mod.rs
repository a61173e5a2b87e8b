//! Program transformations applied before test generation.

pub mod serialization;
pub mod testability;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::minilang::StaticError;

pub use serialization::{
    apply_serialization, capture_snapshots, SnapshotPool, DEFAULT_CAPTURE_BUDGET, DEFAULT_POOL_CAP,
    SEED_CLASS,
};
pub use testability::{
    add_empty_ctors, hoist_inner_classes, publicize, rename_script, testability_pipeline,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("hoisting would create a second class named {0}")]
    HoistCollision(String),
    #[error("program already declares a class named ObjectSeeds")]
    SeedClassCollision,
    #[error("program does not check: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Check(Vec<StaticError>),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TransformReport {
    pub members_publicized: usize,
    pub classes_publicized: usize,
    pub ctors_added: usize,
    pub ctor_classes: Vec<String>,
    pub hoisted: usize,
    /// Qualified inner-class name to hoisted name.
    pub renames: BTreeMap<String, String>,
    pub seeds_added: usize,
    /// Pool indices whose seeds could not be rehydrated on this program.
    pub omitted_seeds: Vec<usize>,
}
