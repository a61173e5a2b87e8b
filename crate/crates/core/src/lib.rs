//! Semantic merge conflict detection by generated differential tests.

pub mod generation;
pub mod harness;
pub mod minilang;
pub mod scenario;
pub mod transforms;
