//! Experiment orchestration for the grid-geometry toolkit: configuration,
//! corpus sweeps, statement-level probes and the lemma-checker suite, with
//! CSV / JSON-lines result streams.

pub mod config;
pub mod probes;
pub mod rows;
pub mod suite;

pub use config::ExperimentConfig;
pub use rows::{write_csv, write_jsonl, ResultRow};
