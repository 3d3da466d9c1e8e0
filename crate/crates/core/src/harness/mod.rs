//! Command-line harness: run configuration, presets, CSV output,
//! equal-query comparison, memory accounting and the oracle suite.

pub mod accounting;
pub mod compare;
pub mod config;
pub mod presets;
pub mod records;
pub mod verify;

pub use accounting::{account_memory, AccountingMode, MemoryModel, TrackingAllocator};
pub use config::{Problem, ProblemSpec, RunConfig};
pub use presets::{preset, run_preset, PresetReport};
