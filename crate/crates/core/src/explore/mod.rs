//! Joint model and hardware search: greedy top-down layer replacement, with
//! fine-tuning abstracted behind an accuracy oracle.

mod oracle;
mod search;

pub use oracle::{replacement_key, AccuracyOracle, SyntheticOracle, TableOracle};
pub use search::{model_gen, run_framework, CandidateLog, FrameworkOptions, ModelGen, PerfRequirement, Requirements, SearchOutcome};
