//! Replicated experiments, their configuration, output files and summaries.

pub mod config;
pub mod experiment;
pub mod io;
pub mod summary;

pub use config::{AlphaStage, ContrastStage, CoordStage, ExperimentConfig, OutputSpec};
pub use experiment::{run_experiment, run_pipeline, run_rep, RepOutcome, RepRow, RowStatus, RunRecord};
pub use io::{read_field, write_field};
pub use summary::{summarize, ColumnSummary, Summary};
