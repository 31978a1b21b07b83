//! Sample paths of the truncated spectral solution.

pub mod coords;
pub mod field;
pub mod ou;
pub mod synth;

pub use coords::{CoordinateSim, Scheme, Truncation};
pub use field::{
    simulate_field, simulate_layers, simulate_record, FieldRecord, FieldSink, Layer, Provenance, RecordSink,
    SimConfig, SimDiagnostics,
};
pub use ou::{em_unstable, ou_stationary_var, ou_step_em, ou_step_exact, ou_transition_sd};
pub use synth::{SynthMode, Synthesizer};
