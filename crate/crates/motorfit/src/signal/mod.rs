//! Conditioning of raw oscilloscope-style records into synchronized,
//! differentiated, zero-initial-condition signal sets.

mod csv;
mod prep;

pub use csv::{
    load_trace_csv, parse_native_csv, parse_record_csv, parse_scope_csv, write_record_csv,
    CsvFormat, LoadedTrace,
};
pub use prep::{differentiate, downsample, synchronize, unwrap_position, zero_shift, DiffScheme};

/// Default step-onset threshold, volts: half of the smallest step input used
/// in practice (1.24 V), comfortably above the noise floor.
pub const DEFAULT_STEP_THRESHOLD: f64 = 0.5;

/// Encoder unwrap defaults taken from the trainer: a jump detector of 15 V,
/// a wrap span of 20.4 V and a 1.0 V glitch floor.
pub const DEFAULT_UNWRAP_JUMP: f64 = 15.0;
pub const DEFAULT_UNWRAP_SPAN: f64 = 20.4;
pub const DEFAULT_GLITCH_FLOOR: f64 = 1.0;
