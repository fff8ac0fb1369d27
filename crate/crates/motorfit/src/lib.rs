//! Identification of state-space models and transfer functions of
//! DC-motor-like LTI systems from step-response records.
//!
//! The crate is organised around the measurement-to-model pipeline:
//!
//! * [`lti`] — exact algebra on SISO LTI systems: polynomials, transfer
//!   functions, state-space models, conversions, pole/zero analysis and
//!   model-order reduction.
//! * [`sim`] — ground-truth generation: fixed-step RK4 integration with
//!   zero-order-hold inputs, saturating servo loops, reference waveforms,
//!   seeded noise and response-mode classification.
//! * [`signal`] — conditioning of raw oscilloscope-style records: CSV
//!   ingestion, step synchronisation, encoder unwrapping, decimation and
//!   finite-difference differentiation.
//! * [`pinv`] — identification by stacking state/derivative samples into a
//!   linear system solved with the Moore–Penrose pseudo-inverse.
//! * [`markov`] — identification via Markov-parameter estimation, Hankel
//!   order detection and companion-form realization.
//! * [`model`] — serializable model documents and fit reports.

pub mod error;
pub mod lti;
pub mod markov;
pub mod model;
pub mod pinv;
pub mod signal;
pub mod sim;
pub mod trace;

mod linalg;

pub use error::{Error, Result};
pub use lti::{Polynomial, StateSpaceModel, TransferFunction};
pub use trace::{SyncedRecord, Trace};
