//! Uniformly sampled scalar signals and synchronized multi-channel records.

use crate::error::{Error, Result};

/// A uniformly sampled scalar signal. Sample `k` is taken at time
/// `t0 + k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// Time of the first sample, seconds.
    pub t0: f64,
    /// Sample period, seconds. Always positive.
    pub dt: f64,
    pub samples: Vec<f64>,
    /// Set when a simulation blew up; the trace is then truncated at the
    /// last finite sample.
    pub diverged: bool,
}

impl Trace {
    pub fn new(t0: f64, dt: f64, samples: Vec<f64>) -> Self {
        Trace {
            t0,
            dt,
            samples,
            diverged: false,
        }
    }

    /// Zero-based sample grid starting at t = 0.
    pub fn from_samples(dt: f64, samples: Vec<f64>) -> Self {
        Trace::new(0.0, dt, samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time of sample `k`.
    pub fn time_at(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Time of the last sample, `t0` for an empty trace.
    pub fn duration(&self) -> f64 {
        if self.samples.is_empty() {
            self.t0
        } else {
            self.time_at(self.samples.len() - 1)
        }
    }

    /// Index of the sample closest to time `t`, clamped to the valid range.
    pub fn index_at(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt).round();
        (k.max(0.0) as usize).min(self.samples.len().saturating_sub(1))
    }

    /// Largest absolute sample value, 0 for an empty trace.
    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Drops the first `n` samples, advancing `t0` accordingly.
    pub fn skip_first(&self, n: usize) -> Trace {
        let n = n.min(self.samples.len());
        Trace {
            t0: self.t0 + n as f64 * self.dt,
            dt: self.dt,
            samples: self.samples[n..].to_vec(),
            diverged: self.diverged,
        }
    }

    /// Keeps the first `n` samples.
    pub fn truncated(&self, n: usize) -> Trace {
        Trace {
            t0: self.t0,
            dt: self.dt,
            samples: self.samples[..n.min(self.samples.len())].to_vec(),
            diverged: self.diverged,
        }
    }

    /// Same grid, transformed samples.
    pub fn map(&self, f: impl FnMut(&f64) -> f64) -> Trace {
        Trace {
            t0: self.t0,
            dt: self.dt,
            samples: self.samples.iter().map(f).collect(),
            diverged: self.diverged,
        }
    }
}

/// Channel name used for the position encoder signal.
pub const CH_POSITION: &str = "position";
/// Channel name used for the tacho-generator (velocity) signal.
pub const CH_VELOCITY: &str = "velocity";
/// Channel name used for the armature-current signal.
pub const CH_CURRENT: &str = "current";

/// A step input together with the measured channels, all sharing the same
/// grid and truncated to begin at the step onset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncedRecord {
    /// Step reference, volts.
    pub input: Trace,
    /// Measured channels in insertion order (position, velocity, current...).
    pub channels: Vec<(String, Trace)>,
}

impl SyncedRecord {
    pub fn new(input: Trace, channels: Vec<(String, Trace)>) -> Result<Self> {
        for (name, tr) in &channels {
            // Names become CSV header cells, so they must not contain
            // separators.
            if name.is_empty() || name.contains([',', '\n', '\r']) {
                return Err(Error::InvalidInput(format!(
                    "invalid channel name {name:?}"
                )));
            }
            if tr.len() != input.len() {
                return Err(Error::InvalidInput(format!(
                    "channel '{name}' has {} samples, input has {}",
                    tr.len(),
                    input.len()
                )));
            }
            if (tr.dt - input.dt).abs() > 1e-12 * input.dt {
                return Err(Error::InvalidInput(format!(
                    "channel '{name}' dt {} differs from input dt {}",
                    tr.dt, input.dt
                )));
            }
        }
        Ok(SyncedRecord { input, channels })
    }

    pub fn channel(&self, name: &str) -> Option<&Trace> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn require_channel(&self, name: &str) -> Result<&Trace> {
        self.channel(name).ok_or_else(|| {
            Error::InvalidInput(format!(
                "record has no '{name}' channel (present: {})",
                self.channels
                    .iter()
                    .map(|(n, _)| n.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })
    }

    pub fn dt(&self) -> f64 {
        self.input.dt
    }

    pub fn len(&self) -> usize {
        self.input.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }
}
