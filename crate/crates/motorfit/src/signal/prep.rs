//! Step synchronization, encoder unwrapping, zero-shifting, decimation and
//! finite-difference differentiation.

use crate::error::{Error, Result};
use crate::trace::{SyncedRecord, Trace};

/// Truncates every trace to begin at the step onset (the first sample where
/// the input crosses `threshold` from below), trims all traces to a common
/// length and rebases time to zero. A record whose input already starts
/// above the threshold is taken to be synchronized, which makes the
/// operation idempotent.
pub fn synchronize(
    input: &Trace,
    signals: &[(String, Trace)],
    threshold: f64,
) -> Result<SyncedRecord> {
    for (name, tr) in signals {
        if (tr.dt - input.dt).abs() > 1e-12 * input.dt {
            return Err(Error::InvalidInput(format!(
                "signal '{name}' dt {} differs from input dt {}",
                tr.dt, input.dt
            )));
        }
    }
    if input.is_empty() {
        return Err(Error::Synchronize("empty input trace".into()));
    }

    let mut crossings = Vec::new();
    if input.samples[0] >= threshold {
        crossings.push(0);
    }
    for k in 1..input.len() {
        if input.samples[k] >= threshold && input.samples[k - 1] < threshold {
            crossings.push(k);
        }
    }
    let onset = match crossings.as_slice() {
        [] => return Err(Error::Synchronize("no step onset".into())),
        [k] => *k,
        _ => {
            return Err(Error::Synchronize(format!(
                "{} threshold crossings; the input must be a single step",
                crossings.len()
            )))
        }
    };

    let mut len = input.len() - onset;
    for (_, tr) in signals {
        len = len.min(tr.len().saturating_sub(onset));
    }
    if len == 0 {
        return Err(Error::Synchronize(
            "no samples remain after the step onset".into(),
        ));
    }

    let cut = |tr: &Trace| Trace::new(0.0, tr.dt, tr.samples[onset..onset + len].to_vec());
    SyncedRecord::new(
        cut(input),
        signals.iter().map(|(n, tr)| (n.clone(), cut(tr))).collect(),
    )
}

/// Repairs encoder glitches and unwraps the +-10 V position signal:
/// samples below `glitch_floor` that jump more than 5 V from their
/// predecessor are held, then every adjacent drop beyond `jump` shifts the
/// remainder of the record by `span`.
pub fn unwrap_position(p: &Trace, jump: f64, span: f64, glitch_floor: f64) -> Trace {
    let mut s = p.samples.clone();
    for i in 1..s.len() {
        if s[i].abs() < glitch_floor && (s[i] - s[i - 1]).abs() > 5.0 {
            s[i] = s[i - 1];
        }
    }
    let n = s.len();
    for i in 0..n.saturating_sub(1) {
        if s[i] - s[i + 1] > jump {
            for v in &mut s[i + 1..] {
                *v += span;
            }
        } else if s[i] - s[i + 1] < -jump {
            for v in &mut s[i + 1..] {
                *v -= span;
            }
        }
    }
    Trace {
        t0: p.t0,
        dt: p.dt,
        samples: s,
        diverged: p.diverged,
    }
}

/// Subtracts the first sample from every sample.
pub fn zero_shift(t: &Trace) -> Trace {
    let first = t.samples.first().copied().unwrap_or(0.0);
    t.map(|&v| v - first)
}

/// Pure decimation: keeps every `ratio`-th sample starting at index 0. Used
/// as the implicit Nyquist low-pass ahead of differentiation; there is
/// deliberately no averaging.
pub fn downsample(t: &Trace, ratio: usize) -> Result<Trace> {
    if ratio < 1 {
        return Err(Error::InvalidInput("downsample ratio must be >= 1".into()));
    }
    let samples: Vec<f64> = t.samples.iter().step_by(ratio).copied().collect();
    if samples.len() < 2 {
        return Err(Error::TraceTooShort(format!(
            "downsampling by {ratio} leaves {} samples",
            samples.len()
        )));
    }
    Ok(Trace {
        t0: t.t0,
        dt: t.dt * ratio as f64,
        samples,
        diverged: t.diverged,
    })
}

/// Central finite-difference stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffScheme {
    /// `(f(t+D) - f(t-D)) / 2D`, exact on quadratics.
    Central3,
    /// `(-f(t+2D) + 8f(t+D) - 8f(t-D) + f(t-2D)) / 12D`, exact on quartics.
    Central5,
}

impl DiffScheme {
    /// Samples dropped at each boundary.
    pub fn margin(&self) -> usize {
        match self {
            DiffScheme::Central3 => 1,
            DiffScheme::Central5 => 2,
        }
    }
}

/// Differentiates on the sample grid. Boundary samples lacking a full
/// stencil are dropped, so the output starts `margin * dt` later and is
/// `2 * margin` samples shorter.
pub fn differentiate(t: &Trace, scheme: DiffScheme) -> Result<Trace> {
    let m = scheme.margin();
    if t.len() < 2 * m + 1 {
        return Err(Error::TraceTooShort(format!(
            "differentiation needs at least {} samples, got {}",
            2 * m + 1,
            t.len()
        )));
    }
    let f = &t.samples;
    let dt = t.dt;
    let samples: Vec<f64> = (m..t.len() - m)
        .map(|k| match scheme {
            DiffScheme::Central3 => (f[k + 1] - f[k - 1]) / (2.0 * dt),
            DiffScheme::Central5 => {
                (-f[k + 2] + 8.0 * f[k + 1] - 8.0 * f[k - 1] + f[k - 2]) / (12.0 * dt)
            }
        })
        .collect();
    Ok(Trace {
        t0: t.t0 + m as f64 * dt,
        dt,
        samples,
        diverged: t.diverged,
    })
}
