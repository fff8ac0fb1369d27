//! Ground-truth generation: fixed-step RK4 integration of LTI and saturating
//! servo-loop dynamics, reference waveforms, seeded noise and classification
//! of closed-loop behaviour into the six servo modes.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lti::{tf_to_ss_companion, StateSpaceModel, TransferFunction};
use crate::trace::Trace;

/// States above this magnitude are treated as divergent before they reach
/// the non-finite range. Nine orders of magnitude above any signal this
/// toolkit works with.
const DIVERGENCE_GUARD: f64 = 1e12;

fn rk4_step(
    a: &nalgebra::DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
    u: f64,
    dt: f64,
) -> DVector<f64> {
    let f = |x: &DVector<f64>| a * x + b * u;
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (dt / 2.0)));
    let k3 = f(&(x + &k2 * (dt / 2.0)));
    let k4 = f(&(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

fn state_ok(x: &DVector<f64>) -> bool {
    x.iter()
        .all(|v| v.is_finite() && v.abs() < DIVERGENCE_GUARD)
}

/// Classical RK4 integration of `x' = Ax + Bu`, `y = Cx + Du` from zero
/// initial state, with the input held constant between samples (ZOH). The
/// output is sampled on the input grid; divergence truncates the trace and
/// sets the flag.
pub fn simulate_lti(m: &StateSpaceModel, input: &Trace) -> Trace {
    let x0 = DVector::zeros(m.order());
    simulate_lti_from(m, &x0, input)
}

/// [`simulate_lti`] from an arbitrary initial state.
pub fn simulate_lti_from(m: &StateSpaceModel, x0: &DVector<f64>, input: &Trace) -> Trace {
    let (outputs, diverged) = simulate_trajectory(m, x0, input, |m, x, u| (&m.c * x)[0] + m.d * u);
    Trace {
        t0: input.t0,
        dt: input.dt,
        samples: outputs,
        diverged,
    }
}

/// Full state trajectory, for callers that need every channel.
pub fn simulate_states(m: &StateSpaceModel, input: &Trace) -> (Vec<DVector<f64>>, bool) {
    let x0 = DVector::zeros(m.order());
    let mut states = Vec::with_capacity(input.len());
    let mut x = x0;
    let mut diverged = false;
    for k in 0..input.len() {
        if !state_ok(&x) {
            diverged = true;
            break;
        }
        states.push(x.clone());
        x = rk4_step(&m.a, &m.b, &x, input.samples[k], input.dt);
    }
    (states, diverged)
}

fn simulate_trajectory(
    m: &StateSpaceModel,
    x0: &DVector<f64>,
    input: &Trace,
    output: impl Fn(&StateSpaceModel, &DVector<f64>, f64) -> f64,
) -> (Vec<f64>, bool) {
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(input.len());
    let mut diverged = false;
    for k in 0..input.len() {
        let u = input.samples[k];
        let y = output(m, &x, u);
        if !state_ok(&x) || !y.is_finite() || y.abs() >= DIVERGENCE_GUARD {
            diverged = true;
            break;
        }
        out.push(y);
        x = rk4_step(&m.a, &m.b, &x, u, input.dt);
    }
    (out, diverged)
}

/// Reference waveform kinds available on the trainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveformKind {
    Step,
    Sine,
    Triangle,
    Square,
}

/// Reference waveform: a step of `magnitude`, or a periodic wave with the
/// given magnitude and frequency. Phase conventions: the square wave starts
/// at `+magnitude`, the triangle starts rising from zero, the sine is
/// `magnitude * sin(2 pi f t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveformSpec {
    pub kind: WaveformKind,
    pub magnitude: f64,
    /// Hz; ignored for steps.
    pub frequency: f64,
}

impl WaveformSpec {
    pub fn step(magnitude: f64) -> Self {
        WaveformSpec {
            kind: WaveformKind::Step,
            magnitude,
            frequency: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.magnitude.is_nan() || self.magnitude <= 0.0 || !self.magnitude.is_finite() {
            return Err(Error::InvalidInput("waveform magnitude must be > 0".into()));
        }
        if self.kind != WaveformKind::Step
            && (self.frequency.is_nan() || self.frequency <= 0.0 || !self.frequency.is_finite())
        {
            return Err(Error::InvalidInput(
                "periodic waveforms need a frequency > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let m = self.magnitude;
        match self.kind {
            WaveformKind::Step => m,
            WaveformKind::Sine => m * (2.0 * std::f64::consts::PI * self.frequency * t).sin(),
            WaveformKind::Square => {
                let phase = wrap_phase(t * self.frequency);
                if phase < 0.5 {
                    m
                } else {
                    -m
                }
            }
            WaveformKind::Triangle => {
                let phase = wrap_phase(t * self.frequency);
                if phase < 0.25 {
                    4.0 * m * phase
                } else if phase < 0.75 {
                    m - 4.0 * m * (phase - 0.25)
                } else {
                    -m + 4.0 * m * (phase - 0.75)
                }
            }
        }
    }

    /// Final value over a step experiment (the step magnitude); periodic
    /// kinds have no single final value, so callers pick their own target.
    pub fn final_value(&self) -> f64 {
        self.magnitude
    }
}

fn wrap_phase(cycles: f64) -> f64 {
    let p = cycles.fract();
    if p < 0.0 {
        p + 1.0
    } else {
        p
    }
}

impl std::str::FromStr for WaveformSpec {
    type Err = Error;

    /// `step:MAG`, `sine:MAG:FREQ`, `triangle:MAG:FREQ`, `square:MAG:FREQ`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Parse(format!("bad waveform spec '{s}'"));
        let kind = match *parts.first().ok_or_else(bad)? {
            "step" => WaveformKind::Step,
            "sine" => WaveformKind::Sine,
            "triangle" => WaveformKind::Triangle,
            "square" => WaveformKind::Square,
            _ => return Err(bad()),
        };
        let parse = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let spec = match (kind, parts.len()) {
            (WaveformKind::Step, 2) => WaveformSpec {
                kind,
                magnitude: parse(parts[1])?,
                frequency: 0.0,
            },
            (_, 3) if kind != WaveformKind::Step => WaveformSpec {
                kind,
                magnitude: parse(parts[1])?,
                frequency: parse(parts[2])?,
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Exact sampled waveform on a `[0, duration]` grid.
pub fn generate_reference(spec: &WaveformSpec, dt: f64, duration: f64) -> Result<Trace> {
    spec.validate()?;
    if dt <= 0.0 || duration < dt {
        return Err(Error::InvalidInput(
            "generate_reference requires dt > 0 and duration >= dt".into(),
        ));
    }
    let steps = (duration / dt + 1e-9).floor() as usize;
    let samples = (0..=steps).map(|k| spec.value_at(k as f64 * dt)).collect();
    Ok(Trace::from_samples(dt, samples))
}

/// Adds uniform noise in `[-amplitude, +amplitude]`, deterministic per seed.
pub fn add_noise(t: &Trace, amplitude: f64, seed: u64) -> Trace {
    if amplitude == 0.0 {
        return t.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    t.map(|&v| v + rng.random_range(-amplitude..=amplitude))
}

/// A position servo loop: plant driven by `u = sat(kp (ref - pos) - kv vel)`.
#[derive(Debug, Clone)]
pub struct ServoLoopConfig {
    /// Position plant, strictly proper, order <= 3.
    pub plant: TransferFunction,
    pub kp: f64,
    pub kv: f64,
    /// Symmetric actuator limit; `None` leaves the loop linear.
    pub sat_limit: Option<f64>,
    pub reference: WaveformSpec,
}

/// Position and velocity histories of a servo-loop run.
#[derive(Debug, Clone)]
pub struct ServoResponse {
    pub position: Trace,
    pub velocity: Trace,
}

/// Integrates the saturating position/velocity feedback loop. The velocity
/// signal is the derivative of the plant output, which must not feed the
/// input through directly (numerator degree at most `n - 2`) unless `kv` is
/// zero.
pub fn simulate_servo_loop(cfg: &ServoLoopConfig, dt: f64, duration: f64) -> Result<ServoResponse> {
    if !(cfg.kp >= 0.0 && cfg.kv >= 0.0) {
        return Err(Error::InvalidInput("feedback gains must be >= 0".into()));
    }
    if let Some(s) = cfg.sat_limit {
        if s.is_nan() || s <= 0.0 {
            return Err(Error::InvalidInput("saturation limit must be > 0".into()));
        }
    }
    if !cfg.plant.is_strictly_proper() {
        return Err(Error::InvalidInput(
            "servo plant must be strictly proper".into(),
        ));
    }
    if cfg.plant.den().degree() > 3 {
        return Err(Error::InvalidInput("servo plant order must be <= 3".into()));
    }
    let m = tf_to_ss_companion(&cfg.plant);
    let c_vel = &m.c * &m.a;
    let feedthrough = (&m.c * &m.b)[0];
    if feedthrough.abs() > 1e-12 && cfg.kv != 0.0 {
        return Err(Error::InvalidInput(
            "velocity feedback needs numerator degree <= order - 2".into(),
        ));
    }

    let reference = generate_reference(&cfg.reference, dt, duration)?;
    let mut x = DVector::<f64>::zeros(m.order());
    let mut position = Vec::with_capacity(reference.len());
    let mut velocity = Vec::with_capacity(reference.len());
    let mut diverged = false;

    // The reference is held between samples; the feedback path itself is
    // continuous, so the drive is re-evaluated at every RK4 stage.
    let drive = |x: &DVector<f64>, r: f64| -> f64 {
        let mut u = cfg.kp * (r - (&m.c * x)[0]) - cfg.kv * (&c_vel * x)[0];
        if let Some(s) = cfg.sat_limit {
            u = u.clamp(-s, s);
        }
        u
    };

    for k in 0..reference.len() {
        if !state_ok(&x) {
            diverged = true;
            break;
        }
        let r = reference.samples[k];
        let pos = (&m.c * &x)[0];
        let u = drive(&x, r);
        let vel = (&c_vel * &x)[0] + feedthrough * u;
        if !pos.is_finite() || !vel.is_finite() {
            diverged = true;
            break;
        }
        position.push(pos);
        velocity.push(vel);

        let f = |x: &DVector<f64>| &m.a * x + &m.b * drive(x, r);
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (dt / 2.0)));
        let k3 = f(&(&x + &k2 * (dt / 2.0)));
        let k4 = f(&(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }

    let mut position = Trace::from_samples(dt, position);
    let mut velocity_t = Trace::from_samples(dt, velocity);
    position.diverged = diverged;
    velocity_t.diverged = diverged;
    Ok(ServoResponse {
        position,
        velocity: velocity_t,
    })
}

/// The six operating modes observed on an industrial servo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Unstable,
    OverDamped,
    CriticallyDamped,
    UnderDamped,
    Oscillatory,
    Chattering,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Unstable => "unstable",
            Mode::OverDamped => "over-damped",
            Mode::CriticallyDamped => "critically-damped",
            Mode::UnderDamped => "under-damped",
            Mode::Oscillatory => "oscillatory",
            Mode::Chattering => "chattering",
        };
        f.write_str(s)
    }
}

/// Thresholds behind [`classify_mode`]; every cutoff the decision procedure
/// uses is explicit here.
#[derive(Debug, Clone)]
pub struct ClassifyConfig {
    /// Overshoot beyond this fraction of the reference counts as oscillatory
    /// approach.
    pub overshoot_frac: f64,
    /// Envelope log-slope above +this is growth, below -this is decay (1/s).
    pub envelope_slope_tol: f64,
    /// Fraction of trailing extrema used for the envelope fit.
    pub envelope_tail_frac: f64,
    /// A sustained oscillation is chattering when its frequency exceeds this
    /// multiple of the dominant-frequency estimate...
    pub chatter_freq_factor: f64,
    /// ...and its peak-to-peak stays below this fraction of the reference.
    pub chatter_p2p_frac: f64,
    /// Settling band as a fraction of the reference.
    pub settle_band_frac: f64,
    /// No-overshoot responses settling within this factor of
    /// `min_settle_reference` are critically damped.
    pub critical_settle_factor: f64,
    /// Fastest no-overshoot settling time observed over a calibration grid;
    /// without it every no-overshoot response is over-damped.
    pub min_settle_reference: Option<f64>,
    /// |error| beyond this multiple of the reference at the end of the trace
    /// is divergence even without oscillation peaks.
    pub escape_factor: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            overshoot_frac: 0.02,
            envelope_slope_tol: 1e-3,
            envelope_tail_frac: 0.6,
            chatter_freq_factor: 10.0,
            chatter_p2p_frac: 0.05,
            settle_band_frac: 0.02,
            critical_settle_factor: 1.5,
            min_settle_reference: None,
            escape_factor: 3.0,
        }
    }
}

/// Classifies a position response against the step target `reference_final`.
///
/// Decision order: divergence flag or a growing/escaping error envelope is
/// `Unstable`; a sustained bounded oscillation is `Chattering` when fast and
/// small, otherwise `Oscillatory`; decaying responses split on overshoot
/// into `UnderDamped` versus the `OverDamped`/`CriticallyDamped` pair, which
/// is resolved by settling time against the calibrated minimum.
pub fn classify_mode(position: &Trace, reference_final: f64, cfg: &ClassifyConfig) -> Result<Mode> {
    if position.len() < 8 {
        return Err(Error::TraceTooShort(
            "mode classification needs at least 8 samples".into(),
        ));
    }
    if reference_final == 0.0 {
        return Err(Error::InvalidInput(
            "reference_final must be nonzero".into(),
        ));
    }
    if position.diverged {
        return Ok(Mode::Unstable);
    }

    let r = reference_final;
    let e: Vec<f64> = position.samples.iter().map(|y| y - r).collect();
    let n = e.len();

    // Local extrema of the error, ignoring numerically flat wiggle.
    let floor = 1e-9 * r.abs();
    let mut extrema: Vec<(f64, f64)> = Vec::new();
    for i in 1..n - 1 {
        if (e[i] - e[i - 1]) * (e[i + 1] - e[i]) < 0.0 && e[i].abs() > floor {
            extrema.push((position.time_at(i), e[i].abs()));
        }
    }

    // Escape without oscillation: monotone blow-up.
    if e[n - 1].abs() > cfg.escape_factor * r.abs() {
        return Ok(Mode::Unstable);
    }

    let overshoot = position
        .samples
        .iter()
        .map(|y| (y - r) * r.signum())
        .fold(f64::MIN, f64::max)
        > cfg.overshoot_frac * r.abs();

    let envelope_slope = if extrema.len() >= 4 {
        let k0 = ((extrema.len() as f64) * (1.0 - cfg.envelope_tail_frac)) as usize;
        Some(log_slope(&extrema[k0..]))
    } else {
        None
    };

    if let Some(slope) = envelope_slope {
        if slope > cfg.envelope_slope_tol {
            return Ok(Mode::Unstable);
        }
        if slope >= -cfg.envelope_slope_tol {
            // Sustained oscillation. Compare its frequency with the dominant
            // frequency implied by the rise to the first reference crossing.
            let k0 = ((extrema.len() as f64) * (1.0 - cfg.envelope_tail_frac)) as usize;
            let tail = &extrema[k0..];
            let spacing = (tail.last().unwrap().0 - tail[0].0) / (tail.len() - 1) as f64;
            let f_osc = 1.0 / (2.0 * spacing);
            let first_cross = position
                .samples
                .iter()
                .position(|y| (y - r) * r.signum() >= 0.0)
                .map(|i| position.time_at(i));
            let f_dom = first_cross
                .filter(|t| *t > 0.0)
                .map(|t| 1.0 / (4.0 * t))
                .unwrap_or(f_osc);
            let half = &position.samples[n / 2..];
            let p2p = half.iter().cloned().fold(f64::MIN, f64::max)
                - half.iter().cloned().fold(f64::MAX, f64::min);
            if f_osc > cfg.chatter_freq_factor * f_dom && p2p < cfg.chatter_p2p_frac * r.abs() {
                return Ok(Mode::Chattering);
            }
            return Ok(Mode::Oscillatory);
        }
    }

    // Decaying (or monotone) from here on.
    if overshoot {
        return Ok(Mode::UnderDamped);
    }

    let band = cfg.settle_band_frac * r.abs();
    let settle = (0..n)
        .rev()
        .find(|&i| e[i].abs() > band)
        .map(|i| position.time_at(i + 1))
        .unwrap_or(position.t0);
    match cfg.min_settle_reference {
        Some(min_settle) if settle <= cfg.critical_settle_factor * min_settle => {
            Ok(Mode::CriticallyDamped)
        }
        _ => Ok(Mode::OverDamped),
    }
}

fn log_slope(points: &[(f64, f64)]) -> f64 {
    // Least-squares slope of ln(amplitude) over time.
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, a)| *a > 0.0)
        .map(|(t, a)| (*t, a.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|(t, _)| t).sum();
    let sy: f64 = pts.iter().map(|(_, y)| y).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| t * t).sum();
    let sxy: f64 = pts.iter().map(|(t, y)| t * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        0.0
    } else {
        (n * sxy - sx * sy) / denom
    }
}
