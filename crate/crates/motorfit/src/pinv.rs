//! State-space identification by pseudo-inversion: sampled states and their
//! derivatives are stacked into one linear system whose unknowns are the
//! rows of `A` followed by `B`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lti::{cancel_near_pole_zero, ss_to_tf, StateSpaceModel, TransferFunction};
use crate::signal::{differentiate, DiffScheme};
use crate::trace::{SyncedRecord, Trace, CH_CURRENT, CH_POSITION, CH_VELOCITY};

/// Default SVD cutoff for the pseudo-inverse solve.
pub const DEFAULT_RCOND: f64 = 1e-10;
/// Default pole/zero cancellation tolerance (1/s), sized to the near-origin
/// pair the method typically produces.
pub const DEFAULT_CANCEL_TOL: f64 = 0.05;

/// The stacked linear system `lhs = mat * [a1 .. an, B^T]^T`. Each time
/// sample contributes `n` block rows: row `j` carries `X^T` in columns
/// `[j n, j n + n)` and `Va` in column `n^2 + j`.
#[derive(Debug, Clone)]
pub struct RegressionSystem {
    pub mat: DMatrix<f64>,
    pub lhs: DVector<f64>,
    /// State dimension `n`.
    pub states: usize,
    /// Number of time samples `L`.
    pub samples: usize,
}

impl RegressionSystem {
    /// Minimum number of time samples: the linear-algebra bound `n + 1`
    /// except for the extended third-order model, which keeps the
    /// documented twelve-sample floor.
    pub fn min_samples(states: usize) -> usize {
        if states == 3 {
            12
        } else {
            states + 1
        }
    }

    /// Builds the system from raw state/derivative samples. Both slices
    /// must hold `n`-vectors aligned sample for sample.
    pub fn from_samples(
        xs: &[DVector<f64>],
        xdots: &[DVector<f64>],
        va: f64,
    ) -> Result<RegressionSystem> {
        if va == 0.0 || !va.is_finite() {
            return Err(Error::InvalidInput(
                "step magnitude va must be nonzero (the input column of the regression would vanish)".into(),
            ));
        }
        if xs.is_empty() || xs.len() != xdots.len() {
            return Err(Error::InvalidInput(
                "state and derivative sample counts differ".into(),
            ));
        }
        let n = xs[0].len();
        if n == 0 || xs.iter().chain(xdots).any(|x| x.len() != n) {
            return Err(Error::InvalidInput(
                "inconsistent state dimensions in regression samples".into(),
            ));
        }
        let l = xs.len();
        if l < Self::min_samples(n) {
            return Err(Error::InvalidInput(format!(
                "{l} samples are too few for a {n}-state model (need >= {})",
                Self::min_samples(n)
            )));
        }
        let unknowns = n * n + n;
        let mut mat = DMatrix::<f64>::zeros(n * l, unknowns);
        let mut lhs = DVector::<f64>::zeros(n * l);
        for (k, (x, xd)) in xs.iter().zip(xdots).enumerate() {
            for j in 0..n {
                let row = k * n + j;
                for i in 0..n {
                    mat[(row, j * n + i)] = x[i];
                }
                mat[(row, n * n + j)] = va;
                lhs[row] = xd[j];
            }
        }
        Ok(RegressionSystem {
            mat,
            lhs,
            states: n,
            samples: l,
        })
    }
}

/// Builds the motor regression from a preprocessed record. The velocity
/// channel is differentiated with the five-point stencil to produce the
/// acceleration (and the current channel likewise for its derivative); the
/// undifferentiated channels are cropped by two samples at each end so
/// everything shares the post-differentiation grid.
pub fn build_regression(record: &SyncedRecord, states: usize, va: f64) -> Result<RegressionSystem> {
    if states != 2 && states != 3 {
        return Err(Error::InvalidInput(format!(
            "the state vector holds position/velocity(/current): states must be 2 or 3, got {states}"
        )));
    }
    let theta = record.require_channel(CH_POSITION)?;
    let theta_dot = record.require_channel(CH_VELOCITY)?;

    let margin = DiffScheme::Central5.margin();
    let theta_ddot = differentiate(theta_dot, DiffScheme::Central5)?;
    let crop = |t: &Trace| t.skip_first(margin).truncated(theta_ddot.len());

    let theta_c = crop(theta);
    let theta_dot_c = crop(theta_dot);

    let mut xs = Vec::with_capacity(theta_ddot.len());
    let mut xdots = Vec::with_capacity(theta_ddot.len());
    if states == 2 {
        for k in 0..theta_ddot.len() {
            xs.push(DVector::from_vec(vec![
                theta_c.samples[k],
                theta_dot_c.samples[k],
            ]));
            xdots.push(DVector::from_vec(vec![
                theta_dot_c.samples[k],
                theta_ddot.samples[k],
            ]));
        }
    } else {
        let current = record.require_channel(CH_CURRENT)?;
        let current_dot = differentiate(current, DiffScheme::Central5)?;
        let current_c = crop(current);
        for k in 0..theta_ddot.len() {
            xs.push(DVector::from_vec(vec![
                theta_c.samples[k],
                theta_dot_c.samples[k],
                current_c.samples[k],
            ]));
            xdots.push(DVector::from_vec(vec![
                theta_dot_c.samples[k],
                theta_ddot.samples[k],
                current_dot.samples[k],
            ]));
        }
    }
    RegressionSystem::from_samples(&xs, &xdots, va)
}

/// Result of a pseudo-inverse solve.
#[derive(Debug, Clone)]
pub struct PinvSolution {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// `||mat * lambda - lhs||_2`, for diagnostics.
    pub residual: f64,
    /// Effective rank at the SVD cutoff.
    pub rank: usize,
    /// Set when the effective rank fell short of the unknown count; the
    /// minimum-norm solution is still returned.
    pub rank_deficient: bool,
}

/// Solves the stacked system with the Moore–Penrose pseudo-inverse and
/// unpacks the unknown vector into `A` (row by row) and `B`.
pub fn pinv_solve(sys: &RegressionSystem, rcond: f64) -> Result<PinvSolution> {
    let n = sys.states;
    let unknowns = n * n + n;
    let sol = linalg::svd_lstsq(&sys.mat, &sys.lhs, rcond)?;
    let a = DMatrix::from_fn(n, n, |i, j| sol.solution[i * n + j]);
    let b = DVector::from_iterator(n, (0..n).map(|j| sol.solution[n * n + j]));
    Ok(PinvSolution {
        a,
        b,
        residual: sol.residual,
        rank: sol.rank,
        rank_deficient: sol.rank < unknowns,
    })
}

/// Options for [`identify_pinv`].
#[derive(Debug, Clone)]
pub struct PinvOptions {
    pub states: usize,
    /// Step magnitude, volts.
    pub va: f64,
    pub cancel_tol: f64,
    pub rcond: f64,
}

impl PinvOptions {
    pub fn new(states: usize, va: f64) -> Self {
        PinvOptions {
            states,
            va,
            cancel_tol: DEFAULT_CANCEL_TOL,
            rcond: DEFAULT_RCOND,
        }
    }
}

/// Identified model plus derived transfer functions and diagnostics.
#[derive(Debug, Clone)]
pub struct PinvIdentification {
    /// Model with the velocity output selector.
    pub model: StateSpaceModel,
    /// Raw `ss_to_tf` outputs for the velocity and position selectors.
    pub velocity_tf: TransferFunction,
    pub position_tf: TransferFunction,
    /// The same after near pole/zero cancellation.
    pub velocity_tf_reduced: TransferFunction,
    pub position_tf_reduced: TransferFunction,
    pub residual: f64,
    pub rank_deficient: bool,
    /// Deviation of the first identified `A` row (and `B` entry) from the
    /// structural `[0 1 0 ...]`, `B[0] = 0` values; large values flag a bad
    /// record rather than a legitimate model.
    pub structure_deviation: f64,
}

/// Full pseudo-inversion pipeline on a preprocessed record: regression,
/// solve, assemble the model with the velocity/position selectors, convert
/// and cancel near pole/zero pairs.
///
/// The solve keeps every coefficient free; the known companion structure of
/// the first row is only *reported* (as `structure_deviation`), not forced.
pub fn identify_pinv(record: &SyncedRecord, opts: &PinvOptions) -> Result<PinvIdentification> {
    let sys = build_regression(record, opts.states, opts.va)?;
    let sol = pinv_solve(&sys, opts.rcond)?;
    let n = opts.states;

    let c_vel = StateSpaceModel::state_selector(n, 1);
    let c_pos = StateSpaceModel::state_selector(n, 0);
    let model = StateSpaceModel::new(sol.a.clone(), sol.b.clone(), c_vel, 0.0)?;
    let velocity_tf = ss_to_tf(&model)?;
    let position_tf = ss_to_tf(&model.with_output(c_pos)?)?;

    let velocity_tf_reduced = cancel_near_pole_zero(&velocity_tf, opts.cancel_tol)?;
    let position_tf_reduced = cancel_near_pole_zero(&position_tf, opts.cancel_tol)?;

    let mut structure_deviation = (sol.b[0]).abs();
    for j in 0..n {
        let ideal = if j == 1 { 1.0 } else { 0.0 };
        structure_deviation = structure_deviation.max((sol.a[(0, j)] - ideal).abs());
    }

    Ok(PinvIdentification {
        model,
        velocity_tf,
        position_tf,
        velocity_tf_reduced,
        position_tf_reduced,
        residual: sol.residual,
        rank_deficient: sol.rank_deficient,
        structure_deviation,
    })
}

/// Fraction of the steady state that defines the time constant read-off.
const TAU_FRACTION: f64 = 0.632;

/// Classic first-order fit: the steady state is the mean of the last tenth
/// of the record, the time constant is where the response first reaches
/// 63.2% of it (linearly interpolated), and the gain follows from
/// `k = v_inf / (va * tau)`.
pub fn first_order_fit(velocity: &Trace, va: f64) -> Result<TransferFunction> {
    if va == 0.0 {
        return Err(Error::InvalidInput("va must be nonzero".into()));
    }
    if velocity.len() < 20 {
        return Err(Error::TraceTooShort(
            "first-order fit needs at least 20 samples".into(),
        ));
    }
    let tail_len = (velocity.len() / 10).max(2);
    let tail = &velocity.samples[velocity.len() - tail_len..];
    let v_inf = tail.iter().sum::<f64>() / tail.len() as f64;
    let spread = tail.iter().cloned().fold(f64::MIN, f64::max)
        - tail.iter().cloned().fold(f64::MAX, f64::min);
    if v_inf == 0.0 || spread > 0.01 * v_inf.abs() {
        return Err(Error::Identification(format!(
            "velocity does not settle: last {tail_len} samples vary by {spread} against v_inf = {v_inf}"
        )));
    }

    let target = TAU_FRACTION * v_inf;
    let reached = |v: f64| {
        if v_inf > 0.0 {
            v >= target
        } else {
            v <= target
        }
    };
    let k = velocity
        .samples
        .iter()
        .position(|&v| reached(v))
        .ok_or_else(|| Error::Identification("response never reaches 63.2% of v_inf".into()))?;
    let tau = if k == 0 {
        return Err(Error::Identification(
            "response starts above 63.2% of v_inf".into(),
        ));
    } else {
        let v0 = velocity.samples[k - 1];
        let v1 = velocity.samples[k];
        let frac = (target - v0) / (v1 - v0);
        velocity.time_at(k - 1) + frac * velocity.dt
    };
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Identification(format!(
            "non-positive time constant {tau}"
        )));
    }
    let gain = v_inf / (va * tau);
    TransferFunction::from_coeffs(&[gain], &[1.0 / tau, 1.0])
}
