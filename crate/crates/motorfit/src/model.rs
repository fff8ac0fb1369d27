//! Serializable identification results (`ModelDocument`) and model-vs-data
//! fit quantification (`FitReport`).

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{ss_to_tf, StateSpaceModel, TransferFunction};
use crate::trace::Trace;

/// Identification method that produced a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pinv,
    Markov,
    FirstOrder,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Pinv => "pinv",
            Method::Markov => "markov",
            Method::FirstOrder => "first_order",
        })
    }
}

/// Transfer function as coefficient lists, ascending powers of S.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfDocument {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl TfDocument {
    pub fn from_tf(h: &TransferFunction) -> Self {
        TfDocument {
            num: h.num().coeffs().to_vec(),
            den: h.den().coeffs().to_vec(),
        }
    }

    pub fn to_tf(&self) -> Result<TransferFunction> {
        TransferFunction::from_coeffs(&self.num, &self.den)
    }
}

/// Solver diagnostics carried alongside the model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Pseudo-inverse residual norm, when the method solves one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    /// Normalized Hankel singular values, when the method computes them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detected_order: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_deficient: Option<bool>,
    /// Deviation of the first row of `A` (and `B[0]`) from the structural
    /// `[0 1 ...]` form (pseudo-inversion method only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structure_deviation: Option<f64>,
    /// Estimation parameters, recorded for reproducibility.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameters: Option<serde_json::Value>,
}

/// A complete, self-consistent identification result: the state-space
/// matrices plus the velocity and position transfer functions derived from
/// them. The embedded transfer functions always equal `ss_to_tf` of the
/// embedded matrices; reduced (pole/zero cancelled) variants ride along
/// separately when a cancellation actually fired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub method: Method,
    pub states: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
    pub velocity_tf: TfDocument,
    pub position_tf: TfDocument,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub velocity_tf_reduced: Option<TfDocument>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position_tf_reduced: Option<TfDocument>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

/// Tolerance of the embedded-TF self-consistency check.
const CONSISTENCY_TOL: f64 = 1e-9;

impl ModelDocument {
    pub fn to_json(&self) -> String {
        // Struct field order is stable, so identical documents serialize to
        // identical bytes.
        serde_json::to_string_pretty(self).expect("model document serializes")
    }

    pub fn from_json(text: &str) -> Result<ModelDocument> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("model document: {e}")))?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn state_space(&self) -> Result<StateSpaceModel> {
        let n = self.states;
        if n == 0 || self.a.len() != n || self.a.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidModel(format!(
                "A must be {n}x{n} to match 'states'"
            )));
        }
        if self.b.len() != n || self.c.len() != n {
            return Err(Error::InvalidModel(
                "B and C must match the state dimension".into(),
            ));
        }
        let a = DMatrix::from_fn(n, n, |i, j| self.a[i][j]);
        if a.iter().any(|v| !v.is_finite())
            || self.b.iter().chain(&self.c).any(|v| !v.is_finite())
            || !self.d.is_finite()
        {
            return Err(Error::InvalidModel("non-finite matrix entry".into()));
        }
        StateSpaceModel::new(
            a,
            DVector::from_vec(self.b.clone()),
            RowDVector::from_row_slice(&self.c),
            self.d,
        )
    }

    /// Checks the self-consistency invariant: both embedded transfer
    /// functions must equal `ss_to_tf` of the embedded matrices (velocity
    /// via the stored `C` or the velocity selector, position via the
    /// position selector or `S`-scaling, depending on the method).
    pub fn validate(&self) -> Result<()> {
        let m = self.state_space()?;
        let (velocity, position) = derive_tfs(&m, self.method)?;
        let embedded_v = self.velocity_tf.to_tf()?;
        let embedded_p = self.position_tf.to_tf()?;
        if !tf_close(&embedded_v, &velocity, CONSISTENCY_TOL) {
            return Err(Error::InvalidModel(
                "velocity_tf is not ss_to_tf of the embedded matrices".into(),
            ));
        }
        if !tf_close(&embedded_p, &position, CONSISTENCY_TOL) {
            return Err(Error::InvalidModel(
                "position_tf is not consistent with the embedded matrices".into(),
            ));
        }
        Ok(())
    }
}

/// Velocity/position transfer functions implied by a model under a method's
/// output convention: pseudo-inversion state vectors are `[theta,
/// theta_dot, ...]` so the selectors pick states directly; Markov
/// realizations produce the position transfer function at `C`, and velocity
/// is its `S`-multiple.
pub fn derive_tfs(
    m: &StateSpaceModel,
    method: Method,
) -> Result<(TransferFunction, TransferFunction)> {
    match method {
        Method::Pinv => {
            let n = m.order();
            let vel = ss_to_tf(&m.with_output(StateSpaceModel::state_selector(n, 1))?)?;
            let pos = ss_to_tf(&m.with_output(StateSpaceModel::state_selector(n, 0))?)?;
            Ok((vel, pos))
        }
        Method::Markov => {
            let pos = ss_to_tf(m)?;
            let vel = pos.times_s()?;
            Ok((vel, pos))
        }
        Method::FirstOrder => {
            // The model realizes the first-order velocity TF directly; the
            // position TF adds the kinematic integrator.
            let vel = ss_to_tf(m)?;
            let pos = TransferFunction::new(vel.num().clone(), vel.den().mul_s())?;
            Ok((vel, pos))
        }
    }
}

fn tf_close(a: &TransferFunction, b: &TransferFunction, tol: f64) -> bool {
    let close = |x: &[f64], y: &[f64]| {
        x.len() == y.len() && x.iter().zip(y).all(|(u, v)| (u - v).abs() <= tol)
    };
    close(a.num().coeffs(), b.num().coeffs()) && close(a.den().coeffs(), b.den().coeffs())
}

/// Quantified agreement between a measured trace and a model response on
/// the same grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// RMS error normalized by the measured peak-to-peak span.
    pub nrmse: f64,
    pub max_abs_error: f64,
    /// Compared horizon, seconds.
    pub horizon: f64,
}

/// Builds a fit report over the overlapping span of the two traces.
pub fn fit_report(measured: &Trace, simulated: &Trace) -> Result<FitReport> {
    if measured.is_empty() || simulated.is_empty() {
        return Err(Error::InvalidInput("empty trace in fit comparison".into()));
    }
    if (measured.dt - simulated.dt).abs() > 1e-9 * measured.dt {
        return Err(Error::InvalidInput(format!(
            "fit comparison needs matching sample periods ({} vs {})",
            measured.dt, simulated.dt
        )));
    }
    let n = measured.len().min(simulated.len());
    let mut sum_sq = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for k in 0..n {
        let e = simulated.samples[k] - measured.samples[k];
        sum_sq += e * e;
        max_abs = max_abs.max(e.abs());
        lo = lo.min(measured.samples[k]);
        hi = hi.max(measured.samples[k]);
    }
    let span = hi - lo;
    let rms = (sum_sq / n as f64).sqrt();
    let nrmse = if span > 0.0 {
        rms / span
    } else if rms == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(FitReport {
        nrmse,
        max_abs_error: max_abs,
        horizon: measured.dt * (n.saturating_sub(1)) as f64,
    })
}
