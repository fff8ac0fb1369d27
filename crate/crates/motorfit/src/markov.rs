//! Markov-parameter estimation from the early step response, Hankel-based
//! order detection and companion-form minimal realization.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lti::{ss_to_tf, StateSpaceModel, TransferFunction};
use crate::trace::Trace;

/// Singular values below `rcond * sigma_max` count as zero throughout.
pub const DEFAULT_RCOND: f64 = 1e-10;
/// Normalized Hankel singular values above this threshold count towards the
/// detected order. Chosen to separate the kept values (0.088, 0.1) from the
/// dropped ones (0.016, 0.009) across all reference spectra.
pub const DEFAULT_GAP_THRESHOLD: f64 = 0.05;
/// Series length beyond which `t^i / i!` is numerically meaningless.
const MAX_PARAMETERS: usize = 64;

/// Estimated Markov parameters `q(1..=Lm)` together with the step magnitude
/// and fit window they were estimated under.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSequence {
    pub q: Vec<f64>,
    /// Step magnitude the source response was normalized by, volts.
    pub v0: f64,
    /// Fit window, seconds.
    pub te: f64,
}

impl MarkovSequence {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// Default fit window when the caller has no better guidance: a third of the
/// record. Windows that are too long break the truncated series globally,
/// not just at the tail.
pub fn default_fit_window(duration: f64) -> f64 {
    duration / 3.0
}

/// First `count` Markov parameters `C A^{i-1} B` of a model. Tests and
/// oracles use this as the exact reference for the estimators below.
pub fn markov_parameters(m: &StateSpaceModel, count: usize) -> Vec<f64> {
    let mut q = Vec::with_capacity(count);
    let mut x = m.b.clone();
    for _ in 0..count {
        q.push((&m.c * &x)[0]);
        x = &m.a * &x;
    }
    q
}

/// Estimates `lm` Markov parameters from a zero-initial-condition velocity
/// step response by fitting the truncated series `v(t) = v0 sum q(i)
/// t^(i-1)/(i-1)!` over `(0, te]` with a column-scaled pseudo-inverse.
pub fn estimate_markov(v: &Trace, v0: f64, lm: usize, te: f64) -> Result<MarkovSequence> {
    if v0 == 0.0 || !v0.is_finite() {
        return Err(Error::InvalidInput(
            "step magnitude v0 must be nonzero".into(),
        ));
    }
    if lm == 0 || lm > MAX_PARAMETERS {
        return Err(Error::InvalidInput(format!(
            "parameter count must be in 1..={MAX_PARAMETERS}, got {lm}"
        )));
    }
    if te.is_nan() || te <= 0.0 || te > v.duration() + 1e-9 * v.dt {
        return Err(Error::InvalidInput(format!(
            "fit window {te} s outside the trace duration {} s",
            v.duration()
        )));
    }
    // Eq-form fit uses samples strictly after t = 0; a sample at t = 0 must
    // then be zero or the record was not taken from rest.
    if v.t0.abs() <= 1e-9 * v.dt {
        let scale = v.max_abs().max(1.0);
        if v.samples.first().copied().unwrap_or(0.0).abs() > 1e-6 * scale {
            return Err(Error::InvalidInput(format!(
                "v(0) = {} is not zero; the response must start from rest",
                v.samples[0]
            )));
        }
    }

    let mut times = Vec::new();
    let mut values = Vec::new();
    for k in 0..v.len() {
        let t = v.time_at(k);
        if t > 1e-12 && t <= te + 1e-9 * v.dt {
            times.push(t);
            values.push(v.samples[k] / v0);
        }
    }
    let n = times.len();
    if n < lm {
        return Err(Error::InvalidInput(format!(
            "{n} samples in the fit window cannot determine {lm} parameters"
        )));
    }

    let mut mat = DMatrix::<f64>::zeros(n, lm);
    for (row, &t) in times.iter().enumerate() {
        // term = t^(i-1)/(i-1)! built incrementally.
        let mut term = 1.0;
        for i in 0..lm {
            mat[(row, i)] = term;
            term *= t / (i + 1) as f64;
        }
    }

    // Column scaling keeps the wildly different column magnitudes of the
    // series matrix from wrecking the SVD cutoff; unscale afterwards.
    let mut scales = vec![1.0; lm];
    for i in 0..lm {
        let m = mat.column(i).amax();
        if m > 0.0 {
            scales[i] = m;
            for row in 0..n {
                mat[(row, i)] /= m;
            }
        }
    }

    let rhs = DVector::from_vec(values);
    let sol = linalg::svd_lstsq(&mat, &rhs, DEFAULT_RCOND)?;
    let q = sol
        .solution
        .iter()
        .zip(&scales)
        .map(|(y, s)| y / s)
        .collect();
    Ok(MarkovSequence { q, v0, te })
}

/// Samples the truncated series `v0 sum q(i) t^(i-1)/(i-1)!` on a grid.
pub fn truncated_response(m: &MarkovSequence, dt: f64, duration: f64) -> Result<Trace> {
    if dt <= 0.0 || duration < dt {
        return Err(Error::InvalidInput(
            "truncated_response requires dt > 0 and duration >= dt".into(),
        ));
    }
    let steps = (duration / dt + 1e-9).floor() as usize;
    let samples = (0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            let mut term = 1.0;
            let mut acc = 0.0;
            for (i, qi) in m.q.iter().enumerate() {
                acc += qi * term;
                term *= t / (i + 1) as f64;
            }
            m.v0 * acc
        })
        .collect();
    Ok(Trace::from_samples(dt, samples))
}

/// The `K x K` Hankel matrix of `q(1..=2K-1)`; `Lm` must be odd.
pub fn hankel_build(m: &MarkovSequence) -> Result<DMatrix<f64>> {
    let lm = m.q.len();
    if lm < 3 || lm.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "a square Hankel matrix needs an odd parameter count >= 3, got {lm}"
        )));
    }
    let k = lm.div_ceil(2);
    Ok(DMatrix::from_fn(k, k, |i, j| m.q[i + j]))
}

/// Detected order plus the full normalized singular-value spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderEstimate {
    pub order: usize,
    /// Singular values divided by the largest, descending.
    pub spectrum: Vec<f64>,
}

/// Order = number of normalized Hankel singular values above the threshold.
pub fn estimate_order(hankel: &DMatrix<f64>, gap_threshold: f64) -> Result<OrderEstimate> {
    if hankel.nrows() < 2 || hankel.nrows() != hankel.ncols() {
        return Err(Error::InvalidInput(
            "order estimation needs a square Hankel matrix with K >= 2".into(),
        ));
    }
    let sv = linalg::singular_values(hankel);
    let sigma_max = sv[0];
    if sigma_max == 0.0 {
        return Ok(OrderEstimate {
            order: 0,
            spectrum: vec![0.0; sv.len()],
        });
    }
    let spectrum: Vec<f64> = sv.iter().map(|s| s / sigma_max).collect();
    let order = spectrum.iter().filter(|s| **s > gap_threshold).count();
    Ok(OrderEstimate { order, spectrum })
}

/// Companion-form minimal realization of the given order: with the
/// observability matrix chosen as the identity, `A` is the shifted Hankel
/// times the inverse Hankel, `B` the first Hankel column and `C` the first
/// unit row vector.
pub fn realize_companion(m: &MarkovSequence, order: usize) -> Result<StateSpaceModel> {
    if order == 0 {
        return Err(Error::InvalidInput("realization order must be >= 1".into()));
    }
    if m.q.len() < 2 * order {
        return Err(Error::InvalidInput(format!(
            "{} Markov parameters cannot fill order-{order} Hankel pairs (need {})",
            m.q.len(),
            2 * order
        )));
    }
    let h = DMatrix::from_fn(order, order, |i, j| m.q[i + j]);
    let h_shift = DMatrix::from_fn(order, order, |i, j| m.q[i + j + 1]);

    let sv = linalg::singular_values(&h);
    if sv[0] == 0.0 || sv[order - 1] <= DEFAULT_RCOND * sv[0] {
        return Err(Error::Identification(format!(
            "Hankel matrix is singular at order {order}; run estimate_order and pick a lower one"
        )));
    }

    // A = h_shift h^{-1}, solved as h^T A^T = h_shift^T.
    let a_t = h
        .transpose()
        .lu()
        .solve(&h_shift.transpose())
        .ok_or_else(|| Error::Identification("Hankel solve failed".into()))?;
    let a = a_t.transpose();
    let b = DVector::from_iterator(order, (0..order).map(|i| m.q[i]));
    let mut c = RowDVector::zeros(order);
    c[0] = 1.0;
    StateSpaceModel::new(a, b, c, 0.0)
}

/// Full Markov identification result.
#[derive(Debug, Clone)]
pub struct MarkovIdentification {
    pub model: StateSpaceModel,
    /// Transfer function of the realization (`1/v0` normalization is already
    /// inside because the parameters were estimated from `v / v0`).
    pub tf: TransferFunction,
    pub markov: MarkovSequence,
    pub order: usize,
    pub spectrum: Vec<f64>,
}

/// End-to-end pipeline: estimate the parameters, detect the order from the
/// full Hankel spectrum, realize in companion form, convert to a transfer
/// function.
pub fn identify_markov(
    v: &Trace,
    v0: f64,
    lm: usize,
    te: f64,
    gap_threshold: f64,
) -> Result<MarkovIdentification> {
    let markov = estimate_markov(v, v0, lm, te)?;
    let hankel = hankel_build(&markov)?;
    let est = estimate_order(&hankel, gap_threshold)?;
    if est.order == 0 {
        return Err(Error::Identification(
            "order detection found no significant singular values".into(),
        ));
    }
    let model = realize_companion(&markov, est.order)?;
    let tf = ss_to_tf(&model)?;
    Ok(MarkovIdentification {
        model,
        tf,
        markov,
        order: est.order,
        spectrum: est.spectrum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::impulse_response;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector, RowDVector};

    fn bench_2nd_model() -> StateSpaceModel {
        StateSpaceModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -36.0, -1.0]),
            DVector::from_vec(vec![0.0, 36.0]),
            RowDVector::from_row_slice(&[1.0, 0.0]),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn exact_markov_parameters_of_benchmark() {
        let q = markov_parameters(&bench_2nd_model(), 4);
        assert_eq!(q, vec![0.0, 36.0, -36.0, -1260.0]);
    }

    #[test]
    fn estimate_recovers_leading_parameters() {
        let h = TransferFunction::from_coeffs(&[36.0], &[36.0, 1.0, 1.0]).unwrap();
        let v = impulse_response(&h, 0.002, 0.1).unwrap();
        let m = estimate_markov(&v, 1.0, 11, 0.1).unwrap();
        assert_abs_diff_eq!(m.q[0], 0.0, epsilon = 0.01);
        assert_abs_diff_eq!(m.q[1], 36.0, epsilon = 0.01);
        assert_abs_diff_eq!(m.q[2], -36.0, epsilon = 0.01);
    }

    #[test]
    fn integrator_ramp_gives_unit_second_parameter() {
        // v = V0 t matches the series with q = (0, 1, 0).
        let v0 = 2.0;
        let v = Trace::from_samples(0.01, (0..100).map(|k| v0 * k as f64 * 0.01).collect());
        let m = estimate_markov(&v, v0, 3, 0.9).unwrap();
        assert_abs_diff_eq!(m.q[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.q[1], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.q[2], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn nonzero_initial_sample_is_rejected() {
        let mut v = Trace::from_samples(0.01, vec![1.0; 50]);
        v.samples[0] = 1.0;
        assert!(estimate_markov(&v, 1.0, 3, 0.4).is_err());
        // Dropping the t=0 sample makes the same data acceptable.
        let shifted = v.skip_first(1);
        assert!(estimate_markov(&shifted, 1.0, 3, 0.4).is_ok());
    }

    #[test]
    fn truncated_series_matches_impulse_response_early() {
        // Eleven exact parameters reproduce the impulse response on
        // [0, 0.1] to 1e-6.
        let m = bench_2nd_model();
        let seq = MarkovSequence {
            q: markov_parameters(&m, 11),
            v0: 1.0,
            te: 0.1,
        };
        let series = truncated_response(&seq, 0.002, 0.1).unwrap();
        let h = ss_to_tf(&m).unwrap();
        let exact = impulse_response(&h, 0.002, 0.1).unwrap();
        for (a, b) in series.samples.iter().zip(&exact.samples) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn order_of_motor_style_spectrum() {
        // A matrix with the characteristic measured spectrum of a third
        // order servo: (1.0, 0.426, 0.1, 0.009, 0.0009, 0.00009).
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![
            1.0, 0.426, 0.1, 0.009, 0.0009, 0.00009,
        ]));
        let est = estimate_order(&h, DEFAULT_GAP_THRESHOLD).unwrap();
        assert_eq!(est.order, 3);
        assert_abs_diff_eq!(est.spectrum[1], 0.426, epsilon = 1e-12);
    }

    #[test]
    fn identify_first_order_system() {
        // The short-window recipe detects order 1 for 1/(S+1) and recovers
        // the transfer function within 1%.
        let h = TransferFunction::from_coeffs(&[1.0], &[1.0, 1.0]).unwrap();
        let v = impulse_response(&h, 0.002, 0.2).unwrap().skip_first(1);
        let id = identify_markov(&v, 1.0, 11, 0.1, DEFAULT_GAP_THRESHOLD).unwrap();
        assert_eq!(id.order, 1);
        assert!((id.tf.num().coeffs()[0] - 1.0).abs() < 0.01);
        assert!((id.tf.den().coeffs()[0] - 1.0).abs() < 0.01);
    }

    #[test]
    fn truncated_response_of_ramp_sequence() {
        let m = MarkovSequence {
            q: vec![0.0, 1.0, 0.0],
            v0: 2.0,
            te: 1.0,
        };
        let tr = truncated_response(&m, 0.25, 1.0).unwrap();
        for (k, v) in tr.samples.iter().enumerate() {
            assert_abs_diff_eq!(*v, 2.0 * 0.25 * k as f64, epsilon = 1e-12);
        }
        let zeros = MarkovSequence {
            q: vec![0.0; 5],
            v0: 3.0,
            te: 1.0,
        };
        let tz = truncated_response(&zeros, 0.1, 1.0).unwrap();
        assert!(tz.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hankel_layout() {
        let m = MarkovSequence {
            q: vec![0.0, 36.0, -36.001],
            v0: 1.0,
            te: 0.1,
        };
        let h = hankel_build(&m).unwrap();
        assert_eq!(h.nrows(), 2);
        assert_eq!(h[(0, 0)], 0.0);
        assert_eq!(h[(0, 1)], 36.0);
        assert_eq!(h[(1, 0)], 36.0);
        assert_eq!(h[(1, 1)], -36.001);

        let m11 = MarkovSequence {
            q: vec![1.0; 11],
            v0: 1.0,
            te: 0.1,
        };
        assert_eq!(hankel_build(&m11).unwrap().nrows(), 6);
        let even = MarkovSequence {
            q: vec![1.0; 4],
            v0: 1.0,
            te: 0.1,
        };
        assert!(hankel_build(&even).is_err());
    }

    #[test]
    fn order_of_rank_one_hankel() {
        let m = MarkovSequence {
            q: vec![1.0, 0.0, 0.0],
            v0: 1.0,
            te: 0.1,
        };
        let h = hankel_build(&m).unwrap();
        let est = estimate_order(&h, 0.05).unwrap();
        assert_eq!(est.order, 1);
        assert_abs_diff_eq!(est.spectrum[0], 1.0);
    }

    #[test]
    fn order_of_experimental_spectrum_style_matrix() {
        // All-zero matrix -> order 0.
        let z = DMatrix::zeros(3, 3);
        assert_eq!(estimate_order(&z, 0.05).unwrap().order, 0);
    }

    #[test]
    fn order_is_scale_invariant() {
        let base = MarkovSequence {
            q: markov_parameters(&bench_2nd_model(), 11),
            v0: 1.0,
            te: 0.1,
        };
        let scaled = MarkovSequence {
            q: base.q.iter().map(|v| v * -7.5).collect(),
            v0: 1.0,
            te: 0.1,
        };
        let e1 = estimate_order(&hankel_build(&base).unwrap(), 0.05).unwrap();
        let e2 = estimate_order(&hankel_build(&scaled).unwrap(), 0.05).unwrap();
        assert_eq!(e1.order, e2.order);
        for (a, b) in e1.spectrum.iter().zip(&e2.spectrum) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn realization_round_trips_first_order() {
        // q(i) = C A^{i-1} B for A=[-2], B=[3], C=[1]: 3/(S+2).
        let m = StateSpaceModel::new(
            DMatrix::from_row_slice(1, 1, &[-2.0]),
            DVector::from_vec(vec![3.0]),
            RowDVector::from_row_slice(&[1.0]),
            0.0,
        )
        .unwrap();
        let seq = MarkovSequence {
            q: markov_parameters(&m, 4),
            v0: 1.0,
            te: 1.0,
        };
        let r = realize_companion(&seq, 1).unwrap();
        let tf = ss_to_tf(&r).unwrap();
        assert_abs_diff_eq!(tf.num().coeffs()[0], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(tf.den().coeffs()[0], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn realization_rejects_excess_order() {
        // 1/(S+1) has rank-1 Hankel; order 3 must fail as singular.
        let m = StateSpaceModel::new(
            DMatrix::from_row_slice(1, 1, &[-1.0]),
            DVector::from_vec(vec![1.0]),
            RowDVector::from_row_slice(&[1.0]),
            0.0,
        )
        .unwrap();
        let seq = MarkovSequence {
            q: markov_parameters(&m, 11),
            v0: 1.0,
            te: 1.0,
        };
        assert!(matches!(
            realize_companion(&seq, 3),
            Err(Error::Identification(_))
        ));
    }

    #[test]
    fn identify_rejects_zero_v0() {
        let v = Trace::from_samples(0.01, vec![0.0; 64]);
        assert!(identify_markov(&v, 0.0, 11, 0.5, 0.05).is_err());
    }
}
