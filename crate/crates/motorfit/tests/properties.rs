//! Module-level invariants: property tests over randomized inputs plus the
//! deterministic cross-module checks that don't fit a single unit test.

use motorfit::lti::{
    cancel_near_pole_zero, dominant_pole_reduce, poles, servo_closed_loop_tf, ss_to_tf,
    step_response, tf_to_ss_companion, TransferFunction,
};
use motorfit::markov::{markov_parameters, realize_companion, truncated_response, MarkovSequence};
use motorfit::pinv::{identify_pinv, pinv_solve, PinvOptions, RegressionSystem, DEFAULT_RCOND};
use motorfit::signal::{downsample, synchronize, unwrap_position, zero_shift};
use motorfit::sim::{simulate_lti, simulate_states};
use motorfit::trace::{Trace, CH_POSITION, CH_VELOCITY};
use motorfit::{Polynomial, StateSpaceModel};

use nalgebra::{Complex, DMatrix, DVector, RowDVector};
use proptest::prelude::*;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

/// Random proper transfer function of order 1..=4 with coefficients in
/// [-10, 10] and a leading denominator coefficient bounded away from zero.
fn arb_tf() -> impl Strategy<Value = TransferFunction> {
    (1usize..=4)
        .prop_flat_map(|order| {
            let den_body = proptest::collection::vec(-10.0..10.0f64, order);
            let den_lead = prop_oneof![0.5..10.0f64, -10.0..-0.5f64];
            let num = proptest::collection::vec(-10.0..10.0f64, 1..=order + 1);
            (num, den_body, den_lead)
        })
        .prop_map(|(num, mut den, lead)| {
            den.push(lead);
            TransferFunction::from_coeffs(&num, &den).unwrap()
        })
}

/// Random stable state-space model (order 1..=3) built from a companion
/// form with poles in [-4, -0.2] and a random output row.
fn arb_stable_model() -> impl Strategy<Value = StateSpaceModel> {
    (1usize..=3)
        .prop_flat_map(|n| {
            let poles = proptest::collection::vec(0.2..4.0f64, n);
            let c = proptest::collection::vec(-2.0..2.0f64, n);
            let b = proptest::collection::vec(-2.0..2.0f64, n);
            (poles, b, c)
        })
        .prop_map(|(pole_mags, b, c)| {
            let n = pole_mags.len();
            let roots: Vec<Complex<f64>> =
                pole_mags.iter().map(|m| Complex::new(-m, 0.0)).collect();
            let den = Polynomial::from_roots(&roots).unwrap();
            let mut a = DMatrix::<f64>::zeros(n, n);
            for i in 0..n.saturating_sub(1) {
                a[(i, i + 1)] = 1.0;
            }
            for j in 0..n {
                a[(n - 1, j)] = -den.coeffs()[j];
            }
            StateSpaceModel::new(a, DVector::from_vec(b), RowDVector::from_row_slice(&c), 0.0)
                .unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// ss_to_tf(tf_to_ss_companion(h)) == h coefficient-wise after
    /// normalization, stable or not.
    #[test]
    fn tf_ss_round_trip(h in arb_tf()) {
        let back = ss_to_tf(&tf_to_ss_companion(&h)).unwrap();
        prop_assert!(
            close(back.num().coeffs(), h.num().coeffs(), 1e-9)
                && close(back.den().coeffs(), h.den().coeffs(), 1e-9),
            "{:?} round-tripped to {:?}", h, back
        );
    }

    /// Similarity transforms leave the transfer function unchanged.
    #[test]
    fn similarity_invariance(
        m in arb_stable_model(),
        t_entries in proptest::collection::vec(-0.4..0.4f64, 9),
    ) {
        let n = m.order();
        let t = DMatrix::from_fn(n, n, |i, j| {
            if i == j { 1.0 } else { t_entries[i * 3 + j] }
        });
        let t_inv = t.clone().try_inverse();
        prop_assume!(t_inv.is_some());
        let t_inv = t_inv.unwrap();

        let transformed = StateSpaceModel::new(
            &t * &m.a * &t_inv,
            &t * &m.b,
            &m.c * &t_inv,
            m.d,
        ).unwrap();
        let h0 = ss_to_tf(&m).unwrap();
        let h1 = ss_to_tf(&transformed).unwrap();
        prop_assert!(
            close(h1.den().coeffs(), h0.den().coeffs(), 1e-6)
                && close(h1.num().coeffs(), h0.num().coeffs(), 1e-6),
            "similarity changed {:?} into {:?}", h0, h1
        );
    }

    /// Poles of ss_to_tf(m) match the eigenvalues of A as multisets.
    #[test]
    fn poles_match_eigenvalues(m in arb_stable_model()) {
        let mut eigs: Vec<Complex<f64>> =
            m.a.clone().complex_eigenvalues().iter().cloned().collect();
        // Only well-separated spectra: clustered eigenvalues are
        // ill-conditioned for any coefficient-based root finder.
        let mut sorted = eigs.clone();
        sorted.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        for w in sorted.windows(2) {
            prop_assume!((w[0] - w[1]).norm() > 0.3);
        }

        let h = ss_to_tf(&m).unwrap();
        prop_assume!(h.den().degree() == m.order()); // no pole/zero collapse
        let mut ps = poles(&h).unwrap();
        for p in &ps {
            let (idx, _) = eigs
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (*a - p).norm().partial_cmp(&(*b - p).norm()).unwrap()
                })
                .unwrap();
            let e = eigs.swap_remove(idx);
            prop_assert!((e - p).norm() < 1e-6, "pole {p} vs eigenvalue {e}");
        }
        ps.clear();
    }

    /// DC gain is preserved by dominant-pole reduction when den(0) != 0.
    #[test]
    fn reduction_preserves_dc_gain(
        pole_mags in proptest::collection::vec(0.2..8.0f64, 2..=4),
        gain in 0.5..5.0f64,
        target in 1usize..=3,
    ) {
        let roots: Vec<Complex<f64>> =
            pole_mags.iter().map(|m| Complex::new(-m, 0.0)).collect();
        let den = Polynomial::from_roots(&roots).unwrap();
        let h = TransferFunction::new(Polynomial::constant(gain), den).unwrap();
        prop_assume!(target < h.den().degree());
        let reduced = match dominant_pole_reduce(&h, target) {
            Ok(r) => r,
            // Tied real parts at the boundary are a legitimate refusal.
            Err(_) => return Ok(()),
        };
        let dc0 = h.dc_gain();
        let dc1 = reduced.dc_gain();
        prop_assert!((dc0 - dc1).abs() <= 1e-9 * (1.0 + dc0.abs()),
            "DC gain drifted from {dc0} to {dc1}");
    }

    /// cancel_near_pole_zero with tol = 0 is the identity.
    #[test]
    fn cancel_zero_tol_identity(h in arb_tf()) {
        prop_assert_eq!(cancel_near_pole_zero(&h, 0.0).unwrap(), h);
    }

    /// downsample(t, a*b) == downsample(downsample(t, a), b).
    #[test]
    fn downsample_composes(
        samples in proptest::collection::vec(-5.0..5.0f64, 24..200),
        a in 1usize..4,
        b in 1usize..4,
    ) {
        let t = Trace::from_samples(0.01, samples);
        prop_assume!(t.len() / (a * b) >= 2);
        let direct = downsample(&t, a * b).unwrap();
        let stepwise = downsample(&downsample(&t, a).unwrap(), b).unwrap();
        prop_assert_eq!(direct.samples, stepwise.samples);
        prop_assert!((direct.dt - stepwise.dt).abs() < 1e-12);
    }

    /// Unwrapping a wrapped bounded-step path restores continuity: no
    /// adjacent difference above the jump parameter survives.
    #[test]
    fn unwrap_restores_continuity(
        steps in proptest::collection::vec(-2.0..2.0f64, 16..300),
    ) {
        let mut pos = 0.0;
        let wrapped: Vec<f64> = steps
            .iter()
            .map(|s| {
                pos += s;
                ((pos + 10.2f64).rem_euclid(20.4)) - 10.2
            })
            .collect();
        let u = unwrap_position(&Trace::from_samples(0.01, wrapped), 15.0, 20.4, 1.0);
        let max_diff = u
            .samples
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0f64, f64::max);
        prop_assert!(max_diff <= 15.0, "residual jump of {max_diff}");
    }

    /// Markov round trip: exact parameters of a random stable model feed
    /// the realization, whose first 2M parameters match to 1e-8; the
    /// realized transfer function equals the source one (all minimal
    /// realizations agree) and its denominator degree is exactly M.
    #[test]
    fn markov_realization_round_trip(m in arb_stable_model()) {
        let n = m.order();
        let seq = MarkovSequence {
            q: markov_parameters(&m, (2 * n + 1).max(3)),
            v0: 1.0,
            te: 1.0,
        };
        // Skip inputs that are secretly lower order (near pole/zero
        // cancellation makes the Hankel singular).
        let realized = match realize_companion(&seq, n) {
            Ok(r) => r,
            Err(_) => return Ok(()),
        };
        let q_src = markov_parameters(&m, 2 * n);
        let q_real = markov_parameters(&realized, 2 * n);
        let scale = q_src.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        for (a, b) in q_real.iter().zip(&q_src) {
            prop_assert!((a - b).abs() <= 1e-8 * scale, "markov {a} vs {b}");
        }

        let h_src = ss_to_tf(&m).unwrap();
        prop_assume!(h_src.den().degree() == n);
        prop_assume!(!h_src.num().is_zero());
        let h_real = ss_to_tf(&realized).unwrap();
        prop_assert_eq!(h_real.den().degree(), n);
        prop_assert!(
            close(h_real.den().coeffs(), h_src.den().coeffs(), 1e-8)
                && close(h_real.num().coeffs(), h_src.num().coeffs(), 1e-8),
            "realization {:?} differs from source {:?}", h_real, h_src
        );
    }
}

/// Shifting a record away from zero initial conditions while keeping the
/// step-from-rest claim degrades the pseudo-inverse residual.
#[test]
fn zero_ic_residual_ordering() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -36.0, -1.0]);
    let b = DVector::from_vec(vec![0.0, 36.0]);
    let m = StateSpaceModel::new(
        a.clone(),
        b.clone(),
        RowDVector::from_row_slice(&[1.0, 0.0]),
        0.0,
    )
    .unwrap();
    let input = Trace::from_samples(0.01, vec![1.0; 601]);
    let (states, _) = simulate_states(&m, &input);

    let build = |offset: f64| {
        let xs: Vec<DVector<f64>> = states
            .iter()
            .step_by(20)
            .map(|x| DVector::from_vec(vec![x[0] + offset, x[1]]))
            .collect();
        let xds: Vec<DVector<f64>> = states
            .iter()
            .step_by(20)
            .map(|x| &a * x + &b * 1.0)
            .collect();
        let sys = RegressionSystem::from_samples(&xs, &xds, 1.0).unwrap();
        pinv_solve(&sys, DEFAULT_RCOND).unwrap().residual
    };
    let zero_ic = build(0.0);
    let offset_ic = build(1.0);
    assert!(
        zero_ic < offset_ic,
        "zero-IC residual {zero_ic} should beat offset-IC residual {offset_ic}"
    );
}

/// identify_pinv on data from a true first-order velocity model yields a
/// velocity transfer function whose cancelled form is first order.
#[test]
fn pinv_first_order_truth_cancels_to_first_order() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -2.2585]);
    let b = DVector::from_vec(vec![0.0, 2.1685]);
    let m = StateSpaceModel::new(a, b, RowDVector::from_row_slice(&[0.0, 1.0]), 0.0).unwrap();
    let va = 5.92;
    let input = Trace::from_samples(0.1, vec![va; 25]);
    let (states, _) = simulate_states(&m, &input);
    let record = motorfit::trace::SyncedRecord::new(
        input,
        vec![
            (
                CH_POSITION.into(),
                Trace::from_samples(0.1, states.iter().map(|x| x[0]).collect()),
            ),
            (
                CH_VELOCITY.into(),
                Trace::from_samples(0.1, states.iter().map(|x| x[1]).collect()),
            ),
        ],
    )
    .unwrap();
    let id = identify_pinv(&record, &PinvOptions::new(2, va)).unwrap();
    assert_eq!(id.velocity_tf_reduced.den().degree(), 1);
    let gain = id.velocity_tf_reduced.num().coeffs()[0];
    let pole = id.velocity_tf_reduced.den().coeffs()[0];
    assert!((gain - 2.1685).abs() / 2.1685 < 0.02, "gain {gain}");
    assert!((pole - 2.2585).abs() / 2.2585 < 0.02, "pole {pole}");
}

/// Identified gain and time constant stay put (spread < 5%) across the
/// decimation ratios 1:10 through 1:30 on clean synthetic data.
#[test]
fn pinv_estimates_stable_across_decimation() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -2.2585]);
    let b = DVector::from_vec(vec![0.0, 2.1685]);
    let m = StateSpaceModel::new(a, b, RowDVector::from_row_slice(&[0.0, 1.0]), 0.0).unwrap();
    let va = 5.92;
    let dt0 = 0.004;
    let steps = (2.4 / dt0) as usize;
    let input = Trace::from_samples(dt0, vec![va; steps + 1]);
    let (states, _) = simulate_states(&m, &input);
    let pos = Trace::from_samples(dt0, states.iter().map(|x| x[0]).collect::<Vec<f64>>());
    let vel = Trace::from_samples(dt0, states.iter().map(|x| x[1]).collect::<Vec<f64>>());

    let mut gains = Vec::new();
    let mut taus = Vec::new();
    for ratio in [10, 15, 20, 25, 30] {
        let record = motorfit::trace::SyncedRecord::new(
            downsample(&input, ratio).unwrap(),
            vec![
                (CH_POSITION.into(), downsample(&pos, ratio).unwrap()),
                (CH_VELOCITY.into(), downsample(&vel, ratio).unwrap()),
            ],
        )
        .unwrap();
        let id = identify_pinv(&record, &PinvOptions::new(2, va)).unwrap();
        gains.push(id.velocity_tf_reduced.num().coeffs()[0]);
        taus.push(1.0 / id.velocity_tf_reduced.den().coeffs()[0]);
    }
    let spread = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::MAX, f64::min);
        let hi = v.iter().cloned().fold(f64::MIN, f64::max);
        (hi - lo) / lo
    };
    assert!(spread(&gains) < 0.05, "gain spread {:?}", gains);
    assert!(spread(&taus) < 0.05, "tau spread {:?}", taus);
}

/// The extended (3-state) identification round-trips a motor-like model:
/// simulate, decimate, differentiate numerically, identify, and the
/// recovered model's velocity step response matches the source within 2%
/// relative RMS.
#[test]
fn pinv_three_state_round_trip() {
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[
            0.0, 1.0, 0.0, //
            -0.012, -2.4, 0.65, //
            -0.004, -0.08, -0.25,
        ],
    );
    let b = DVector::from_vec(vec![0.0, 2.3, 0.09]);
    let m = StateSpaceModel::new(
        a.clone(),
        b.clone(),
        RowDVector::from_row_slice(&[0.0, 1.0, 0.0]),
        0.0,
    )
    .unwrap();
    let va = 5.92;
    let dt0 = 0.004;
    let steps = (4.3 / dt0) as usize;
    let input = Trace::from_samples(dt0, vec![va; steps + 1]);
    let (states, _) = simulate_states(&m, &input);

    let ratio = 30;
    let channel = |idx: usize| {
        downsample(
            &Trace::from_samples(dt0, states.iter().map(|x| x[idx]).collect::<Vec<f64>>()),
            ratio,
        )
        .unwrap()
    };
    let record = motorfit::trace::SyncedRecord::new(
        downsample(&input, ratio).unwrap(),
        vec![
            (CH_POSITION.into(), channel(0)),
            (CH_VELOCITY.into(), channel(1)),
            (motorfit::trace::CH_CURRENT.into(), channel(2)),
        ],
    )
    .unwrap();
    let id = identify_pinv(&record, &PinvOptions::new(3, va)).unwrap();

    let est = StateSpaceModel::new(
        id.model.a.clone(),
        id.model.b.clone(),
        RowDVector::from_row_slice(&[0.0, 1.0, 0.0]),
        0.0,
    )
    .unwrap();
    let v_est = simulate_lti(&est, &input);
    let v_true: Vec<f64> = states.iter().map(|x| x[1]).collect();
    let num: f64 = v_est
        .samples
        .iter()
        .zip(&v_true)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let den: f64 = v_true.iter().map(|v| v * v).sum();
    let rel_rms = (num / den).sqrt();
    assert!(rel_rms < 0.02, "velocity response mismatch {rel_rms}");
}

/// Early-time fidelity: with exact parameters of the 36/(S^2+S+36)
/// system, the truncated-series error over a short window shrinks
/// monotonically as the parameter count grows from 5 to 11.
#[test]
fn truncated_series_error_monotone_in_length() {
    let m = StateSpaceModel::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -36.0, -1.0]),
        DVector::from_vec(vec![0.0, 36.0]),
        RowDVector::from_row_slice(&[1.0, 0.0]),
        0.0,
    )
    .unwrap();
    let q = markov_parameters(&m, 11);
    let te = 0.3;
    let dt = 0.002;
    let exact = motorfit::lti::impulse_response(&ss_to_tf(&m).unwrap(), dt, te).unwrap();
    let mut prev = f64::MAX;
    for lm in 5..=11 {
        let seq = MarkovSequence {
            q: q[..lm].to_vec(),
            v0: 1.0,
            te,
        };
        let approx = truncated_response(&seq, dt, te).unwrap();
        let err = exact
            .samples
            .iter()
            .zip(&approx.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < prev, "error not monotone at lm={lm}: {err} vs {prev}");
        prev = err;
    }
}

/// Steady state of a stable linear loop equals reference times the
/// closed-loop DC gain to 0.1% after 20 dominant time constants.
#[test]
fn servo_steady_state_matches_dc_gain() {
    let plant = TransferFunction::from_coeffs(&[10.0], &[0.0, 10.0, 1.0]).unwrap();
    for (kp, kv) in [(2.0, 0.5), (0.5, 0.0), (10.0, 1.0)] {
        let closed = servo_closed_loop_tf(&plant, kp, kv).unwrap();
        let dc = closed.dc_gain();
        let slowest = poles(&closed)
            .unwrap()
            .iter()
            .map(|p| p.re.abs())
            .fold(f64::MAX, f64::min);
        let horizon = 20.0 / slowest;
        let cfg = motorfit::sim::ServoLoopConfig {
            plant: plant.clone(),
            kp,
            kv,
            sat_limit: None,
            reference: motorfit::sim::WaveformSpec::step(1.0),
        };
        let resp = motorfit::sim::simulate_servo_loop(&cfg, horizon / 20000.0, horizon).unwrap();
        let settled = *resp.position.samples.last().unwrap();
        assert!(
            (settled - dc).abs() <= 1e-3 * dc.abs(),
            "kp={kp} kv={kv}: settled {settled} vs DC {dc}"
        );
    }
}

/// The closed-loop servo simulation agrees with the algebraic closed-loop
/// transfer function (two independent routes to the same response).
#[test]
fn servo_simulation_matches_algebraic_loop() {
    let plant = TransferFunction::from_coeffs(&[10.0], &[0.0, 10.0, 11.0, 1.0]).unwrap();
    let kp = 5.0;
    let cfg = motorfit::sim::ServoLoopConfig {
        plant: plant.clone(),
        kp,
        kv: 0.0,
        sat_limit: None,
        reference: motorfit::sim::WaveformSpec::step(1.0),
    };
    let resp = motorfit::sim::simulate_servo_loop(&cfg, 0.002, 10.0).unwrap();
    let closed = servo_closed_loop_tf(&plant, kp, 0.0).unwrap();
    assert_eq!(closed.den().coeffs(), &[50.0, 10.0, 11.0, 1.0]);
    let direct = step_response(&closed, 1.0, 0.002, 10.0).unwrap();
    let max_err = resp
        .position
        .samples
        .iter()
        .zip(&direct.samples)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(max_err < 1e-5, "loop simulation deviates by {max_err}");
}

/// Decimating a synchronized record keeps the zero-time alignment: the
/// onset sample (index 0) is always retained.
#[test]
fn decimation_preserves_onset() {
    let input = Trace::from_samples(0.004, {
        let mut v = vec![0.0; 10];
        v.extend(vec![5.92; 90]);
        v
    });
    let sig = Trace::from_samples(0.004, (0..100).map(|k| k as f64).collect::<Vec<f64>>());
    let rec = synchronize(&input, &[(CH_VELOCITY.into(), sig)], 0.5).unwrap();
    let vel = zero_shift(rec.channel(CH_VELOCITY).unwrap());
    let dec = downsample(&vel, 25).unwrap();
    assert_eq!(dec.samples[0], 0.0);
    assert_eq!(dec.t0, 0.0);
}

/// Divergence truncation: simulate_lti returns the finite prefix.
#[test]
fn divergence_returns_partial_data() {
    let h = TransferFunction::from_coeffs(&[1.0], &[-1.0, 1.0]).unwrap(); // pole at +1
    let m = tf_to_ss_companion(&h);
    let input = Trace::from_samples(0.01, vec![1.0; 4000]);
    let y = simulate_lti(&m, &input);
    assert!(y.diverged);
    assert!(!y.is_empty());
    assert!(y.samples.iter().all(|v| v.is_finite()));
}
