//! Regenerates the committed synthetic servo-trainer record under
//! `tests/data/servo_step/`.
//!
//! Ground truth is the third-order motor model
//!
//! ```text
//! A = [[0, 1, 0], [-0.019, -2.6, 0.8], [-0.009, -0.3, -1.8]]
//! B = [0, 2.4, 0.45],  Va = 5.92 V
//! ```
//!
//! whose velocity transfer function is second order with a zero at -1.95
//! (plus the near-origin pole/zero artifact pair). The motor rests for
//! 0.5 s, then sees the step; position, velocity and armature current are
//! recorded at 4 ms for 6.5 s more. The position channel goes through a
//! +-10.2 V encoder (span 20.4 V) and picks up three dropout glitches; all
//! channels carry 2 mV of uniform sensor noise.
//!
//! Usage: `cargo run -p motorfit --example make_synthetic_record -- [outdir]`

use std::path::PathBuf;

use motorfit::sim::{add_noise, simulate_states};
use motorfit::trace::Trace;
use motorfit::StateSpaceModel;

const DT: f64 = 0.004;
const ONSET: f64 = 0.5;
const TOTAL: f64 = 7.0;
const VA: f64 = 5.92;
const NOISE: f64 = 0.002;
const ENCODER_SPAN: f64 = 20.4;
/// Times (s) of injected encoder dropouts, all in mid-wrap segments.
const GLITCH_TIMES: [f64; 3] = [2.0, 3.3, 6.0];

fn main() {
    let outdir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("crates/motorfit/tests/data/servo_step"));
    std::fs::create_dir_all(&outdir).expect("create output directory");

    let model = StateSpaceModel::new(
        nalgebra::DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 0.0, -0.019, -2.6, 0.8, -0.009, -0.3, -1.8],
        ),
        nalgebra::DVector::from_vec(vec![0.0, 2.4, 0.45]),
        nalgebra::RowDVector::from_row_slice(&[0.0, 1.0, 0.0]),
        0.0,
    )
    .unwrap();

    let steps = (TOTAL / DT).round() as usize;
    let onset_k = (ONSET / DT).round() as usize;
    let input = Trace::from_samples(
        DT,
        (0..=steps)
            .map(|k| if k >= onset_k { VA } else { 0.0 })
            .collect(),
    );
    let (states, diverged) = simulate_states(&model, &input);
    assert!(!diverged);

    let channel =
        |idx: usize| -> Trace { Trace::from_samples(DT, states.iter().map(|x| x[idx]).collect()) };
    let theta = channel(0);
    let velocity = channel(1);
    let current = channel(2);

    // Encoder view of the position: wrapped into [-10.2, +10.2).
    let mut wrapped =
        theta.map(|&v| ((v + ENCODER_SPAN / 2.0).rem_euclid(ENCODER_SPAN)) - ENCODER_SPAN / 2.0);
    for t in GLITCH_TIMES {
        let k = wrapped.index_at(t);
        assert!(
            wrapped.samples[k - 1].abs() > 6.0,
            "glitch at t={t} must drop from a high encoder value"
        );
        wrapped.samples[k] = 0.013;
    }

    let noisy_input = add_noise(&input, NOISE, 10);
    let files = [
        ("position.csv", add_noise(&wrapped, NOISE, 11)),
        ("velocity.csv", add_noise(&velocity, NOISE, 12)),
        ("current.csv", add_noise(&current, NOISE, 13)),
    ];
    for (file, signal) in files {
        let name = file.trim_end_matches(".csv");
        let mut csv = format!("t,input,{name}\n");
        for k in 0..signal.len() {
            csv.push_str(&format!(
                "{},{},{}\n",
                signal.time_at(k),
                noisy_input.samples[k],
                signal.samples[k]
            ));
        }
        std::fs::write(outdir.join(file), csv).expect("write channel file");
    }
    eprintln!(
        "wrote {} rows per channel to {}",
        steps + 1,
        outdir.display()
    );
}
