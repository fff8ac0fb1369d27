//! Command-line front end: preprocess raw records, identify models, simulate
//! them and compare model predictions against measured data.
//!
//! Exit codes: 0 on success, 2 on input errors (parsing, synchronization,
//! malformed files), 3 on algorithmic identification failures. Stderr lines
//! are prefixed with the failing stage.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use motorfit::lti::{tf_to_ss_companion, TransferFunction};
use motorfit::markov::{self, estimate_markov, estimate_order, hankel_build, realize_companion};
use motorfit::model::{derive_tfs, fit_report, Diagnostics, Method, ModelDocument, TfDocument};
use motorfit::pinv::{identify_pinv, PinvOptions};
use motorfit::signal::{
    downsample, load_trace_csv, parse_record_csv, synchronize, unwrap_position, write_record_csv,
    zero_shift, CsvFormat, DEFAULT_GLITCH_FLOOR, DEFAULT_STEP_THRESHOLD, DEFAULT_UNWRAP_JUMP,
    DEFAULT_UNWRAP_SPAN,
};
use motorfit::sim::{
    add_noise, generate_reference, simulate_lti, simulate_servo_loop, ServoLoopConfig, WaveformSpec,
};
use motorfit::trace::{SyncedRecord, Trace, CH_VELOCITY};
use motorfit::{pinv, Error};

#[derive(Parser)]
#[command(
    name = "motorfit",
    version,
    about = "Identify DC-motor state-space models and transfer functions from step responses",
    after_help = "File formats:\n  \
        native CSV:  optional header 't,input,<name>', rows 't,input,signal'\n  \
        scope CSV:   rows whose last three cells parse as floats are data\n  \
        record CSV:  header 't,input,<ch>[,<ch>...]' as written by 'preprocess'\n  \
        TF literal:  ascending-power coefficients, 'num;den', e.g. '36;36,1,1'\n\n\
        The environment variable MOTORFIT_SEED overrides the default noise seed."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load raw measurement files, synchronize them at the step onset,
    /// optionally unwrap encoder channels, zero-shift and decimate.
    Preprocess(PreprocessArgs),
    /// Identify a model from a preprocessed record.
    Identify(IdentifyArgs),
    /// Simulate a model or transfer function, open- or closed-loop.
    Simulate(SimulateArgs),
    /// Compare a model's prediction against a measured record.
    Compare(CompareArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Raw measurement files, one channel each (repeatable).
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    /// Input file format.
    #[arg(long, value_enum, default_value_t = FormatArg::Native)]
    format: FormatArg,
    /// Channel names, positional per input file; defaults to the CSV header
    /// name or the file stem.
    #[arg(long = "channel")]
    channels: Vec<String>,
    /// Step-onset threshold, volts.
    #[arg(long, default_value_t = DEFAULT_STEP_THRESHOLD)]
    threshold: f64,
    /// Unwrap the named channel with the encoder parameters (repeatable).
    #[arg(long = "unwrap")]
    unwrap: Vec<String>,
    /// Encoder unwrap jump detector, volts.
    #[arg(long, default_value_t = DEFAULT_UNWRAP_JUMP)]
    jump: f64,
    /// Encoder wrap span, volts.
    #[arg(long, default_value_t = DEFAULT_UNWRAP_SPAN)]
    span: f64,
    /// Encoder glitch floor, volts.
    #[arg(long, default_value_t = DEFAULT_GLITCH_FLOOR)]
    glitch_floor: f64,
    /// Sample-reduction ratio (pure decimation).
    #[arg(long, default_value_t = 1)]
    ratio: usize,
    /// Output record CSV; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Native,
    Scope,
}

#[derive(Args)]
struct IdentifyArgs {
    /// Preprocessed record CSV.
    #[arg(long)]
    record: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// State count for the pinv method (2: position+velocity, 3: +current).
    #[arg(long, default_value_t = 2)]
    states: usize,
    /// Step magnitude, volts; inferred from the input channel when omitted.
    #[arg(long)]
    va: Option<f64>,
    /// Pole/zero cancellation tolerance for the pinv method.
    #[arg(long, default_value_t = pinv::DEFAULT_CANCEL_TOL)]
    cancel_tol: f64,
    /// Markov parameter count (odd).
    #[arg(long, default_value_t = 11)]
    lm: usize,
    /// Markov fit window, seconds; a third of the record when omitted.
    #[arg(long)]
    te: Option<f64>,
    /// Normalized singular values above this count towards the order.
    #[arg(long, default_value_t = markov::DEFAULT_GAP_THRESHOLD)]
    gap_threshold: f64,
    /// Output model document; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Pinv,
    Markov,
    FirstOrder,
}

#[derive(Args)]
struct SimulateArgs {
    /// Model document from 'identify'.
    #[arg(long, conflicts_with = "tf")]
    model: Option<PathBuf>,
    /// Which embedded transfer function to simulate.
    #[arg(long, value_enum, default_value_t = TfKind::Velocity)]
    tf_kind: TfKind,
    /// Transfer-function literal 'num;den', ascending coefficients.
    #[arg(long)]
    tf: Option<String>,
    /// Input waveform: step:MAG, sine:MAG:FREQ, triangle:MAG:FREQ,
    /// square:MAG:FREQ. Square starts at +MAG; triangle starts rising.
    #[arg(long)]
    input: String,
    #[arg(long)]
    dt: f64,
    #[arg(long)]
    duration: f64,
    /// Position-loop gain; supplying kp or kv closes the loop around the
    /// transfer function as a position plant.
    #[arg(long)]
    kp: Option<f64>,
    /// Velocity-loop gain.
    #[arg(long)]
    kv: Option<f64>,
    /// Symmetric actuator saturation, volts.
    #[arg(long)]
    sat: Option<f64>,
    /// Uniform sensor-noise amplitude added to the output.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Noise seed; defaults to MOTORFIT_SEED or 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV 't,input,output'; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TfKind {
    Velocity,
    Position,
}

#[derive(Args)]
struct CompareArgs {
    /// Model document from 'identify'.
    #[arg(long)]
    model: PathBuf,
    /// Measured record CSV (must include the compared channel).
    #[arg(long)]
    record: PathBuf,
    /// Channel to compare against.
    #[arg(long, default_value = CH_VELOCITY)]
    channel: String,
    /// Simulation step; must divide the record period evenly. Defaults to
    /// the record period.
    #[arg(long)]
    dt: Option<f64>,
    /// Write side-by-side curves 't,input,measured,simulated' here.
    #[arg(long)]
    export: Option<PathBuf>,
}

struct CliError {
    stage: &'static str,
    message: String,
    code: u8,
}

impl CliError {
    fn input(stage: &'static str, err: impl std::fmt::Display) -> Self {
        CliError {
            stage,
            message: err.to_string(),
            code: 2,
        }
    }

    fn from_identification(stage: &'static str, err: Error) -> Self {
        let code = if err.is_input_error() { 2 } else { 3 };
        CliError {
            stage,
            message: err.to_string(),
            code,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::Identify(args) => cmd_identify(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {}", e.stage, e.message);
            ExitCode::from(e.code)
        }
    }
}

fn write_out(path: &Option<PathBuf>, text: &str, stage: &'static str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::input(stage, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_preprocess(args: PreprocessArgs) -> Result<(), CliError> {
    let format = match args.format {
        FormatArg::Native => CsvFormat::Native,
        FormatArg::Scope => CsvFormat::Scope,
    };

    // Each file is one measurement (input + a single channel), truncated at
    // its own step onset, then everything is trimmed to a common length.
    let mut synced: Vec<(String, SyncedRecord)> = Vec::new();
    for (i, path) in args.inputs.iter().enumerate() {
        let loaded = load_trace_csv(path, format)
            .map_err(|e| CliError::input("load", format!("{}: {e}", path.display())))?;
        let name = args
            .channels
            .get(i)
            .cloned()
            .or(loaded.name)
            .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .unwrap_or_else(|| format!("channel{i}"));
        let rec = synchronize(
            &loaded.input,
            &[(name.clone(), loaded.signal)],
            args.threshold,
        )
        .map_err(|e| CliError::input("synchronize", format!("{}: {e}", path.display())))?;
        synced.push((name, rec));
    }

    let len = synced.iter().map(|(_, r)| r.len()).min().unwrap_or(0);
    let dt_in = synced[0].1.dt();
    for (name, rec) in &synced {
        if (rec.dt() - dt_in).abs() > 1e-12 * dt_in {
            return Err(CliError::input(
                "synchronize",
                format!(
                    "channel '{name}' sample period {} differs from {dt_in}",
                    rec.dt()
                ),
            ));
        }
    }

    let input = synced[0].1.input.truncated(len);
    let mut channels: Vec<(String, Trace)> = Vec::new();
    for (name, rec) in &synced {
        let mut tr = rec.channels[0].1.truncated(len);
        if args.unwrap.iter().any(|u| u == name) {
            tr = unwrap_position(&tr, args.jump, args.span, args.glitch_floor);
        }
        channels.push((name.clone(), zero_shift(&tr)));
    }

    let record =
        SyncedRecord::new(input, channels).map_err(|e| CliError::input("synchronize", e))?;

    let record = if args.ratio > 1 {
        let input =
            downsample(&record.input, args.ratio).map_err(|e| CliError::input("downsample", e))?;
        let mut channels = Vec::new();
        for (name, tr) in &record.channels {
            channels.push((
                name.clone(),
                downsample(tr, args.ratio).map_err(|e| CliError::input("downsample", e))?,
            ));
        }
        SyncedRecord::new(input, channels).map_err(|e| CliError::input("downsample", e))?
    } else {
        record
    };

    eprintln!(
        "preprocess: kept {} samples per channel, dt {} s -> {} s",
        record.len(),
        dt_in,
        record.dt()
    );
    write_out(&args.output, &write_record_csv(&record), "write")
}

fn load_record(path: &PathBuf) -> Result<SyncedRecord, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input("load", format!("{}: {e}", path.display())))?;
    parse_record_csv(&text).map_err(|e| CliError::input("load", format!("{}: {e}", path.display())))
}

/// Step magnitude: caller override or the mean of the input channel (the
/// record is synchronized, so every sample sits at the step level).
fn resolve_va(record: &SyncedRecord, va: Option<f64>) -> f64 {
    va.unwrap_or_else(|| record.input.samples.iter().sum::<f64>() / record.len() as f64)
}

fn cmd_identify(args: IdentifyArgs) -> Result<(), CliError> {
    let record = load_record(&args.record)?;
    let va = resolve_va(&record, args.va);

    let doc = match args.method {
        MethodArg::Pinv => {
            let mut opts = PinvOptions::new(args.states, va);
            opts.cancel_tol = args.cancel_tol;
            let id = identify_pinv(&record, &opts)
                .map_err(|e| CliError::from_identification("identify", e))?;
            let mut c = vec![0.0; args.states];
            c[1] = 1.0;
            ModelDocument {
                method: Method::Pinv,
                states: args.states,
                a: id.model.a_rows(),
                b: id.model.b.iter().cloned().collect(),
                c,
                d: 0.0,
                velocity_tf: TfDocument::from_tf(&id.velocity_tf),
                position_tf: TfDocument::from_tf(&id.position_tf),
                velocity_tf_reduced: reduced_doc(&id.velocity_tf, &id.velocity_tf_reduced),
                position_tf_reduced: reduced_doc(&id.position_tf, &id.position_tf_reduced),
                diagnostics: Diagnostics {
                    residual: Some(id.residual),
                    rank_deficient: Some(id.rank_deficient),
                    structure_deviation: Some(id.structure_deviation),
                    parameters: Some(serde_json::json!({
                        "states": args.states,
                        "va": va,
                        "cancel_tol": args.cancel_tol,
                        "dt": record.dt(),
                    })),
                    ..Default::default()
                },
            }
        }
        MethodArg::Markov => {
            let velocity = record
                .require_channel(CH_VELOCITY)
                .map_err(|e| CliError::input("identify", e))?;
            let te = args
                .te
                .unwrap_or_else(|| markov::default_fit_window(velocity.duration()));
            let seq = estimate_markov(velocity, va, args.lm, te)
                .map_err(|e| CliError::from_identification("identify", e))?;
            let hankel =
                hankel_build(&seq).map_err(|e| CliError::from_identification("identify", e))?;
            let est = estimate_order(&hankel, args.gap_threshold)
                .map_err(|e| CliError::from_identification("identify", e))?;
            // Diagnostic spectrum goes out even when the realization below
            // fails.
            eprintln!(
                "identify: normalized singular values: {}; detected order {}",
                est.spectrum
                    .iter()
                    .map(|v| format!("{v:.4}"))
                    .collect::<Vec<_>>()
                    .join(", "),
                est.order
            );
            if est.order == 0 {
                return Err(CliError {
                    stage: "identify",
                    message: "order detection found no significant singular values".into(),
                    code: 3,
                });
            }
            let model = realize_companion(&seq, est.order)
                .map_err(|e| CliError::from_identification("identify", e))?;
            let (vel_tf, pos_tf) = derive_tfs(&model, Method::Markov)
                .map_err(|e| CliError::from_identification("identify", e))?;
            let mut c = vec![0.0; est.order];
            c[0] = 1.0;
            ModelDocument {
                method: Method::Markov,
                states: est.order,
                a: model.a_rows(),
                b: model.b.iter().cloned().collect(),
                c,
                d: 0.0,
                velocity_tf: TfDocument::from_tf(&vel_tf),
                position_tf: TfDocument::from_tf(&pos_tf),
                velocity_tf_reduced: None,
                position_tf_reduced: None,
                diagnostics: Diagnostics {
                    spectrum: Some(est.spectrum.clone()),
                    detected_order: Some(est.order),
                    parameters: Some(serde_json::json!({
                        "lm": args.lm,
                        "te": te,
                        "v0": va,
                        "gap_threshold": args.gap_threshold,
                        "dt": record.dt(),
                    })),
                    ..Default::default()
                },
            }
        }
        MethodArg::FirstOrder => {
            let velocity = record
                .require_channel(CH_VELOCITY)
                .map_err(|e| CliError::input("identify", e))?;
            let h = pinv::first_order_fit(velocity, va)
                .map_err(|e| CliError::from_identification("identify", e))?;
            let model = tf_to_ss_companion(&h);
            let (vel_tf, pos_tf) = derive_tfs(&model, Method::FirstOrder)
                .map_err(|e| CliError::from_identification("identify", e))?;
            ModelDocument {
                method: Method::FirstOrder,
                states: 1,
                a: model.a_rows(),
                b: model.b.iter().cloned().collect(),
                c: model.c.iter().cloned().collect(),
                d: 0.0,
                velocity_tf: TfDocument::from_tf(&vel_tf),
                position_tf: TfDocument::from_tf(&pos_tf),
                velocity_tf_reduced: None,
                position_tf_reduced: None,
                diagnostics: Diagnostics {
                    parameters: Some(serde_json::json!({ "va": va, "dt": record.dt() })),
                    ..Default::default()
                },
            }
        }
    };

    doc.validate()
        .map_err(|e| CliError::from_identification("identify", e))?;
    let mut json = doc.to_json();
    json.push('\n');
    write_out(&args.output, &json, "write")
}

fn reduced_doc(raw: &TransferFunction, reduced: &TransferFunction) -> Option<TfDocument> {
    if raw == reduced {
        None
    } else {
        Some(TfDocument::from_tf(reduced))
    }
}

fn model_tf(path: &PathBuf, kind: TfKind) -> Result<TransferFunction, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input("load", format!("{}: {e}", path.display())))?;
    let doc = ModelDocument::from_json(&text)
        .map_err(|e| CliError::input("load", format!("{}: {e}", path.display())))?;
    let tfdoc = match kind {
        TfKind::Velocity => &doc.velocity_tf,
        TfKind::Position => &doc.position_tf,
    };
    tfdoc
        .to_tf()
        .map_err(|e| CliError::input("load", format!("{}: {e}", path.display())))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let tf = match (&args.model, &args.tf) {
        (Some(path), None) => model_tf(path, args.tf_kind)?,
        (None, Some(lit)) => {
            TransferFunction::parse_literal(lit).map_err(|e| CliError::input("parse", e))?
        }
        _ => {
            return Err(CliError::input(
                "parse",
                "exactly one of --model or --tf is required",
            ))
        }
    };
    let spec: WaveformSpec = args
        .input
        .parse()
        .map_err(|e| CliError::input("parse", e))?;

    let closed_loop = args.kp.is_some() || args.kv.is_some() || args.sat.is_some();
    let (reference, output) = if closed_loop {
        let cfg = ServoLoopConfig {
            plant: tf,
            kp: args.kp.unwrap_or(0.0),
            kv: args.kv.unwrap_or(0.0),
            sat_limit: args.sat,
            reference: spec,
        };
        let resp = simulate_servo_loop(&cfg, args.dt, args.duration)
            .map_err(|e| CliError::input("simulate", e))?;
        let reference = generate_reference(&spec, args.dt, args.duration)
            .map_err(|e| CliError::input("simulate", e))?;
        (reference.truncated(resp.position.len()), resp.position)
    } else {
        let reference = generate_reference(&spec, args.dt, args.duration)
            .map_err(|e| CliError::input("simulate", e))?;
        let m = tf_to_ss_companion(&tf);
        let y = simulate_lti(&m, &reference);
        (reference.truncated(y.len()), y)
    };

    let output = if args.noise > 0.0 {
        let seed = args.seed.unwrap_or_else(|| {
            std::env::var("MOTORFIT_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
                .unwrap_or(0)
        });
        add_noise(&output, args.noise, seed)
    } else {
        output
    };

    if output.diverged {
        eprintln!(
            "simulate: response diverged after {} samples; output truncated",
            output.len()
        );
    }

    let mut csv = String::from("t,input,output\n");
    for k in 0..output.len() {
        csv.push_str(&format!(
            "{},{},{}\n",
            output.time_at(k),
            reference.samples[k],
            output.samples[k]
        ));
    }
    write_out(&args.output, &csv, "write")
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let record = load_record(&args.record)?;
    let measured = record
        .require_channel(&args.channel)
        .map_err(|e| CliError::input("compare", e))?;
    let kind = if args.channel == "position" {
        TfKind::Position
    } else {
        TfKind::Velocity
    };
    let tf = model_tf(&args.model, kind)?;
    let m = tf_to_ss_companion(&tf);

    // Optionally simulate on a finer grid that decimates back onto the
    // record's grid.
    let simulated = match args.dt {
        None => simulate_lti(&m, &record.input),
        Some(dt) => {
            if dt.is_nan() || dt <= 0.0 {
                return Err(CliError::input("compare", "--dt must be positive"));
            }
            let ratio = record.dt() / dt;
            let k = ratio.round();
            if k < 1.0 || (ratio - k).abs() > 1e-6 {
                return Err(CliError::input(
                    "compare",
                    format!(
                        "record period {} is not an integer multiple of --dt {dt}",
                        record.dt()
                    ),
                ));
            }
            let k = k as usize;
            let mut fine_samples = Vec::with_capacity(record.len() * k);
            for v in &record.input.samples {
                fine_samples.extend(std::iter::repeat_n(*v, k));
            }
            let fine = Trace::from_samples(dt, fine_samples);
            let y = simulate_lti(&m, &fine);
            downsample(&y, k).map_err(|e| CliError::input("compare", e))?
        }
    };

    let report = fit_report(measured, &simulated).map_err(|e| CliError::input("compare", e))?;
    println!("nrmse {}", report.nrmse);
    println!("max_abs_error {}", report.max_abs_error);
    println!("horizon {}", report.horizon);

    if let Some(path) = &args.export {
        let n = measured.len().min(simulated.len());
        let mut csv = String::from("t,input,measured,simulated\n");
        for k in 0..n {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                measured.time_at(k),
                record.input.samples[k],
                measured.samples[k],
                simulated.samples[k]
            ));
        }
        std::fs::write(path, csv).map_err(|e| CliError::input("write", e))?;
    }
    Ok(())
}
