use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;

use rcm_track::acquisition::{decode_stream, Calibration};
use rcm_track::evaluation::{
    bimanual_report, single_hand_report, workspace_boundary, BoundarySummary, ConfigEcho, Hand, SessionHands,
    SessionReport, Subcategory, ValidationSummary,
};
use rcm_track::io::{self, StreamKind};
use rcm_track::kinematics::{reconstruct_trajectory, AngleConvention, JointState};
use rcm_track::metrics::{compute_metric_set, MetricConfig, MetricSet};
use rcm_track::nalgebra::{Matrix3, Vector3};
use rcm_track::reference::{
    derive_reference_joints, estimate_frame_transform, validate_against_reference, FrameTriad, ValidationOptions,
    ValidationResult,
};
use rcm_track::simulator::{
    calibration_for, corrupt_and_encode, markers_from_joints, ConeScan, NoiseParams, PegTransferProfile, ScanParams,
};
use rcm_track::Error;

use crate::{DecodeArgs, EvaluateArgs, Profile, ReportArgs, ReportFormat, SimulateArgs, ValidateArgs};

fn ensure_out_dir(dir: &Path) -> Result<()> {
    if !dir.is_dir() {
        return Err(Error::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        }
        .into());
    }
    Ok(())
}

fn load_calibration(path: Option<&Path>) -> Result<Calibration> {
    match path {
        Some(p) => Ok(io::read_calibration_file(p)?),
        None => Ok(Calibration::default()),
    }
}

/// Reads a raw or decoded stream; raw streams are decoded with `cal`.
fn load_joints(path: &Path, cal: &Calibration) -> Result<Vec<JointState>> {
    let joints = match io::detect_stream_kind(path)? {
        StreamKind::Raw => {
            let frames = io::read_raw_stream_file(path)?;
            decode_stream(&frames, cal).with_context(|| format!("decoding {}", path.display()))?
        }
        StreamKind::Joints => io::read_joints_file(path)?,
    };
    info!("{}: {} samples", path.display(), joints.len());
    Ok(joints)
}

/// Device base frame as seen by the simulated reference system: z points
/// down into the workspace, rotated 35 degrees about the vertical.
fn simulated_device_frame() -> FrameTriad {
    let a = 35f64.to_radians();
    let axes = Matrix3::new(a.cos(), a.sin(), 0.0, a.sin(), -a.cos(), 0.0, 0.0, 0.0, -1.0);
    FrameTriad::new(axes, Vector3::new(250.0, -120.0, 400.0))
}

fn load_frames(device: &Path, reference: Option<&PathBuf>) -> Result<rcm_track::kinematics::Transform> {
    let device = io::read_triad_file(device)?;
    let reference = match reference {
        Some(p) => io::read_triad_file(p)?,
        None => FrameTriad::identity(),
    };
    Ok(estimate_frame_transform(&device, &reference)?)
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let base = Calibration {
        cone_half_angle: args.cone_half_angle,
        sample_rate: args.rate,
        ..load_calibration(args.calibration.as_deref())?
    };
    let profile_name = match args.profile {
        Profile::ConeScan => "cone-scan",
        Profile::PegTransfer => "peg-transfer",
    };
    let hand: Hand = args.hand.into();
    let (duration, truth, marker_truth) = match args.profile {
        Profile::ConeScan => {
            let duration = args.duration.unwrap_or(60.0);
            let scan = ConeScan::new(ScanParams {
                cone_half_angle: args.cone_half_angle,
                d_range: [args.d_min, args.d_max],
                duration,
                rate: args.rate,
                phi3_range: rcm_track::simulator::default_phi3_range(hand),
                ..ScanParams::default()
            })?;
            let markers = args.markers.then(|| scan.sample_at_rate(args.marker_rate));
            (duration, scan.sample(), markers)
        }
        Profile::PegTransfer => {
            let duration = args.duration.unwrap_or(164.0);
            let profile = PegTransferProfile::new(duration, args.rate, hand, args.seed)?;
            let markers = args.markers.then(|| profile.sample_at_rate(args.marker_rate));
            (duration, profile.sample(), markers)
        }
    };
    let cal = calibration_for(&truth, &base);
    let noise = NoiseParams {
        angle_noise_sd: args.angle_noise,
        translation_noise_sd: args.translation_noise,
        seed: args.seed,
    };
    let encoded = corrupt_and_encode(&truth, &cal, &noise)?;
    let header = vec![format!(
        "rcm-track simulate profile={profile_name} hand={} seed={} rate={} duration={duration} angle_noise={} translation_noise={}",
        hand.name(),
        args.seed,
        args.rate,
        args.angle_noise,
        args.translation_noise
    )];

    let raw_path = args.out.join("raw.csv");
    io::write_raw_stream_file(&raw_path, &encoded.frames, &header)?;
    io::write_joints_file(&args.out.join("truth.csv"), &truth, &header)?;
    io::write_calibration_file(&args.out.join("calibration.json"), &cal)?;
    if let Some(marker_truth) = marker_truth {
        let frame = simulated_device_frame();
        let to_device = estimate_frame_transform(&frame, &FrameTriad::identity())?;
        // different stream from the encoder noise so the two are independent
        let markers = markers_from_joints(
            &marker_truth,
            &to_device,
            args.marker_rate,
            args.marker_jitter,
            args.seed.wrapping_add(1),
        )?;
        io::write_markers_file(&args.out.join("markers.csv"), &markers)?;
        io::write_triad_file(&args.out.join("device_frame.txt"), &frame)?;
    }

    let max_cone = truth.iter().map(|q| q.cone_angle().to_degrees()).fold(0.0, f64::max);
    println!("profile: {profile_name} ({})", hand.name());
    println!("samples: {}", encoded.frames.len());
    println!("max cone angle: {max_cone:.4} deg");
    println!("seed: {}", args.seed);
    println!("saturated samples: {}", encoded.saturated.len());
    println!("wrote: {}", args.out.display());
    Ok(())
}

pub fn decode(args: &DecodeArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let cal = load_calibration(args.calibration.as_deref())?;
    let frames = io::read_raw_stream_file(&args.input)?;
    let joints = decode_stream(&frames, &cal)?;
    let traj = reconstruct_trajectory(&joints)?;
    io::write_joints_file(&args.out.join("joints.csv"), &joints, &[])?;
    io::write_trajectory_file(&args.out.join("trajectory.csv"), &traj)?;
    println!("decoded {} frames", joints.len());
    println!("wrote: {}", args.out.display());
    Ok(())
}

fn run_validation(
    device: &[JointState],
    reference: &Path,
    device_frame: &Path,
    reference_frame: Option<&PathBuf>,
    rate: f64,
    convention: AngleConvention,
    options: &ValidationOptions,
) -> Result<(ValidationResult, rcm_track::reference::ReferenceJoints)> {
    let to_device = load_frames(device_frame, reference_frame)?;
    let markers = io::read_markers_file(reference, rate)?;
    let derived = derive_reference_joints(&markers, &to_device, convention)?;
    if !derived.dropped.is_empty() {
        log::warn!("{} degenerate marker samples dropped", derived.dropped.len());
    }
    let result = validate_against_reference(device, &derived.joints, options)?;
    Ok((result, derived))
}

pub fn validate(args: &ValidateArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let cal = load_calibration(args.calibration.as_deref())?;
    let device = load_joints(&args.device, &cal)?;
    let options = ValidationOptions {
        grid_rate: args.grid_rate,
        lag_search: !args.no_lag,
        max_lag: args.max_lag,
    };
    let (result, derived) = run_validation(
        &device,
        &args.reference,
        &args.device_frame,
        args.reference_frame.as_ref(),
        args.reference_rate,
        args.convention.into(),
        &options,
    )?;
    let summary = ValidationSummary::from_result(&result, derived.dropped.len());
    let json = serde_json::json!({
        "validation": summary,
        "options": options,
        "convention": match AngleConvention::from(args.convention) {
            AngleConvention::Paper => "paper",
            AngleConvention::Reconciled => "reconciled",
        },
        "dropped": derived.dropped,
    });
    let path = args.out.join("validation.json");
    std::fs::write(&path, serde_json::to_string_pretty(&json)? + "\n").map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    io::write_aligned_file(&args.out.join("aligned.csv"), &result.aligned)?;
    io::write_reference_joints_file(&args.out.join("reference_joints.csv"), &derived.joints)?;

    println!("lag: {:.3} s", result.lag);
    println!("{:<12} {:>12}  unit", "channel", "mse");
    for c in &result.channels {
        println!("{:<12} {:>12.6}  {}^2", c.channel.name(), c.mse, c.channel.unit());
    }
    println!("samples: {}, dropped reference samples: {}", summary.samples, summary.dropped_samples);
    println!("wrote: {}", args.out.display());
    Ok(())
}

struct HandResult {
    hand: Hand,
    metrics: std::result::Result<MetricSet, Error>,
    boundary: Option<BoundarySummary>,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    if args.left.is_none() && args.right.is_none() {
        bail!(Error::InvalidInput("evaluate needs --left and/or --right".into()));
    }
    let mut cfg = match &args.metric_config {
        Some(p) => io::read_metric_config_file(p)?,
        None => MetricConfig::default(),
    };
    if let Some(mode) = args.jerk_mode {
        cfg.jerk_mode = mode.into();
    }
    cfg.validate()?;
    let shared = load_calibration(args.calibration.as_deref())?;
    let cal_for = |specific: &Option<PathBuf>| -> Result<Calibration> {
        match specific {
            Some(p) => Ok(io::read_calibration_file(p)?),
            None => Ok(shared),
        }
    };
    let left_cal = cal_for(&args.left_calibration)?;
    let right_cal = cal_for(&args.right_calibration)?;

    let mut notes = Vec::new();
    let mut hands = Vec::new();
    let mut streams = Vec::new();
    for (hand, path, cal) in [
        (Hand::Left, &args.left, left_cal),
        (Hand::Right, &args.right, right_cal),
    ] {
        let Some(path) = path else { continue };
        let joints = load_joints(path, &cal)?;
        let metrics = reconstruct_trajectory(&joints).and_then(|traj| compute_metric_set(&traj, &cfg));
        if let Err(e) = &metrics {
            notes.push(format!("{}: {e}", hand.name()));
        }
        let boundary = match workspace_boundary(&joints, cal.cone_half_angle) {
            Ok(b) => {
                if b.violation {
                    notes.push(format!(
                        "{}: cone angle {:.4} deg exceeds the {:.1} deg half-angle",
                        hand.name(),
                        b.max_cone_angle_deg,
                        b.cone_half_angle_deg
                    ));
                }
                Some(b)
            }
            Err(e) => {
                notes.push(format!("{}: no workspace boundary ({e})", hand.name()));
                None
            }
        };
        hands.push(HandResult { hand, metrics, boundary });
        streams.push((hand, joints));
    }

    let validation = match &args.reference {
        Some(reference) => {
            let hand = args.reference_hand.map(Hand::from).unwrap_or(streams[0].0);
            let Some((_, joints)) = streams.iter().find(|(h, _)| *h == hand) else {
                bail!(Error::InvalidInput(format!("--reference-hand {} has no stream", hand.name())));
            };
            let device_frame = args.device_frame.as_ref().expect("clap enforces --device-frame");
            let (result, derived) = run_validation(
                joints,
                reference,
                device_frame,
                args.reference_frame.as_ref(),
                args.reference_rate,
                args.convention.into(),
                &ValidationOptions::default(),
            )?;
            notes.push(format!("validation reference belongs to the {} hand", hand.name()));
            Some(ValidationSummary::from_result(&result, derived.dropped.len()))
        }
        None => None,
    };

    let mut config = ConfigEcho::new(cfg, if args.left.is_some() { left_cal } else { right_cal });
    if args.left.is_some() && args.right.is_some() && left_cal != right_cal {
        config.right_calibration = Some(right_cal);
    }
    let ok: Vec<(Hand, MetricSet)> = hands
        .iter()
        .filter_map(|h| h.metrics.as_ref().ok().map(|m| (h.hand, *m)))
        .collect();
    let mut report = match ok.as_slice() {
        [(Hand::Left, l), (Hand::Right, r)] => bimanual_report(l, r, validation, config),
        [(hand, m)] => single_hand_report(*hand, m, validation, config),
        _ => SessionReport {
            session: SessionHands::default(),
            comparison: None,
            observations: Vec::new(),
            validation: validation.map(|v| v.rounded(&config.precision)),
            workspace: Default::default(),
            config,
            notes: Vec::new(),
        },
    };
    for h in &hands {
        if let Some(b) = &h.boundary {
            report = report.with_workspace(h.hand, b);
        }
    }
    report.notes.extend(notes);

    io::write_report_file(&args.out.join("report.json"), &report)?;
    io::write_metrics_csv_file(&args.out.join("metrics.csv"), &report)?;
    print!("{}", render_text(&report));
    println!("wrote: {}", args.out.display());

    if let Some(failed) = hands.into_iter().find_map(|h| h.metrics.err()) {
        return Err(failed.into());
    }
    Ok(())
}

fn fmt_value(v: Option<f64>, dp: usize) -> String {
    v.map_or("undefined".to_string(), |x| format!("{x:.dp$}"))
}

/// Fixed-width table of a report: one row per metric, grouped by subcategory.
pub fn render_text(report: &SessionReport) -> String {
    let p = report.config.precision;
    let left = report.view(Hand::Left).map(|v| v.metric_set());
    let right = report.view(Hand::Right).map(|v| v.metric_set());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<22} {:<8} {:>14} {:>14} {:>10}",
        "metric", "unit", "left", "right", "rel.diff"
    );
    for sub in Subcategory::ALL {
        let _ = writeln!(out, "{}", sub.name());
        for &metric in sub.members() {
            let dp = p.for_metric(metric) as usize;
            let l = left.as_ref().map(|m| fmt_value(m.get(metric), dp)).unwrap_or_else(|| "-".into());
            let r = right.as_ref().map(|m| fmt_value(m.get(metric), dp)).unwrap_or_else(|| "-".into());
            let diff = report
                .comparison
                .as_ref()
                .and_then(|c| c.iter().find(|c| c.metric == metric))
                .map(|c| c.relative_difference.map_or("n/a".into(), |d| format!("{:+.2}%", 100.0 * d)))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "  {:<20} {:<8} {:>14} {:>14} {:>10}", metric.name(), metric.unit(), l, r, diff);
        }
    }
    if let Some(v) = &report.validation {
        let _ = writeln!(out, "validation (lag {:.3} s, {} samples)", v.lag_s, v.samples);
        for (channel, mse) in &v.mse {
            let _ = writeln!(out, "  mse {channel:<16} {mse:.6}");
        }
    }
    for (hand, b) in &report.workspace {
        let _ = writeln!(
            out,
            "workspace {}: max cone angle {:.4} deg{}",
            hand.name(),
            b.max_cone_angle_deg,
            if b.violation { " (exceeds half-angle)" } else { "" }
        );
    }
    for o in &report.observations {
        let _ = writeln!(out, "observation: {o}");
    }
    for n in &report.notes {
        let _ = writeln!(out, "note: {n}");
    }
    out
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let report = io::read_report_file(&args.input)?;
    let text = match args.format {
        ReportFormat::Text => render_text(&report),
        ReportFormat::Csv => {
            let mut buf = Vec::new();
            io::write_metrics_csv(&mut buf, &report).context("rendering CSV")?;
            String::from_utf8(buf).expect("CSV output is UTF-8")
        }
    };
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?,
        None => print!("{text}"),
    }
    Ok(())
}
