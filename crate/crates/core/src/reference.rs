//! Validation against a marker-based motion-capture reference.
//!
//! The reference system tracks the remote center `C` and the tool tip `P`.
//! With the device base frame known in camera coordinates, the tool vector
//! `V = P - C` expressed in that frame yields the gimbal angles and the
//! insertion depth `|V|`. Device and reference series are then resampled onto
//! a common grid (after an optional clock-lag search) and compared channel by
//! channel with the mean squared error.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{
    check_increasing, joint_angles_from_vector, nearest_rotation, AngleConvention, JointState,
    Transform,
};

pub const DEFAULT_REFERENCE_RATE_HZ: f64 = 120.0;
pub const DEFAULT_GRID_RATE_HZ: f64 = 100.0;
pub const DEFAULT_MAX_LAG_S: f64 = 0.5;
/// Minimum overlap between device and reference time spans, seconds.
pub const MIN_OVERLAP_S: f64 = 1.0;
/// Marker samples with `|P - C|` at or below this distance (mm) are dropped.
pub const MIN_MARKER_SEPARATION_MM: f64 = 1.0;

const TRIAD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerSample {
    pub t: f64,
    /// Remote center (trocar point), mm.
    pub center: [f64; 3],
    /// Tool tip, mm.
    pub tip: [f64; 3],
}

impl MarkerSample {
    pub fn new(t: f64, center: [f64; 3], tip: [f64; 3]) -> Self {
        Self { t, center, tip }
    }

    pub fn tool_vector(&self) -> Vector3<f64> {
        Vector3::from(self.tip) - Vector3::from(self.center)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerStream {
    samples: Vec<MarkerSample>,
    pub rate: f64,
}

impl MarkerStream {
    pub fn new(samples: Vec<MarkerSample>, rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid(format!("marker rate must be > 0, got {rate}")));
        }
        for (i, s) in samples.iter().enumerate() {
            let finite = s.t.is_finite() && s.center.iter().chain(&s.tip).all(|v| v.is_finite());
            if !finite {
                return Err(Error::invalid(format!("non-finite marker sample at index {i}")));
            }
        }
        check_increasing(samples.iter().map(|s| s.t))?;
        Ok(Self { samples, rate })
    }

    pub fn samples(&self) -> &[MarkerSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// An orthonormal frame measured in some parent (camera) frame: rows of
/// `axes` are the unit vectors `i`, `j`, `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTriad {
    pub axes: Matrix3<f64>,
    pub origin: Vector3<f64>,
}

impl FrameTriad {
    pub fn new(axes: Matrix3<f64>, origin: Vector3<f64>) -> Self {
        Self { axes, origin }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    /// Rejects triads that are not orthonormal and right-handed within 1e-6.
    pub fn validate(&self) -> Result<()> {
        if !self.axes.iter().chain(self.origin.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidFrame("non-finite entry".into()));
        }
        let gram = self.axes * self.axes.transpose() - Matrix3::identity();
        let worst = gram.abs().max();
        if worst > TRIAD_TOL {
            return Err(Error::InvalidFrame(format!(
                "axes not orthonormal (max Gram deviation {worst:.3e})"
            )));
        }
        if (self.axes.determinant() - 1.0).abs() > TRIAD_TOL {
            return Err(Error::InvalidFrame("axes are not right-handed".into()));
        }
        Ok(())
    }

    /// Pose of this frame in the parent: maps frame coordinates to parent
    /// coordinates.
    pub fn pose(&self) -> Transform {
        Transform {
            rotation: self.axes.transpose(),
            translation: self.origin,
        }
    }
}

/// Rigid transform taking reference-frame coordinates into device base-frame
/// coordinates, from two triads measured in the same parent frame.
///
/// The result satisfies `device.pose() * T == reference.pose()`.
pub fn estimate_frame_transform(device: &FrameTriad, reference: &FrameTriad) -> Result<Transform> {
    device.validate()?;
    reference.validate()?;
    let rotation = nearest_rotation(&(device.axes * reference.axes.transpose()));
    let translation = device.axes * (reference.origin - device.origin);
    Ok(Transform {
        rotation,
        translation,
    })
}

/// Gimbal angles and depth derived from one marker sample. Radians, mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceJoint {
    pub t: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: Option<f64>,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroppedSample {
    pub index: usize,
    pub t: f64,
    pub separation_mm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceJoints {
    pub joints: Vec<ReferenceJoint>,
    pub dropped: Vec<DroppedSample>,
}

/// Per-sample `V = P - C` rotated into the device frame, then
/// [`joint_angles_from_vector`] and `d = |V|`. Samples with `|V| <= 1 mm` are
/// dropped and reported.
pub fn derive_reference_joints(
    stream: &MarkerStream,
    to_device: &Transform,
    convention: AngleConvention,
) -> Result<ReferenceJoints> {
    if !to_device.is_rigid(1e-9) {
        return Err(Error::InvalidFrame("reference-to-device transform is not rigid".into()));
    }
    let mut out = ReferenceJoints::default();
    for (index, s) in stream.samples().iter().enumerate() {
        let v = to_device.apply_vector(&s.tool_vector());
        let separation_mm = v.norm();
        if separation_mm <= MIN_MARKER_SEPARATION_MM {
            log::warn!("dropping degenerate marker sample {index} at t={} (|V| = {separation_mm:.3} mm)", s.t);
            out.dropped.push(DroppedSample {
                index,
                t: s.t,
                separation_mm,
            });
            continue;
        }
        let angles = joint_angles_from_vector(&v, convention)?;
        out.joints.push(ReferenceJoint {
            t: s.t,
            phi1: angles.phi1,
            phi2: angles.phi2,
            phi3: angles.phi3,
            d: separation_mm,
        });
    }
    Ok(out)
}

/// Channels compared between device and reference (`phi3` is not observable
/// from the marker vector).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Phi1,
    Phi2,
    Translation,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Phi1, Channel::Phi2, Channel::Translation];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Phi1 => "phi1",
            Channel::Phi2 => "phi2",
            Channel::Translation => "translation",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Channel::Phi1 | Channel::Phi2 => "deg",
            Channel::Translation => "mm",
        }
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A time-stamped sample exposing the comparable channels in external units
/// (degrees, mm).
pub trait ChannelSample {
    fn time(&self) -> f64;
    fn channel(&self, channel: Channel) -> f64;
}

impl ChannelSample for JointState {
    fn time(&self) -> f64 {
        self.t
    }

    fn channel(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Phi1 => self.phi1.to_degrees(),
            Channel::Phi2 => self.phi2.to_degrees(),
            Channel::Translation => self.d,
        }
    }
}

impl ChannelSample for ReferenceJoint {
    fn time(&self) -> f64 {
        self.t
    }

    fn channel(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Phi1 => self.phi1.to_degrees(),
            Channel::Phi2 => self.phi2.to_degrees(),
            Channel::Translation => self.d,
        }
    }
}

/// Device and reference values of one channel on a shared time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub channel: Channel,
    pub times: Vec<f64>,
    pub device: Vec<f64>,
    pub reference: Vec<f64>,
}

impl AlignedPair {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Linear interpolation of `(times, values)` at `t`; `None` outside the span.
pub fn interpolate(times: &[f64], values: &[f64], t: f64) -> Option<f64> {
    let (&first, &last) = (times.first()?, times.last()?);
    if t < first || t > last {
        return None;
    }
    let hi = times.partition_point(|&x| x < t);
    if times[hi] == t {
        return Some(values[hi]);
    }
    let lo = hi - 1;
    let w = (t - times[lo]) / (times[hi] - times[lo]);
    Some(values[lo] + w * (values[hi] - values[lo]))
}

/// Uniform grid `start + k / rate` covering `[start, end]`.
pub fn uniform_grid(start: f64, end: f64, rate: f64) -> Vec<f64> {
    let n = ((end - start) * rate + 1e-9).floor() as usize + 1;
    (0..n).map(|k| start + k as f64 / rate).filter(|&t| t <= end).collect()
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> Result<(f64, f64)> {
    let start = a.0.max(b.0);
    let end = a.1.min(b.1);
    if end <= start {
        return Err(Error::Alignment(format!(
            "no temporal overlap between [{:.3}, {:.3}] s and [{:.3}, {:.3}] s",
            a.0, a.1, b.0, b.1
        )));
    }
    if end - start < MIN_OVERLAP_S {
        return Err(Error::Alignment(format!(
            "overlap of {:.3} s is shorter than {MIN_OVERLAP_S} s",
            end - start
        )));
    }
    Ok((start, end))
}

struct ChannelColumns {
    times: Vec<f64>,
    values: [Vec<f64>; 3],
}

impl ChannelColumns {
    fn from_series<S: ChannelSample>(series: &[S], time_shift: f64) -> Self {
        Self {
            times: series.iter().map(|s| s.time() + time_shift).collect(),
            values: Channel::ALL.map(|c| series.iter().map(|s| s.channel(c)).collect()),
        }
    }

    fn span(&self) -> Option<(f64, f64)> {
        Some((*self.times.first()?, *self.times.last()?))
    }

    fn resample(&self, grid: &[f64], idx: usize) -> Vec<f64> {
        grid.iter()
            .map(|&t| interpolate(&self.times, &self.values[idx], t).expect("grid inside span"))
            .collect()
    }
}

fn check_series<S: ChannelSample>(series: &[S], what: &str) -> Result<()> {
    if series.len() < 2 {
        return Err(Error::Alignment(format!("{what} series has fewer than 2 samples")));
    }
    check_increasing(series.iter().map(|s| s.time()))
}

fn align_columns(device: &ChannelColumns, reference: &ChannelColumns, grid_rate: f64) -> Result<Vec<AlignedPair>> {
    let (start, end) = overlap(
        device.span().expect("checked"),
        reference.span().expect("checked"),
    )?;
    let grid = uniform_grid(start, end, grid_rate);
    Ok(Channel::ALL
        .iter()
        .enumerate()
        .map(|(i, &channel)| AlignedPair {
            channel,
            device: device.resample(&grid, i),
            reference: reference.resample(&grid, i),
            times: grid.clone(),
        })
        .collect())
}

/// Linear interpolation of both series onto a uniform grid over their
/// overlap; one [`AlignedPair`] per channel, no extrapolation.
pub fn resample_align<D: ChannelSample, R: ChannelSample>(
    device: &[D],
    reference: &[R],
    grid_rate: f64,
) -> Result<Vec<AlignedPair>> {
    if !(grid_rate.is_finite() && grid_rate > 0.0) {
        return Err(Error::invalid(format!("grid rate must be > 0, got {grid_rate}")));
    }
    check_series(device, "device")?;
    check_series(reference, "reference")?;
    align_columns(
        &ChannelColumns::from_series(device, 0.0),
        &ChannelColumns::from_series(reference, 0.0),
        grid_rate,
    )
}

/// Mean squared difference between device and reference, in squared channel
/// units.
pub fn channel_mse(pair: &AlignedPair) -> Result<f64> {
    if pair.device.len() != pair.reference.len() {
        return Err(Error::invalid("aligned pair has mismatched lengths"));
    }
    let n = pair.device.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let sum: f64 = pair
        .device
        .iter()
        .zip(&pair.reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n as f64)
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Clock lag (seconds) to subtract from the reference timestamps so that it
/// best matches the device, searched on the grid resolution within
/// `±max_lag`. The score is the Pearson correlation averaged over channels
/// that vary in both series; ties go to the smallest absolute lag.
pub fn estimate_lag<D: ChannelSample, R: ChannelSample>(
    device: &[D],
    reference: &[R],
    grid_rate: f64,
    max_lag: f64,
) -> Result<f64> {
    check_series(device, "device")?;
    check_series(reference, "reference")?;
    let dev = ChannelColumns::from_series(device, 0.0);
    let k_max = (max_lag * grid_rate + 1e-9).floor() as i64;
    let mut best: Option<(f64, f64)> = None;
    let mut lags: Vec<i64> = (-k_max..=k_max).collect();
    lags.sort_by_key(|k| (k.abs(), *k));
    for k in lags {
        let lag = k as f64 / grid_rate;
        let reference_cols = ChannelColumns::from_series(reference, -lag);
        let Ok(pairs) = align_columns(&dev, &reference_cols, grid_rate) else {
            continue;
        };
        let scores: Vec<f64> = pairs
            .iter()
            .filter_map(|p| pearson(&p.device, &p.reference))
            .collect();
        if scores.is_empty() {
            continue;
        }
        let score = scores.iter().sum::<f64>() / scores.len() as f64;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((lag, score));
        }
    }
    Ok(best.map_or(0.0, |(lag, _)| lag))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationOptions {
    pub grid_rate: f64,
    pub lag_search: bool,
    pub max_lag: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            grid_rate: DEFAULT_GRID_RATE_HZ,
            lag_search: true,
            max_lag: DEFAULT_MAX_LAG_S,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelResult {
    pub channel: Channel,
    pub mse: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    /// Lag removed from the reference clock, seconds.
    pub lag: f64,
    pub channels: Vec<ChannelResult>,
    pub aligned: Vec<AlignedPair>,
}

impl ValidationResult {
    pub fn mse(&self, channel: Channel) -> Option<f64> {
        self.channels.iter().find(|c| c.channel == channel).map(|c| c.mse)
    }
}

/// Full comparison: optional lag search, resampling, per-channel MSE.
pub fn validate_against_reference<D: ChannelSample, R: ChannelSample>(
    device: &[D],
    reference: &[R],
    options: &ValidationOptions,
) -> Result<ValidationResult> {
    let lag = if options.lag_search {
        estimate_lag(device, reference, options.grid_rate, options.max_lag)?
    } else {
        0.0
    };
    if !(options.grid_rate.is_finite() && options.grid_rate > 0.0) {
        return Err(Error::invalid("grid rate must be > 0"));
    }
    check_series(device, "device")?;
    check_series(reference, "reference")?;
    let aligned = align_columns(
        &ChannelColumns::from_series(device, 0.0),
        &ChannelColumns::from_series(reference, -lag),
        options.grid_rate,
    )?;
    let channels = aligned
        .iter()
        .map(|p| {
            Ok(ChannelResult {
                channel: p.channel,
                mse: channel_mse(p)?,
                samples: p.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ValidationResult {
        lag,
        channels,
        aligned,
    })
}
