//! Synthetic joint-space trajectories for testing without hardware.
//!
//! Two profiles are provided. [`ConeScan`] spirals out to the cone boundary,
//! circles it and spirals back in, with sinusoidal depth and roll sweeps.
//! [`PegTransferProfile`] runs six grasp, transfer and place phases with
//! dwell periods between minimum-jerk moves.
//!
//! Both are continuous-time and C2 in time, so they can be sampled at any
//! rate (device and reference streams come from the same profile). Noise
//! uses ChaCha8 seeded from a `u64`, which is stable across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::acquisition::{encode_state, Calibration, EncoderFrame};
use crate::error::{EncoderChannel, Error, Result};
use crate::evaluation::Hand;
use crate::kinematics::{forward_kinematics, JointState, Transform, DEFAULT_CONE_HALF_ANGLE_DEG};
use crate::reference::{MarkerSample, MarkerStream};

pub const PHASES: usize = 6;
pub const MIN_PEG_TRANSFER_DURATION_S: f64 = 30.0;

/// Default roll (phi3) ranges per hand, degrees.
pub fn default_phi3_range(hand: Hand) -> [f64; 2] {
    match hand {
        Hand::Left => [-70.0, 40.0],
        Hand::Right => [-120.0, 10.0],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanParams {
    pub cone_half_angle: f64,
    pub d_range: [f64; 2],
    pub duration: f64,
    pub rate: f64,
    pub phi3_range: [f64; 2],
    /// Seconds per revolution of the (phi1, phi2) sweep.
    pub revolution_period: f64,
    /// Boundary ellipse semi-axis along phi2 relative to phi1 (1 = circle).
    pub aspect: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            cone_half_angle: DEFAULT_CONE_HALF_ANGLE_DEG,
            d_range: [40.0, 100.0],
            duration: 60.0,
            rate: 100.0,
            phi3_range: default_phi3_range(Hand::Left),
            revolution_period: 2.0,
            aspect: 1.0,
        }
    }
}

impl ScanParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cone_half_angle", self.cone_half_angle),
            ("duration", self.duration),
            ("rate", self.rate),
            ("revolution_period", self.revolution_period),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        let [lo, hi] = self.d_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
            return Err(Error::invalid(format!("d_range must be positive and increasing, got {:?}", self.d_range)));
        }
        let [a, b] = self.phi3_range;
        if !(a.is_finite() && b.is_finite() && a <= b && a >= -180.0 && b < 180.0) {
            return Err(Error::invalid(format!("invalid phi3_range {:?}", self.phi3_range)));
        }
        if !(self.aspect > 0.0 && self.aspect <= 1.0) {
            return Err(Error::invalid(format!("aspect must be in (0, 1], got {}", self.aspect)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub angle_noise_sd: f64,
    pub translation_noise_sd: f64,
    pub seed: u64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            angle_noise_sd: 0.0,
            translation_noise_sd: 0.0,
            seed: 0,
        }
    }
}

/// Quintic smoothstep `10u^3 - 15u^4 + 6u^5`: zero velocity and acceleration
/// at both ends.
fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}

fn sample_times(duration: f64, rate: f64, inclusive: bool) -> Vec<f64> {
    // tolerate representation error in duration * rate, never sample past the end
    let n = (duration * rate * (1.0 + 1e-12)).floor() as usize;
    let count = if inclusive { n + 1 } else { n };
    (0..count).map(|k| k as f64 / rate).collect()
}

/// Spiral workspace scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeScan {
    params: ScanParams,
}

impl ConeScan {
    /// Fraction of the duration spent spiralling out (and again spiralling in).
    const RAMP_FRACTION: f64 = 0.4;

    pub fn new(params: ScanParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &ScanParams {
        &self.params
    }

    fn radius_fraction(&self, t: f64) -> f64 {
        let ramp = Self::RAMP_FRACTION * self.params.duration;
        let end = self.params.duration;
        if t < ramp {
            smoothstep(t / ramp)
        } else if t > end - ramp {
            smoothstep((end - t) / ramp)
        } else {
            1.0
        }
    }

    pub fn at(&self, t: f64) -> JointState {
        let p = &self.params;
        let tau = std::f64::consts::TAU;
        // stay a hair inside the cone so rounding never crosses the boundary
        let amplitude = p.cone_half_angle * (1.0 - 1e-12) * self.radius_fraction(t);
        let psi = tau * t / p.revolution_period;
        let phi1 = amplitude * psi.cos();
        let phi2 = amplitude * p.aspect * psi.sin();
        let [d_lo, d_hi] = p.d_range;
        let d = (0.5 * (d_lo + d_hi) + 0.5 * (d_hi - d_lo) * (tau * t / (3.7 * p.revolution_period)).sin())
            .clamp(d_lo, d_hi);
        let [r_lo, r_hi] = p.phi3_range;
        let phi3 = 0.5 * (r_lo + r_hi) + 0.5 * (r_hi - r_lo) * (tau * t / (5.3 * p.revolution_period)).sin();
        JointState::from_degrees(phi1, phi2, phi3, d, t)
    }

    /// Samples `t = k / rate` for `k in 0..duration * rate`.
    pub fn sample(&self) -> Vec<JointState> {
        self.sample_at_rate(self.params.rate)
    }

    pub fn sample_at_rate(&self, rate: f64) -> Vec<JointState> {
        sample_times(self.params.duration, rate, false)
            .into_iter()
            .map(|t| self.at(t))
            .collect()
    }
}

pub fn generate_cone_scan(params: &ScanParams) -> Result<Vec<JointState>> {
    Ok(ConeScan::new(*params)?.sample())
}

/// Joint targets in degrees / mm.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Pose {
    phi1: f64,
    phi2: f64,
    phi3: f64,
    d: f64,
}

/// Manipulation oscillation superimposed on a move: depth amplitude (mm)
/// and lateral amplitude (degrees, per gimbal axis).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Wobble {
    d: f64,
    angle: f64,
}

impl Wobble {
    const NONE: Wobble = Wobble { d: 0.0, angle: 0.0 };
}

/// Seconds spent accelerating (and decelerating) at each end of a move.
const MOVE_RAMP_S: f64 = 0.4;

/// Integral of the quintic smoothstep from 0 to `x`.
fn smoothstep_integral(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x.powi(4) * (2.5 + x * (-3.0 + x))
}

/// Fraction of a move covered after `tau` seconds of a `duration`-second
/// move: speed rises along a smoothstep over `ramp` seconds, cruises, and
/// falls symmetrically. Falls back to a plain smoothstep when the move is
/// too short to cruise.
fn cruise_profile(tau: f64, duration: f64, ramp: f64) -> f64 {
    if duration < 2.0 * ramp {
        return smoothstep(tau / duration);
    }
    let v = 1.0 / (duration - ramp);
    if tau <= ramp {
        v * ramp * smoothstep_integral(tau / ramp)
    } else if tau >= duration - ramp {
        1.0 - v * ramp * smoothstep_integral((duration - tau) / ramp)
    } else {
        v * (0.5 * ramp + (tau - ramp))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    start: f64,
    end: f64,
    from: Pose,
    to: Pose,
    wobble: Wobble,
}

impl Segment {
    fn at(&self, t: f64) -> Pose {
        let duration = self.end - self.start;
        let u = ((t - self.start) / duration).clamp(0.0, 1.0);
        let s = cruise_profile(u * duration, duration, MOVE_RAMP_S);
        let lerp = |a: f64, b: f64| a + (b - a) * s;
        // C2 envelope, zero with zero slope and curvature at both ends
        let envelope = (4.0 * u * (1.0 - u)).powi(3);
        let w = |hz: f64| envelope * (std::f64::consts::TAU * hz * (t - self.start)).sin();
        Pose {
            phi1: lerp(self.from.phi1, self.to.phi1) + self.wobble.angle * w(1.6),
            phi2: lerp(self.from.phi2, self.to.phi2) + self.wobble.angle * w(1.9),
            phi3: lerp(self.from.phi3, self.to.phi3),
            d: lerp(self.from.d, self.to.d) + self.wobble.d * w(1.2),
        }
    }
}

/// Six-phase peg-transfer-like profile: each phase dwells, reaches down to a
/// peg, dwells (grasp), lifts to the hand-off height, dwells (hand-off) and
/// places the peg deep again. Synthetic; shaped to the scale of a real
/// session (about half the time idle, about 55 mm of depth excursion), not
/// to any recorded waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct PegTransferProfile {
    duration: f64,
    rate: f64,
    hand: Hand,
    seed: u64,
    segments: Vec<Segment>,
}

/// Fractions of each phase: (dwell, reach, grasp dwell, lift, hand-off dwell, place).
const PHASE_SPLIT: [f64; 6] = [0.18, 0.14, 0.14, 0.18, 0.16, 0.20];

impl PegTransferProfile {
    pub fn new(duration: f64, rate: f64, hand: Hand, seed: u64) -> Result<Self> {
        if !(duration.is_finite() && duration >= MIN_PEG_TRANSFER_DURATION_S) {
            return Err(Error::invalid(format!(
                "peg transfer needs at least {MIN_PEG_TRANSFER_DURATION_S} s for {PHASES} phases, got {duration}"
            )));
        }
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid(format!("rate must be > 0, got {rate}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [r3_lo, r3_hi] = default_phi3_range(hand);
        // the right hand oscillates more
        let (phi1_range, phi2_range, wobble) = match hand {
            Hand::Left => ((-10.0, 2.0), (-8.0, 8.0), Wobble { d: 8.0, angle: 3.0 }),
            Hand::Right => ((-6.0, 10.0), (-10.0, 10.0), Wobble { d: 9.0, angle: 3.5 }),
        };
        let limit = 0.98 * DEFAULT_CONE_HALF_ANGLE_DEG - std::f64::consts::SQRT_2 * wobble.angle;
        let draw_pose = |rng: &mut ChaCha8Rng, d_lo: f64, d_hi: f64| {
            let mut phi1: f64 = rng.random_range(phi1_range.0..phi1_range.1);
            let mut phi2: f64 = rng.random_range(phi2_range.0..phi2_range.1);
            let r = phi1.hypot(phi2);
            if r > limit {
                phi1 *= limit / r;
                phi2 *= limit / r;
            }
            Pose {
                phi1,
                phi2,
                phi3: rng.random_range(r3_lo..r3_hi),
                d: rng.random_range(d_lo..d_hi),
            }
        };

        let phase_len = duration / PHASES as f64;
        let mut current = Pose {
            phi1: 0.5 * (phi1_range.0 + phi1_range.1),
            phi2: 0.0,
            phi3: 0.5 * (r3_lo + r3_hi),
            d: 48.0,
        };
        // keep the depth wobble inside the default 100 mm travel
        let deep = 99.0 - wobble.d;
        let mut segments = Vec::new();
        for phase in 0..PHASES {
            let pick = draw_pose(&mut rng, deep - 5.0, deep);
            let handoff = draw_pose(&mut rng, 46.0, 50.0);
            let place = draw_pose(&mut rng, deep - 7.0, deep);
            let targets = [current, pick, pick, handoff, handoff, place];
            let mut t = phase as f64 * phase_len;
            for (k, (&frac, &to)) in PHASE_SPLIT.iter().zip(&targets).enumerate() {
                let end = if phase == PHASES - 1 && k == PHASE_SPLIT.len() - 1 {
                    duration
                } else {
                    t + frac * phase_len
                };
                let moving = k % 2 == 1;
                segments.push(Segment {
                    start: t,
                    end,
                    from: current,
                    to,
                    wobble: if moving { wobble } else { Wobble::NONE },
                });
                current = to;
                t = end;
            }
        }
        Ok(Self {
            duration,
            rate,
            hand,
            seed,
            segments,
        })
    }

    pub fn hand(&self) -> Hand {
        self.hand
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn at(&self, t: f64) -> JointState {
        let idx = self
            .segments
            .partition_point(|s| s.end < t)
            .min(self.segments.len() - 1);
        let p = self.segments[idx].at(t);
        JointState::from_degrees(p.phi1, p.phi2, p.phi3, p.d, t)
    }

    /// Samples `t = k / rate` for `k in 0..=duration * rate`.
    pub fn sample(&self) -> Vec<JointState> {
        self.sample_at_rate(self.rate)
    }

    pub fn sample_at_rate(&self, rate: f64) -> Vec<JointState> {
        sample_times(self.duration, rate, true)
            .into_iter()
            .map(|t| self.at(t))
            .collect()
    }
}

pub fn generate_peg_transfer_profile(duration: f64, rate: f64, hand: Hand, seed: u64) -> Result<Vec<JointState>> {
    Ok(PegTransferProfile::new(duration, rate, hand, seed)?.sample())
}

/// Calibration whose translation zero sits at the first sample's depth, so a
/// stream decoder starting on that frame reproduces absolute depths.
pub fn calibration_for(joints: &[JointState], base: &Calibration) -> Calibration {
    Calibration {
        depth_at_zero: joints.first().map_or(base.depth_at_zero, |q| q.d),
        ..*base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedStream {
    pub frames: Vec<EncoderFrame>,
    /// Indices of samples that had to be clamped into the encoder range.
    pub saturated: Vec<usize>,
}

fn clamp_to_encoder(q: &JointState) -> JointState {
    let limit = |v: f64, ch: EncoderChannel| {
        let lo = -180.0;
        let hi = 180.0 - ch.step_deg();
        v.to_degrees().clamp(lo, hi).to_radians()
    };
    JointState {
        phi1: limit(q.phi1, EncoderChannel::C1),
        phi2: limit(q.phi2, EncoderChannel::C2),
        phi3: limit(q.phi3, EncoderChannel::C3),
        d: q.d.max(0.0),
        t: q.t,
    }
}

/// Adds Gaussian noise per [`NoiseParams`] and quantizes every sample.
pub fn corrupt_and_encode(joints: &[JointState], cal: &Calibration, noise: &NoiseParams) -> Result<EncodedStream> {
    cal.validate()?;
    let angle = Normal::new(0.0, noise.angle_noise_sd)
        .map_err(|e| Error::invalid(format!("angle_noise_sd: {e}")))?;
    let translation = Normal::new(0.0, noise.translation_noise_sd)
        .map_err(|e| Error::invalid(format!("translation_noise_sd: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut out = EncodedStream {
        frames: Vec::with_capacity(joints.len()),
        saturated: Vec::new(),
    };
    for (i, q) in joints.iter().enumerate() {
        let noisy = JointState {
            phi1: q.phi1 + angle.sample(&mut rng).to_radians(),
            phi2: q.phi2 + angle.sample(&mut rng).to_radians(),
            phi3: q.phi3 + angle.sample(&mut rng).to_radians(),
            d: q.d + translation.sample(&mut rng),
            t: q.t,
        };
        let frame = match encode_state(&noisy, cal) {
            Ok(f) => f,
            Err(Error::Saturation { .. }) => {
                out.saturated.push(i);
                encode_state(&clamp_to_encoder(&noisy), cal)?
            }
            Err(e) => return Err(e),
        };
        out.frames.push(frame);
    }
    Ok(out)
}

/// Marker capture of the trocar point and tool tip for the given joint
/// states. `to_device` maps reference-frame coordinates into the device base
/// frame (as [`crate::reference::estimate_frame_transform`] returns);
/// `jitter_sd` adds isotropic Gaussian noise (mm) to every marker coordinate.
pub fn markers_from_joints(
    joints: &[JointState],
    to_device: &Transform,
    rate: f64,
    jitter_sd: f64,
    seed: u64,
) -> Result<MarkerStream> {
    let to_reference = to_device.inverse();
    let jitter = Normal::new(0.0, jitter_sd).map_err(|e| Error::invalid(format!("jitter_sd: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = |p: nalgebra::Vector3<f64>| -> [f64; 3] {
        [
            p.x + jitter.sample(&mut rng),
            p.y + jitter.sample(&mut rng),
            p.z + jitter.sample(&mut rng),
        ]
    };
    let samples = joints
        .iter()
        .map(|q| {
            let center = to_reference.apply_point(&nalgebra::Vector3::zeros());
            let tip = to_reference.apply_point(&forward_kinematics(q).vector());
            MarkerSample::new(q.t, noisy(center), noisy(tip))
        })
        .collect();
    MarkerStream::new(samples, rate)
}
