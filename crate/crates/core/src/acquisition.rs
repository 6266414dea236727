//! Encoder chain: raw magnetic-encoder counts to calibrated joint states.
//!
//! Channel layout on the wire:
//!
//! | channel | joint  | bits | step                      |
//! |---------|--------|------|---------------------------|
//! | `c1`    | phi1   | 10   | 360/1024 deg              |
//! | `c2`    | phi2   | 10   | 360/1024 deg              |
//! | `ct`    | d      | 9    | roller_radius * 2pi/512 mm |
//! | `c3`    | phi3   | 12   | 360/4096 deg              |
//!
//! Angular channels are absolute within one turn and decode to a signed angle
//! around the zero offset. The translation channel measures a roller that
//! turns many times over the insertion stroke, so its counts are unwrapped
//! across frames by [`StreamDecoder`].

use serde::{Deserialize, Serialize};

use crate::error::{EncoderChannel, Error, Result};
use crate::kinematics::{check_increasing, JointState, DEFAULT_CONE_HALF_ANGLE_DEG};

/// Roller radius giving exactly 0.055 mm of tool travel per 9-bit count.
pub const DEFAULT_ROLLER_RADIUS_MM: f64 = 0.055 * 512.0 / std::f64::consts::TAU;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100.0;

/// Static windows whose per-channel spread exceeds this many counts are rejected.
pub const STATIC_SPREAD_LIMIT: u32 = 2;
pub const STATIC_MIN_FRAMES: usize = 10;

impl EncoderChannel {
    pub const ALL: [EncoderChannel; 4] = [
        EncoderChannel::C1,
        EncoderChannel::C2,
        EncoderChannel::Ct,
        EncoderChannel::C3,
    ];

    pub fn bits(self) -> u32 {
        match self {
            EncoderChannel::C1 | EncoderChannel::C2 => 10,
            EncoderChannel::Ct => 9,
            EncoderChannel::C3 => 12,
        }
    }

    /// Number of distinct counts per revolution.
    pub fn range(self) -> u32 {
        1 << self.bits()
    }

    pub fn max_count(self) -> u32 {
        self.range() - 1
    }

    /// Angular resolution of one count, degrees.
    pub fn step_deg(self) -> f64 {
        360.0 / self.range() as f64
    }
}

/// Raw counts for the four channels at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderFrame {
    pub c1: u32,
    pub c2: u32,
    pub ct: u32,
    pub c3: u32,
    /// Seconds.
    pub t: f64,
}

impl EncoderFrame {
    pub fn new(c1: u32, c2: u32, ct: u32, c3: u32, t: f64) -> Result<Self> {
        let f = Self {
            c1,
            c2,
            ct,
            c3,
            t,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn count(&self, channel: EncoderChannel) -> u32 {
        match channel {
            EncoderChannel::C1 => self.c1,
            EncoderChannel::C2 => self.c2,
            EncoderChannel::Ct => self.ct,
            EncoderChannel::C3 => self.c3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for ch in EncoderChannel::ALL {
            let count = self.count(ch);
            if count > ch.max_count() {
                return Err(Error::Decode {
                    channel: ch,
                    count: count as i64,
                    max: ch.max_count(),
                });
            }
        }
        if !self.t.is_finite() || self.t < 0.0 {
            return Err(Error::invalid(format!("invalid frame timestamp {}", self.t)));
        }
        Ok(())
    }
}

/// Per-channel counts at mechanical zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroOffsets {
    pub c1: u32,
    pub c2: u32,
    pub ct: u32,
    pub c3: u32,
}

impl Default for ZeroOffsets {
    fn default() -> Self {
        Self {
            c1: 512,
            c2: 512,
            ct: 0,
            c3: 2048,
        }
    }
}

impl ZeroOffsets {
    pub fn get(&self, channel: EncoderChannel) -> u32 {
        match channel {
            EncoderChannel::C1 => self.c1,
            EncoderChannel::C2 => self.c2,
            EncoderChannel::Ct => self.ct,
            EncoderChannel::C3 => self.c3,
        }
    }

    fn set(&mut self, channel: EncoderChannel, value: u32) {
        match channel {
            EncoderChannel::C1 => self.c1 = value,
            EncoderChannel::C2 => self.c2 = value,
            EncoderChannel::Ct => self.ct = value,
            EncoderChannel::C3 => self.c3 = value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Calibration {
    pub zero_offsets: ZeroOffsets,
    /// Roller radius converting roller rotation into tool translation, mm.
    pub roller_radius: f64,
    /// Nominal device sample rate, Hz.
    pub sample_rate: f64,
    /// Workspace cone half-angle, degrees.
    pub cone_half_angle: f64,
    /// Insertion depth (mm) when the translation channel reads its zero offset
    /// with no accumulated turns.
    pub depth_at_zero: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            zero_offsets: ZeroOffsets::default(),
            roller_radius: DEFAULT_ROLLER_RADIUS_MM,
            sample_rate: DEFAULT_SAMPLE_RATE_HZ,
            cone_half_angle: DEFAULT_CONE_HALF_ANGLE_DEG,
            depth_at_zero: 0.0,
        }
    }
}

impl Calibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.roller_radius.is_finite() && self.roller_radius > 0.0) {
            return Err(Error::invalid(format!("roller_radius must be > 0, got {}", self.roller_radius)));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::invalid(format!("sample_rate must be > 0, got {}", self.sample_rate)));
        }
        if !(self.cone_half_angle.is_finite() && self.cone_half_angle > 0.0) {
            return Err(Error::invalid("cone_half_angle must be > 0"));
        }
        if !self.depth_at_zero.is_finite() {
            return Err(Error::invalid("depth_at_zero must be finite"));
        }
        for ch in EncoderChannel::ALL {
            if self.zero_offsets.get(ch) > ch.max_count() {
                return Err(Error::Decode {
                    channel: ch,
                    count: self.zero_offsets.get(ch) as i64,
                    max: ch.max_count(),
                });
            }
        }
        Ok(())
    }

    /// Tool translation per roller count, mm.
    pub fn translation_step_mm(&self) -> f64 {
        self.roller_radius * std::f64::consts::TAU / EncoderChannel::Ct.range() as f64
    }

    /// Largest decode error per channel for a correctly encoded state:
    /// half a count step (degrees for angles, mm for translation).
    pub fn half_steps(&self) -> QuantizationBounds {
        QuantizationBounds {
            phi1_deg: EncoderChannel::C1.step_deg() / 2.0,
            phi2_deg: EncoderChannel::C2.step_deg() / 2.0,
            phi3_deg: EncoderChannel::C3.step_deg() / 2.0,
            d_mm: self.translation_step_mm() / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationBounds {
    pub phi1_deg: f64,
    pub phi2_deg: f64,
    pub phi3_deg: f64,
    pub d_mm: f64,
}

/// Maps a count difference into the signed window `[-range/2, range/2)`.
fn wrap_signed(delta: i64, range: u32) -> i64 {
    let r = range as i64;
    (delta + r / 2).rem_euclid(r) - r / 2
}

fn angle_from_count(count: u32, zero: u32, channel: EncoderChannel) -> f64 {
    let delta = wrap_signed(count as i64 - zero as i64, channel.range());
    (delta as f64 * channel.step_deg()).to_radians()
}

/// Decodes a stream, carrying the roller unwrap accumulator between frames.
/// One decoder per stream; decoding is a pure function of the frames seen so far.
#[derive(Debug, Clone)]
pub struct StreamDecoder {
    cal: Calibration,
    previous_ct: Option<u32>,
    accumulated: i64,
}

impl StreamDecoder {
    pub fn new(cal: Calibration) -> Result<Self> {
        cal.validate()?;
        Ok(Self {
            cal,
            previous_ct: None,
            accumulated: 0,
        })
    }

    /// Net translation counts accumulated since the zero offset.
    pub fn accumulated_counts(&self) -> i64 {
        self.accumulated
    }

    pub fn decode(&mut self, f: &EncoderFrame) -> Result<JointState> {
        f.validate()?;
        let z = &self.cal.zero_offsets;
        let range = EncoderChannel::Ct.range();
        self.accumulated = match self.previous_ct {
            None => wrap_signed(f.ct as i64 - z.ct as i64, range),
            Some(prev) => {
                let mut delta = f.ct as i64 - prev as i64;
                let half = range as i64 / 2;
                if delta > half {
                    delta -= range as i64;
                } else if delta < -half {
                    delta += range as i64;
                }
                self.accumulated + delta
            }
        };
        self.previous_ct = Some(f.ct);
        Ok(JointState {
            phi1: angle_from_count(f.c1, z.c1, EncoderChannel::C1),
            phi2: angle_from_count(f.c2, z.c2, EncoderChannel::C2),
            phi3: angle_from_count(f.c3, z.c3, EncoderChannel::C3),
            d: self.cal.depth_at_zero + self.accumulated as f64 * self.cal.translation_step_mm(),
            t: f.time(),
        })
    }
}

/// Decodes a single frame with a fresh accumulator (no prior turns).
pub fn decode_frame(f: &EncoderFrame, cal: &Calibration) -> Result<JointState> {
    StreamDecoder::new(*cal)?.decode(f)
}

/// Decodes a whole stream in order.
pub fn decode_stream(frames: &[EncoderFrame], cal: &Calibration) -> Result<Vec<JointState>> {
    check_increasing(frames.iter().map(EncoderFrame::time))?;
    let mut decoder = StreamDecoder::new(*cal)?;
    frames.iter().map(|f| decoder.decode(f)).collect()
}

fn encode_angle(value_rad: f64, zero: u32, channel: EncoderChannel) -> Result<u32> {
    let value_deg = value_rad.to_degrees();
    let steps = (value_deg / channel.step_deg()).round();
    let half = (channel.range() / 2) as f64;
    if !steps.is_finite() || steps < -half || steps >= half {
        return Err(Error::Saturation {
            channel,
            value: value_deg,
        });
    }
    Ok((zero as i64 + steps as i64).rem_euclid(channel.range() as i64) as u32)
}

/// Nearest-count quantization of a joint state; inverse of [`decode_frame`]
/// up to half a count per channel. The translation channel is encoded modulo
/// one roller turn, so multi-turn depths need a [`StreamDecoder`] that has
/// followed the stream from its zero to decode back.
pub fn encode_state(q: &JointState, cal: &Calibration) -> Result<EncoderFrame> {
    cal.validate()?;
    if !q.is_finite() || q.t < 0.0 {
        return Err(Error::invalid(format!("cannot encode {q:?}")));
    }
    let z = &cal.zero_offsets;
    let steps = ((q.d - cal.depth_at_zero) / cal.translation_step_mm()).round();
    if q.d < 0.0 || !steps.is_finite() || steps.abs() > i64::MAX as f64 / 2.0 {
        return Err(Error::Saturation {
            channel: EncoderChannel::Ct,
            value: q.d,
        });
    }
    let ct = (z.ct as i64 + steps as i64).rem_euclid(EncoderChannel::Ct.range() as i64) as u32;
    Ok(EncoderFrame {
        c1: encode_angle(q.phi1, z.c1, EncoderChannel::C1)?,
        c2: encode_angle(q.phi2, z.c2, EncoderChannel::C2)?,
        ct,
        c3: encode_angle(q.phi3, z.c3, EncoderChannel::C3)?,
        t: q.t,
    })
}

/// Per-channel zero offsets from a window of frames recorded at rest.
///
/// Counts are averaged relative to the first frame (wrap-aware) and the
/// absolute mean is rounded half-to-even.
pub fn static_zero(frames: &[EncoderFrame]) -> Result<ZeroOffsets> {
    if frames.len() < STATIC_MIN_FRAMES {
        return Err(Error::InsufficientData {
            needed: STATIC_MIN_FRAMES,
            got: frames.len(),
        });
    }
    for f in frames {
        f.validate()?;
    }
    let mut offsets = ZeroOffsets::default();
    for ch in EncoderChannel::ALL {
        let base = frames[0].count(ch) as i64;
        let rel: Vec<i64> = frames
            .iter()
            .map(|f| wrap_signed(f.count(ch) as i64 - base, ch.range()))
            .collect();
        let lo = *rel.iter().min().expect("non-empty");
        let hi = *rel.iter().max().expect("non-empty");
        let spread = (hi - lo) as u32;
        if spread > STATIC_SPREAD_LIMIT {
            return Err(Error::NotStatic {
                channel: ch,
                spread,
                limit: STATIC_SPREAD_LIMIT,
            });
        }
        let mean = rel.iter().sum::<i64>() as f64 / rel.len() as f64;
        let offset = ((base as f64 + mean).round_ties_even() as i64).rem_euclid(ch.range() as i64);
        offsets.set(ch, offset as u32);
    }
    Ok(offsets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn frame(c1: u32, c2: u32, ct: u32, c3: u32, t: f64) -> EncoderFrame {
        EncoderFrame::new(c1, c2, ct, c3, t).unwrap()
    }

    #[test]
    fn one_ten_bit_step_is_0_3516_degrees() {
        let cal = Calibration::default();
        let q = decode_frame(&frame(513, 512, 0, 2048, 0.0), &cal).unwrap();
        assert_abs_diff_eq!(q.phi1_deg(), 0.3515625, epsilon = 1e-12);
        assert_abs_diff_eq!(q.phi1_deg(), 0.3516, epsilon = 1e-4);
    }

    #[test]
    fn one_roller_step_is_0_055_mm() {
        let cal = Calibration {
            roller_radius: 4.482,
            ..Calibration::default()
        };
        let q = decode_frame(&frame(512, 512, 1, 2048, 0.0), &cal).unwrap();
        assert_abs_diff_eq!(q.d, 0.055, epsilon = 1e-5);
        assert_abs_diff_eq!(Calibration::default().translation_step_mm(), 0.055, epsilon = 1e-15);
    }

    #[test]
    fn zero_counts_decode_to_zero_state() {
        let cal = Calibration::default();
        let z = cal.zero_offsets;
        let q = decode_frame(&frame(z.c1, z.c2, z.ct, z.c3, 0.0), &cal).unwrap();
        assert_eq!((q.phi1, q.phi2, q.phi3, q.d), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn out_of_range_count_names_channel() {
        let err = EncoderFrame::new(512, 512, 512, 2048, 0.0).unwrap_err();
        assert!(matches!(
            err,
            Error::Decode {
                channel: EncoderChannel::Ct,
                count: 512,
                max: 511
            }
        ));
        let bad = EncoderFrame {
            c1: 1024,
            c2: 0,
            ct: 0,
            c3: 0,
            t: 0.0,
        };
        assert!(matches!(
            decode_frame(&bad, &Calibration::default()),
            Err(Error::Decode {
                channel: EncoderChannel::C1,
                ..
            })
        ));
    }

    #[test]
    fn exact_step_multiples_round_trip() {
        let cal = Calibration::default();
        let step = EncoderChannel::C1.step_deg();
        let q = JointState::from_degrees(3.0 * step, -7.0 * step, 11.0 * EncoderChannel::C3.step_deg(), 0.0, 0.5);
        let back = decode_frame(&encode_state(&q, &cal).unwrap(), &cal).unwrap();
        assert_abs_diff_eq!(back.phi1, q.phi1, epsilon = 1e-12);
        assert_abs_diff_eq!(back.phi2, q.phi2, epsilon = 1e-12);
        assert_abs_diff_eq!(back.phi3, q.phi3, epsilon = 1e-12);
    }

    #[test]
    fn sub_half_step_rounds_to_zero_count() {
        let cal = Calibration::default();
        let f = encode_state(&JointState::from_degrees(0.17, 0.0, 0.0, 0.0, 0.0), &cal).unwrap();
        // 0.17 / 0.3515625 = 0.4836 -> nearest integer 0
        assert_eq!(f.c1, cal.zero_offsets.c1);
    }

    #[test]
    fn mid_step_depth_within_half_step() {
        let cal = Calibration::default();
        let step = cal.translation_step_mm();
        let d = 7.0 * step + 0.49 * step;
        let back = decode_frame(&encode_state(&JointState::new(0.0, 0.0, 0.0, d, 0.0), &cal).unwrap(), &cal).unwrap();
        assert!((back.d - d).abs() <= 0.0275);
    }

    #[test]
    fn angle_outside_window_saturates() {
        let cal = Calibration::default();
        let err = encode_state(&JointState::from_degrees(200.0, 0.0, 0.0, 0.0, 0.0), &cal).unwrap_err();
        assert!(matches!(
            err,
            Error::Saturation {
                channel: EncoderChannel::C1,
                ..
            }
        ));
    }

    #[test]
    fn unwraps_roller_across_turns() {
        let cal = Calibration::default();
        let step = cal.translation_step_mm();
        let turn = 2.0 * std::f64::consts::PI * cal.roller_radius;
        // 20 turns forward in 25-count increments
        let total_counts = 20 * 512;
        let frames: Vec<EncoderFrame> = (0..=total_counts / 25 + 1)
            .map(|k| {
                let n = (k * 25).min(total_counts) as u32;
                frame(512, 512, n % 512, 2048, k as f64 * 0.01)
            })
            .collect();
        let joints = decode_stream(&frames, &cal).unwrap();
        let last = joints.last().unwrap();
        assert_abs_diff_eq!(last.d, 20.0 * turn, epsilon = step);
        // and back down
        let back: Vec<EncoderFrame> = (0..=20 * 512 / 100 + 1)
            .map(|k| {
                let n = (20 * 512 - (k * 100).min(20 * 512)) as u32;
                frame(512, 512, n % 512, 2048, k as f64 * 0.01)
            })
            .collect();
        let mut dec = StreamDecoder::new(cal).unwrap();
        let _ = dec.decode(&frame(512, 512, 0, 2048, 0.0)).unwrap();
        let mut dec2 = StreamDecoder::new(cal).unwrap();
        for f in &frames {
            dec2.decode(f).unwrap();
        }
        for f in &back {
            dec2.decode(f).unwrap();
        }
        assert_eq!(dec2.accumulated_counts(), 0);
    }

    #[test]
    fn replay_is_deterministic() {
        let cal = Calibration::default();
        let frames: Vec<EncoderFrame> = (0..300u32)
            .map(|k| frame((k * 7) % 1024, (k * 3) % 1024, (k * 40) % 512, (k * 13) % 4096, k as f64 * 0.01))
            .collect();
        assert_eq!(decode_stream(&frames, &cal).unwrap(), decode_stream(&frames, &cal).unwrap());
    }

    #[test]
    fn static_zero_identical_frames() {
        let frames: Vec<_> = (0..10).map(|k| frame(512, 512, 256, 2048, k as f64)).collect();
        let z = static_zero(&frames).unwrap();
        assert_eq!(z, ZeroOffsets { c1: 512, c2: 512, ct: 256, c3: 2048 });
    }

    #[test]
    fn static_zero_rounds_half_to_even() {
        // mean 512.5 -> 512 (even); 513.5 -> 514
        let frames: Vec<_> = (0..10)
            .map(|k| frame(512 + k % 2, 513 + k % 2, 100, 2048, k as f64))
            .collect();
        let z = static_zero(&frames).unwrap();
        assert_eq!(z.c1, 512);
        assert_eq!(z.c2, 514);
        let frames: Vec<_> = (0..11).map(|k| frame(512 + k % 2, 512, 100, 2048, k as f64)).collect();
        // mean 512 + 5/11 -> 512
        assert_eq!(static_zero(&frames).unwrap().c1, 512);
    }

    #[test]
    fn static_zero_wraps_around_channel_boundary() {
        let frames: Vec<_> = (0..10).map(|k| frame(512, 512, if k % 2 == 0 { 511 } else { 0 }, 2048, k as f64)).collect();
        // mean of {-1, 0} relative offsets is 511.5 -> half-even 512 -> wraps to 0
        assert_eq!(static_zero(&frames).unwrap().ct, 0);
    }

    #[test]
    fn static_zero_rejects_motion() {
        let frames: Vec<_> = (0..10).map(|k| frame(512, 510 + (k % 6), 0, 2048, k as f64)).collect();
        assert!(matches!(
            static_zero(&frames),
            Err(Error::NotStatic {
                channel: EncoderChannel::C2,
                spread: 5,
                ..
            })
        ));
    }

    #[test]
    fn static_zero_needs_ten_frames() {
        let frames: Vec<_> = (0..9).map(|k| frame(512, 512, 0, 2048, k as f64)).collect();
        assert!(matches!(
            static_zero(&frames),
            Err(Error::InsufficientData { needed: 10, got: 9 })
        ));
    }

    #[test]
    fn calibration_validation() {
        let bad = Calibration {
            roller_radius: 0.0,
            ..Calibration::default()
        };
        assert!(bad.validate().is_err());
        assert!(StreamDecoder::new(bad).is_err());
    }
}
