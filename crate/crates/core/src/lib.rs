//! Toolkit for a four-degree-of-freedom remote-center-of-motion (RCM)
//! instrument tracker used in laparoscopic box trainers.
//!
//! The device measures two gimbal rotations (`phi1` about X, `phi2` about Y),
//! the tool self-rotation (`phi3` about the tool axis) and the insertion depth
//! `d` through the trocar point. This crate covers the whole data path:
//!
//! - [`kinematics`]: transform algebra, forward kinematics and angle
//!   extraction from a tool vector.
//! - [`acquisition`]: encoder counts to joint states (quantization, roller
//!   unwrapping, static zeroing).
//! - [`reference`]: comparison against a marker-based motion-capture stream
//!   (frame alignment, resampling, per-channel MSE).
//! - [`metrics`]: the nine gesture metrics (time, idle time, path length,
//!   depth workspace, speed, acceleration, jerk, fluidity, volume).
//! - [`evaluation`]: subcategory grouping, bimanual reports and workspace
//!   boundary summaries.
//! - [`simulator`]: synthetic scans and peg-transfer-like profiles for testing
//!   without hardware.
//! - [`io`]: CSV and plain-text file formats.
//!
//! Angles are stored in radians internally; every file format, report and
//! binding speaks degrees.
//!
//! ```
//! use rcm_track::kinematics::{forward_kinematics, JointState};
//!
//! let q = JointState::from_degrees(0.0, 0.0, 0.0, 100.0, 0.0);
//! let tip = forward_kinematics(&q);
//! assert!((tip.z - 100.0).abs() < 1e-12);
//! ```

pub mod acquisition;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod kinematics;
pub mod metrics;
pub mod reference;
pub mod simulator;

pub use error::{EncoderChannel, Error, Result};

/// Re-exported so callers can build transforms without pinning their own version.
pub use nalgebra;
