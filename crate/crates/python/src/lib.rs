//! Python bindings (`import rcmtrack`). Angles are degrees and lengths
//! millimetres on this side of the boundary.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;

use rcm_track::acquisition::{self, Calibration as CoreCalibration, EncoderFrame, ZeroOffsets};
use rcm_track::evaluation::{self, Hand};
use rcm_track::kinematics::{self, AngleConvention, JointState as CoreJoint, TipPosition, TipTrajectory};
use rcm_track::metrics::{self, MetricConfig};
use rcm_track::nalgebra::Vector3;
use rcm_track::reference::{self, AlignedPair, Channel};
use rcm_track::simulator::{self, NoiseParams, ScanParams};
use rcm_track::Error;

/// `(t, c1, c2, ct, c3)`
type RawFrame = (f64, u32, u32, u32, u32);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_py_json<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn parse_hand(hand: &str) -> PyResult<Hand> {
    hand.parse().map_err(|e: Error| PyValueError::new_err(e.to_string()))
}

fn parse_convention(name: &str) -> PyResult<AngleConvention> {
    match name {
        "reconciled" => Ok(AngleConvention::Reconciled),
        "paper" => Ok(AngleConvention::Paper),
        other => Err(PyValueError::new_err(format!(
            "unknown convention {other:?} (expected \"reconciled\" or \"paper\")"
        ))),
    }
}

/// One device sample: gimbal angles and self-rotation in degrees, depth in mm.
#[pyclass(module = "rcmtrack", from_py_object)]
#[derive(Debug, Clone, Copy)]
pub struct JointState {
    inner: CoreJoint,
}

#[pymethods]
impl JointState {
    #[new]
    #[pyo3(signature = (phi1, phi2, phi3, d, t = 0.0))]
    fn new(phi1: f64, phi2: f64, phi3: f64, d: f64, t: f64) -> PyResult<Self> {
        let inner = CoreJoint::from_degrees(phi1, phi2, phi3, d, t);
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn phi1(&self) -> f64 {
        self.inner.phi1_deg()
    }

    #[getter]
    fn phi2(&self) -> f64 {
        self.inner.phi2_deg()
    }

    #[getter]
    fn phi3(&self) -> f64 {
        self.inner.phi3_deg()
    }

    #[getter]
    fn d(&self) -> f64 {
        self.inner.d
    }

    #[getter]
    fn t(&self) -> f64 {
        self.inner.t
    }

    /// Angle between the tool axis and the trocar axis, degrees.
    fn cone_angle(&self) -> f64 {
        self.inner.cone_angle().to_degrees()
    }

    /// Tip position `(x, y, z)` in the device base frame.
    fn tip(&self) -> (f64, f64, f64) {
        let p = kinematics::forward_kinematics(&self.inner);
        (p.x, p.y, p.z)
    }

    fn __repr__(&self) -> String {
        format!(
            "JointState(phi1={:.4}, phi2={:.4}, phi3={:.4}, d={:.3}, t={:.4})",
            self.phi1(),
            self.phi2(),
            self.phi3(),
            self.inner.d,
            self.inner.t
        )
    }
}

/// Encoder calibration: zero offsets `(c1, c2, ct, c3)`, roller radius and
/// the depth read at the translation zero.
#[pyclass(module = "rcmtrack", from_py_object)]
#[derive(Debug, Clone, Copy)]
pub struct Calibration {
    inner: CoreCalibration,
}

#[pymethods]
impl Calibration {
    #[new]
    #[pyo3(signature = (zero_offsets = (0, 0, 0, 0), roller_radius = None, depth_at_zero = 0.0))]
    fn new(zero_offsets: (u32, u32, u32, u32), roller_radius: Option<f64>, depth_at_zero: f64) -> PyResult<Self> {
        let (c1, c2, ct, c3) = zero_offsets;
        let mut inner = CoreCalibration {
            zero_offsets: ZeroOffsets { c1, c2, ct, c3 },
            depth_at_zero,
            ..CoreCalibration::default()
        };
        if let Some(r) = roller_radius {
            inner.roller_radius = r;
        }
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: CoreCalibration = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("calibration serializes")
    }

    #[getter]
    fn zero_offsets(&self) -> (u32, u32, u32, u32) {
        let z = &self.inner.zero_offsets;
        (z.c1, z.c2, z.ct, z.c3)
    }

    #[getter]
    fn roller_radius(&self) -> f64 {
        self.inner.roller_radius
    }

    #[getter]
    fn depth_at_zero(&self) -> f64 {
        self.inner.depth_at_zero
    }

    /// Tool travel per translation count, mm.
    fn translation_step(&self) -> f64 {
        self.inner.translation_step_mm()
    }

    fn __repr__(&self) -> String {
        format!(
            "Calibration(zero_offsets={:?}, roller_radius={}, depth_at_zero={})",
            self.zero_offsets(),
            self.inner.roller_radius,
            self.inner.depth_at_zero
        )
    }
}

fn core_joints(joints: &[JointState]) -> Vec<CoreJoint> {
    joints.iter().map(|j| j.inner).collect()
}

fn wrap_joints(joints: Vec<CoreJoint>) -> Vec<JointState> {
    joints.into_iter().map(|inner| JointState { inner }).collect()
}

fn metric_config(config_json: Option<&str>) -> PyResult<MetricConfig> {
    let cfg = match config_json {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => MetricConfig::default(),
    };
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// Tip position `(x, y, z)` from gimbal angles (degrees) and depth (mm).
#[pyfunction]
fn forward_kinematics(phi1: f64, phi2: f64, d: f64) -> (f64, f64, f64) {
    let p = kinematics::forward_kinematics(&CoreJoint::from_degrees(phi1, phi2, 0.0, d, 0.0));
    (p.x, p.y, p.z)
}

/// `(phi1, phi2, phi3)` in degrees from a tool vector; `phi3` is `None` on
/// the trocar axis.
#[pyfunction]
#[pyo3(signature = (x, y, z, convention = "reconciled"))]
fn joint_angles(x: f64, y: f64, z: f64, convention: &str) -> PyResult<(f64, f64, Option<f64>)> {
    let a = kinematics::joint_angles_from_vector(&Vector3::new(x, y, z), parse_convention(convention)?)
        .map_err(py_err)?;
    Ok((a.phi1.to_degrees(), a.phi2.to_degrees(), a.phi3.map(f64::to_degrees)))
}

/// Nearest-count encoding `(t, c1, c2, ct, c3)` of one state.
#[pyfunction]
fn encode(state: JointState, calibration: Calibration) -> PyResult<RawFrame> {
    let f = acquisition::encode_state(&state.inner, &calibration.inner).map_err(py_err)?;
    Ok((f.time(), f.c1, f.c2, f.ct, f.c3))
}

/// Decodes `(t, c1, c2, ct, c3)` frames in order, unwrapping the roller.
#[pyfunction]
fn decode(frames: Vec<RawFrame>, calibration: Calibration) -> PyResult<Vec<JointState>> {
    let frames = frames
        .into_iter()
        .map(|(t, c1, c2, ct, c3)| EncoderFrame::new(c1, c2, ct, c3, t))
        .collect::<Result<Vec<_>, _>>()
        .map_err(py_err)?;
    acquisition::decode_stream(&frames, &calibration.inner)
        .map(wrap_joints)
        .map_err(py_err)
}

/// Tip trajectory `[(t, x, y, z), ...]` of a joint sequence.
#[pyfunction]
fn reconstruct(joints: Vec<JointState>) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let traj = kinematics::reconstruct_trajectory(&core_joints(&joints)).map_err(py_err)?;
    Ok(traj.samples().iter().map(|p| (p.t, p.x, p.y, p.z)).collect())
}

fn trajectory_from(points: Vec<(f64, f64, f64, f64)>) -> PyResult<TipTrajectory> {
    TipTrajectory::new(points.into_iter().map(|(t, x, y, z)| TipPosition::new(x, y, z, t)).collect())
        .map_err(py_err)
}

/// The nine gesture metrics of a joint sequence, keyed as in report.json.
/// `config_json` overrides the metric configuration.
#[pyfunction]
#[pyo3(signature = (joints, config_json = None))]
fn compute_metrics<'py>(
    py: Python<'py>,
    joints: Vec<JointState>,
    config_json: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let traj = kinematics::reconstruct_trajectory(&core_joints(&joints)).map_err(py_err)?;
    let m = metrics::compute_metric_set(&traj, &metric_config(config_json)?).map_err(py_err)?;
    to_py_json(py, &m)
}

/// Same as `compute_metrics` for a tip trajectory `[(t, x, y, z), ...]`.
#[pyfunction]
#[pyo3(signature = (points, config_json = None))]
fn compute_metrics_from_positions<'py>(
    py: Python<'py>,
    points: Vec<(f64, f64, f64, f64)>,
    config_json: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let m = metrics::compute_metric_set(&trajectory_from(points)?, &metric_config(config_json)?).map_err(py_err)?;
    to_py_json(py, &m)
}

/// Metrics grouped into execution_rapidity, gesture_control and navigation_3d.
#[pyfunction]
#[pyo3(signature = (joints, config_json = None))]
fn subcategories<'py>(
    py: Python<'py>,
    joints: Vec<JointState>,
    config_json: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let traj = kinematics::reconstruct_trajectory(&core_joints(&joints)).map_err(py_err)?;
    let m = metrics::compute_metric_set(&traj, &metric_config(config_json)?).map_err(py_err)?;
    to_py_json(py, &evaluation::group_by_subcategory(&m))
}

/// Spiral scan of the workspace cone.
#[pyfunction]
#[pyo3(signature = (duration = 60.0, rate = 100.0, cone_half_angle = 13.0, d_min = 40.0, d_max = 100.0, hand = "left"))]
fn simulate_cone_scan(
    duration: f64,
    rate: f64,
    cone_half_angle: f64,
    d_min: f64,
    d_max: f64,
    hand: &str,
) -> PyResult<Vec<JointState>> {
    let params = ScanParams {
        cone_half_angle,
        d_range: [d_min, d_max],
        duration,
        rate,
        phi3_range: simulator::default_phi3_range(parse_hand(hand)?),
        ..ScanParams::default()
    };
    simulator::generate_cone_scan(&params).map(wrap_joints).map_err(py_err)
}

/// Six-phase peg-transfer-like session for one hand.
#[pyfunction]
#[pyo3(signature = (duration = 164.0, rate = 100.0, hand = "left", seed = 0))]
fn simulate_peg_transfer(duration: f64, rate: f64, hand: &str, seed: u64) -> PyResult<Vec<JointState>> {
    simulator::generate_peg_transfer_profile(duration, rate, parse_hand(hand)?, seed)
        .map(wrap_joints)
        .map_err(py_err)
}

/// Calibration whose translation zero sits at the first sample's depth.
#[pyfunction]
fn calibration_for(joints: Vec<JointState>) -> Calibration {
    Calibration {
        inner: simulator::calibration_for(&core_joints(&joints), &CoreCalibration::default()),
    }
}

/// Adds seeded Gaussian noise (degrees, mm) and quantizes to encoder frames
/// `(t, c1, c2, ct, c3)`.
#[pyfunction]
#[pyo3(signature = (joints, calibration, angle_noise = 0.0, translation_noise = 0.0, seed = 0))]
fn corrupt_and_encode(
    joints: Vec<JointState>,
    calibration: Calibration,
    angle_noise: f64,
    translation_noise: f64,
    seed: u64,
) -> PyResult<Vec<RawFrame>> {
    let noise = NoiseParams {
        angle_noise_sd: angle_noise,
        translation_noise_sd: translation_noise,
        seed,
    };
    let encoded = simulator::corrupt_and_encode(&core_joints(&joints), &calibration.inner, &noise).map_err(py_err)?;
    Ok(encoded
        .frames
        .iter()
        .map(|f| (f.time(), f.c1, f.c2, f.ct, f.c3))
        .collect())
}

/// Mean squared difference of two equally long, already aligned series.
#[pyfunction]
fn channel_mse(device: Vec<f64>, reference: Vec<f64>) -> PyResult<f64> {
    let pair = AlignedPair {
        channel: Channel::Phi1,
        times: (0..device.len()).map(|i| i as f64).collect(),
        device,
        reference,
    };
    reference::channel_mse(&pair).map_err(py_err)
}

/// Per-channel MSE (phi1, phi2 in deg^2, translation in mm^2) after
/// resampling both joint sequences onto a common grid.
#[pyfunction]
#[pyo3(signature = (device, reference, grid_rate = 100.0))]
fn compare_joints<'py>(
    py: Python<'py>,
    device: Vec<JointState>,
    reference: Vec<JointState>,
    grid_rate: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let pairs = reference::resample_align(&core_joints(&device), &core_joints(&reference), grid_rate).map_err(py_err)?;
    let mse = pairs
        .iter()
        .map(|p| Ok((p.channel.name(), reference::channel_mse(p).map_err(py_err)?)))
        .collect::<PyResult<std::collections::BTreeMap<_, _>>>()?;
    to_py_json(py, &mse)
}

/// Convex hull, fitted ellipse and cone check of the (phi1, phi2) samples.
#[pyfunction]
#[pyo3(signature = (joints, cone_half_angle = 13.0))]
fn workspace_boundary<'py>(
    py: Python<'py>,
    joints: Vec<JointState>,
    cone_half_angle: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let b = evaluation::workspace_boundary(&core_joints(&joints), cone_half_angle).map_err(py_err)?;
    to_py_json(py, &b)
}

/// Encoder decoding, kinematics and gesture metrics for an RCM instrument tracker.
#[pymodule]
mod rcmtrack {
    #[pymodule_export]
    use super::{
        calibration_for, channel_mse, compare_joints, compute_metrics, compute_metrics_from_positions,
        corrupt_and_encode, decode, encode, forward_kinematics, joint_angles, reconstruct, simulate_cone_scan,
        simulate_peg_transfer, subcategories, workspace_boundary, Calibration, JointState,
    };
}
