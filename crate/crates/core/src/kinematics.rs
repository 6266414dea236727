//! Transform algebra and joint-space / tip-space mappings for the 3R1T
//! remote-center-of-motion architecture.
//!
//! The chain is `rot_x(phi1) * rot_y(phi2) * rot_z(phi3) * trans_z(d)`, with
//! the remote center of motion at the origin. The tip therefore always lies
//! at distance `d` from the origin and `phi3` never moves it.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rotations are re-orthonormalized after this many successive compositions.
pub const REORTHONORMALIZE_EVERY: usize = 50;

/// Default workspace cone half-angle in degrees (26 degree apex).
pub const DEFAULT_CONE_HALF_ANGLE_DEG: f64 = 13.0;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// The four joint variables at one instant. Angles are in radians, `d` in
/// millimetres, `t` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
    pub d: f64,
    pub t: f64,
}

impl JointState {
    pub fn new(phi1: f64, phi2: f64, phi3: f64, d: f64, t: f64) -> Self {
        Self {
            phi1,
            phi2,
            phi3,
            d,
            t,
        }
    }

    pub fn from_degrees(phi1: f64, phi2: f64, phi3: f64, d: f64, t: f64) -> Self {
        Self::new(phi1.to_radians(), phi2.to_radians(), phi3.to_radians(), d, t)
    }

    pub fn phi1_deg(&self) -> f64 {
        self.phi1.to_degrees()
    }

    pub fn phi2_deg(&self) -> f64 {
        self.phi2.to_degrees()
    }

    pub fn phi3_deg(&self) -> f64 {
        self.phi3.to_degrees()
    }

    /// Angle between the tool axis and the cone axis, approximated as
    /// `sqrt(phi1^2 + phi2^2)` (radians).
    pub fn cone_angle(&self) -> f64 {
        self.phi1.hypot(self.phi2)
    }

    pub fn is_finite(&self) -> bool {
        [self.phi1, self.phi2, self.phi3, self.d, self.t]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Checks the structural invariants: finite values, `d >= 0`, `t >= 0`.
    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::invalid(format!("non-finite joint state {self:?}")));
        }
        if self.d < 0.0 {
            return Err(Error::invalid(format!("negative insertion depth {}", self.d)));
        }
        if self.t < 0.0 {
            return Err(Error::invalid(format!("negative timestamp {}", self.t)));
        }
        Ok(())
    }

    /// True when the state lies inside a cone of the given half-angle (degrees).
    pub fn within_cone(&self, half_angle_deg: f64) -> bool {
        self.cone_angle() <= half_angle_deg.to_radians()
    }
}

/// Rigid transform: orthonormal rotation plus translation (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, rejecting rotations that are not orthonormal with
    /// determinant +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite transform entry"));
        }
        if !is_rotation(&rotation, ORTHONORMAL_TOL) {
            return Err(Error::invalid("rotation is not orthonormal with det +1"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn then(&self, other: &Transform) -> Transform {
        Transform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Transform {
        let rt = self.rotation.transpose();
        Transform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn is_rigid(&self, tol: f64) -> bool {
        is_rotation(&self.rotation, tol)
    }

    /// Projects the rotation back onto SO(3) (nearest rotation in the
    /// Frobenius sense, via SVD).
    pub fn reorthonormalized(&self) -> Transform {
        Transform {
            rotation: nearest_rotation(&self.rotation),
            translation: self.translation,
        }
    }
}

impl std::ops::Mul for Transform {
    type Output = Transform;

    fn mul(self, rhs: Transform) -> Transform {
        self.then(&rhs)
    }
}

pub(crate) fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    let gram = r.transpose() * r - Matrix3::identity();
    gram.iter().all(|v| v.abs() <= tol) && (r.determinant() - 1.0).abs() <= tol
}

pub(crate) fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return *m;
    };
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// The four elementary links of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementaryKind {
    RotX,
    RotY,
    RotZ,
    TransZ,
}

/// Elementary link transform. Rotations take radians, `TransZ` millimetres.
pub fn elementary_transform(kind: ElementaryKind, value: f64) -> Result<Transform> {
    if !value.is_finite() {
        return Err(Error::invalid(format!("non-finite {kind:?} value")));
    }
    let (s, c) = value.sin_cos();
    let t = match kind {
        ElementaryKind::RotX => Transform {
            rotation: Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
            translation: Vector3::zeros(),
        },
        ElementaryKind::RotY => Transform {
            rotation: Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            translation: Vector3::zeros(),
        },
        ElementaryKind::RotZ => Transform {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation: Vector3::zeros(),
        },
        ElementaryKind::TransZ => Transform::from_translation(Vector3::new(0.0, 0.0, value)),
    };
    Ok(t)
}

/// Product of the chain in listed order, re-orthonormalizing the running
/// rotation every [`REORTHONORMALIZE_EVERY`] compositions.
pub fn compose(chain: &[Transform]) -> Result<Transform> {
    let (first, rest) = chain
        .split_first()
        .ok_or_else(|| Error::invalid("cannot compose an empty chain"))?;
    let mut acc = *first;
    for (i, t) in rest.iter().enumerate() {
        acc = acc.then(t);
        if (i + 1) % REORTHONORMALIZE_EVERY == 0 {
            acc = acc.reorthonormalized();
        }
    }
    Ok(acc)
}

/// The four link transforms `[0T1, 1T2, 2T3, 3T4]` for a joint state.
pub fn joint_chain(q: &JointState) -> Result<[Transform; 4]> {
    Ok([
        elementary_transform(ElementaryKind::RotX, q.phi1)?,
        elementary_transform(ElementaryKind::RotY, q.phi2)?,
        elementary_transform(ElementaryKind::RotZ, q.phi3)?,
        elementary_transform(ElementaryKind::TransZ, q.d)?,
    ])
}

/// Tip pose evaluated through the full transform chain.
pub fn chain_transform(q: &JointState) -> Result<Transform> {
    compose(&joint_chain(q)?)
}

/// Tool-tip position in the base frame (mm) with its timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TipPosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub t: f64,
}

impl TipPosition {
    pub fn new(x: f64, y: f64, z: f64, t: f64) -> Self {
        Self { x, y, z, t }
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>, t: f64) -> Self {
        Self::new(v.x, v.y, v.z, t)
    }

    pub fn norm(&self) -> f64 {
        self.vector().norm()
    }
}

/// Closed-form forward kinematics:
/// `x = d sin phi2`, `y = -d sin phi1 cos phi2`, `z = d cos phi1 cos phi2`.
pub fn forward_kinematics(q: &JointState) -> TipPosition {
    let (s1, c1) = q.phi1.sin_cos();
    let (s2, c2) = q.phi2.sin_cos();
    TipPosition {
        x: q.d * s2,
        y: -q.d * s1 * c2,
        z: q.d * c1 * c2,
        t: q.t,
    }
}

/// Forward kinematics through [`chain_transform`]; used to cross-check the
/// closed form.
pub fn forward_kinematics_chain(q: &JointState) -> Result<TipPosition> {
    let p = chain_transform(q)?.apply_point(&Vector3::zeros());
    Ok(TipPosition::from_vector(&p, q.t))
}

/// Sign convention used when extracting gimbal angles from a tool vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleConvention {
    /// `phi1 = atan2(vy, vz)`, `phi2 = atan2(vx, vz)` verbatim. Does not
    /// invert [`forward_kinematics`] (opposite `phi1` sign, and `phi2` is
    /// only exact when `phi1 = 0`).
    Paper,
    /// Exact inverse of [`forward_kinematics`]:
    /// `phi1 = atan2(-vy, vz)`, `phi2 = atan2(vx, sqrt(vy^2 + vz^2))`.
    #[default]
    Reconciled,
}

impl std::str::FromStr for AngleConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(AngleConvention::Paper),
            "reconciled" => Ok(AngleConvention::Reconciled),
            other => Err(Error::invalid(format!("unknown angle convention `{other}`"))),
        }
    }
}

/// Angles recovered from a tool vector (radians). `phi3` is `None` when the
/// vector lies on the Z axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAngles {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: Option<f64>,
}

pub fn joint_angles_from_vector(v: &Vector3<f64>, convention: AngleConvention) -> Result<JointAngles> {
    if !v.iter().all(|c| c.is_finite()) {
        return Err(Error::invalid("non-finite tool vector"));
    }
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::Degenerate("zero-length tool vector".into()));
    }
    let (phi1, phi2) = match convention {
        AngleConvention::Paper => (v.y.atan2(v.z), v.x.atan2(v.z)),
        AngleConvention::Reconciled => ((-v.y).atan2(v.z), v.x.atan2(v.y.hypot(v.z))),
    };
    let phi3 = if v.x.hypot(v.y) <= 1e-12 * norm {
        None
    } else {
        Some(v.y.atan2(v.x))
    };
    Ok(JointAngles { phi1, phi2, phi3 })
}

/// Time-ordered tip positions with strictly increasing timestamps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TipTrajectory {
    samples: Vec<TipPosition>,
}

impl TipTrajectory {
    pub fn new(samples: Vec<TipPosition>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if ![s.x, s.y, s.z, s.t].iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(format!("non-finite tip sample at index {i}")));
            }
        }
        check_increasing(samples.iter().map(|s| s.t))?;
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[TipPosition] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.samples.iter().map(TipPosition::vector).collect()
    }

    pub fn into_samples(self) -> Vec<TipPosition> {
        self.samples
    }
}

pub(crate) fn check_increasing(times: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut prev: Option<f64> = None;
    for (index, t) in times.into_iter().enumerate() {
        if let Some(p) = prev {
            if t <= p {
                return Err(Error::Ordering {
                    index,
                    previous: p,
                    current: t,
                });
            }
        }
        prev = Some(t);
    }
    Ok(())
}

/// Elementwise forward kinematics over a joint sequence.
pub fn reconstruct_trajectory(joints: &[JointState]) -> Result<TipTrajectory> {
    check_increasing(joints.iter().map(|q| q.t))?;
    for q in joints {
        if !q.is_finite() {
            return Err(Error::invalid(format!("non-finite joint state at t={}", q.t)));
        }
    }
    TipTrajectory::new(joints.iter().map(forward_kinematics).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn close(a: &Vector3<f64>, b: &Vector3<f64>, tol: f64) -> bool {
        (a - b).iter().all(|d| d.abs() <= tol)
    }

    #[test]
    fn rot_x_zero_is_identity() {
        let t = elementary_transform(ElementaryKind::RotX, 0.0).unwrap();
        assert_eq!(t, Transform::identity());
    }

    #[test]
    fn trans_z_is_pure_translation() {
        let t = elementary_transform(ElementaryKind::TransZ, 100.0).unwrap();
        assert_eq!(t.rotation, Matrix3::identity());
        assert_eq!(t.translation, Vector3::new(0.0, 0.0, 100.0));
    }

    #[test]
    fn rot_z_quarter_turn_permutes_axes() {
        let t = elementary_transform(ElementaryKind::RotZ, 90f64.to_radians()).unwrap();
        let p = t.apply_point(&Vector3::x());
        assert!(close(&p, &Vector3::y(), 1e-15));
    }

    #[test]
    fn non_finite_elementary_value_rejected() {
        assert!(matches!(
            elementary_transform(ElementaryKind::RotY, f64::NAN),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn compose_inverse_pair_is_identity() {
        let t = compose(&[
            elementary_transform(ElementaryKind::RotY, 0.3).unwrap(),
            elementary_transform(ElementaryKind::TransZ, 12.0).unwrap(),
        ])
        .unwrap();
        let id = compose(&[t, t.inverse()]).unwrap();
        assert!((id.rotation - Matrix3::identity()).abs().max() < 1e-15);
        assert!(id.translation.norm() < 1e-14);
    }

    #[test]
    fn compose_identity_is_neutral() {
        let t = elementary_transform(ElementaryKind::RotX, 0.7).unwrap();
        assert_eq!(compose(&[Transform::identity(), t]).unwrap(), t);
        assert_eq!(compose(&[t]).unwrap(), t);
    }

    #[test]
    fn compose_empty_rejected() {
        assert!(matches!(compose(&[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn compose_matches_direct_homogeneous_product() {
        // Oracle: the four link matrices written out by hand and multiplied as 4x4.
        let (p1, p2, p3, d) = (0.4_f64, -0.2_f64, 1.1_f64, 63.0);
        let rx = Matrix4::new(
            1.0, 0.0, 0.0, 0.0, 0.0, p1.cos(), -p1.sin(), 0.0, 0.0, p1.sin(), p1.cos(), 0.0, 0.0, 0.0,
            0.0, 1.0,
        );
        let ry = Matrix4::new(
            p2.cos(), 0.0, p2.sin(), 0.0, 0.0, 1.0, 0.0, 0.0, -p2.sin(), 0.0, p2.cos(), 0.0, 0.0, 0.0,
            0.0, 1.0,
        );
        let rz = Matrix4::new(
            p3.cos(), -p3.sin(), 0.0, 0.0, p3.sin(), p3.cos(), 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0,
            0.0, 1.0,
        );
        let tz = Matrix4::new(
            1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, d, 0.0, 0.0, 0.0, 1.0,
        );
        let oracle = rx * ry * rz * tz;
        let q = JointState::new(p1, p2, p3, d, 0.0);
        let got = chain_transform(&q).unwrap().to_homogeneous();
        assert!((got - oracle).abs().max() < 1e-12);
    }

    #[test]
    fn fk_straight_down() {
        let tip = forward_kinematics(&JointState::from_degrees(0.0, 0.0, 0.0, 100.0, 0.0));
        assert_abs_diff_eq!(tip.x, 0.0);
        assert_abs_diff_eq!(tip.y, 0.0);
        assert_abs_diff_eq!(tip.z, 100.0);
    }

    #[test]
    fn fk_full_lateral_tilt() {
        let tip = forward_kinematics(&JointState::from_degrees(0.0, 90.0, 0.0, 50.0, 0.0));
        assert_abs_diff_eq!(tip.x, 50.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tip.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(tip.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fk_combined_tilt_reference_values() {
        let q = JointState::from_degrees(10.0, 5.0, 30.0, 80.0, 0.0);
        let tip = forward_kinematics(&q);
        let (p1, p2) = (10f64.to_radians(), 5f64.to_radians());
        assert_abs_diff_eq!(tip.x, 80.0 * p2.sin(), epsilon = 1e-12);
        assert_abs_diff_eq!(tip.y, -80.0 * p1.sin() * p2.cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(tip.z, 80.0 * p1.cos() * p2.cos(), epsilon = 1e-12);
        // published three-decimal values; x is 6.97246, so allow one unit in the last place
        assert_abs_diff_eq!(tip.x, 6.973, epsilon = 1e-3);
        assert_abs_diff_eq!(tip.y, -13.839, epsilon = 5e-4);
        assert_abs_diff_eq!(tip.z, 78.485, epsilon = 5e-4);
        let chain = forward_kinematics_chain(&q).unwrap();
        assert!(close(&tip.vector(), &chain.vector(), 1e-9));
        let no_roll = forward_kinematics(&JointState { phi3: 0.0, ..q });
        assert_eq!(tip, no_roll);
    }

    #[test]
    fn angles_axis_aligned_have_undefined_roll() {
        let a = joint_angles_from_vector(&Vector3::z(), AngleConvention::Reconciled).unwrap();
        assert_eq!(a.phi1, 0.0);
        assert_eq!(a.phi2, 0.0);
        assert_eq!(a.phi3, None);
    }

    #[test]
    fn paper_convention_forty_five_degrees() {
        let a = joint_angles_from_vector(&Vector3::new(1.0, 0.0, 1.0), AngleConvention::Paper).unwrap();
        assert_abs_diff_eq!(a.phi2.to_degrees(), 45.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a.phi1, 0.0);
        assert_abs_diff_eq!(a.phi3.unwrap(), 0.0);
    }

    #[test]
    fn reconciled_round_trip() {
        let tip = forward_kinematics(&JointState::from_degrees(10.0, 5.0, 0.0, 80.0, 0.0));
        let a = joint_angles_from_vector(&tip.vector(), AngleConvention::Reconciled).unwrap();
        assert_abs_diff_eq!(a.phi1.to_degrees(), 10.0, epsilon = 1e-6);
        assert_abs_diff_eq!(a.phi2.to_degrees(), 5.0, epsilon = 1e-6);
    }

    #[test]
    fn paper_convention_flips_phi1_sign() {
        let tip = forward_kinematics(&JointState::from_degrees(10.0, 0.0, 0.0, 80.0, 0.0));
        let a = joint_angles_from_vector(&tip.vector(), AngleConvention::Paper).unwrap();
        assert_abs_diff_eq!(a.phi1.to_degrees(), -10.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        assert!(matches!(
            joint_angles_from_vector(&Vector3::zeros(), AngleConvention::Paper),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn reconstruct_edge_cases() {
        assert!(reconstruct_trajectory(&[]).unwrap().is_empty());
        let one = reconstruct_trajectory(&[JointState::from_degrees(0.0, 0.0, 0.0, 100.0, 0.0)]).unwrap();
        assert_eq!(one.samples()[0], TipPosition::new(0.0, 0.0, 100.0, 0.0));
        let bad = [
            JointState::from_degrees(0.0, 0.0, 0.0, 10.0, 1.0),
            JointState::from_degrees(0.0, 0.0, 0.0, 10.0, 1.0),
        ];
        assert!(matches!(reconstruct_trajectory(&bad), Err(Error::Ordering { index: 1, .. })));
    }

    #[test]
    fn deep_composition_stays_orthonormal() {
        let links: Vec<Transform> = (0..100)
            .map(|i| {
                let kind = [ElementaryKind::RotX, ElementaryKind::RotY, ElementaryKind::RotZ][i % 3];
                elementary_transform(kind, 0.1 + 0.037 * i as f64).unwrap()
            })
            .collect();
        let t = compose(&links).unwrap();
        assert!(t.is_rigid(1e-9));
    }

    #[test]
    fn transform_new_rejects_shear() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Transform::new(m, Vector3::zeros()).is_err());
        let reflect = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Transform::new(reflect, Vector3::zeros()).is_err());
    }

    #[test]
    fn nearest_rotation_repairs_drift() {
        let r = elementary_transform(ElementaryKind::RotZ, 0.5).unwrap().rotation;
        let drifted = r + Matrix3::from_element(1e-6);
        assert!(!is_rotation(&drifted, 1e-9));
        let fixed = nearest_rotation(&drifted);
        assert!(is_rotation(&fixed, 1e-12));
        assert!((fixed - r).abs().max() < 1e-5);
    }
}
