//! Skill subcategories, bimanual session reports and workspace boundary
//! summaries.
//!
//! The nine metrics are partitioned into three subcategories:
//!
//! - execution rapidity: total time, idle percentage
//! - gesture control: average acceleration, fluidity (with its base jerk),
//!   average speed
//! - 3D navigation: path length, depth workspace, volume
//!
//! No composite score is produced; reports carry raw values and relative
//! left/right differences only.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::acquisition::Calibration;
use crate::error::{Error, Result};
use crate::kinematics::JointState;
use crate::metrics::{Metric, MetricConfig, MetricSet};
use crate::reference::{Channel, ValidationResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcategory {
    ExecutionRapidity,
    GestureControl,
    #[serde(rename = "navigation_3d")]
    Navigation3d,
}

impl Subcategory {
    pub const ALL: [Subcategory; 3] = [
        Subcategory::ExecutionRapidity,
        Subcategory::GestureControl,
        Subcategory::Navigation3d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcategory::ExecutionRapidity => "execution_rapidity",
            Subcategory::GestureControl => "gesture_control",
            Subcategory::Navigation3d => "navigation_3d",
        }
    }

    pub fn members(self) -> &'static [Metric] {
        match self {
            Subcategory::ExecutionRapidity => &[Metric::TimeTotal, Metric::IdlePct],
            Subcategory::GestureControl => &[Metric::AvgAccel, Metric::Fluidity, Metric::Jerk, Metric::AvgSpeed],
            Subcategory::Navigation3d => &[Metric::PathLength, Metric::DepthWorkspace, Metric::Volume],
        }
    }

    pub fn of(metric: Metric) -> Subcategory {
        Subcategory::ALL
            .into_iter()
            .find(|s| s.members().contains(&metric))
            .expect("every metric belongs to a subcategory")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRapidity {
    pub time_total_s: f64,
    pub idle_pct: f64,
}

/// Average speed sits here alongside acceleration and fluidity; `jerk` is
/// the base value fluidity is the reciprocal of.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GestureControl {
    pub avg_accel_mm_s2: f64,
    pub fluidity_s3_mm: Option<f64>,
    pub jerk_mm_s3: f64,
    pub avg_speed_mm_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Navigation3d {
    pub path_length_mm: f64,
    pub depth_workspace_mm: f64,
    pub volume_mm3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubcategoryView {
    pub execution_rapidity: ExecutionRapidity,
    pub gesture_control: GestureControl,
    pub navigation_3d: Navigation3d,
}

impl SubcategoryView {
    /// Inverse of [`group_by_subcategory`].
    pub fn metric_set(&self) -> MetricSet {
        MetricSet {
            time_total: self.execution_rapidity.time_total_s,
            idle_pct: self.execution_rapidity.idle_pct,
            path_length: self.navigation_3d.path_length_mm,
            depth_workspace: self.navigation_3d.depth_workspace_mm,
            avg_speed: self.gesture_control.avg_speed_mm_s,
            avg_accel: self.gesture_control.avg_accel_mm_s2,
            jerk: self.gesture_control.jerk_mm_s3,
            fluidity: self.gesture_control.fluidity_s3_mm,
            volume: self.navigation_3d.volume_mm3,
        }
    }
}

pub fn group_by_subcategory(m: &MetricSet) -> SubcategoryView {
    SubcategoryView {
        execution_rapidity: ExecutionRapidity {
            time_total_s: m.time_total,
            idle_pct: m.idle_pct,
        },
        gesture_control: GestureControl {
            avg_accel_mm_s2: m.avg_accel,
            fluidity_s3_mm: m.fluidity,
            jerk_mm_s3: m.jerk,
            avg_speed_mm_s: m.avg_speed,
        },
        navigation_3d: Navigation3d {
            path_length_mm: m.path_length,
            depth_workspace_mm: m.depth_workspace,
            volume_mm3: m.volume,
        },
    }
}

/// Decimal places used for every number written to reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Precision {
    /// Lengths, times, speeds, accelerations, jerk, volume, percentages.
    pub length_dp: u32,
    pub angle_dp: u32,
    pub fluidity_dp: u32,
    pub ratio_dp: u32,
    pub mse_dp: u32,
}

impl Default for Precision {
    fn default() -> Self {
        Self {
            length_dp: 3,
            angle_dp: 4,
            fluidity_dp: 8,
            ratio_dp: 6,
            mse_dp: 6,
        }
    }
}

impl Precision {
    pub fn for_metric(&self, metric: Metric) -> u32 {
        match metric {
            Metric::Fluidity => self.fluidity_dp,
            _ => self.length_dp,
        }
    }
}

/// Rounds to a fixed number of decimals so serialized reports diff cleanly.
pub fn round_dp(value: f64, dp: u32) -> f64 {
    let scale = 10f64.powi(dp as i32);
    let r = (value * scale).round() / scale;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn round_view(v: &SubcategoryView, p: &Precision) -> SubcategoryView {
    let m = v.metric_set();
    let r = |metric: Metric, x: f64| round_dp(x, p.for_metric(metric));
    group_by_subcategory(&MetricSet {
        time_total: r(Metric::TimeTotal, m.time_total),
        idle_pct: r(Metric::IdlePct, m.idle_pct),
        path_length: r(Metric::PathLength, m.path_length),
        depth_workspace: r(Metric::DepthWorkspace, m.depth_workspace),
        avg_speed: r(Metric::AvgSpeed, m.avg_speed),
        avg_accel: r(Metric::AvgAccel, m.avg_accel),
        jerk: r(Metric::Jerk, m.jerk),
        fluidity: m.fluidity.map(|f| r(Metric::Fluidity, f)),
        volume: r(Metric::Volume, m.volume),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub fn name(self) -> &'static str {
        match self {
            Hand::Left => "left",
            Hand::Right => "right",
        }
    }
}

impl std::str::FromStr for Hand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Hand::Left),
            "right" => Ok(Hand::Right),
            other => Err(Error::invalid(format!("unknown hand `{other}`"))),
        }
    }
}

/// Right-versus-left comparison of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: Metric,
    pub subcategory: Subcategory,
    pub unit: String,
    pub left: Option<f64>,
    pub right: Option<f64>,
    /// `(right - left) / left`; absent when either side is undefined or left is zero.
    pub relative_difference: Option<f64>,
}

pub fn relative_difference(left: Option<f64>, right: Option<f64>) -> Option<f64> {
    match (left, right) {
        (Some(l), Some(r)) if l != 0.0 => Some((r - l) / l),
        _ => None,
    }
}

pub fn compare_hands(left: &MetricSet, right: &MetricSet) -> Vec<MetricComparison> {
    Metric::ALL
        .iter()
        .map(|&metric| {
            let (l, r) = (left.get(metric), right.get(metric));
            MetricComparison {
                metric,
                subcategory: Subcategory::of(metric),
                unit: metric.unit().to_string(),
                left: l,
                right: r,
                relative_difference: relative_difference(l, r),
            }
        })
        .collect()
}

/// Per-channel validation figures carried into a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    /// Channel name to MSE in squared channel units (deg^2 or mm^2).
    pub mse: BTreeMap<String, f64>,
    pub lag_s: f64,
    pub samples: usize,
    pub dropped_samples: usize,
}

impl ValidationSummary {
    pub fn from_result(result: &ValidationResult, dropped_samples: usize) -> Self {
        Self {
            mse: result
                .channels
                .iter()
                .map(|c| (c.channel.name().to_string(), c.mse))
                .collect(),
            lag_s: result.lag,
            samples: result.channels.first().map_or(0, |c| c.samples),
            dropped_samples,
        }
    }

    pub fn mse(&self, channel: Channel) -> Option<f64> {
        self.mse.get(channel.name()).copied()
    }

    pub fn rounded(&self, p: &Precision) -> Self {
        Self {
            mse: self.mse.iter().map(|(k, v)| (k.clone(), round_dp(*v, p.mse_dp))).collect(),
            lag_s: round_dp(self.lag_s, p.length_dp),
            samples: self.samples,
            dropped_samples: self.dropped_samples,
        }
    }
}

/// Everything needed to reproduce a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub metric_config: MetricConfig,
    /// Calibration of the left hand, or of the only hand.
    pub calibration: Calibration,
    /// Set when the right hand was decoded with a different calibration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_calibration: Option<Calibration>,
    pub precision: Precision,
}

impl ConfigEcho {
    pub fn new(metric_config: MetricConfig, calibration: Calibration) -> Self {
        Self {
            metric_config,
            calibration,
            right_calibration: None,
            precision: Precision::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SessionHands {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left: Option<SubcategoryView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub right: Option<SubcategoryView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session: SessionHands,
    /// Present only when both hands were evaluated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Vec<MetricComparison>>,
    #[serde(default)]
    pub observations: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationSummary>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub workspace: BTreeMap<Hand, BoundarySummary>,
    pub config: ConfigEcho,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// Relative session-duration mismatch above which a warning is noted.
pub const DURATION_MISMATCH_WARN: f64 = 0.01;

fn undefined_notes(hand: Hand, m: &MetricSet, notes: &mut Vec<String>) {
    if m.fluidity.is_none() {
        notes.push(format!(
            "{}: fluidity undefined (jerk {:.3e} mm/s^3 below epsilon)",
            hand.name(),
            m.jerk
        ));
    }
}

fn pct(x: f64) -> String {
    format!("{:+.1}%", 100.0 * x)
}

fn observations(left: &MetricSet, right: &MetricSet) -> Vec<String> {
    let mut out = Vec::new();
    let dl = relative_difference(Some(left.path_length), Some(right.path_length));
    let dv = relative_difference(Some(left.volume), Some(right.volume));
    let (shorter, longer) = if right.path_length < left.path_length {
        (Hand::Right, Hand::Left)
    } else {
        (Hand::Left, Hand::Right)
    };
    if left.path_length != right.path_length {
        out.push(format!(
            "{} hand travels a shorter path than the {} hand (right vs left {})",
            shorter.name(),
            longer.name(),
            dl.map_or("n/a".into(), pct)
        ));
    }
    if left.volume != right.volume {
        let smaller = if right.volume < left.volume { Hand::Right } else { Hand::Left };
        out.push(format!(
            "{} hand explores a smaller workspace volume (right vs left {})",
            smaller.name(),
            dv.map_or("n/a".into(), pct)
        ));
    }
    for (hand, m, other) in [(Hand::Left, left, right), (Hand::Right, right, left)] {
        if m.path_length < other.path_length && m.volume < other.volume {
            out.push(format!(
                "{} hand: smaller path length and volume indicate a more optimized trajectory",
                hand.name()
            ));
        }
    }
    if left.avg_speed != right.avg_speed {
        let faster = if right.avg_speed > left.avg_speed { Hand::Right } else { Hand::Left };
        out.push(format!("{} hand moves faster on average", faster.name()));
    }
    if left.idle_pct != right.idle_pct {
        let idler = if right.idle_pct > left.idle_pct { Hand::Right } else { Hand::Left };
        out.push(format!("{} hand spends more time idle", idler.name()));
    }
    out
}

/// Side-by-side report for both hands.
pub fn bimanual_report(
    left: &MetricSet,
    right: &MetricSet,
    validation: Option<ValidationSummary>,
    config: ConfigEcho,
) -> SessionReport {
    let p = config.precision;
    let mut notes = Vec::new();
    let longest = left.time_total.max(right.time_total);
    if longest > 0.0 {
        let mismatch = (left.time_total - right.time_total).abs() / longest;
        if mismatch > DURATION_MISMATCH_WARN {
            notes.push(format!(
                "warning: session durations differ by {:.2}% (left {:.3} s, right {:.3} s)",
                100.0 * mismatch,
                left.time_total,
                right.time_total
            ));
        }
    }
    undefined_notes(Hand::Left, left, &mut notes);
    undefined_notes(Hand::Right, right, &mut notes);
    let comparison = compare_hands(left, right)
        .into_iter()
        .map(|c| MetricComparison {
            left: c.left.map(|v| round_dp(v, p.for_metric(c.metric))),
            right: c.right.map(|v| round_dp(v, p.for_metric(c.metric))),
            relative_difference: c.relative_difference.map(|v| round_dp(v, p.ratio_dp)),
            ..c
        })
        .collect();
    SessionReport {
        session: SessionHands {
            left: Some(round_view(&group_by_subcategory(left), &p)),
            right: Some(round_view(&group_by_subcategory(right), &p)),
        },
        comparison: Some(comparison),
        observations: observations(left, right),
        validation: validation.map(|v| v.rounded(&p)),
        workspace: BTreeMap::new(),
        config,
        notes,
    }
}

/// Report for a single instrumented hand; the comparison block is omitted.
pub fn single_hand_report(
    hand: Hand,
    metrics: &MetricSet,
    validation: Option<ValidationSummary>,
    config: ConfigEcho,
) -> SessionReport {
    let p = config.precision;
    let view = Some(round_view(&group_by_subcategory(metrics), &p));
    let mut notes = Vec::new();
    undefined_notes(hand, metrics, &mut notes);
    let session = match hand {
        Hand::Left => SessionHands { left: view, right: None },
        Hand::Right => SessionHands { left: None, right: view },
    };
    SessionReport {
        session,
        comparison: None,
        observations: Vec::new(),
        validation: validation.map(|v| v.rounded(&p)),
        workspace: BTreeMap::new(),
        config,
        notes,
    }
}

impl SessionReport {
    pub fn with_workspace(mut self, hand: Hand, boundary: &BoundarySummary) -> Self {
        self.workspace.insert(hand, boundary.rounded(self.config.precision.angle_dp));
        self
    }

    pub fn view(&self, hand: Hand) -> Option<&SubcategoryView> {
        match hand {
            Hand::Left => self.session.left.as_ref(),
            Hand::Right => self.session.right.as_ref(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Least-squares ellipse in the (phi1, phi2) plane, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Angle of the major axis from the phi1 axis, degrees.
    pub orientation_deg: f64,
}

/// How the boundary ellipse was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EllipseFit {
    /// Direct least-squares conic fit to the hull vertices.
    LeastSquares,
    /// Second moments of the hull region, used when the direct fit is
    /// missing or overshoots the hull.
    Moments,
}

/// A fitted semi-axis may exceed the hull half-extent by at most this factor.
pub const ELLIPSE_HULL_TOLERANCE: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySummary {
    pub samples: usize,
    /// Convex hull of the (phi1, phi2) points, counter-clockwise, degrees.
    pub hull: Vec<[f64; 2]>,
    pub ellipse: Option<Ellipse>,
    pub ellipse_fit: Option<EllipseFit>,
    /// Largest `sqrt(phi1^2 + phi2^2)` over the samples, degrees.
    pub max_cone_angle_deg: f64,
    pub cone_half_angle_deg: f64,
    pub violation: bool,
}

impl BoundarySummary {
    /// Half of the hull's largest vertex-to-vertex distance.
    pub fn hull_half_extent(&self) -> f64 {
        hull_half_extent(&self.hull)
    }

    fn rounded(&self, dp: u32) -> Self {
        let r = |x: f64| round_dp(x, dp);
        Self {
            samples: self.samples,
            hull: self.hull.iter().map(|p| [r(p[0]), r(p[1])]).collect(),
            ellipse: self.ellipse.map(|e| Ellipse {
                center: [r(e.center[0]), r(e.center[1])],
                semi_major: r(e.semi_major),
                semi_minor: r(e.semi_minor),
                orientation_deg: r(e.orientation_deg),
            }),
            ellipse_fit: self.ellipse_fit,
            max_cone_angle_deg: r(self.max_cone_angle_deg),
            cone_half_angle_deg: self.cone_half_angle_deg,
            violation: self.violation,
        }
    }
}

pub const BOUNDARY_MIN_SAMPLES: usize = 100;

fn hull_half_extent(hull: &[[f64; 2]]) -> f64 {
    let mut best: f64 = 0.0;
    for (i, a) in hull.iter().enumerate() {
        for b in &hull[i + 1..] {
            best = best.max((a[0] - b[0]).hypot(a[1] - b[1]));
        }
    }
    best / 2.0
}

/// Ellipse with the same area second moments as a counter-clockwise polygon
/// (a uniform ellipse has variance `a^2 / 4` along each axis).
pub fn moment_ellipse(polygon: &[[f64; 2]]) -> Option<Ellipse> {
    let n = polygon.len();
    if n < 3 {
        return None;
    }
    let (mut area, mut cx, mut cy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    // shift to the first vertex for conditioning
    let o = polygon[0];
    for i in 0..n {
        let (x0, y0) = (polygon[i][0] - o[0], polygon[i][1] - o[1]);
        let (x1, y1) = (polygon[(i + 1) % n][0] - o[0], polygon[(i + 1) % n][1] - o[1]);
        let c = x0 * y1 - x1 * y0;
        area += c;
        cx += (x0 + x1) * c;
        cy += (y0 + y1) * c;
        sxx += (x0 * x0 + x0 * x1 + x1 * x1) * c;
        syy += (y0 * y0 + y0 * y1 + y1 * y1) * c;
        sxy += (x0 * y1 + 2.0 * x0 * y0 + 2.0 * x1 * y1 + x1 * y0) * c;
    }
    area /= 2.0;
    if !(area.abs() > 1e-12) {
        return None;
    }
    let (cx, cy) = (cx / (6.0 * area), cy / (6.0 * area));
    let cov = Matrix2::new(
        sxx / (12.0 * area) - cx * cx,
        sxy / (24.0 * area) - cx * cy,
        sxy / (24.0 * area) - cx * cy,
        syy / (12.0 * area) - cy * cy,
    );
    let eig = cov.symmetric_eigen();
    let (major_idx, minor_idx) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let dir = eig.eigenvectors.column(major_idx);
    Some(Ellipse {
        center: [o[0] + cx, o[1] + cy],
        semi_major: 2.0 * eig.eigenvalues[major_idx].max(0.0).sqrt(),
        semi_minor: 2.0 * eig.eigenvalues[minor_idx].max(0.0).sqrt(),
        orientation_deg: dir[1].atan2(dir[0]).to_degrees().rem_euclid(180.0),
    })
}

/// Least-squares fit of the hull, falling back to the moment ellipse (axes
/// capped at the hull half-extent) when the fit overshoots.
fn boundary_ellipse(hull: &[[f64; 2]]) -> Option<(Ellipse, EllipseFit)> {
    let extent = hull_half_extent(hull);
    let limit = ELLIPSE_HULL_TOLERANCE * extent;
    if let Some(e) = fit_ellipse(hull).filter(|e| e.semi_major <= limit) {
        return Some((e, EllipseFit::LeastSquares));
    }
    moment_ellipse(hull).map(|e| {
        (
            Ellipse {
                semi_major: e.semi_major.min(extent),
                semi_minor: e.semi_minor.min(extent),
                ..e
            },
            EllipseFit::Moments,
        )
    })
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; collinear points are dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Eigenvector of a 3x3 matrix for a known real eigenvalue, from the null
/// space of `m - lambda I` (largest cross product of two rows).
fn eigenvector(m: &Matrix3<f64>, lambda: f64) -> Option<Vector3<f64>> {
    let a = m - Matrix3::identity() * lambda;
    let rows: Vec<Vector3<f64>> = (0..3).map(|i| a.row(i).transpose()).collect();
    [(0, 1), (0, 2), (1, 2)]
        .iter()
        .map(|&(i, j)| rows[i].cross(&rows[j]))
        .max_by(|u, v| u.norm_squared().total_cmp(&v.norm_squared()))
        .filter(|v| v.norm() > 0.0)
        .map(|v| v.normalize())
}

/// Direct least-squares ellipse fit (numerically stable variant with the
/// `4ac - b^2 = 1` constraint). Points are centred and scaled first.
pub fn fit_ellipse(points: &[[f64; 2]]) -> Option<Ellipse> {
    let n = points.len();
    if n < 5 {
        return None;
    }
    let mean = points.iter().fold([0.0, 0.0], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
    let mean = [mean[0] / n as f64, mean[1] / n as f64];
    let scale = points
        .iter()
        .map(|p| (p[0] - mean[0]).hypot(p[1] - mean[1]))
        .fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    let xy: Vec<(f64, f64)> = points
        .iter()
        .map(|p| ((p[0] - mean[0]) / scale, (p[1] - mean[1]) / scale))
        .collect();
    let d1 = DMatrix::from_fn(n, 3, |i, j| {
        let (x, y) = xy[i];
        [x * x, x * y, y * y][j]
    });
    let d2 = DMatrix::from_fn(n, 3, |i, j| {
        let (x, y) = xy[i];
        [x, y, 1.0][j]
    });
    let s1: Matrix3<f64> = (d1.transpose() * &d1).fixed_view::<3, 3>(0, 0).into();
    let s2: Matrix3<f64> = (d1.transpose() * &d2).fixed_view::<3, 3>(0, 0).into();
    let s3: Matrix3<f64> = (d2.transpose() * &d2).fixed_view::<3, 3>(0, 0).into();
    let t = -(s3.try_inverse()? * s2.transpose());
    let m = s1 + s2 * t;
    // premultiply by the inverse of the constraint matrix [[0,0,2],[0,-1,0],[2,0,0]]
    let c_inv = Matrix3::new(0.0, 0.0, 0.5, 0.0, -1.0, 0.0, 0.5, 0.0, 0.0);
    let m = c_inv * m;
    let eigen = m.complex_eigenvalues();
    let a1 = eigen
        .iter()
        .filter(|l| l.im.abs() <= 1e-9 * (1.0 + l.re.abs()))
        .filter_map(|l| eigenvector(&m, l.re))
        .find(|v| 4.0 * v[0] * v[2] - v[1] * v[1] > 0.0)?;
    let a2 = t * a1;
    let (a, b, c, d, e, f) = (a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]);

    let centre_sys = Matrix2::new(2.0 * a, b, b, 2.0 * c);
    let centre = centre_sys.try_inverse()? * nalgebra::Vector2::new(-d, -e);
    let (x0, y0) = (centre.x, centre.y);
    let f_c = a * x0 * x0 + b * x0 * y0 + c * y0 * y0 + d * x0 + e * y0 + f;
    let q = Matrix2::new(a, b / 2.0, b / 2.0, c).symmetric_eigen();
    let axes: Vec<f64> = q.eigenvalues.iter().map(|l| (-f_c / l).sqrt()).collect();
    if !axes.iter().all(|x| x.is_finite()) {
        return None;
    }
    let (major_idx, minor_idx) = if axes[0] >= axes[1] { (0, 1) } else { (1, 0) };
    let dir = q.eigenvectors.column(major_idx);
    let mut orientation = dir[1].atan2(dir[0]).to_degrees();
    if orientation < 0.0 {
        orientation += 180.0;
    }
    if orientation >= 180.0 {
        orientation -= 180.0;
    }
    Some(Ellipse {
        center: [mean[0] + scale * x0, mean[1] + scale * y0],
        semi_major: scale * axes[major_idx],
        semi_minor: scale * axes[minor_idx],
        orientation_deg: orientation,
    })
}

/// Convex hull, best-fit ellipse of the hull and cone-angle check of the
/// (phi1, phi2) samples.
pub fn workspace_boundary(joints: &[JointState], cone_half_angle_deg: f64) -> Result<BoundarySummary> {
    if joints.len() < BOUNDARY_MIN_SAMPLES {
        return Err(Error::InsufficientData {
            needed: BOUNDARY_MIN_SAMPLES,
            got: joints.len(),
        });
    }
    let points: Vec<[f64; 2]> = joints.iter().map(|q| [q.phi1_deg(), q.phi2_deg()]).collect();
    let hull = convex_hull(&points);
    let (ellipse, ellipse_fit) = match boundary_ellipse(&hull) {
        Some((e, fit)) => (Some(e), Some(fit)),
        None => (None, None),
    };
    let max_cone_angle_deg = joints
        .iter()
        .map(|q| q.cone_angle().to_degrees())
        .fold(0.0, f64::max);
    Ok(BoundarySummary {
        samples: joints.len(),
        hull,
        ellipse,
        ellipse_fit,
        max_cone_angle_deg,
        cone_half_angle_deg,
        violation: max_cone_angle_deg > cone_half_angle_deg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn table2_left() -> MetricSet {
        MetricSet {
            time_total: 164.0,
            idle_pct: 52.0,
            path_length: 2043.0,
            depth_workspace: 55.0,
            avg_speed: 2043.0 / 164.0,
            avg_accel: 0.076,
            jerk: 163.73,
            fluidity: Some(1.0 / 163.73),
            volume: 463591.0,
        }
    }

    fn table2_right() -> MetricSet {
        MetricSet {
            time_total: 164.0,
            idle_pct: 49.0,
            path_length: 1857.0,
            depth_workspace: 56.0,
            avg_speed: 1857.0 / 164.0,
            avg_accel: 0.069,
            jerk: 155.66,
            fluidity: Some(1.0 / 155.66),
            volume: 424029.0,
        }
    }

    #[test]
    fn partition_covers_every_metric_once() {
        let mut seen: Vec<Metric> = Subcategory::ALL.iter().flat_map(|s| s.members().to_vec()).collect();
        assert_eq!(seen.len(), 9);
        seen.sort_by_key(|m| m.name());
        seen.dedup();
        assert_eq!(seen.len(), 9);
        let m = table2_left();
        assert_eq!(group_by_subcategory(&m).metric_set(), m);
    }

    #[test]
    fn execution_rapidity_from_table_values() {
        let v = group_by_subcategory(&table2_left());
        assert_eq!(v.execution_rapidity.time_total_s, 164.0);
        assert_eq!(v.execution_rapidity.idle_pct, 52.0);
    }

    #[test]
    fn undefined_fluidity_is_carried() {
        let m = MetricSet {
            fluidity: None,
            ..table2_left()
        };
        let v = group_by_subcategory(&m);
        assert_eq!(v.gesture_control.fluidity_s3_mm, None);
        let json = serde_json::to_value(v).unwrap();
        assert!(json["gesture_control"]["fluidity_s3_mm"].is_null());
    }

    #[test]
    fn identical_hands_have_zero_differences() {
        let m = table2_left();
        for c in compare_hands(&m, &m) {
            assert_eq!(c.relative_difference, Some(0.0));
        }
    }

    #[test]
    fn table2_path_length_difference() {
        let c = compare_hands(&table2_left(), &table2_right());
        let l = c.iter().find(|c| c.metric == Metric::PathLength).unwrap();
        assert_abs_diff_eq!(l.relative_difference.unwrap(), -0.0910, epsilon = 5e-4);
        let report = bimanual_report(
            &table2_left(),
            &table2_right(),
            None,
            ConfigEcho::new(MetricConfig::default(), Calibration::default()),
        );
        assert!(report
            .observations
            .iter()
            .any(|o| o.contains("right hand: smaller path length and volume")));
        assert!(report.notes.is_empty());
    }

    #[test]
    fn gap_note_for_undefined_fluidity() {
        let right = MetricSet {
            fluidity: None,
            jerk: 0.0,
            ..table2_right()
        };
        let report = bimanual_report(
            &table2_left(),
            &right,
            None,
            ConfigEcho::new(MetricConfig::default(), Calibration::default()),
        );
        assert!(report.notes.iter().any(|n| n.starts_with("right: fluidity undefined")));
        let fl = report
            .comparison
            .unwrap()
            .into_iter()
            .find(|c| c.metric == Metric::Fluidity)
            .unwrap();
        assert_eq!(fl.relative_difference, None);
    }

    #[test]
    fn duration_mismatch_warns() {
        let right = MetricSet {
            time_total: 170.0,
            ..table2_right()
        };
        let report = bimanual_report(
            &table2_left(),
            &right,
            None,
            ConfigEcho::new(MetricConfig::default(), Calibration::default()),
        );
        assert!(report.notes.iter().any(|n| n.starts_with("warning: session durations")));
    }

    #[test]
    fn single_hand_report_omits_comparison() {
        let r = single_hand_report(
            Hand::Right,
            &table2_right(),
            None,
            ConfigEcho::new(MetricConfig::default(), Calibration::default()),
        );
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert!(json.get("comparison").is_none());
        assert!(json["session"].get("left").is_none());
        assert!(json["session"]["right"]["navigation_3d"].is_object());
    }

    #[test]
    fn rounding_is_fixed() {
        assert_eq!(round_dp(12.456789, 3), 12.457);
        assert_eq!(round_dp(-0.00001, 3), 0.0);
    }

    fn circle(radius: f64, n: usize) -> Vec<JointState> {
        (0..n)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / n as f64;
                JointState::from_degrees(radius * a.cos(), radius * a.sin(), 0.0, 50.0, k as f64 * 0.01)
            })
            .collect()
    }

    #[test]
    fn circle_boundary_recovers_radius() {
        let b = workspace_boundary(&circle(13.0, 720), 13.0 + 1e-9).unwrap();
        let e = b.ellipse.unwrap();
        assert_abs_diff_eq!(e.semi_major, 13.0, epsilon = 0.1);
        assert_abs_diff_eq!(e.semi_minor, 13.0, epsilon = 0.1);
        assert!(!b.violation);
    }

    #[test]
    fn rotated_ellipse_fit() {
        let (a, b, th) = (9.0_f64, 4.0_f64, 30f64.to_radians());
        let pts: Vec<[f64; 2]> = (0..200)
            .map(|k| {
                let s = std::f64::consts::TAU * k as f64 / 200.0;
                let (x, y) = (a * s.cos(), b * s.sin());
                [1.0 + x * th.cos() - y * th.sin(), -2.0 + x * th.sin() + y * th.cos()]
            })
            .collect();
        let e = fit_ellipse(&pts).unwrap();
        assert_abs_diff_eq!(e.semi_major, 9.0, epsilon = 1e-6);
        assert_abs_diff_eq!(e.semi_minor, 4.0, epsilon = 1e-6);
        assert_abs_diff_eq!(e.orientation_deg, 30.0, epsilon = 1e-6);
        assert_abs_diff_eq!(e.center[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(e.center[1], -2.0, epsilon = 1e-6);
    }

    #[test]
    fn origin_only_boundary_is_degenerate() {
        let joints: Vec<JointState> = (0..100)
            .map(|k| JointState::new(0.0, 0.0, 0.0, 40.0, k as f64))
            .collect();
        let b = workspace_boundary(&joints, 13.0).unwrap();
        assert_eq!(b.hull.len(), 1);
        assert_eq!(b.ellipse, None);
        assert_eq!(b.max_cone_angle_deg, 0.0);
        assert!(!b.violation);
    }

    #[test]
    fn point_outside_cone_flags_violation() {
        let mut joints = circle(10.0, 150);
        joints.push(JointState::from_degrees(15.0, 0.0, 0.0, 50.0, 10.0));
        let b = workspace_boundary(&joints, 13.0).unwrap();
        assert!(b.violation);
        assert_abs_diff_eq!(b.max_cone_angle_deg, 15.0, epsilon = 1e-9);
    }

    #[test]
    fn boundary_needs_samples() {
        assert!(matches!(
            workspace_boundary(&circle(5.0, 99), 13.0),
            Err(Error::InsufficientData { needed: 100, got: 99 })
        ));
    }

    #[test]
    fn hull_of_square_with_interior() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.0]];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
    }

    #[test]
    fn square_moment_ellipse() {
        // uniform square of side 2: variance 1/3 on both axes
        let sq = [[3.0, 1.0], [5.0, 1.0], [5.0, 3.0], [3.0, 3.0]];
        let e = moment_ellipse(&sq).unwrap();
        assert_abs_diff_eq!(e.center[0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.center[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.semi_major, 2.0 / 3f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(e.semi_minor, 2.0 / 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn sliver_falls_back_to_moments() {
        let joints: Vec<JointState> = (0..200)
            .map(|i| {
                let u = i as f64 / 199.0;
                let w = if i % 2 == 0 { 0.0 } else { 0.05 * (1.0 - u) };
                JointState::from_degrees(-8.0 + 16.0 * u, 0.3 * u + w, 0.0, 50.0, i as f64)
            })
            .collect();
        let b = workspace_boundary(&joints, 13.0).unwrap();
        let e = b.ellipse.unwrap();
        assert!(e.semi_major <= b.hull_half_extent() * ELLIPSE_HULL_TOLERANCE);
        assert!(e.semi_minor < 0.1);
        assert_eq!(b.ellipse_fit, Some(EllipseFit::Moments));
    }
}
