//! The nine gesture metrics computed from a tool-tip trajectory.
//!
//! | metric            | unit     | definition                                          |
//! |-------------------|----------|-----------------------------------------------------|
//! | `time_total`      | s        | `t_final - t_initial`                               |
//! | `idle_pct`        | %        | stationary time / total time * 100                  |
//! | `path_length`     | mm       | sum of segment lengths                              |
//! | `depth_workspace` | mm       | `z_max - z_min`                                     |
//! | `avg_speed`       | mm/s     | `path_length / time_total`                          |
//! | `avg_accel`       | mm/s^2   | `sum |v[i+1] - v[i]| / time_total` over speeds      |
//! | `jerk`            | mm/s^3   | time average of the third-derivative magnitude      |
//! | `fluidity`        | s^3/mm   | `1 / jerk` (undefined when jerk is numerically zero)|
//! | `volume`          | mm^3     | frustum `pi h (R^2 + R r + r^2) / 3`                |
//!
//! Derivatives use a centred moving average followed by three-point finite
//! differences (second-order one-sided stencils at the ends), so the output
//! has the same length as the input.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::TipTrajectory;

/// How the jerk integrand is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JerkMode {
    /// Norm of the third derivative of the position vector.
    #[default]
    Vector,
    /// Absolute third derivative of the distance `|r(t)|` from the remote center.
    NormDerivative,
}

impl std::str::FromStr for JerkMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vector" => Ok(JerkMode::Vector),
            "norm-derivative" => Ok(JerkMode::NormDerivative),
            other => Err(Error::invalid(format!("unknown jerk mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Tip speed below which a sample counts as stationary, mm/s.
    pub idle_speed_threshold: f64,
    /// Shortest stationary interval counted as idle, s.
    pub idle_min_duration: f64,
    /// Moving-average window in samples (odd).
    pub smoothing_window: usize,
    /// Jerk values below this are treated as zero, mm/s^3.
    pub jerk_epsilon: f64,
    /// Fraction of the depth range forming the shallow and deep bands.
    pub frustum_band_fraction: f64,
    /// Percentile of the radial distance taken as the band radius.
    pub frustum_radius_percentile: f64,
    pub jerk_mode: JerkMode,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            idle_speed_threshold: 1.0,
            idle_min_duration: 0.5,
            smoothing_window: 5,
            jerk_epsilon: 1e-9,
            frustum_band_fraction: 0.1,
            frustum_radius_percentile: 95.0,
            jerk_mode: JerkMode::Vector,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.smoothing_window == 0 || self.smoothing_window.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "smoothing_window must be odd and >= 1, got {}",
                self.smoothing_window
            )));
        }
        let positive = [
            ("idle_speed_threshold", self.idle_speed_threshold),
            ("idle_min_duration", self.idle_min_duration),
            ("jerk_epsilon", self.jerk_epsilon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        let f = self.frustum_band_fraction;
        if !(f > 0.0 && f <= 0.5) {
            return Err(Error::invalid(format!("frustum_band_fraction must be in (0, 0.5], got {f}")));
        }
        let p = self.frustum_radius_percentile;
        if !(0.0..=100.0).contains(&p) {
            return Err(Error::invalid(format!("frustum_radius_percentile must be in [0, 100], got {p}")));
        }
        Ok(())
    }
}

/// The nine metrics for one hand. Serialized as a flat map whose keys carry
/// the unit; an undefined fluidity is written as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    #[serde(rename = "time_total_s")]
    pub time_total: f64,
    #[serde(rename = "idle_pct")]
    pub idle_pct: f64,
    #[serde(rename = "path_length_mm")]
    pub path_length: f64,
    #[serde(rename = "depth_workspace_mm")]
    pub depth_workspace: f64,
    #[serde(rename = "avg_speed_mm_s")]
    pub avg_speed: f64,
    #[serde(rename = "avg_accel_mm_s2")]
    pub avg_accel: f64,
    #[serde(rename = "jerk_mm_s3")]
    pub jerk: f64,
    #[serde(rename = "fluidity_s3_mm")]
    pub fluidity: Option<f64>,
    #[serde(rename = "volume_mm3")]
    pub volume: f64,
}

/// Metric identifiers in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    TimeTotal,
    IdlePct,
    PathLength,
    DepthWorkspace,
    AvgSpeed,
    AvgAccel,
    Jerk,
    Fluidity,
    Volume,
}

impl Metric {
    pub const ALL: [Metric; 9] = [
        Metric::TimeTotal,
        Metric::IdlePct,
        Metric::PathLength,
        Metric::DepthWorkspace,
        Metric::AvgSpeed,
        Metric::AvgAccel,
        Metric::Jerk,
        Metric::Fluidity,
        Metric::Volume,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::TimeTotal => "time_total",
            Metric::IdlePct => "idle_pct",
            Metric::PathLength => "path_length",
            Metric::DepthWorkspace => "depth_workspace",
            Metric::AvgSpeed => "avg_speed",
            Metric::AvgAccel => "avg_accel",
            Metric::Jerk => "jerk",
            Metric::Fluidity => "fluidity",
            Metric::Volume => "volume",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Metric::TimeTotal => "s",
            Metric::IdlePct => "%",
            Metric::PathLength | Metric::DepthWorkspace => "mm",
            Metric::AvgSpeed => "mm/s",
            Metric::AvgAccel => "mm/s^2",
            Metric::Jerk => "mm/s^3",
            Metric::Fluidity => "s^3/mm",
            Metric::Volume => "mm^3",
        }
    }
}

impl MetricSet {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        Some(match metric {
            Metric::TimeTotal => self.time_total,
            Metric::IdlePct => self.idle_pct,
            Metric::PathLength => self.path_length,
            Metric::DepthWorkspace => self.depth_workspace,
            Metric::AvgSpeed => self.avg_speed,
            Metric::AvgAccel => self.avg_accel,
            Metric::Jerk => self.jerk,
            Metric::Fluidity => return self.fluidity,
            Metric::Volume => self.volume,
        })
    }
}

/// Centred moving average; the window shrinks symmetrically near the ends so
/// affine signals pass through unchanged.
pub fn moving_average(values: &[Vector3<f64>], window: usize) -> Vec<Vector3<f64>> {
    let n = values.len();
    let half = window / 2;
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let slice = &values[i - h..=i + h];
            slice.iter().sum::<Vector3<f64>>() / slice.len() as f64
        })
        .collect()
}

/// Three-point Lagrange derivative at `x0` given samples at `x0, x1, x2`.
fn lagrange3(x: [f64; 3], f: [&Vector3<f64>; 3], at: usize) -> Vector3<f64> {
    let x0 = x[at];
    let mut out = Vector3::zeros();
    for j in 0..3 {
        // d/dx of the j-th basis polynomial evaluated at x0
        let mut weight = 0.0;
        for m in 0..3 {
            if m == j {
                continue;
            }
            let mut term = 1.0 / (x[j] - x[m]);
            for l in 0..3 {
                if l != j && l != m {
                    term *= (x0 - x[l]) / (x[j] - x[l]);
                }
            }
            weight += term;
        }
        out += f[j] * weight;
    }
    out
}

/// First derivative of a sampled vector signal; central three-point stencil
/// inside, second-order one-sided stencils at both ends.
pub fn finite_difference(times: &[f64], values: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let n = values.len();
    match n {
        0 => Vec::new(),
        1 => vec![Vector3::zeros()],
        2 => {
            let d = (values[1] - values[0]) / (times[1] - times[0]);
            vec![d, d]
        }
        _ => (0..n)
            .map(|i| {
                let (base, at) = match i {
                    0 => (0, 0),
                    i if i == n - 1 => (n - 3, 2),
                    i => (i - 1, 1),
                };
                lagrange3(
                    [times[base], times[base + 1], times[base + 2]],
                    [&values[base], &values[base + 1], &values[base + 2]],
                    at,
                )
            })
            .collect(),
    }
}

/// Magnitude below which a derivative of `order` is indistinguishable from
/// floating-point round-off of the input positions.
fn roundoff_floor(values: &[Vector3<f64>], times: &[f64], order: u32) -> f64 {
    let scale = values.iter().map(|v| v.amax()).fold(0.0, f64::max).max(1.0);
    let h = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    64.0 * f64::EPSILON * scale / h.powi(order as i32)
}

fn derivative_of_order(times: &[f64], smoothed: &[Vector3<f64>], order: u32) -> Vec<Vector3<f64>> {
    let mut out = smoothed.to_vec();
    for _ in 0..order {
        out = finite_difference(times, &out);
    }
    let floor = roundoff_floor(smoothed, times, order);
    for v in &mut out {
        v.apply(|c| {
            if c.abs() < floor {
                *c = 0.0;
            }
        });
    }
    out
}

/// Smoothed derivative of the tip position of the given order (1, 2 or 3).
pub fn differentiate(traj: &TipTrajectory, order: u32, cfg: &MetricConfig) -> Result<Vec<Vector3<f64>>> {
    cfg.validate()?;
    if !(1..=3).contains(&order) {
        return Err(Error::invalid(format!("derivative order must be 1, 2 or 3, got {order}")));
    }
    let needed = order as usize + 1;
    if traj.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: traj.len(),
        });
    }
    let times = traj.times();
    let smoothed = moving_average(&traj.positions(), cfg.smoothing_window);
    Ok(derivative_of_order(&times, &smoothed, order))
}

fn require(traj: &TipTrajectory, needed: usize) -> Result<()> {
    if traj.is_empty() {
        return Err(Error::EmptyInput);
    }
    if traj.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: traj.len(),
        });
    }
    Ok(())
}

pub fn total_time(traj: &TipTrajectory) -> Result<f64> {
    require(traj, 1)?;
    let s = traj.samples();
    Ok(s[s.len() - 1].t - s[0].t)
}

/// Share of the time axis attributed to each sample: half the gap to each
/// neighbour. The shares sum to the total duration.
fn time_cells(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { (times[i] - times[i - 1]) / 2.0 } else { 0.0 };
            let right = if i + 1 < n { (times[i + 1] - times[i]) / 2.0 } else { 0.0 };
            left + right
        })
        .collect()
}

/// Idle percentage from a speed series: maximal runs with speed below the
/// threshold lasting at least `min_duration` are summed.
pub fn idle_pct_from_speeds(times: &[f64], speeds: &[f64], threshold: f64, min_duration: f64) -> f64 {
    let total = times.last().copied().unwrap_or(0.0) - times.first().copied().unwrap_or(0.0);
    if total <= 0.0 {
        return 0.0;
    }
    let cells = time_cells(times);
    // same summation order as `idle`, so an all-idle stream is exactly 100
    let total: f64 = cells.iter().sum();
    let mut idle = 0.0;
    let mut run = 0.0;
    for (speed, cell) in speeds.iter().zip(&cells) {
        if *speed < threshold {
            run += cell;
        } else {
            if run >= min_duration {
                idle += run;
            }
            run = 0.0;
        }
    }
    if run >= min_duration {
        idle += run;
    }
    (100.0 * idle / total).clamp(0.0, 100.0)
}

fn speeds(velocity: &[Vector3<f64>]) -> Vec<f64> {
    velocity.iter().map(|v| v.norm()).collect()
}

pub fn idle_time_pct(traj: &TipTrajectory, cfg: &MetricConfig) -> Result<f64> {
    require(traj, 2)?;
    let v = differentiate(traj, 1, cfg)?;
    Ok(idle_pct_from_speeds(
        &traj.times(),
        &speeds(&v),
        cfg.idle_speed_threshold,
        cfg.idle_min_duration,
    ))
}

fn polyline_length(points: &[Vector3<f64>]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

pub fn path_length(traj: &TipTrajectory) -> Result<f64> {
    require(traj, 1)?;
    Ok(polyline_length(&traj.positions()))
}

fn z_range(points: &[Vector3<f64>]) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.z), hi.max(p.z))
    })
}

pub fn depth_workspace(traj: &TipTrajectory) -> Result<f64> {
    require(traj, 1)?;
    let (lo, hi) = z_range(&traj.positions());
    Ok(hi - lo)
}

fn ratio_over_time(value: f64, time: f64, what: &str) -> Result<f64> {
    if time <= 0.0 {
        return Err(Error::DivisionUndefined(format!("{what} over zero duration")));
    }
    Ok(value / time)
}

pub fn average_speed(traj: &TipTrajectory) -> Result<f64> {
    let time = total_time(traj)?;
    ratio_over_time(path_length(traj)?, time, "average speed")
}

/// `sum |v[i+1] - v[i]| / time` over a scalar speed series.
pub fn mean_abs_speed_change(speeds: &[f64], time: f64) -> Result<f64> {
    let total: f64 = speeds.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    ratio_over_time(total, time, "average acceleration")
}

pub fn average_acceleration(traj: &TipTrajectory, cfg: &MetricConfig) -> Result<f64> {
    require(traj, 3)?;
    let v = differentiate(traj, 1, cfg)?;
    mean_abs_speed_change(&speeds(&v), total_time(traj)?)
}

/// Trapezoidal time average of a non-negative series.
pub fn time_average(times: &[f64], values: &[f64]) -> f64 {
    let total = times.last().copied().unwrap_or(0.0) - times.first().copied().unwrap_or(0.0);
    if total <= 0.0 {
        return values.first().copied().unwrap_or(0.0);
    }
    let integral: f64 = times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| (t[1] - t[0]) * (v[0] + v[1]) / 2.0)
        .sum();
    integral / total
}

fn jerk_integrand(times: &[f64], smoothed: &[Vector3<f64>], mode: JerkMode) -> Vec<f64> {
    match mode {
        JerkMode::Vector => derivative_of_order(times, smoothed, 3).iter().map(|j| j.norm()).collect(),
        JerkMode::NormDerivative => {
            let radial: Vec<Vector3<f64>> = smoothed.iter().map(|p| Vector3::new(p.norm(), 0.0, 0.0)).collect();
            derivative_of_order(times, &radial, 3).iter().map(|j| j.x.abs()).collect()
        }
    }
}

/// Jerk time average over the samples whose third-derivative stencil only
/// touches full smoothing windows; the truncated windows at the ends bend
/// polynomials of degree >= 2 and would show up as spurious jerk. Short
/// series fall back to the whole span.
fn mean_jerk(times: &[f64], integrand: &[f64], window: usize) -> f64 {
    let n = times.len();
    let margin = window / 2 + 3;
    if n > 2 * margin + 1 {
        time_average(&times[margin..n - margin], &integrand[margin..n - margin])
    } else {
        time_average(times, integrand)
    }
}

fn fluidity_of(jerk: f64, cfg: &MetricConfig) -> Option<f64> {
    (jerk >= cfg.jerk_epsilon).then(|| 1.0 / jerk)
}

/// Mean jerk magnitude and its reciprocal, the fluidity (`None` when the
/// jerk is below `cfg.jerk_epsilon`).
pub fn jerk_and_fluidity(traj: &TipTrajectory, cfg: &MetricConfig) -> Result<(f64, Option<f64>)> {
    require(traj, 4)?;
    cfg.validate()?;
    let times = traj.times();
    let smoothed = moving_average(&traj.positions(), cfg.smoothing_window);
    let jerk = mean_jerk(&times, &jerk_integrand(&times, &smoothed, cfg.jerk_mode), cfg.smoothing_window);
    Ok((jerk, fluidity_of(jerk, cfg)))
}

/// Truncated-cone volume `pi h (R^2 + R r + r^2) / 3`.
pub fn frustum_volume(height: f64, big_radius: f64, small_radius: f64) -> f64 {
    std::f64::consts::PI * height * (big_radius * big_radius + big_radius * small_radius + small_radius * small_radius) / 3.0
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Frustum radii `(R, r)`: the configured percentile of the radial distance
/// `sqrt(x^2 + y^2)` within the deepest and shallowest depth bands.
fn frustum_radii(points: &[Vector3<f64>], cfg: &MetricConfig) -> Result<(f64, f64, f64)> {
    let (z_min, z_max) = z_range(points);
    let h = z_max - z_min;
    if !(h > 0.0) {
        return Err(Error::DegenerateGeometry(format!("depth workspace is {h} mm")));
    }
    let band = cfg.frustum_band_fraction * h;
    let radial = |keep: &dyn Fn(f64) -> bool| -> Vec<f64> {
        points
            .iter()
            .filter(|p| keep(p.z))
            .map(|p| p.x.hypot(p.y))
            .collect()
    };
    let deep = radial(&|z| z >= z_max - band);
    let shallow = radial(&|z| z <= z_min + band);
    let p = cfg.frustum_radius_percentile;
    let big = percentile(&deep, p).expect("deepest sample is in band");
    let small = percentile(&shallow, p).expect("shallowest sample is in band");
    Ok((h, big, small))
}

pub fn workspace_volume(traj: &TipTrajectory, cfg: &MetricConfig) -> Result<f64> {
    require(traj, 1)?;
    cfg.validate()?;
    let (h, big, small) = frustum_radii(&traj.positions(), cfg)?;
    Ok(frustum_volume(h, big, small))
}

/// All nine metrics from one smoothing pass.
///
/// Positional metrics (path length, depth workspace, volume) are evaluated on
/// the same moving-average track that feeds the derivatives, which removes
/// the staircase that encoder quantization adds to the raw path. With
/// `smoothing_window = 1` they equal the standalone functions exactly. A
/// trajectory without depth excursion has zero volume.
pub fn compute_metric_set(traj: &TipTrajectory, cfg: &MetricConfig) -> Result<MetricSet> {
    cfg.validate()?;
    require(traj, 4).map_err(|e| Error::metric("jerk", e))?;
    let times = traj.times();
    let smoothed = moving_average(&traj.positions(), cfg.smoothing_window);

    let time_total = times[times.len() - 1] - times[0];
    let path_length = polyline_length(&smoothed);
    let avg_speed = ratio_over_time(path_length, time_total, "average speed")
        .map_err(|e| Error::metric("avg_speed", e))?;

    let velocity = derivative_of_order(&times, &smoothed, 1);
    let speed = speeds(&velocity);
    let idle_pct = idle_pct_from_speeds(&times, &speed, cfg.idle_speed_threshold, cfg.idle_min_duration);
    let avg_accel = mean_abs_speed_change(&speed, time_total).map_err(|e| Error::metric("avg_accel", e))?;

    let jerk = mean_jerk(&times, &jerk_integrand(&times, &smoothed, cfg.jerk_mode), cfg.smoothing_window);
    let fluidity = fluidity_of(jerk, cfg);

    let (z_min, z_max) = z_range(&smoothed);
    let depth_workspace = z_max - z_min;
    let volume = if depth_workspace > 0.0 {
        let (h, big, small) = frustum_radii(&smoothed, cfg).map_err(|e| Error::metric("volume", e))?;
        frustum_volume(h, big, small)
    } else {
        0.0
    };

    Ok(MetricSet {
        time_total,
        idle_pct,
        path_length,
        depth_workspace,
        avg_speed,
        avg_accel,
        jerk,
        fluidity,
        volume,
    })
}
