//! CSV and JSON file formats.
//!
//! All tables are comma separated with a header row; lines starting with `#`
//! are comments. Columns may appear in any order and extra columns are
//! ignored. Angles are degrees, lengths millimetres, times seconds. Writers
//! use fixed decimals: angles 4, lengths 3, times 6.
//!
//! | table       | columns                       |
//! |-------------|-------------------------------|
//! | raw stream  | `t,c1,c2,ct,c3`               |
//! | joints      | `t,phi1,phi2,phi3,d`          |
//! | markers     | `t,cx,cy,cz,px,py,pz`         |
//! | trajectory  | `t,x,y,z`                     |

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim};
use nalgebra::{Matrix3, Vector3};
use serde::de::DeserializeOwned;

use crate::acquisition::{Calibration, EncoderFrame};
use crate::error::{Error, Result};
use crate::kinematics::{JointState, TipTrajectory};
use crate::metrics::{Metric, MetricConfig};
use crate::evaluation::{Hand, SessionReport, Subcategory};
use crate::reference::{AlignedPair, Channel, FrameTriad, MarkerSample, MarkerStream, ReferenceJoint};

pub const RAW_COLUMNS: [&str; 5] = ["t", "c1", "c2", "ct", "c3"];
pub const JOINT_COLUMNS: [&str; 5] = ["t", "phi1", "phi2", "phi3", "d"];
pub const MARKER_COLUMNS: [&str; 7] = ["t", "cx", "cy", "cz", "px", "py", "pz"];
pub const TRAJECTORY_COLUMNS: [&str; 4] = ["t", "x", "y", "z"];

fn parse_err(source: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        message: message.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(io_err(path))
}

/// A parsed table with the required columns in the requested order. Empty
/// cells come back as `None`.
struct Table {
    rows: Vec<Vec<Option<String>>>,
    /// 1-based line numbers of the data rows, for messages.
    lines: Vec<u64>,
}

fn read_table<R: Read>(reader: R, source: &str, required: &[&str]) -> Result<Table> {
    let mut rdr = ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(source, e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    let missing: Vec<&str> = required.iter().copied().filter(|c| !names.contains(c)).collect();
    if !missing.is_empty() {
        return Err(parse_err(
            source,
            format!(
                "missing column{} {} (expected {}, found {})",
                if missing.len() == 1 { "" } else { "s" },
                missing.join(", "),
                required.join(","),
                names.join(",")
            ),
        ));
    }
    let idx: Vec<usize> = required
        .iter()
        .map(|c| names.iter().position(|n| n == c).expect("checked above"))
        .collect();
    let mut table = Table {
        rows: Vec::new(),
        lines: Vec::new(),
    };
    let mut record = StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(parse_err(source, e.to_string())),
        }
        let line = record.position().map_or(0, |p| p.line());
        let row = idx
            .iter()
            .map(|&i| {
                record
                    .get(i)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
            })
            .collect();
        table.rows.push(row);
        table.lines.push(line);
    }
    Ok(table)
}

fn cell<T: std::str::FromStr>(table: &Table, row: usize, col: usize, name: &str, source: &str) -> Result<T> {
    let line = table.lines[row];
    let text = table.rows[row][col]
        .as_deref()
        .ok_or_else(|| parse_err(source, format!("line {line}: empty `{name}`")))?;
    text.parse()
        .map_err(|_| parse_err(source, format!("line {line}: cannot parse `{name}` value `{text}`")))
}

fn optional_cell(table: &Table, row: usize, col: usize, name: &str, source: &str) -> Result<Option<f64>> {
    match table.rows[row][col] {
        None => Ok(None),
        Some(_) => cell(table, row, col, name, source).map(Some),
    }
}

fn floats<const N: usize>(table: &Table, row: usize, names: &[&str; N], source: &str) -> Result<[f64; N]> {
    let mut out = [0.0; N];
    for (k, name) in names.iter().enumerate() {
        out[k] = cell(table, row, k, name, source)?;
    }
    Ok(out)
}

/// What a telemetry CSV holds, judged from its header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Raw,
    Joints,
}

/// Reads only the header of `path` to tell raw encoder streams from decoded
/// joint streams.
pub fn detect_stream_kind(path: &Path) -> Result<StreamKind> {
    let source = path.display().to_string();
    let mut rdr = ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(Trim::All)
        .from_reader(open(path)?);
    let header = rdr.headers().map_err(|e| parse_err(&source, e.to_string()))?;
    let names: Vec<&str> = header.iter().collect();
    let has = |cols: &[&str]| cols.iter().all(|c| names.contains(c));
    if has(&RAW_COLUMNS) {
        Ok(StreamKind::Raw)
    } else if has(&JOINT_COLUMNS) {
        Ok(StreamKind::Joints)
    } else {
        Err(parse_err(
            &source,
            format!(
                "header `{}` matches neither a raw stream ({}) nor a joint stream ({})",
                names.join(","),
                RAW_COLUMNS.join(","),
                JOINT_COLUMNS.join(",")
            ),
        ))
    }
}

/// Raw encoder stream.
pub fn read_raw_stream<R: Read>(reader: R, source: &str) -> Result<Vec<EncoderFrame>> {
    let table = read_table(reader, source, &RAW_COLUMNS)?;
    (0..table.rows.len())
        .map(|i| {
            let t: f64 = cell(&table, i, 0, "t", source)?;
            let c = |k: usize| cell::<u32>(&table, i, k, RAW_COLUMNS[k], source);
            EncoderFrame::new(c(1)?, c(2)?, c(3)?, c(4)?, t)
                .map_err(|e| parse_err(source, format!("line {}: {e}", table.lines[i])))
        })
        .collect()
}

pub fn read_raw_stream_file(path: &Path) -> Result<Vec<EncoderFrame>> {
    read_raw_stream(open(path)?, &path.display().to_string())
}

fn write_comments<W: Write>(w: &mut W, comments: &[String]) -> std::io::Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    Ok(())
}

pub fn write_raw_stream<W: Write>(mut w: W, frames: &[EncoderFrame], comments: &[String]) -> std::io::Result<()> {
    write_comments(&mut w, comments)?;
    writeln!(w, "{}", RAW_COLUMNS.join(","))?;
    for f in frames {
        writeln!(w, "{:.6},{},{},{},{}", f.t, f.c1, f.c2, f.ct, f.c3)?;
    }
    w.flush()
}

pub fn write_raw_stream_file(path: &Path, frames: &[EncoderFrame], comments: &[String]) -> Result<()> {
    write_raw_stream(create(path)?, frames, comments).map_err(io_err(path))
}

/// Joint states in degrees / mm.
pub fn read_joints<R: Read>(reader: R, source: &str) -> Result<Vec<JointState>> {
    let table = read_table(reader, source, &JOINT_COLUMNS)?;
    (0..table.rows.len())
        .map(|i| {
            let [t, phi1, phi2, phi3, d] = floats(&table, i, &JOINT_COLUMNS, source)?;
            Ok(JointState::from_degrees(phi1, phi2, phi3, d, t))
        })
        .collect()
}

pub fn read_joints_file(path: &Path) -> Result<Vec<JointState>> {
    read_joints(open(path)?, &path.display().to_string())
}

pub fn write_joints<W: Write>(mut w: W, joints: &[JointState], comments: &[String]) -> std::io::Result<()> {
    write_comments(&mut w, comments)?;
    writeln!(w, "{}", JOINT_COLUMNS.join(","))?;
    for q in joints {
        writeln!(
            w,
            "{:.6},{:.4},{:.4},{:.4},{:.3}",
            q.t,
            q.phi1_deg(),
            q.phi2_deg(),
            q.phi3_deg(),
            q.d
        )?;
    }
    w.flush()
}

pub fn write_joints_file(path: &Path, joints: &[JointState], comments: &[String]) -> Result<()> {
    write_joints(create(path)?, joints, comments).map_err(io_err(path))
}

/// Reference joints; an undefined roll is an empty `phi3` cell.
pub fn read_reference_joints<R: Read>(reader: R, source: &str) -> Result<Vec<ReferenceJoint>> {
    let table = read_table(reader, source, &JOINT_COLUMNS)?;
    (0..table.rows.len())
        .map(|i| {
            let t: f64 = cell(&table, i, 0, "t", source)?;
            let phi1: f64 = cell(&table, i, 1, "phi1", source)?;
            let phi2: f64 = cell(&table, i, 2, "phi2", source)?;
            let phi3 = optional_cell(&table, i, 3, "phi3", source)?;
            let d: f64 = cell(&table, i, 4, "d", source)?;
            Ok(ReferenceJoint {
                t,
                phi1: phi1.to_radians(),
                phi2: phi2.to_radians(),
                phi3: phi3.map(f64::to_radians),
                d,
            })
        })
        .collect()
}

pub fn write_reference_joints<W: Write>(mut w: W, joints: &[ReferenceJoint]) -> std::io::Result<()> {
    writeln!(w, "{}", JOINT_COLUMNS.join(","))?;
    for q in joints {
        let phi3 = q.phi3.map_or(String::new(), |v| format!("{:.4}", v.to_degrees()));
        writeln!(
            w,
            "{:.6},{:.4},{:.4},{},{:.3}",
            q.t,
            q.phi1.to_degrees(),
            q.phi2.to_degrees(),
            phi3,
            q.d
        )?;
    }
    w.flush()
}

pub fn write_reference_joints_file(path: &Path, joints: &[ReferenceJoint]) -> Result<()> {
    write_reference_joints(create(path)?, joints).map_err(io_err(path))
}

/// Marker capture; the rate is not stored in the file and must be supplied.
pub fn read_markers<R: Read>(reader: R, source: &str, rate: f64) -> Result<MarkerStream> {
    let table = read_table(reader, source, &MARKER_COLUMNS)?;
    let samples = (0..table.rows.len())
        .map(|i| {
            let [t, cx, cy, cz, px, py, pz] = floats(&table, i, &MARKER_COLUMNS, source)?;
            Ok(MarkerSample::new(t, [cx, cy, cz], [px, py, pz]))
        })
        .collect::<Result<Vec<_>>>()?;
    MarkerStream::new(samples, rate)
}

pub fn read_markers_file(path: &Path, rate: f64) -> Result<MarkerStream> {
    read_markers(open(path)?, &path.display().to_string(), rate)
}

pub fn write_markers<W: Write>(mut w: W, markers: &MarkerStream) -> std::io::Result<()> {
    writeln!(w, "{}", MARKER_COLUMNS.join(","))?;
    for s in markers.samples() {
        let [cx, cy, cz] = s.center;
        let [px, py, pz] = s.tip;
        writeln!(w, "{:.6},{cx:.3},{cy:.3},{cz:.3},{px:.3},{py:.3},{pz:.3}", s.t)?;
    }
    w.flush()
}

pub fn write_markers_file(path: &Path, markers: &MarkerStream) -> Result<()> {
    write_markers(create(path)?, markers).map_err(io_err(path))
}

pub fn read_trajectory<R: Read>(reader: R, source: &str) -> Result<TipTrajectory> {
    let table = read_table(reader, source, &TRAJECTORY_COLUMNS)?;
    let samples = (0..table.rows.len())
        .map(|i| {
            let [t, x, y, z] = floats(&table, i, &TRAJECTORY_COLUMNS, source)?;
            Ok(crate::kinematics::TipPosition { x, y, z, t })
        })
        .collect::<Result<Vec<_>>>()?;
    TipTrajectory::new(samples)
}

pub fn write_trajectory<W: Write>(mut w: W, traj: &TipTrajectory) -> std::io::Result<()> {
    writeln!(w, "{}", TRAJECTORY_COLUMNS.join(","))?;
    for p in traj.samples() {
        writeln!(w, "{:.6},{:.3},{:.3},{:.3}", p.t, p.x, p.y, p.z)?;
    }
    w.flush()
}

pub fn write_trajectory_file(path: &Path, traj: &TipTrajectory) -> Result<()> {
    write_trajectory(create(path)?, traj).map_err(io_err(path))
}

/// Aligned device/reference series, one `<channel>_device` and
/// `<channel>_reference` column pair per channel, for plotting.
pub fn write_aligned<W: Write>(mut w: W, pairs: &[AlignedPair]) -> std::io::Result<()> {
    let mut header = vec!["t".to_string()];
    for p in pairs {
        header.push(format!("{}_device", p.channel.name()));
        header.push(format!("{}_reference", p.channel.name()));
    }
    writeln!(w, "{}", header.join(","))?;
    let n = pairs.first().map_or(0, |p| p.times.len());
    for i in 0..n {
        write!(w, "{:.6}", pairs[0].times[i])?;
        for p in pairs {
            let dp = if p.channel == Channel::Translation { 3 } else { 4 };
            write!(w, ",{:.*},{:.*}", dp, p.device[i], dp, p.reference[i])?;
        }
        writeln!(w)?;
    }
    w.flush()
}

pub fn write_aligned_file(path: &Path, pairs: &[AlignedPair]) -> Result<()> {
    write_aligned(create(path)?, pairs).map_err(io_err(path))
}

/// Frame triad: three rows of unit axes (i, j, k) then the origin row.
/// Values are separated by commas or whitespace.
pub fn read_triad<R: BufRead>(reader: R, source: &str) -> Result<FrameTriad> {
    let mut rows: Vec<[f64; 3]> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| parse_err(source, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| parse_err(source, format!("line {}: cannot parse `{s}`", n + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let row: [f64; 3] = values
            .try_into()
            .map_err(|v: Vec<f64>| parse_err(source, format!("line {}: expected 3 values, got {}", n + 1, v.len())))?;
        rows.push(row);
    }
    if rows.len() != 4 {
        return Err(parse_err(
            source,
            format!("expected 4 rows (i, j, k axes and origin), got {}", rows.len()),
        ));
    }
    let axes = Matrix3::from_row_slice(&[rows[0], rows[1], rows[2]].concat());
    let triad = FrameTriad::new(axes, Vector3::from(rows[3]));
    triad.validate()?;
    Ok(triad)
}

pub fn read_triad_file(path: &Path) -> Result<FrameTriad> {
    read_triad(open(path)?, &path.display().to_string())
}

pub fn write_triad<W: Write>(mut w: W, triad: &FrameTriad) -> std::io::Result<()> {
    for r in 0..3 {
        let row = triad.axes.row(r);
        writeln!(w, "{:.12},{:.12},{:.12}", row[0], row[1], row[2])?;
    }
    let o = triad.origin;
    writeln!(w, "{:.6},{:.6},{:.6}", o.x, o.y, o.z)?;
    w.flush()
}

pub fn write_triad_file(path: &Path, triad: &FrameTriad) -> Result<()> {
    write_triad(create(path)?, triad).map_err(io_err(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(&path.display().to_string(), e.to_string()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes") + "\n";
    std::fs::write(path, text).map_err(io_err(path))
}

/// Calibration JSON; missing fields take their defaults. Validated on load.
pub fn read_calibration_file(path: &Path) -> Result<Calibration> {
    let cal: Calibration = read_json(path)?;
    cal.validate()?;
    Ok(cal)
}

pub fn write_calibration_file(path: &Path, cal: &Calibration) -> Result<()> {
    write_json(path, cal)
}

pub fn read_metric_config_file(path: &Path) -> Result<MetricConfig> {
    let cfg: MetricConfig = read_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_metric_config_file(path: &Path, cfg: &MetricConfig) -> Result<()> {
    write_json(path, cfg)
}

pub fn read_report_file(path: &Path) -> Result<SessionReport> {
    read_json(path)
}

pub fn write_report_file(path: &Path, report: &SessionReport) -> Result<()> {
    std::fs::write(path, report.to_json()).map_err(io_err(path))
}

/// Flat metrics table: one row per metric per hand. Undefined values are
/// empty cells.
pub fn write_metrics_csv<W: Write>(mut w: W, report: &SessionReport) -> std::io::Result<()> {
    writeln!(w, "hand,subcategory,metric,unit,value")?;
    for hand in [Hand::Left, Hand::Right] {
        let Some(view) = report.view(hand) else { continue };
        let m = view.metric_set();
        for metric in Metric::ALL {
            let value = m.get(metric).map_or(String::new(), |v| v.to_string());
            writeln!(
                w,
                "{},{},{},{},{}",
                hand.name(),
                Subcategory::of(metric).name(),
                metric.name(),
                metric.unit(),
                value
            )?;
        }
    }
    w.flush()
}

pub fn write_metrics_csv_file(path: &Path, report: &SessionReport) -> Result<()> {
    write_metrics_csv(create(path)?, report).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_stream_round_trip_with_comments() {
        let frames = vec![
            EncoderFrame::new(512, 512, 0, 2048, 0.0).unwrap(),
            EncoderFrame::new(513, 500, 511, 0, 0.01).unwrap(),
        ];
        let mut buf = Vec::new();
        write_raw_stream(&mut buf, &frames, &["seed=7 profile=cone-scan".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# seed=7"));
        assert_eq!(read_raw_stream(&buf[..], "mem").unwrap(), frames);
    }

    #[test]
    fn out_of_range_count_is_a_parse_error() {
        let text = "t,c1,c2,ct,c3\n0.0,1024,0,0,0\n";
        let err = read_raw_stream(text.as_bytes(), "raw.csv").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn missing_marker_columns_are_named() {
        let text = "t,cx,cy,cz\n0,0,0,0\n";
        let err = read_markers(text.as_bytes(), "ref.csv", 120.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("missing columns px, py, pz"), "{msg}");
    }

    #[test]
    fn columns_in_any_order() {
        let text = "d,phi3,phi2,phi1,t,extra\n80,30,5,10,0.5,x\n";
        let q = read_joints(text.as_bytes(), "j").unwrap();
        assert!((q[0].phi1_deg() - 10.0).abs() < 1e-12);
        assert!((q[0].phi3_deg() - 30.0).abs() < 1e-12);
        assert_eq!(q[0].d, 80.0);
        assert_eq!(q[0].t, 0.5);
    }

    #[test]
    fn reference_joint_with_undefined_roll() {
        let j = vec![ReferenceJoint {
            t: 0.0,
            phi1: 0.0,
            phi2: 0.0,
            phi3: None,
            d: 50.0,
        }];
        let mut buf = Vec::new();
        write_reference_joints(&mut buf, &j).unwrap();
        assert_eq!(read_reference_joints(&buf[..], "m").unwrap(), j);
    }

    #[test]
    fn triad_parse_and_validate() {
        let text = "# device\n1 0 0\n0,1,0\n0 0 1\n10 20 30\n";
        let t = read_triad(text.as_bytes(), "triad").unwrap();
        assert_eq!(t.origin, Vector3::new(10.0, 20.0, 30.0));
        let bad = "1 0 0\n1 0 0\n0 0 1\n0 0 0\n";
        assert!(matches!(read_triad(bad.as_bytes(), "t"), Err(Error::InvalidFrame(_))));
        let short = "1 0 0\n0 1 0\n0 0 1\n";
        assert!(matches!(read_triad(short.as_bytes(), "t"), Err(Error::Parse { .. })));
    }

    #[test]
    fn unparsable_value_names_column() {
        let text = "t,x,y,z\n0,1,abc,3\n";
        let err = read_trajectory(text.as_bytes(), "tr").unwrap_err();
        assert!(err.to_string().contains("`y`"), "{err}");
    }
}
