//! `rcm-track` command-line interface.
//!
//! Exit codes: 0 success, 2 usage, 3 parse, 4 alignment, 5 metric,
//! 6 I/O, 1 anything else.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rcm_track::evaluation::Hand;
use rcm_track::kinematics::AngleConvention;
use rcm_track::metrics::JerkMode;

#[derive(Debug, Parser)]
#[command(name = "rcm-track", version, about = "Encoder decoding, validation and gesture metrics for an RCM instrument tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic session: raw.csv, truth.csv, calibration.json
    Simulate(SimulateArgs),
    /// Decode a raw encoder stream into joints.csv and trajectory.csv
    Decode(DecodeArgs),
    /// Compare a device stream against a marker reference (per-channel MSE)
    Validate(ValidateArgs),
    /// Compute the gesture metrics for one or two hands and write a report
    Evaluate(EvaluateArgs),
    /// Render a report.json as a text or CSV table
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    ConeScan,
    PegTransfer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HandArg {
    Left,
    Right,
}

impl From<HandArg> for Hand {
    fn from(h: HandArg) -> Self {
        match h {
            HandArg::Left => Hand::Left,
            HandArg::Right => Hand::Right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Paper,
    Reconciled,
}

impl From<ConventionArg> for AngleConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Paper => AngleConvention::Paper,
            ConventionArg::Reconciled => AngleConvention::Reconciled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JerkModeArg {
    Vector,
    NormDerivative,
}

impl From<JerkModeArg> for JerkMode {
    fn from(m: JerkModeArg) -> Self {
        match m {
            JerkModeArg::Vector => JerkMode::Vector,
            JerkModeArg::NormDerivative => JerkMode::NormDerivative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "cone-scan")]
    pub profile: Profile,
    /// Seconds; defaults to 60 for cone-scan and 164 for peg-transfer
    #[arg(long)]
    pub duration: Option<f64>,
    /// Device sample rate, Hz
    #[arg(long, default_value_t = 100.0)]
    pub rate: f64,
    #[arg(long, value_enum, default_value = "left")]
    pub hand: HandArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gaussian angle noise standard deviation, degrees
    #[arg(long, default_value_t = 0.0)]
    pub angle_noise: f64,
    /// Gaussian depth noise standard deviation, mm
    #[arg(long, default_value_t = 0.0)]
    pub translation_noise: f64,
    #[arg(long, default_value_t = 13.0)]
    pub cone_half_angle: f64,
    #[arg(long, default_value_t = 40.0)]
    pub d_min: f64,
    #[arg(long, default_value_t = 100.0)]
    pub d_max: f64,
    /// Base calibration (zero offsets, roller radius); depth_at_zero is set
    /// from the first sample
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Also write markers.csv and device_frame.txt (marker capture of the same motion)
    #[arg(long)]
    pub markers: bool,
    #[arg(long, default_value_t = 120.0)]
    pub marker_rate: f64,
    /// Marker position noise standard deviation, mm
    #[arg(long, default_value_t = 0.0)]
    pub marker_jitter: f64,
    /// Existing output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Raw stream CSV (t,c1,c2,ct,c3)
    pub input: PathBuf,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Device stream: raw (t,c1,c2,ct,c3) or decoded joints (t,phi1,phi2,phi3,d)
    #[arg(long)]
    pub device: PathBuf,
    /// Marker capture CSV (t,cx,cy,cz,px,py,pz)
    #[arg(long)]
    pub reference: PathBuf,
    /// Device base-frame triad measured by the reference system
    #[arg(long)]
    pub device_frame: PathBuf,
    /// Reference-frame triad; identity when omitted
    #[arg(long)]
    pub reference_frame: Option<PathBuf>,
    #[arg(long, default_value_t = 120.0)]
    pub reference_rate: f64,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long, default_value_t = 100.0)]
    pub grid_rate: f64,
    /// Skip the clock-offset search
    #[arg(long)]
    pub no_lag: bool,
    #[arg(long, default_value_t = 0.5)]
    pub max_lag: f64,
    #[arg(long, value_enum, default_value = "reconciled")]
    pub convention: ConventionArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Left-hand stream, raw or decoded joints
    #[arg(long)]
    pub left: Option<PathBuf>,
    /// Right-hand stream, raw or decoded joints
    #[arg(long)]
    pub right: Option<PathBuf>,
    /// Calibration for both hands unless overridden
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long)]
    pub left_calibration: Option<PathBuf>,
    #[arg(long)]
    pub right_calibration: Option<PathBuf>,
    #[arg(long)]
    pub metric_config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub jerk_mode: Option<JerkModeArg>,
    /// Marker capture used for the validation block
    #[arg(long, requires = "device_frame")]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub device_frame: Option<PathBuf>,
    #[arg(long)]
    pub reference_frame: Option<PathBuf>,
    #[arg(long, default_value_t = 120.0)]
    pub reference_rate: f64,
    /// Hand the reference capture belongs to; the first given hand by default
    #[arg(long, value_enum)]
    pub reference_hand: Option<HandArg>,
    #[arg(long, value_enum, default_value = "reconciled")]
    pub convention: ConventionArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.json written by `evaluate`
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
    /// Write to this file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use rcm_track::Error;
    match err.downcast_ref::<Error>() {
        Some(Error::Parse { .. }) => 3,
        Some(Error::Alignment(_)) => 4,
        Some(Error::Metric { .. }) => 5,
        Some(Error::Io { .. }) => 6,
        _ => 1,
    }
}

fn main() -> ExitCode {
    // exit quietly when piped into `head` and friends
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(&args),
        Command::Decode(args) => commands::decode(&args),
        Command::Validate(args) => commands::validate(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::Report(args) => commands::report(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
