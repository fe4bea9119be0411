//! `evtk`: batch pipelines over event streams, frames, trajectories, poses
//! and detections.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod det;
mod events;
mod manifest;
mod pose;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use manifest::RunContext;

#[derive(Parser, Debug)]
#[command(name = "evtk", version, about = "Event-camera dataset toolkit")]
struct Cli {
    /// Where to write the run manifest [default: next to the main output]
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert events between text and EVB1
    Convert(ConvertArgs),
    /// Build frame representations over sliding windows
    Frame(FrameArgs),
    /// Score windows and select frames worth keeping
    Filter(FilterArgs),
    /// Generate synthetic pose trajectories
    Trajgen(TrajgenArgs),
    /// Synthesize events from a sequence of intensity frames
    Emulate(EmulateArgs),
    /// Estimate poses from 2D keypoints and a 3D model
    Pnp(PnpArgs),
    /// Compare predicted poses with ground truth
    EvalPose(EvalPoseArgs),
    /// Compute detection AP/AR with size buckets
    EvalDet(EvalDetArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Text,
    Evb1,
}

/// Event input shared by the stream commands.
#[derive(Args, Debug, Serialize)]
pub struct EventInput {
    /// Event file (text or EVB1, detected from the magic bytes)
    #[arg(short, long)]
    pub input: PathBuf,
    /// Sensor width; required for text input, checked against EVB1 headers
    #[arg(long)]
    pub width: Option<u16>,
    /// Sensor height; required for text input, checked against EVB1 headers
    #[arg(long)]
    pub height: Option<u16>,
}

/// Window slicing shared by `frame` and `filter`.
#[derive(Args, Debug, Serialize)]
pub struct WindowArgs {
    /// Window length in microseconds
    #[arg(long, default_value_t = 33_333)]
    pub window_us: u64,
    /// Distance between window starts [default: the window length]
    #[arg(long)]
    pub stride_us: Option<u64>,
    /// First window start [default: first event timestamp]
    #[arg(long)]
    pub origin_us: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
pub struct ConvertArgs {
    #[command(flatten)]
    pub events: EventInput,
    /// Output file
    #[arg(short, long)]
    pub output: PathBuf,
    /// Output format [default: the other format]
    #[arg(long, value_enum)]
    pub to: Option<FormatArg>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReprArg {
    E2f,
    Lnes,
    Ts,
    #[value(name = "3c")]
    #[serde(rename = "3c")]
    ThreeC,
}

#[derive(Args, Debug, Serialize)]
pub struct FrameArgs {
    #[command(flatten)]
    pub events: EventInput,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Representation to build
    #[arg(long, value_enum, default_value = "3c")]
    pub repr: ReprArg,
    /// Time-surface decay in microseconds [default: window/3 for ts, window/9 for 3c]
    #[arg(long)]
    pub decay_us: Option<f64>,
    /// Output directory for frames and index.json
    #[arg(short, long)]
    pub out: PathBuf,
    /// Skip PGM/PPM export and write tensors only
    #[arg(long, default_value_t = false)]
    pub no_images: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMethodArg {
    #[value(name = "mask-kl")]
    MaskKl,
    #[value(name = "bbox", alias = "bbox-ratio")]
    Bbox,
    #[value(name = "count", alias = "min-count")]
    Count,
}

#[derive(Args, Debug, Serialize)]
pub struct FilterArgs {
    #[command(flatten)]
    pub events: EventInput,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Scoring method
    #[arg(long, value_enum)]
    pub method: FilterMethodArg,
    /// Keep threshold [default: 0.5 nats for mask-kl, 0.1 events/px for bbox, 10000 events for count]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// JSON list of {frame, file} binary PGM masks, paths relative to the list
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// JSON list of {frame, bbox: [x, y, w, h]} integer boxes
    #[arg(long)]
    pub bboxes: Option<PathBuf>,
    /// Minimum events on the mask before a mask-kl score can keep a frame
    #[arg(long, default_value_t = evtk::filter::DEFAULT_KL_MIN_MASK_EVENTS)]
    pub min_mask_events: u64,
    /// Output directory for report.json and kept.txt
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct TrajgenArgs {
    /// Number of trajectories
    #[arg(long, default_value_t = 1)]
    pub n_traj: usize,
    /// Poses per trajectory
    #[arg(long, default_value_t = evtk::geometry::trajectory::DEFAULT_POSES_PER_TRAJECTORY)]
    pub poses: usize,
    /// Fraction of trajectories using spline interpolation; the rest are helices
    #[arg(long, default_value_t = evtk::geometry::trajectory::DEFAULT_SPLINE_FRACTION)]
    pub spline_frac: f64,
    /// Nearest depth in meters
    #[arg(long, default_value_t = evtk::geometry::trajectory::DEFAULT_Z_RANGE[0])]
    pub z_min: f64,
    /// Farthest depth in meters
    #[arg(long, default_value_t = evtk::geometry::trajectory::DEFAULT_Z_RANGE[1])]
    pub z_max: f64,
    /// Microseconds between consecutive poses in the labels
    #[arg(long, default_value_t = 33_333)]
    pub frame_interval_us: u64,
    /// Camera intrinsics JSON {fx, fy, cx, cy, width, height} [default: 1280x720, f = 1600 px]
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// Object model JSON {keypoints: [{name, x, y, z, edge?}]} [default: reference spacecraft]
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct EmulateArgs {
    /// Directory holding the PGM frames
    #[arg(long)]
    pub frames: PathBuf,
    /// JSON list of {file, t_us} [default: <frames>/index.json]
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Output event file
    #[arg(short, long)]
    pub output: PathBuf,
    /// Output format
    #[arg(long, value_enum, default_value = "evb1")]
    pub format: FormatArg,
    /// Log-intensity change per event
    #[arg(long, default_value_t = 0.2)]
    pub contrast: f64,
    /// Per-pixel dead time after an event, in microseconds
    #[arg(long, default_value_t = 0)]
    pub refractory_us: u64,
    /// Intensity offset inside the logarithm
    #[arg(long, default_value_t = 1e-3)]
    pub log_eps: f64,
    /// Background noise events per pixel per second
    #[arg(long, default_value_t = 0.0)]
    pub leak_rate_hz: f64,
    /// Random seed for leak noise
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct PnpArgs {
    /// Keypoint JSON: one {frame, t_us?, detection_score?, keypoints: [{name, u, v, conf}]} or a list of them
    #[arg(long)]
    pub keypoints: PathBuf,
    /// Object model JSON {keypoints: [{name, x, y, z, edge?}]}
    #[arg(long)]
    pub model: PathBuf,
    /// Camera intrinsics JSON {fx, fy, cx, cy, width, height} [default: 1280x720, f = 1600 px]
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// Minimum keypoint confidence
    #[arg(long, default_value_t = evtk::pnp::DEFAULT_KEYPOINT_CONFIDENCE)]
    pub conf_threshold: f64,
    /// Minimum detector score for a frame to be attempted
    #[arg(long, default_value_t = evtk::metrics::DEFAULT_DETECTION_CONFIDENCE)]
    pub det_threshold: f64,
    /// Pose-label JSON for frames with a pose
    #[arg(short, long)]
    pub output: PathBuf,
    /// Per-frame status JSON [default: <output stem>.status.json]
    #[arg(long)]
    pub status: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalPoseArgs {
    /// Predicted pose labels
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth pose labels
    #[arg(long)]
    pub gt: PathBuf,
    /// Report JSON
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalDetArgs {
    /// Detections JSON [{image, bbox: [x, y, w, h], score}]
    #[arg(long)]
    pub dets: PathBuf,
    /// Ground truth JSON [{image, bbox: [x, y, w, h]}]
    #[arg(long)]
    pub gts: PathBuf,
    /// Drop detections scoring below this before evaluation
    #[arg(long, default_value_t = 0.0)]
    pub min_score: f64,
    /// Report JSON
    #[arg(short, long)]
    pub output: PathBuf,
}

/// Failure caused by how the tool was invoked rather than by the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("EVS_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("EVS_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(format!("cannot configure {n} worker threads: {e}")))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    let argv: Vec<String> = std::env::args().collect();
    let mut ctx = RunContext::new(argv, cli.manifest.clone());
    match &cli.command {
        Command::Convert(a) => events::convert(a, &mut ctx),
        Command::Frame(a) => events::frame(a, &mut ctx),
        Command::Filter(a) => events::filter(a, &mut ctx),
        Command::Emulate(a) => events::emulate(a, &mut ctx),
        Command::Trajgen(a) => pose::trajgen(a, &mut ctx),
        Command::Pnp(a) => pose::pnp(a, &mut ctx),
        Command::EvalPose(a) => pose::eval_pose(a, &mut ctx),
        Command::EvalDet(a) => det::eval_det(a, &mut ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.downcast_ref::<UsageError>().is_some() {
                eprintln!("error: {e}");
                ExitCode::from(1)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        }
    }
}
