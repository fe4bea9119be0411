//! Pose commands: trajgen, pnp, eval-pose.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use evtk::geometry::{
    generate_trajectory, method_for_index, trajectory_rng, CameraIntrinsics, InterpolationMethod,
    Keypoint, ObjectModel, PoseSamplingConfig, Vec3,
};
use evtk::io::{read_pose_labels, write_pose_labels, PoseLabel};
use evtk::metrics::{
    data_percent, pose_errors, summarize_pose_errors, FrameOutcome, PoseErrorSummary, PoseErrors,
};
use evtk::pnp::{solve_pnp, Correspondence, NoPoseReason, PnpOutcome};

use crate::manifest::{beside, inside, RunContext};
use crate::{usage, EvalPoseArgs, PnpArgs, TrajgenArgs};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IntrinsicsFile {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelPoint {
    name: String,
    x: f64,
    y: f64,
    z: f64,
    #[serde(default = "yes")]
    edge: bool,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    keypoints: Vec<ModelPoint>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, ctx: &mut RunContext) -> anyhow::Result<T> {
    ctx.input(path)?;
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f))
        .with_context(|| format!("cannot parse {}", path.display()))
}

fn load_intrinsics(
    path: Option<&Path>,
    ctx: &mut RunContext,
) -> anyhow::Result<CameraIntrinsics<f64>> {
    let Some(path) = path else {
        return Ok(CameraIntrinsics::hd_default());
    };
    let k: IntrinsicsFile = read_json(path, ctx)?;
    CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy, k.width, k.height)
        .with_context(|| format!("invalid intrinsics in {}", path.display()))
}

fn load_model(path: &Path, ctx: &mut RunContext) -> anyhow::Result<ObjectModel<f64>> {
    let m: ModelFile = read_json(path, ctx)?;
    let mut seen = std::collections::HashSet::new();
    for k in &m.keypoints {
        if !seen.insert(k.name.as_str()) {
            anyhow::bail!("{}: duplicate keypoint name {:?}", path.display(), k.name);
        }
    }
    let keypoints = m
        .keypoints
        .into_iter()
        .map(|k| Keypoint {
            name: k.name,
            position: Vec3::new(k.x, k.y, k.z),
            edge: k.edge,
        })
        .collect();
    ObjectModel::new(keypoints).with_context(|| format!("invalid model in {}", path.display()))
}

fn write_labels(path: &Path, labels: &[PoseLabel]) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    write_pose_labels(labels, BufWriter::new(f))?;
    Ok(())
}

fn read_labels(path: &Path, ctx: &mut RunContext) -> anyhow::Result<Vec<PoseLabel>> {
    ctx.input(path)?;
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_pose_labels(BufReader::new(f)).with_context(|| format!("cannot read {}", path.display()))
}

#[derive(Serialize)]
struct TrajectoryEntry {
    index: usize,
    seed: u64,
    method: InterpolationMethod,
    poses: usize,
    z_range: [f64; 2],
    file: String,
}

pub fn trajgen(a: &TrajgenArgs, ctx: &mut RunContext) -> anyhow::Result<()> {
    if !(a.z_min > 0.0 && a.z_min <= a.z_max && a.z_max.is_finite()) {
        return Err(usage(format!(
            "depth range must satisfy 0 < z-min <= z-max, got [{}, {}]",
            a.z_min, a.z_max
        )));
    }
    if !(0.0..=1.0).contains(&a.spline_frac) {
        return Err(usage(format!(
            "--spline-frac must lie in [0, 1], got {}",
            a.spline_frac
        )));
    }
    if a.poses < 2 {
        return Err(usage(format!(
            "--poses must be at least 2, got {}",
            a.poses
        )));
    }
    let intrinsics = load_intrinsics(a.intrinsics.as_deref(), ctx)?;
    let model = match &a.model {
        Some(p) => load_model(p, ctx)?,
        None => ObjectModel::reference_spacecraft(),
    };
    let config = PoseSamplingConfig::new([a.z_min, a.z_max], intrinsics, model)
        .map_err(|e| usage(e.to_string()))?;
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    ctx.seed(a.seed);

    let trajectories = (0..a.n_traj)
        .into_par_iter()
        .map(|i| {
            let method = method_for_index(i, a.n_traj, a.spline_frac);
            let mut rng = trajectory_rng(a.seed, i as u64);
            generate_trajectory(&config, a.poses, method, &mut rng)
                .with_context(|| format!("trajectory {i}"))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut entries = Vec::with_capacity(trajectories.len());
    for (i, traj) in trajectories.iter().enumerate() {
        let name = format!("traj_{i:04}.json");
        let labels: Vec<PoseLabel> = traj
            .steps()
            .map(|(k, pose)| PoseLabel {
                frame_index: k as u64,
                t_us: k as u64 * a.frame_interval_us,
                pose: *pose,
            })
            .collect();
        let path = a.out.join(&name);
        write_labels(&path, &labels)?;
        ctx.output(&path);
        entries.push(TrajectoryEntry {
            index: i,
            seed: a.seed,
            method: traj.method,
            poses: traj.len(),
            z_range: [a.z_min, a.z_max],
            file: name,
        });
    }
    let index = a.out.join("manifest.json");
    serde_json::to_writer_pretty(BufWriter::new(File::create(&index)?), &entries)?;
    ctx.output(&index);

    let splines = entries
        .iter()
        .filter(|e| e.method == InterpolationMethod::Spline)
        .count();
    println!(
        "{} trajectories x {} poses ({} spline, {} helix) -> {}",
        entries.len(),
        a.poses,
        splines,
        entries.len() - splines,
        a.out.display()
    );
    let default = inside(&a.out);
    ctx.finish("trajgen", a, default)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KeypointObs {
    name: String,
    u: f64,
    v: f64,
    conf: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KeypointFrame {
    frame: u64,
    #[serde(default)]
    t_us: Option<u64>,
    #[serde(default)]
    detection_score: Option<f64>,
    keypoints: Vec<KeypointObs>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum KeypointInput {
    Many(Vec<KeypointFrame>),
    One(KeypointFrame),
}

#[derive(Serialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum FrameStatus {
    Solved,
    NoPose,
    LowDetectionScore,
}

#[derive(Serialize)]
struct FrameReport {
    frame: u64,
    status: FrameStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<NoPoseReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rms_px: Option<f64>,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    used_points: Option<usize>,
}

#[derive(Serialize)]
struct PnpReport {
    frames: usize,
    solved: usize,
    converged: usize,
    data_percent: f64,
    per_frame: Vec<FrameReport>,
}

fn status_path(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "poses".into());
    output.with_file_name(format!("{stem}.status.json"))
}

pub fn pnp(a: &PnpArgs, ctx: &mut RunContext) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&a.conf_threshold) {
        return Err(usage("--conf-threshold must lie in [0, 1]"));
    }
    if !(0.0..=1.0).contains(&a.det_threshold) {
        return Err(usage("--det-threshold must lie in [0, 1]"));
    }
    let intrinsics = load_intrinsics(a.intrinsics.as_deref(), ctx)?;
    let model = load_model(&a.model, ctx)?;
    let frames = match read_json::<KeypointInput>(&a.keypoints, ctx)? {
        KeypointInput::Many(v) => v,
        KeypointInput::One(f) => vec![f],
    };
    let by_name: HashMap<&str, Vec3<f64>> = model
        .keypoints
        .iter()
        .map(|k| (k.name.as_str(), k.position))
        .collect();

    let mut prepared = Vec::with_capacity(frames.len());
    for f in &frames {
        if let Some(s) = f.detection_score {
            if !(0.0..=1.0).contains(&s) {
                anyhow::bail!("frame {}: detection score {s} outside [0, 1]", f.frame);
            }
        }
        let corrs = f
            .keypoints
            .iter()
            .map(|k| {
                let p = by_name.get(k.name.as_str()).with_context(|| {
                    format!(
                        "frame {}: keypoint {:?} is not in the model",
                        f.frame, k.name
                    )
                })?;
                if !(k.u.is_finite() && k.v.is_finite() && k.conf.is_finite()) {
                    anyhow::bail!("frame {}: keypoint {:?} is not finite", f.frame, k.name);
                }
                Ok(Correspondence::new(*p, [k.u, k.v], k.conf))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        prepared.push(corrs);
    }

    let outcomes: Vec<Option<PnpOutcome<f64>>> = frames
        .par_iter()
        .zip(prepared.par_iter())
        .map(|(f, corrs)| {
            let gated = f.detection_score.is_some_and(|s| s < a.det_threshold);
            (!gated).then(|| solve_pnp(corrs, &intrinsics, a.conf_threshold))
        })
        .collect();

    let mut labels = Vec::new();
    let mut per_frame = Vec::with_capacity(frames.len());
    let mut coverage = Vec::with_capacity(frames.len());
    for (f, outcome) in frames.iter().zip(&outcomes) {
        let report = match outcome {
            None => FrameReport {
                frame: f.frame,
                status: FrameStatus::LowDetectionScore,
                reason: None,
                rms_px: None,
                converged: false,
                iterations: None,
                used_points: None,
            },
            Some(PnpOutcome::NoPose(reason)) => FrameReport {
                frame: f.frame,
                status: FrameStatus::NoPose,
                reason: Some(reason.clone()),
                rms_px: None,
                converged: false,
                iterations: None,
                used_points: None,
            },
            Some(PnpOutcome::Solved(r)) => {
                labels.push(PoseLabel {
                    frame_index: f.frame,
                    t_us: f.t_us.unwrap_or(0),
                    pose: r.pose,
                });
                FrameReport {
                    frame: f.frame,
                    status: FrameStatus::Solved,
                    reason: None,
                    rms_px: Some(r.rms_reprojection_error),
                    converged: r.converged,
                    iterations: Some(r.iterations),
                    used_points: Some(r.used_points),
                }
            }
        };
        coverage.push(FrameOutcome {
            detection_score: f.detection_score,
            pose_converged: report.converged,
        });
        per_frame.push(report);
    }

    write_labels(&a.output, &labels)?;
    ctx.output(&a.output);
    let report = PnpReport {
        frames: per_frame.len(),
        solved: labels.len(),
        converged: per_frame.iter().filter(|r| r.converged).count(),
        data_percent: data_percent(&coverage, a.det_threshold),
        per_frame,
    };
    let status = a.status.clone().unwrap_or_else(|| status_path(&a.output));
    serde_json::to_writer_pretty(BufWriter::new(File::create(&status)?), &report)?;
    ctx.output(&status);

    println!(
        "{}",
        crate::table::render(
            &["frames", "solved", "converged", "data %"],
            &[vec![
                report.frames.to_string(),
                report.solved.to_string(),
                report.converged.to_string(),
                format!("{:.2}", report.data_percent),
            ]],
        )
    );
    let default = beside(&a.output);
    ctx.finish("pnp", a, default)
}

#[derive(Serialize)]
struct FrameErrors {
    frame: u64,
    #[serde(flatten)]
    errors: PoseErrors<f64>,
}

#[derive(Serialize)]
struct EvalPoseReport {
    summary: PoseErrorSummary,
    gt_frames: usize,
    pred_frames: usize,
    missing_predictions: usize,
    unmatched_predictions: usize,
    per_frame: Vec<FrameErrors>,
}

pub fn eval_pose(a: &EvalPoseArgs, ctx: &mut RunContext) -> anyhow::Result<()> {
    let pred = read_labels(&a.pred, ctx)?;
    let gt = read_labels(&a.gt, ctx)?;
    let mut pred_by_frame = BTreeMap::new();
    for p in &pred {
        if pred_by_frame.insert(p.frame_index, p).is_some() {
            anyhow::bail!(
                "{}: frame {} appears twice",
                a.pred.display(),
                p.frame_index
            );
        }
    }
    let mut gt_frames = std::collections::BTreeSet::new();
    let mut per_frame = Vec::new();
    let mut missing = 0;
    for g in &gt {
        if !gt_frames.insert(g.frame_index) {
            anyhow::bail!("{}: frame {} appears twice", a.gt.display(), g.frame_index);
        }
        let Some(p) = pred_by_frame.get(&g.frame_index) else {
            missing += 1;
            continue;
        };
        let errors =
            pose_errors(&p.pose, &g.pose).with_context(|| format!("frame {}", g.frame_index))?;
        per_frame.push(FrameErrors {
            frame: g.frame_index,
            errors,
        });
    }
    let unmatched = pred_by_frame
        .keys()
        .filter(|k| !gt_frames.contains(k))
        .count();
    let errs: Vec<PoseErrors<f64>> = per_frame.iter().map(|f| f.errors).collect();
    let summary = summarize_pose_errors(&errs);
    let report = EvalPoseReport {
        summary,
        gt_frames: gt.len(),
        pred_frames: pred.len(),
        missing_predictions: missing,
        unmatched_predictions: unmatched,
        per_frame,
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(&a.output)?), &report)?;
    ctx.output(&a.output);

    println!(
        "{}",
        crate::table::render(
            &["frames", "E_T (%)", "E_R (deg)", "E_P", "missing"],
            &[vec![
                summary.frames.to_string(),
                format!("{:.3}", summary.e_t_percent),
                format!("{:.3}", summary.e_r_deg),
                format!("{:.4}", summary.e_p),
                missing.to_string(),
            ]],
        )
    );
    let default = beside(&a.output);
    ctx.finish("eval-pose", a, default)
}
