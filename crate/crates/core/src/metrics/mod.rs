//! Pose error, detection, and coverage metrics.

mod detection;
mod pose;

pub use detection::{
    average_precision, detection_eval, iou, match_image, BucketCounts, DetEvalReport, Detection,
    Rect, SizeBucket, AP_RECALL_POINTS, IOU_THRESHOLDS, LARGE_AREA_MIN, SMALL_AREA_MAX,
};
pub use pose::{pose_errors, summarize_pose_errors, PoseErrorSummary, PoseErrors};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pnp::PnpOutcome;

pub const DEFAULT_DETECTION_CONFIDENCE: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("ground-truth translation is zero, relative error undefined")]
    ZeroTranslation,
    #[error("invalid box {0:?}")]
    InvalidBox([f64; 4]),
    #[error("score {0} outside [0, 1]")]
    InvalidScore(f64),
}

/// One frame's outcome for the coverage statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameOutcome {
    /// `None` when no detector ran on the frame.
    pub detection_score: Option<f64>,
    pub pose_converged: bool,
}

impl FrameOutcome {
    pub fn from_pnp<T>(detection_score: Option<f64>, outcome: &PnpOutcome<T>) -> Self {
        FrameOutcome {
            detection_score,
            pose_converged: outcome.is_converged(),
        }
    }

    pub fn passes(&self, detection_threshold: f64) -> bool {
        self.pose_converged && self.detection_score.map_or(true, |s| s >= detection_threshold)
    }
}

/// Percentage of frames with a converged pose and a confident detection.
/// Empty input gives 0.
pub fn data_percent(frames: &[FrameOutcome], detection_threshold: f64) -> f64 {
    if frames.is_empty() {
        return 0.0;
    }
    let ok = frames.iter().filter(|f| f.passes(detection_threshold)).count();
    100.0 * ok as f64 / frames.len() as f64
}
