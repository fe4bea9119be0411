use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::geometry::Pose;
use crate::Real;

/// `e_r` is in radians. `e_p = e_r + e_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseErrors<T> {
    pub e_t: T,
    pub e_r: T,
    pub e_p: T,
}

pub fn pose_errors<T: Real>(pred: &Pose<T>, gt: &Pose<T>) -> Result<PoseErrors<T>, MetricsError> {
    let gt_norm = gt.t.norm();
    if gt_norm == T::zero() {
        return Err(MetricsError::ZeroTranslation);
    }
    let e_t = (pred.t - gt.t).norm() / gt_norm;
    let dot = pred.q.dot(gt.q).abs().min(T::one());
    let e_r = T::lit(2.0) * dot.acos();
    Ok(PoseErrors {
        e_t,
        e_r,
        e_p: e_r + e_t,
    })
}

/// Mean errors over a set of frames. Rotation is reported in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorSummary {
    pub frames: usize,
    pub e_t_percent: f64,
    pub e_r_deg: f64,
    pub e_p: f64,
}

pub fn summarize_pose_errors<T: Real>(errors: &[PoseErrors<T>]) -> PoseErrorSummary {
    let n = errors.len();
    if n == 0 {
        return PoseErrorSummary {
            frames: 0,
            e_t_percent: 0.0,
            e_r_deg: 0.0,
            e_p: 0.0,
        };
    }
    let mean = |f: &dyn Fn(&PoseErrors<T>) -> f64| errors.iter().map(f).sum::<f64>() / n as f64;
    PoseErrorSummary {
        frames: n,
        e_t_percent: 100.0 * mean(&|e| e.e_t.as_f64()),
        e_r_deg: mean(&|e| e.e_r.as_f64()).to_degrees(),
        e_p: mean(&|e| e.e_p.as_f64()),
    }
}
