//! Pinhole projection and field-of-view checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::linear::Vec3;
use super::pose::Pose;
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point {index} is behind the camera (z = {z})")]
    BehindCamera { index: usize, z: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid object model: {0}")]
    InvalidModel(String),
    #[error("gave up after {tries} attempts: {what}")]
    SamplingExhausted { tries: usize, what: &'static str },
    #[error("trajectory needs at least 2 poses, got {0}")]
    TooFewPoses(usize),
    #[error("invalid depth range [{0}, {1}]")]
    InvalidDepthRange(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        let w = T::lit(self.width as f64);
        let h = T::lit(self.height as f64);
        if !(self.cx >= T::zero() && self.cx < w && self.cy >= T::zero() && self.cy < h) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside the {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// 1280x720 sensor with a 1600 px focal length and centered principal point.
    pub fn hd_default() -> Self {
        CameraIntrinsics {
            fx: T::lit(1600.0),
            fy: T::lit(1600.0),
            cx: T::lit(640.0),
            cy: T::lit(360.0),
            width: 1280,
            height: 720,
        }
    }

    /// Projects a camera-frame point. `None` if `z <= 0`.
    #[inline]
    pub fn project_camera_point(&self, p: Vec3<T>) -> Option<[T; 2]> {
        if p.z <= T::zero() {
            return None;
        }
        Some([self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy])
    }

    #[inline]
    pub fn in_image(&self, uv: [T; 2]) -> bool {
        uv[0] >= T::zero()
            && uv[0] < T::lit(self.width as f64)
            && uv[1] >= T::zero()
            && uv[1] < T::lit(self.height as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoint<T> {
    pub name: String,
    pub position: Vec3<T>,
    /// Extremity used for the field-of-view check.
    pub edge: bool,
}

/// 3D keypoints of the target, body frame, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectModel<T> {
    pub keypoints: Vec<Keypoint<T>>,
}

impl<T: Real> ObjectModel<T> {
    pub fn new(keypoints: Vec<Keypoint<T>>) -> Result<Self, GeometryError> {
        if keypoints.len() < 4 {
            return Err(GeometryError::InvalidModel(format!(
                "need at least 4 keypoints, got {}",
                keypoints.len()
            )));
        }
        if !keypoints.iter().any(|k| k.edge) {
            return Err(GeometryError::InvalidModel(
                "no edge keypoints designated".into(),
            ));
        }
        Ok(ObjectModel { keypoints })
    }

    /// An 11-keypoint spacecraft-like body of roughly 0.6 m scale: the 8
    /// corners of a 0.4 x 0.4 x 0.5 m bus plus two solar-panel tips and an
    /// antenna tip. Every keypoint is an edge keypoint.
    pub fn reference_spacecraft() -> Self {
        let c = |x: f64, y: f64, z: f64| Vec3::new(T::lit(x), T::lit(y), T::lit(z));
        let mut kps = Vec::with_capacity(11);
        for (i, &sx) in [-1.0, 1.0].iter().enumerate() {
            for (j, &sy) in [-1.0, 1.0].iter().enumerate() {
                for (k, &sz) in [-1.0, 1.0].iter().enumerate() {
                    kps.push(Keypoint {
                        name: format!("bus_{i}{j}{k}"),
                        position: c(0.2 * sx, 0.2 * sy, 0.25 * sz),
                        edge: true,
                    });
                }
            }
        }
        kps.push(Keypoint {
            name: "panel_left".into(),
            position: c(-0.6, 0.0, 0.0),
            edge: true,
        });
        kps.push(Keypoint {
            name: "panel_right".into(),
            position: c(0.6, 0.05, 0.0),
            edge: true,
        });
        kps.push(Keypoint {
            name: "antenna".into(),
            position: c(0.0, -0.1, 0.45),
            edge: true,
        });
        ObjectModel { keypoints: kps }
    }

    pub fn points(&self) -> Vec<Vec3<T>> {
        self.keypoints.iter().map(|k| k.position).collect()
    }

    pub fn edge_points(&self) -> impl Iterator<Item = Vec3<T>> + '_ {
        self.keypoints.iter().filter(|k| k.edge).map(|k| k.position)
    }

    /// Largest distance of any keypoint from the body origin.
    pub fn radius(&self) -> T {
        self.keypoints
            .iter()
            .map(|k| k.position.norm())
            .fold(T::zero(), T::max)
    }
}

/// Projects body-frame points: `p_cam = R(q) p + t`, `(u, v) = (fx x/z + cx, fy y/z + cy)`.
pub fn project_points<T: Real>(
    pose: &Pose<T>,
    intrinsics: &CameraIntrinsics<T>,
    points: &[Vec3<T>],
) -> Result<Vec<[T; 2]>, GeometryError> {
    points
        .iter()
        .enumerate()
        .map(|(index, &p)| {
            let pc = pose.transform(p);
            intrinsics
                .project_camera_point(pc)
                .ok_or(GeometryError::BehindCamera {
                    index,
                    z: pc.z.as_f64(),
                })
        })
        .collect()
}

/// True iff every edge keypoint is in front of the camera and lands in
/// `[0, width) x [0, height)`.
pub fn validate_pose_in_fov<T: Real>(
    pose: &Pose<T>,
    intrinsics: &CameraIntrinsics<T>,
    model: &ObjectModel<T>,
) -> bool {
    model.edge_points().all(|p| {
        intrinsics
            .project_camera_point(pose.transform(p))
            .is_some_and(|uv| intrinsics.in_image(uv))
    })
}
