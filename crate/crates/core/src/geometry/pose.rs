use serde::{Deserialize, Serialize};

use super::linear::{Quat, Vec3};
use crate::Real;

/// Target pose in the camera frame: `p_cam = q.rotate(p_body) + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose<T> {
    pub q: Quat<T>,
    pub t: Vec3<T>,
}

impl<T: Real> Pose<T> {
    /// Builds a pose, renormalizing the quaternion.
    pub fn new(q: Quat<T>, t: Vec3<T>) -> Self {
        Pose {
            q: q.normalized(),
            t,
        }
    }

    pub fn identity_at(t: Vec3<T>) -> Self {
        Pose {
            q: Quat::identity(),
            t,
        }
    }

    #[inline]
    pub fn transform(&self, p: Vec3<T>) -> Vec3<T> {
        self.q.rotate(p) + self.t
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        let c = |v: T| U::lit(v.as_f64());
        Pose {
            q: Quat::new(c(self.q.w), c(self.q.x), c(self.q.y), c(self.q.z)),
            t: Vec3::new(c(self.t.x), c(self.t.y), c(self.t.z)),
        }
    }
}
