//! Small fixed-size vector and quaternion types.
//!
//! Quaternions are stored `(w, x, y, z)` and act as active rotations: a
//! body-frame point `p` maps to `q * p * q⁻¹` in the camera frame.

use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub const fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    pub fn zeros() -> Self {
        Vec3::new(T::zero(), T::zero(), T::zero())
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    #[inline]
    pub fn scale(self, s: T) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(self) -> Self {
        self.scale(T::one() / self.norm())
    }

    pub fn lerp(self, o: Self, s: T) -> Self {
        self + (o - self).scale(s)
    }

    /// A unit vector orthogonal to `self` (which must be non-zero).
    pub fn any_orthogonal(self) -> Self {
        let (ax, ay, az) = (self.x.abs(), self.y.abs(), self.z.abs());
        let helper = if ax <= ay && ax <= az {
            Vec3::new(T::one(), T::zero(), T::zero())
        } else if ay <= az {
            Vec3::new(T::zero(), T::one(), T::zero())
        } else {
            Vec3::new(T::zero(), T::zero(), T::one())
        };
        self.cross(helper).normalized()
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// Row-major 3x3 matrix.
pub type Mat3<T> = [[T; 3]; 3];

pub fn mat3_mul_vec<T: Real>(m: &Mat3<T>, v: Vec3<T>) -> Vec3<T> {
    Vec3::new(
        m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
        m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
        m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Default for Quat<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Quat<T> {
    #[inline]
    pub const fn new(w: T, x: T, y: T, z: T) -> Self {
        Quat { w, x, y, z }
    }

    pub fn identity() -> Self {
        Quat::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    /// `[w, x, y, z]`.
    pub fn from_array(a: [T; 4]) -> Self {
        Quat::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [T; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_axis_angle(axis: Vec3<T>, angle: T) -> Self {
        let half = angle / T::lit(2.0);
        let a = axis.normalized().scale(half.sin());
        Quat::new(half.cos(), a.x, a.y, a.z)
    }

    /// Exponential map of a rotation vector (axis * angle).
    pub fn from_rotation_vector(v: Vec3<T>) -> Self {
        let theta = v.norm();
        let half = theta / T::lit(2.0);
        // sin(θ/2)/θ with a series fallback near zero.
        let k = if theta < T::lit(1e-8) {
            T::lit(0.5) - theta * theta / T::lit(48.0)
        } else {
            half.sin() / theta
        };
        Quat::new(half.cos(), v.x * k, v.y * k, v.z * k)
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Quat::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(self) -> Self {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    fn vector(self) -> Vec3<T> {
        Vec3::new(self.x, self.y, self.z)
    }

    /// Rotates a vector: `q v q⁻¹` for unit `q`.
    #[inline]
    pub fn rotate(self, v: Vec3<T>) -> Vec3<T> {
        let u = self.vector();
        let two = T::lit(2.0);
        let t = u.cross(v).scale(two);
        v + t.scale(self.w) + u.cross(t)
    }

    pub fn to_matrix(self) -> Mat3<T> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let one = T::one();
        let two = T::lit(2.0);
        [
            [
                one - two * (y * y + z * z),
                two * (x * y - w * z),
                two * (x * z + w * y),
            ],
            [
                two * (x * y + w * z),
                one - two * (x * x + z * z),
                two * (y * z - w * x),
            ],
            [
                two * (x * z - w * y),
                two * (y * z + w * x),
                one - two * (x * x + y * y),
            ],
        ]
    }

    /// Quaternion of a proper rotation matrix (Shepperd's branch selection).
    pub fn from_matrix(m: &Mat3<T>) -> Self {
        let one = T::one();
        let quarter = T::lit(0.25);
        let two = T::lit(2.0);
        let trace = m[0][0] + m[1][1] + m[2][2];
        let q = if trace > m[0][0] && trace > m[1][1] && trace > m[2][2] {
            let s = (one + trace).sqrt() * two;
            Quat::new(
                quarter * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (one + m[0][0] - m[1][1] - m[2][2]).sqrt() * two;
            Quat::new(
                (m[2][1] - m[1][2]) / s,
                quarter * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (one + m[1][1] - m[0][0] - m[2][2]).sqrt() * two;
            Quat::new(
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                quarter * s,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = (one + m[2][2] - m[0][0] - m[1][1]).sqrt() * two;
            Quat::new(
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                quarter * s,
            )
        };
        let q = q.normalized();
        if q.w < T::zero() {
            -q
        } else {
            q
        }
    }

    /// Geodesic angle between the rotations of two unit quaternions, in
    /// `[0, π]`, computed without `acos` so it stays accurate near zero.
    pub fn angle_to(self, o: Self) -> T {
        let o = if self.dot(o) < T::zero() { -o } else { o };
        let diff = Quat::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z).norm();
        let sum = Quat::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z).norm();
        T::lit(4.0) * diff.atan2(sum)
    }
}

impl<T: Real> Mul for Quat<T> {
    type Output = Self;
    #[inline]
    fn mul(self, b: Self) -> Self {
        let a = self;
        Quat::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

impl<T: Real> Neg for Quat<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Quat::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Spherical linear interpolation along the shorter arc.
///
/// Returns `q1` at `s = 0` and `q2` (possibly negated) at `s = 1`. The result
/// is renormalized.
pub fn slerp<T: Real>(q1: Quat<T>, q2: Quat<T>, s: T) -> Quat<T> {
    let q2 = if q1.dot(q2) < T::zero() { -q2 } else { q2 };
    let diff = Quat::new(q2.w - q1.w, q2.x - q1.x, q2.y - q1.y, q2.z - q1.z).norm();
    let sum = Quat::new(q2.w + q1.w, q2.x + q1.x, q2.y + q1.y, q2.z + q1.z).norm();
    // Half of the rotation angle between q1 and q2.
    let omega = T::lit(2.0) * diff.atan2(sum);
    let (a, b) = if omega < T::lit(1e-12) {
        (T::one() - s, s)
    } else {
        let sin_omega = omega.sin();
        (
            ((T::one() - s) * omega).sin() / sin_omega,
            (s * omega).sin() / sin_omega,
        )
    };
    Quat::new(
        a * q1.w + b * q2.w,
        a * q1.x + b * q2.x,
        a * q1.y + b * q2.y,
        a * q1.z + b * q2.z,
    )
    .normalized()
}
