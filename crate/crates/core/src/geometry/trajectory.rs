//! Synthetic trajectory generation: start/end pose sampling, spline or helix
//! interpolation, and per-pose field-of-view validation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::camera::{validate_pose_in_fov, CameraIntrinsics, GeometryError, ObjectModel};
use super::linear::{slerp, Quat, Vec3};
use super::pose::Pose;
use crate::Real;

pub const DEFAULT_POSES_PER_TRAJECTORY: usize = 598;
pub const DEFAULT_SPLINE_FRACTION: f64 = 0.8;
pub const DEFAULT_Z_RANGE: [f64; 2] = [3.5, 12.0];
pub const MAX_POSE_TRIES: usize = 10_000;
pub const MAX_INTERPOLATION_ATTEMPTS: usize = 100;
/// Helix radius cap relative to the start-end chord length.
pub const HELIX_MAX_RADIUS_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpolationMethod {
    Spline,
    Helix,
}

impl std::fmt::Display for InterpolationMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InterpolationMethod::Spline => "spline",
            InterpolationMethod::Helix => "helix",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub method: InterpolationMethod,
    pub poses: Vec<Pose<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// `(step index, pose)` pairs.
    pub fn steps(&self) -> impl Iterator<Item = (usize, &Pose<T>)> {
        self.poses.iter().enumerate()
    }
}

#[derive(Debug, Clone)]
pub struct PoseSamplingConfig<T> {
    pub z_range: [T; 2],
    pub intrinsics: CameraIntrinsics<T>,
    pub model: ObjectModel<T>,
}

impl<T: Real> PoseSamplingConfig<T> {
    pub fn new(
        z_range: [T; 2],
        intrinsics: CameraIntrinsics<T>,
        model: ObjectModel<T>,
    ) -> Result<Self, GeometryError> {
        intrinsics.validate()?;
        if !(z_range[0] > T::zero() && z_range[0] <= z_range[1]) {
            return Err(GeometryError::InvalidDepthRange(
                z_range[0].as_f64(),
                z_range[1].as_f64(),
            ));
        }
        Ok(PoseSamplingConfig {
            z_range,
            intrinsics,
            model,
        })
    }

    /// 3.5–12 m depth range, 1280x720 camera, reference spacecraft model.
    pub fn reference() -> Self {
        PoseSamplingConfig {
            z_range: [T::lit(DEFAULT_Z_RANGE[0]), T::lit(DEFAULT_Z_RANGE[1])],
            intrinsics: CameraIntrinsics::hd_default(),
            model: ObjectModel::reference_spacecraft(),
        }
    }

    /// The `[x_min, x_max) x [y_min, y_max)` box keeping the body origin
    /// inside the image at depth `z`.
    pub fn fov_box(&self, z: T) -> [[T; 2]; 2] {
        let k = &self.intrinsics;
        let w = T::lit(k.width as f64);
        let h = T::lit(k.height as f64);
        [
            [-k.cx * z / k.fx, (w - k.cx) * z / k.fx],
            [-k.cy * z / k.fy, (h - k.cy) * z / k.fy],
        ]
    }
}

#[inline]
fn uniform<T: Real, R: Rng + ?Sized>(rng: &mut R, lo: T, hi: T) -> T {
    let u: f64 = rng.gen();
    lo + (hi - lo) * T::lit(u)
}

/// Haar-uniform random rotation (Shoemake's subgroup algorithm).
pub fn random_quaternion<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Quat<T> {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    let u3: f64 = rng.gen();
    let tau = std::f64::consts::TAU;
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    Quat::new(
        T::lit(b * (tau * u3).cos()),
        T::lit(a * (tau * u2).sin()),
        T::lit(a * (tau * u2).cos()),
        T::lit(b * (tau * u3).sin()),
    )
    .normalized()
}

/// One pose with uniform rotation, uniform depth and the body origin inside
/// the frustum, retried until every edge keypoint is in view.
pub fn sample_pose<T: Real, R: Rng + ?Sized>(
    config: &PoseSamplingConfig<T>,
    rng: &mut R,
) -> Result<Pose<T>, GeometryError> {
    for _ in 0..MAX_POSE_TRIES {
        let q = random_quaternion(rng);
        let z = if config.z_range[0] == config.z_range[1] {
            config.z_range[0]
        } else {
            uniform(rng, config.z_range[0], config.z_range[1])
        };
        let [bx, by] = config.fov_box(z);
        let x = uniform(rng, bx[0], bx[1]);
        let y = uniform(rng, by[0], by[1]);
        let pose = Pose {
            q,
            t: Vec3::new(x, y, z),
        };
        if validate_pose_in_fov(&pose, &config.intrinsics, &config.model) {
            return Ok(pose);
        }
    }
    Err(GeometryError::SamplingExhausted {
        tries: MAX_POSE_TRIES,
        what: "pose inside the field of view",
    })
}

/// Start and end poses of a trajectory.
pub fn sample_pose_pair<T: Real, R: Rng + ?Sized>(
    config: &PoseSamplingConfig<T>,
    rng: &mut R,
) -> Result<(Pose<T>, Pose<T>), GeometryError> {
    let a = sample_pose(config, rng)?;
    let b = sample_pose(config, rng)?;
    Ok((a, b))
}

/// Uniform Catmull-Rom through `pts`, with reflected phantom end points.
/// `s` runs over `[0, 1]` across all segments.
fn catmull_rom<T: Real>(pts: &[Vec3<T>], s: T) -> Vec3<T> {
    let segments = pts.len() - 1;
    let two = T::lit(2.0);
    let scaled = s * T::from_count(segments);
    let seg = scaled.floor().to_usize().unwrap_or(0).min(segments - 1);
    let u = scaled - T::from_count(seg);
    let p1 = pts[seg];
    let p2 = pts[seg + 1];
    let p0 = if seg == 0 {
        p1.scale(two) - p2
    } else {
        pts[seg - 1]
    };
    let p3 = if seg + 2 < pts.len() {
        pts[seg + 2]
    } else {
        p2.scale(two) - p1
    };
    let u2 = u * u;
    let u3 = u2 * u;
    let half = T::lit(0.5);
    (p1.scale(two)
        + (p2 - p0).scale(u)
        + (p0.scale(two) - p1.scale(T::lit(5.0)) + p2.scale(T::lit(4.0)) - p3).scale(u2)
        + (p1.scale(T::lit(3.0)) - p0 - p2.scale(T::lit(3.0)) + p3).scale(u3))
    .scale(half)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HelixShape<T> {
    pub radius: T,
    pub turns: u32,
}

/// Translation along a helix wound around the chord `a -> b`. The circular
/// offset vanishes at both ends for integer turn counts.
pub fn helix_point<T: Real>(a: Vec3<T>, b: Vec3<T>, shape: HelixShape<T>, s: T) -> Vec3<T> {
    let chord = b - a;
    let base = a + chord.scale(s);
    if shape.radius == T::zero() || chord.norm() == T::zero() {
        return base;
    }
    let axis = chord.normalized();
    let e1 = axis.any_orthogonal();
    let e2 = axis.cross(e1);
    let theta = T::TAU() * T::lit(shape.turns as f64) * s;
    base + e1.scale(shape.radius * (theta.cos() - T::one())) + e2.scale(shape.radius * theta.sin())
}

fn sample_control_point<T: Real, R: Rng + ?Sized>(
    config: &PoseSamplingConfig<T>,
    z_lo: T,
    z_hi: T,
    rng: &mut R,
) -> Vec3<T> {
    let z = uniform(rng, z_lo, z_hi);
    let [bx, by] = config.fov_box(z);
    // Inner half of the box; the curve can overshoot its control points.
    let shrink = |r: [T; 2]| {
        let c = (r[0] + r[1]) * T::lit(0.5);
        let h = (r[1] - r[0]) * T::lit(0.25);
        [c - h, c + h]
    };
    let bx = shrink(bx);
    let by = shrink(by);
    Vec3::new(uniform(rng, bx[0], bx[1]), uniform(rng, by[0], by[1]), z)
}

fn build_once<T: Real, R: Rng + ?Sized>(
    start: &Pose<T>,
    end: &Pose<T>,
    n: usize,
    method: InterpolationMethod,
    config: &PoseSamplingConfig<T>,
    rng: &mut R,
) -> Vec<Pose<T>> {
    let translation: Box<dyn Fn(T) -> Vec3<T>> = match method {
        InterpolationMethod::Spline => {
            let z_lo = start.t.z.min(end.t.z);
            let z_hi = start.t.z.max(end.t.z);
            let c1 = sample_control_point(config, z_lo, z_hi, rng);
            let c2 = sample_control_point(config, z_lo, z_hi, rng);
            let pts = [start.t, c1, c2, end.t];
            Box::new(move |s| catmull_rom(&pts, s))
        }
        InterpolationMethod::Helix => {
            let chord = (end.t - start.t).norm();
            let shape = HelixShape {
                radius: uniform(rng, T::zero(), chord * T::lit(HELIX_MAX_RADIUS_FRACTION)),
                turns: rng.gen_range(1..=3),
            };
            let (a, b) = (start.t, end.t);
            Box::new(move |s| helix_point(a, b, shape, s))
        }
    };
    let last = n - 1;
    (0..n)
        .map(|i| {
            if i == 0 {
                *start
            } else if i == last {
                *end
            } else {
                let s = T::from_count(i) / T::from_count(last);
                Pose {
                    q: slerp(start.q, end.q, s),
                    t: translation(s),
                }
            }
        })
        .collect()
}

/// Interpolates `n` poses from `start` to `end` (both included exactly).
///
/// Rotations follow slerp on a uniform grid. Translations follow a
/// Catmull-Rom spline through two random interior control points, or a helix
/// around the chord. A candidate with any pose outside the field of view is
/// discarded and resampled, up to [`MAX_INTERPOLATION_ATTEMPTS`] times.
pub fn interpolate_trajectory<T: Real, R: Rng + ?Sized>(
    start: &Pose<T>,
    end: &Pose<T>,
    n: usize,
    method: InterpolationMethod,
    config: &PoseSamplingConfig<T>,
    rng: &mut R,
) -> Result<Trajectory<T>, GeometryError> {
    if n < 2 {
        return Err(GeometryError::TooFewPoses(n));
    }
    if start == end {
        return Ok(Trajectory {
            method,
            poses: vec![*start; n],
        });
    }
    for _ in 0..MAX_INTERPOLATION_ATTEMPTS {
        let poses = build_once(start, end, n, method, config, rng);
        if poses
            .iter()
            .all(|p| validate_pose_in_fov(p, &config.intrinsics, &config.model))
        {
            return Ok(Trajectory { method, poses });
        }
    }
    Err(GeometryError::SamplingExhausted {
        tries: MAX_INTERPOLATION_ATTEMPTS,
        what: "trajectory inside the field of view",
    })
}

/// Samples endpoints and interpolates, drawing a fresh endpoint pair when
/// interpolation keeps failing.
pub fn generate_trajectory<T: Real, R: Rng + ?Sized>(
    config: &PoseSamplingConfig<T>,
    n: usize,
    method: InterpolationMethod,
    rng: &mut R,
) -> Result<Trajectory<T>, GeometryError> {
    let mut last_err = None;
    for _ in 0..MAX_INTERPOLATION_ATTEMPTS {
        let (a, b) = sample_pose_pair(config, rng)?;
        match interpolate_trajectory(&a, &b, n, method, config, rng) {
            Ok(t) => return Ok(t),
            Err(e @ GeometryError::SamplingExhausted { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or(GeometryError::SamplingExhausted {
        tries: MAX_INTERPOLATION_ATTEMPTS,
        what: "trajectory endpoints",
    }))
}

/// Independent random stream for trajectory `index` under a run seed, so
/// each trajectory is reproducible on its own and parallel generation is
/// order-independent.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Method of trajectory `index` out of `count`: the first
/// `round(spline_fraction * count)` are splines, the rest helices.
pub fn method_for_index(index: usize, count: usize, spline_fraction: f64) -> InterpolationMethod {
    let splines = (spline_fraction.clamp(0.0, 1.0) * count as f64).round() as usize;
    if index < splines {
        InterpolationMethod::Spline
    } else {
        InterpolationMethod::Helix
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> PoseSamplingConfig<f64> {
        PoseSamplingConfig::reference()
    }

    #[test]
    fn collapsed_depth_range() {
        let mut c = cfg();
        c.z_range = [5.0, 5.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (a, b) = sample_pose_pair(&c, &mut rng).unwrap();
            assert_eq!(a.t.z, 5.0);
            assert_eq!(b.t.z, 5.0);
        }
    }

    #[test]
    fn sampled_depths_in_range() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for _ in 0..10_000 {
            let p = sample_pose(&c, &mut rng).unwrap();
            lo = lo.min(p.t.z);
            hi = hi.max(p.t.z);
            assert!((p.q.norm() - 1.0).abs() < 1e-9);
        }
        assert!(lo >= 3.5 && hi <= 12.0, "{lo} {hi}");
    }

    #[test]
    fn random_rotations_average_to_zero_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut acc = [[0.0f64; 3]; 3];
        let n = 10_000;
        for _ in 0..n {
            let m = random_quaternion::<f64, _>(&mut rng).to_matrix();
            for i in 0..3 {
                for j in 0..3 {
                    acc[i][j] += m[i][j] / n as f64;
                }
            }
        }
        for row in acc {
            for v in row {
                assert!(v.abs() < 0.05, "{acc:?}");
            }
        }
    }

    #[test]
    fn unreachable_fov_exhausts() {
        let mut c = cfg();
        c.z_range = [0.05, 0.05];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(matches!(
            sample_pose(&c, &mut rng),
            Err(GeometryError::SamplingExhausted { .. })
        ));
    }

    #[test]
    fn identical_endpoints_give_constant_trajectory() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = sample_pose(&c, &mut rng).unwrap();
        for m in [InterpolationMethod::Spline, InterpolationMethod::Helix] {
            let t = interpolate_trajectory(&p, &p, 20, m, &c, &mut rng).unwrap();
            assert_eq!(t.len(), 20);
            assert!(t.poses.iter().all(|q| *q == p));
        }
    }

    #[test]
    fn zero_radius_helix_is_straight() {
        let a = Vec3::new(0.1, -0.2, 5.0);
        let b = Vec3::new(-0.3, 0.4, 8.0);
        let shape = HelixShape {
            radius: 0.0,
            turns: 2,
        };
        for i in 0..=10 {
            let s = i as f64 / 10.0;
            let p = helix_point(a, b, shape, s);
            assert!((p - a.lerp(b, s)).norm() < 1e-15);
        }
    }

    #[test]
    fn helix_offset_bounded_and_closes() {
        let a = Vec3::new(0.0, 0.0, 5.0);
        let b = Vec3::new(0.0, 0.0, 9.0);
        let shape = HelixShape {
            radius: 0.5,
            turns: 3,
        };
        for i in 0..=100 {
            let s = i as f64 / 100.0;
            let off = helix_point(a, b, shape, s) - a.lerp(b, s);
            assert!(off.norm() <= 2.0 * 0.5 + 1e-12);
            assert!(off.dot(b - a).abs() < 1e-12);
        }
        assert!((helix_point(a, b, shape, 1.0) - b).norm() < 1e-12);
    }

    #[test]
    fn catmull_rom_passes_through_controls() {
        let pts = [
            Vec3::new(0.0, 0.0, 4.0),
            Vec3::new(1.0, 0.5, 5.0),
            Vec3::new(-1.0, 0.2, 6.0),
            Vec3::new(0.3, 0.3, 7.0),
        ];
        for (i, p) in pts.iter().enumerate() {
            let s = i as f64 / 3.0;
            assert!((catmull_rom(&pts, s) - *p).norm() < 1e-12);
        }
    }

    #[test]
    fn default_trajectory_contract() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for m in [InterpolationMethod::Spline, InterpolationMethod::Helix] {
            let t = generate_trajectory(&c, DEFAULT_POSES_PER_TRAJECTORY, m, &mut rng).unwrap();
            assert_eq!(t.len(), 598);
            assert!(t
                .poses
                .iter()
                .all(|p| validate_pose_in_fov(p, &c.intrinsics, &c.model)));
            assert!(t.poses.iter().all(|p| (p.q.norm() - 1.0).abs() < 1e-9));
        }
    }

    #[test]
    fn too_few_poses_rejected() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = sample_pose(&c, &mut rng).unwrap();
        assert!(matches!(
            interpolate_trajectory(&p, &p, 1, InterpolationMethod::Spline, &c, &mut rng),
            Err(GeometryError::TooFewPoses(1))
        ));
    }

    #[test]
    fn method_split() {
        let methods: Vec<_> = (0..10).map(|i| method_for_index(i, 10, 0.8)).collect();
        assert_eq!(
            methods.iter().filter(|m| **m == InterpolationMethod::Spline).count(),
            8
        );
        assert_eq!(methods[9], InterpolationMethod::Helix);
    }
}
