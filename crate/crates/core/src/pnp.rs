//! Pose from 2D-3D keypoint correspondences: confidence gating, normalized
//! DLT initialization and damped Gauss-Newton refinement of the
//! reprojection error.

use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, GeometryError, Mat3, Pose, Quat, Vec3};
use crate::linalg::{solve, svd, Matrix};
use crate::Real;

/// Keypoint regression confidence below which a correspondence is ignored.
pub const DEFAULT_KEYPOINT_CONFIDENCE: f64 = 0.5;
/// Fewest correspondences the DLT initialization accepts.
pub const MIN_POINTS: usize = 6;
pub const MAX_ITERATIONS: usize = 50;
pub const STEP_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence<T> {
    pub point3d: Vec3<T>,
    pub point2d: [T; 2],
    pub confidence: T,
}

impl<T: Real> Correspondence<T> {
    pub fn new(point3d: Vec3<T>, point2d: [T; 2], confidence: T) -> Self {
        Correspondence {
            point3d,
            point2d,
            confidence: confidence.max(T::zero()).min(T::one()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpResult<T> {
    pub pose: Pose<T>,
    pub rms_reprojection_error: T,
    pub used_points: usize,
    pub converged: bool,
    pub iterations: usize,
    /// RMS reprojection error after initialization and after each accepted
    /// refinement step.
    pub rms_history: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum NoPoseReason {
    InsufficientKeypoints { available: usize, required: usize },
    Degenerate { detail: String },
}

impl std::fmt::Display for NoPoseReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoPoseReason::InsufficientKeypoints {
                available,
                required,
            } => write!(
                f,
                "insufficient keypoints ({available} above threshold, {required} required)"
            ),
            NoPoseReason::Degenerate { detail } => write!(f, "degenerate configuration: {detail}"),
        }
    }
}

/// Either a pose or the reason none could be produced. A missing pose is a
/// normal outcome that feeds the coverage statistic, not an error.
#[derive(Debug, Clone, PartialEq)]
pub enum PnpOutcome<T> {
    Solved(PnpResult<T>),
    NoPose(NoPoseReason),
}

impl<T> PnpOutcome<T> {
    pub fn solved(&self) -> Option<&PnpResult<T>> {
        match self {
            PnpOutcome::Solved(r) => Some(r),
            PnpOutcome::NoPose(_) => None,
        }
    }

    pub fn is_converged(&self) -> bool {
        self.solved().is_some_and(|r| r.converged)
    }
}

fn degenerate<T>(detail: impl Into<String>) -> PnpOutcome<T> {
    PnpOutcome::NoPose(NoPoseReason::Degenerate {
        detail: detail.into(),
    })
}

/// `d(u, v) / d(δθ, δt)` for the perturbation `q ← exp(δθ) q`, `t ← t + δt`.
///
/// Columns 0..3 are the camera-frame rotation tangent, 3..6 the translation.
pub fn reprojection_jacobian<T: Real>(
    pose: &Pose<T>,
    intrinsics: &CameraIntrinsics<T>,
    point3d: Vec3<T>,
) -> Result<[[T; 6]; 2], GeometryError> {
    let rotated = pose.q.rotate(point3d);
    let pc = rotated + pose.t;
    if pc.z <= T::zero() {
        return Err(GeometryError::BehindCamera {
            index: 0,
            z: pc.z.as_f64(),
        });
    }
    Ok(jacobian_at(intrinsics, rotated, pc))
}

#[inline]
fn jacobian_at<T: Real>(k: &CameraIntrinsics<T>, a: Vec3<T>, pc: Vec3<T>) -> [[T; 6]; 2] {
    let iz = T::one() / pc.z;
    let du = [k.fx * iz, T::zero(), -k.fx * pc.x * iz * iz];
    let dv = [T::zero(), k.fy * iz, -k.fy * pc.y * iz * iz];
    // Columns e_k × a.
    let cols = [
        [T::zero(), -a.z, a.y],
        [a.z, T::zero(), -a.x],
        [-a.y, a.x, T::zero()],
    ];
    let mut j = [[T::zero(); 6]; 2];
    for (row, d) in [du, dv].iter().enumerate() {
        for (c, col) in cols.iter().enumerate() {
            j[row][c] = d[0] * col[0] + d[1] * col[1] + d[2] * col[2];
        }
        j[row][3] = d[0];
        j[row][4] = d[1];
        j[row][5] = d[2];
    }
    j
}

/// Sum of squared pixel residuals; `None` if any point falls behind the camera.
fn cost<T: Real>(pose: &Pose<T>, k: &CameraIntrinsics<T>, corrs: &[Correspondence<T>]) -> Option<T> {
    let mut acc = T::zero();
    for c in corrs {
        let uv = k.project_camera_point(pose.transform(c.point3d))?;
        let du = uv[0] - c.point2d[0];
        let dv = uv[1] - c.point2d[1];
        acc += du * du + dv * dv;
    }
    Some(acc)
}

fn rms<T: Real>(cost: T, n: usize) -> T {
    (cost / T::from_count(n)).sqrt()
}

fn mean_and_scale<T: Real, const D: usize>(pts: &[[T; D]]) -> ([T; D], T) {
    let n = T::from_count(pts.len());
    let mut mean = [T::zero(); D];
    for p in pts {
        for d in 0..D {
            mean[d] += p[d] / n;
        }
    }
    let mut dist = T::zero();
    for p in pts {
        let mut s = T::zero();
        for d in 0..D {
            s += (p[d] - mean[d]) * (p[d] - mean[d]);
        }
        dist += s.sqrt() / n;
    }
    // Scale so the mean distance to the centroid is sqrt(D).
    let scale = dist / T::from_count(D).sqrt();
    (mean, scale)
}

/// Rejects collinear and coplanar 3D configurations, which leave the
/// 12-parameter projection matrix underdetermined.
fn check_spread<T: Real>(pts: &[Vec3<T>]) -> Result<(), String> {
    let arr: Vec<[T; 3]> = pts.iter().map(|p| p.to_array()).collect();
    let (mean, _) = mean_and_scale(&arr);
    let mut m = Matrix::zeros(arr.len(), 3);
    for (i, p) in arr.iter().enumerate() {
        for d in 0..3 {
            m.set(i, d, p[d] - mean[d]);
        }
    }
    let s = svd(&m).singular_values;
    let tol = T::lit(1e-6);
    if s[0] == T::zero() {
        return Err("all 3D points coincide".into());
    }
    if s[1] <= tol * s[0] {
        return Err("3D points are collinear".into());
    }
    if s[2] <= tol * s[0] {
        return Err("3D points are coplanar".into());
    }
    Ok(())
}

fn nearest_rotation<T: Real>(m: &Mat3<T>) -> Option<(Mat3<T>, T)> {
    let mut a = Matrix::zeros(3, 3);
    for r in 0..3 {
        for c in 0..3 {
            a.set(r, c, m[r][c]);
        }
    }
    let s = svd(&a);
    if !(s.singular_values[2] > T::zero()) {
        return None;
    }
    let mut u = [[T::zero(); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            u[r][c] = s.av.at(r, c) / s.singular_values[c];
        }
    }
    let mut rot = [[T::zero(); 3]; 3];
    let compose = |u: &Mat3<T>, rot: &mut Mat3<T>| {
        for r in 0..3 {
            for c in 0..3 {
                rot[r][c] = (0..3).map(|k| u[r][k] * s.v.at(c, k)).sum();
            }
        }
    };
    compose(&u, &mut rot);
    if det3(&rot) < T::zero() {
        for row in u.iter_mut() {
            row[2] = -row[2];
        }
        compose(&u, &mut rot);
    }
    let scale = s.singular_values.iter().copied().sum::<T>() / T::lit(3.0);
    Some((rot, scale))
}

fn det3<T: Real>(m: &Mat3<T>) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Linear pose estimate from normalized image coordinates.
fn dlt<T: Real>(
    corrs: &[Correspondence<T>],
    k: &CameraIntrinsics<T>,
) -> Result<Pose<T>, String> {
    let img: Vec<[T; 2]> = corrs
        .iter()
        .map(|c| [(c.point2d[0] - k.cx) / k.fx, (c.point2d[1] - k.cy) / k.fy])
        .collect();
    let obj: Vec<[T; 3]> = corrs.iter().map(|c| c.point3d.to_array()).collect();
    let (m2, s2) = mean_and_scale(&img);
    let (m3, s3) = mean_and_scale(&obj);
    if !(s2 > T::zero()) {
        return Err("all image points coincide".into());
    }
    let n = corrs.len();
    let mut a = Matrix::zeros(2 * n, 12);
    for i in 0..n {
        let x = (img[i][0] - m2[0]) / s2;
        let y = (img[i][1] - m2[1]) / s2;
        let h = [
            (obj[i][0] - m3[0]) / s3,
            (obj[i][1] - m3[1]) / s3,
            (obj[i][2] - m3[2]) / s3,
            T::one(),
        ];
        for j in 0..4 {
            a.set(2 * i, j, h[j]);
            a.set(2 * i, 8 + j, -x * h[j]);
            a.set(2 * i + 1, 4 + j, h[j]);
            a.set(2 * i + 1, 8 + j, -y * h[j]);
        }
    }
    let s = svd(&a);
    let sv = &s.singular_values;
    if sv[10] <= T::lit(1e-12) * sv[0] {
        return Err("projection matrix is not uniquely determined".into());
    }
    // Normalized P'' as 3x4, then undo both normalizations:
    // P = T2⁻¹ P'' T3 with T3 = [I/s3, -m3/s3; 0, 1], T2⁻¹ = [s2 I, m2; 0, 1].
    let mut pn = [[T::zero(); 4]; 3];
    for r in 0..3 {
        for c in 0..4 {
            pn[r][c] = s.v.at(r * 4 + c, 11);
        }
    }
    let mut pt = [[T::zero(); 4]; 3];
    for r in 0..3 {
        for c in 0..3 {
            pt[r][c] = pn[r][c] / s3;
        }
        pt[r][3] = pn[r][3] - (0..3).map(|c| pn[r][c] * m3[c] / s3).sum::<T>();
    }
    let mut p = [[T::zero(); 4]; 3];
    for c in 0..4 {
        p[0][c] = s2 * pt[0][c] + m2[0] * pt[2][c];
        p[1][c] = s2 * pt[1][c] + m2[1] * pt[2][c];
        p[2][c] = pt[2][c];
    }
    let mut m: Mat3<T> = [[T::zero(); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            m[r][c] = p[r][c];
        }
    }
    let mut sign = T::one();
    if det3(&m) < T::zero() {
        sign = -T::one();
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
    }
    let (rot, scale) = nearest_rotation(&m).ok_or("rank-deficient rotation block")?;
    let t = Vec3::new(p[0][3], p[1][3], p[2][3]).scale(sign / scale);
    Ok(Pose {
        q: Quat::from_matrix(&rot),
        t,
    })
}

/// Estimates the target pose from keypoint correspondences.
///
/// Correspondences with confidence below `conf_threshold` are dropped; fewer
/// than [`MIN_POINTS`] survivors yields [`PnpOutcome::NoPose`]. The pose is
/// initialized by DLT and refined by Gauss-Newton with Levenberg damping on
/// cost increases, renormalizing the quaternion every step.
pub fn solve_pnp<T: Real>(
    corrs: &[Correspondence<T>],
    intrinsics: &CameraIntrinsics<T>,
    conf_threshold: T,
) -> PnpOutcome<T> {
    let used: Vec<Correspondence<T>> = corrs
        .iter()
        .filter(|c| c.confidence >= conf_threshold)
        .copied()
        .collect();
    if used.len() < MIN_POINTS {
        return PnpOutcome::NoPose(NoPoseReason::InsufficientKeypoints {
            available: used.len(),
            required: MIN_POINTS,
        });
    }
    let pts: Vec<Vec3<T>> = used.iter().map(|c| c.point3d).collect();
    if let Err(detail) = check_spread(&pts) {
        return degenerate(detail);
    }
    let linear = dlt(&used, intrinsics);
    // Nearly affine views leave the DLT depth row noise-dominated, so a
    // weak-perspective estimate competes on reprojection cost.
    let best = [linear.clone().ok(), weak_perspective(&used, intrinsics)]
        .into_iter()
        .flatten()
        .filter_map(|p| cost(&p, intrinsics, &used).map(|c| (p, c)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    match (best, linear) {
        (Some((init, init_cost)), _) => refine(init, init_cost, &used, intrinsics),
        (None, Err(detail)) => degenerate(detail),
        (None, Ok(_)) => degenerate("initial estimate places points behind the camera"),
    }
}

/// Scaled-orthographic estimate: fits `x_n ≈ A (X - m) + b` by least squares
/// and reads the first two rotation rows and the depth off `A`.
fn weak_perspective<T: Real>(
    corrs: &[Correspondence<T>],
    k: &CameraIntrinsics<T>,
) -> Option<Pose<T>> {
    let n = T::from_count(corrs.len());
    let mut m = Vec3::zeros();
    for c in corrs {
        m += c.point3d.scale(T::one() / n);
    }
    let mut ata = Matrix::zeros(4, 4);
    let mut atb = [vec![T::zero(); 4], vec![T::zero(); 4]];
    for c in corrs {
        let d = c.point3d - m;
        let row = [d.x, d.y, d.z, T::one()];
        let obs = [(c.point2d[0] - k.cx) / k.fx, (c.point2d[1] - k.cy) / k.fy];
        for i in 0..4 {
            for j in 0..4 {
                let v = ata.at(i, j) + row[i] * row[j];
                ata.set(i, j, v);
            }
            for a in 0..2 {
                atb[a][i] += row[i] * obs[a];
            }
        }
    }
    let r1 = solve(ata.clone(), atb[0].clone())?;
    let r2 = solve(ata, atb[1].clone())?;
    let a1 = Vec3::new(r1[0], r1[1], r1[2]);
    let a2 = Vec3::new(r2[0], r2[1], r2[2]);
    let s = (a1.norm() + a2.norm()) / T::lit(2.0);
    if !(s > T::zero()) {
        return None;
    }
    let z0 = T::one() / s;
    let e1 = a1.normalized();
    let e3 = e1.cross(a2).normalized();
    let e2 = e3.cross(e1);
    let rows = [e1.to_array(), e2.to_array(), e3.to_array()];
    let (rot, _) = nearest_rotation(&rows)?;
    let q = Quat::from_matrix(&rot);
    let centroid_cam = Vec3::new(r1[3] * z0, r2[3] * z0, z0);
    Some(Pose {
        q,
        t: centroid_cam - q.rotate(m),
    })
}

fn refine<T: Real>(
    mut pose: Pose<T>,
    mut current: T,
    corrs: &[Correspondence<T>],
    k: &CameraIntrinsics<T>,
) -> PnpOutcome<T> {
    let n = corrs.len();
    let tol = T::lit(STEP_TOLERANCE).max(T::lit(10.0) * T::epsilon() * (T::one() + pose.t.norm()));
    let mut history = vec![rms(current, n)];
    let mut lambda = T::zero();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS && !converged {
        iterations += 1;
        let mut h = Matrix::zeros(6, 6);
        let mut g = [T::zero(); 6];
        for c in corrs {
            let a = pose.q.rotate(c.point3d);
            let pc = a + pose.t;
            let j = jacobian_at(k, a, pc);
            let uv = k
                .project_camera_point(pc)
                .expect("accepted poses keep points in front");
            let r = [uv[0] - c.point2d[0], uv[1] - c.point2d[1]];
            for row in 0..2 {
                for p in 0..6 {
                    g[p] += j[row][p] * r[row];
                    for q in 0..6 {
                        let v = h.at(p, q) + j[row][p] * j[row][q];
                        h.set(p, q, v);
                    }
                }
            }
        }
        let mut accepted = false;
        for _retry in 0..30 {
            let mut a = h.clone();
            if lambda > T::zero() {
                for d in 0..6 {
                    let v = a.at(d, d);
                    a.set(d, d, v + lambda * (v + T::lit(1e-12)));
                }
            }
            let Some(step) = solve(a, g.iter().map(|&x| -x).collect()) else {
                lambda = if lambda == T::zero() { T::lit(1e-6) } else { lambda * T::lit(10.0) };
                continue;
            };
            let norm = step.iter().map(|&x| x * x).sum::<T>().sqrt();
            if norm < tol {
                converged = true;
                break;
            }
            let dq = Quat::from_rotation_vector(Vec3::new(step[0], step[1], step[2]));
            let cand = Pose {
                q: (dq * pose.q).normalized(),
                t: pose.t + Vec3::new(step[3], step[4], step[5]),
            };
            match cost(&cand, k, corrs) {
                Some(c) if c <= current => {
                    pose = cand;
                    current = c;
                    history.push(rms(c, n));
                    lambda = if lambda < T::lit(1e-9) { T::zero() } else { lambda / T::lit(10.0) };
                    accepted = true;
                    break;
                }
                _ => {
                    lambda = if lambda == T::zero() { T::lit(1e-6) } else { lambda * T::lit(10.0) };
                }
            }
        }
        if !accepted && !converged {
            break;
        }
    }
    PnpOutcome::Solved(PnpResult {
        pose,
        rms_reprojection_error: rms(current, n),
        used_points: n,
        converged,
        iterations,
        rms_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project_points, random_quaternion, ObjectModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k() -> CameraIntrinsics<f64> {
        CameraIntrinsics::hd_default()
    }

    fn synth(pose: &Pose<f64>, pts: &[Vec3<f64>], conf: f64) -> Vec<Correspondence<f64>> {
        let uv = project_points(pose, &k(), pts).unwrap();
        pts.iter()
            .zip(uv)
            .map(|(&p, uv)| Correspondence::new(p, uv, conf))
            .collect()
    }

    fn eight_points() -> Vec<Vec3<f64>> {
        ObjectModel::<f64>::reference_spacecraft().points()[..8].to_vec()
    }

    #[test]
    fn noiseless_round_trip() {
        let pose = Pose::new(Quat::new(0.8, 0.3, -0.4, 0.2), Vec3::new(0.3, -0.2, 6.0));
        let out = solve_pnp(&synth(&pose, &eight_points(), 1.0), &k(), 0.5);
        let r = out.solved().expect("pose");
        assert!(r.converged);
        assert_eq!(r.used_points, 8);
        assert!(r.pose.q.angle_to(pose.q) < 1e-6);
        assert!((r.pose.t - pose.t).norm() / pose.t.norm() < 1e-8);
    }

    #[test]
    fn low_confidence_gated() {
        let pose = Pose::identity_at(Vec3::new(0.0, 0.0, 6.0));
        let out = solve_pnp(&synth(&pose, &eight_points(), 0.3), &k(), 0.5);
        assert_eq!(
            out,
            PnpOutcome::NoPose(NoPoseReason::InsufficientKeypoints {
                available: 0,
                required: 6
            })
        );
        assert!(out.to_string_reason().contains("insufficient keypoints"));
    }

    #[test]
    fn five_points_insufficient() {
        let pose = Pose::identity_at(Vec3::new(0.0, 0.0, 6.0));
        let out = solve_pnp(&synth(&pose, &eight_points()[..5], 1.0), &k(), 0.5);
        assert!(matches!(
            out,
            PnpOutcome::NoPose(NoPoseReason::InsufficientKeypoints { available: 5, .. })
        ));
    }

    #[test]
    fn coplanar_and_collinear_rejected() {
        let pose = Pose::identity_at(Vec3::new(0.0, 0.0, 6.0));
        let planar: Vec<_> = (0..8)
            .map(|i| Vec3::new((i % 3) as f64 * 0.1, (i / 3) as f64 * 0.1, 0.0))
            .collect();
        assert!(matches!(
            solve_pnp(&synth(&pose, &planar, 1.0), &k(), 0.5),
            PnpOutcome::NoPose(NoPoseReason::Degenerate { .. })
        ));
        let line: Vec<_> = (0..8).map(|i| Vec3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        assert!(matches!(
            solve_pnp(&synth(&pose, &line, 1.0), &k(), 0.5),
            PnpOutcome::NoPose(NoPoseReason::Degenerate { .. })
        ));
    }

    #[test]
    fn on_axis_translation_columns() {
        let pose = Pose::identity_at(Vec3::new(0.0, 0.0, 5.0));
        let j = reprojection_jacobian(&pose, &k(), Vec3::zeros()).unwrap();
        assert_eq!(j[0][3], 1600.0 / 5.0);
        assert_eq!(j[1][4], 1600.0 / 5.0);
        assert_eq!(j[0][4], 0.0);
        assert_eq!(j[0][5], 0.0);
        // A point on the optical axis through the body origin does not move
        // under rotations about that origin.
        for c in 0..3 {
            assert_eq!(j[0][c], 0.0);
            assert_eq!(j[1][c], 0.0);
        }
    }

    #[test]
    fn jacobian_behind_camera() {
        let pose = Pose::identity_at(Vec3::new(0.0, 0.0, -1.0));
        assert!(reprojection_jacobian(&pose, &k(), Vec3::zeros()).is_err());
    }

    #[test]
    fn refinement_monotone_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = ObjectModel::<f64>::reference_spacecraft().points();
        for _ in 0..50 {
            let pose = Pose {
                q: random_quaternion(&mut rng),
                t: Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(4.0..10.0)),
            };
            let mut c = synth(&pose, &pts, 1.0);
            for x in c.iter_mut() {
                x.point2d[0] += rng.gen_range(-2.0..2.0);
                x.point2d[1] += rng.gen_range(-2.0..2.0);
            }
            let r = solve_pnp(&c, &k(), 0.5);
            let r = r.solved().unwrap();
            assert!(r.rms_history.windows(2).all(|w| w[1] <= w[0]), "{:?}", r.rms_history);
        }
    }

    impl<T> PnpOutcome<T> {
        fn to_string_reason(&self) -> String {
            match self {
                PnpOutcome::NoPose(r) => r.to_string(),
                PnpOutcome::Solved(_) => String::new(),
            }
        }
    }
}
