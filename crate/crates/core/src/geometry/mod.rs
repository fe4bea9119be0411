//! Pose algebra, pinhole projection and synthetic trajectory generation.

mod camera;
mod linear;
mod pose;
pub mod trajectory;

pub use camera::{
    project_points, validate_pose_in_fov, CameraIntrinsics, GeometryError, Keypoint, ObjectModel,
};
pub use linear::{mat3_mul_vec, slerp, Mat3, Quat, Vec3};
pub use pose::Pose;
pub use trajectory::{
    generate_trajectory, interpolate_trajectory, method_for_index, random_quaternion, sample_pose,
    sample_pose_pair, trajectory_rng,
    InterpolationMethod, PoseSamplingConfig, Trajectory,
};
