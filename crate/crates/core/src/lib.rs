//! Event-camera processing toolkit.
//!
//! Event I/O and windowing, frame representations, frame filtering,
//! synthetic trajectories, a contrast-threshold emulator, PnP and the pose
//! and detection metrics. Numeric code is generic over [`Real`]; the aliases
//! below fix the scalar for common use.

pub mod emulator;
pub mod event;
pub mod filter;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod pnp;
mod real;
pub mod repr;

pub use event::{Event, EventStream, EventWindow, SensorGeometry, StreamError};
pub use real::Real;
pub use repr::{EventFrame, Representation};

pub type Vec3f = geometry::Vec3<f32>;
pub type Vec3d = geometry::Vec3<f64>;
pub type Quatf = geometry::Quat<f32>;
pub type Quatd = geometry::Quat<f64>;
pub type Pose32 = geometry::Pose<f32>;
pub type Pose64 = geometry::Pose<f64>;
pub type Intrinsics32 = geometry::CameraIntrinsics<f32>;
pub type Intrinsics64 = geometry::CameraIntrinsics<f64>;
pub type EventFrame32 = repr::EventFrame<f32>;
pub type EventFrame64 = repr::EventFrame<f64>;
pub type PnpOutcome64 = pnp::PnpOutcome<f64>;
pub type Rect64 = metrics::Rect<f64>;
pub type Detection64 = metrics::Detection<f64>;
