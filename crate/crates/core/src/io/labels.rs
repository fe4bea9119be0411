use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::geometry::{Pose, Quat, Vec3};

/// Ground-truth pose of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseLabel {
    pub frame_index: u64,
    pub t_us: u64,
    pub pose: Pose<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRecord {
    frame: u64,
    t_us: u64,
    q: [f64; 4],
    t_m: [f64; 3],
}

const UNIT_TOLERANCE: f64 = 1e-6;
const REJECT_TOLERANCE: f64 = 1e-3;

impl TryFrom<LabelRecord> for PoseLabel {
    type Error = IoError;

    fn try_from(r: LabelRecord) -> Result<Self, IoError> {
        let q = Quat::from_array(r.q);
        let n = q.norm();
        if !n.is_finite() || (n - 1.0).abs() > REJECT_TOLERANCE {
            return Err(IoError::Invalid(format!(
                "frame {}: quaternion norm {n} is not 1",
                r.frame
            )));
        }
        // Nearly-unit quaternions are stored verbatim so round trips are exact.
        let q = if (n - 1.0).abs() > UNIT_TOLERANCE {
            q.normalized()
        } else {
            q
        };
        Ok(PoseLabel {
            frame_index: r.frame,
            t_us: r.t_us,
            pose: Pose {
                q,
                t: Vec3::from_array(r.t_m),
            },
        })
    }
}

impl From<&PoseLabel> for LabelRecord {
    fn from(l: &PoseLabel) -> Self {
        LabelRecord {
            frame: l.frame_index,
            t_us: l.t_us,
            q: l.pose.q.to_array(),
            t_m: l.pose.t.to_array(),
        }
    }
}

/// Reads a JSON array of `{frame, t_us, q: [w,x,y,z], t_m: [x,y,z]}`.
pub fn read_pose_labels<R: Read>(reader: R) -> Result<Vec<PoseLabel>, IoError> {
    let records: Vec<LabelRecord> = serde_json::from_reader(reader)?;
    records.into_iter().map(PoseLabel::try_from).collect()
}

pub fn write_pose_labels<W: Write>(labels: &[PoseLabel], writer: W) -> Result<(), IoError> {
    let records: Vec<LabelRecord> = labels.iter().map(LabelRecord::from).collect();
    serde_json::to_writer_pretty(writer, &records)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_identity_label() {
        let s = r#"[{"frame":0,"t_us":0,"q":[1,0,0,0],"t_m":[0,0,5.0]}]"#;
        let l = read_pose_labels(s.as_bytes()).unwrap();
        assert_eq!(l.len(), 1);
        assert_eq!(l[0].pose.q, Quat::identity());
        assert_eq!(l[0].pose.t, Vec3::new(0.0, 0.0, 5.0));
    }

    #[test]
    fn half_norm_quaternion_rejected() {
        let s = r#"[{"frame":0,"t_us":0,"q":[0.5,0,0,0],"t_m":[0,0,5.0]}]"#;
        assert!(matches!(
            read_pose_labels(s.as_bytes()),
            Err(IoError::Invalid(_))
        ));
    }

    #[test]
    fn missing_key_rejected() {
        let s = r#"[{"frame":0,"q":[1,0,0,0],"t_m":[0,0,5.0]}]"#;
        assert!(matches!(read_pose_labels(s.as_bytes()), Err(IoError::Json(_))));
    }

    #[test]
    fn slightly_off_unit_is_renormalized() {
        let s = r#"[{"frame":3,"t_us":9,"q":[1.0001,0,0,0],"t_m":[0,0,5.0]}]"#;
        let l = read_pose_labels(s.as_bytes()).unwrap();
        assert_eq!(l[0].pose.q.w, 1.0);
    }

    proptest! {
        #[test]
        fn write_read_round_trip(
            raw in prop::collection::vec(
                (any::<u32>(), any::<u64>(), prop::array::uniform4(-1.0f64..1.0), prop::array::uniform3(-1e3f64..1e3)),
                0..20,
            )
        ) {
            let labels: Vec<PoseLabel> = raw
                .into_iter()
                .filter(|(_, _, q, _)| Quat::from_array(*q).norm() > 1e-3)
                .map(|(f, t, q, tm)| PoseLabel {
                    frame_index: f as u64,
                    t_us: t,
                    pose: Pose { q: Quat::from_array(q).normalized(), t: Vec3::from_array(tm) },
                })
                .collect();
            let mut buf = Vec::new();
            write_pose_labels(&labels, &mut buf).unwrap();
            let back = read_pose_labels(&buf[..]).unwrap();
            prop_assert_eq!(back, labels);
        }
    }
}
