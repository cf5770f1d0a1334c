//! Head-pose gaze stand-in.

use serde::{Deserialize, Serialize};

use super::tracker::Track;
use crate::bus::Millis;
use crate::geometry::{angular_distance, Point, Pose};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeEstimate {
    pub track_id: u64,
    /// Score in [0, 1] that the person looks at the robot.
    pub looking_at_robot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeFrame {
    pub t: Millis,
    pub estimates: Vec<GazeEstimate>,
}

/// 1 when the gaze channel reports the robot, otherwise `max(0, cos θ)` with
/// θ between the head yaw and the direction from the person to the robot.
pub fn gaze_score<T: Scalar>(gaze_at_robot: bool, head_yaw: T, person: Point<T>, robot: Point<T>) -> T {
    if gaze_at_robot {
        return T::one();
    }
    let theta = angular_distance(head_yaw, person.bearing_to(&robot));
    theta.cos().max(T::zero()).min(T::one())
}

/// Scores every track matched on this frame.
pub fn gaze_step(tracks: &[Track], robot: &Pose) -> Vec<GazeEstimate> {
    tracks
        .iter()
        .filter_map(|t| {
            let yaw = t.head_yaw?;
            Some(GazeEstimate {
                track_id: t.track_id,
                looking_at_robot: gaze_score(t.gaze_at_robot, yaw, t.position, robot.position()),
            })
        })
        .collect()
}
