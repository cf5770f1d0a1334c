//! Multi-person tracker: appearance + bearing cost, gated optimal
//! association, tentative/confirmed/lost lifecycle.
//!
//! Track positions are averaged in the room frame using the odometry pose of
//! each frame, so robot motion does not smear the estimate of a seated
//! person. Bearings are re-derived from the current pose for gating.

use serde::{Deserialize, Serialize};

use super::assignment::gated_min_cost_assignment;
use crate::bus::Millis;
use crate::config::TrackerConfig;
use crate::geometry::{angular_distance, cosine_similarity, normalize, Point, Pose};
use crate::simworld::PersonDetection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackState {
    Tentative,
    Confirmed,
    Lost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: u64,
    pub state: TrackState,
    /// Bearing and range from the frame's robot pose.
    pub azimuth: f64,
    pub distance: f64,
    /// Smoothed room-frame position.
    pub position: Point,
    pub appearance: Vec<f64>,
    pub hand_raised: bool,
    pub hits: u32,
    pub misses: u32,
    /// Detection matched on the current frame.
    pub det_id: Option<u32>,
    pub head_yaw: Option<f64>,
    pub gaze_at_robot: bool,
}

impl Track {
    /// Confirmed and matched on its latest frame.
    pub fn is_observed_confirmed(&self) -> bool {
        self.state == TrackState::Confirmed && self.misses == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSet {
    pub t: Millis,
    pub pose: Pose,
    pub tracks: Vec<Track>,
}

/// Association cost between a detection and a track.
pub fn association_cost(det: &PersonDetection, track: &Track, pose: &Pose, cfg: &TrackerConfig) -> f64 {
    let predicted = pose.azimuth_of(&track.position);
    cfg.w_pos * angular_distance(det.azimuth, predicted)
        + cfg.w_app * (1.0 - cosine_similarity(&det.appearance, &track.appearance))
}

/// Cost matrix, detections as rows and tracks as columns.
pub fn cost_matrix(dets: &[PersonDetection], tracks: &[Track], pose: &Pose, cfg: &TrackerConfig) -> Vec<Vec<f64>> {
    dets.iter()
        .map(|d| tracks.iter().map(|t| association_cost(d, t, pose, cfg)).collect())
        .collect()
}

/// One tracking cycle. Lost tracks are dropped on the cycle after they are
/// reported lost; ids come from `next_id` and are never reused.
pub fn track_step(
    detections: &[PersonDetection],
    tracks: Vec<Track>,
    pose: &Pose,
    cfg: &TrackerConfig,
    next_id: &mut u64,
) -> Vec<Track> {
    let mut tracks: Vec<Track> = tracks
        .into_iter()
        .filter(|t| t.state != TrackState::Lost)
        .collect();
    let costs = cost_matrix(detections, &tracks, pose, cfg);
    let pairs = gated_min_cost_assignment(&costs, cfg.gate);

    let mut det_used = vec![false; detections.len()];
    let mut track_used = vec![false; tracks.len()];
    for &(d, k) in &pairs {
        det_used[d] = true;
        track_used[k] = true;
        let det = &detections[d];
        let trk = &mut tracks[k];
        let measured = pose.project(det.azimuth, det.distance);
        let a = cfg.position_ema;
        trk.position = Point::new(
            (1.0 - a) * trk.position.x + a * measured.x,
            (1.0 - a) * trk.position.y + a * measured.y,
        );
        let w = cfg.appearance_ema;
        let blended: Vec<f64> = trk
            .appearance
            .iter()
            .zip(&det.appearance)
            .map(|(c, x)| (1.0 - w) * c + w * x)
            .collect();
        trk.appearance = normalize(&blended);
        trk.hits += 1;
        trk.misses = 0;
        if trk.state == TrackState::Tentative && trk.hits >= cfg.confirm_hits {
            trk.state = TrackState::Confirmed;
        }
        trk.hand_raised = det.keypoints.hand_above_shoulder;
        trk.det_id = Some(det.det_id);
        trk.head_yaw = Some(det.head_yaw);
        trk.gaze_at_robot = det.gaze_at_robot;
    }
    for (k, trk) in tracks.iter_mut().enumerate() {
        if track_used[k] {
            continue;
        }
        trk.misses += 1;
        trk.det_id = None;
        trk.head_yaw = None;
        trk.gaze_at_robot = false;
        if trk.misses >= cfg.lost_misses {
            trk.state = TrackState::Lost;
        }
    }
    for (d, det) in detections.iter().enumerate() {
        if det_used[d] {
            continue;
        }
        let id = *next_id;
        *next_id += 1;
        let state = if cfg.confirm_hits <= 1 {
            TrackState::Confirmed
        } else {
            TrackState::Tentative
        };
        tracks.push(Track {
            track_id: id,
            state,
            azimuth: det.azimuth,
            distance: det.distance,
            position: pose.project(det.azimuth, det.distance),
            appearance: det.appearance.clone(),
            hand_raised: det.keypoints.hand_above_shoulder,
            hits: 1,
            misses: 0,
            det_id: Some(det.det_id),
            head_yaw: Some(det.head_yaw),
            gaze_at_robot: det.gaze_at_robot,
        });
    }
    for trk in &mut tracks {
        trk.azimuth = pose.azimuth_of(&trk.position);
        trk.distance = pose.position().distance(&trk.position);
    }
    tracks
}

#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self {
            cfg,
            tracks: Vec::new(),
            next_id: 1,
        }
    }

    pub fn step(&mut self, detections: &[PersonDetection], pose: &Pose) -> &[Track] {
        let tracks = std::mem::take(&mut self.tracks);
        self.tracks = track_step(detections, tracks, pose, &self.cfg, &mut self.next_id);
        &self.tracks
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::KeypointFlags;

    fn unit(i: usize) -> Vec<f64> {
        let mut v = vec![0.0; 16];
        v[i] = 1.0;
        v
    }

    fn det(id: u32, az: f64, app: Vec<f64>) -> PersonDetection {
        PersonDetection {
            det_id: id,
            azimuth: az,
            distance: 3.0,
            keypoints: KeypointFlags::default(),
            appearance: app,
            head_yaw: 0.0,
            gaze_at_robot: false,
        }
    }

    #[test]
    fn nothing_in_nothing_out() {
        let mut next = 1;
        let out = track_step(&[], vec![], &Pose::default(), &TrackerConfig::default(), &mut next);
        assert!(out.is_empty());
    }

    #[test]
    fn confirms_after_three_hits() {
        let mut tr = Tracker::new(TrackerConfig::default());
        let pose = Pose::default();
        let d = [det(0, 0.1, unit(0))];
        assert_eq!(tr.step(&d, &pose)[0].state, TrackState::Tentative);
        assert_eq!(tr.step(&d, &pose)[0].state, TrackState::Tentative);
        let t = &tr.step(&d, &pose)[0];
        assert_eq!((t.state, t.hits, t.track_id), (TrackState::Confirmed, 3, 1));
    }

    #[test]
    fn lost_after_thirty_misses_and_ids_not_reused() {
        let mut tr = Tracker::new(TrackerConfig::default());
        let pose = Pose::default();
        for _ in 0..3 {
            tr.step(&[det(0, 0.1, unit(0))], &pose);
        }
        for i in 1..=30 {
            let t = &tr.step(&[], &pose)[0];
            assert_eq!(t.misses, i);
            let want = if i < 30 { TrackState::Confirmed } else { TrackState::Lost };
            assert_eq!(t.state, want);
        }
        // Lost track is dropped, the same person gets a fresh id.
        let t = &tr.step(&[det(0, 0.1, unit(0))], &pose);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].track_id, 2);
    }

    #[test]
    fn different_appearance_spawns_new_track() {
        let mut tr = Tracker::new(TrackerConfig::default());
        let pose = Pose::default();
        tr.step(&[det(0, 0.1, unit(0))], &pose);
        let out = tr.step(&[det(0, 0.1, unit(1))], &pose);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].misses, 1);
        assert_eq!(out[1].track_id, 2);
    }

    #[test]
    fn hand_flag_follows_detection() {
        let mut tr = Tracker::new(TrackerConfig::default());
        let pose = Pose::default();
        let mut d = det(0, 0.0, unit(2));
        tr.step(&[d.clone()], &pose);
        d.keypoints.hand_above_shoulder = true;
        assert!(tr.step(&[d], &pose)[0].hand_raised);
    }

    #[test]
    fn room_frame_average_survives_rotation() {
        let mut tr = Tracker::new(TrackerConfig::default());
        let p0 = Pose::new(0.0, 0.0, 0.0);
        tr.step(&[det(0, 0.3, unit(0))], &p0);
        // Robot turns left by 0.3 rad; the person is now dead ahead.
        let p1 = Pose::new(0.0, 0.0, 0.3);
        let out = tr.step(&[det(0, 0.0, unit(0))], &p1);
        assert_eq!(out.len(), 1);
        assert!(out[0].azimuth.abs() < 1e-9);
    }
}
