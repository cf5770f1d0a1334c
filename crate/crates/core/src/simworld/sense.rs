use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BehaviorKind, GazeTarget, World};
use crate::bus::Millis;
use crate::geometry::{normalize, wrap_angle, Point, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KeypointFlags {
    pub hand_above_shoulder: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonDetection {
    pub det_id: u32,
    /// Robot-relative bearing, rad.
    pub azimuth: f64,
    pub distance: f64,
    pub keypoints: KeypointFlags,
    pub appearance: Vec<f64>,
    /// Room-frame head direction, rad.
    pub head_yaw: f64,
    /// Face-analysis channel: eyes on the camera.
    pub gaze_at_robot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFrame {
    pub t: Millis,
    pub detections: Vec<PersonDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioFrame {
    pub t: Millis,
    pub energy: f64,
    /// Robot-relative directions of arrival, rad.
    pub doas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Odometry {
    pub t: Millis,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub t: Millis,
    pub detections: Vec<PersonDetection>,
    pub audio: AudioFrame,
    pub odometry: Odometry,
}

/// Simulator-side labels for a frame. Never consumed by robot modules;
/// only the harness reads it to score engagements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub t: Millis,
    /// `(det_id, actor_id)` for every detection in the frame.
    pub detections: Vec<(u32, String)>,
    pub actors: Vec<TruthActor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthActor {
    pub id: String,
    pub position: Point,
    pub behavior: BehaviorKind,
    pub behavior_since: Millis,
    pub hand_raised: bool,
    pub gaze_target: GazeTarget,
    pub speaking: bool,
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
}

/// Synthesizes one frame of raw perceptions from the world state.
pub fn sense<R: Rng + ?Sized>(world: &World, rng: &mut R) -> (SensorFrame, GroundTruth) {
    let st = &world.state;
    let p = world.params();
    let robot = st.robot_pose;
    let half_fov = p.room.half_fov();

    let mut detections = Vec::new();
    let mut truth_dets = Vec::new();
    for (actor, script) in st.actors.iter().zip(world.scripts()) {
        let azimuth = robot.azimuth_of(&actor.position);
        let distance = robot.position().distance(&actor.position);
        if azimuth.abs() > half_fov || distance > p.room.camera_range {
            continue;
        }
        let det_id = detections.len() as u32;
        let noisy_az = wrap_angle(azimuth + gaussian(rng, p.noise.sigma_azimuth));
        let noisy_dist = (distance + gaussian(rng, p.noise.sigma_distance)).max(0.0);
        let emb: Vec<f64> = script
            .appearance
            .iter()
            .map(|&x| x + gaussian(rng, p.noise.sigma_embedding))
            .collect();
        detections.push(PersonDetection {
            det_id,
            azimuth: noisy_az,
            distance: noisy_dist,
            keypoints: KeypointFlags {
                hand_above_shoulder: actor.hand_raised,
            },
            appearance: normalize(&emb),
            head_yaw: actor.facing,
            gaze_at_robot: actor.gaze_target == GazeTarget::Robot,
        });
        truth_dets.push((det_id, actor.id.clone()));
    }

    let mut energy = p.audio.noise_floor_base + gaussian(rng, p.noise.sigma_energy).abs();
    let mut doas = Vec::new();
    for actor in st.actors.iter().filter(|a| a.speaking) {
        let d = robot.position().distance(&actor.position);
        energy += p.audio.speech_energy_at_1m / d.max(0.5).powi(2);
        if d <= p.audio.mic_range {
            let az = robot.azimuth_of(&actor.position);
            doas.push(wrap_angle(az + gaussian(rng, p.noise.sigma_doa)));
        }
    }

    let frame = SensorFrame {
        t: st.t,
        detections,
        audio: AudioFrame {
            t: st.t,
            energy,
            doas,
        },
        odometry: Odometry {
            t: st.t,
            pose: robot,
        },
    };
    let truth = GroundTruth {
        t: st.t,
        detections: truth_dets,
        actors: st
            .actors
            .iter()
            .map(|a| TruthActor {
                id: a.id.clone(),
                position: a.position,
                behavior: a.behavior,
                behavior_since: a.behavior_since,
                hand_raised: a.hand_raised,
                gaze_target: a.gaze_target,
                speaking: a.speaking,
            })
            .collect(),
    };
    (frame, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::NoiseConfig;
    use crate::simworld::{ActorScript, SpawnPose, TimelineEntry, WorldParams, EMBEDDING_DIM};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn script(id: &str, p: Point, timeline: Vec<TimelineEntry>) -> ActorScript {
        let mut appearance = vec![0.0; EMBEDDING_DIM];
        appearance[1] = 1.0;
        ActorScript {
            id: id.into(),
            spawn: SpawnPose {
                x: p.x,
                y: p.y,
                facing: 0.0,
            },
            timeline,
            utterances: vec![],
            replies: vec![],
            appearance,
        }
    }

    fn noiseless() -> WorldParams {
        WorldParams {
            noise: NoiseConfig::noiseless(),
            ..WorldParams::default()
        }
    }

    #[test]
    fn empty_room_senses_only_noise_floor() {
        let w = World::new(vec![], noiseless());
        let (f, truth) = sense(&w, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(f.detections.is_empty());
        assert!(f.audio.doas.is_empty());
        assert_eq!(f.audio.energy, w.params().audio.noise_floor_base);
        assert!(truth.detections.is_empty());
    }

    #[test]
    fn noiseless_geometry_matches_closed_form() {
        // Robot at the observation pose facing +y; actor 2 m away, 0.2 rad left.
        let params = noiseless();
        let robot = params.room.observation_pose;
        let p = robot.project(0.2, 2.0);
        let w = World::new(vec![script("a", p, vec![])], params);
        let (f, _) = sense(&w, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(f.detections.len(), 1);
        assert_relative_eq!(f.detections[0].azimuth, 0.2, epsilon = 1e-9);
        assert_relative_eq!(f.detections[0].distance, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn actor_behind_robot_is_invisible() {
        let params = noiseless();
        let robot = params.room.observation_pose;
        let behind = robot.project(170f64.to_radians(), 1.0);
        let edge_out = robot.project(31f64.to_radians(), 2.0);
        let edge_in = robot.project(29f64.to_radians(), 2.0);
        let far = robot.project(0.0, 6.5);
        let w = World::new(
            vec![
                script("behind", behind, vec![]),
                script("out", edge_out, vec![]),
                script("in", edge_in, vec![]),
                script("far", far, vec![]),
            ],
            params,
        );
        let (f, truth) = sense(&w, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(f.detections.len(), 1);
        assert_eq!(truth.detections, vec![(0, "in".to_string())]);
    }

    #[test]
    fn doa_points_at_speaker() {
        let params = noiseless();
        let robot = params.room.observation_pose;
        let mut s = script("a", robot.project(-0.3, 1.0), vec![]);
        s.utterances = vec![crate::simworld::ScriptedUtterance(0, "hello robot".into())];
        let w = World::new(vec![s], params);
        let (f, _) = sense(&w, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(f.audio.doas.len(), 1);
        assert_relative_eq!(f.audio.doas[0], -0.3, epsilon = 1e-9);
        assert_relative_eq!(f.audio.energy, 1.0 + 3.0, epsilon = 1e-9);
    }

    #[test]
    fn energy_is_monotone_in_speakers() {
        let params = WorldParams::default();
        let robot = params.room.observation_pose;
        let mut scripts: Vec<ActorScript> = (0..4)
            .map(|i| script(&format!("a{i}"), robot.project(-0.4 + 0.25 * i as f64, 2.0), vec![]))
            .collect();
        let mut last = 0.0;
        for k in 0..=scripts.len() {
            for (i, s) in scripts.iter_mut().enumerate() {
                s.utterances = if i < k {
                    vec![crate::simworld::ScriptedUtterance(0, "talking".into())]
                } else {
                    vec![]
                };
            }
            let w = World::new(scripts.clone(), params.clone());
            let (f, _) = sense(&w, &mut ChaCha8Rng::seed_from_u64(99));
            assert!(f.audio.energy >= last);
            assert!(f.audio.energy >= params.audio.noise_floor_base);
            last = f.audio.energy;
        }
    }

    #[test]
    fn identical_seed_identical_frames() {
        let params = WorldParams::default();
        let robot = params.room.observation_pose;
        let w = World::new(vec![script("a", robot.project(0.1, 3.0), vec![])], params);
        let a = sense(&w, &mut ChaCha8Rng::seed_from_u64(5));
        let b = sense(&w, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(
            serde_json::to_string(&a.0).unwrap(),
            serde_json::to_string(&b.0).unwrap()
        );
    }
}
