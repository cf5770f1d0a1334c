//! Simulated waiting room and robot body.
//!
//! The world advances scripted participants and the robot base in virtual
//! time and synthesizes the raw perceptions a real robot would deliver:
//! person detections from a forward camera, audio energy plus directions of
//! arrival from a microphone array, and odometry.

mod sense;
mod worker;

use serde::{Deserialize, Serialize};

use crate::bus::Millis;
use crate::config::{ActorConfig, AudioConfig, NoiseConfig};
use crate::geometry::{integrate, Point, Pose};

pub use sense::{
    sense, AudioFrame, CameraFrame, GroundTruth, KeypointFlags, Odometry, PersonDetection,
    SensorFrame, TruthActor,
};
pub use worker::WorldWorker;

pub const EMBEDDING_DIM: usize = 16;

/// The five scripted participant behaviors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BehaviorKind {
    TalkToNeighbor,
    UsePhone,
    Idle,
    ShowInterest,
    RequestInteraction,
}

impl BehaviorKind {
    /// Behaviors that turn the participant's attention to the robot.
    pub fn seeks_robot(self) -> bool {
        matches!(self, Self::ShowInterest | Self::RequestInteraction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazeTarget {
    Robot,
    Neighbor,
    Phone,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomConfig {
    pub width: f64,
    pub depth: f64,
    pub observation_pose: Pose,
    #[serde(default)]
    pub seats: Vec<Point>,
    #[serde(default = "default_fov")]
    pub camera_fov_deg: f64,
    #[serde(default = "default_range")]
    pub camera_range: f64,
    #[serde(default = "default_rate")]
    pub sensor_rate_hz: f64,
}

fn default_fov() -> f64 {
    60.0
}
fn default_range() -> f64 {
    6.0
}
fn default_rate() -> f64 {
    10.0
}

impl RoomConfig {
    pub fn contains(&self, p: &Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.depth).contains(&p.y)
    }

    pub fn sensor_period_ms(&self) -> Millis {
        (1000.0 / self.sensor_rate_hz).round() as Millis
    }

    pub fn half_fov(&self) -> f64 {
        self.camera_fov_deg.to_radians() / 2.0
    }
}

impl Default for RoomConfig {
    fn default() -> Self {
        Self {
            width: 6.0,
            depth: 5.0,
            observation_pose: Pose::new(3.0, 0.5, std::f64::consts::FRAC_PI_2),
            seats: vec![
                Point::new(1.4, 3.5),
                Point::new(2.2, 3.5),
                Point::new(3.0, 3.5),
                Point::new(3.8, 3.5),
                Point::new(4.6, 3.5),
            ],
            camera_fov_deg: 60.0,
            camera_range: 6.0,
            sensor_rate_hz: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnPose {
    pub x: f64,
    pub y: f64,
    pub facing: f64,
}

impl SpawnPose {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// `[start_ms, behavior]`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry(pub Millis, pub BehaviorKind);

/// `[time_ms, text]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedUtterance(pub Millis, pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorScript {
    pub id: String,
    pub spawn: SpawnPose,
    pub timeline: Vec<TimelineEntry>,
    #[serde(default)]
    pub utterances: Vec<ScriptedUtterance>,
    /// Lines spoken in turn whenever the robot addresses this actor and
    /// hands over the floor.
    #[serde(default)]
    pub replies: Vec<String>,
    /// Unit appearance embedding; generated from the scenario when absent.
    #[serde(default)]
    pub appearance: Vec<f64>,
}

/// Something an actor actually said, with its speaking interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub actor: String,
    pub start: Millis,
    pub end: Millis,
    pub text: String,
}

impl Utterance {
    pub fn covers(&self, t: Millis) -> bool {
        self.start <= t && t < self.end
    }

    /// Overlap with the closed interval `[from, to]`.
    pub fn overlaps(&self, from: Millis, to: Millis) -> bool {
        self.start <= to && from < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeechKind {
    Greeting,
    Reply,
    Farewell,
    Apology,
}

/// Robot speech act, as emitted by the speaking module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpeech {
    pub t: Millis,
    pub text: String,
    pub kind: SpeechKind,
    pub duration_ms: Millis,
    pub partner: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    /// m/s along the heading.
    pub v: f64,
    /// rad/s, counter-clockwise.
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorState {
    pub id: String,
    pub position: Point,
    pub facing: f64,
    pub gaze_target: GazeTarget,
    pub speaking: bool,
    pub hand_raised: bool,
    pub behavior: BehaviorKind,
    pub behavior_since: Millis,
    /// The robot already served the current timeline entry.
    pub served: bool,
    timeline_index: Option<usize>,
    replies_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub t: Millis,
    pub robot_pose: Pose,
    pub velocity: VelocityCommand,
    pub actors: Vec<ActorState>,
}

/// Everything the world needs besides its scripts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorldParams {
    pub room: RoomConfig,
    pub noise: NoiseConfig,
    pub audio: AudioConfig,
    pub actors: ActorConfig,
}

#[derive(Debug, Clone)]
pub struct World {
    pub state: WorldState,
    scripts: Vec<ActorScript>,
    params: WorldParams,
    neighbors: Vec<Option<usize>>,
    utterances: Vec<Utterance>,
}

impl World {
    pub fn new(scripts: Vec<ActorScript>, params: WorldParams) -> Self {
        let neighbors = nearest_neighbors(&scripts);
        let mut utterances: Vec<Utterance> = Vec::new();
        for s in &scripts {
            for ScriptedUtterance(at, text) in &s.utterances {
                utterances.push(Utterance {
                    actor: s.id.clone(),
                    start: *at,
                    end: *at + utterance_duration(text, &params.actors),
                    text: text.clone(),
                });
            }
        }
        utterances.sort_by(|a, b| (a.start, &a.actor).cmp(&(b.start, &b.actor)));
        let actors = scripts
            .iter()
            .map(|s| ActorState {
                id: s.id.clone(),
                position: s.spawn.position(),
                facing: s.spawn.facing,
                gaze_target: GazeTarget::None,
                speaking: false,
                hand_raised: false,
                behavior: BehaviorKind::Idle,
                behavior_since: 0,
                served: false,
                timeline_index: None,
                replies_used: 0,
            })
            .collect();
        let mut world = Self {
            state: WorldState {
                t: 0,
                robot_pose: params.room.observation_pose,
                velocity: VelocityCommand::default(),
                actors,
            },
            scripts,
            params,
            neighbors,
            utterances,
        };
        world.update_actors();
        world
    }

    pub fn params(&self) -> &WorldParams {
        &self.params
    }

    pub fn scripts(&self) -> &[ActorScript] {
        &self.scripts
    }

    /// Every utterance scheduled so far, sorted by start time.
    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn set_velocity(&mut self, cmd: VelocityCommand) {
        self.state.velocity = cmd;
    }

    /// Advances virtual time by `dt` ms, moving the robot with the last
    /// velocity command and re-deriving every actor's observable state.
    pub fn step(&mut self, dt: Millis) {
        debug_assert!(dt > 0 && dt <= self.params.room.sensor_period_ms());
        let st = &mut self.state;
        st.robot_pose = integrate(
            &st.robot_pose,
            st.velocity.v,
            st.velocity.omega,
            dt as f64 / 1000.0,
        );
        st.t += dt;
        self.update_actors();
    }

    /// Reacts to robot speech: schedules the addressed actor's next reply,
    /// or marks them served when the robot says goodbye.
    pub fn hear_robot(&mut self, speech: &RobotSpeech) {
        let robot = self.state.robot_pose.position();
        let radius = self.params.actors.address_radius;
        let addressed = self
            .state
            .actors
            .iter()
            .enumerate()
            .map(|(i, a)| (i, a.position.distance(&robot)))
            .filter(|&(_, d)| d <= radius)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i);
        let Some(i) = addressed else { return };
        match speech.kind {
            SpeechKind::Greeting | SpeechKind::Reply => {
                let script = &self.scripts[i];
                let actor = &mut self.state.actors[i];
                if let Some(text) = script.replies.get(actor.replies_used) {
                    actor.replies_used += 1;
                    let start = speech.t + speech.duration_ms + self.params.actors.reply_delay_ms;
                    let u = Utterance {
                        actor: actor.id.clone(),
                        start,
                        end: start + utterance_duration(text, &self.params.actors),
                        text: text.clone(),
                    };
                    let pos = self
                        .utterances
                        .partition_point(|x| (x.start, &x.actor) <= (u.start, &u.actor));
                    self.utterances.insert(pos, u);
                }
            }
            SpeechKind::Farewell | SpeechKind::Apology => {
                let actor = &mut self.state.actors[i];
                if actor.timeline_index.is_some() {
                    actor.served = true;
                }
                self.update_actors();
            }
        }
    }

    fn update_actors(&mut self) {
        let t = self.state.t;
        let robot = self.state.robot_pose.position();
        let turn = self.params.actors.talk_turn_ms.max(1);
        let talk = self.params.actors.talk_speech_ms;
        let positions: Vec<Point> = self.state.actors.iter().map(|a| a.position).collect();
        for (i, actor) in self.state.actors.iter_mut().enumerate() {
            let script = &self.scripts[i];
            let index = script.timeline.iter().rposition(|e| e.0 <= t);
            if index != actor.timeline_index {
                actor.timeline_index = index;
                actor.served = false;
            }
            let (scripted, since) = match index {
                Some(k) => (script.timeline[k].1, script.timeline[k].0),
                None => (BehaviorKind::Idle, 0),
            };
            let behavior = if actor.served && scripted.seeks_robot() {
                BehaviorKind::Idle
            } else {
                scripted
            };
            actor.behavior = behavior;
            actor.behavior_since = since;
            actor.hand_raised = behavior == BehaviorKind::RequestInteraction;
            actor.speaking = false;
            match behavior {
                BehaviorKind::Idle => {
                    actor.gaze_target = GazeTarget::None;
                    actor.facing = script.spawn.facing;
                }
                BehaviorKind::UsePhone => {
                    actor.gaze_target = GazeTarget::Phone;
                    actor.facing = script.spawn.facing;
                }
                BehaviorKind::TalkToNeighbor => match self.neighbors[i] {
                    Some(n) => {
                        actor.gaze_target = GazeTarget::Neighbor;
                        actor.facing = actor.position.bearing_to(&positions[n]);
                        let elapsed = t - since;
                        let rank = u64::from(i > n);
                        actor.speaking = (elapsed / turn + rank).is_multiple_of(2) && elapsed % turn < talk;
                    }
                    None => {
                        actor.gaze_target = GazeTarget::None;
                        actor.facing = script.spawn.facing;
                    }
                },
                BehaviorKind::ShowInterest | BehaviorKind::RequestInteraction => {
                    actor.gaze_target = GazeTarget::Robot;
                    actor.facing = actor.position.bearing_to(&robot);
                }
            }
        }
        for u in self.utterances.iter().filter(|u| u.covers(t)) {
            if let Some(a) = self.state.actors.iter_mut().find(|a| a.id == u.actor) {
                a.speaking = true;
            }
        }
    }
}

pub fn utterance_duration(text: &str, cfg: &ActorConfig) -> Millis {
    (text.chars().count() as Millis * cfg.utterance_ms_per_char).max(cfg.utterance_min_ms)
}

fn nearest_neighbors(scripts: &[ActorScript]) -> Vec<Option<usize>> {
    scripts
        .iter()
        .enumerate()
        .map(|(i, s)| {
            scripts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, o)| (j, s.spawn.position().distance(&o.spawn.position())))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .map(|(j, _)| j)
        })
        .collect()
}
