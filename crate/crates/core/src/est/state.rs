use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tracing::debug;

use super::align::{AlignedSet, PerceptionBuffers};
use super::memory::{IdentityMemory, ReidParams, TranscriptNote};
use super::{EnvironmentSnapshot, PersonState, RobotStatus};
use crate::actions::{ConversationEvent, MovingFlags, SpeakingFlags};
use crate::bus::Millis;
use crate::config::{EstConfig, IabConfig};
use crate::geometry::Pose;
use crate::planner::ModuleFlags;
use crate::refiners::{GazeFrame, IabFrame, SpeakerAssignment, SpeechActivity, TrackSet, Transcript};
use crate::simworld::Odometry;

/// Everything the tracker consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "input", rename_all = "snake_case")]
pub enum EstInput {
    Tracks(TrackSet),
    Gaze(GazeFrame),
    Iab(IabFrame),
    Speakers(SpeakerAssignment),
    Vad(SpeechActivity),
    Transcript(Transcript),
    Odometry(Odometry),
    MovingFlags(MovingFlags),
    SpeakingFlags(SpeakingFlags),
    Conversation(ConversationEvent),
}

/// Inputs in arrival order and the aligned set of every snapshot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstCapture {
    pub inputs: Vec<(Millis, EstInput)>,
    pub aligned: Vec<AlignedSet>,
}

#[derive(Debug, Clone, Default)]
struct PersonMemo {
    iab: f64,
    iab_ts: Millis,
    above_since: Option<Millis>,
    last_transcript: Option<TranscriptNote>,
}

pub struct StateTracker {
    cfg: EstConfig,
    tau_down_ms: f64,
    reid: ReidParams,
    buffers: PerceptionBuffers,
    memory: IdentityMemory,
    persons: BTreeMap<u64, PersonMemo>,
    pose: Pose,
    moving: Option<MovingFlags>,
    speaking: Option<SpeakingFlags>,
    partner: Option<u64>,
    last_snapshot: Option<Millis>,
    capture: Option<EstCapture>,
}

impl StateTracker {
    pub fn new(cfg: EstConfig, iab: &IabConfig, memory: IdentityMemory, initial_pose: Pose) -> Self {
        Self {
            reid: ReidParams::from_config(&cfg),
            cfg,
            tau_down_ms: iab.tau_down_ms,
            buffers: PerceptionBuffers::default(),
            memory,
            persons: BTreeMap::new(),
            pose: initial_pose,
            moving: None,
            speaking: None,
            partner: None,
            last_snapshot: None,
            capture: None,
        }
    }

    pub fn enable_capture(&mut self) {
        self.capture = Some(EstCapture::default());
    }

    pub fn take_capture(&mut self) -> Option<EstCapture> {
        self.capture.take()
    }

    pub fn memory(&self) -> &IdentityMemory {
        &self.memory
    }

    pub fn ingest(&mut self, ts: Millis, input: EstInput) {
        match &input {
            EstInput::Tracks(s) => self.buffers.ingest_tracks(ts, s),
            EstInput::Gaze(g) => self.buffers.ingest_gaze(ts, g),
            EstInput::Iab(i) => self.buffers.ingest_iab(ts, i),
            EstInput::Speakers(s) => self.buffers.ingest_speakers(ts, s),
            EstInput::Vad(v) => self.buffers.ingest_vad(ts, v),
            EstInput::Transcript(tx) => self.ingest_transcript(tx),
            EstInput::Odometry(o) => self.pose = o.pose,
            EstInput::MovingFlags(f) => self.moving = Some(*f),
            EstInput::SpeakingFlags(f) => self.speaking = Some(*f),
            EstInput::Conversation(ev) => match ev {
                ConversationEvent::Started { t, partner } => {
                    self.memory.note_engagement(*t, *partner);
                    self.partner = Some(*partner);
                }
                ConversationEvent::Ended { .. } => self.partner = None,
                ConversationEvent::UserTurn { .. } => {}
            },
        }
        if let Some(c) = &mut self.capture {
            c.inputs.push((ts, input));
        }
    }

    /// Speech from an unattributed track during a conversation is credited
    /// to the conversation partner.
    fn ingest_transcript(&mut self, tx: &Transcript) {
        let identity = match tx.track_id {
            Some(track) => self.memory.identity_of(track),
            None => self.partner,
        };
        let Some(identity) = identity else {
            debug!(segment = tx.segment_id, "transcript without identity dropped");
            return;
        };
        let note = TranscriptNote {
            segment_id: tx.segment_id,
            t: tx.t,
            text: tx.text.clone(),
        };
        self.memory.note_transcript(identity, note.clone());
        self.persons.entry(identity).or_default().last_transcript = Some(note);
    }

    fn decayed(&self, memo: &PersonMemo, t: Millis) -> f64 {
        let dt = t.saturating_sub(memo.iab_ts) as f64;
        memo.iab * (-dt / self.tau_down_ms).exp()
    }

    pub fn snapshot(&mut self, t_snap: Millis) -> EnvironmentSnapshot {
        debug_assert!(self
            .last_snapshot
            .is_none_or(|prev| t_snap >= prev + self.cfg.period_ms));
        self.last_snapshot = Some(t_snap);
        let aligned = self.buffers.align(t_snap, self.cfg.staleness_ms);
        let apps: Vec<(u64, &[f64])> = aligned
            .tracks
            .iter()
            .map(|(&id, at)| (id, at.track.value.appearance.as_slice()))
            .collect();
        let binding = self.memory.assign(t_snap, &apps, &self.reid);

        let speaker_score = |track: u64| {
            aligned.speakers.as_ref().and_then(|s| {
                s.value
                    .assignments
                    .iter()
                    .filter(|a| a.track_id == Some(track))
                    .map(|a| a.score)
                    .reduce(f64::max)
            })
        };

        let mut persons = Vec::with_capacity(aligned.tracks.len());
        let mut best_speaker: Option<(f64, u64)> = None;
        for (&track_id, at) in &aligned.tracks {
            let identity = binding[&track_id];
            let rec = self.memory.record(identity).expect("assigned identity exists");
            let (first_seen, last_seen, engagements) = (rec.first_seen, rec.last_seen, rec.engagement_count);
            let mut memo = self.persons.remove(&identity).unwrap_or_default();
            let iab = match &at.iab {
                Some(s) => {
                    memo.iab = s.value;
                    memo.iab_ts = s.ts;
                    s.value
                }
                None => self.decayed(&memo, t_snap),
            };
            if iab >= self.cfg.theta_iab {
                memo.above_since.get_or_insert(t_snap);
            } else {
                memo.above_since = None;
            }
            let tr = &at.track.value;
            let sustained = memo
                .above_since
                .is_some_and(|s| t_snap - s >= self.cfg.sustain_ms);
            let score = speaker_score(track_id);
            if let Some(s) = score {
                if best_speaker.is_none_or(|(b, _)| s > b) {
                    best_speaker = Some((s, identity));
                }
            }
            persons.push(PersonState {
                identity_id: identity,
                track_id,
                azimuth: tr.azimuth,
                distance: tr.distance,
                position: tr.position,
                iab,
                speaking: score.is_some(),
                hand_raised: tr.hand_raised,
                last_transcript: memo.last_transcript.clone(),
                available_for_engagement: tr.hand_raised || sustained,
                first_seen,
                last_seen,
                engagements,
            });
            self.persons.insert(identity, memo);
        }
        persons.sort_by_key(|p| p.identity_id);

        let vad_active = aligned.vad.as_ref().is_some_and(|v| v.value.decision.active);
        let active_speaker = best_speaker.filter(|_| vad_active).map(|(_, id)| id);
        let flags = ModuleFlags {
            at_standby: self.moving.is_some_and(|m| m.at_standby),
            navigating: self.moving.is_some_and(|m| m.navigating),
            is_speaking: self.speaking.is_some_and(|s| s.is_speaking),
            in_conversation: self.speaking.is_some_and(|s| s.in_conversation),
        };
        self.buffers.prune(t_snap, self.cfg.staleness_ms);
        if let Some(c) = &mut self.capture {
            c.aligned.push(aligned);
        }
        EnvironmentSnapshot {
            t: t_snap,
            persons,
            robot: RobotStatus {
                pose: self.pose,
                flags,
            },
            active_speaker,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::MoveMode;
    use crate::geometry::Point;
    use crate::refiners::{IabEstimate, Track, TrackState};

    fn track(id: u64, hand: bool) -> Track {
        Track {
            track_id: id,
            state: TrackState::Confirmed,
            azimuth: 0.0,
            distance: 2.0,
            position: Point::new(0.0, 2.0),
            appearance: vec![1.0, 0.0],
            hand_raised: hand,
            hits: 5,
            misses: 0,
            det_id: Some(0),
            head_yaw: Some(0.0),
            gaze_at_robot: false,
        }
    }

    fn est() -> StateTracker {
        StateTracker::new(EstConfig::default(), &IabConfig::default(), IdentityMemory::new(), Pose::default())
    }

    fn feed(e: &mut StateTracker, t: Millis, hand: bool, iab: f64) {
        e.ingest(
            t,
            EstInput::Tracks(TrackSet {
                t,
                pose: Pose::default(),
                tracks: vec![track(1, hand)],
            }),
        );
        e.ingest(
            t,
            EstInput::Iab(IabFrame {
                t,
                estimates: vec![IabEstimate { track_id: 1, iab, t }],
            }),
        );
    }

    #[test]
    fn empty_room_at_standby() {
        let mut e = est();
        e.ingest(0, EstInput::MovingFlags(MovingFlags::of(0, MoveMode::IdleAtHome)));
        let s = e.snapshot(100);
        assert!(s.persons.is_empty());
        assert!(s.robot.flags.at_standby);
    }

    #[test]
    fn sustained_iab_makes_available_after_two_seconds() {
        let mut e = est();
        let mut first = None;
        for k in 1..=40 {
            let t = k * 100;
            feed(&mut e, t, false, 0.75);
            let s = e.snapshot(t);
            if s.persons[0].available_for_engagement && first.is_none() {
                first = Some(t);
            }
        }
        // Above threshold from the 100 ms snapshot onward.
        assert_eq!(first, Some(2100));
    }

    #[test]
    fn raised_hand_overrides_low_iab() {
        let mut e = est();
        feed(&mut e, 100, true, 0.3);
        assert!(e.snapshot(100).persons[0].available_for_engagement);
    }

    #[test]
    fn absent_iab_keeps_decaying() {
        let mut e = est();
        feed(&mut e, 100, false, 0.8);
        e.snapshot(100);
        e.ingest(
            200,
            EstInput::Tracks(TrackSet {
                t: 200,
                pose: Pose::default(),
                tracks: vec![track(1, false)],
            }),
        );
        // The 100 ms estimate is still fresh; at 500 it is stale.
        assert_eq!(e.snapshot(200).persons[0].iab, 0.8);
        for t in [300, 400, 500] {
            e.ingest(
                t,
                EstInput::Tracks(TrackSet {
                    t,
                    pose: Pose::default(),
                    tracks: vec![track(1, false)],
                }),
            );
        }
        e.snapshot(300);
        e.snapshot(400);
        let iab = e.snapshot(500).persons[0].iab;
        assert!((iab - 0.8 * (-400.0f64 / 4000.0).exp()).abs() < 1e-12);
    }
}
