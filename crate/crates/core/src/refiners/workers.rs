//! Bus adapters for the refiners. Each owns its state and only talks
//! through topics.

use tracing::warn;

use super::diarize::Diarizer;
use super::gaze::{gaze_step, GazeFrame};
use super::iab::{IabFrame, IabParams, IabTracker};
use super::tracker::{TrackSet, Tracker};
use super::transcribe::Transcriber;
use super::vad::{SpeechActivity, VadParams, VoiceActivityDetector};
use crate::bus::{Millis, Subscription};
use crate::config::Config;
use crate::geometry::Pose;
use crate::messages::{topics, Message, MessageBus};
use crate::pipeline::{PipelineError, Worker};

pub struct VadWorker {
    bus: MessageBus,
    vad: VoiceActivityDetector,
    audio: Subscription,
}

impl VadWorker {
    pub fn new(bus: MessageBus, cfg: &Config) -> Result<Self, PipelineError> {
        let floor = cfg.vad.initial_floor.unwrap_or(cfg.audio.noise_floor_base);
        Ok(Self {
            audio: bus.subscribe(topics::AUDIO, "vad")?,
            bus,
            vad: VoiceActivityDetector::new(VadParams::from_config(&cfg.vad), floor),
        })
    }
}

impl Worker for VadWorker {
    fn name(&self) -> &'static str {
        "vad"
    }

    fn step(&mut self, _now: Millis) -> Result<(), PipelineError> {
        for env in self.bus.poll(&self.audio)? {
            let Message::Audio(a) = env.payload() else { continue };
            let decision = self.vad.push(a.energy);
            let out = SpeechActivity {
                t: a.t,
                energy: a.energy,
                decision,
            };
            self.bus.publish(topics::VAD, "vad", a.t, Message::Vad(out))?;
        }
        Ok(())
    }
}

pub struct TrackerWorker {
    bus: MessageBus,
    tracker: Tracker,
    camera: Subscription,
    odometry: Subscription,
    poses: Vec<(Millis, Pose)>,
}

impl TrackerWorker {
    pub fn new(bus: MessageBus, cfg: &Config, initial_pose: Pose) -> Result<Self, PipelineError> {
        Ok(Self {
            camera: bus.subscribe(topics::CAMERA, "tracker")?,
            odometry: bus.subscribe(topics::ODOMETRY, "tracker")?,
            bus,
            tracker: Tracker::new(cfg.tracker.clone()),
            poses: vec![(0, initial_pose)],
        })
    }

    fn pose_at(&self, t: Millis) -> Pose {
        self.poses
            .iter()
            .rev()
            .find(|(ts, _)| *ts <= t)
            .or(self.poses.first())
            .map(|p| p.1)
            .unwrap_or_default()
    }
}

impl Worker for TrackerWorker {
    fn name(&self) -> &'static str {
        "tracker"
    }

    fn step(&mut self, _now: Millis) -> Result<(), PipelineError> {
        for env in self.bus.poll(&self.odometry)? {
            if let Message::Odometry(o) = env.payload() {
                self.poses.push((o.t, o.pose));
            }
        }
        for env in self.bus.poll(&self.camera)? {
            let Message::Camera(frame) = env.payload() else { continue };
            let pose = self.pose_at(frame.t);
            let tracks = self.tracker.step(&frame.detections, &pose).to_vec();
            let set = TrackSet {
                t: frame.t,
                pose,
                tracks,
            };
            self.bus.publish(topics::TRACKS, "tracker", frame.t, Message::Tracks(set))?;
        }
        if self.poses.len() > 16 {
            self.poses.drain(..self.poses.len() - 16);
        }
        Ok(())
    }
}

pub struct GazeWorker {
    bus: MessageBus,
    tracks: Subscription,
}

impl GazeWorker {
    pub fn new(bus: MessageBus) -> Result<Self, PipelineError> {
        Ok(Self {
            tracks: bus.subscribe(topics::TRACKS, "gaze")?,
            bus,
        })
    }
}

impl Worker for GazeWorker {
    fn name(&self) -> &'static str {
        "gaze"
    }

    fn step(&mut self, _now: Millis) -> Result<(), PipelineError> {
        for env in self.bus.poll(&self.tracks)? {
            let Message::Tracks(set) = env.payload() else { continue };
            let frame = GazeFrame {
                t: set.t,
                estimates: gaze_step(&set.tracks, &set.pose),
            };
            self.bus.publish(topics::GAZE, "gaze", set.t, Message::Gaze(frame))?;
        }
        Ok(())
    }
}

pub struct IabWorker {
    bus: MessageBus,
    iab: IabTracker,
    gaze: Subscription,
    period_ms: Millis,
    last: Option<Millis>,
}

impl IabWorker {
    pub fn new(bus: MessageBus, cfg: &Config, period_ms: Millis) -> Result<Self, PipelineError> {
        Ok(Self {
            gaze: bus.subscribe(topics::GAZE, "iab")?,
            bus,
            iab: IabTracker::new(IabParams::from_config(&cfg.iab)),
            period_ms,
            last: None,
        })
    }
}

impl Worker for IabWorker {
    fn name(&self) -> &'static str {
        "iab"
    }

    fn step(&mut self, _now: Millis) -> Result<(), PipelineError> {
        for env in self.bus.poll(&self.gaze)? {
            let Message::Gaze(g) = env.payload() else { continue };
            let dt = self.last.map_or(self.period_ms, |l| (g.t - l).max(1));
            self.last = Some(g.t);
            let estimates = self.iab.step(g.t, &g.estimates, dt);
            // Forget tracks unseen for a minute.
            self.iab.forget_older_than(g.t.saturating_sub(60_000));
            let frame = IabFrame { t: g.t, estimates };
            self.bus.publish(topics::IAB, "iab", g.t, Message::Iab(frame))?;
        }
        Ok(())
    }
}

pub struct DiarizeWorker {
    bus: MessageBus,
    diarizer: Diarizer,
    audio: Subscription,
    tracks: Subscription,
    latest: Option<TrackSet>,
}

impl DiarizeWorker {
    pub fn new(bus: MessageBus, cfg: &Config) -> Result<Self, PipelineError> {
        Ok(Self {
            audio: bus.subscribe(topics::AUDIO, "diarizer")?,
            tracks: bus.subscribe(topics::TRACKS, "diarizer")?,
            bus,
            diarizer: Diarizer::new(cfg.diarization.clone()),
            latest: None,
        })
    }
}

impl Worker for DiarizeWorker {
    fn name(&self) -> &'static str {
        "diarizer"
    }

    fn step(&mut self, _now: Millis) -> Result<(), PipelineError> {
        for env in self.bus.poll(&self.tracks)? {
            if let Message::Tracks(set) = env.payload() {
                self.latest = Some(set.clone());
            }
        }
        for env in self.bus.poll(&self.audio)? {
            let Message::Audio(a) = env.payload() else { continue };
            let tracks = self.latest.as_ref().map_or(&[][..], |s| &s.tracks[..]);
            let sa = self.diarizer.step(a.t, &a.doas, tracks);
            self.bus.publish(topics::SPEAKERS, "diarizer", a.t, Message::Speakers(sa))?;
        }
        Ok(())
    }
}

pub struct TranscribeWorker {
    bus: MessageBus,
    transcriber: Transcriber,
    vad: Subscription,
    speakers: Subscription,
}

impl TranscribeWorker {
    pub fn new(bus: MessageBus, transcriber: Transcriber) -> Result<Self, PipelineError> {
        Ok(Self {
            vad: bus.subscribe(topics::VAD, "transcriber")?,
            speakers: bus.subscribe(topics::SPEAKERS, "transcriber")?,
            bus,
            transcriber,
        })
    }
}

impl Worker for TranscribeWorker {
    fn name(&self) -> &'static str {
        "transcriber"
    }

    fn step(&mut self, now: Millis) -> Result<(), PipelineError> {
        for env in self.bus.poll(&self.speakers)? {
            if let Message::Speakers(sa) = env.payload() {
                self.transcriber.on_speakers(sa);
            }
        }
        for env in self.bus.poll(&self.vad)? {
            let Message::Vad(va) = env.payload() else { continue };
            let Some(seg) = self.transcriber.on_vad(va.t, &va.decision) else { continue };
            match self.transcriber.transcribe(now, &seg) {
                Ok(tx) => {
                    self.bus.publish(topics::TRANSCRIPT, "transcriber", now, Message::Transcript(tx))?;
                }
                Err(e) => warn!(%e, segment = seg.segment_id, "transcription failed"),
            }
        }
        Ok(())
    }
}
