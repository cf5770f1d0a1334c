use super::state::{EstInput, StateTracker};
use crate::bus::{Millis, Subscription};
use crate::messages::{topics, Message, MessageBus};
use crate::pipeline::{PipelineError, Worker};

const EST: &str = "est";

/// Subscribed topics, drained in this order every step.
const INPUTS: [&str; 10] = [
    topics::ODOMETRY,
    topics::TRACKS,
    topics::GAZE,
    topics::IAB,
    topics::SPEAKERS,
    topics::VAD,
    topics::TRANSCRIPT,
    topics::MOVING_FLAGS,
    topics::SPEAKING_FLAGS,
    topics::CONVERSATION,
];

fn to_input(m: &Message) -> Option<EstInput> {
    Some(match m {
        Message::Odometry(o) => EstInput::Odometry(*o),
        Message::Tracks(t) => EstInput::Tracks(t.clone()),
        Message::Gaze(g) => EstInput::Gaze(g.clone()),
        Message::Iab(i) => EstInput::Iab(i.clone()),
        Message::Speakers(s) => EstInput::Speakers(s.clone()),
        Message::Vad(v) => EstInput::Vad(*v),
        Message::Transcript(t) => EstInput::Transcript(t.clone()),
        Message::MovingFlags(f) => EstInput::MovingFlags(*f),
        Message::SpeakingFlags(f) => EstInput::SpeakingFlags(*f),
        Message::Conversation(c) => EstInput::Conversation(c.clone()),
        _ => return None,
    })
}

pub struct EstWorker {
    bus: MessageBus,
    tracker: StateTracker,
    subs: Vec<Subscription>,
    period_ms: Millis,
    next_due: Millis,
}

impl EstWorker {
    pub fn new(bus: MessageBus, tracker: StateTracker, period_ms: Millis) -> Result<Self, PipelineError> {
        let subs = INPUTS
            .iter()
            .map(|t| bus.subscribe(t, EST))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            bus,
            tracker,
            subs,
            period_ms,
            next_due: 0,
        })
    }

    pub fn tracker(&self) -> &StateTracker {
        &self.tracker
    }

    pub fn tracker_mut(&mut self) -> &mut StateTracker {
        &mut self.tracker
    }
}

impl Worker for EstWorker {
    fn name(&self) -> &'static str {
        EST
    }

    fn step(&mut self, now: Millis) -> Result<(), PipelineError> {
        for sub in &self.subs {
            for env in self.bus.poll(sub)? {
                if let Some(input) = to_input(env.payload()) {
                    self.tracker.ingest(env.ts, input);
                }
            }
        }
        // Boundary crossing rather than `now % period`, so a free-running
        // clock that skips the exact instant still snapshots once per period.
        if now >= self.next_due {
            self.next_due = (now / self.period_ms + 1) * self.period_ms;
            let snap = self.tracker.snapshot(now);
            self.bus.publish(topics::SNAPSHOT, EST, now, Message::Snapshot(snap))?;
        }
        Ok(())
    }
}
