use tracing::warn;

use super::conversation::{Conversation, ConversationOutput};
use super::moving::Mover;
use super::{MovingFlags, SpeakingFlags};
use crate::bus::{Millis, Subscription};
use crate::est::EnvironmentSnapshot;
use crate::messages::{topics, Message, MessageBus};
use crate::pipeline::{PipelineError, Worker};
use crate::planner::{ActionModule, Directive};
use crate::simworld::VelocityCommand;

const MOVING: &str = "moving";
const SPEAKING: &str = "speaking";

/// Flags are republished at least this often even when unchanged.
const FLAG_REFRESH_MS: Millis = 100;

pub struct MovingWorker {
    bus: MessageBus,
    mover: Mover,
    commands: Subscription,
    snapshots: Subscription,
    odometry: Subscription,
    snapshot: Option<EnvironmentSnapshot>,
    last_step: Option<Millis>,
    last_flags: Option<MovingFlags>,
    last_velocity: Option<VelocityCommand>,
}

impl MovingWorker {
    pub fn new(bus: MessageBus, mover: Mover) -> Result<Self, PipelineError> {
        Ok(Self {
            commands: bus.subscribe(topics::COMMAND, MOVING)?,
            snapshots: bus.subscribe(topics::SNAPSHOT, MOVING)?,
            odometry: bus.subscribe(topics::ODOMETRY, MOVING)?,
            bus,
            mover,
            snapshot: None,
            last_step: None,
            last_flags: None,
            last_velocity: None,
        })
    }

    pub fn mover(&self) -> &Mover {
        &self.mover
    }
}

impl Worker for MovingWorker {
    fn name(&self) -> &'static str {
        MOVING
    }

    fn step(&mut self, now: Millis) -> Result<(), PipelineError> {
        let dt = self.last_step.map_or(0, |t| now - t);
        self.last_step = Some(now);
        for env in self.bus.poll(&self.snapshots)? {
            if let Message::Snapshot(s) = env.payload() {
                if let Some(fault) = self.mover.observe(s) {
                    self.bus.publish(topics::MOVE_FAULT, MOVING, now, Message::MoveFault(fault))?;
                }
                self.snapshot = Some(s.clone());
            }
        }
        for env in self.bus.poll(&self.commands)? {
            let Message::Command(cmd) = env.payload() else { continue };
            if cmd.module != ActionModule::Moving {
                continue;
            }
            if let Err(e) = self.mover.command(&cmd.directive, self.snapshot.as_ref()) {
                warn!(%e, "approach rejected");
                if let Directive::ApproachPerson { identity } = cmd.directive {
                    let fault = super::MoveFault::TargetLost { t: now, identity };
                    self.bus.publish(topics::MOVE_FAULT, MOVING, now, Message::MoveFault(fault))?;
                }
            }
        }
        // Odometry is authoritative; dead reckoning covers the gaps.
        let mut measured = None;
        for env in self.bus.poll(&self.odometry)? {
            if let Message::Odometry(o) = env.payload() {
                if o.t == now {
                    measured = Some(o.pose);
                }
            }
        }
        let out = self.mover.step(now, dt, measured);
        if self.last_velocity != Some(out.velocity) {
            self.bus.publish(topics::VELOCITY, MOVING, now, Message::Velocity(out.velocity))?;
            self.last_velocity = Some(out.velocity);
        }
        let changed = self.last_flags.is_none_or(|f| {
            (f.at_standby, f.navigating, f.mode) != (out.flags.at_standby, out.flags.navigating, out.flags.mode)
        });
        if changed || now.is_multiple_of(FLAG_REFRESH_MS) {
            self.bus.publish(topics::MOVING_FLAGS, MOVING, now, Message::MovingFlags(out.flags))?;
            self.last_flags = Some(out.flags);
        }
        Ok(())
    }
}

pub struct SpeakingWorker {
    bus: MessageBus,
    conversation: Conversation,
    commands: Subscription,
    snapshots: Subscription,
    snapshot: Option<EnvironmentSnapshot>,
    last_flags: Option<SpeakingFlags>,
}

impl SpeakingWorker {
    pub fn new(bus: MessageBus, conversation: Conversation) -> Result<Self, PipelineError> {
        Ok(Self {
            commands: bus.subscribe(topics::COMMAND, SPEAKING)?,
            snapshots: bus.subscribe(topics::SNAPSHOT, SPEAKING)?,
            bus,
            conversation,
            snapshot: None,
            last_flags: None,
        })
    }

    pub fn conversation(&self) -> &Conversation {
        &self.conversation
    }

    fn emit(&mut self, now: Millis, out: ConversationOutput) -> Result<(), PipelineError> {
        for s in out.speech {
            self.bus.publish(topics::SPEECH, SPEAKING, now, Message::Speech(s))?;
        }
        for e in out.events {
            self.bus.publish(topics::CONVERSATION, SPEAKING, now, Message::Conversation(e))?;
        }
        Ok(())
    }
}

impl Worker for SpeakingWorker {
    fn name(&self) -> &'static str {
        SPEAKING
    }

    fn step(&mut self, now: Millis) -> Result<(), PipelineError> {
        for env in self.bus.poll(&self.commands)? {
            let Message::Command(cmd) = env.payload() else { continue };
            let out = match cmd.directive {
                Directive::StartConversation { identity } => {
                    let seen = self
                        .snapshot
                        .as_ref()
                        .and_then(|s| s.person(identity))
                        .and_then(|p| p.last_transcript.as_ref())
                        .map(|n| n.segment_id);
                    match self.conversation.start(now, identity, seen) {
                        Ok(out) => out,
                        Err(e) => {
                            warn!(%e, "conversation not started");
                            continue;
                        }
                    }
                }
                Directive::StopConversation => self.conversation.stop(now),
                _ => continue,
            };
            self.emit(now, out)?;
        }
        for env in self.bus.poll(&self.snapshots)? {
            if let Message::Snapshot(s) = env.payload() {
                let out = self.conversation.observe(now, s);
                self.emit(now, out)?;
                self.snapshot = Some(s.clone());
            }
        }
        let out = self.conversation.tick(now);
        self.emit(now, out)?;
        let flags = self.conversation.flags(now);
        let changed = self.last_flags.is_none_or(|f| f.phase != flags.phase);
        if changed || now.is_multiple_of(FLAG_REFRESH_MS) {
            self.bus.publish(topics::SPEAKING_FLAGS, SPEAKING, now, Message::SpeakingFlags(flags))?;
            self.last_flags = Some(flags);
        }
        Ok(())
    }
}
