use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{decide, dispatch, Behavior, GlobalBehavior, LocalCommand};
use crate::bus::{Millis, Subscription};
use crate::config::PlannerConfig;
use crate::est::EnvironmentSnapshot;
use crate::messages::{topics, Message, MessageBus};
use crate::pipeline::{PipelineError, Worker};

const PLANNER: &str = "planner";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngagementOutcome {
    /// A conversation took place.
    Conversed,
    /// The approach was abandoned before a conversation started.
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EngagementEvent {
    Started {
        t: Millis,
        target: u64,
        decided_at: Millis,
    },
    Ended {
        t: Millis,
        target: u64,
        outcome: EngagementOutcome,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Context {
    Free,
    Approaching {
        target: u64,
        seen_navigating: bool,
        missing: u32,
    },
    Conversing {
        target: u64,
        seen_conversation: bool,
        waited: u32,
    },
    Homing,
}

/// Wraps the rule cascade with the engagement in progress: the approach
/// target stays fixed until arrival, the conversation runs to its end, and
/// after an engagement the robot goes home before choosing anyone else.
pub struct PlannerWorker {
    bus: MessageBus,
    cfg: PlannerConfig,
    max_age_ms: Millis,
    snapshots: Subscription,
    faults: Subscription,
    context: Context,
    current: GlobalBehavior,
}

impl PlannerWorker {
    pub fn new(bus: MessageBus, cfg: PlannerConfig, snapshot_period_ms: Millis) -> Result<Self, PipelineError> {
        Ok(Self {
            snapshots: bus.subscribe(topics::SNAPSHOT, PLANNER)?,
            faults: bus.subscribe(topics::MOVE_FAULT, PLANNER)?,
            bus,
            max_age_ms: cfg.max_snapshot_age_periods * snapshot_period_ms,
            cfg,
            context: Context::Free,
            current: GlobalBehavior {
                behavior: Behavior::Wait,
                decided_at: 0,
            },
        })
    }

    pub fn current(&self) -> GlobalBehavior {
        self.current
    }

    fn publish_commands(&self, now: Millis, cmds: Vec<LocalCommand>) -> Result<(), PipelineError> {
        for c in cmds {
            self.bus.publish(topics::COMMAND, PLANNER, now, Message::Command(c))?;
        }
        Ok(())
    }

    fn engagement(&self, now: Millis, ev: EngagementEvent) -> Result<(), PipelineError> {
        self.bus.publish(topics::ENGAGEMENT, PLANNER, now, Message::Engagement(ev))?;
        Ok(())
    }

    fn abort(&mut self, now: Millis, target: u64) -> Result<Behavior, PipelineError> {
        self.engagement(
            now,
            EngagementEvent::Ended {
                t: now,
                target,
                outcome: EngagementOutcome::Aborted,
            },
        )?;
        self.context = Context::Homing;
        Ok(Behavior::ReturnToObservation)
    }

    fn plan(&mut self, now: Millis, snap: &EnvironmentSnapshot, fault: bool) -> Result<(), PipelineError> {
        let decided = match decide(snap, now, self.max_age_ms) {
            Ok(b) => b.behavior,
            Err(e) => {
                warn!(%e, "skipping snapshot");
                return Ok(());
            }
        };
        let flags = snap.robot.flags;
        let mut arrival = false;
        let behavior = match self.context {
            Context::Free => match decided {
                Behavior::InitiateInteraction { target } => {
                    self.context = Context::Approaching {
                        target,
                        seen_navigating: false,
                        missing: 0,
                    };
                    self.engagement(
                        now,
                        EngagementEvent::Started {
                            t: now,
                            target,
                            decided_at: now,
                        },
                    )?;
                    decided
                }
                Behavior::ReturnToObservation => {
                    self.context = Context::Homing;
                    decided
                }
                other => other,
            },
            Context::Approaching {
                target,
                mut seen_navigating,
                mut missing,
            } => {
                missing = if snap.person(target).is_some() { 0 } else { missing + 1 };
                seen_navigating |= flags.navigating;
                if fault || missing >= self.cfg.target_lost_snapshots {
                    self.abort(now, target)?
                } else {
                    arrival = seen_navigating && !flags.navigating && !flags.at_standby;
                    self.context = if arrival {
                        Context::Conversing {
                            target,
                            seen_conversation: false,
                            waited: 0,
                        }
                    } else {
                        Context::Approaching {
                            target,
                            seen_navigating,
                            missing,
                        }
                    };
                    Behavior::InitiateInteraction { target }
                }
            }
            Context::Conversing {
                target,
                seen_conversation,
                waited,
            } => {
                let active = flags.in_conversation || flags.is_speaking;
                if seen_conversation && !active {
                    self.engagement(
                        now,
                        EngagementEvent::Ended {
                            t: now,
                            target,
                            outcome: EngagementOutcome::Conversed,
                        },
                    )?;
                    self.context = Context::Homing;
                    Behavior::ReturnToObservation
                } else if !seen_conversation && !active && waited + 1 >= self.cfg.target_lost_snapshots {
                    self.abort(now, target)?
                } else {
                    self.context = Context::Conversing {
                        target,
                        seen_conversation: seen_conversation || active,
                        waited: waited + 1,
                    };
                    Behavior::Continue
                }
            }
            Context::Homing => {
                if flags.at_standby && !flags.navigating {
                    self.context = Context::Free;
                    match decided {
                        Behavior::InitiateInteraction { target } => {
                            self.context = Context::Approaching {
                                target,
                                seen_navigating: false,
                                missing: 0,
                            };
                            self.engagement(
                                now,
                                EngagementEvent::Started {
                                    t: now,
                                    target,
                                    decided_at: now,
                                },
                            )?;
                        }
                        Behavior::ReturnToObservation => self.context = Context::Homing,
                        _ => {}
                    }
                    decided
                } else {
                    Behavior::ReturnToObservation
                }
            }
        };
        let cmds = dispatch(&behavior, &self.current.behavior, arrival);
        if behavior != self.current.behavior {
            self.current = GlobalBehavior {
                behavior,
                decided_at: now,
            };
        }
        self.bus
            .publish(topics::BEHAVIOR, PLANNER, now, Message::Behavior(self.current))?;
        self.publish_commands(now, cmds)
    }
}

impl Worker for PlannerWorker {
    fn name(&self) -> &'static str {
        PLANNER
    }

    fn step(&mut self, now: Millis) -> Result<(), PipelineError> {
        let fault = self
            .bus
            .poll(&self.faults)?
            .iter()
            .any(|e| matches!(e.payload(), Message::MoveFault(_)));
        let latest = self.bus.poll(&self.snapshots)?.pop();
        match latest {
            Some(env) => {
                if let Message::Snapshot(s) = env.payload() {
                    self.plan(now, s, fault)?;
                }
            }
            None if fault => {
                if let Context::Approaching { target, .. } = self.context {
                    let b = self.abort(now, target)?;
                    let cmds = dispatch(&b, &self.current.behavior, false);
                    self.current = GlobalBehavior {
                        behavior: b,
                        decided_at: now,
                    };
                    self.publish_commands(now, cmds)?;
                }
            }
            None => {}
        }
        Ok(())
    }
}
