use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::actions::{ConversationEvent, ConversationPhase, MoveMode, MovingFlags, SpeakingFlags, TerminationCause};
use crate::bus::{Envelope, Millis};
use crate::est::EnvironmentSnapshot;
use crate::messages::Message;
use crate::planner::{Behavior, EngagementEvent, EngagementOutcome, GlobalBehavior, LocalCommand, ModuleFlags};
use crate::simworld::{BehaviorKind, GroundTruth};

pub const TRACE_SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// First line of every trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub kind: String,
    pub schema_version: u32,
    pub artifact_version: String,
    pub scenario: String,
    pub seed: u64,
    pub duration_ms: Millis,
    pub actors: Vec<String>,
}

impl TraceHeader {
    pub fn new(scenario: &str, seed: u64, duration_ms: Millis, actors: Vec<String>) -> Self {
        Self {
            kind: "header".into(),
            schema_version: TRACE_SCHEMA_VERSION,
            artifact_version: ARTIFACT_VERSION.into(),
            scenario: scenario.into(),
            seed,
            duration_ms,
            actors,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Every actor finished an engagement.
    AllEngaged,
    /// The scenario duration elapsed.
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum FlagChange {
    Moving {
        at_standby: bool,
        navigating: bool,
        #[serde(flatten)]
        mode: MoveMode,
    },
    Speaking {
        is_speaking: bool,
        in_conversation: bool,
        phase: ConversationPhase,
    },
    /// Ground-truth hand raise of a scripted actor.
    Actor { actor: String, hand_raised: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    RunStart {
        t: Millis,
    },
    Publish {
        t: Millis,
        seq: u64,
        topic: String,
        producer: String,
        digest: String,
    },
    Decision {
        t: Millis,
        behavior: GlobalBehavior,
    },
    Command {
        t: Millis,
        command: LocalCommand,
    },
    FlagChange {
        t: Millis,
        #[serde(flatten)]
        change: FlagChange,
    },
    EngagementStart {
        t: Millis,
        target: u64,
        decided_at: Millis,
        /// Scripted actor nearest to the target when the decision was made.
        actor: Option<String>,
        behavior: Option<BehaviorKind>,
        behavior_since: Option<Millis>,
    },
    EngagementEnd {
        t: Millis,
        target: u64,
        outcome: EngagementOutcome,
        actor: Option<String>,
    },
    ConversationStart {
        t: Millis,
        partner: u64,
    },
    TerminationCause {
        t: Millis,
        partner: u64,
        cause: TerminationCause,
        terminated_at: Millis,
        last_user_activity: Millis,
    },
    RunEnd {
        t: Millis,
        reason: StopReason,
        open_engagements: Vec<u64>,
    },
}

impl TraceEvent {
    pub fn t(&self) -> Millis {
        match self {
            Self::RunStart { t }
            | Self::Publish { t, .. }
            | Self::Decision { t, .. }
            | Self::Command { t, .. }
            | Self::FlagChange { t, .. }
            | Self::EngagementStart { t, .. }
            | Self::EngagementEnd { t, .. }
            | Self::ConversationStart { t, .. }
            | Self::TerminationCause { t, .. }
            | Self::RunEnd { t, .. } => *t,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trace events serialize")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceLog {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
}

impl TraceLog {
    /// JSON-Lines text: the header, then one event per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for e in &self.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |n: usize, e: serde_json::Error| HarnessError::TraceInvalid {
            line: n + 1,
            reason: e.to_string(),
        };
        let (n, first) = lines.next().ok_or(HarnessError::TraceInvalid {
            line: 1,
            reason: "empty trace".into(),
        })?;
        let header: TraceHeader = serde_json::from_str(first).map_err(|e| bad(n, e))?;
        let events = lines
            .map(|(n, l)| serde_json::from_str(l).map_err(|e| bad(n, e)))
            .collect::<Result<_, _>>()?;
        Ok(Self { header, events })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }
}

/// Short content hash of a payload.
pub fn digest(m: &Message) -> String {
    let bytes = serde_json::to_vec(m).expect("messages serialize");
    let hash = Sha256::digest(&bytes);
    hash[..8].iter().fold(String::with_capacity(16), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagViolation {
    pub t: Millis,
    pub topic: String,
    pub rule: String,
}

/// Checks every published flag set against the coupling rules.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagMonitor {
    pub checked: u64,
    pub violations: Vec<FlagViolation>,
}

impl FlagMonitor {
    fn fail(&mut self, t: Millis, topic: &str, rule: &str) {
        self.violations.push(FlagViolation {
            t,
            topic: topic.into(),
            rule: rule.into(),
        });
    }

    pub fn check_moving(&mut self, topic: &str, f: &MovingFlags) {
        self.checked += 1;
        if f.navigating && f.at_standby {
            self.fail(f.t, topic, "navigating implies not at_standby");
        }
    }

    pub fn check_speaking(&mut self, topic: &str, f: &SpeakingFlags) {
        self.checked += 1;
        if f.is_speaking != (f.phase == ConversationPhase::Speaking) {
            self.fail(f.t, topic, "is_speaking iff phase is speaking");
        }
        if f.in_conversation != (f.phase != ConversationPhase::Idle) {
            self.fail(f.t, topic, "in_conversation iff phase is not idle");
        }
    }

    pub fn check_module(&mut self, t: Millis, topic: &str, f: &ModuleFlags) {
        self.checked += 1;
        if f.navigating && f.at_standby {
            self.fail(t, topic, "navigating implies not at_standby");
        }
        if f.is_speaking && !f.in_conversation {
            self.fail(t, topic, "is_speaking implies in_conversation");
        }
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Running engagement tallies, kept alongside the trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tally {
    /// Actor of every open engagement, by target identity.
    pub open: BTreeMap<u64, Option<String>>,
    /// Actors with at least one engagement that reached a conversation.
    pub conversed: BTreeSet<String>,
    pub first_hand_raise: BTreeMap<String, Millis>,
}

/// Bus hook that turns the publish stream into trace events.
#[derive(Debug, Default)]
pub struct Recorder {
    pub events: Vec<TraceEvent>,
    pub monitor: FlagMonitor,
    pub tally: Tally,
    behavior: Option<Behavior>,
    moving: Option<(bool, bool, MoveMode)>,
    speaking: Option<(bool, bool, ConversationPhase)>,
    hands: BTreeMap<String, bool>,
    snapshot: Option<EnvironmentSnapshot>,
    truth: Option<GroundTruth>,
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: TraceEvent) {
        self.events.push(e);
    }

    pub fn on_publish(&mut self, env: &Envelope<Message>) {
        let t = env.ts;
        let m = env.payload();
        self.events.push(TraceEvent::Publish {
            t,
            seq: env.seq,
            topic: env.topic.to_string(),
            producer: env.producer.to_string(),
            digest: digest(m),
        });
        match m {
            Message::Truth(truth) => {
                for a in &truth.actors {
                    let prev = self.hands.insert(a.id.clone(), a.hand_raised).unwrap_or(false);
                    if prev != a.hand_raised {
                        if a.hand_raised {
                            self.tally.first_hand_raise.entry(a.id.clone()).or_insert(t);
                        }
                        self.events.push(TraceEvent::FlagChange {
                            t,
                            change: FlagChange::Actor {
                                actor: a.id.clone(),
                                hand_raised: a.hand_raised,
                            },
                        });
                    }
                }
                self.truth = Some(truth.clone());
            }
            Message::Snapshot(s) => {
                self.monitor.check_module(t, &env.topic, &s.robot.flags);
                self.snapshot = Some(s.clone());
            }
            Message::Behavior(b) => {
                if self.behavior.as_ref() != Some(&b.behavior) {
                    self.behavior = Some(b.behavior);
                    self.events.push(TraceEvent::Decision { t, behavior: *b });
                }
            }
            Message::Command(c) => self.events.push(TraceEvent::Command { t, command: *c }),
            Message::MovingFlags(f) => {
                self.monitor.check_moving(&env.topic, f);
                let key = (f.at_standby, f.navigating, f.mode);
                if self.moving != Some(key) {
                    self.moving = Some(key);
                    self.events.push(TraceEvent::FlagChange {
                        t,
                        change: FlagChange::Moving {
                            at_standby: f.at_standby,
                            navigating: f.navigating,
                            mode: f.mode,
                        },
                    });
                }
            }
            Message::SpeakingFlags(f) => {
                self.monitor.check_speaking(&env.topic, f);
                let key = (f.is_speaking, f.in_conversation, f.phase);
                if self.speaking != Some(key) {
                    self.speaking = Some(key);
                    self.events.push(TraceEvent::FlagChange {
                        t,
                        change: FlagChange::Speaking {
                            is_speaking: f.is_speaking,
                            in_conversation: f.in_conversation,
                            phase: f.phase,
                        },
                    });
                }
            }
            Message::Engagement(EngagementEvent::Started { target, decided_at, .. }) => {
                let truth_actor = self.actor_for(*target);
                let actor = truth_actor.as_ref().map(|a| a.0.clone());
                self.tally.open.insert(*target, actor.clone());
                self.events.push(TraceEvent::EngagementStart {
                    t,
                    target: *target,
                    decided_at: *decided_at,
                    actor,
                    behavior: truth_actor.as_ref().map(|a| a.1),
                    behavior_since: truth_actor.map(|a| a.2),
                });
            }
            Message::Engagement(EngagementEvent::Ended { target, outcome, .. }) => {
                let actor = self.tally.open.remove(target).flatten();
                if *outcome == EngagementOutcome::Conversed {
                    if let Some(a) = &actor {
                        self.tally.conversed.insert(a.clone());
                    }
                }
                self.events.push(TraceEvent::EngagementEnd {
                    t,
                    target: *target,
                    outcome: *outcome,
                    actor,
                });
            }
            Message::Conversation(ConversationEvent::Started { partner, .. }) => {
                self.events.push(TraceEvent::ConversationStart { t, partner: *partner });
            }
            Message::Conversation(ConversationEvent::Ended {
                partner,
                cause,
                terminated_at,
                last_user_activity,
                ..
            }) => self.events.push(TraceEvent::TerminationCause {
                t,
                partner: *partner,
                cause: *cause,
                terminated_at: *terminated_at,
                last_user_activity: *last_user_activity,
            }),
            _ => {}
        }
    }

    /// Truth actor nearest to the identity's last snapshot position, with
    /// that actor's behavior and its start time.
    fn actor_for(&self, identity: u64) -> Option<(String, BehaviorKind, Millis)> {
        let person = self.snapshot.as_ref()?.person(identity)?;
        let truth = self.truth.as_ref()?;
        truth
            .actors
            .iter()
            .min_by(|a, b| {
                let da = a.position.distance(&person.position);
                let db = b.position.distance(&person.position);
                da.total_cmp(&db).then_with(|| a.id.cmp(&b.id))
            })
            .map(|a| (a.id.clone(), a.behavior, a.behavior_since))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trips_through_jsonl() {
        let log = TraceLog {
            header: TraceHeader::new("x", 9, 1000, vec!["a".into()]),
            events: vec![
                TraceEvent::RunStart { t: 0 },
                TraceEvent::FlagChange {
                    t: 10,
                    change: FlagChange::Moving {
                        at_standby: false,
                        navigating: true,
                        mode: MoveMode::Approaching { identity: 3 },
                    },
                },
                TraceEvent::RunEnd {
                    t: 20,
                    reason: StopReason::TimeLimit,
                    open_engagements: vec![],
                },
            ],
        };
        let text = log.to_jsonl();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(TraceLog::parse(&text).unwrap(), log);
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = format!(
            "{}\n{{\"kind\":\"nonsense\"}}\n",
            serde_json::to_string(&TraceHeader::new("x", 1, 1, vec![])).unwrap()
        );
        assert!(matches!(
            TraceLog::parse(&text),
            Err(HarnessError::TraceInvalid { line: 2, .. })
        ));
    }

    #[test]
    fn monitor_flags_inconsistent_sets() {
        let mut m = FlagMonitor::default();
        m.check_speaking(
            "s",
            &SpeakingFlags {
                t: 5,
                is_speaking: true,
                in_conversation: true,
                phase: ConversationPhase::Listening,
            },
        );
        m.check_moving(
            "m",
            &MovingFlags {
                t: 6,
                at_standby: true,
                navigating: false,
                mode: MoveMode::IdleAtHome,
            },
        );
        assert_eq!(m.checked, 2);
        assert_eq!(m.violations.len(), 1);
        assert_eq!(m.violations[0].t, 5);
    }
}
