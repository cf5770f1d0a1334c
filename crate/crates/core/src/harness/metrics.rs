use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::trace::{FlagChange, StopReason, TraceEvent, TraceLog};
use crate::actions::TerminationCause;
use crate::bus::Millis;
use crate::planner::EngagementOutcome;
use crate::simworld::BehaviorKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngagementClass {
    /// Decided before the target ever raised a hand.
    Proactive,
    Reactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementRecord {
    pub target: u64,
    pub actor: Option<String>,
    pub decided_at: Millis,
    pub started_at: Millis,
    pub ended_at: Option<Millis>,
    pub outcome: Option<EngagementOutcome>,
    pub class: EngagementClass,
    pub behavior: Option<BehaviorKind>,
    /// `decided_at` minus the start of the behavior the actor was showing.
    pub time_to_engagement_ms: Option<Millis>,
    pub conversation_ms: Option<Millis>,
    pub cause: Option<TerminationCause>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActorMetrics {
    pub engagements: u32,
    pub proactive: u32,
    pub reactive: u32,
    pub first_hand_raise: Option<Millis>,
    pub time_to_engagement_ms: Vec<Millis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub engagements_total: u32,
    pub engagements_proactive: u32,
    pub engagements_reactive: u32,
    pub approaches_aborted: u32,
    pub per_actor: BTreeMap<String, ActorMetrics>,
    pub conversation_durations_ms: Vec<Millis>,
    pub termination_causes: BTreeMap<TerminationCause, u32>,
    /// Every scripted actor finished at least one conversation.
    pub completion: bool,
    pub stop_reason: Option<StopReason>,
    pub virtual_ms: Millis,
}

/// Full engagement analysis of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub engagements: Vec<EngagementRecord>,
}

/// Rebuilds every engagement and metric from the trace alone.
pub fn analyze(trace: &TraceLog) -> Report {
    let mut first_raise: BTreeMap<String, Millis> = BTreeMap::new();
    let mut records: Vec<EngagementRecord> = Vec::new();
    let mut open: BTreeMap<u64, usize> = BTreeMap::new();
    let mut conv_open: BTreeMap<u64, Millis> = BTreeMap::new();
    let mut durations = Vec::new();
    let mut causes: BTreeMap<TerminationCause, u32> = BTreeMap::new();
    let mut stop_reason = None;
    let mut virtual_ms = 0;

    for e in &trace.events {
        virtual_ms = virtual_ms.max(e.t());
        match e {
            TraceEvent::FlagChange {
                t,
                change: FlagChange::Actor { actor, hand_raised: true },
            } => {
                first_raise.entry(actor.clone()).or_insert(*t);
            }
            TraceEvent::EngagementStart {
                t,
                target,
                decided_at,
                actor,
                behavior,
                behavior_since,
            } => {
                let raised = actor.as_ref().and_then(|a| first_raise.get(a));
                let class = match raised {
                    Some(&r) if r <= *decided_at => EngagementClass::Reactive,
                    _ => EngagementClass::Proactive,
                };
                open.insert(*target, records.len());
                records.push(EngagementRecord {
                    target: *target,
                    actor: actor.clone(),
                    decided_at: *decided_at,
                    started_at: *t,
                    ended_at: None,
                    outcome: None,
                    class,
                    behavior: *behavior,
                    time_to_engagement_ms: behavior_since.map(|s| decided_at.saturating_sub(s)),
                    conversation_ms: None,
                    cause: None,
                });
            }
            TraceEvent::EngagementEnd { t, target, outcome, .. } => {
                if let Some(i) = open.remove(target) {
                    records[i].ended_at = Some(*t);
                    records[i].outcome = Some(*outcome);
                }
            }
            TraceEvent::ConversationStart { t, partner } => {
                conv_open.insert(*partner, *t);
            }
            TraceEvent::TerminationCause { t, partner, cause, .. } => {
                *causes.entry(*cause).or_default() += 1;
                let d = conv_open.remove(partner).map(|s| t - s);
                if let Some(d) = d {
                    durations.push(d);
                }
                if let Some(&i) = open.get(partner) {
                    records[i].cause = Some(*cause);
                    records[i].conversation_ms = d;
                }
            }
            TraceEvent::RunEnd { reason, .. } => stop_reason = Some(*reason),
            _ => {}
        }
    }

    let mut per_actor: BTreeMap<String, ActorMetrics> = trace
        .header
        .actors
        .iter()
        .map(|a| {
            let m = ActorMetrics {
                first_hand_raise: first_raise.get(a).copied(),
                ..ActorMetrics::default()
            };
            (a.clone(), m)
        })
        .collect();
    let mut metrics = RunMetrics {
        engagements_total: 0,
        engagements_proactive: 0,
        engagements_reactive: 0,
        approaches_aborted: 0,
        per_actor: BTreeMap::new(),
        conversation_durations_ms: durations,
        termination_causes: causes,
        completion: false,
        stop_reason,
        virtual_ms,
    };
    for r in &records {
        if r.outcome == Some(EngagementOutcome::Aborted) {
            metrics.approaches_aborted += 1;
            continue;
        }
        metrics.engagements_total += 1;
        let proactive = r.class == EngagementClass::Proactive;
        if proactive {
            metrics.engagements_proactive += 1;
        } else {
            metrics.engagements_reactive += 1;
        }
        if let Some(a) = r.actor.as_ref().and_then(|a| per_actor.get_mut(a)) {
            a.engagements += 1;
            if proactive {
                a.proactive += 1;
            } else {
                a.reactive += 1;
            }
            a.time_to_engagement_ms.extend(r.time_to_engagement_ms);
        }
    }
    metrics.completion = !trace.header.actors.is_empty()
        && trace.header.actors.iter().all(|a| {
            records.iter().any(|r| {
                r.actor.as_deref() == Some(a.as_str()) && r.outcome == Some(EngagementOutcome::Conversed)
            })
        });
    metrics.per_actor = std::mem::take(&mut per_actor);
    Report {
        scenario: trace.header.scenario.clone(),
        seed: trace.header.seed,
        metrics,
        engagements: records,
    }
}

pub fn metrics_from_trace(trace: &TraceLog) -> RunMetrics {
    analyze(trace).metrics
}

impl Report {
    /// The machine-readable form: one JSON document.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let m = &self.metrics;
        let mut s = String::new();
        let _ = writeln!(s, "scenario {} (seed {})", self.scenario, self.seed);
        let _ = writeln!(
            s,
            "virtual time {} ms, stopped by {}",
            m.virtual_ms,
            match m.stop_reason {
                Some(StopReason::AllEngaged) => "completion",
                Some(StopReason::TimeLimit) => "time limit",
                None => "unknown",
            }
        );
        let _ = writeln!(
            s,
            "engagements {} (proactive {}, reactive {}), aborted approaches {}, completion {}",
            m.engagements_total, m.engagements_proactive, m.engagements_reactive, m.approaches_aborted, m.completion
        );
        for (actor, a) in &m.per_actor {
            let raise = a.first_hand_raise.map_or("never".to_string(), |t| format!("{t} ms"));
            let _ = writeln!(s, "  {actor}: {} engagement(s), first hand raise {raise}", a.engagements);
            for r in self.engagements.iter().filter(|r| r.actor.as_deref() == Some(actor.as_str())) {
                let _ = writeln!(s, "    {}", describe(r));
            }
        }
        for r in self.engagements.iter().filter(|r| r.actor.is_none()) {
            let _ = writeln!(s, "  unattributed: {}", describe(r));
        }
        if m.termination_causes.is_empty() {
            let _ = writeln!(s, "no conversations");
        } else {
            let _ = writeln!(s, "termination causes:");
            for (c, n) in &m.termination_causes {
                let _ = writeln!(s, "  {}: {n}", serde_json::to_string(c).unwrap_or_default().trim_matches('"'));
            }
        }
        s
    }
}

fn describe(r: &EngagementRecord) -> String {
    let class = match r.class {
        EngagementClass::Proactive => "proactive",
        EngagementClass::Reactive => "reactive",
    };
    let mut s = format!("identity {} decided at {} ms ({class})", r.target, r.decided_at);
    if let Some(tte) = r.time_to_engagement_ms {
        let _ = write!(s, ", {tte} ms after behavior onset");
    }
    match (r.ended_at, r.outcome) {
        (Some(end), Some(EngagementOutcome::Conversed)) => {
            let _ = write!(s, ", conversed until {end} ms");
        }
        (Some(end), Some(EngagementOutcome::Aborted)) => {
            let _ = write!(s, ", aborted at {end} ms");
        }
        _ => s.push_str(", still open at run end"),
    }
    if let Some(c) = r.cause {
        let _ = write!(s, ", ended by {}", serde_json::to_string(&c).unwrap_or_default().trim_matches('"'));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::trace::TraceHeader;

    fn start(t: Millis, target: u64, actor: &str) -> TraceEvent {
        TraceEvent::EngagementStart {
            t,
            target,
            decided_at: t,
            actor: Some(actor.into()),
            behavior: Some(BehaviorKind::ShowInterest),
            behavior_since: Some(t - 500),
        }
    }

    fn end(t: Millis, target: u64, outcome: EngagementOutcome) -> TraceEvent {
        TraceEvent::EngagementEnd {
            t,
            target,
            outcome,
            actor: None,
        }
    }

    #[test]
    fn empty_trace_gives_zero_metrics() {
        let trace = TraceLog {
            header: TraceHeader::new("empty", 1, 1000, vec![]),
            events: vec![],
        };
        let m = metrics_from_trace(&trace);
        assert_eq!(m.engagements_total, 0);
        assert!(!m.completion);
        assert!(m.conversation_durations_ms.is_empty());
    }

    #[test]
    fn classification_compares_against_first_raise() {
        let raise = |t, a: &str| TraceEvent::FlagChange {
            t,
            change: FlagChange::Actor {
                actor: a.into(),
                hand_raised: true,
            },
        };
        let trace = TraceLog {
            header: TraceHeader::new("x", 1, 100_000, vec!["a".into(), "b".into()]),
            events: vec![
                start(1000, 1, "a"),
                raise(1500, "a"),
                end(5000, 1, EngagementOutcome::Conversed),
                raise(6000, "b"),
                start(6000, 2, "b"),
                end(9000, 2, EngagementOutcome::Aborted),
                start(9500, 2, "b"),
                end(12_000, 2, EngagementOutcome::Conversed),
            ],
        };
        let m = metrics_from_trace(&trace);
        assert_eq!(m.engagements_total, 2);
        assert_eq!(m.engagements_proactive, 1);
        assert_eq!(m.engagements_reactive, 1);
        assert_eq!(m.approaches_aborted, 1);
        assert!(m.completion);
        assert_eq!(m.per_actor["a"].time_to_engagement_ms, vec![500]);
    }
}
