//! Action planner: one global behavior per snapshot, and the local
//! commands that realize it.

mod worker;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::Millis;
use crate::est::{EnvironmentSnapshot, PersonState};

pub use worker::{EngagementEvent, EngagementOutcome, PlannerWorker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    Wait,
    ReturnToObservation,
    InitiateInteraction { target: u64 },
    Continue,
}

impl Behavior {
    pub fn target(&self) -> Option<u64> {
        match self {
            Self::InitiateInteraction { target } => Some(*target),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalBehavior {
    #[serde(flatten)]
    pub behavior: Behavior,
    pub decided_at: Millis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionModule {
    Moving,
    Speaking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "directive", rename_all = "snake_case")]
pub enum Directive {
    ApproachPerson { identity: u64 },
    ReturnHome,
    StartConversation { identity: u64 },
    StopConversation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalCommand {
    pub module: ActionModule,
    #[serde(flatten)]
    pub directive: Directive,
}

impl LocalCommand {
    pub fn new(directive: Directive) -> Self {
        let module = match directive {
            Directive::ApproachPerson { .. } | Directive::ReturnHome => ActionModule::Moving,
            Directive::StartConversation { .. } | Directive::StopConversation => ActionModule::Speaking,
        };
        Self { module, directive }
    }
}

/// Feedback flags of both action modules as seen by the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModuleFlags {
    pub at_standby: bool,
    pub navigating: bool,
    pub is_speaking: bool,
    pub in_conversation: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlannerError {
    #[error("snapshot from {snapshot_t} ms is {age} ms old at {now} ms")]
    StaleSnapshot {
        snapshot_t: Millis,
        now: Millis,
        age: Millis,
    },
}

/// Boolean abstraction of a snapshot, the only inputs the rule cascade
/// looks at besides the choice of target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RuleInputs {
    pub conversing: bool,
    pub navigating: bool,
    pub any_available: bool,
    pub at_standby: bool,
}

/// Behavior class selected by the cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    Continue,
    Initiate,
    Return,
    Wait,
}

impl RuleInputs {
    pub fn of(s: &EnvironmentSnapshot) -> Self {
        Self {
            conversing: s.robot.flags.in_conversation || s.robot.flags.is_speaking,
            navigating: s.robot.flags.navigating,
            any_available: s.persons.iter().any(|p| p.available_for_engagement),
            at_standby: s.robot.flags.at_standby,
        }
    }

    pub fn rule(&self) -> Rule {
        if self.conversing || self.navigating {
            Rule::Continue
        } else if self.any_available {
            Rule::Initiate
        } else if !self.at_standby {
            Rule::Return
        } else {
            Rule::Wait
        }
    }
}

/// Highest IAB among available persons; ties prefer a raised hand, then
/// the earliest first sighting, then the lowest identity.
pub fn best_target(persons: &[PersonState]) -> Option<&PersonState> {
    persons
        .iter()
        .filter(|p| p.available_for_engagement)
        .min_by(|a, b| {
            b.iab
                .total_cmp(&a.iab)
                .then(b.hand_raised.cmp(&a.hand_raised))
                .then(a.first_seen.cmp(&b.first_seen))
                .then(a.identity_id.cmp(&b.identity_id))
        })
}

/// The rule cascade. Fails on a snapshot older than `max_age` ms.
pub fn decide(snapshot: &EnvironmentSnapshot, now: Millis, max_age: Millis) -> Result<GlobalBehavior, PlannerError> {
    let age = now.saturating_sub(snapshot.t);
    if age > max_age {
        return Err(PlannerError::StaleSnapshot {
            snapshot_t: snapshot.t,
            now,
            age,
        });
    }
    let behavior = match RuleInputs::of(snapshot).rule() {
        Rule::Continue => Behavior::Continue,
        Rule::Initiate => Behavior::InitiateInteraction {
            target: best_target(&snapshot.persons)
                .expect("an available person exists")
                .identity_id,
        },
        Rule::Return => Behavior::ReturnToObservation,
        Rule::Wait => Behavior::Wait,
    };
    Ok(GlobalBehavior {
        behavior,
        decided_at: now,
    })
}

/// Commands triggered by a behavior transition. `arrival` is the
/// navigation falling edge while approaching.
pub fn dispatch(behavior: &Behavior, prev: &Behavior, arrival: bool) -> Vec<LocalCommand> {
    if arrival {
        if let Behavior::InitiateInteraction { target } = behavior {
            return vec![LocalCommand::new(Directive::StartConversation { identity: *target })];
        }
    }
    if behavior == prev {
        return Vec::new();
    }
    match behavior {
        Behavior::InitiateInteraction { target } => {
            vec![LocalCommand::new(Directive::ApproachPerson { identity: *target })]
        }
        Behavior::ReturnToObservation => vec![LocalCommand::new(Directive::ReturnHome)],
        Behavior::Wait | Behavior::Continue => Vec::new(),
    }
}
