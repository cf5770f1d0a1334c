use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::bus::Millis;
use crate::config::Config;
use crate::geometry::normalize;
use crate::simworld::{ActorScript, RoomConfig, EMBEDDING_DIM};

pub const SCHEMA_VERSION: u32 = 1;

/// Seed offset for appearance generation, kept apart from the sensor stream.
const APPEARANCE_STREAM: u64 = 0xA11E_A2A0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    /// Time limit of the run in virtual milliseconds.
    pub duration_ms: Millis,
    #[serde(default)]
    pub room: RoomConfig,
    pub actors: Vec<ActorScript>,
    #[serde(default)]
    pub config: Config,
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> HarnessError {
    HarnessError::ScenarioInvalid {
        path: path.into(),
        reason: reason.into(),
    }
}

impl Scenario {
    /// Parses and validates, reporting the path of the first offending field.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(path, e.into_inner().to_string())
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Reads a scenario file. A `dialogue.responses_path` is resolved
    /// relative to the file and merged into the response table.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut scenario = Self::from_json(&text)?;
        if let Some(rel) = scenario.config.dialogue.responses_path.take() {
            let full = path.parent().unwrap_or(Path::new(".")).join(&rel);
            let table = std::fs::read_to_string(&full).map_err(|e| HarnessError::io(&full, e))?;
            let extra: BTreeMap<String, String> = serde_json::from_str(&table)
                .map_err(|e| invalid("config.dialogue.responses_path", e.to_string()))?;
            scenario.config.dialogue.responses.extend(extra);
        }
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if self.duration_ms == 0 {
            return Err(invalid("duration_ms", "must be positive"));
        }
        if !(self.room.width > 0.0 && self.room.depth > 0.0) {
            return Err(invalid("room", "width and depth must be positive"));
        }
        if !self.room.sensor_rate_hz.is_finite() || self.room.sensor_rate_hz <= 0.0 {
            return Err(invalid("room.sensor_rate_hz", "must be positive"));
        }
        if !self.room.contains(&self.room.observation_pose.position()) {
            return Err(invalid("room.observation_pose", "outside the room"));
        }
        let mut ids = BTreeSet::new();
        for (i, a) in self.actors.iter().enumerate() {
            let at = |field: &str| format!("actors[{i}].{field}");
            if a.id.is_empty() {
                return Err(invalid(at("id"), "must not be empty"));
            }
            if !ids.insert(a.id.as_str()) {
                return Err(invalid(at("id"), format!("duplicate actor id {:?}", a.id)));
            }
            if !self.room.contains(&a.spawn.position()) {
                return Err(invalid(at("spawn"), "outside the room"));
            }
            if a.timeline.is_empty() {
                return Err(invalid(at("timeline"), "needs at least one entry"));
            }
            if a.timeline.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(invalid(at("timeline"), "start times must increase strictly"));
            }
            if !a.appearance.is_empty() {
                if a.appearance.len() != EMBEDDING_DIM {
                    return Err(invalid(
                        at("appearance"),
                        format!("expected {EMBEDDING_DIM} components, got {}", a.appearance.len()),
                    ));
                }
                let n: f64 = a.appearance.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !(n.is_finite() && n > 0.0) {
                    return Err(invalid(at("appearance"), "must be a non-zero finite vector"));
                }
            }
        }
        self.config.check().map_err(|(p, r)| invalid(p, r))?;
        let tick = self.config.harness.tick_ms;
        if !self.room.sensor_period_ms().is_multiple_of(tick) {
            return Err(invalid(
                "room.sensor_rate_hz",
                "sensor period must be a multiple of harness.tick_ms",
            ));
        }
        Ok(())
    }

    /// Actor scripts with every missing appearance filled in. Generated
    /// vectors are Gram-Schmidt orthogonalized against the others while
    /// the dimension allows, so distinct actors stay well separated.
    pub fn resolved_actors(&self) -> Vec<ActorScript> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ APPEARANCE_STREAM);
        let mut basis: Vec<Vec<f64>> = self
            .actors
            .iter()
            .filter(|a| !a.appearance.is_empty())
            .map(|a| normalize(&a.appearance))
            .collect();
        let mut out = self.actors.clone();
        for a in out.iter_mut().filter(|a| a.appearance.is_empty()) {
            let v = loop {
                let mut v: Vec<f64> = (0..EMBEDDING_DIM).map(|_| StandardNormal.sample(&mut rng)).collect();
                if basis.len() < EMBEDDING_DIM {
                    for b in &basis {
                        let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                        v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
                    }
                }
                let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 1e-6 {
                    break normalize(&v);
                }
            };
            basis.push(v.clone());
            a.appearance = v;
        }
        out
    }
}
