//! Every tunable of the pipeline, with the defaults used by the canonical
//! scenarios. A scenario may override any subset under its `config` key.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bus::Millis;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub noise: NoiseConfig,
    pub audio: AudioConfig,
    pub actors: ActorConfig,
    pub vad: VadConfig,
    pub tracker: TrackerConfig,
    pub iab: IabConfig,
    pub diarization: DiarizationConfig,
    pub transcription: TranscriptionConfig,
    pub est: EstConfig,
    pub planner: PlannerConfig,
    pub moving: MovingConfig,
    pub speaking: SpeakingConfig,
    pub dialogue: DialogueConfig,
    pub bus: BusConfig,
    pub harness: HarnessConfig,
}

/// Sensor noise standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma_azimuth: f64,
    pub sigma_distance: f64,
    pub sigma_doa: f64,
    pub sigma_embedding: f64,
    pub sigma_energy: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_azimuth: 0.02,
            sigma_distance: 0.05,
            sigma_doa: 0.1,
            sigma_embedding: 0.05,
            sigma_energy: 0.1,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            sigma_azimuth: 0.0,
            sigma_distance: 0.0,
            sigma_doa: 0.0,
            sigma_embedding: 0.0,
            sigma_energy: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioConfig {
    pub noise_floor_base: f64,
    /// Energy contributed by one talker at 1 m; falls off with 1/d^2.
    pub speech_energy_at_1m: f64,
    pub mic_range: f64,
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self {
            noise_floor_base: 1.0,
            speech_energy_at_1m: 3.0,
            mic_range: 8.0,
        }
    }
}

/// Timing of scripted participant behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActorConfig {
    pub talk_turn_ms: Millis,
    /// Portion of each turn actually spent talking.
    pub talk_speech_ms: Millis,
    pub reply_delay_ms: Millis,
    pub utterance_ms_per_char: Millis,
    pub utterance_min_ms: Millis,
    /// Robot speech is addressed to the nearest actor within this radius.
    pub address_radius: f64,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self {
            talk_turn_ms: 3000,
            talk_speech_ms: 2200,
            reply_delay_ms: 1000,
            utterance_ms_per_char: 60,
            utterance_min_ms: 600,
            address_radius: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VadConfig {
    pub alpha: f64,
    pub k: f64,
    pub onset_frames: u32,
    pub hangover_frames: u32,
    /// Starting noise floor; `audio.noise_floor_base` when unset.
    pub initial_floor: Option<f64>,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            k: 2.5,
            onset_frames: 2,
            hangover_frames: 5,
            initial_floor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub w_pos: f64,
    pub w_app: f64,
    pub gate: f64,
    pub confirm_hits: u32,
    pub lost_misses: u32,
    /// Weight of a new measurement in the room-frame position average.
    pub position_ema: f64,
    pub appearance_ema: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            w_pos: 1.0,
            w_app: 1.0,
            gate: 0.6,
            confirm_hits: 3,
            lost_misses: 30,
            position_ema: 0.3,
            appearance_ema: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IabConfig {
    pub tau_up_ms: f64,
    pub tau_down_ms: f64,
}

impl Default for IabConfig {
    fn default() -> Self {
        Self {
            tau_up_ms: 1500.0,
            tau_down_ms: 4000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiarizationConfig {
    pub gate_doa: f64,
    pub window_ms: Millis,
    pub min_score: f64,
}

impl Default for DiarizationConfig {
    fn default() -> Self {
        Self {
            gate_doa: 0.2,
            window_ms: 500,
            min_score: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranscriptionConfig {
    /// External transcription endpoint; simulated source when unset.
    pub url: Option<String>,
    pub timeout_ms: u64,
    pub language: String,
}

impl Default for TranscriptionConfig {
    fn default() -> Self {
        Self {
            url: None,
            timeout_ms: 2000,
            language: "en".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstConfig {
    pub period_ms: Millis,
    pub staleness_ms: Millis,
    pub tau_reid: f64,
    pub centroid_ema: f64,
    pub theta_iab: f64,
    pub sustain_ms: Millis,
}

impl Default for EstConfig {
    fn default() -> Self {
        Self {
            period_ms: 100,
            staleness_ms: 300,
            tau_reid: 0.6,
            centroid_ema: 0.1,
            theta_iab: 0.7,
            sustain_ms: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Consecutive snapshots without the approach target before giving up.
    pub target_lost_snapshots: u32,
    /// Maximum snapshot age, in snapshot periods.
    pub max_snapshot_age_periods: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            target_lost_snapshots: 10,
            max_snapshot_age_periods: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MovingConfig {
    pub standoff: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub k_omega: f64,
    pub heading_gate: f64,
    pub arrival_tolerance: f64,
    pub facing_tolerance: f64,
}

impl Default for MovingConfig {
    fn default() -> Self {
        Self {
            standoff: 0.7,
            v_max: 0.5,
            omega_max: 1.0,
            k_omega: 2.0,
            heading_gate: 0.2,
            arrival_tolerance: 0.05,
            facing_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeakingConfig {
    pub ms_per_char: Millis,
    pub response_timeout_ms: Millis,
    pub keywords: Vec<String>,
    pub greeting: String,
    pub farewell: String,
    pub apology: String,
    pub disengage_snapshots: u32,
}

impl Default for SpeakingConfig {
    fn default() -> Self {
        Self {
            ms_per_char: 50,
            response_timeout_ms: 10_000,
            keywords: vec!["goodbye".into(), "bye".into(), "stop".into()],
            greeting: "Hello! Can I help you with anything?".into(),
            farewell: "Goodbye, have a nice day.".into(),
            apology: "Sorry, I cannot answer right now. Goodbye.".into(),
            disengage_snapshots: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyModel {
    Fixed { ms: Millis },
    Uniform { min: Millis, max: Millis },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DialogueConfig {
    /// External dialogue endpoint; scripted table when unset.
    pub url: Option<String>,
    pub timeout_ms: Millis,
    pub latency: LatencyModel,
    /// Exact-match user text to reply.
    pub responses: BTreeMap<String, String>,
    /// JSON response table file merged over `responses`.
    pub responses_path: Option<String>,
    pub default_reply: String,
}

impl Default for DialogueConfig {
    fn default() -> Self {
        let responses = [
            ("hello", "Hello, how can I help?"),
            (
                "where is the toilet",
                "The toilets are down the corridor on your left.",
            ),
            (
                "when is my appointment",
                "The doctor will call you shortly, please stay seated.",
            ),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        Self {
            url: None,
            timeout_ms: 15_000,
            latency: LatencyModel::Uniform {
                min: 5000,
                max: 10_000,
            },
            responses,
            responses_path: None,
            default_reply: "I am not sure, please ask at the reception desk.".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BusConfig {
    pub raw_capacity: usize,
    pub refined_capacity: usize,
    pub event_capacity: usize,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self {
            raw_capacity: 64,
            refined_capacity: 32,
            event_capacity: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub tick_ms: Millis,
    /// Halt once every actor has finished an engagement.
    pub stop_on_completion: bool,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            tick_ms: 10,
            stop_on_completion: true,
        }
    }
}

impl Config {
    /// Returns `(field path, reason)` for the first out-of-range value.
    pub fn check(&self) -> Result<(), (String, String)> {
        fn pos(path: &str, v: f64) -> Result<(), (String, String)> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err((path.into(), format!("must be positive, got {v}")))
            }
        }
        fn non_neg(path: &str, v: f64) -> Result<(), (String, String)> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err((path.into(), format!("must be non-negative, got {v}")))
            }
        }
        fn unit(path: &str, v: f64) -> Result<(), (String, String)> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err((path.into(), format!("must lie in [0, 1], got {v}")))
            }
        }
        let n = &self.noise;
        non_neg("config.noise.sigma_azimuth", n.sigma_azimuth)?;
        non_neg("config.noise.sigma_distance", n.sigma_distance)?;
        non_neg("config.noise.sigma_doa", n.sigma_doa)?;
        non_neg("config.noise.sigma_embedding", n.sigma_embedding)?;
        non_neg("config.noise.sigma_energy", n.sigma_energy)?;
        pos("config.audio.noise_floor_base", self.audio.noise_floor_base)?;
        non_neg("config.audio.speech_energy_at_1m", self.audio.speech_energy_at_1m)?;
        pos("config.vad.alpha", self.vad.alpha)?;
        unit("config.vad.alpha", self.vad.alpha)?;
        if self.vad.k <= 1.0 {
            return Err(("config.vad.k".into(), "must exceed 1".into()));
        }
        pos("config.vad.onset_frames", self.vad.onset_frames as f64)?;
        pos("config.vad.hangover_frames", self.vad.hangover_frames as f64)?;
        pos("config.tracker.gate", self.tracker.gate)?;
        unit("config.tracker.position_ema", self.tracker.position_ema)?;
        unit("config.tracker.appearance_ema", self.tracker.appearance_ema)?;
        pos("config.tracker.confirm_hits", self.tracker.confirm_hits as f64)?;
        pos("config.tracker.lost_misses", self.tracker.lost_misses as f64)?;
        pos("config.iab.tau_up_ms", self.iab.tau_up_ms)?;
        pos("config.iab.tau_down_ms", self.iab.tau_down_ms)?;
        pos("config.diarization.gate_doa", self.diarization.gate_doa)?;
        pos("config.diarization.window_ms", self.diarization.window_ms as f64)?;
        pos("config.est.period_ms", self.est.period_ms as f64)?;
        unit("config.est.tau_reid", self.est.tau_reid)?;
        unit("config.est.centroid_ema", self.est.centroid_ema)?;
        unit("config.est.theta_iab", self.est.theta_iab)?;
        pos("config.moving.v_max", self.moving.v_max)?;
        pos("config.moving.omega_max", self.moving.omega_max)?;
        pos("config.moving.k_omega", self.moving.k_omega)?;
        pos("config.moving.arrival_tolerance", self.moving.arrival_tolerance)?;
        non_neg("config.moving.standoff", self.moving.standoff)?;
        pos("config.speaking.response_timeout_ms", self.speaking.response_timeout_ms as f64)?;
        if let LatencyModel::Uniform { min, max } = self.dialogue.latency {
            if min > max {
                return Err((
                    "config.dialogue.latency".into(),
                    format!("uniform min {min} exceeds max {max}"),
                ));
            }
        }
        pos("config.harness.tick_ms", self.harness.tick_ms as f64)?;
        if !self.est.period_ms.is_multiple_of(self.harness.tick_ms) {
            return Err((
                "config.est.period_ms".into(),
                "must be a multiple of harness.tick_ms".into(),
            ));
        }
        Ok(())
    }
}
