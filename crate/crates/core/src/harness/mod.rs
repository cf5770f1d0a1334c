//! Scenario runs: loading, the lockstep run loop, trace recording, replay
//! and engagement metrics.

mod metrics;
mod rig;
mod scenario;
mod trace;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::bus::Millis;
use crate::config::Config;
use crate::est::{persist, EstCapture, IdentityMemory, StoreError};
use crate::pipeline::PipelineError;
use crate::simworld::WorldState;

pub use metrics::{analyze, metrics_from_trace, ActorMetrics, EngagementClass, EngagementRecord, Report, RunMetrics};
pub use rig::Rig;
pub use scenario::{Scenario, SCHEMA_VERSION};
pub use trace::{
    digest, FlagChange, FlagMonitor, FlagViolation, Recorder, StopReason, Tally, TraceEvent, TraceHeader, TraceLog,
    ARTIFACT_VERSION, TRACE_SCHEMA_VERSION,
};

/// Overrides `config.dialogue.url` when set.
pub const DIALOGUE_URL_ENV: &str = "HRI_DIALOGUE_URL";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario at {path}: {reason}")]
    ScenarioInvalid { path: String, reason: String },
    #[error("invalid trace at line {line}: {reason}")]
    TraceInvalid { line: usize, reason: String },
    #[error("trace was written by version {found}, this is {expected}")]
    VersionMismatch { expected: String, found: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Applies environment overrides to a loaded configuration.
pub fn apply_env(cfg: &mut Config) {
    if let Ok(url) = std::env::var(DIALOGUE_URL_ENV) {
        if !url.trim().is_empty() {
            cfg.dialogue.url = Some(url);
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Record every EST input and aligned set.
    pub capture_est: bool,
    /// Identity memory to start from instead of an empty one.
    pub memory: Option<IdentityMemory>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub trace: TraceLog,
    pub metrics: RunMetrics,
    pub report: Report,
    pub flags: FlagMonitor,
    pub capture: Option<EstCapture>,
    pub memory: IdentityMemory,
    pub world: WorldState,
}

pub fn run(scenario: &Scenario) -> Result<RunOutcome, HarnessError> {
    run_with(scenario, RunOptions::default())
}

/// Runs the scenario in virtual-time lockstep until its duration elapses
/// or, when enabled, every actor has finished an engagement.
pub fn run_with(scenario: &Scenario, opts: RunOptions) -> Result<RunOutcome, HarnessError> {
    scenario.validate()?;
    let mut rig = Rig::new(scenario, opts.memory.unwrap_or_default())?;
    if opts.capture_est {
        rig.est.tracker_mut().enable_capture();
    }
    let recorder = Arc::new(Mutex::new(Recorder::new()));
    recorder.lock().expect("recorder lock").push(TraceEvent::RunStart { t: 0 });
    let hook = Arc::clone(&recorder);
    rig.bus
        .set_recorder(move |env| hook.lock().expect("recorder lock").on_publish(env));

    let actors: Vec<String> = scenario.actors.iter().map(|a| a.id.clone()).collect();
    let stop_on_completion = scenario.config.harness.stop_on_completion && !actors.is_empty();
    let mut reason = StopReason::TimeLimit;
    let mut last = 0;
    while rig.now() <= scenario.duration_ms {
        last = rig.now();
        rig.tick()?;
        if stop_on_completion {
            let rec = recorder.lock().expect("recorder lock");
            if actors.iter().all(|a| rec.tally.conversed.contains(a)) {
                reason = StopReason::AllEngaged;
                break;
            }
        }
    }
    rig.bus.clear_recorder();

    let mut rec = std::mem::take(&mut *recorder.lock().expect("recorder lock"));
    let open_engagements = rec.tally.open.keys().copied().collect();
    rec.push(TraceEvent::RunEnd {
        t: last,
        reason,
        open_engagements,
    });
    let trace = TraceLog {
        header: TraceHeader::new(&scenario.name, scenario.seed, scenario.duration_ms, actors),
        events: rec.events,
    };
    let report = analyze(&trace);
    Ok(RunOutcome {
        metrics: report.metrics.clone(),
        report,
        trace,
        flags: rec.monitor,
        capture: rig.est.tracker_mut().take_capture(),
        memory: rig.est.tracker().memory().clone(),
        world: rig.world.world().state.clone(),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

/// Writes `trace.jsonl`, `metrics.json`, `report.json`, `report.txt` and
/// the identity store `identities.jsonl` into `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_file(&dir.join("trace.jsonl"), &outcome.trace.to_jsonl())?;
    let metrics = serde_json::to_string_pretty(&outcome.metrics).expect("metrics serialize");
    write_file(&dir.join("metrics.json"), &metrics)?;
    write_file(&dir.join("report.json"), &outcome.report.to_json())?;
    write_file(&dir.join("report.txt"), &outcome.report.to_text())?;
    persist(&outcome.memory, &dir.join("identities.jsonl"))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    /// Zero-based index into the event list.
    pub index: usize,
    /// One-based line in the trace file.
    pub line: usize,
    pub expected: Option<String>,
    pub actual: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayOutcome {
    Match { events: usize },
    Diverged(Divergence),
}

/// Re-runs the scenario and compares the fresh event stream against the
/// recorded one.
pub fn replay(trace: &TraceLog, scenario: &Scenario) -> Result<ReplayOutcome, HarnessError> {
    let h = &trace.header;
    if h.schema_version != TRACE_SCHEMA_VERSION || h.artifact_version != ARTIFACT_VERSION {
        return Err(HarnessError::VersionMismatch {
            expected: format!("{ARTIFACT_VERSION} (trace schema {TRACE_SCHEMA_VERSION})"),
            found: format!("{} (trace schema {})", h.artifact_version, h.schema_version),
        });
    }
    let fresh = run(scenario)?.trace;
    Ok(first_divergence(&trace.events, &fresh.events))
}

pub fn first_divergence(expected: &[TraceEvent], actual: &[TraceEvent]) -> ReplayOutcome {
    let n = expected.len().max(actual.len());
    for i in 0..n {
        let e = expected.get(i).map(TraceEvent::to_line);
        let a = actual.get(i).map(TraceEvent::to_line);
        if e != a {
            return ReplayOutcome::Diverged(Divergence {
                index: i,
                line: i + 2,
                expected: e,
                actual: a,
            });
        }
    }
    ReplayOutcome::Match { events: n }
}

#[derive(Debug, Clone)]
pub struct FreeRunSummary {
    pub wall: Duration,
    pub events: usize,
    pub snapshots: usize,
    pub flags: FlagMonitor,
}

/// Runs every worker on its own thread against the wall clock for `wall`.
/// Timing depends on the host, so the result is not reproducible.
pub fn run_free(scenario: &Scenario, wall: Duration) -> Result<FreeRunSummary, HarnessError> {
    scenario.validate()?;
    let rig = Rig::new(scenario, IdentityMemory::new())?;
    let tick = rig.tick_ms();
    let bus = rig.bus.clone();
    let recorder = Arc::new(Mutex::new(Recorder::new()));
    let hook = Arc::clone(&recorder);
    bus.set_recorder(move |env| hook.lock().expect("recorder lock").on_publish(env));

    let failed = AtomicBool::new(false);
    let start = Instant::now();
    let results: Vec<Result<(), PipelineError>> = std::thread::scope(|s| {
        let handles: Vec<_> = rig
            .into_workers()
            .into_iter()
            .map(|mut w| {
                let failed = &failed;
                s.spawn(move || {
                    let mut last: Option<Millis> = None;
                    while start.elapsed() < wall && !failed.load(Ordering::Relaxed) {
                        let now = (start.elapsed().as_millis() as Millis / tick) * tick;
                        if last != Some(now) {
                            if let Err(e) = w.step(now) {
                                failed.store(true, Ordering::Relaxed);
                                return Err(e);
                            }
                            last = Some(now);
                        }
                        std::thread::sleep(Duration::from_millis(1));
                    }
                    Ok(())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    });
    bus.clear_recorder();
    results.into_iter().collect::<Result<Vec<()>, _>>()?;
    let rec = std::mem::take(&mut *recorder.lock().expect("recorder lock"));
    let snapshots = rec
        .events
        .iter()
        .filter(|e| matches!(e, TraceEvent::Publish { topic, .. } if topic == crate::messages::topics::SNAPSHOT))
        .count();
    Ok(FreeRunSummary {
        wall: start.elapsed(),
        events: rec.events.len(),
        snapshots,
        flags: rec.monitor,
    })
}
