use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::scenario::Scenario;
use crate::actions::{Conversation, DialogueBackend, HttpDialogue, Mover, MovingWorker, ScriptedDialogue, SpeakingWorker};
use crate::bus::Millis;
use crate::est::{EstWorker, IdentityMemory, StateTracker};
use crate::messages::{pipeline_bus, MessageBus};
use crate::pipeline::{PipelineError, Worker};
use crate::planner::PlannerWorker;
use crate::refiners::{
    DiarizeWorker, GazeWorker, IabWorker, TrackerWorker, TranscribeWorker, Transcriber, UtteranceLog, VadWorker,
};
use crate::simworld::{World, WorldParams, WorldWorker};

/// Seed offset of the dialogue latency stream.
const DIALOGUE_STREAM: u64 = 0xD1A1_0600;

/// Every worker of one scenario run, stepped in pipeline order.
pub struct Rig {
    pub bus: MessageBus,
    pub world: WorldWorker,
    pub vad: VadWorker,
    pub tracker: TrackerWorker,
    pub gaze: GazeWorker,
    pub iab: IabWorker,
    pub diarize: DiarizeWorker,
    pub transcribe: TranscribeWorker,
    pub est: EstWorker,
    pub planner: PlannerWorker,
    pub moving: MovingWorker,
    pub speaking: SpeakingWorker,
    now: Millis,
    tick_ms: Millis,
}

impl Rig {
    pub fn new(scenario: &Scenario, memory: IdentityMemory) -> Result<Self, PipelineError> {
        let cfg = &scenario.config;
        let room = &scenario.room;
        let home = room.observation_pose;
        let sensor_ms = room.sensor_period_ms();
        let bus = pipeline_bus(&cfg.bus)?;
        let log = UtteranceLog::default();

        let world = World::new(
            scenario.resolved_actors(),
            WorldParams {
                room: room.clone(),
                noise: cfg.noise.clone(),
                audio: cfg.audio.clone(),
                actors: cfg.actors.clone(),
            },
        );
        let rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let backend: Box<dyn DialogueBackend> = match &cfg.dialogue.url {
            Some(url) => Box::new(HttpDialogue::new(url.clone(), cfg.dialogue.timeout_ms)),
            None => Box::new(ScriptedDialogue::from_config(&cfg.dialogue, scenario.seed ^ DIALOGUE_STREAM)),
        };
        let tracker = StateTracker::new(cfg.est.clone(), &cfg.iab, memory, home);

        Ok(Self {
            world: WorldWorker::new(bus.clone(), world, rng, log.clone(), cfg.harness.tick_ms)?,
            vad: VadWorker::new(bus.clone(), cfg)?,
            tracker: TrackerWorker::new(bus.clone(), cfg, home)?,
            gaze: GazeWorker::new(bus.clone())?,
            iab: IabWorker::new(bus.clone(), cfg, sensor_ms)?,
            diarize: DiarizeWorker::new(bus.clone(), cfg)?,
            transcribe: TranscribeWorker::new(
                bus.clone(),
                Transcriber::from_config(&cfg.transcription, log, sensor_ms),
            )?,
            est: EstWorker::new(bus.clone(), tracker, cfg.est.period_ms)?,
            planner: PlannerWorker::new(bus.clone(), cfg.planner.clone(), cfg.est.period_ms)?,
            moving: MovingWorker::new(
                bus.clone(),
                Mover::new(cfg.moving.clone(), home, cfg.planner.target_lost_snapshots),
            )?,
            speaking: SpeakingWorker::new(bus.clone(), Conversation::new(cfg.speaking.clone(), backend))?,
            bus,
            now: 0,
            tick_ms: cfg.harness.tick_ms,
        })
    }

    /// Time the next tick will run at.
    pub fn now(&self) -> Millis {
        self.now
    }

    pub fn tick_ms(&self) -> Millis {
        self.tick_ms
    }

    /// Steps every worker once at the current instant, then advances.
    pub fn tick(&mut self) -> Result<(), PipelineError> {
        let now = self.now;
        self.world.step(now)?;
        self.vad.step(now)?;
        self.tracker.step(now)?;
        self.gaze.step(now)?;
        self.iab.step(now)?;
        self.diarize.step(now)?;
        self.transcribe.step(now)?;
        self.est.step(now)?;
        self.planner.step(now)?;
        self.moving.step(now)?;
        self.speaking.step(now)?;
        self.now += self.tick_ms;
        Ok(())
    }

    /// The workers in pipeline order, for free-running execution.
    pub fn into_workers(self) -> Vec<Box<dyn Worker>> {
        vec![
            Box::new(self.world),
            Box::new(self.vad),
            Box::new(self.tracker),
            Box::new(self.gaze),
            Box::new(self.iab),
            Box::new(self.diarize),
            Box::new(self.transcribe),
            Box::new(self.est),
            Box::new(self.planner),
            Box::new(self.moving),
            Box::new(self.speaking),
        ]
    }
}
