use rand_chacha::ChaCha8Rng;

use super::{sense, World};
use crate::bus::{Millis, Subscription};
use crate::messages::{topics, Message, MessageBus};
use crate::pipeline::{PipelineError, Worker};
use crate::refiners::UtteranceLog;

const WORLD: &str = "world";

/// Drives the simulated body: applies the latest velocity command and
/// robot speech, advances the world to `now`, and publishes sensor frames
/// at the sensor rate.
pub struct WorldWorker {
    bus: MessageBus,
    world: World,
    rng: ChaCha8Rng,
    velocity: Subscription,
    speech: Subscription,
    log: UtteranceLog,
    max_step_ms: Millis,
    logged: usize,
    next_sense: Millis,
}

impl WorldWorker {
    pub fn new(bus: MessageBus, world: World, rng: ChaCha8Rng, log: UtteranceLog, max_step_ms: Millis) -> Result<Self, PipelineError> {
        log.replace(world.utterances());
        Ok(Self {
            velocity: bus.subscribe(topics::VELOCITY, WORLD)?,
            speech: bus.subscribe(topics::SPEECH, WORLD)?,
            logged: world.utterances().len(),
            bus,
            world,
            rng,
            log,
            max_step_ms: max_step_ms.max(1),
            next_sense: 0,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }
}

impl Worker for WorldWorker {
    fn name(&self) -> &'static str {
        WORLD
    }

    fn step(&mut self, now: Millis) -> Result<(), PipelineError> {
        for env in self.bus.poll(&self.speech)? {
            if let Message::Speech(s) = env.payload() {
                self.world.hear_robot(s);
            }
        }
        if self.world.utterances().len() != self.logged {
            self.logged = self.world.utterances().len();
            self.log.replace(self.world.utterances());
        }
        if let Some(env) = self.bus.poll(&self.velocity)?.pop() {
            if let Message::Velocity(v) = env.payload() {
                self.world.set_velocity(*v);
            }
        }
        let period = self.world.params().room.sensor_period_ms();
        while self.world.state.t < now {
            let dt = (now - self.world.state.t).min(self.max_step_ms).min(period);
            self.world.step(dt);
        }
        if now >= self.next_sense {
            self.next_sense = (now / period + 1) * period;
            let (frame, truth) = sense(&self.world, &mut self.rng);
            let t = frame.t;
            self.bus.publish(topics::CAMERA, WORLD, t, Message::Camera(super::CameraFrame {
                t,
                detections: frame.detections,
            }))?;
            self.bus.publish(topics::AUDIO, WORLD, t, Message::Audio(frame.audio))?;
            self.bus.publish(topics::ODOMETRY, WORLD, t, Message::Odometry(frame.odometry))?;
            self.bus.publish(topics::TRUTH, WORLD, t, Message::Truth(truth))?;
        }
        Ok(())
    }
}
