//! Worker contract shared by every module, plus the lockstep scheduler.

use thiserror::Error;

use crate::bus::{BusError, Millis};
use crate::est::StoreError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{worker}: {message}")]
    Worker { worker: &'static str, message: String },
}

/// A module step. Workers only talk to each other through the bus.
pub trait Worker: Send {
    fn name(&self) -> &'static str;

    /// Processes everything pending and publishes results stamped `now`.
    fn step(&mut self, now: Millis) -> Result<(), PipelineError>;
}

/// Runs workers in a fixed order once per tick of virtual time.
pub struct Lockstep {
    workers: Vec<Box<dyn Worker>>,
    tick_ms: Millis,
    now: Millis,
}

impl Lockstep {
    pub fn new(workers: Vec<Box<dyn Worker>>, tick_ms: Millis) -> Self {
        assert!(tick_ms > 0, "tick must be positive");
        Self {
            workers,
            tick_ms,
            now: 0,
        }
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    pub fn tick_ms(&self) -> Millis {
        self.tick_ms
    }

    /// Steps every worker at the current instant, then advances the clock.
    pub fn tick(&mut self) -> Result<(), PipelineError> {
        for w in &mut self.workers {
            w.step(self.now)?;
        }
        self.now += self.tick_ms;
        Ok(())
    }

    pub fn into_workers(self) -> Vec<Box<dyn Worker>> {
        self.workers
    }
}
