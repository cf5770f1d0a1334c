//! Interaction acceptance belief: asymmetric first-order smoothing of gaze.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::gaze::GazeEstimate;
use crate::bus::Millis;
use crate::config::IabConfig;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IabEstimate {
    pub track_id: u64,
    pub iab: f64,
    pub t: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IabFrame {
    pub t: Millis,
    pub estimates: Vec<IabEstimate>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IabParams<T = f64> {
    pub tau_up_ms: T,
    pub tau_down_ms: T,
}

impl IabParams<f64> {
    pub fn from_config(cfg: &IabConfig) -> Self {
        Self {
            tau_up_ms: cfg.tau_up_ms,
            tau_down_ms: cfg.tau_down_ms,
        }
    }
}

/// One update toward `target` over `dt_ms`. Rises with `tau_up`, falls
/// with `tau_down`; the result stays in [0, 1].
pub fn iab_update<T: Scalar>(prev: T, target: T, dt_ms: T, p: &IabParams<T>) -> T {
    let tau = if target > prev { p.tau_up_ms } else { p.tau_down_ms };
    let gain = T::one() - (-dt_ms / tau).exp();
    (prev + (target - prev) * gain).max(T::zero()).min(T::one())
}

/// Per-track IAB state. Tracks start at 0 and are forgotten once absent
/// from the gaze stream for `forget_ms`.
#[derive(Debug, Clone)]
pub struct IabTracker {
    params: IabParams,
    state: BTreeMap<u64, (f64, Millis)>,
}

impl IabTracker {
    pub fn new(params: IabParams) -> Self {
        Self {
            params,
            state: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, t: Millis, gaze: &[GazeEstimate], dt_ms: Millis) -> Vec<IabEstimate> {
        let mut out = Vec::with_capacity(gaze.len());
        for g in gaze {
            let entry = self.state.entry(g.track_id).or_insert((0.0, t));
            let v = iab_update(entry.0, g.looking_at_robot, dt_ms as f64, &self.params);
            *entry = (v, t);
            out.push(IabEstimate {
                track_id: g.track_id,
                iab: v,
                t,
            });
        }
        out
    }

    pub fn get(&self, track_id: u64) -> Option<f64> {
        self.state.get(&track_id).map(|s| s.0)
    }

    /// Drops tracks not updated since `before`.
    pub fn forget_older_than(&mut self, before: Millis) {
        self.state.retain(|_, s| s.1 >= before);
    }
}
