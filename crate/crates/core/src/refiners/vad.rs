//! Energy voice activity detection with an adaptive noise floor.
//!
//! A frame is "loud" when its energy exceeds `k` times the current floor.
//! Speech starts after `onset_frames` consecutive loud frames and ends after
//! `hangover_frames` consecutive quiet ones. The floor tracks the energy
//! with an exponential average, but only on frames reported inactive.

use serde::{Deserialize, Serialize};

use crate::bus::Millis;
use crate::config::VadConfig;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadParams<T = f64> {
    pub alpha: T,
    pub k: T,
    pub onset_frames: u32,
    pub hangover_frames: u32,
}

impl VadParams<f64> {
    pub fn from_config(cfg: &VadConfig) -> Self {
        Self {
            alpha: cfg.alpha,
            k: cfg.k,
            onset_frames: cfg.onset_frames,
            hangover_frames: cfg.hangover_frames,
        }
    }
}

impl<T: Scalar> Default for VadParams<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(0.05),
            k: T::lit(2.5),
            onset_frames: 2,
            hangover_frames: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VadState<T = f64> {
    pub floor: T,
    pub active: bool,
    loud_run: u32,
    quiet_run: u32,
    segment: Option<u64>,
    last_segment: u64,
}

impl<T: Scalar> VadState<T> {
    pub fn new(initial_floor: T) -> Self {
        Self {
            floor: initial_floor,
            active: false,
            loud_run: 0,
            quiet_run: 0,
            segment: None,
            last_segment: 0,
        }
    }

    pub fn segment(&self) -> Option<u64> {
        self.segment
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VadDecision {
    pub active: bool,
    /// Set while active.
    pub segment_id: Option<u64>,
    /// Segment that ended on this frame.
    pub closed: Option<u64>,
    /// This frame crossed the threshold.
    pub loud: bool,
}

/// VAD output as published on the bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeechActivity {
    pub t: Millis,
    pub energy: f64,
    #[serde(flatten)]
    pub decision: VadDecision,
}

/// One frame of the detector recurrence.
pub fn vad_step<T: Scalar>(
    energy: T,
    state: &VadState<T>,
    params: &VadParams<T>,
) -> (VadDecision, VadState<T>) {
    let mut next = *state;
    let loud = energy > params.k * state.floor;
    let mut closed = None;
    if !state.active {
        next.loud_run = if loud { state.loud_run + 1 } else { 0 };
        if next.loud_run >= params.onset_frames {
            next.active = true;
            next.loud_run = 0;
            next.quiet_run = 0;
            next.last_segment = state.last_segment + 1;
            next.segment = Some(next.last_segment);
        }
    } else {
        next.quiet_run = if loud { 0 } else { state.quiet_run + 1 };
        if next.quiet_run >= params.hangover_frames {
            next.active = false;
            next.quiet_run = 0;
            closed = next.segment.take();
        }
    }
    if !next.active {
        next.floor = (T::one() - params.alpha) * state.floor + params.alpha * energy;
    }
    (
        VadDecision {
            active: next.active,
            segment_id: next.segment,
            closed,
            loud,
        },
        next,
    )
}

/// Streaming wrapper around [`vad_step`].
#[derive(Debug, Clone)]
pub struct VoiceActivityDetector<T = f64> {
    params: VadParams<T>,
    state: VadState<T>,
}

impl<T: Scalar> VoiceActivityDetector<T> {
    pub fn new(params: VadParams<T>, initial_floor: T) -> Self {
        Self {
            params,
            state: VadState::new(initial_floor),
        }
    }

    pub fn push(&mut self, energy: T) -> VadDecision {
        let (d, s) = vad_step(energy, &self.state, &self.params);
        self.state = s;
        d
    }

    pub fn state(&self) -> &VadState<T> {
        &self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent replay of the recurrence over a whole sequence, written
    /// as a flat loop with its own bookkeeping.
    fn offline(energies: &[f64], floor0: f64) -> Vec<(bool, Option<u64>)> {
        let (alpha, k, a, h) = (0.05, 2.5, 2u32, 5u32);
        let mut floor = floor0;
        let mut active = false;
        let mut loud_count = 0;
        let mut quiet_count = 0;
        let mut seg = 0u64;
        let mut out = Vec::new();
        for &e in energies {
            let loud = e > k * floor;
            if active {
                quiet_count = if loud { 0 } else { quiet_count + 1 };
                if quiet_count == h {
                    active = false;
                    quiet_count = 0;
                }
            } else {
                loud_count = if loud { loud_count + 1 } else { 0 };
                if loud_count == a {
                    active = true;
                    seg += 1;
                    loud_count = 0;
                }
            }
            if !active {
                floor = (1.0 - alpha) * floor + alpha * e;
            }
            out.push((active, active.then_some(seg)));
        }
        out
    }

    fn stream(energies: &[f64]) -> Vec<VadDecision> {
        let mut vad = VoiceActivityDetector::new(VadParams::default(), 1.0);
        energies.iter().map(|&e| vad.push(e)).collect()
    }

    #[test]
    fn constant_floor_never_activates() {
        assert!(stream(&[1.0; 500]).iter().all(|d| !d.active));
    }

    #[test]
    fn single_burst_gives_one_segment() {
        let mut e = vec![1.0; 20];
        e.extend([5.0; 10]);
        e.extend([1.0; 20]);
        let out = stream(&e);
        let active: Vec<usize> = (0..e.len()).filter(|&i| out[i].active).collect();
        // Onset on the second loud frame (index 21); offset five frames after
        // the last loud frame (index 29), i.e. inactive again at index 34.
        assert_eq!(active.first(), Some(&21));
        assert_eq!(active.last(), Some(&33));
        assert!(!out[34].active);
        assert_eq!(out[34].closed, Some(1));
        assert!(out.iter().filter_map(|d| d.segment_id).all(|s| s == 1));
        let expected = offline(&e, 1.0);
        assert_eq!(
            out.iter().map(|d| (d.active, d.segment_id)).collect::<Vec<_>>(),
            expected
        );
    }

    #[test]
    fn separated_bursts_get_distinct_segments() {
        let mut e = vec![1.0; 10];
        e.extend([6.0; 4]);
        e.extend([1.0; 6]);
        e.extend([6.0; 4]);
        e.extend([1.0; 10]);
        let ids: std::collections::BTreeSet<u64> =
            stream(&e).iter().filter_map(|d| d.segment_id).collect();
        assert_eq!(ids.into_iter().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn single_loud_frame_is_ignored() {
        let mut e = vec![1.0; 10];
        e.push(9.0);
        e.extend([1.0; 10]);
        assert!(stream(&e).iter().all(|d| !d.active));
    }

    #[test]
    fn f32_detector_matches_f64_on_clear_input() {
        let mut e = vec![1.0; 20];
        e.extend([5.0; 10]);
        e.extend([1.0; 20]);
        let mut v32 = VoiceActivityDetector::<f32>::new(VadParams::default(), 1.0);
        let a: Vec<bool> = e.iter().map(|&x| v32.push(x as f32).active).collect();
        let b: Vec<bool> = stream(&e).iter().map(|d| d.active).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn streaming_equals_offline_replay() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let e: Vec<f64> = (0..300)
                .map(|_| if rng.random_bool(0.2) { rng.random_range(2.0..8.0) } else { rng.random_range(0.5..1.5) })
                .collect();
            let got: Vec<_> = stream(&e).iter().map(|d| (d.active, d.segment_id)).collect();
            assert_eq!(got, offline(&e, 1.0));
        }
    }
}
