//! Direction-of-arrival to track attribution.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::tracker::Track;
use crate::bus::Millis;
use crate::config::DiarizationConfig;
use crate::geometry::angular_distance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoaAssignment {
    pub doa_index: usize,
    pub doa: f64,
    pub track_id: Option<u64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerAssignment {
    pub t: Millis,
    pub assignments: Vec<DoaAssignment>,
}

impl SpeakerAssignment {
    pub fn speaking_tracks(&self) -> impl Iterator<Item = u64> + '_ {
        self.assignments.iter().filter_map(|a| a.track_id)
    }
}

/// Instantaneous coincidence score, 0 at or beyond the gate.
pub fn coincidence(doa: f64, azimuth: f64, gate: f64) -> f64 {
    let d = angular_distance(doa, azimuth);
    if d < gate {
        1.0 - d / gate
    } else {
        0.0
    }
}

/// Greedy highest-score matching on a score matrix (rows DOAs, columns
/// tracks). Pairs scoring below `min_score` or with `None` are skipped.
pub fn greedy_max_assignment(scores: &[Vec<Option<f64>>], min_score: f64) -> Vec<(usize, usize, f64)> {
    let mut cells: Vec<(usize, usize, f64)> = scores
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().filter_map(move |(j, s)| s.map(|s| (i, j, s))))
        .filter(|c| c.2 >= min_score)
        .collect();
    cells.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let rows = scores.len();
    let cols = scores.iter().map(Vec::len).max().unwrap_or(0);
    let (mut ru, mut cu) = (vec![false; rows], vec![false; cols]);
    let mut out = Vec::new();
    for (i, j, s) in cells {
        if !ru[i] && !cu[j] {
            ru[i] = true;
            cu[j] = true;
            out.push((i, j, s));
        }
    }
    out.sort_by_key(|c| c.0);
    out
}

/// Sliding-window diarizer. Each track accumulates the coincidence of its
/// best-matching DOA per frame over the window; a DOA-track pair scores
/// the window history plus the current coincidence.
#[derive(Debug, Clone)]
pub struct Diarizer {
    cfg: DiarizationConfig,
    history: VecDeque<(Millis, Vec<(u64, f64)>)>,
}

impl Diarizer {
    pub fn new(cfg: DiarizationConfig) -> Self {
        Self {
            cfg,
            history: VecDeque::new(),
        }
    }

    fn past(&self, track_id: u64) -> f64 {
        self.history
            .iter()
            .flat_map(|(_, v)| v.iter())
            .filter(|(id, _)| *id == track_id)
            .map(|(_, s)| s)
            .sum()
    }

    pub fn step(&mut self, t: Millis, doas: &[f64], tracks: &[Track]) -> SpeakerAssignment {
        let window = self.cfg.window_ms;
        while self.history.front().is_some_and(|(ts, _)| ts + window <= t) {
            self.history.pop_front();
        }
        let gate = self.cfg.gate_doa;
        let candidates: Vec<&Track> = tracks.iter().filter(|t| t.is_observed_confirmed()).collect();
        let past: Vec<f64> = candidates.iter().map(|c| self.past(c.track_id)).collect();
        let scores: Vec<Vec<Option<f64>>> = doas
            .iter()
            .map(|&doa| {
                candidates
                    .iter()
                    .zip(&past)
                    .map(|(c, p)| {
                        let inst = coincidence(doa, c.azimuth, gate);
                        (inst > 0.0).then_some(p + inst)
                    })
                    .collect()
            })
            .collect();
        let pairs = greedy_max_assignment(&scores, self.cfg.min_score);

        let mut frame = Vec::new();
        for c in &candidates {
            let best = doas
                .iter()
                .map(|&d| coincidence(d, c.azimuth, gate))
                .fold(0.0, f64::max);
            if best > 0.0 {
                frame.push((c.track_id, best));
            }
        }
        self.history.push_back((t, frame));

        let assignments = doas
            .iter()
            .enumerate()
            .map(|(i, &doa)| match pairs.iter().find(|p| p.0 == i) {
                Some(&(_, j, s)) => DoaAssignment {
                    doa_index: i,
                    doa,
                    track_id: Some(candidates[j].track_id),
                    score: s,
                },
                None => DoaAssignment {
                    doa_index: i,
                    doa,
                    track_id: None,
                    score: 0.0,
                },
            })
            .collect();
        SpeakerAssignment { t, assignments }
    }
}
