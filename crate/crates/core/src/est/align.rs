use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bus::Millis;
use crate::refiners::{GazeFrame, IabFrame, SpeakerAssignment, SpeechActivity, Track, TrackSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<V> {
    pub ts: Millis,
    pub value: V,
}

/// Entry with the largest `ts <= t_snap` no older than `staleness`; on
/// equal stamps the one received last.
pub fn select_latest<V>(entries: &[Stamped<V>], t_snap: Millis, staleness: Millis) -> Option<&Stamped<V>> {
    entries
        .iter()
        .filter(|e| e.ts <= t_snap && t_snap - e.ts <= staleness)
        .fold(None, |best: Option<&Stamped<V>>, e| match best {
            Some(b) if b.ts > e.ts => Some(b),
            _ => Some(e),
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedTrack {
    pub track: Stamped<Track>,
    pub gaze: Option<Stamped<f64>>,
    pub iab: Option<Stamped<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedSet {
    pub t_snap: Millis,
    pub tracks: BTreeMap<u64, AlignedTrack>,
    pub speakers: Option<Stamped<SpeakerAssignment>>,
    pub vad: Option<Stamped<SpeechActivity>>,
}

/// Per-modality, per-track receive logs.
#[derive(Debug, Clone, Default)]
pub struct PerceptionBuffers {
    tracks: BTreeMap<u64, Vec<Stamped<Track>>>,
    gaze: BTreeMap<u64, Vec<Stamped<f64>>>,
    iab: BTreeMap<u64, Vec<Stamped<f64>>>,
    speakers: Vec<Stamped<SpeakerAssignment>>,
    vad: Vec<Stamped<SpeechActivity>>,
}

impl PerceptionBuffers {
    /// Only tracks that are confirmed and matched on this frame count as
    /// observations.
    pub fn ingest_tracks(&mut self, ts: Millis, set: &TrackSet) {
        for t in set.tracks.iter().filter(|t| t.is_observed_confirmed()) {
            self.tracks.entry(t.track_id).or_default().push(Stamped { ts, value: t.clone() });
        }
    }

    pub fn ingest_gaze(&mut self, ts: Millis, frame: &GazeFrame) {
        for g in &frame.estimates {
            self.gaze.entry(g.track_id).or_default().push(Stamped { ts, value: g.looking_at_robot });
        }
    }

    pub fn ingest_iab(&mut self, ts: Millis, frame: &IabFrame) {
        for e in &frame.estimates {
            self.iab.entry(e.track_id).or_default().push(Stamped { ts, value: e.iab });
        }
    }

    pub fn ingest_speakers(&mut self, ts: Millis, sa: &SpeakerAssignment) {
        self.speakers.push(Stamped { ts, value: sa.clone() });
    }

    pub fn ingest_vad(&mut self, ts: Millis, va: &SpeechActivity) {
        self.vad.push(Stamped { ts, value: *va });
    }

    pub fn align(&self, t_snap: Millis, staleness: Millis) -> AlignedSet {
        let pick = |m: &BTreeMap<u64, Vec<Stamped<f64>>>, id: u64| {
            m.get(&id).and_then(|v| select_latest(v, t_snap, staleness)).cloned()
        };
        let tracks = self
            .tracks
            .iter()
            .filter_map(|(&id, log)| {
                let track = select_latest(log, t_snap, staleness)?.clone();
                Some((
                    id,
                    AlignedTrack {
                        track,
                        gaze: pick(&self.gaze, id),
                        iab: pick(&self.iab, id),
                    },
                ))
            })
            .collect();
        AlignedSet {
            t_snap,
            tracks,
            speakers: select_latest(&self.speakers, t_snap, staleness).cloned(),
            vad: select_latest(&self.vad, t_snap, staleness).cloned(),
        }
    }

    /// Forgets entries no later snapshot than `t_snap` could select.
    pub fn prune(&mut self, t_snap: Millis, staleness: Millis) {
        let keep = |ts: Millis| ts + staleness >= t_snap;
        fn prune_map<V>(m: &mut BTreeMap<u64, Vec<Stamped<V>>>, keep: impl Fn(Millis) -> bool) {
            for v in m.values_mut() {
                v.retain(|e| keep(e.ts));
            }
            m.retain(|_, v| !v.is_empty());
        }
        prune_map(&mut self.tracks, keep);
        prune_map(&mut self.gaze, keep);
        prune_map(&mut self.iab, keep);
        self.speakers.retain(|e| keep(e.ts));
        self.vad.retain(|e| keep(e.ts));
    }
}
