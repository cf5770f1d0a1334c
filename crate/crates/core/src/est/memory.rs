//! Associative identity memory: appearance centroids that outlive tracks.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use tracing::debug;

use crate::bus::Millis;
use crate::config::EstConfig;
use crate::geometry::{cosine_similarity, normalize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptNote {
    pub segment_id: u64,
    pub t: Millis,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub id: u64,
    pub centroid: Vec<f64>,
    pub first_seen: Millis,
    pub last_seen: Millis,
    #[serde(rename = "engagements")]
    pub engagement_count: u64,
    #[serde(default)]
    pub transcripts: Vec<TranscriptNote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MemoryEvent {
    Created { t: Millis, identity: u64, track: u64 },
    Bound { t: Millis, identity: u64, track: u64, similarity: f64 },
    AmbiguousReid { t: Millis, identity: u64, winner: u64, loser: u64 },
    Engaged { t: Millis, identity: u64 },
    Transcript { t: Millis, identity: u64, segment_id: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReidParams {
    pub tau: f64,
    pub centroid_ema: f64,
}

impl ReidParams {
    pub fn from_config(cfg: &EstConfig) -> Self {
        Self {
            tau: cfg.tau_reid,
            centroid_ema: cfg.centroid_ema,
        }
    }
}

impl Default for ReidParams {
    fn default() -> Self {
        Self::from_config(&EstConfig::default())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdentityMemory {
    records: BTreeMap<u64, IdentityRecord>,
    history: Vec<MemoryEvent>,
    next_id: u64,
    bindings: BTreeMap<u64, u64>,
}

impl IdentityMemory {
    pub fn new() -> Self {
        Self {
            next_id: 1,
            ..Self::default()
        }
    }

    /// Rebuilds a memory from stored records and history. Track bindings
    /// are per run and start empty.
    pub fn from_parts(records: Vec<IdentityRecord>, history: Vec<MemoryEvent>) -> Self {
        let next_id = records.iter().map(|r| r.id).max().unwrap_or(0) + 1;
        Self {
            records: records.into_iter().map(|r| (r.id, r)).collect(),
            history,
            next_id,
            bindings: BTreeMap::new(),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = &IdentityRecord> {
        self.records.values()
    }

    pub fn record(&self, id: u64) -> Option<&IdentityRecord> {
        self.records.get(&id)
    }

    pub fn history(&self) -> &[MemoryEvent] {
        &self.history
    }

    pub fn identity_of(&self, track: u64) -> Option<u64> {
        self.bindings.get(&track).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn mint(&mut self, t: Millis, track: u64, appearance: &[f64]) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.records.insert(
            id,
            IdentityRecord {
                id,
                centroid: normalize(appearance),
                first_seen: t,
                last_seen: t,
                engagement_count: 0,
                transcripts: Vec::new(),
            },
        );
        self.history.push(MemoryEvent::Created { t, identity: id, track });
        id
    }

    fn similarity(&self, id: u64, appearance: &[f64]) -> f64 {
        cosine_similarity(&self.records[&id].centroid, appearance)
    }

    /// Binds every present track to an identity.
    ///
    /// Tracks keep an existing binding. Two present tracks holding the same
    /// identity keep the more similar one; the other is re-bound like a new
    /// track and the conflict is recorded. Unbound tracks take the most
    /// similar free identity at or above `tau`, greedily by similarity, or
    /// mint a new one.
    pub fn assign(&mut self, t: Millis, tracks: &[(u64, &[f64])], p: &ReidParams) -> BTreeMap<u64, u64> {
        let mut out: BTreeMap<u64, u64> = BTreeMap::new();
        let mut holders: BTreeMap<u64, Vec<(u64, f64)>> = BTreeMap::new();
        for &(track, app) in tracks {
            if let Some(id) = self.identity_of(track).filter(|id| self.records.contains_key(id)) {
                holders.entry(id).or_default().push((track, self.similarity(id, app)));
            }
        }
        let mut unbound: Vec<(u64, &[f64])> = Vec::new();
        for (id, mut hs) in holders {
            hs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            out.insert(hs[0].0, id);
            for &(loser, _) in &hs[1..] {
                self.history.push(MemoryEvent::AmbiguousReid {
                    t,
                    identity: id,
                    winner: hs[0].0,
                    loser,
                });
                debug!(identity = id, winner = hs[0].0, loser, "ambiguous re-identification");
                self.bindings.remove(&loser);
            }
        }
        for &(track, app) in tracks {
            if !out.contains_key(&track) {
                unbound.push((track, app));
            }
        }

        let taken: BTreeSet<u64> = out.values().copied().collect();
        let mut pairs: Vec<(f64, u64, u64)> = Vec::new();
        let mut best: BTreeMap<u64, u64> = BTreeMap::new();
        for &(track, app) in &unbound {
            let mut top: Option<(f64, u64)> = None;
            for &id in self.records.keys() {
                let s = self.similarity(id, app);
                if top.is_none_or(|(bs, _)| s > bs) {
                    top = Some((s, id));
                }
                if s >= p.tau && !taken.contains(&id) {
                    pairs.push((s, track, id));
                }
            }
            if let Some((_, id)) = top.filter(|&(s, _)| s >= p.tau) {
                best.insert(track, id);
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used = taken;
        let mut claimed_by: BTreeMap<u64, u64> = BTreeMap::new();
        for (s, track, id) in pairs {
            if out.contains_key(&track) || used.contains(&id) {
                continue;
            }
            used.insert(id);
            out.insert(track, id);
            claimed_by.insert(id, track);
            self.history.push(MemoryEvent::Bound {
                t,
                identity: id,
                track,
                similarity: s,
            });
        }
        for &(track, app) in &unbound {
            if let Some(&want) = best.get(&track) {
                if out.get(&track) != Some(&want) {
                    let winner = claimed_by
                        .get(&want)
                        .copied()
                        .or_else(|| out.iter().find(|(_, &i)| i == want).map(|(&k, _)| k));
                    if let Some(winner) = winner {
                        self.history.push(MemoryEvent::AmbiguousReid {
                            t,
                            identity: want,
                            winner,
                            loser: track,
                        });
                        debug!(identity = want, winner, loser = track, "ambiguous re-identification");
                    }
                }
            }
            out.entry(track).or_insert_with(|| {
                
                self.mint(t, track, app)
            });
        }

        for &(track, app) in tracks {
            let id = out[&track];
            self.bindings.retain(|&k, &mut v| v != id || k == track);
            self.bindings.insert(track, id);
            let rec = self.records.get_mut(&id).expect("bound identity exists");
            let a = p.centroid_ema;
            let mixed: Vec<f64> = rec
                .centroid
                .iter()
                .zip(app)
                .map(|(c, x)| (1.0 - a) * c + a * x)
                .collect();
            rec.centroid = normalize(&mixed);
            rec.last_seen = t;
        }
        out
    }

    pub fn note_engagement(&mut self, t: Millis, identity: u64) {
        if let Some(r) = self.records.get_mut(&identity) {
            r.engagement_count += 1;
            self.history.push(MemoryEvent::Engaged { t, identity });
        }
    }

    pub fn note_transcript(&mut self, identity: u64, note: TranscriptNote) {
        if let Some(r) = self.records.get_mut(&identity) {
            self.history.push(MemoryEvent::Transcript {
                t: note.t,
                identity,
                segment_id: note.segment_id,
            });
            r.transcripts.push(note);
        }
    }
}
