//! JSON-lines identity store with a trailing SHA-256 checksum line.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::memory::{IdentityMemory, IdentityRecord, MemoryEvent};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("identity store i/o: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt identity store: {0}")]
    CorruptStore(String),
}

#[derive(Serialize, Deserialize)]
struct ChecksumLine {
    checksum: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Line {
    Event(MemoryEvent),
    Identity(IdentityRecord),
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn encode(memory: &IdentityMemory) -> String {
    let mut body = String::new();
    for r in memory.records() {
        body.push_str(&serde_json::to_string(r).expect("record serializes"));
        body.push('\n');
    }
    for e in memory.history() {
        body.push_str(&serde_json::to_string(e).expect("event serializes"));
        body.push('\n');
    }
    let sum = ChecksumLine {
        checksum: hex(&Sha256::digest(body.as_bytes())),
    };
    body.push_str(&serde_json::to_string(&sum).expect("checksum serializes"));
    body.push('\n');
    body
}

pub fn decode(text: &str) -> Result<IdentityMemory, StoreError> {
    let corrupt = |m: &str| StoreError::CorruptStore(m.to_string());
    let trimmed = text.strip_suffix('\n').ok_or_else(|| corrupt("missing final newline"))?;
    let (body, last) = match trimmed.rfind('\n') {
        Some(i) => (&text[..=i], &trimmed[i + 1..]),
        None => ("", trimmed),
    };
    let sum: ChecksumLine =
        serde_json::from_str(last).map_err(|_| corrupt("missing checksum line"))?;
    if sum.checksum != hex(&Sha256::digest(body.as_bytes())) {
        return Err(corrupt("checksum mismatch"));
    }
    let mut records = Vec::new();
    let mut history = Vec::new();
    for (n, line) in body.lines().enumerate() {
        match serde_json::from_str::<Line>(line) {
            Ok(Line::Identity(r)) => records.push(r),
            Ok(Line::Event(e)) => history.push(e),
            Err(e) => return Err(StoreError::CorruptStore(format!("line {}: {e}", n + 1))),
        }
    }
    Ok(IdentityMemory::from_parts(records, history))
}

pub fn persist(memory: &IdentityMemory, path: &Path) -> Result<(), StoreError> {
    fs::write(path, encode(memory))?;
    Ok(())
}

pub fn restore(path: &Path) -> Result<IdentityMemory, StoreError> {
    decode(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::est::{ReidParams, TranscriptNote};

    fn sample() -> IdentityMemory {
        let mut m = IdentityMemory::new();
        let apps = [
            vec![0.6, 0.8, 0.0],
            vec![0.0, 0.1, 0.3],
            vec![1.0 / 3.0, 0.7, -0.2],
        ];
        let tracks: Vec<(u64, &[f64])> = apps.iter().enumerate().map(|(i, a)| (i as u64, a.as_slice())).collect();
        m.assign(100, &tracks, &ReidParams::default());
        m.note_engagement(200, 2);
        m.note_transcript(
            2,
            TranscriptNote {
                segment_id: 4,
                t: 250,
                text: "hello robot".into(),
            },
        );
        m
    }

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ids.jsonl");
        persist(&IdentityMemory::new(), &p).unwrap();
        assert!(restore(&p).unwrap().is_empty());
    }

    #[test]
    fn records_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ids.jsonl");
        let m = sample();
        persist(&m, &p).unwrap();
        let back = restore(&p).unwrap();
        assert_eq!(back.records().collect::<Vec<_>>(), m.records().collect::<Vec<_>>());
        assert_eq!(back.history(), m.history());
        assert_eq!(encode(&back), fs::read_to_string(&p).unwrap());
    }

    #[test]
    fn truncated_store_is_corrupt() {
        let text = encode(&sample());
        let cut = &text[..text.len() / 2];
        assert!(matches!(decode(cut), Err(StoreError::CorruptStore(_))));
        let without_sum: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(matches!(decode(&without_sum), Err(StoreError::CorruptStore(_))));
    }

    #[test]
    fn tampered_store_is_corrupt() {
        let text = encode(&sample()).replace("hello robot", "hello robut");
        assert!(matches!(decode(&text), Err(StoreError::CorruptStore(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(restore(Path::new("/nonexistent/ids.jsonl")), Err(StoreError::Io(_))));
    }
}
