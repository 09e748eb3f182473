//! Edit journals: file snapshots plus keystroke-level deltas, and replay.
//!
//! Offsets inside an [`EditDelta`] count Unicode scalar values, not bytes.
//! Ingest normalizes `\r\n` (and lone `\r`) to `\n` before any offset is
//! interpreted.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{char_len, char_to_byte};

/// Where the journaled code came from. Only honored, never computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum Provenance {
    Internal,
    ThirdParty,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileSnapshot {
    pub journey_id: String,
    pub file_path: String,
    pub language: String,
    pub timestamp: u64,
    pub content: String,
    #[serde(default)]
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditDelta {
    pub journey_id: String,
    pub timestamp: u64,
    pub start_offset: usize,
    pub deleted_length: usize,
    #[serde(default)]
    pub inserted_text: String,
}

impl EditDelta {
    pub fn insert(journey_id: impl Into<String>, timestamp: u64, at: usize, text: impl Into<String>) -> Self {
        EditDelta {
            journey_id: journey_id.into(),
            timestamp,
            start_offset: at,
            deleted_length: 0,
            inserted_text: text.into(),
        }
    }

    pub fn replace(
        journey_id: impl Into<String>,
        timestamp: u64,
        at: usize,
        deleted_length: usize,
        text: impl Into<String>,
    ) -> Self {
        EditDelta {
            journey_id: journey_id.into(),
            timestamp,
            start_offset: at,
            deleted_length,
            inserted_text: text.into(),
        }
    }

    pub fn is_noop(&self) -> bool {
        self.deleted_length == 0 && self.inserted_text.is_empty()
    }
}

/// One record of the ingest stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum JournalEvent {
    Snapshot(FileSnapshot),
    Delta(EditDelta),
}

impl JournalEvent {
    pub fn journey_id(&self) -> &str {
        match self {
            JournalEvent::Snapshot(s) => &s.journey_id,
            JournalEvent::Delta(d) => &d.journey_id,
        }
    }

    pub fn timestamp(&self) -> u64 {
        match self {
            JournalEvent::Snapshot(s) => s.timestamp,
            JournalEvent::Delta(d) => d.timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditJourney {
    pub journey_id: String,
    pub file_path: String,
    pub language: String,
    #[serde(default)]
    pub provenance: Provenance,
    pub events: Vec<JournalEvent>,
}

impl EditJourney {
    /// Builds a journey from events in ingest order. Events are stably
    /// sorted by timestamp; path, language and provenance come from the
    /// first snapshot.
    pub fn from_events(journey_id: impl Into<String>, mut events: Vec<JournalEvent>) -> Self {
        events.sort_by_key(JournalEvent::timestamp);
        let first = events.iter().find_map(|e| match e {
            JournalEvent::Snapshot(s) => Some(s),
            JournalEvent::Delta(_) => None,
        });
        let (file_path, language, provenance) = match first {
            Some(s) => (s.file_path.clone(), s.language.clone(), s.provenance),
            None => (String::new(), String::new(), Provenance::Unknown),
        };
        EditJourney {
            journey_id: journey_id.into(),
            file_path,
            language,
            provenance,
            events,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JournalError {
    #[error("delta range {start}..{end} exceeds content length {len}{}", fmt_index(.event_index))]
    RangeOutOfBounds {
        start: usize,
        end: usize,
        len: usize,
        event_index: Option<usize>,
    },
    #[error("journey does not begin with a snapshot")]
    MalformedJourney,
    #[error("event index {index} out of bounds for journey of {len} events")]
    IndexOutOfBounds { index: usize, len: usize },
}

fn fmt_index(index: &Option<usize>) -> String {
    index.map(|i| format!(" at event {i}")).unwrap_or_default()
}

/// Splices `delta` into `content`.
pub fn apply_delta(content: &str, delta: &EditDelta) -> Result<String, JournalError> {
    let len = char_len(content);
    let end = delta.start_offset.checked_add(delta.deleted_length);
    let out_of_bounds = || JournalError::RangeOutOfBounds {
        start: delta.start_offset,
        end: end.unwrap_or(usize::MAX),
        len,
        event_index: None,
    };
    let end = end.ok_or_else(out_of_bounds)?;
    if end > len {
        return Err(out_of_bounds());
    }
    let start_byte = char_to_byte(content, delta.start_offset);
    let end_byte = start_byte + char_to_byte(&content[start_byte..], delta.deleted_length);
    let mut out = String::with_capacity(content.len() + delta.inserted_text.len());
    out.push_str(&content[..start_byte]);
    out.push_str(&delta.inserted_text);
    out.push_str(&content[end_byte..]);
    Ok(out)
}

/// File content after the event at `upto` has been applied.
pub fn reconstruct(journey: &EditJourney, upto: usize) -> Result<String, JournalError> {
    if upto >= journey.events.len() {
        return Err(JournalError::IndexOutOfBounds {
            index: upto,
            len: journey.events.len(),
        });
    }
    if !matches!(journey.events.first(), Some(JournalEvent::Snapshot(_))) {
        return Err(JournalError::MalformedJourney);
    }
    // Replay restarts from the nearest snapshot at or before `upto`.
    let base = journey.events[..=upto]
        .iter()
        .rposition(|e| matches!(e, JournalEvent::Snapshot(_)))
        .expect("first event is a snapshot");
    let mut content = match &journey.events[base] {
        JournalEvent::Snapshot(s) => s.content.clone(),
        JournalEvent::Delta(_) => unreachable!(),
    };
    for (index, event) in journey.events.iter().enumerate().take(upto + 1).skip(base + 1) {
        if let JournalEvent::Delta(d) = event {
            content = apply_delta(&content, d).map_err(|e| with_index(e, index))?;
        }
    }
    Ok(content)
}

fn with_index(err: JournalError, index: usize) -> JournalError {
    match err {
        JournalError::RangeOutOfBounds { start, end, len, .. } => JournalError::RangeOutOfBounds {
            start,
            end,
            len,
            event_index: Some(index),
        },
        other => other,
    }
}

/// Replays the whole journey once, yielding the content after each event.
///
/// Fails on the first delta that does not apply; use [`validate_journey`]
/// to collect every problem instead.
pub fn replay(journey: &EditJourney) -> Result<Vec<String>, JournalError> {
    let mut states = Vec::with_capacity(journey.events.len());
    let mut content = match journey.events.first() {
        Some(JournalEvent::Snapshot(s)) => s.content.clone(),
        _ => return Err(JournalError::MalformedJourney),
    };
    states.push(content.clone());
    for (index, event) in journey.events.iter().enumerate().skip(1) {
        match event {
            JournalEvent::Snapshot(s) => content = s.content.clone(),
            JournalEvent::Delta(d) => {
                content = apply_delta(&content, d).map_err(|e| with_index(e, index))?;
            }
        }
        states.push(content.clone());
    }
    Ok(states)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    /// The first event is not a snapshot.
    MissingInitialSnapshot,
    /// Timestamps decrease relative to the previous event.
    OutOfOrder,
    /// A delta with nothing deleted and nothing inserted.
    NoOpDelta,
    /// A delta whose range does not fit the replayed content.
    DeltaOutOfRange,
    /// A later snapshot disagrees with the replayed content.
    SnapshotMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub event_index: usize,
    pub kind: ViolationKind,
}

/// Checks every event of a journey and reports each inconsistency.
///
/// Replay continues past a bad event: an out-of-range delta is skipped and
/// a mismatching snapshot does not replace the replayed content, so one
/// corrupted event produces exactly one violation.
pub fn validate_journey(journey: &EditJourney) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut push = |event_index, kind| violations.push(Violation { event_index, kind });
    let mut content: Option<String> = None;
    let mut last_ts = 0u64;
    for (index, event) in journey.events.iter().enumerate() {
        if index > 0 && event.timestamp() < last_ts {
            push(index, ViolationKind::OutOfOrder);
        }
        last_ts = last_ts.max(event.timestamp());
        match event {
            JournalEvent::Snapshot(s) => match &content {
                None => content = Some(s.content.clone()),
                Some(replayed) if *replayed != s.content => push(index, ViolationKind::SnapshotMismatch),
                Some(_) => {}
            },
            JournalEvent::Delta(d) => {
                let Some(current) = content.as_mut() else {
                    if index == 0 {
                        push(index, ViolationKind::MissingInitialSnapshot);
                    }
                    continue;
                };
                if d.is_noop() {
                    push(index, ViolationKind::NoOpDelta);
                    continue;
                }
                match apply_delta(current, d) {
                    Ok(next) => *current = next,
                    Err(_) => push(index, ViolationKind::DeltaOutOfRange),
                }
            }
        }
    }
    violations
}

/// Normalizes line endings to `\n`.
pub fn normalize_newlines(text: &str) -> String {
    if !text.contains('\r') {
        return text.to_owned();
    }
    text.replace("\r\n", "\n").replace('\r', "\n")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub records: usize,
    pub malformed: usize,
    pub noop_deltas: usize,
    pub journeys: usize,
}

/// Reads newline-delimited snapshot/delta records and groups them into
/// journeys, ordered by journey id. Malformed lines and no-op deltas are
/// skipped and counted.
pub fn ingest<R: BufRead>(reader: R) -> std::io::Result<(Vec<EditJourney>, IngestStats)> {
    let mut stats = IngestStats::default();
    let mut grouped: BTreeMap<String, Vec<JournalEvent>> = BTreeMap::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        stats.records += 1;
        let mut event: JournalEvent = match serde_json::from_str(&line) {
            Ok(e) => e,
            Err(_) => {
                stats.malformed += 1;
                continue;
            }
        };
        match &mut event {
            JournalEvent::Snapshot(s) => s.content = normalize_newlines(&s.content),
            JournalEvent::Delta(d) => {
                d.inserted_text = normalize_newlines(&d.inserted_text);
                if d.is_noop() {
                    stats.noop_deltas += 1;
                    continue;
                }
            }
        }
        grouped.entry(event.journey_id().to_owned()).or_default().push(event);
    }
    let journeys: Vec<_> = grouped
        .into_iter()
        .map(|(id, events)| EditJourney::from_events(id, events))
        .collect();
    stats.journeys = journeys.len();
    Ok((journeys, stats))
}
