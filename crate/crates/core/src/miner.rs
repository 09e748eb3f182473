//! Paste-and-fix mining over edit journeys.
//!
//! A paste candidate is a single delta whose inserted text is long enough
//! and spans a small number of non-empty lines. Its fix is every following
//! delta that starts on a line of the (continuously adjusted) paste region.
//! Tracking stops at the first edit elsewhere in the file, except for edits
//! that touch import lines.

use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::journal::{apply_delta, validate_journey, EditDelta, EditJourney, JournalError, JournalEvent, Provenance};
use crate::text::{char_len, count_newlines, line_char_spans, line_of_offset, region_text};

/// Inclusive, 0-based line range occupied by a paste.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PasteRegion {
    pub start_line: usize,
    pub end_line: usize,
}

impl PasteRegion {
    pub fn new(start_line: usize, end_line: usize) -> Option<Self> {
        (start_line <= end_line).then_some(PasteRegion { start_line, end_line })
    }

    pub fn contains(&self, line: usize) -> bool {
        (self.start_line..=self.end_line).contains(&line)
    }

    pub fn line_count(&self) -> usize {
        self.end_line - self.start_line + 1
    }

    /// True if the region is well formed and fits a file of `lines` lines.
    pub fn fits(&self, lines: usize) -> bool {
        self.start_line <= self.end_line && self.end_line < lines
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Edit,
    NoEdit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PasteCandidate {
    pub journey_id: String,
    pub event_index: usize,
    pub timestamp: u64,
    pub region: PasteRegion,
    pub pasted_text: String,
    pub file_before: String,
    pub file_after_paste: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PasteFixExample {
    pub journey_id: String,
    pub language: String,
    pub file_path: String,
    pub file_after_paste: String,
    pub region: PasteRegion,
    pub pasted_text: String,
    pub fixed_region_text: String,
    pub label: Label,
    pub created_at: u64,
    /// Characters in `file_after_paste`.
    pub char_length: usize,
    #[serde(default)]
    pub provenance: Provenance,
}

impl PasteFixExample {
    /// Region lines of the post-paste file.
    pub fn region_lines(&self) -> Vec<&str> {
        self.file_after_paste
            .split('\n')
            .skip(self.region.start_line)
            .take(self.region.line_count())
            .collect()
    }

    pub fn fixed_lines(&self) -> Vec<&str> {
        self.fixed_region_text.split('\n').collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinerConfig {
    pub min_candidate_chars: usize,
    pub max_candidate_lines: usize,
    /// Language tag (lowercase) to line prefixes that mark an import.
    pub import_patterns: BTreeMap<String, Vec<String>>,
    /// Maximum gap between consecutive fix edits, if any.
    pub idle_cutoff_ms: Option<u64>,
}

impl Default for MinerConfig {
    fn default() -> Self {
        let mut import_patterns = BTreeMap::new();
        let mut add = |langs: &[&str], prefixes: &[&str]| {
            for lang in langs {
                import_patterns.insert(lang.to_string(), prefixes.iter().map(|p| p.to_string()).collect());
            }
        };
        add(&["python"], &["import ", "from "]);
        add(
            &[
                "java",
                "kotlin",
                "scala",
                "go",
                "dart",
                "swift",
                "proto",
                "javascript",
                "typescript",
            ],
            &["import "],
        );
        add(&["c", "cpp", "objc"], &["#include", "#import"]);
        add(&["rust"], &["use ", "pub use ", "extern crate "]);
        add(&["csharp"], &["using "]);
        add(&["php"], &["use ", "require", "include"]);
        add(&["ruby"], &["require"]);
        MinerConfig {
            min_candidate_chars: 10,
            max_candidate_lines: 5,
            import_patterns,
            idle_cutoff_ms: None,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<(), MinerError> {
        if self.min_candidate_chars == 0 || self.max_candidate_lines == 0 {
            return Err(MinerError::InvalidConfig);
        }
        Ok(())
    }

    pub fn is_paste_like(&self, inserted: &str) -> bool {
        if char_len(inserted) < self.min_candidate_chars {
            return false;
        }
        let non_empty = inserted.split('\n').filter(|l| !l.trim().is_empty()).count();
        (1..=self.max_candidate_lines).contains(&non_empty)
    }

    fn is_import_line(&self, language: &str, line: &str) -> bool {
        let line = line.trim_start();
        self.import_patterns
            .get(&language.to_lowercase())
            .is_some_and(|ps| ps.iter().any(|p| line.starts_with(p.as_str())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MinerError {
    #[error("delta deletes the entire paste region")]
    RegionDestroyed,
    #[error("paste region {0:?} does not fit the content")]
    RegionOutOfBounds(PasteRegion),
    #[error("miner thresholds must be at least 1")]
    InvalidConfig,
    #[error(transparent)]
    Journal(#[from] JournalError),
}

/// Every delta of `journey` that looks like a paste.
pub fn detect_paste_candidates(journey: &EditJourney, config: &MinerConfig) -> Result<Vec<PasteCandidate>, MinerError> {
    config.validate()?;
    let mut candidates = Vec::new();
    let mut content = match journey.events.first() {
        Some(JournalEvent::Snapshot(s)) => s.content.clone(),
        _ => return Err(JournalError::MalformedJourney.into()),
    };
    for (index, event) in journey.events.iter().enumerate().skip(1) {
        match event {
            JournalEvent::Snapshot(s) => content = s.content.clone(),
            JournalEvent::Delta(d) => {
                let after = apply_delta(&content, d).map_err(|e| match e {
                    JournalError::RangeOutOfBounds { start, end, len, .. } => JournalError::RangeOutOfBounds {
                        start,
                        end,
                        len,
                        event_index: Some(index),
                    },
                    other => other,
                })?;
                if config.is_paste_like(&d.inserted_text) {
                    let start_line = line_of_offset(&after, d.start_offset);
                    let last_char = d.start_offset + char_len(&d.inserted_text) - 1;
                    let end_line = line_of_offset(&after, last_char);
                    candidates.push(PasteCandidate {
                        journey_id: journey.journey_id.clone(),
                        event_index: index,
                        timestamp: d.timestamp,
                        region: PasteRegion { start_line, end_line },
                        pasted_text: d.inserted_text.clone(),
                        file_before: std::mem::take(&mut content),
                        file_after_paste: after.clone(),
                    });
                }
                content = after;
            }
        }
    }
    Ok(candidates)
}

/// Moves `region` across `delta`, which applies to `content`.
///
/// Lines are tracked at whole-line granularity: a delta that touches any
/// region line merges the touched lines into the region.
pub fn adjust_region(region: PasteRegion, delta: &EditDelta, content: &str) -> Result<PasteRegion, MinerError> {
    let spans = line_char_spans(content);
    if !region.fits(spans.len()) {
        return Err(MinerError::RegionOutOfBounds(region));
    }
    let len = char_len(content);
    let end = delta.start_offset.saturating_add(delta.deleted_length);
    if end > len {
        return Err(JournalError::RangeOutOfBounds {
            start: delta.start_offset,
            end,
            len,
            event_index: None,
        }
        .into());
    }
    let region_start = spans[region.start_line].0;
    let region_end = spans[region.end_line].1;
    if delta.deleted_length > 0
        && delta.inserted_text.is_empty()
        && delta.start_offset <= region_start
        && end >= region_end
    {
        return Err(MinerError::RegionDestroyed);
    }

    let first = line_of_offset(content, delta.start_offset);
    let last = line_of_offset(content, end);
    let removed = last - first;
    let added = count_newlines(&delta.inserted_text);
    let shift = |line: usize| line + added - removed;

    if last < region.start_line {
        Ok(PasteRegion {
            start_line: shift(region.start_line),
            end_line: shift(region.end_line),
        })
    } else if first > region.end_line {
        Ok(region)
    } else {
        Ok(PasteRegion {
            start_line: region.start_line.min(first),
            end_line: shift(region.end_line.max(last)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiscardReason {
    FullDeletion,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrackOutcome {
    Example(PasteFixExample),
    Discarded(DiscardReason),
}

/// Follows the edits after `candidate` and emits the resulting example.
pub fn track_fix(
    journey: &EditJourney,
    candidate: &PasteCandidate,
    config: &MinerConfig,
) -> Result<TrackOutcome, MinerError> {
    let mut content = candidate.file_after_paste.clone();
    let mut region = candidate.region;
    let original = region_text(&content, region.start_line, region.end_line);
    let mut fixed = original.clone();
    let mut last_related = candidate.timestamp;

    for event in journey.events.iter().skip(candidate.event_index + 1) {
        let delta = match event {
            JournalEvent::Snapshot(s) => {
                content = s.content.clone();
                continue;
            }
            JournalEvent::Delta(d) => d,
        };
        if config
            .idle_cutoff_ms
            .is_some_and(|cutoff| delta.timestamp.saturating_sub(last_related) > cutoff)
        {
            break;
        }
        // A nested paste closes this example; it is mined as its own candidate.
        if config.is_paste_like(&delta.inserted_text) {
            break;
        }
        let line = line_of_offset(&content, delta.start_offset);
        let related = region.contains(line);
        let next = apply_delta(&content, delta)?;
        if !related && !touches_import(delta, &next, &journey.language, config) {
            break;
        }
        region = match adjust_region(region, delta, &content) {
            Ok(r) => r,
            Err(MinerError::RegionDestroyed) => return Ok(TrackOutcome::Discarded(DiscardReason::FullDeletion)),
            Err(e) => return Err(e),
        };
        content = next;
        if related {
            fixed = region_text(&content, region.start_line, region.end_line);
            last_related = delta.timestamp;
        }
    }

    let label = if fixed == original { Label::NoEdit } else { Label::Edit };
    Ok(TrackOutcome::Example(PasteFixExample {
        journey_id: journey.journey_id.clone(),
        language: journey.language.clone(),
        file_path: journey.file_path.clone(),
        region: candidate.region,
        pasted_text: candidate.pasted_text.clone(),
        fixed_region_text: fixed,
        label,
        created_at: candidate.timestamp,
        char_length: char_len(&candidate.file_after_paste),
        file_after_paste: candidate.file_after_paste.clone(),
        provenance: journey.provenance,
    }))
}

/// Whether any line the delta touched (in the edited content) is an import.
fn touches_import(delta: &EditDelta, edited: &str, language: &str, config: &MinerConfig) -> bool {
    let first = line_of_offset(edited, delta.start_offset);
    let last = first + count_newlines(&delta.inserted_text);
    edited
        .split('\n')
        .skip(first)
        .take(last - first + 1)
        .any(|line| config.is_import_line(language, line))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningStats {
    pub journeys: usize,
    pub invalid_journeys: usize,
    pub candidates: usize,
    pub edit_examples: usize,
    pub no_edit_examples: usize,
    pub discarded: usize,
}

impl MiningStats {
    pub fn examples(&self) -> usize {
        self.edit_examples + self.no_edit_examples
    }

    /// Share of emitted examples labelled `Edit`; 0 when nothing was emitted.
    pub fn edit_fraction(&self) -> f64 {
        match self.examples() {
            0 => 0.0,
            n => self.edit_examples as f64 / n as f64,
        }
    }
}

impl AddAssign for MiningStats {
    fn add_assign(&mut self, other: Self) {
        self.journeys += other.journeys;
        self.invalid_journeys += other.invalid_journeys;
        self.candidates += other.candidates;
        self.edit_examples += other.edit_examples;
        self.no_edit_examples += other.no_edit_examples;
        self.discarded += other.discarded;
    }
}

impl std::fmt::Display for MiningStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "journeys: {} ({} invalid), paste candidates: {}, edit: {}, no-edit: {}, discarded: {}, edit share: {:.1}%",
            self.journeys,
            self.invalid_journeys,
            self.candidates,
            self.edit_examples,
            self.no_edit_examples,
            self.discarded,
            100.0 * self.edit_fraction()
        )
    }
}

/// Mines one journey. Invalid journeys produce no examples and are counted.
pub fn mine_journey(journey: &EditJourney, config: &MinerConfig) -> (Vec<PasteFixExample>, MiningStats) {
    let mut stats = MiningStats {
        journeys: 1,
        ..Default::default()
    };
    let mut examples = Vec::new();
    if !validate_journey(journey).is_empty() {
        stats.invalid_journeys = 1;
        return (examples, stats);
    }
    let candidates = match detect_paste_candidates(journey, config) {
        Ok(c) => c,
        Err(_) => {
            stats.invalid_journeys = 1;
            return (examples, stats);
        }
    };
    stats.candidates = candidates.len();
    for candidate in &candidates {
        match track_fix(journey, candidate, config) {
            Ok(TrackOutcome::Example(ex)) => {
                match ex.label {
                    Label::Edit => stats.edit_examples += 1,
                    Label::NoEdit => stats.no_edit_examples += 1,
                }
                examples.push(ex);
            }
            Ok(TrackOutcome::Discarded(_)) | Err(_) => stats.discarded += 1,
        }
    }
    (examples, stats)
}

/// Mines a stream of journeys; per-journey failures are counted, never fatal.
pub fn mine<I>(journeys: I, config: &MinerConfig) -> (Vec<PasteFixExample>, MiningStats)
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<EditJourney>,
{
    let mut all = Vec::new();
    let mut stats = MiningStats::default();
    for journey in journeys {
        let (examples, s) = mine_journey(journey.borrow(), config);
        all.extend(examples);
        stats += s;
    }
    (all, stats)
}
