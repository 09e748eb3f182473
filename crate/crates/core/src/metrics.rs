//! Online and offline evaluation metrics.
//!
//! Character metrics are defined through the longest common subsequence of
//! the two texts' characters. Quadratic work is capped; see
//! [`DEFAULT_LCS_WORK_CAP`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lcs::{lcs_alignment, lcs_len, Step};
use crate::miner::{Label, PasteRegion};

/// Maximum `len(a) * len(b)` cell operations for one LCS computation.
pub const DEFAULT_LCS_WORK_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("LCS of {a} x {b} characters exceeds the work cap of {cap} cells")]
    InputTooLarge { a: usize, b: usize, cap: u64 },
    #[error("no records to report on")]
    EmptyInput,
}

fn chars(text: &str) -> Vec<char> {
    text.chars().collect()
}

fn check_cap(a: usize, b: usize, cap: u64) -> Result<(), MetricsError> {
    if (a as u64).saturating_mul(b as u64) > cap {
        return Err(MetricsError::InputTooLarge { a, b, cap });
    }
    Ok(())
}

pub fn lcs_length_capped(a: &str, b: &str, cap: u64) -> Result<usize, MetricsError> {
    let (a, b) = (chars(a), chars(b));
    check_cap(a.len(), b.len(), cap)?;
    Ok(lcs_len(&a, &b))
}

pub fn lcs_length(a: &str, b: &str) -> Result<usize, MetricsError> {
    lcs_length_capped(a, b, DEFAULT_LCS_WORK_CAP)
}

/// Characters deleted plus characters inserted to turn `before` into `after`.
pub fn chars_modified(before: &str, after: &str) -> Result<usize, MetricsError> {
    let lcs = lcs_length(before, after)?;
    Ok(before.chars().count() + after.chars().count() - 2 * lcs)
}

/// Characters of `after` that are not part of a common subsequence.
pub fn chars_added(before: &str, after: &str) -> Result<usize, MetricsError> {
    let lcs = lcs_length(before, after)?;
    Ok(after.chars().count() - lcs)
}

/// The characters of `after` left unmatched by the canonical LCS alignment
/// with `before`, in order.
pub fn added_characters(before: &str, after: &str) -> Result<String, MetricsError> {
    let (a, b) = (chars(before), chars(after));
    check_cap(a.len(), b.len(), DEFAULT_LCS_WORK_CAP)?;
    Ok(lcs_alignment(&a, &b)
        .into_iter()
        .filter_map(|s| match s {
            Step::Insert(j) => Some(b[j]),
            _ => None,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Shown,
    Accepted,
    Dismissed,
}

/// One suggestion telemetry record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionEvent {
    pub event_id: String,
    pub request_id: String,
    pub kind: EventKind,
    pub timestamp: u64,
    pub region: PasteRegion,
    pub before_text: String,
    /// Region text after the suggestion was applied; present only on `Accepted`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after_text: Option<String>,
    #[serde(default)]
    pub latency_ms: f64,
    /// Region text observed a fixed interval after acceptance, if recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub later_text: Option<String>,
}

impl SuggestionEvent {
    pub fn is_well_formed(&self) -> bool {
        (self.kind == EventKind::Accepted) == self.after_text.is_some()
    }
}

/// Share of the suggestion's added characters still present in
/// `later_region_text`. 1.0 when nothing was added.
pub fn survival(accepted: &SuggestionEvent, later_region_text: &str) -> Result<f64, MetricsError> {
    let after = accepted.after_text.as_deref().unwrap_or_default();
    let added = added_characters(&accepted.before_text, after)?;
    let total = added.chars().count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(lcs_length(&added, later_region_text)? as f64 / total as f64)
}

/// Accepted over shown; 0 when nothing was shown.
pub fn acceptance_rate(events: &[SuggestionEvent]) -> f64 {
    let shown = events.iter().filter(|e| e.kind == EventKind::Shown).count();
    let accepted = events.iter().filter(|e| e.kind == EventKind::Accepted).count();
    if shown == 0 {
        0.0
    } else {
        accepted as f64 / shown as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub example_id: String,
    pub language: String,
    pub predicted_region: Vec<String>,
    pub ground_truth_region: Vec<String>,
    pub ground_truth_label: Label,
    pub predicted_nonempty: bool,
}

/// Byte equality of predicted and ground-truth region lines.
pub fn exact_match(record: &EvalRecord) -> bool {
    record.predicted_region == record.ground_truth_region
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChrfParams {
    pub max_n: usize,
    pub beta: f64,
}

impl Default for ChrfParams {
    fn default() -> Self {
        ChrfParams { max_n: 6, beta: 2.0 }
    }
}

/// Character n-gram F-score in `[0, 100]`, all characters (including
/// whitespace) counted.
pub fn chrf(hypothesis: &str, reference: &str) -> f64 {
    chrf_with(hypothesis, reference, ChrfParams::default())
}

pub fn chrf_with(hypothesis: &str, reference: &str, params: ChrfParams) -> f64 {
    let (hyp, refr) = (chars(hypothesis), chars(reference));
    match (hyp.is_empty(), refr.is_empty()) {
        (true, true) => return 100.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let (mut precision, mut recall, mut orders) = (0.0, 0.0, 0usize);
    for n in 1..=params.max_n.max(1) {
        let h = ngram_counts(&hyp, n);
        let r = ngram_counts(&refr, n);
        let h_total: usize = h.values().sum();
        let r_total: usize = r.values().sum();
        if h_total == 0 && r_total == 0 {
            continue;
        }
        let overlap: usize = h.iter().map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0))).sum();
        if h_total > 0 {
            precision += overlap as f64 / h_total as f64;
        }
        if r_total > 0 {
            recall += overlap as f64 / r_total as f64;
        }
        orders += 1;
    }
    let (p, r) = (precision / orders as f64, recall / orders as f64);
    let b2 = params.beta * params.beta;
    let denom = b2 * p + r;
    if denom == 0.0 {
        0.0
    } else {
        100.0 * (1.0 + b2) * p * r / denom
    }
}

fn ngram_counts(text: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut counts = HashMap::new();
    if text.len() >= n {
        for w in text.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    })
}

fn pct(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Exact-match, recall and chrF summary for one slice of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub records: usize,
    pub edit_records: usize,
    pub no_edit_records: usize,
    pub edit_exact_match: Option<f64>,
    pub no_edit_exact_match: Option<f64>,
    pub overall_exact_match: Option<f64>,
    /// Share of `Edit` records for which the model proposed any edit.
    pub recall: Option<f64>,
    /// Median chrF over records that are not exact matches.
    pub median_chrf: Option<f64>,
}

#[derive(Debug, Clone, Default)]
struct SliceAccumulator {
    edit: usize,
    no_edit: usize,
    edit_exact: usize,
    no_edit_exact: usize,
    edit_predicted: usize,
    miss_chrf: Vec<f64>,
}

impl SliceAccumulator {
    fn add(&mut self, record: &EvalRecord) {
        let exact = exact_match(record);
        match record.ground_truth_label {
            Label::Edit => {
                self.edit += 1;
                self.edit_exact += exact as usize;
                self.edit_predicted += record.predicted_nonempty as usize;
            }
            Label::NoEdit => {
                self.no_edit += 1;
                self.no_edit_exact += exact as usize;
            }
        }
        if !exact {
            self.miss_chrf.push(chrf(
                &record.predicted_region.join("\n"),
                &record.ground_truth_region.join("\n"),
            ));
        }
    }

    fn finish(mut self) -> SliceReport {
        SliceReport {
            records: self.edit + self.no_edit,
            edit_records: self.edit,
            no_edit_records: self.no_edit,
            edit_exact_match: pct(self.edit_exact, self.edit),
            no_edit_exact_match: pct(self.no_edit_exact, self.no_edit),
            overall_exact_match: pct(self.edit_exact + self.no_edit_exact, self.edit + self.no_edit),
            recall: pct(self.edit_predicted, self.edit),
            median_chrf: median(&mut self.miss_chrf),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineReport {
    pub overall: SliceReport,
    pub per_language: BTreeMap<String, SliceReport>,
}

pub fn offline_report(records: &[EvalRecord]) -> Result<OfflineReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut overall = SliceAccumulator::default();
    let mut per_language: BTreeMap<String, SliceAccumulator> = BTreeMap::new();
    for r in records {
        overall.add(r);
        per_language.entry(r.language.clone()).or_default().add(r);
    }
    Ok(OfflineReport {
        overall: overall.finish(),
        per_language: per_language.into_iter().map(|(k, v)| (k, v.finish())).collect(),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.1}"))
}

impl fmt::Display for OfflineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>7} {:>9} {:>9} {:>9} {:>8} {:>8}",
            "language", "records", "edit EM", "no-edit EM", "overall", "recall", "chrF"
        )?;
        let rows = self
            .per_language
            .iter()
            .map(|(k, v)| (k.as_str(), v))
            .chain(std::iter::once(("overall", &self.overall)));
        for (name, s) in rows {
            writeln!(
                f,
                "{:<16} {:>7} {:>9} {:>9} {:>9} {:>8} {:>8}",
                name,
                s.records,
                cell(s.edit_exact_match),
                cell(s.no_edit_exact_match),
                cell(s.overall_exact_match),
                cell(s.recall),
                cell(s.median_chrf)
            )?;
        }
        Ok(())
    }
}

/// Online metrics over a telemetry log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineReport {
    pub shown: usize,
    pub accepted: usize,
    pub dismissed: usize,
    pub acceptance_rate: f64,
    pub mean_chars_modified: Option<f64>,
    pub mean_chars_added: Option<f64>,
    /// Mean survival over accepted events that carry a `later_text`.
    pub mean_survival: Option<f64>,
    pub median_latency_ms: Option<f64>,
    /// Most `Shown` events within any one-second window.
    pub peak_qps: usize,
}

pub fn online_report(events: &[SuggestionEvent]) -> Result<OnlineReport, MetricsError> {
    let count = |k| events.iter().filter(|e| e.kind == k).count();
    let accepted: Vec<&SuggestionEvent> = events.iter().filter(|e| e.kind == EventKind::Accepted).collect();
    let mut modified = Vec::new();
    let mut added = Vec::new();
    let mut survived = Vec::new();
    for e in &accepted {
        let after = e.after_text.as_deref().unwrap_or_default();
        modified.push(chars_modified(&e.before_text, after)? as f64);
        added.push(chars_added(&e.before_text, after)? as f64);
        if let Some(later) = &e.later_text {
            survived.push(survival(e, later)?);
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let mut shown_ts: Vec<u64> = events
        .iter()
        .filter(|e| e.kind == EventKind::Shown)
        .map(|e| e.timestamp)
        .collect();
    shown_ts.sort_unstable();
    let mut peak = 0;
    let mut lo = 0;
    for hi in 0..shown_ts.len() {
        while shown_ts[hi] - shown_ts[lo] >= 1000 {
            lo += 1;
        }
        peak = peak.max(hi - lo + 1);
    }
    let mut latencies: Vec<f64> = events
        .iter()
        .filter(|e| e.kind == EventKind::Shown)
        .map(|e| e.latency_ms)
        .collect();
    Ok(OnlineReport {
        shown: count(EventKind::Shown),
        accepted: accepted.len(),
        dismissed: count(EventKind::Dismissed),
        acceptance_rate: acceptance_rate(events),
        mean_chars_modified: mean(&modified),
        mean_chars_added: mean(&added),
        mean_survival: mean(&survived),
        median_latency_ms: median(&mut latencies),
        peak_qps: peak,
    })
}
