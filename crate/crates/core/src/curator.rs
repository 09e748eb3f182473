//! Dataset curation: quality filters, language weighting and batching.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::journal::Provenance;
use crate::miner::{Label, PasteFixExample};

pub const MS_PER_DAY: u64 = 86_400_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationPolicy {
    pub max_paste_lines: usize,
    pub max_example_chars: usize,
    pub max_age_days: u64,
    pub allowed_provenance: BTreeSet<Provenance>,
}

impl Default for CurationPolicy {
    fn default() -> Self {
        CurationPolicy {
            max_paste_lines: 20,
            max_example_chars: 50_000,
            max_age_days: 120,
            allowed_provenance: BTreeSet::from([Provenance::Internal]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectReason {
    DisallowedProvenance,
    TooOld,
    TooManyPasteLines,
    TooLarge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Keep,
    Reject(RejectReason),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CurationError {
    #[error("curation policy bounds must be positive")]
    InvalidPolicy,
    #[error("observed language frequencies are empty")]
    EmptyFrequencies,
    #[error("every observed language frequency is zero")]
    AllZeroFrequencies,
    #[error("no examples to batch")]
    EmptyInput,
    #[error("batch size must be positive and the no-edit fraction within [0, 1]")]
    InvalidBatchConfig,
}

impl CurationPolicy {
    pub fn validate(&self) -> Result<(), CurationError> {
        if self.max_paste_lines == 0 || self.max_example_chars == 0 || self.max_age_days == 0 {
            return Err(CurationError::InvalidPolicy);
        }
        Ok(())
    }
}

/// Lines of the pasted snippet; a trailing newline does not open a new line.
pub fn paste_line_count(pasted: &str) -> usize {
    let trimmed = pasted.strip_suffix('\n').unwrap_or(pasted);
    trimmed.split('\n').count()
}

/// Checks provenance, age, paste lines and size, in that order.
pub fn filter_example(example: &PasteFixExample, policy: &CurationPolicy, now_ms: u64) -> Verdict {
    let reason = if !policy.allowed_provenance.contains(&example.provenance) {
        Some(RejectReason::DisallowedProvenance)
    } else if now_ms.saturating_sub(example.created_at) > policy.max_age_days * MS_PER_DAY {
        Some(RejectReason::TooOld)
    } else if paste_line_count(&example.pasted_text) > policy.max_paste_lines {
        Some(RejectReason::TooManyPasteLines)
    } else if example.char_length > policy.max_example_chars {
        Some(RejectReason::TooLarge)
    } else {
        None
    };
    reason.map_or(Verdict::Keep, Verdict::Reject)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub kept: usize,
    pub rejected: BTreeMap<RejectReason, usize>,
}

pub fn filter_all(
    examples: Vec<PasteFixExample>,
    policy: &CurationPolicy,
    now_ms: u64,
) -> (Vec<PasteFixExample>, FilterSummary) {
    let mut summary = FilterSummary::default();
    let kept = examples
        .into_iter()
        .filter(|e| match filter_example(e, policy, now_ms) {
            Verdict::Keep => {
                summary.kept += 1;
                true
            }
            Verdict::Reject(r) => {
                *summary.rejected.entry(r).or_default() += 1;
                false
            }
        })
        .collect();
    (kept, summary)
}

/// Normalized sampling weight per language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageWeights(pub BTreeMap<String, f64>);

impl LanguageWeights {
    pub fn get(&self, language: &str) -> f64 {
        self.0.get(language).copied().unwrap_or(0.0)
    }

    /// Draws a language proportionally to its weight.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&str> {
        pick_weighted(self.0.iter().map(|(k, w)| (k.as_str(), *w)), rng)
    }
}

fn pick_weighted<'a, I, R>(items: I, rng: &mut R) -> Option<&'a str>
where
    I: Iterator<Item = (&'a str, f64)> + Clone,
    R: Rng + ?Sized,
{
    let total: f64 = items.clone().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return None;
    }
    let mut x = rng.gen::<f64>() * total;
    let mut last = None;
    for (k, w) in items {
        if w <= 0.0 {
            continue;
        }
        last = Some(k);
        if x < w {
            return Some(k);
        }
        x -= w;
    }
    last
}

/// Weights proportional to `observed`; languages seen only in `examples`
/// get weight 0.
pub fn weight_languages<'a, I>(examples: I, observed: &BTreeMap<String, f64>) -> Result<LanguageWeights, CurationError>
where
    I: IntoIterator<Item = &'a PasteFixExample>,
{
    if observed.is_empty() {
        return Err(CurationError::EmptyFrequencies);
    }
    let total: f64 = observed.values().filter(|v| v.is_finite() && **v > 0.0).sum();
    if total <= 0.0 {
        return Err(CurationError::AllZeroFrequencies);
    }
    let mut weights: BTreeMap<String, f64> = observed
        .iter()
        .map(|(k, v)| (k.clone(), if v.is_finite() && *v > 0.0 { v / total } else { 0.0 }))
        .collect();
    for e in examples {
        weights.entry(e.language.clone()).or_insert(0.0);
    }
    Ok(LanguageWeights(weights))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub examples: Vec<PasteFixExample>,
    pub size: usize,
}

impl Batch {
    pub fn no_edit_count(&self) -> usize {
        self.examples.iter().filter(|e| e.label == Label::NoEdit).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub batch_index: usize,
    pub missing_no_edit: usize,
    pub missing_edit: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batches: Vec<Batch>,
    pub shortfall: Option<Shortfall>,
    /// Examples left over because their language has zero weight or a
    /// label pool ran out.
    pub unused: usize,
}

/// `round(batch_size * fraction)` with halves rounded up.
pub fn no_edit_quota(batch_size: usize, no_edit_fraction: f64) -> usize {
    (batch_size as f64 * no_edit_fraction + 0.5).floor() as usize
}

/// Pools of one label, grouped by language.
struct Pool(BTreeMap<String, Vec<PasteFixExample>>);

impl Pool {
    fn draw(&mut self, weights: &LanguageWeights, rng: &mut ChaCha8Rng) -> Option<PasteFixExample> {
        let lang = pick_weighted(
            self.0
                .iter()
                .filter(|(_, v)| !v.is_empty())
                .map(|(k, _)| (k.as_str(), weights.get(k))),
            rng,
        )?
        .to_owned();
        let bucket = self.0.get_mut(&lang)?;
        let i = rng.gen_range(0..bucket.len());
        Some(bucket.swap_remove(i))
    }

    fn len(&self) -> usize {
        self.0.values().map(Vec::len).sum()
    }
}

/// Assembles batches with a fixed no-edit quota, sampling languages by
/// weight without replacement. Stops at the first batch that cannot be
/// filled, which is returned as a partial batch with its shortfall.
pub fn build_batches(
    examples: Vec<PasteFixExample>,
    batch_size: usize,
    no_edit_fraction: f64,
    weights: &LanguageWeights,
    seed: u64,
) -> Result<BatchPlan, CurationError> {
    if examples.is_empty() {
        return Err(CurationError::EmptyInput);
    }
    if batch_size == 0 || !(0.0..=1.0).contains(&no_edit_fraction) {
        return Err(CurationError::InvalidBatchConfig);
    }
    let quota_no_edit = no_edit_quota(batch_size, no_edit_fraction);
    let quota_edit = batch_size - quota_no_edit;
    let mut edit = Pool(BTreeMap::new());
    let mut no_edit = Pool(BTreeMap::new());
    for e in examples {
        let pool = match e.label {
            Label::Edit => &mut edit,
            Label::NoEdit => &mut no_edit,
        };
        pool.0.entry(e.language.clone()).or_default().push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batches = Vec::new();
    let mut shortfall = None;
    loop {
        let mut batch = Vec::with_capacity(batch_size);
        let mut missing = [0usize; 2];
        for (slot, (pool, quota)) in [(&mut no_edit, quota_no_edit), (&mut edit, quota_edit)]
            .into_iter()
            .enumerate()
        {
            for _ in 0..quota {
                match pool.draw(weights, &mut rng) {
                    Some(e) => batch.push(e),
                    None => missing[slot] += 1,
                }
            }
        }
        if batch.is_empty() {
            break;
        }
        let full = missing == [0, 0];
        let size = batch.len();
        // Keep label order from leaking into training order.
        for i in (1..batch.len()).rev() {
            batch.swap(i, rng.gen_range(0..=i));
        }
        batches.push(Batch { examples: batch, size });
        if !full {
            shortfall = Some(Shortfall {
                batch_index: batches.len() - 1,
                missing_no_edit: missing[0],
                missing_edit: missing[1],
            });
            break;
        }
    }
    Ok(BatchPlan {
        batches,
        shortfall,
        unused: edit.len() + no_edit.len(),
    })
}

/// Deterministically assigns each file path to the held-out split with
/// probability `holdout_fraction`, so no file contributes to both splits.
pub fn split_by_file_path(
    examples: Vec<PasteFixExample>,
    holdout_fraction: f64,
) -> (Vec<PasteFixExample>, Vec<PasteFixExample>) {
    examples.into_iter().partition(|e| {
        let digest = Sha256::digest(e.file_path.as_bytes());
        let bucket = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"));
        (bucket as f64 / u64::MAX as f64) >= holdout_fraction
    })
}
