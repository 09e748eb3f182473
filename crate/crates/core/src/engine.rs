//! Post-paste suggestion engine.
//!
//! `suggest` builds the context selection, encodes the prompt, queries a
//! [`ModelBackend`], parses the returned patch and applies the
//! post-processing rules. Anything that should not reach the user (no
//! edit, unparseable or inapplicable patches, gated scores, full
//! deletions) comes back as `Ok(None)` and is counted; only backend
//! infrastructure failures are errors.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{apply_patch, encode_prompt, CodecConfig, EditPatch};
use crate::context::{build_context, CharApproxTokenizer, Tokenizer, DEFAULT_TOKEN_BUDGET};
use crate::miner::PasteRegion;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub patch_text: String,
    pub score: Option<f64>,
    pub backend_latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
}

/// A model that maps a prompt to a patch. Implementations must tolerate
/// concurrent calls.
pub trait ModelBackend: Send + Sync {
    fn predict(&self, prompt: &str) -> Result<ModelOutput, BackendError>;
}

impl<B: ModelBackend + ?Sized> ModelBackend for std::sync::Arc<B> {
    fn predict(&self, prompt: &str) -> Result<ModelOutput, BackendError> {
        (**self).predict(prompt)
    }
}

impl<B: ModelBackend + ?Sized> ModelBackend for Box<B> {
    fn predict(&self, prompt: &str) -> Result<ModelOutput, BackendError> {
        (**self).predict(prompt)
    }
}

/// Hex SHA-256 of the prompt text.
pub fn prompt_fingerprint(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Deterministic test double: prompt fingerprint to patch text, empty patch
/// for unknown prompts, score fixed at 0.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    script: HashMap<String, String>,
}

impl ScriptedBackend {
    pub fn new(script: HashMap<String, String>) -> Self {
        ScriptedBackend { script }
    }

    pub fn insert_prompt(&mut self, prompt: &str, patch_text: impl Into<String>) {
        self.script.insert(prompt_fingerprint(prompt), patch_text.into());
    }

    pub fn insert_fingerprint(&mut self, fingerprint: impl Into<String>, patch_text: impl Into<String>) {
        self.script.insert(fingerprint.into(), patch_text.into());
    }

    pub fn len(&self) -> usize {
        self.script.len()
    }

    pub fn is_empty(&self) -> bool {
        self.script.is_empty()
    }
}

impl ModelBackend for ScriptedBackend {
    fn predict(&self, prompt: &str) -> Result<ModelOutput, BackendError> {
        Ok(ModelOutput {
            patch_text: self
                .script
                .get(&prompt_fingerprint(prompt))
                .cloned()
                .unwrap_or_default(),
            score: Some(0.0),
            backend_latency_ms: 0.0,
        })
    }
}

/// Backend computed by a closure over the prompt.
pub struct FnBackend<F>(pub F);

impl<F> ModelBackend for FnBackend<F>
where
    F: Fn(&str) -> Result<ModelOutput, BackendError> + Send + Sync,
{
    fn predict(&self, prompt: &str) -> Result<ModelOutput, BackendError> {
        (self.0)(prompt)
    }
}

#[derive(Debug, Serialize)]
struct RemoteRequest<'a> {
    prompt: &'a str,
}

#[derive(Debug, Deserialize)]
struct RemoteResponse {
    patch_text: String,
    #[serde(default)]
    score: Option<f64>,
}

/// Model served over HTTP: `POST {"prompt"}` answered by
/// `{"patch_text", "score"}`.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        Ok(RemoteBackend {
            endpoint: endpoint.into(),
            client,
        })
    }
}

impl ModelBackend for RemoteBackend {
    fn predict(&self, prompt: &str) -> Result<ModelOutput, BackendError> {
        let started = Instant::now();
        let response = self
            .client
            .post(&self.endpoint)
            .json(&RemoteRequest { prompt })
            .send()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        if !response.status().is_success() {
            return Err(BackendError::Unavailable(format!("status {}", response.status())));
        }
        let body = response.bytes().map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let parsed: RemoteResponse =
            serde_json::from_slice(&body).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        Ok(ModelOutput {
            patch_text: parsed.patch_text,
            score: parsed.score,
            backend_latency_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Suggestions scoring below this log-probability are dropped.
    pub score_threshold: Option<f64>,
    pub suppress_full_deletion: bool,
    pub token_budget: usize,
    pub codec: CodecConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            score_threshold: None,
            suppress_full_deletion: true,
            token_budget: DEFAULT_TOKEN_BUDGET,
            codec: CodecConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("score threshold must be finite")]
    InvalidThreshold,
    #[error("paste region {region:?} is outside a file of {lines} lines")]
    RegionOutOfBounds { region: PasteRegion, lines: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub patch: EditPatch,
    pub preview_region_lines: Vec<String>,
    pub score: Option<f64>,
    pub model_latency_ms: f64,
    pub engine_latency_ms: f64,
}

/// Why a request produced no suggestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Suppression {
    NoEdit,
    ContextOverBudget,
    DelimiterCollision,
    ParseFailure,
    BelowThreshold,
    PatchMismatch,
    FullDeletion,
}

/// Outcome of one request, with timings even when nothing is suggested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineOutcome {
    pub suggestion: Option<Suggestion>,
    pub suppression: Option<Suppression>,
    pub model_latency_ms: f64,
    pub engine_latency_ms: f64,
}

#[derive(Debug, Default)]
pub struct EngineCounters {
    pub requests: AtomicU64,
    pub suggestions: AtomicU64,
    pub no_edit: AtomicU64,
    pub context_over_budget: AtomicU64,
    pub delimiter_collisions: AtomicU64,
    pub parse_failures: AtomicU64,
    pub below_threshold: AtomicU64,
    pub patch_mismatches: AtomicU64,
    pub full_deletions: AtomicU64,
    pub backend_errors: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub requests: u64,
    pub suggestions: u64,
    pub no_edit: u64,
    pub context_over_budget: u64,
    pub delimiter_collisions: u64,
    pub parse_failures: u64,
    pub below_threshold: u64,
    pub patch_mismatches: u64,
    pub full_deletions: u64,
    pub backend_errors: u64,
}

impl EngineCounters {
    fn bump(counter: &AtomicU64) {
        counter.fetch_add(1, Ordering::Relaxed);
    }

    fn record(&self, s: Suppression) {
        Self::bump(match s {
            Suppression::NoEdit => &self.no_edit,
            Suppression::ContextOverBudget => &self.context_over_budget,
            Suppression::DelimiterCollision => &self.delimiter_collisions,
            Suppression::ParseFailure => &self.parse_failures,
            Suppression::BelowThreshold => &self.below_threshold,
            Suppression::PatchMismatch => &self.patch_mismatches,
            Suppression::FullDeletion => &self.full_deletions,
        });
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        let get = |c: &AtomicU64| c.load(Ordering::Relaxed);
        CounterSnapshot {
            requests: get(&self.requests),
            suggestions: get(&self.suggestions),
            no_edit: get(&self.no_edit),
            context_over_budget: get(&self.context_over_budget),
            delimiter_collisions: get(&self.delimiter_collisions),
            parse_failures: get(&self.parse_failures),
            below_threshold: get(&self.below_threshold),
            patch_mismatches: get(&self.patch_mismatches),
            full_deletions: get(&self.full_deletions),
            backend_errors: get(&self.backend_errors),
        }
    }
}

/// The paste a suggestion is requested for.
#[derive(Debug, Clone, Copy)]
pub struct PasteInput<'a> {
    pub file_path: &'a str,
    pub language: &'a str,
    pub content_after_paste: &'a str,
    pub region: PasteRegion,
}

pub struct SuggestionEngine {
    config: EngineConfig,
    tokenizer: Box<dyn Tokenizer + Send + Sync>,
    counters: EngineCounters,
}

impl std::fmt::Debug for SuggestionEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SuggestionEngine")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl SuggestionEngine {
    pub fn new(config: EngineConfig) -> Result<Self, EngineError> {
        Self::with_tokenizer(config, CharApproxTokenizer)
    }

    pub fn with_tokenizer<T: Tokenizer + Send + Sync + 'static>(
        config: EngineConfig,
        tokenizer: T,
    ) -> Result<Self, EngineError> {
        if config.score_threshold.is_some_and(|t| !t.is_finite()) {
            return Err(EngineError::InvalidThreshold);
        }
        Ok(SuggestionEngine {
            config,
            tokenizer: Box::new(tokenizer),
            counters: EngineCounters::default(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn counters(&self) -> CounterSnapshot {
        self.counters.snapshot()
    }

    pub fn suggest<B: ModelBackend + ?Sized>(
        &self,
        input: PasteInput<'_>,
        backend: &B,
    ) -> Result<Option<Suggestion>, EngineError> {
        Ok(self.run(input, backend)?.suggestion)
    }

    /// Like [`suggest`](Self::suggest), also reporting the suppression
    /// reason and timings when there is no suggestion.
    pub fn run<B: ModelBackend + ?Sized>(
        &self,
        input: PasteInput<'_>,
        backend: &B,
    ) -> Result<EngineOutcome, EngineError> {
        let started = Instant::now();
        EngineCounters::bump(&self.counters.requests);
        let lines: Vec<&str> = input.content_after_paste.split('\n').collect();
        let region = input.region;
        if !region.fits(lines.len()) {
            return Err(EngineError::RegionOutOfBounds {
                region,
                lines: lines.len(),
            });
        }
        let mut model_ms = 0.0;
        let finish = |suppression: Option<Suppression>, suggestion: Option<Suggestion>, model_ms: f64| {
            if let Some(s) = suppression {
                self.counters.record(s);
            }
            let engine_ms = (started.elapsed().as_secs_f64() * 1e3 - model_ms).max(0.0);
            let suggestion = suggestion.map(|mut s| {
                s.engine_latency_ms = engine_ms;
                s
            });
            if suggestion.is_some() {
                EngineCounters::bump(&self.counters.suggestions);
            }
            Ok(EngineOutcome {
                suggestion,
                suppression,
                model_latency_ms: model_ms,
                engine_latency_ms: engine_ms,
            })
        };

        let selection = build_context(&lines, region, self.config.token_budget, self.tokenizer.as_ref())
            .expect("region checked above");
        if selection.is_empty() {
            return finish(Some(Suppression::ContextOverBudget), None, model_ms);
        }
        let prompt = match encode_prompt(input.file_path, &lines, &selection, &self.config.codec) {
            Ok(p) => p,
            Err(_) => return finish(Some(Suppression::DelimiterCollision), None, model_ms),
        };

        let model_started = Instant::now();
        let output = backend.predict(&prompt);
        model_ms = model_started.elapsed().as_secs_f64() * 1e3;
        let output = match output {
            Ok(o) => o,
            Err(e) => {
                EngineCounters::bump(&self.counters.backend_errors);
                return Err(e.into());
            }
        };

        let patch = match EditPatch::parse(&output.patch_text) {
            Ok(p) => p,
            Err(_) => return finish(Some(Suppression::ParseFailure), None, model_ms),
        };
        if patch.is_no_edit() {
            return finish(Some(Suppression::NoEdit), None, model_ms);
        }
        if let (Some(threshold), Some(score)) = (self.config.score_threshold, output.score) {
            if score < threshold {
                return finish(Some(Suppression::BelowThreshold), None, model_ms);
            }
        }
        let pasted = &lines[region.start_line..=region.end_line];
        let preview = match apply_patch(pasted, &patch) {
            Ok(p) => p,
            Err(_) => return finish(Some(Suppression::PatchMismatch), None, model_ms),
        };
        if self.config.suppress_full_deletion && preview.is_empty() {
            return finish(Some(Suppression::FullDeletion), None, model_ms);
        }
        let suggestion = Suggestion {
            patch,
            preview_region_lines: preview,
            score: output.score,
            model_latency_ms: model_ms,
            engine_latency_ms: 0.0,
        };
        finish(None, Some(suggestion), model_ms)
    }
}
