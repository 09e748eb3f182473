//! Post-paste edit suggestions: mining paste-and-fix examples from edit
//! journals, curating training data, building token-budgeted prompts,
//! encoding and applying delimiter-anchored patches, serving suggestions
//! and computing evaluation metrics.

pub mod cli;
pub mod codec;
pub mod context;
pub mod curator;
pub mod engine;
pub mod journal;
pub mod lcs;
pub mod metrics;
pub mod miner;
pub mod service;
pub mod text;

pub use codec::{apply_patch, diff_region, encode_prompt, CodecConfig, CodecError, EditPatch, Hunk};
pub use context::{build_context, render_context, CharApproxTokenizer, ContextSelection, Tokenizer};
pub use engine::{EngineConfig, ModelBackend, PasteInput, ScriptedBackend, Suggestion, SuggestionEngine};
pub use journal::{EditDelta, EditJourney, FileSnapshot, JournalEvent, Provenance};
pub use miner::{Label, MinerConfig, PasteFixExample, PasteRegion};
