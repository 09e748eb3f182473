//! C ABI over the smartpaste engine.
//!
//! Every function returns an [`SpStatus`]. On failure a message is stored in
//! a thread-local slot readable through [`sp_last_error_message`]. Strings
//! handed out by the library are released with [`sp_string_free`]; strings
//! borrowed from a handle live as long as the handle.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Duration;

use smartpaste::codec::{apply_patch, encode_prompt, EditPatch};
use smartpaste::context::{build_context, CharApproxTokenizer};
use smartpaste::engine::{
    BackendError, EngineConfig, EngineError, ModelBackend, ModelOutput, PasteInput, RemoteBackend, ScriptedBackend,
    Suggestion, SuggestionEngine,
};
use smartpaste::metrics::{chars_modified, chrf};
use smartpaste::miner::PasteRegion;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ParseError = 4,
    PatchMismatch = 5,
    BackendUnavailable = 6,
    Internal = 7,
}

enum Backend {
    Scripted(ScriptedBackend),
    Remote(RemoteBackend),
}

impl ModelBackend for Backend {
    fn predict(&self, prompt: &str) -> Result<ModelOutput, BackendError> {
        match self {
            Backend::Scripted(b) => b.predict(prompt),
            Backend::Remote(b) => b.predict(prompt),
        }
    }
}

/// Engine plus backend. Opaque to C.
pub struct SpEngine {
    engine: SuggestionEngine,
    backend: Backend,
}

/// A suggestion returned by [`sp_engine_suggest`]. Opaque to C.
pub struct SpSuggestion {
    patch_text: CString,
    preview: CString,
    score: Option<f64>,
    model_latency_ms: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SpStatus, String);

impl Failure {
    fn new(status: SpStatus, message: impl ToString) -> Self {
        Failure(status, message.to_string())
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> SpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            SpStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("panic inside smartpaste".into());
            SpStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(SpStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(SpStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or_else(|| Failure::new(SpStatus::NullPointer, format!("{name} is null")))
}

fn to_cstring(s: impl Into<Vec<u8>>) -> Result<CString, Failure> {
    CString::new(s).map_err(|_| Failure::new(SpStatus::InvalidArgument, "output contains a NUL byte"))
}

fn region(start_line: usize, end_line: usize) -> Result<PasteRegion, Failure> {
    PasteRegion::new(start_line, end_line)
        .ok_or_else(|| Failure::new(SpStatus::InvalidArgument, "start_line is after end_line"))
}

fn engine_config(json: Option<&str>) -> Result<EngineConfig, Failure> {
    match json {
        None => Ok(EngineConfig::default()),
        Some(j) => serde_json::from_str(j).map_err(|e| Failure::new(SpStatus::ParseError, e)),
    }
}

fn new_engine(
    config_json: *const c_char,
    backend: impl FnOnce() -> Result<Backend, Failure>,
    out: *mut *mut SpEngine,
) -> SpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let config = engine_config(unsafe { opt_str_arg(config_json, "config_json")? })?;
        let engine = SuggestionEngine::new(config).map_err(|e| Failure::new(SpStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(SpEngine {
            engine,
            backend: backend()?,
        }));
        Ok(())
    })
}

/// Creates an engine with an empty scripted backend. `config_json` may be
/// null for defaults.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sp_engine_new_scripted(config_json: *const c_char, out: *mut *mut SpEngine) -> SpStatus {
    new_engine(config_json, || Ok(Backend::Scripted(ScriptedBackend::default())), out)
}

/// Creates an engine that posts prompts to `endpoint`.
///
/// # Safety
/// String arguments must be null (config only) or NUL-terminated; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_engine_new_remote(
    endpoint: *const c_char,
    timeout_ms: u64,
    config_json: *const c_char,
    out: *mut *mut SpEngine,
) -> SpStatus {
    new_engine(
        config_json,
        || {
            let endpoint = unsafe { str_arg(endpoint, "endpoint")? };
            RemoteBackend::new(endpoint, Duration::from_millis(timeout_ms))
                .map(Backend::Remote)
                .map_err(|e| Failure::new(SpStatus::BackendUnavailable, e))
        },
        out,
    )
}

/// # Safety
/// `engine` must be null or come from an `sp_engine_new_*` call, and must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sp_engine_free(engine: *mut SpEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Maps a prompt to the patch the scripted backend returns for it. Must not
/// run concurrently with other calls on the same engine.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sp_engine_add_script(
    engine: *mut SpEngine,
    prompt: *const c_char,
    patch_text: *const c_char,
) -> SpStatus {
    guard(|| {
        let engine = out_arg(engine, "engine")?;
        let prompt = unsafe { str_arg(prompt, "prompt")? };
        let patch_text = unsafe { str_arg(patch_text, "patch_text")? };
        match &mut engine.backend {
            Backend::Scripted(b) => {
                b.insert_prompt(prompt, patch_text);
                Ok(())
            }
            Backend::Remote(_) => Err(Failure::new(SpStatus::InvalidArgument, "engine has a remote backend")),
        }
    })
}

/// Renders the prompt the engine would send for a paste. Free `*out` with
/// [`sp_string_free`]. Lines are zero-based and inclusive.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sp_engine_prompt(
    engine: *const SpEngine,
    file_path: *const c_char,
    content: *const c_char,
    start_line: usize,
    end_line: usize,
    out: *mut *mut c_char,
) -> SpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let engine = unsafe { engine.as_ref() }.ok_or_else(|| Failure::new(SpStatus::NullPointer, "engine is null"))?;
        let file_path = unsafe { str_arg(file_path, "file_path")? };
        let content = unsafe { str_arg(content, "content")? };
        let lines: Vec<&str> = content.split('\n').collect();
        let config = engine.engine.config();
        let selection = build_context(
            &lines,
            region(start_line, end_line)?,
            config.token_budget,
            &CharApproxTokenizer,
        )
        .map_err(|e| Failure::new(SpStatus::InvalidArgument, e))?;
        let prompt = encode_prompt(file_path, &lines, &selection, &config.codec)
            .map_err(|e| Failure::new(SpStatus::InvalidArgument, e))?;
        *out = to_cstring(prompt)?.into_raw();
        Ok(())
    })
}

/// Requests a suggestion. On success `*out` is either a suggestion or null
/// when the engine stayed silent.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sp_engine_suggest(
    engine: *const SpEngine,
    file_path: *const c_char,
    language: *const c_char,
    content: *const c_char,
    start_line: usize,
    end_line: usize,
    out: *mut *mut SpSuggestion,
) -> SpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let engine = unsafe { engine.as_ref() }.ok_or_else(|| Failure::new(SpStatus::NullPointer, "engine is null"))?;
        let input = PasteInput {
            file_path: unsafe { str_arg(file_path, "file_path")? },
            language: unsafe { str_arg(language, "language")? },
            content_after_paste: unsafe { str_arg(content, "content")? },
            region: region(start_line, end_line)?,
        };
        let suggestion = engine.engine.suggest(input, &engine.backend).map_err(|e| match e {
            EngineError::Backend(b) => Failure::new(SpStatus::BackendUnavailable, b),
            other => Failure::new(SpStatus::InvalidArgument, other),
        })?;
        if let Some(s) = suggestion {
            *out = Box::into_raw(Box::new(to_handle(s)?));
        }
        Ok(())
    })
}

fn to_handle(s: Suggestion) -> Result<SpSuggestion, Failure> {
    Ok(SpSuggestion {
        patch_text: to_cstring(s.patch.render())?,
        preview: to_cstring(s.preview_region_lines.join("\n"))?,
        score: s.score,
        model_latency_ms: s.model_latency_ms,
    })
}

/// Patch text of the suggestion, owned by the handle.
///
/// # Safety
/// `suggestion` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_suggestion_patch_text(suggestion: *const SpSuggestion) -> *const c_char {
    suggestion.as_ref().map_or(ptr::null(), |s| s.patch_text.as_ptr())
}

/// Region lines after applying the patch, joined with `\n`, owned by the
/// handle.
///
/// # Safety
/// `suggestion` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_suggestion_preview(suggestion: *const SpSuggestion) -> *const c_char {
    suggestion.as_ref().map_or(ptr::null(), |s| s.preview.as_ptr())
}

/// Writes the backend score to `*out`. Returns false when the backend gave
/// none.
///
/// # Safety
/// `suggestion` must be null or a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_suggestion_score(suggestion: *const SpSuggestion, out: *mut f64) -> bool {
    match (suggestion.as_ref().and_then(|s| s.score), out.as_mut()) {
        (Some(score), Some(out)) => {
            *out = score;
            true
        }
        _ => false,
    }
}

/// # Safety
/// `suggestion` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_suggestion_model_latency_ms(suggestion: *const SpSuggestion) -> f64 {
    suggestion.as_ref().map_or(0.0, |s| s.model_latency_ms)
}

/// # Safety
/// `suggestion` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sp_suggestion_free(suggestion: *mut SpSuggestion) {
    if !suggestion.is_null() {
        drop(Box::from_raw(suggestion));
    }
}

/// Applies patch text to pasted text (lines separated by `\n`).
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_apply_patch(
    pasted_text: *const c_char,
    patch_text: *const c_char,
    out: *mut *mut c_char,
) -> SpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let pasted = unsafe { str_arg(pasted_text, "pasted_text")? };
        let patch = EditPatch::parse(unsafe { str_arg(patch_text, "patch_text")? })
            .map_err(|e| Failure::new(SpStatus::ParseError, e))?;
        let lines: Vec<&str> = pasted.split('\n').collect();
        let fixed = apply_patch(&lines, &patch).map_err(|e| Failure::new(SpStatus::PatchMismatch, e))?;
        *out = to_cstring(fixed.join("\n"))?.into_raw();
        Ok(())
    })
}

/// Character n-gram F-score (n up to 6, beta 2) on a 0 to 100 scale.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_chrf(hypothesis: *const c_char, reference: *const c_char, out: *mut f64) -> SpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = chrf(unsafe { str_arg(hypothesis, "hypothesis")? }, unsafe {
            str_arg(reference, "reference")?
        });
        Ok(())
    })
}

/// Characters inserted plus deleted between two strings.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_chars_modified(before: *const c_char, after: *const c_char, out: *mut usize) -> SpStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = chars_modified(unsafe { str_arg(before, "before")? }, unsafe {
            str_arg(after, "after")?
        })
        .map_err(|e| Failure::new(SpStatus::InvalidArgument, e))?;
        Ok(())
    })
}

/// Selects context lines for a paste under a token budget, using the default
/// length-based token estimate. Writes an ascending array of line indices to
/// `*out_lines` (free with [`sp_lines_free`]) and its length to `*out_len`.
///
/// # Safety
/// `content` must be NUL-terminated; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_build_context(
    content: *const c_char,
    start_line: usize,
    end_line: usize,
    budget: usize,
    out_lines: *mut *mut usize,
    out_len: *mut usize,
) -> SpStatus {
    guard(|| {
        let out_lines = out_arg(out_lines, "out_lines")?;
        let out_len = out_arg(out_len, "out_len")?;
        *out_lines = ptr::null_mut();
        *out_len = 0;
        let content = unsafe { str_arg(content, "content")? };
        let lines: Vec<&str> = content.split('\n').collect();
        let selection = build_context(&lines, region(start_line, end_line)?, budget, &CharApproxTokenizer)
            .map_err(|e| Failure::new(SpStatus::InvalidArgument, e))?;
        let selected: Box<[usize]> = selection.lines.into_iter().collect();
        *out_len = selected.len();
        *out_lines = Box::into_raw(selected) as *mut usize;
        Ok(())
    })
}

/// # Safety
/// `lines` and `len` must come from the same [`sp_build_context`] call.
#[no_mangle]
pub unsafe extern "C" fn sp_lines_free(lines: *mut usize, len: usize) {
    if !lines.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(lines, len)));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn sp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn sp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn sp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
