//! Prompt encoding and the delimiter-anchored patch format.
//!
//! A prompt is laid out line by line:
//!
//! ```text
//! paste foo.py
//! <selected lines above the paste, gaps collapsed to a marker>
//! <|paste_start|>
//! <pasted lines>
//! <|paste_end|>
//! <selected lines below the paste>
//! <|fix|>
//! ```
//!
//! The model answers with a patch whose hunk offsets are relative to the
//! first pasted line:
//!
//! ```text
//! @@ 1 @@
//! -old line
//! +new line
//! ```
//!
//! Every line ends with `\n`. An empty patch means "no edit".

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{render_lines, ContextSelection, DEFAULT_GAP_MARKER};
use crate::lcs::{lcs_alignment, Step};
use crate::miner::{PasteFixExample, PasteRegion};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecConfig {
    pub task_prefix: String,
    pub open_delimiter: String,
    pub close_delimiter: String,
    pub fix_marker: String,
    pub gap_marker: String,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            task_prefix: "paste".into(),
            open_delimiter: "<|paste_start|>".into(),
            close_delimiter: "<|paste_end|>".into(),
            fix_marker: "<|fix|>".into(),
            gap_marker: DEFAULT_GAP_MARKER.into(),
        }
    }
}

impl CodecConfig {
    fn markers(&self) -> [&str; 3] {
        [&self.open_delimiter, &self.close_delimiter, &self.fix_marker]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("line {line}: malformed hunk header")]
    MalformedHunkHeader { line: usize },
    #[error("line {line}: unknown line prefix")]
    UnknownLinePrefix { line: usize },
    #[error("line {line}: patch line outside of a hunk")]
    LineOutsideHunk { line: usize },
    #[error("line {line}: removed line after added lines")]
    MisorderedLine { line: usize },
    #[error("hunk {hunk} is empty")]
    EmptyHunk { hunk: usize },
    #[error("hunk {hunk} overlaps the previous hunk")]
    OverlappingHunks { hunk: usize },
    #[error("hunk {hunk} contains a line with an embedded newline")]
    EmbeddedNewline { hunk: usize },
    #[error("hunk {hunk} does not match the pasted lines")]
    ContextMismatch { hunk: usize },
    #[error("hunk {hunk} reaches past the pasted lines")]
    HunkOutOfRange { hunk: usize },
    #[error("pasted content contains the delimiter token {0:?}")]
    DelimiterCollision(String),
    #[error("context selection does not cover the paste region")]
    SelectionMissesRegion,
}

/// The parts of a prompt before they are laid out as text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec<'a> {
    pub task_prefix: String,
    pub pre_context: Vec<&'a str>,
    pub pasted_lines: Vec<&'a str>,
    pub post_context: Vec<&'a str>,
}

impl<'a> PromptSpec<'a> {
    pub fn new<S: AsRef<str>>(
        file_path: &str,
        lines: &'a [S],
        selection: &ContextSelection,
        config: &'a CodecConfig,
    ) -> Result<Self, CodecError> {
        let region = selection.region;
        if selection.is_empty()
            || !region.fits(lines.len())
            || !(region.start_line..=region.end_line).all(|i| selection.contains(i))
        {
            return Err(CodecError::SelectionMissesRegion);
        }
        let pasted_lines: Vec<&str> = lines[region.start_line..=region.end_line]
            .iter()
            .map(AsRef::as_ref)
            .collect();
        for line in &pasted_lines {
            if let Some(marker) = config.markers().into_iter().find(|m| line.contains(m)) {
                return Err(CodecError::DelimiterCollision(marker.to_owned()));
            }
        }
        let file_name = file_path.rsplit(['/', '\\']).next().unwrap_or(file_path);
        Ok(PromptSpec {
            task_prefix: format!("{} {}", config.task_prefix, file_name),
            pre_context: render_lines(lines, selection, 0..region.start_line, &config.gap_marker),
            pasted_lines,
            post_context: render_lines(lines, selection, region.end_line + 1..lines.len(), &config.gap_marker),
        })
    }

    pub fn render(&self, config: &CodecConfig) -> String {
        let mut out = String::new();
        let mut line = |s: &str| {
            out.push_str(s);
            out.push('\n');
        };
        line(&self.task_prefix);
        self.pre_context.iter().for_each(|l| line(l));
        line(&config.open_delimiter);
        self.pasted_lines.iter().for_each(|l| line(l));
        line(&config.close_delimiter);
        self.post_context.iter().for_each(|l| line(l));
        line(&config.fix_marker);
        out
    }
}

/// Builds the model prompt for a paste at `selection.region` of `lines`.
pub fn encode_prompt<S: AsRef<str>>(
    file_path: &str,
    lines: &[S],
    selection: &ContextSelection,
    config: &CodecConfig,
) -> Result<String, CodecError> {
    Ok(PromptSpec::new(file_path, lines, selection, config)?.render(config))
}

pub fn encode_example(
    example: &PasteFixExample,
    selection: &ContextSelection,
    config: &CodecConfig,
) -> Result<String, CodecError> {
    let lines: Vec<&str> = example.file_after_paste.split('\n').collect();
    if selection.region != example.region {
        return Err(CodecError::SelectionMissesRegion);
    }
    encode_prompt(&example.file_path, &lines, selection, config)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hunk {
    /// Offset of the first removed line, relative to the first pasted line.
    pub start: usize,
    pub removed: Vec<String>,
    pub added: Vec<String>,
}

impl Hunk {
    pub fn new<R, A>(start: usize, removed: R, added: A) -> Self
    where
        R: IntoIterator,
        R::Item: Into<String>,
        A: IntoIterator,
        A::Item: Into<String>,
    {
        Hunk {
            start,
            removed: removed.into_iter().map(Into::into).collect(),
            added: added.into_iter().map(Into::into).collect(),
        }
    }
}

/// Ordered, non-overlapping line hunks. No hunks means no edit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditPatch {
    hunks: Vec<Hunk>,
}

impl EditPatch {
    pub fn no_edit() -> Self {
        EditPatch::default()
    }

    pub fn new(hunks: Vec<Hunk>) -> Result<Self, CodecError> {
        let mut next_free = 0usize;
        for (i, h) in hunks.iter().enumerate() {
            if h.removed.is_empty() && h.added.is_empty() {
                return Err(CodecError::EmptyHunk { hunk: i });
            }
            if h.removed.iter().chain(&h.added).any(|l| l.contains('\n')) {
                return Err(CodecError::EmbeddedNewline { hunk: i });
            }
            if h.start < next_free {
                return Err(CodecError::OverlappingHunks { hunk: i });
            }
            next_free = h.start + h.removed.len();
        }
        Ok(EditPatch { hunks })
    }

    pub fn hunks(&self) -> &[Hunk] {
        &self.hunks
    }

    pub fn is_no_edit(&self) -> bool {
        self.hunks.is_empty()
    }

    /// Wire form; empty for no edit.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for h in &self.hunks {
            let _ = writeln!(out, "@@ {} @@", h.start);
            for l in &h.removed {
                let _ = writeln!(out, "-{l}");
            }
            for l in &h.added {
                let _ = writeln!(out, "+{l}");
            }
        }
        out
    }

    /// Parses the wire form. Whitespace-only input is no edit; a missing
    /// final newline and trailing blank lines are tolerated.
    pub fn parse(text: &str) -> Result<Self, CodecError> {
        if text.trim().is_empty() {
            return Ok(EditPatch::no_edit());
        }
        let mut hunks: Vec<Hunk> = Vec::new();
        let mut adding = false;
        for (n, line) in text.trim_end_matches('\n').split('\n').enumerate() {
            if let Some(rest) = line.strip_prefix("@@") {
                let start = rest
                    .strip_prefix(' ')
                    .and_then(|r| r.strip_suffix(" @@"))
                    .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                    .and_then(|d| d.parse::<usize>().ok())
                    .ok_or(CodecError::MalformedHunkHeader { line: n })?;
                hunks.push(Hunk::new(start, Vec::<String>::new(), Vec::<String>::new()));
                adding = false;
            } else if let Some(rest) = line.strip_prefix('-') {
                let hunk = hunks.last_mut().ok_or(CodecError::LineOutsideHunk { line: n })?;
                if adding {
                    return Err(CodecError::MisorderedLine { line: n });
                }
                hunk.removed.push(rest.to_owned());
            } else if let Some(rest) = line.strip_prefix('+') {
                let hunk = hunks.last_mut().ok_or(CodecError::LineOutsideHunk { line: n })?;
                adding = true;
                hunk.added.push(rest.to_owned());
            } else {
                return Err(CodecError::UnknownLinePrefix { line: n });
            }
        }
        EditPatch::new(hunks)
    }
}

/// Applies `patch` to the pasted lines, returning the fixed region lines.
pub fn apply_patch<S: AsRef<str>>(pasted_lines: &[S], patch: &EditPatch) -> Result<Vec<String>, CodecError> {
    for (i, h) in patch.hunks.iter().enumerate() {
        let end = h.start + h.removed.len();
        if end > pasted_lines.len() || h.start > pasted_lines.len() {
            return Err(CodecError::HunkOutOfRange { hunk: i });
        }
        if !pasted_lines[h.start..end]
            .iter()
            .zip(&h.removed)
            .all(|(a, b)| a.as_ref() == b)
        {
            return Err(CodecError::ContextMismatch { hunk: i });
        }
    }
    let mut out: Vec<String> = pasted_lines.iter().map(|l| l.as_ref().to_owned()).collect();
    for h in patch.hunks.iter().rev() {
        out.splice(h.start..h.start + h.removed.len(), h.added.iter().cloned());
    }
    Ok(out)
}

/// Minimal line diff of two region versions.
pub fn diff_region<S: AsRef<str>>(before: &[S], after: &[S]) -> EditPatch {
    let a: Vec<&str> = before.iter().map(AsRef::as_ref).collect();
    let b: Vec<&str> = after.iter().map(AsRef::as_ref).collect();
    let mut hunks = Vec::new();
    let mut current: Option<Hunk> = None;
    let mut consumed = 0usize;
    for step in lcs_alignment(&a, &b) {
        match step {
            Step::Keep(..) => {
                hunks.extend(current.take());
                consumed += 1;
            }
            Step::Delete(i) => {
                current
                    .get_or_insert_with(|| Hunk::new(consumed, Vec::<String>::new(), Vec::<String>::new()))
                    .removed
                    .push(a[i].to_owned());
                consumed += 1;
            }
            Step::Insert(j) => {
                current
                    .get_or_insert_with(|| Hunk::new(consumed, Vec::<String>::new(), Vec::<String>::new()))
                    .added
                    .push(b[j].to_owned());
            }
        }
    }
    hunks.extend(current);
    EditPatch { hunks }
}

/// Replaces the region lines of `file` with `region_lines`.
pub fn splice_region<S: AsRef<str>>(file: &str, region: PasteRegion, region_lines: &[S]) -> String {
    let lines: Vec<&str> = file.split('\n').collect();
    let mut out: Vec<&str> = Vec::with_capacity(lines.len() + region_lines.len());
    out.extend(&lines[..region.start_line.min(lines.len())]);
    out.extend(region_lines.iter().map(AsRef::as_ref));
    if region.end_line + 1 < lines.len() {
        out.extend(&lines[region.end_line + 1..]);
    }
    out.join("\n")
}
