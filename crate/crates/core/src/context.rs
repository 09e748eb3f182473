//! Greedy, token-budgeted selection of prompt context lines.
//!
//! The selection is seeded with line 0 and the paste region, then grown one
//! line per round by three pointers in strict priority order: the header
//! pointer walking down from line 1, the pre-paste pointer walking up from
//! the line above the region, and the post-paste pointer walking down from
//! the line below it. A pointer only advances when its line is added, and
//! selection stops after the first round that adds nothing.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::miner::PasteRegion;

pub const DEFAULT_TOKEN_BUDGET: usize = 4096;
pub const DEFAULT_GAP_MARKER: &str = "⋮";

/// Per-line token cost. Costs must be deterministic; the cost of a set of
/// lines is the sum of its line costs.
pub trait Tokenizer {
    fn line_cost(&self, line: &str) -> usize;
}

impl<F: Fn(&str) -> usize> Tokenizer for F {
    fn line_cost(&self, line: &str) -> usize {
        self(line)
    }
}

/// `ceil(chars / 4) + 1`, roughly a subword tokenizer plus one newline token.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharApproxTokenizer;

impl Tokenizer for CharApproxTokenizer {
    fn line_cost(&self, line: &str) -> usize {
        line.chars().count().div_ceil(4) + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSelection {
    pub lines: BTreeSet<usize>,
    pub budget: usize,
    pub region: PasteRegion,
}

impl ContextSelection {
    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn contains(&self, line: usize) -> bool {
        self.lines.contains(&line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContextError {
    #[error("paste region {region:?} is outside a file of {lines} lines")]
    RegionOutOfBounds { region: PasteRegion, lines: usize },
}

pub fn build_context<S, T>(
    lines: &[S],
    region: PasteRegion,
    budget: usize,
    tokenizer: &T,
) -> Result<ContextSelection, ContextError>
where
    S: AsRef<str>,
    T: Tokenizer + ?Sized,
{
    if !region.fits(lines.len()) {
        return Err(ContextError::RegionOutOfBounds {
            region,
            lines: lines.len(),
        });
    }
    let cost = |i: usize| tokenizer.line_cost(lines[i].as_ref());
    let mut selected = vec![false; lines.len()];
    let mut total = 0usize;
    for i in std::iter::once(0).chain(region.start_line..=region.end_line) {
        if !selected[i] {
            selected[i] = true;
            total += cost(i);
        }
    }
    if total > budget {
        return Ok(ContextSelection {
            lines: BTreeSet::new(),
            budget,
            region,
        });
    }

    let n = lines.len() as isize;
    let mut header: isize = 1;
    let mut pre: isize = region.start_line as isize - 1;
    let mut post: isize = region.end_line as isize + 1;
    // Out-of-range pointers are exhausted; an in-range pointer sits still
    // while its line is already selected or does not fit.
    let try_add = |p: isize, selected: &mut [bool], total: &mut usize| -> bool {
        if p < 0 || p >= n || selected[p as usize] {
            return false;
        }
        let c = cost(p as usize);
        if *total + c > budget {
            return false;
        }
        selected[p as usize] = true;
        *total += c;
        true
    };
    loop {
        if try_add(header, &mut selected, &mut total) {
            header += 1;
        } else if try_add(pre, &mut selected, &mut total) {
            pre -= 1;
        } else if try_add(post, &mut selected, &mut total) {
            post += 1;
        } else {
            break;
        }
    }

    Ok(ContextSelection {
        lines: selected
            .iter()
            .enumerate()
            .filter(|(_, s)| **s)
            .map(|(i, _)| i)
            .collect(),
        budget,
        region,
    })
}

/// Sum of line costs of the selection.
pub fn selection_cost<S: AsRef<str>, T: Tokenizer + ?Sized>(
    lines: &[S],
    selection: &ContextSelection,
    tokenizer: &T,
) -> usize {
    selection
        .lines
        .iter()
        .map(|&i| tokenizer.line_cost(lines[i].as_ref()))
        .sum()
}

/// Selected lines of `range` in file order, each maximal run of omitted
/// lines collapsed into one `gap_marker` line.
pub fn render_lines<'a, S: AsRef<str>>(
    lines: &'a [S],
    selection: &ContextSelection,
    range: std::ops::Range<usize>,
    gap_marker: &'a str,
) -> Vec<&'a str> {
    let mut out = Vec::new();
    let mut in_gap = false;
    for i in range {
        if selection.contains(i) {
            out.push(lines[i].as_ref());
            in_gap = false;
        } else if !in_gap {
            out.push(gap_marker);
            in_gap = true;
        }
    }
    out
}

/// Renders the whole selection as text, lines joined with `\n`.
pub fn render_context<S: AsRef<str>>(lines: &[S], selection: &ContextSelection, gap_marker: &str) -> String {
    if selection.is_empty() {
        return String::new();
    }
    render_lines(lines, selection, 0..lines.len(), gap_marker).join("\n")
}
