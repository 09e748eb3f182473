//! Small character- and line-addressing helpers shared across modules.
//!
//! Lines are always the pieces of `text.split('\n')`, so a trailing newline
//! yields a final empty line and joining with `\n` reproduces the input.

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Byte offset of the `chars`-th character, clamped to `text.len()`.
pub fn char_to_byte(text: &str, chars: usize) -> usize {
    text.char_indices().nth(chars).map_or(text.len(), |(b, _)| b)
}

pub fn split_lines(text: &str) -> Vec<&str> {
    text.split('\n').collect()
}

/// Index of the line containing character position `offset`.
pub fn line_of_offset(text: &str, offset: usize) -> usize {
    text.chars().take(offset).filter(|&c| c == '\n').count()
}

pub fn count_newlines(text: &str) -> usize {
    text.bytes().filter(|&b| b == b'\n').count()
}

/// Character offsets `[start, end)` of each line's content, excluding the
/// terminating newline.
pub fn line_char_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut pos = 0;
    for c in text.chars() {
        if c == '\n' {
            spans.push((start, pos));
            start = pos + 1;
        }
        pos += 1;
    }
    spans.push((start, pos));
    spans
}

/// Text of lines `start..=end` joined with `\n`.
pub fn region_text(text: &str, start: usize, end: usize) -> String {
    text.split('\n')
        .skip(start)
        .take(end + 1 - start)
        .collect::<Vec<_>>()
        .join("\n")
}
