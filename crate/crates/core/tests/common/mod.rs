//! Oracles and generators shared by the integration tests. Everything here
//! is written against the documented behavior, not against the library
//! internals.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use smartpaste::journal::{EditDelta, EditJourney, FileSnapshot, JournalEvent, Provenance};
use smartpaste::miner::{Label, PasteFixExample, PasteRegion};

pub const ALPHABET: &[char] = &['a', 'b', 'c', ' ', '\n', 'é', '😀', '('];

pub fn random_text<R: Rng>(rng: &mut R, max_len: usize) -> String {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

pub fn snapshot(id: &str, ts: u64, content: &str) -> JournalEvent {
    JournalEvent::Snapshot(FileSnapshot {
        journey_id: id.into(),
        file_path: format!("src/{id}.py"),
        language: "python".into(),
        timestamp: ts,
        content: content.into(),
        provenance: Provenance::Internal,
    })
}

pub fn delta(id: &str, ts: u64, at: usize, deleted: usize, inserted: &str) -> JournalEvent {
    JournalEvent::Delta(EditDelta::replace(id, ts, at, deleted, inserted))
}

/// Splices by rebuilding the string character by character.
pub fn splice_oracle(content: &str, start: usize, deleted: usize, inserted: &str) -> String {
    let chars: Vec<char> = content.chars().collect();
    let mut out = String::new();
    for c in &chars[..start] {
        out.push(*c);
    }
    out += inserted;
    for c in &chars[start + deleted..] {
        out.push(*c);
    }
    out
}

/// A random valid (start, deleted, inserted) edit of `content`, never a no-op.
pub fn random_edit<R: Rng>(rng: &mut R, content: &str, max_insert: usize) -> (usize, usize, String) {
    let len = content.chars().count();
    let start = rng.gen_range(0..=len);
    let deleted = rng.gen_range(0..=(len - start).min(6));
    let mut inserted = random_text(rng, max_insert);
    if deleted == 0 && inserted.is_empty() {
        inserted.push('x');
    }
    (start, deleted, inserted)
}

/// A journey plus the true content after each event.
pub struct GeneratedJourney {
    pub journey: EditJourney,
    pub truth: Vec<String>,
}

pub fn generate_journey<R: Rng>(rng: &mut R, id: &str, events: usize) -> GeneratedJourney {
    let mut content = random_text(rng, 30);
    let mut list = vec![snapshot(id, 0, &content)];
    let mut truth = vec![content.clone()];
    for step in 1..events {
        // Pairs of events share a timestamp so stable ordering matters.
        let ts = step as u64 / 2;
        if rng.gen_bool(0.1) {
            list.push(snapshot(id, ts, &content));
        } else {
            let (start, deleted, inserted) = random_edit(rng, &content, 8);
            content = splice_oracle(&content, start, deleted, &inserted);
            list.push(delta(id, ts, start, deleted, &inserted));
        }
        truth.push(content.clone());
    }
    GeneratedJourney {
        journey: EditJourney::from_events(id, list),
        truth,
    }
}

/// Inserts `count` corrupted events (out-of-range delta, no-op delta or
/// disagreeing snapshot) into a generated journey. Returns the corrupted
/// journey; each insertion is one expected violation.
pub fn inject_corruptions<R: Rng>(rng: &mut R, generated: &GeneratedJourney, count: usize) -> EditJourney {
    let original = &generated.journey.events;
    let mut positions: Vec<usize> = (0..count).map(|_| rng.gen_range(1..=original.len())).collect();
    positions.sort_unstable_by(|a, b| b.cmp(a));
    let mut events = original.clone();
    let id = generated.journey.journey_id.as_str();
    for p in positions {
        let ts = original[p - 1].timestamp();
        let before = &generated.truth[p - 1];
        let len = before.chars().count();
        let bad = match rng.gen_range(0..3) {
            0 => delta(id, ts, len + 1 + rng.gen_range(0..5), 0, "x"),
            1 => delta(id, ts, rng.gen_range(0..=len), 0, ""),
            _ => snapshot(id, ts, &format!("{before}#")),
        };
        events.insert(p, bad);
    }
    EditJourney::from_events(id, events)
}

/// Paste-region tracking by tagging every line and re-splicing naively.
pub struct TaggedFile {
    pub lines: Vec<(String, bool)>,
}

impl TaggedFile {
    pub fn new(content: &str, region: PasteRegion) -> Self {
        TaggedFile {
            lines: content
                .split('\n')
                .enumerate()
                .map(|(i, l)| (l.to_owned(), region.contains(i)))
                .collect(),
        }
    }

    pub fn text(&self) -> String {
        self.lines
            .iter()
            .map(|(l, _)| l.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn region(&self) -> Option<PasteRegion> {
        let tagged: Vec<usize> = (0..self.lines.len()).filter(|&i| self.lines[i].1).collect();
        Some(PasteRegion {
            start_line: *tagged.first()?,
            end_line: *tagged.last()?,
        })
    }

    /// (line, column) of a character position.
    fn locate(&self, pos: usize) -> (usize, usize) {
        let mut remaining = pos;
        for (i, (l, _)) in self.lines.iter().enumerate() {
            let n = l.chars().count();
            if remaining <= n {
                return (i, remaining);
            }
            remaining -= n + 1;
        }
        unreachable!("position beyond end")
    }

    /// Applies an edit. Returns false when it deletes every tagged
    /// character without inserting anything.
    pub fn apply(&mut self, start: usize, deleted: usize, inserted: &str) -> bool {
        let (first, col_a) = self.locate(start);
        let (last, col_b) = self.locate(start + deleted);
        let region = self.region().unwrap();
        let region_from = self.offset_of(region.start_line, 0);
        let region_to = self.offset_of(region.end_line, self.lines[region.end_line].0.chars().count());
        if deleted > 0 && inserted.is_empty() && start <= region_from && start + deleted >= region_to {
            return false;
        }
        let tagged = self.lines[first..=last].iter().any(|(_, t)| *t);
        let head: String = self.lines[first].0.chars().take(col_a).collect();
        let tail: String = self.lines[last].0.chars().skip(col_b).collect();
        let merged = format!("{head}{inserted}{tail}");
        let replacement: Vec<(String, bool)> = merged.split('\n').map(|l| (l.to_owned(), tagged)).collect();
        self.lines.splice(first..=last, replacement);
        true
    }

    fn offset_of(&self, line: usize, col: usize) -> usize {
        self.lines[..line]
            .iter()
            .map(|(l, _)| l.chars().count() + 1)
            .sum::<usize>()
            + col
    }
}

/// Greedy context selection, simulated step by step from the pseudocode:
/// seed with line 0 and the region, give up if that exceeds the budget, then
/// repeatedly try the header, pre-paste and post-paste pointers in that order,
/// adding at most one line per round.
pub fn context_oracle(costs: &[usize], start: usize, end: usize, budget: usize) -> BTreeSet<usize> {
    let tokens = |c: &HashSet<usize>| c.iter().map(|&i| costs[i]).sum::<usize>();
    let mut c: HashSet<usize> = HashSet::new();
    c.insert(0);
    for i in start..=end {
        c.insert(i);
    }
    if tokens(&c) > budget {
        return BTreeSet::new();
    }
    let n = costs.len() as i64;
    let (mut ph, mut pp, mut ps) = (1i64, start as i64 - 1, end as i64 + 1);
    let fits = |c: &HashSet<usize>, p: i64| {
        if p < 0 || p >= n || c.contains(&(p as usize)) {
            return false;
        }
        let mut with = c.clone();
        with.insert(p as usize);
        tokens(&with) <= budget
    };
    loop {
        let before = c.len();
        if fits(&c, ph) {
            c.insert(ph as usize);
            ph += 1;
        } else if fits(&c, pp) {
            c.insert(pp as usize);
            pp -= 1;
        } else if fits(&c, ps) {
            c.insert(ps as usize);
            ps += 1;
        }
        if c.len() == before {
            break;
        }
    }
    c.into_iter().collect()
}

/// Full quadratic LCS table over characters.
pub fn lcs_table(a: &[char], b: &[char]) -> Vec<Vec<usize>> {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t
}

pub fn lcs_oracle(a: &str, b: &str) -> usize {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    lcs_table(&a, &b)[a.len()][b.len()]
}

/// Characters of `b` left unmatched by the alignment obtained by walking the
/// table back from the end: a match is taken diagonally, otherwise the walk
/// drops a character of `a` when that keeps the optimum and a character of
/// `b` otherwise.
pub fn unmatched_after_chars(a: &str, b: &str) -> Vec<char> {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    let t = lcs_table(&a, &b);
    let (mut i, mut j) = (a.len(), b.len());
    let mut unmatched = Vec::new();
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && a[i - 1] == b[j - 1] {
            i -= 1;
            j -= 1;
        } else if i > 0 && (j == 0 || t[i - 1][j] >= t[i][j - 1]) {
            i -= 1;
        } else {
            unmatched.push(b[j - 1]);
            j -= 1;
        }
    }
    unmatched.reverse();
    unmatched
}

pub fn survival_oracle(before: &str, after: &str, later: &str) -> f64 {
    let added: String = unmatched_after_chars(before, after).into_iter().collect();
    if added.is_empty() {
        return 1.0;
    }
    lcs_oracle(&added, later) as f64 / added.chars().count() as f64
}

/// Every n-gram as an owned string, duplicates kept.
fn ngrams(text: &[char], n: usize) -> Vec<String> {
    if text.len() < n {
        return Vec::new();
    }
    (0..=text.len() - n).map(|i| text[i..i + n].iter().collect()).collect()
}

/// Multiset intersection size by removing matched grams one at a time.
fn overlap(hyp: &[String], reference: &[String]) -> usize {
    let mut pool: Vec<&String> = reference.iter().collect();
    let mut hits = 0;
    for g in hyp {
        if let Some(pos) = pool.iter().position(|r| *r == g) {
            pool.swap_remove(pos);
            hits += 1;
        }
    }
    hits
}

/// Character n-gram F-beta (n = 1..=6, beta = 2) on a 0..100 scale.
pub fn chrf_oracle(hyp: &str, reference: &str) -> f64 {
    let (h, r): (Vec<char>, Vec<char>) = (hyp.chars().collect(), reference.chars().collect());
    if h.is_empty() && r.is_empty() {
        return 100.0;
    }
    if h.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut precisions = Vec::new();
    let mut recalls = Vec::new();
    for n in 1..=6 {
        let (hg, rg) = (ngrams(&h, n), ngrams(&r, n));
        if hg.is_empty() && rg.is_empty() {
            continue;
        }
        let m = overlap(&hg, &rg) as f64;
        precisions.push(if hg.is_empty() { 0.0 } else { m / hg.len() as f64 });
        recalls.push(if rg.is_empty() { 0.0 } else { m / rg.len() as f64 });
    }
    let p = precisions.iter().sum::<f64>() / precisions.len() as f64;
    let rc = recalls.iter().sum::<f64>() / recalls.len() as f64;
    if 4.0 * p + rc == 0.0 {
        return 0.0;
    }
    100.0 * 5.0 * p * rc / (4.0 * p + rc)
}

/// A mined-looking example whose region is `pasted` spliced after a header.
pub fn example(
    id: &str,
    language: &str,
    pasted: &[&str],
    fixed: &[&str],
    created_at: u64,
    provenance: Provenance,
) -> PasteFixExample {
    let mut lines = vec!["import os".to_owned()];
    lines.extend(pasted.iter().map(|s| s.to_string()));
    lines.push("print(0)".to_owned());
    let file_after_paste = lines.join("\n");
    PasteFixExample {
        journey_id: id.into(),
        language: language.into(),
        file_path: format!("src/{id}.{}", extension(language)),
        char_length: file_after_paste.chars().count(),
        file_after_paste,
        region: PasteRegion {
            start_line: 1,
            end_line: pasted.len(),
        },
        pasted_text: pasted.join("\n"),
        fixed_region_text: fixed.join("\n"),
        label: if pasted == fixed { Label::NoEdit } else { Label::Edit },
        created_at,
        provenance,
    }
}

fn extension(language: &str) -> &str {
    match language {
        "python" => "py",
        "java" => "java",
        "rust" => "rs",
        _ => "txt",
    }
}

/// Count of each value.
pub fn tally<T: std::hash::Hash + Eq + Clone>(items: impl IntoIterator<Item = T>) -> HashMap<T, usize> {
    let mut m = HashMap::new();
    for i in items {
        *m.entry(i).or_insert(0) += 1;
    }
    m
}

/// Character offset of the start of `line` in `text`.
pub fn line_start(text: &str, line: usize) -> usize {
    if line == 0 {
        return 0;
    }
    text.chars()
        .enumerate()
        .filter(|(_, c)| *c == '\n')
        .nth(line - 1)
        .map(|(i, _)| i + 1)
        .expect("line exists")
}

pub fn line_len(text: &str, line: usize) -> usize {
    text.split('\n').nth(line).unwrap().chars().count()
}

/// A journey with a single paste whose ground-truth label is `edit`.
///
/// Edit journeys get one to three small in-region edits; both kinds may get
/// import insertions at the top of the file, which must not end tracking.
/// Most journeys end with an unrelated edit at the bottom of the file
/// followed by in-region edits that must be ignored.
pub fn planted_journey<R: Rng>(rng: &mut R, id: &str, edit: bool) -> EditJourney {
    let fillers = rng.gen_range(2..8);
    let mut content = String::from("import os\n");
    for k in 0..fillers {
        content += &format!("v{k} = {k}\n");
    }
    let mut events = vec![snapshot(id, 0, &content)];
    let mut ts = 0;
    let mut push = |events: &mut Vec<JournalEvent>, content: &mut String, at: usize, deleted: usize, text: &str| {
        ts += 1000;
        events.push(delta(id, ts, at, deleted, text));
        *content = splice_oracle(content, at, deleted, text);
    };

    let paste_line = rng.gen_range(1..=fillers);
    let k = rng.gen_range(1..=5);
    let pasted: String = (0..k)
        .map(|i| format!("call_{}(arg{i})\n", rng.gen_range(0..100)))
        .collect();
    let at = line_start(&content, paste_line);
    push(&mut events, &mut content, at, 0, &pasted);
    let mut region_start = paste_line;

    let fixes = if edit { rng.gen_range(1..=3) } else { 0 };
    let imports = rng.gen_range(0..=2);
    let mut plan: Vec<bool> = std::iter::repeat_n(true, fixes)
        .chain(std::iter::repeat_n(false, imports))
        .collect();
    plan.shuffle(rng);
    for is_fix in plan {
        if is_fix {
            let line = region_start + rng.gen_range(0..k);
            let col = rng.gen_range(0..=line_len(&content, line));
            let at = line_start(&content, line) + col;
            push(&mut events, &mut content, at, 0, "_e");
        } else {
            push(&mut events, &mut content, 0, 0, "import a\n");
            region_start += 1;
        }
    }

    if rng.gen_bool(0.8) {
        let end = content.chars().count();
        push(&mut events, &mut content, end, 0, "z");
        for _ in 0..rng.gen_range(0..3) {
            let at = line_start(&content, region_start + rng.gen_range(0..k));
            push(&mut events, &mut content, at, 0, "#");
        }
    }
    EditJourney::from_events(id, events)
}

/// A random (file, region, budget) instance with per-line costs.
pub struct ContextInstance {
    pub lines: Vec<String>,
    pub costs: Vec<usize>,
    pub region: PasteRegion,
    pub budget: usize,
}

pub fn context_instance<R: Rng>(rng: &mut R) -> ContextInstance {
    let n = rng.gen_range(1..60);
    let lines: Vec<String> = (0..n)
        .map(|i| format!("{i}:{}", "x".repeat(rng.gen_range(0..12))))
        .collect();
    let costs: Vec<usize> = (0..n).map(|_| rng.gen_range(0..10)).collect();
    let start = rng.gen_range(0..n);
    let end = rng.gen_range(start..n.min(start + 6));
    let total: usize = costs.iter().sum();
    let budget = rng.gen_range(0..=total + 5);
    ContextInstance {
        lines,
        costs,
        region: PasteRegion::new(start, end).unwrap(),
        budget,
    }
}

/// Renders selected lines with one marker per maximal omitted run.
pub fn render_oracle(lines: &[String], selected: &BTreeSet<usize>, marker: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        if selected.contains(&i) {
            out.push(lines[i].clone());
            i += 1;
        } else {
            out.push(marker.to_owned());
            while i < lines.len() && !selected.contains(&i) {
                i += 1;
            }
        }
    }
    out
}

const PATCH_ALPHABET: &[char] = &['a', 'b', ' ', '@', '-', '+', 'é', '\t', '\r', '⋮'];

pub fn random_line<R: Rng>(rng: &mut R, max_len: usize) -> String {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| *PATCH_ALPHABET.choose(rng).unwrap()).collect()
}

/// Random well-formed hunks: sorted, non-overlapping, never empty.
pub fn random_hunks<R: Rng>(rng: &mut R) -> Vec<smartpaste::codec::Hunk> {
    let mut hunks = Vec::new();
    let mut next = 0usize;
    for _ in 0..rng.gen_range(0..5) {
        let start = next + rng.gen_range(0..4);
        let removed: Vec<String> = (0..rng.gen_range(0..4)).map(|_| random_line(rng, 6)).collect();
        let mut added: Vec<String> = (0..rng.gen_range(0..4)).map(|_| random_line(rng, 6)).collect();
        if removed.is_empty() && added.is_empty() {
            added.push(random_line(rng, 6));
        }
        next = start + removed.len();
        hunks.push(smartpaste::codec::Hunk::new(start, removed, added));
    }
    hunks
}

/// A pair of short line lists over a tiny vocabulary, so they share lines.
pub fn random_line_pair<R: Rng>(rng: &mut R) -> (Vec<String>, Vec<String>) {
    let vocab = ["a", "b", "c", "", "d e"];
    let list = |rng: &mut R| -> Vec<String> {
        (0..rng.gen_range(0..8))
            .map(|_| vocab.choose(rng).unwrap().to_string())
            .collect()
    };
    let before = list(rng);
    let after = list(rng);
    (before, after)
}

pub const DAY_MS: u64 = 86_400_000;

/// Sets the file to exactly `chars` characters, keeping the region intact.
pub fn pad_to(e: &mut PasteFixExample, chars: usize) {
    let current = e.file_after_paste.chars().count();
    e.file_after_paste += &"#".repeat(chars - current);
    e.char_length = chars;
}

/// One violation of each curation rule plus compliant records, some sitting
/// exactly on a bound. Returns the corpus and the expected reason names.
pub fn curation_corpus(now: u64) -> Vec<(PasteFixExample, Option<&'static str>)> {
    let fresh = now - DAY_MS;
    let lines21: Vec<String> = (0..21).map(|i| format!("line_{i}()")).collect();
    let lines20: Vec<String> = (0..20).map(|i| format!("line_{i}()")).collect();
    let l21: Vec<&str> = lines21.iter().map(String::as_str).collect();
    let l20: Vec<&str> = lines20.iter().map(String::as_str).collect();

    let mut too_large = example("large", "python", &["big()"], &["big()"], fresh, Provenance::Internal);
    pad_to(&mut too_large, 50_001);
    let mut at_size_bound = example(
        "size_ok",
        "python",
        &["big()"],
        &["big(1)"],
        fresh,
        Provenance::Internal,
    );
    pad_to(&mut at_size_bound, 50_000);

    vec![
        (
            example("lines21", "python", &l21, &l21, fresh, Provenance::Internal),
            Some("TooManyPasteLines"),
        ),
        (too_large, Some("TooLarge")),
        (
            example(
                "old",
                "java",
                &["a()"],
                &["b()"],
                now - 121 * DAY_MS,
                Provenance::Internal,
            ),
            Some("TooOld"),
        ),
        (
            example("third", "java", &["a()"], &["b()"], fresh, Provenance::ThirdParty),
            Some("DisallowedProvenance"),
        ),
        (
            example("lines20", "python", &l20, &l20, fresh, Provenance::Internal),
            None,
        ),
        (at_size_bound, None),
        (
            example(
                "age_ok",
                "java",
                &["a()"],
                &["b()"],
                now - 120 * DAY_MS,
                Provenance::Internal,
            ),
            None,
        ),
        (
            example("plain", "rust", &["x()"], &["y()"], now, Provenance::Internal),
            None,
        ),
        (
            example("plain2", "go", &["x()"], &["x()"], fresh, Provenance::Internal),
            None,
        ),
    ]
}

/// `count` examples spread over languages, `no_edit` of them NoEdit.
pub fn labeled_pool(count: usize, no_edit: usize, languages: &[&str]) -> Vec<PasteFixExample> {
    (0..count)
        .map(|i| {
            let lang = languages[i % languages.len()];
            let id = format!("p{i}");
            if i < no_edit {
                example(&id, lang, &["same()"], &["same()"], 0, Provenance::Internal)
            } else {
                example(&id, lang, &["old()"], &["new()"], 0, Provenance::Internal)
            }
        })
        .collect()
}
