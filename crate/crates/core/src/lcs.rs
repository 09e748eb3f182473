//! Longest common subsequence over arbitrary sequences.
//!
//! Used for line diffs in the patch codec and for the character metrics.

/// Length of the LCS, in `O(a.len() * b.len())` time and `O(b.len())` space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// One step of an alignment between two sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// `a[i] == b[j]`, matched.
    Keep(usize, usize),
    /// `a[i]` has no partner.
    Delete(usize),
    /// `b[j]` has no partner.
    Insert(usize),
}

/// An optimal alignment in forward order.
///
/// The walk runs backwards from the end of both sequences: equal elements
/// are always matched, and on ties an element of `a` is dropped before an
/// element of `b`.
pub fn lcs_alignment<T: PartialEq>(a: &[T], b: &[T]) -> Vec<Step> {
    let width = b.len() + 1;
    let mut table = vec![0u32; (a.len() + 1) * width];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            table[i * width + j] = if a[i - 1] == b[j - 1] {
                table[(i - 1) * width + j - 1] + 1
            } else {
                table[(i - 1) * width + j].max(table[i * width + j - 1])
            };
        }
    }
    let (mut i, mut j) = (a.len(), b.len());
    let mut steps = Vec::with_capacity(a.len() + b.len());
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && a[i - 1] == b[j - 1] {
            steps.push(Step::Keep(i - 1, j - 1));
            i -= 1;
            j -= 1;
        } else if i > 0 && (j == 0 || table[(i - 1) * width + j] >= table[i * width + j - 1]) {
            steps.push(Step::Delete(i - 1));
            i -= 1;
        } else {
            steps.push(Step::Insert(j - 1));
            j -= 1;
        }
    }
    steps.reverse();
    steps
}
