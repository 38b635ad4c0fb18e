//! Shared text primitives: the canonical tokenizer, sentence segmentation and
//! offset-preserving normalization used for span matching.
//!
//! Every module that counts, compares or scores words goes through
//! [`tokenize`], so word counts, BM25 postings, edit distances and metrics all
//! agree on what a token is.

use std::ops::Range;

use unicode_normalization::char::canonical_combining_class;
use unicode_normalization::UnicodeNormalization;

/// Canonical tokenizer.
///
/// NFC-normalize, lowercase, split on whitespace, then strip leading and
/// trailing punctuation from each token. Intra-word hyphens and apostrophes
/// survive (`"driver's"`, `"all-wheel"`). Tokens that are pure punctuation are
/// dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized: String = text.nfc().collect::<String>().to_lowercase();
    normalized
        .split_whitespace()
        .filter_map(|raw| {
            let trimmed = raw.trim_matches(is_punctuation);
            (!trimmed.is_empty()).then(|| trimmed.to_string())
        })
        .collect()
}

/// Number of canonical tokens in `text`.
pub fn word_count(text: &str) -> usize {
    tokenize(text).len()
}

pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'..='\u{201F}'
                | '\u{2010}'..='\u{2015}'
                | '\u{2026}'
                | '\u{00AB}'
                | '\u{00BB}'
                | '\u{00BF}'
                | '\u{00A1}'
                | '\u{00B7}'
                | '\u{2039}'
                | '\u{203A}'
        )
}

/// Byte ranges of the sentences in `text`, in order, each trimmed of
/// surrounding whitespace. Empty sentences are omitted.
///
/// A boundary follows `.`, `?` or `!` when the next characters are whitespace
/// and then an uppercase letter; every newline is also a boundary.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = 0usize;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c == '\n' {
            push_trimmed(text, start..pos, &mut spans);
            start = pos + c.len_utf8();
        } else if matches!(c, '.' | '?' | '!') {
            let mut j = i + 1;
            let mut saw_space = false;
            while j < chars.len() && chars[j].1.is_whitespace() && chars[j].1 != '\n' {
                saw_space = true;
                j += 1;
            }
            if saw_space && j < chars.len() && chars[j].1.is_uppercase() {
                let end = pos + c.len_utf8();
                push_trimmed(text, start..end, &mut spans);
                start = end;
            }
        }
        i += 1;
    }
    push_trimmed(text, start..text.len(), &mut spans);
    spans
}

fn push_trimmed(text: &str, range: Range<usize>, out: &mut Vec<Range<usize>>) {
    let slice = &text[range.clone()];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    if lead + trail < slice.len() {
        out.push(range.start + lead..range.end - trail);
    }
}

/// Text prepared for tolerant substring search, remembering where every
/// normalized character came from in the original.
///
/// Normalization: NFC per starter cluster, lowercase, collapse whitespace runs
/// to one space, trim.
#[derive(Debug, Clone)]
pub struct MatchText {
    pub normalized: String,
    /// For each byte of `normalized`, the original byte range it maps to.
    origin: Vec<Range<usize>>,
}

impl MatchText {
    pub fn new(original: &str) -> Self {
        let mut normalized = String::new();
        let mut origin: Vec<Range<usize>> = Vec::new();
        let mut pending_space: Option<Range<usize>> = None;

        for cluster in starter_clusters(original) {
            let piece = &original[cluster.clone()];
            if piece.chars().all(char::is_whitespace) {
                if !normalized.is_empty() {
                    pending_space.get_or_insert(cluster.clone());
                }
                continue;
            }
            if let Some(space) = pending_space.take() {
                normalized.push(' ');
                origin.push(space);
            }
            let folded: String = piece.nfc().collect::<String>().to_lowercase();
            for _ in 0..folded.len() {
                origin.push(cluster.clone());
            }
            normalized.push_str(&folded);
        }
        Self { normalized, origin }
    }

    /// Original byte range covered by `normalized[range]`.
    pub fn original_range(&self, range: Range<usize>) -> Range<usize> {
        if range.is_empty() {
            let at = self.origin.get(range.start).map_or(0, |r| r.start);
            return at..at;
        }
        self.origin[range.start].start..self.origin[range.end - 1].end
    }

    /// First occurrence of `needle` (already normalized) as an original
    /// byte range.
    pub fn find(&self, needle: &MatchText) -> Option<Range<usize>> {
        if needle.normalized.is_empty() {
            return None;
        }
        self.normalized
            .find(&needle.normalized)
            .map(|start| self.original_range(start..start + needle.normalized.len()))
    }
}

/// Splits text into clusters of one starter followed by its combining marks.
fn starter_clusters(text: &str) -> impl Iterator<Item = Range<usize>> + '_ {
    let mut iter = text.char_indices().peekable();
    std::iter::from_fn(move || {
        let (start, c) = iter.next()?;
        let mut end = start + c.len_utf8();
        while let Some(&(pos, next)) = iter.peek() {
            if canonical_combining_class(next) == 0 {
                break;
            }
            end = pos + next.len_utf8();
            iter.next();
        }
        Some(start..end)
    })
}

/// Character (code point) offset of byte offset `byte` in `text`.
pub fn char_offset(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

/// Byte offset of character offset `chars` in `text`, if in bounds.
pub fn byte_offset(text: &str, chars: usize) -> Option<usize> {
    if chars == 0 {
        return Some(0);
    }
    match text.char_indices().nth(chars) {
        Some((b, _)) => Some(b),
        None if text.chars().count() == chars => Some(text.len()),
        None => None,
    }
}

/// Slices `text` by character offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    let s = byte_offset(text, start)?;
    let e = byte_offset(text, end)?;
    (s <= e).then(|| &text[s..e])
}
