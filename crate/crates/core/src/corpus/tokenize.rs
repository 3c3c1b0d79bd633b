//! Rule-based tokenizer: whitespace split, punctuation as separate tokens,
//! lowercased output, and `[scrubbed]` kept whole.

use std::ops::Range;

/// Placeholder written over scrubbed spans; always a single token.
pub const SCRUB_TOKEN: &str = "[scrubbed]";

/// Byte ranges of each token in `text`, in order.
pub fn token_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut offset = 0;
    for chunk in text.split_whitespace() {
        // split_whitespace yields subslices, so the offset is recoverable
        let start = chunk.as_ptr() as usize - text.as_ptr() as usize;
        debug_assert!(start >= offset);
        offset = start + chunk.len();
        chunk_spans(chunk, start, &mut spans);
    }
    spans
}

fn chunk_spans(chunk: &str, base: usize, out: &mut Vec<Range<usize>>) {
    let bytes = chunk.as_bytes();
    let mut i = 0;
    let mut word_start: Option<usize> = None;
    while i < chunk.len() {
        if bytes[i] == b'[' && starts_with_scrub(&chunk[i..]) {
            if let Some(ws) = word_start.take() {
                out.push(base + ws..base + i);
            }
            out.push(base + i..base + i + SCRUB_TOKEN.len());
            i += SCRUB_TOKEN.len();
            continue;
        }
        let ch = chunk[i..].chars().next().expect("in bounds");
        let width = ch.len_utf8();
        if ch.is_alphanumeric() {
            word_start.get_or_insert(i);
        } else {
            if let Some(ws) = word_start.take() {
                out.push(base + ws..base + i);
            }
            out.push(base + i..base + i + width);
        }
        i += width;
    }
    if let Some(ws) = word_start {
        out.push(base + ws..base + chunk.len());
    }
}

fn starts_with_scrub(s: &str) -> bool {
    s.len() >= SCRUB_TOKEN.len()
        && s.is_char_boundary(SCRUB_TOKEN.len())
        && s[..SCRUB_TOKEN.len()].eq_ignore_ascii_case(SCRUB_TOKEN)
}

/// Tokenize `text` into lowercased tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text).into_iter().map(|r| text[r].to_lowercase()).collect()
}

pub fn count_tokens(text: &str) -> usize {
    token_spans(text).len()
}

/// Prefix of `text` holding exactly its first `n` tokens (or all of it if shorter).
pub fn truncate_tokens(text: &str, n: usize) -> &str {
    if n == 0 {
        return "";
    }
    let spans = token_spans(text);
    match spans.get(n - 1) {
        Some(last) if spans.len() > n => &text[..last.end],
        _ => text,
    }
}
