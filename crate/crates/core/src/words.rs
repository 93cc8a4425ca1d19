//! Word counting shared by duration estimates, narration, and TTS timing.
//!
//! A word is a whitespace-delimited token that is not made only of
//! punctuation. Han characters count one word each; the non-Han runs around
//! them count once per run.

pub fn count_words(text: &str) -> usize {
    text.split_whitespace().map(count_token).sum()
}

fn count_token(token: &str) -> usize {
    let mut count = 0;
    let mut in_run = false;
    let mut run_has_content = false;
    for ch in token.chars() {
        if is_han(ch) {
            if in_run && run_has_content {
                count += 1;
            }
            in_run = false;
            run_has_content = false;
            count += 1;
        } else {
            in_run = true;
            if ch.is_alphanumeric() {
                run_has_content = true;
            }
        }
    }
    if in_run && run_has_content {
        count += 1;
    }
    count
}

pub fn is_han(ch: char) -> bool {
    matches!(ch as u32,
        0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2EBEF
        | 0x30000..=0x3134F)
}

/// Splits prose into sentences on `.`, `!`, `?` and their CJK forms. The
/// terminator stays with its sentence; trailing text without one is kept.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, ch) in text.char_indices() {
        if matches!(ch, '.' | '!' | '?' | '。' | '！' | '？') {
            let end = i + ch.len_utf8();
            let s = text[start..end].trim();
            if count_words(s) > 0 {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if count_words(tail) > 0 {
        out.push(tail);
    }
    out
}
