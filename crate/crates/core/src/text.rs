//! Unicode helpers. All offsets handed out by this crate count extended
//! grapheme clusters of NFC-normalized text, so Thai combining marks are
//! never split from their base character.

use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

pub fn nfc(s: &str) -> String {
    s.nfc().collect()
}

pub fn graphemes(s: &str) -> Vec<&str> {
    s.graphemes(true).collect()
}

pub fn grapheme_len(s: &str) -> usize {
    s.graphemes(true).count()
}

/// Whether a grapheme is part of a Latin-script (or digit) word. Thai and
/// other scripts without inter-word spacing return false, which disables
/// word-boundary checks next to them.
pub fn is_latin_word_grapheme(g: &str) -> bool {
    g.chars()
        .next()
        .map(|c| (c.is_alphanumeric() || c == '_') && !is_thai(c) && (c.is_ascii() || is_latin(c)))
        .unwrap_or(false)
}

pub fn is_thai(c: char) -> bool {
    ('\u{0E00}'..='\u{0E7F}').contains(&c)
}

fn is_latin(c: char) -> bool {
    matches!(c, '\u{00C0}'..='\u{024F}' | '\u{1E00}'..='\u{1EFF}')
}

/// Uppercases the first character when it is cased Latin; leaves Thai and
/// everything else untouched.
pub fn capitalize_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_lowercase() && !is_thai(c) => c.to_uppercase().chain(chars).collect(),
        _ => s.to_string(),
    }
}

pub fn lowercase_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_uppercase() => c.to_lowercase().chain(chars).collect(),
        _ => s.to_string(),
    }
}

pub fn starts_uppercase(s: &str) -> bool {
    s.chars().next().is_some_and(char::is_uppercase)
}
