//! Small text utilities shared by several modules.

/// Collapses whitespace runs to one space, trims, and maps typographic
/// quotes to their ASCII forms.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(match c {
            '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{2032}' => '\'',
            '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{2033}' => '"',
            other => other,
        });
    }
    out
}

/// Char index of the first difference between two strings, or `None` when
/// they are equal.
pub fn first_divergence(a: &str, b: &str) -> Option<usize> {
    let mut ai = a.chars();
    let mut bi = b.chars();
    let mut i = 0;
    loop {
        match (ai.next(), bi.next()) {
            (None, None) => return None,
            (Some(x), Some(y)) if x == y => i += 1,
            _ => return Some(i),
        }
    }
}

/// Up to `len` chars starting at char index `start`.
pub fn snippet(text: &str, start: usize, len: usize) -> String {
    text.chars().skip(start).take(len).collect()
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// The first `n` words of `text`, joined by single spaces.
pub fn first_words(text: &str, n: usize) -> String {
    text.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}
