//! Shared helpers for the line-delimited JSON files (corpus manifests,
//! graph files, reports). Every file opens with a header record.

use serde::Serialize;

/// Serialize one record followed by `\n`.
pub(crate) fn line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("record types always serialize");
    s.push('\n');
    s
}

/// Non-blank lines with 1-based line numbers.
pub(crate) fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}
