//! `{placeholder}` scanning and substitution for scenario templates.

use std::collections::{BTreeMap, BTreeSet};

fn is_name_start(c: char) -> bool {
    c.is_ascii_lowercase() || c == '_'
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'
}

/// Byte spans `(start, end, name)` of every `{name}` marker in `text`.
fn markers(text: &str) -> Vec<(usize, usize, &str)> {
    let mut out = Vec::new();
    for (i, c) in text.char_indices() {
        if c != '{' {
            continue;
        }
        let rest = &text[i + 1..];
        let Some(first) = rest.chars().next() else { break };
        if !is_name_start(first) {
            continue;
        }
        let len = rest.chars().take_while(|&c| is_name_char(c)).map(char::len_utf8).sum::<usize>();
        if rest[len..].starts_with('}') {
            out.push((i, i + 1 + len + 1, &rest[..len]));
        }
    }
    out
}

/// Names of all placeholders used by a template.
pub fn placeholder_names(template: &str) -> BTreeSet<String> {
    markers(template).into_iter().map(|(_, _, n)| n.to_owned()).collect()
}

/// True if `text` still contains a `{name}` marker.
pub fn has_markers(text: &str) -> bool {
    !markers(text).is_empty()
}

/// Substitute every marker with its binding. Markers without a binding are
/// left untouched; callers validate coverage beforehand.
pub fn render(template: &str, values: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(template.len() + 128);
    let mut last = 0;
    for (start, end, name) in markers(template) {
        if let Some(v) = values.get(name) {
            out.push_str(&template[last..start]);
            out.push_str(v);
            last = end;
        }
    }
    out.push_str(&template[last..]);
    out
}
