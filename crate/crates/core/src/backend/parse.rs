//! Label parsing for free-text completions.
//!
//! The first label found wins. A completion is read from its start, or from
//! after the last `Answer:` marker when one is present (reasoning mode asks
//! for a final `Answer: <label>` line). The label may be wrapped or followed
//! by punctuation: `A`, `A.`, `(A)`, `[a]`, `A:`, `**B**`, `Option C`.

use crate::testbed::OPTION_COUNT;

const ANSWER_MARKER: &str = "answer";

fn strip_answer_prefix(text: &str) -> &str {
    let lower = text.to_ascii_lowercase();
    let mut cut = None;
    let mut from = 0;
    while let Some(i) = lower[from..].find(ANSWER_MARKER) {
        let at = from + i + ANSWER_MARKER.len();
        let rest = lower[at..].trim_start_matches(['*', ' ']);
        if rest.starts_with(':') {
            let consumed = lower.len() - rest.len() + 1;
            cut = Some(consumed);
        }
        from = at;
    }
    match cut {
        Some(c) => &text[c..],
        None => text,
    }
}

/// Presented position of the label a completion starts with.
pub fn parse_label(text: &str, labels: &[String; OPTION_COUNT]) -> Option<usize> {
    let mut s = strip_answer_prefix(text).trim_start();
    s = s.trim_start_matches(['(', '[', '*', '"', '\'', '`', ' ', '‘', '“']);
    if let Some(rest) = s.get(..7).filter(|p| p.eq_ignore_ascii_case("option ")).map(|_| &s[7..]) {
        s = rest.trim_start_matches(['(', '[', ' ']);
    }
    let token_len = s.chars().take_while(|c| c.is_ascii_alphanumeric()).count();
    if token_len == 0 {
        return None;
    }
    let token = &s[..token_len];
    labels.iter().position(|l| l.eq_ignore_ascii_case(token))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbed::LabelScheme;

    fn labels(s: LabelScheme) -> [String; 5] {
        s.labels().map(str::to_owned)
    }

    #[test]
    fn accepted_forms() {
        let l = labels(LabelScheme::Letters);
        assert_eq!(parse_label("A. I completely agree.", &l), Some(0));
        assert_eq!(parse_label("(d)", &l), Some(3));
        assert_eq!(parse_label("  B:", &l), Some(1));
        assert_eq!(parse_label("**C**", &l), Some(2));
        assert_eq!(parse_label("E", &l), Some(4));
        assert_eq!(parse_label("Option B because...", &l), Some(1));
        assert_eq!(parse_label("[c] neutral", &l), Some(2));
    }

    #[test]
    fn answer_marker_takes_last_occurrence() {
        let l = labels(LabelScheme::Letters);
        let text = "The answer: is unclear. Weighing A against E...\nAnswer: E";
        assert_eq!(parse_label(text, &l), Some(4));
        assert_eq!(parse_label("Final **Answer**: (b)", &l), Some(1));
    }

    #[test]
    fn multibyte_text_near_prefix() {
        let l = labels(LabelScheme::Letters);
        assert_eq!(parse_label("I’d say A", &l), None);
        assert_eq!(parse_label("Opti’on", &l), None);
        assert_eq!(parse_label("Answer: ‘B’", &l), Some(1));
        assert_eq!(parse_label("Ответ. Answer: C", &l), Some(2));
    }

    proptest::proptest! {
        #[test]
        fn never_panics(text in "\\PC{0,40}") {
            let _ = parse_label(&text, &labels(LabelScheme::Roman));
        }
    }

    #[test]
    fn rejects_unlabeled_text() {
        let l = labels(LabelScheme::Letters);
        assert_eq!(parse_label("I would rather not say.", &l), None);
        assert_eq!(parse_label("", &l), None);
        assert_eq!(parse_label("Absolutely", &l), None);
        assert_eq!(parse_label("F.", &l), None);
    }

    #[test]
    fn roman_and_digit_labels() {
        let r = labels(LabelScheme::Roman);
        assert_eq!(parse_label("IV. mostly disagree", &r), Some(3));
        assert_eq!(parse_label("(ii)", &r), Some(1));
        assert_eq!(parse_label("VI", &r), None);
        let d = labels(LabelScheme::Digits);
        assert_eq!(parse_label("3) neutral", &d), Some(2));
        assert_eq!(parse_label("35", &d), None);
    }
}
