//! Word-list sentiment scorer.
//!
//! Text is split into lowercase alphabetic tokens (apostrophes dropped).
//! With `P` positive, `N` negative and `T` total tokens the scores are
//! `p_pos = P/T`, `p_neg = N/T`, `p_neu = 1 − p_pos − p_neg`; empty text is
//! fully neutral. Sentiment is `p_pos − p_neg`.

use serde::{Deserialize, Serialize};

/// Words scored as positive.
pub const POSITIVE: &[&str] = &[
    "amazing", "awesome", "beautiful", "best", "blessed", "bright", "calm", "celebrate", "cheerful", "delighted",
    "enjoy", "excellent", "excited", "fantastic", "fun", "glad", "good", "grateful", "great", "happy", "hope",
    "hopeful", "joy", "kind", "laugh", "love", "lovely", "lucky", "nice", "peaceful", "perfect", "pleased", "proud",
    "relaxed", "smile", "sunny", "thankful", "thrilled", "wonderful", "yay",
];

/// Words scored as negative.
pub const NEGATIVE: &[&str] = &[
    "afraid", "alone", "angry", "annoyed", "anxious", "awful", "bad", "bitter", "broken", "cry", "depressed",
    "depressing", "devastated", "disappointed", "dread", "exhausted", "fail", "furious", "gloomy", "hate", "hopeless",
    "horrible", "hurt", "lonely", "lost", "miserable", "nightmare", "pain", "sad", "scared", "sick", "stress",
    "stressed", "terrible", "tired", "ugly", "unbearable", "upset", "worried", "worst",
];

/// Words in neither list, used to pad generated text.
pub const FILLER: &[&str] = &[
    "today", "the", "a", "and", "to", "of", "in", "my", "with", "just", "was", "went", "home", "work", "morning",
    "evening", "coffee", "street", "train", "city", "week", "friends", "people", "news", "feed", "post", "after",
    "around", "again", "still", "some", "really", "think", "about", "things", "time", "day", "out", "for", "on",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentTriple {
    pub p_pos: f64,
    pub p_neg: f64,
    pub p_neu: f64,
}

impl SentimentTriple {
    pub const NEUTRAL: SentimentTriple = SentimentTriple { p_pos: 0.0, p_neg: 0.0, p_neu: 1.0 };

    pub fn sentiment(&self) -> f64 {
        self.p_pos - self.p_neg
    }

    pub fn is_valid(&self) -> bool {
        let parts = [self.p_pos, self.p_neg, self.p_neu];
        parts.iter().all(|p| (0.0..=1.0).contains(p)) && (parts.iter().sum::<f64>() - 1.0).abs() <= 1e-9
    }
}

pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphabetic() || c == '\''))
        .map(|t| t.replace('\'', "").to_lowercase())
        .filter(|t| !t.is_empty())
}

pub fn score_text(text: &str) -> SentimentTriple {
    let (mut pos, mut neg, mut total) = (0usize, 0usize, 0usize);
    for t in tokens(text) {
        total += 1;
        if POSITIVE.binary_search(&t.as_str()).is_ok() {
            pos += 1;
        } else if NEGATIVE.binary_search(&t.as_str()).is_ok() {
            neg += 1;
        }
    }
    if total == 0 {
        return SentimentTriple::NEUTRAL;
    }
    let t = total as f64;
    let (p_pos, p_neg) = (pos as f64 / t, neg as f64 / t);
    SentimentTriple { p_pos, p_neg, p_neu: (1.0 - p_pos - p_neg).max(0.0) }
}
