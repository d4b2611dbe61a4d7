//! Post corpus and feed construction.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ContagionError;

const BUNDLED: &str = include_str!("../../data/contagion/posts.jsonl");

/// Prompt pattern for generating a larger synthetic corpus with a capable
/// model; not used at run time.
pub const CORPUS_GENERATION_PROMPT: &str = "Write {n} distinct short social media posts, one per line, in the \
voice of ordinary users. Each post should express a clearly negative emotion (frustration, sadness, anxiety, anger \
or loneliness) about an everyday situation such as work, travel, money, health, family or the weather. Vary the \
topic, length (one to three sentences) and wording. Do not number the posts, use hashtags, or mention real people.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Valence {
    Negative,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub text: String,
    #[serde(rename = "valence")]
    pub nominal_valence: Valence,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostCorpus {
    posts: Vec<Post>,
}

impl PostCorpus {
    pub fn new(posts: Vec<Post>) -> Result<Self, ContagionError> {
        let mut seen = BTreeSet::new();
        for p in &posts {
            if !seen.insert(p.id.as_str()) {
                return Err(ContagionError::Corpus(format!("duplicate post id {}", p.id)));
            }
            if p.text.trim().is_empty() {
                return Err(ContagionError::Corpus(format!("post {} has empty text", p.id)));
            }
        }
        Ok(Self { posts })
    }

    /// JSON lines of `{id, text, valence}`; blank lines are skipped.
    pub fn from_jsonl(source: &str) -> Result<Self, ContagionError> {
        let mut posts = Vec::new();
        for (i, line) in source.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let post: Post = serde_json::from_str(line)
                .map_err(|e| ContagionError::Corpus(format!("line {}: {e}", i + 1)))?;
            posts.push(post);
        }
        Self::new(posts)
    }

    pub fn load(path: &Path) -> Result<Self, ContagionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ContagionError::Corpus(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    /// Small synthetic corpus shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_jsonl(BUNDLED).expect("bundled corpus is valid")
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn of(&self, valence: Valence) -> Vec<&Post> {
        self.posts.iter().filter(|p| p.nominal_valence == valence).collect()
    }
}

/// `negative_count` negative and `filler_count` neutral posts, drawn without
/// replacement and shuffled, all from `seed`.
pub fn build_feed(
    corpus: &PostCorpus,
    negative_count: usize,
    filler_count: usize,
    seed: u64,
) -> Result<Vec<Post>, ContagionError> {
    let (neg, neu) = (corpus.of(Valence::Negative), corpus.of(Valence::Neutral));
    if neg.len() < negative_count || neu.len() < filler_count {
        return Err(ContagionError::InsufficientCorpus {
            negative_needed: negative_count,
            negative_available: neg.len(),
            filler_needed: filler_count,
            filler_available: neu.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut feed: Vec<Post> = neg.choose_multiple(&mut rng, negative_count).map(|p| (*p).clone()).collect();
    feed.extend(neu.choose_multiple(&mut rng, filler_count).map(|p| (*p).clone()));
    feed.shuffle(&mut rng);
    Ok(feed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_corpus_is_large_enough() {
        let c = PostCorpus::bundled();
        assert!(c.of(Valence::Negative).len() >= 16);
        assert!(c.of(Valence::Neutral).len() >= 15);
    }

    #[test]
    fn feeds_have_exact_counts_and_are_deterministic() {
        let c = PostCorpus::bundled();
        let count = |f: &[Post]| f.iter().filter(|p| p.nominal_valence == Valence::Negative).count();
        let f0 = build_feed(&c, 0, 15, 1).unwrap();
        assert_eq!(count(&f0), 0);
        let f15 = build_feed(&c, 15, 0, 1).unwrap();
        assert_eq!(count(&f15), 15);
        let a = build_feed(&c, 7, 8, 42).unwrap();
        assert_eq!(a, build_feed(&c, 7, 8, 42).unwrap());
        assert_ne!(a, build_feed(&c, 7, 8, 43).unwrap());
        let ids: BTreeSet<_> = a.iter().map(|p| &p.id).collect();
        assert_eq!(ids.len(), 15);
    }

    #[test]
    fn corpus_errors() {
        let c = PostCorpus::bundled();
        assert!(matches!(build_feed(&c, 100, 0, 0), Err(ContagionError::InsufficientCorpus { .. })));
        let dup = r#"{"id":"a","text":"x","valence":"neutral"}
{"id":"a","text":"y","valence":"negative"}"#;
        assert!(PostCorpus::from_jsonl(dup).is_err());
        assert!(PostCorpus::from_jsonl(r#"{"id":"a","text":"x","valence":"happy"}"#).is_err());
    }
}
