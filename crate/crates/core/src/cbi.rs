//! Cognitive Bias Index.
//!
//! For a paradigm with `n` prompt variants the index is
//! `CBI = (1/n) Σ_i Σ_j (5 - j) · P_i(O_j)`, the mean Likert-weighted option
//! expectation. It lies in `[0, 4]`; higher means stronger bias.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::testbed::{OptionPermutation, LIKERT_WEIGHTS, OPTION_COUNT};

/// Tolerance on `Σ probs = 1`.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CbiError {
    #[error("invalid option distribution {probs:?}: {reason}")]
    InvalidDistribution { probs: [f64; OPTION_COUNT], reason: String },
    #[error("no probability mass on any valid option")]
    NoValidMass,
    #[error("expected {expected} variant responses, got {actual}")]
    CountMismatch { expected: usize, actual: usize },
    #[error("duplicate response for variant {0}")]
    DuplicateVariant(usize),
    #[error("missing response for variant {0}")]
    MissingVariant(usize),
    #[error("empty sample list")]
    NoSamples,
    #[error("choice {0} is not a canonical option index (0..5)")]
    BadChoice(usize),
    #[error("option mapping {0:?} is not a permutation")]
    BadPermutation([usize; OPTION_COUNT]),
}

/// Probabilities of the canonical options O1..O5 (index 0 is O1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; OPTION_COUNT]", into = "[f64; OPTION_COUNT]")]
pub struct OptionDistribution {
    probs: [f64; OPTION_COUNT],
}

impl OptionDistribution {
    pub fn new(probs: [f64; OPTION_COUNT]) -> Result<Self, CbiError> {
        let bad = |reason: &str| CbiError::InvalidDistribution { probs, reason: reason.to_owned() };
        if probs.iter().any(|p| !p.is_finite() || !(0.0..=1.0).contains(p)) {
            return Err(bad("each probability must lie in [0, 1]"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(bad(&format!("probabilities sum to {sum}")));
        }
        Ok(Self { probs })
    }

    /// All mass on one canonical option.
    pub fn point(canonical_index: usize) -> Self {
        let mut probs = [0.0; OPTION_COUNT];
        probs[canonical_index] = 1.0;
        Self { probs }
    }

    pub fn uniform() -> Self {
        Self { probs: [0.2; OPTION_COUNT] }
    }

    /// Renormalize raw non-negative masses over the valid options. Returns the
    /// distribution and the raw valid mass `Σ raw`.
    pub fn renormalized(raw: [f64; OPTION_COUNT]) -> Result<(Self, f64), CbiError> {
        if raw.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(CbiError::InvalidDistribution { probs: raw, reason: "negative or non-finite mass".into() });
        }
        // summing in sorted order makes the mass independent of option order
        let mut sorted = raw;
        sorted.sort_by(f64::total_cmp);
        let mass: f64 = sorted.iter().sum();
        if mass <= 0.0 {
            return Err(CbiError::NoValidMass);
        }
        let probs = raw.map(|p| (p / mass).min(1.0));
        Ok((Self::new(probs)?, mass))
    }

    pub fn probs(&self) -> &[f64; OPTION_COUNT] {
        &self.probs
    }
}

impl TryFrom<[f64; OPTION_COUNT]> for OptionDistribution {
    type Error = CbiError;
    fn try_from(p: [f64; OPTION_COUNT]) -> Result<Self, Self::Error> {
        Self::new(p)
    }
}

impl From<OptionDistribution> for [f64; OPTION_COUNT] {
    fn from(d: OptionDistribution) -> Self {
        d.probs
    }
}

/// `Σ_j (5 - j) · P(O_j)`.
pub fn weighted_score(d: &OptionDistribution) -> f64 {
    d.probs.iter().zip(LIKERT_WEIGHTS).map(|(p, w)| f64::from(w) * p).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseSource {
    ExactProbs,
    Frequencies,
}

/// One variant's response, already mapped back to canonical option order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResponse {
    pub variant_index: usize,
    pub distribution: OptionDistribution,
    pub source: ResponseSource,
    /// Parsed samples behind a `Frequencies` estimate; 0 for `ExactProbs`.
    pub sample_count: usize,
    pub permutation_used: OptionPermutation,
    /// Raw probability mass on the five label tokens before renormalization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_mass: Option<f64>,
    /// Generations that could not be parsed to a label and were resampled.
    #[serde(default)]
    pub rejected_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbiMeasurement {
    pub paradigm_id: String,
    pub value: f64,
    /// Weighted score per variant, in variant-index order.
    pub per_variant_scores: Vec<f64>,
    pub n_variants: usize,
    /// Sample standard deviation of the per-variant scores over `√n`.
    pub stderr: f64,
    pub source: ResponseSource,
}

/// Aggregate exactly one response per variant `0..expected_n`.
pub fn compute_cbi(
    paradigm_id: &str,
    responses: &[VariantResponse],
    expected_n: usize,
) -> Result<CbiMeasurement, CbiError> {
    if responses.len() != expected_n {
        return Err(CbiError::CountMismatch { expected: expected_n, actual: responses.len() });
    }
    if expected_n == 0 {
        return Err(CbiError::CountMismatch { expected: 1, actual: 0 });
    }
    let mut slots: Vec<Option<&VariantResponse>> = vec![None; expected_n];
    for r in responses {
        let slot = slots.get_mut(r.variant_index).ok_or(CbiError::MissingVariant(r.variant_index))?;
        if slot.replace(r).is_some() {
            return Err(CbiError::DuplicateVariant(r.variant_index));
        }
    }
    let ordered: Vec<&VariantResponse> = slots.into_iter().enumerate().map(|(i, s)| s.ok_or(CbiError::MissingVariant(i))).collect::<Result<_, _>>()?;
    Ok(aggregate(paradigm_id, &ordered))
}

/// Aggregate the responses that are present, e.g. after dropping failed
/// variants. Indices must be unique; the result is over `responses.len()`.
pub fn compute_cbi_over(paradigm_id: &str, responses: &[VariantResponse]) -> Result<CbiMeasurement, CbiError> {
    if responses.is_empty() {
        return Err(CbiError::CountMismatch { expected: 1, actual: 0 });
    }
    let mut ordered: Vec<&VariantResponse> = responses.iter().collect();
    ordered.sort_by_key(|r| r.variant_index);
    if let Some(w) = ordered.windows(2).find(|w| w[0].variant_index == w[1].variant_index) {
        return Err(CbiError::DuplicateVariant(w[0].variant_index));
    }
    Ok(aggregate(paradigm_id, &ordered))
}

fn aggregate(paradigm_id: &str, ordered: &[&VariantResponse]) -> CbiMeasurement {
    let scores: Vec<f64> = ordered.iter().map(|r| weighted_score(&r.distribution)).collect();
    let source = if ordered.iter().any(|r| r.source == ResponseSource::Frequencies) {
        ResponseSource::Frequencies
    } else {
        ResponseSource::ExactProbs
    };
    let n_variants = scores.len();
    let n = n_variants as f64;
    let value = (scores.iter().sum::<f64>() / n).clamp(0.0, 4.0);
    let stderr = if n_variants > 1 {
        let var = scores.iter().map(|s| (s - value).powi(2)).sum::<f64>() / (n - 1.0);
        var.sqrt() / n.sqrt()
    } else {
        0.0
    };
    CbiMeasurement { paradigm_id: paradigm_id.to_owned(), value, per_variant_scores: scores, n_variants, stderr, source }
}

/// Empirical frequencies of canonical choices (0-based). Options never chosen
/// get probability 0.
pub fn estimate_from_samples(choices: &[usize]) -> Result<OptionDistribution, CbiError> {
    if choices.is_empty() {
        return Err(CbiError::NoSamples);
    }
    let mut counts = [0usize; OPTION_COUNT];
    for &c in choices {
        *counts.get_mut(c).ok_or(CbiError::BadChoice(c))? += 1;
    }
    let n = choices.len() as f64;
    let probs = counts.map(|c| c as f64 / n);
    // Σ of count/n can drift by an ulp; renormalizing keeps it within tolerance
    OptionDistribution::new(probs).or_else(|_| OptionDistribution::renormalized(probs).map(|(d, _)| d))
}

/// Map probabilities over presented positions back to canonical order.
pub fn unpermute(presented: &[f64; OPTION_COUNT], perm: &OptionPermutation) -> Result<OptionDistribution, CbiError> {
    perm.validate().map_err(|_| CbiError::BadPermutation(perm.mapping))?;
    let mut probs = [0.0; OPTION_COUNT];
    for (pos, &c) in perm.mapping.iter().enumerate() {
        probs[c] = presented[pos];
    }
    OptionDistribution::new(probs)
}

/// Inverse of [`unpermute`]: canonical order to presented positions.
pub fn permute(d: &OptionDistribution, perm: &OptionPermutation) -> [f64; OPTION_COUNT] {
    let mut out = [0.0; OPTION_COUNT];
    for (pos, &c) in perm.mapping.iter().enumerate() {
        out[pos] = d.probs[c];
    }
    out
}
