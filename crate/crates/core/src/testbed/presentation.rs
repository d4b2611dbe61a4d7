//! Option-order and label randomization.
//!
//! Agents show position and label preferences, so every prompt variant is
//! presented with its five options shuffled and relabeled. The permutation is
//! recorded so responses can be mapped back to canonical options.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PromptVariant, TestbedError, OPTION_COUNT};

/// Label alphabet used for the presented options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelScheme {
    Letters,
    Digits,
    Roman,
}

impl LabelScheme {
    pub const ALL: [LabelScheme; 3] = [LabelScheme::Letters, LabelScheme::Digits, LabelScheme::Roman];

    pub fn labels(self) -> [&'static str; OPTION_COUNT] {
        match self {
            LabelScheme::Letters => ["A", "B", "C", "D", "E"],
            LabelScheme::Digits => ["1", "2", "3", "4", "5"],
            LabelScheme::Roman => ["I", "II", "III", "IV", "V"],
        }
    }
}

/// `mapping[presented_position] = canonical_index`, both 0-based
/// (canonical index 0 is O1, the highest-bias option).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OptionPermutation {
    pub mapping: [usize; OPTION_COUNT],
    pub label_scheme: LabelScheme,
}

impl OptionPermutation {
    pub fn identity(label_scheme: LabelScheme) -> Self {
        Self { mapping: [0, 1, 2, 3, 4], label_scheme }
    }

    pub fn new(mapping: [usize; OPTION_COUNT], label_scheme: LabelScheme) -> Result<Self, TestbedError> {
        let perm = Self { mapping, label_scheme };
        perm.validate()?;
        Ok(perm)
    }

    pub fn validate(&self) -> Result<(), TestbedError> {
        let mut seen = [false; OPTION_COUNT];
        for &c in &self.mapping {
            if c >= OPTION_COUNT || seen[c] {
                return Err(TestbedError::InvalidPermutation(self.mapping));
            }
            seen[c] = true;
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.mapping == [0, 1, 2, 3, 4]
    }

    /// `inverse()[canonical_index] = presented_position`.
    pub fn inverse(&self) -> [usize; OPTION_COUNT] {
        let mut inv = [0; OPTION_COUNT];
        for (pos, &c) in self.mapping.iter().enumerate() {
            inv[c] = pos;
        }
        inv
    }

    pub fn canonical_of(&self, presented_position: usize) -> usize {
        self.mapping[presented_position]
    }

    pub fn position_of(&self, canonical_index: usize) -> usize {
        self.inverse()[canonical_index]
    }

    pub fn labels(&self) -> [&'static str; OPTION_COUNT] {
        self.label_scheme.labels()
    }
}

/// A variant as shown to the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentedPrompt {
    pub variant: PromptVariant,
    pub permutation: OptionPermutation,
    pub labels: [String; OPTION_COUNT],
    pub full_text: String,
}

/// Closing instruction appended after the option list.
pub const ANSWER_INSTRUCTION: &str = "Respond with the label of your chosen option.";

impl PresentedPrompt {
    pub fn new(variant: PromptVariant, permutation: OptionPermutation) -> Self {
        let labels = permutation.labels().map(str::to_owned);
        let mut full_text = variant.rendered_scenario.clone();
        for (pos, label) in labels.iter().enumerate() {
            let canonical = permutation.mapping[pos];
            full_text.push('\n');
            full_text.push_str(label);
            full_text.push_str(". ");
            full_text.push_str(&variant.canonical_options.options[canonical]);
        }
        full_text.push('\n');
        full_text.push_str(ANSWER_INSTRUCTION);
        Self { variant, permutation, labels, full_text }
    }

    /// Canonical order, letter labels.
    pub fn canonical(variant: PromptVariant) -> Self {
        Self::new(variant, OptionPermutation::identity(LabelScheme::Letters))
    }

    /// Presented position whose label matches `label` (case-insensitive).
    pub fn position_of_label(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.eq_ignore_ascii_case(label))
    }
}

/// Draw an option order and a label scheme from `seed`.
pub fn draw_permutation(seed: u64) -> OptionPermutation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mapping = [0, 1, 2, 3, 4];
    mapping.shuffle(&mut rng);
    let label_scheme = LabelScheme::ALL[rng.random_range(0..LabelScheme::ALL.len())];
    OptionPermutation { mapping, label_scheme }
}

/// Present `variant` with order and labels drawn jointly from `seed`.
pub fn randomize_presentation(variant: &PromptVariant, seed: u64) -> PresentedPrompt {
    PresentedPrompt::new(variant.clone(), draw_permutation(seed))
}
