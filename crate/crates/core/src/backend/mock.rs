//! Deterministic agent with a programmed bias curve.
//!
//! Every variant of a paradigm gets a distribution whose weighted score is
//! exactly the programmed bias `b`, so measured CBI equals `b`. Variants
//! differ only in shape: a per-variant draw mixes a two-point distribution
//! on adjacent options with a wider mean-preserving one.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    AgentBackend, BackendConfig, BackendError, Capabilities, ControlKind, GenerationContext, GenerationRequest,
    LabelProbs, ReasoningMode, RequestContext,
};
use crate::cbi;
use crate::contagion::lexicon;
use crate::seed;
use crate::testbed::{PresentedPrompt, OPTION_COUNT};

/// Programmed bias as a function of the control coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaResponse {
    Logistic { low: f64, high: f64, midpoint: f64, slope: f64 },
    Linear { intercept: f64, slope: f64 },
    /// Linear interpolation between `(λ, b)` points sorted by λ, flat
    /// beyond the ends.
    Piecewise { points: Vec<(f64, f64)> },
    Constant { value: f64 },
}

impl Default for LambdaResponse {
    /// `b = 4λ`, spanning the whole scale over the unit interval.
    fn default() -> Self {
        LambdaResponse::Linear { intercept: 0.0, slope: 4.0 }
    }
}

impl LambdaResponse {
    /// Bias at coefficient `lambda`, clamped to `[0, 4]`.
    pub fn eval(&self, lambda: f64) -> f64 {
        let b = match self {
            LambdaResponse::Logistic { low, high, midpoint, slope } => {
                low + (high - low) / (1.0 + (-slope * (lambda - midpoint)).exp())
            }
            LambdaResponse::Linear { intercept, slope } => intercept + slope * lambda,
            LambdaResponse::Piecewise { points } => piecewise(points, lambda),
            LambdaResponse::Constant { value } => *value,
        };
        b.clamp(0.0, 4.0)
    }

    /// Coefficient at which the logistic curve reaches `target`.
    pub fn logistic_inverse(&self, target: f64) -> Option<f64> {
        match self {
            LambdaResponse::Logistic { low, high, midpoint, slope } => {
                let f = (target - low) / (high - low);
                (f > 0.0 && f < 1.0).then(|| midpoint - (1.0 / f - 1.0).ln() / slope)
            }
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), BackendError> {
        let ok = match self {
            LambdaResponse::Logistic { low, high, midpoint, slope } => {
                [low, high, midpoint, slope].iter().all(|v| v.is_finite())
            }
            LambdaResponse::Linear { intercept, slope } => intercept.is_finite() && slope.is_finite(),
            LambdaResponse::Piecewise { points } => {
                !points.is_empty()
                    && points.iter().all(|(x, y)| x.is_finite() && y.is_finite())
                    && points.windows(2).all(|w| w[0].0 < w[1].0)
            }
            LambdaResponse::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(BackendError::Config(format!("invalid lambda response {self:?}")))
        }
    }
}

fn piecewise(points: &[(f64, f64)], x: f64) -> f64 {
    let (first, last) = (points[0], points[points.len() - 1]);
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let i = points.partition_point(|p| p.0 <= x);
    let (a, b) = (points[i - 1], points[i]);
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

/// Post sentiment as a function of feed dose:
/// `valence = base - kappa * bias * dose + N(0, noise_sd)`, clamped to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContagionResponse {
    pub base_valence: f64,
    pub kappa: f64,
    pub noise_sd: f64,
    /// Words per generated post.
    pub post_words: usize,
}

impl Default for ContagionResponse {
    fn default() -> Self {
        Self { base_valence: 0.2, kappa: 0.008, noise_sd: 0.05, post_words: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockAgentSpec {
    /// Bias without any control applied.
    pub base_bias: f64,
    pub paradigm_base_bias: BTreeMap<String, f64>,
    /// Bias under control, by coefficient.
    pub lambda_response: LambdaResponse,
    pub method_responses: BTreeMap<ControlKind, LambdaResponse>,
    pub paradigm_responses: BTreeMap<String, LambdaResponse>,
    /// Upper bound of the per-variant mixing weight toward the wide shape.
    pub spread: f64,
    /// Probability mass reported off the five labels on the exact path.
    pub off_option_mass: f64,
    pub seed: u64,
    pub exact_probs: bool,
    pub supports_steering: bool,
    pub contagion: Option<ContagionResponse>,
    /// Paradigm whose programmed bias drives contagion behaviour.
    pub contagion_paradigm: String,
}

impl Default for MockAgentSpec {
    fn default() -> Self {
        Self {
            base_bias: 2.0,
            paradigm_base_bias: BTreeMap::new(),
            lambda_response: LambdaResponse::default(),
            method_responses: BTreeMap::new(),
            paradigm_responses: BTreeMap::new(),
            spread: 0.3,
            off_option_mass: 0.0,
            seed: 0,
            exact_probs: true,
            supports_steering: true,
            contagion: None,
            contagion_paradigm: "asch_line".into(),
        }
    }
}

impl MockAgentSpec {
    pub fn validate(&self) -> Result<(), BackendError> {
        let in_range = |b: f64| (0.0..=4.0).contains(&b);
        if !in_range(self.base_bias) || !self.paradigm_base_bias.values().all(|b| in_range(*b)) {
            return Err(BackendError::Config("mock base bias must lie in [0, 4]".into()));
        }
        if !(0.0..=1.0).contains(&self.spread) {
            return Err(BackendError::Config("mock spread must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.off_option_mass) {
            return Err(BackendError::Config("mock off-option mass must lie in [0, 1)".into()));
        }
        self.lambda_response.validate()?;
        for r in self.method_responses.values().chain(self.paradigm_responses.values()) {
            r.validate()?;
        }
        Ok(())
    }

    /// Programmed bias for a paradigm under an optional control.
    pub fn programmed_bias(&self, paradigm_id: &str, control: Option<(ControlKind, f64)>) -> f64 {
        match control {
            None => self.paradigm_base_bias.get(paradigm_id).copied().unwrap_or(self.base_bias),
            Some((kind, lambda)) => self
                .paradigm_responses
                .get(paradigm_id)
                .or_else(|| self.method_responses.get(&kind))
                .unwrap_or(&self.lambda_response)
                .eval(lambda),
        }
    }
}

/// Canonical distribution with weighted score exactly `b`.
///
/// `eta` in `[0, 1]` mixes the adjacent-option two-point distribution with a
/// wider one built from the uniform distribution and the far endpoint; both
/// have score `b`.
pub fn mock_distribution(b: f64, eta: f64) -> [f64; OPTION_COUNT] {
    let b = b.clamp(0.0, 4.0);
    // Canonical index of weight w is 4 - w.
    let k = (b.floor() as usize).min(3);
    let frac = b - k as f64;
    let mut two = [0.0; OPTION_COUNT];
    two[4 - k] = 1.0 - frac;
    two[3 - k] = frac;
    let (t, endpoint) = if b >= 2.0 { ((4.0 - b) / 2.0, 0) } else { (b / 2.0, 4) };
    let mut wide = [t / OPTION_COUNT as f64; OPTION_COUNT];
    wide[endpoint] += 1.0 - t;
    let mut d = [0.0; OPTION_COUNT];
    for i in 0..OPTION_COUNT {
        d[i] = (1.0 - eta) * two[i] + eta * wide[i];
    }
    d
}

#[derive(Debug)]
pub struct MockAgent {
    spec: MockAgentSpec,
    config: BackendConfig,
    stats: super::StatsCounter,
}

pub fn make_mock(spec: MockAgentSpec, config: BackendConfig) -> Result<MockAgent, BackendError> {
    spec.validate()?;
    Ok(MockAgent { spec, config, stats: Default::default() })
}

impl MockAgent {
    pub fn spec(&self) -> &MockAgentSpec {
        &self.spec
    }

    fn control_of(&self, ctx: &RequestContext) -> Result<Option<(ControlKind, f64)>, BackendError> {
        match &ctx.control {
            None => Ok(None),
            Some(c) if c.kind.is_steering() && !self.spec.supports_steering => {
                Err(BackendError::Unsupported(format!("{} on a mock without steering", c.kind)))
            }
            Some(c) => Ok(Some((c.kind, c.coefficient))),
        }
    }

    fn canonical_probs(&self, prompt: &PresentedPrompt, ctx: &RequestContext) -> Result<[f64; OPTION_COUNT], BackendError> {
        let pid = &prompt.variant.paradigm_id;
        let b = self.spec.programmed_bias(pid, self.control_of(ctx)?);
        let vseed = seed::derive(self.spec.seed, &[seed::hash_str(pid), prompt.variant.variant_index as u64]);
        let eta = self.spec.spread * ChaCha8Rng::seed_from_u64(vseed).random::<f64>();
        Ok(mock_distribution(b, eta))
    }

    fn post(&self, negative_count: usize, ctx: &RequestContext) -> Result<String, BackendError> {
        let Some(resp) = &self.spec.contagion else {
            return Err(BackendError::Unsupported("mock has no contagion response".into()));
        };
        let b = self.spec.programmed_bias(&self.spec.contagion_paradigm, self.control_of(ctx)?);
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let noise = if resp.noise_sd > 0.0 {
            Normal::new(0.0, resp.noise_sd).map_err(|e| BackendError::Config(e.to_string()))?.sample(&mut rng)
        } else {
            0.0
        };
        let valence = (resp.base_valence - resp.kappa * b * negative_count as f64 + noise).clamp(-1.0, 1.0);
        Ok(compose_post(valence, resp.post_words.max(1), &mut rng))
    }
}

/// Lexicon words whose net sentiment is `valence` in expectation.
fn compose_post(valence: f64, words: usize, rng: &mut ChaCha8Rng) -> String {
    let target = valence * words as f64;
    let floor = target.floor();
    let net = if rng.random::<f64>() < target - floor { floor + 1.0 } else { floor } as i64;
    let net = net.clamp(-(words as i64), words as i64);
    let mut out: Vec<&str> = Vec::with_capacity(words);
    let pick = |list: &[&'static str], rng: &mut ChaCha8Rng| list[rng.random_range(0..list.len())];
    for _ in 0..net.unsigned_abs() {
        out.push(pick(if net > 0 { lexicon::POSITIVE } else { lexicon::NEGATIVE }, rng));
    }
    while out.len() < words {
        out.push(pick(lexicon::FILLER, rng));
    }
    out.shuffle(rng);
    out.join(" ")
}

impl AgentBackend for MockAgent {
    fn id(&self) -> String {
        format!("mock:{}", self.spec.seed)
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            exact_probs: self.spec.exact_probs,
            supports_system_prompt: true,
            supports_steering: self.spec.supports_steering,
        }
    }

    fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn option_probs(&self, prompt: &PresentedPrompt, ctx: &RequestContext) -> Result<LabelProbs, BackendError> {
        if !self.spec.exact_probs {
            return Err(BackendError::Unsupported("mock configured without exact probabilities".into()));
        }
        self.stats.request();
        let canonical = cbi::OptionDistribution::new(self.canonical_probs(prompt, ctx)?)?;
        let keep = 1.0 - self.spec.off_option_mass;
        Ok(LabelProbs(cbi::permute(&canonical, &prompt.permutation).map(|p| p * keep)))
    }

    fn generate(&self, request: &GenerationRequest, ctx: &RequestContext) -> Result<String, BackendError> {
        self.stats.request();
        match &request.context {
            GenerationContext::Likert(prompt) => {
                let probs = self.canonical_probs(prompt, ctx)?;
                let u: f64 = ChaCha8Rng::seed_from_u64(ctx.seed).random();
                let mut acc = 0.0;
                let mut choice = OPTION_COUNT - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        choice = i;
                        break;
                    }
                }
                let pos = prompt.permutation.position_of(choice);
                let label = &prompt.labels[pos];
                let text = &prompt.variant.canonical_options.options[choice];
                Ok(match self.config.reasoning_mode {
                    ReasoningMode::Direct => format!("{label}. {text}"),
                    ReasoningMode::Reasoning => format!("Weighing the scenario against each option.\nAnswer: {label}"),
                })
            }
            GenerationContext::Feed { negative_count, .. } => self.post(*negative_count, ctx),
            GenerationContext::Free => Ok("Nothing much to add today.".into()),
        }
    }

    fn stats(&self) -> super::BackendStats {
        self.stats.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbi::{weighted_score, OptionDistribution};

    #[test]
    fn distribution_hits_programmed_score() {
        for i in 0..=80 {
            let b = i as f64 * 0.05;
            for eta in [0.0, 0.25, 0.5, 1.0] {
                let d = OptionDistribution::new(mock_distribution(b, eta)).unwrap();
                assert!((weighted_score(&d) - b).abs() < 1e-12, "b={b} eta={eta}");
                assert!(d.probs().iter().all(|p| *p >= 0.0));
            }
        }
    }

    #[test]
    fn logistic_inverse_round_trips() {
        let r = LambdaResponse::Logistic { low: 0.5, high: 3.5, midpoint: 0.3, slope: 8.0 };
        let l = r.logistic_inverse(2.6).unwrap();
        assert!((r.eval(l) - 2.6).abs() < 1e-12);
        assert!(r.logistic_inverse(3.9).is_none());
    }

    #[test]
    fn piecewise_interpolates_and_clamps() {
        let r = LambdaResponse::Piecewise { points: vec![(0.0, 1.0), (1.0, 3.0)] };
        assert_eq!(r.eval(-1.0), 1.0);
        assert_eq!(r.eval(0.25), 1.5);
        assert_eq!(r.eval(2.0), 3.0);
    }

    #[test]
    fn composed_post_tracks_valence() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 2000;
        let mean: f64 =
            (0..n).map(|_| lexicon::score_text(&compose_post(-0.237, 40, &mut rng)).sentiment()).sum::<f64>() / n as f64;
        assert!((mean + 0.237).abs() < 0.01, "{mean}");
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(MockAgentSpec { base_bias: 4.5, ..Default::default() }.validate().is_err());
        assert!(MockAgentSpec { spread: 1.5, ..Default::default() }.validate().is_err());
        let bad = LambdaResponse::Piecewise { points: vec![(1.0, 1.0), (0.0, 2.0)] };
        assert!(MockAgentSpec { lambda_response: bad, ..Default::default() }.validate().is_err());
    }
}
