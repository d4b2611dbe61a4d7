//! Uniform agent interface.
//!
//! An [`AgentBackend`] answers presented Likert prompts either with exact
//! next-token probabilities over the five labels or with free-text
//! generations that are parsed and counted. [`score_options`] picks the path
//! from the backend's capabilities and always returns a distribution over the
//! canonical options.

mod chat_api;
mod http;
mod mock;
mod parse;
mod scripted;
pub mod sidecar;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cbi::{self, CbiError, OptionDistribution, ResponseSource, VariantResponse};
use crate::seed;
use crate::testbed::{PresentedPrompt, OPTION_COUNT};

pub use chat_api::{make_chat_api, ChatApiBackend, ENV_API_KEY, ENV_BASE_URL};
pub use mock::{make_mock, mock_distribution, ContagionResponse, LambdaResponse, MockAgent, MockAgentSpec};
pub use parse::parse_label;
pub use scripted::{ScriptedBackend, ScriptedReply};
pub use sidecar::{make_sidecar_client, SidecarBackend, ENV_SIDECAR_URL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {retries} retries")]
    RateLimited { retries: u32 },
    #[error("transport failure after {retries} retries: {message}")]
    Transport { message: String, retries: u32 },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed reply: {0}")]
    Malformed(String),
    #[error("cannot reach {url}: {message}")]
    Connectivity { url: String, message: String },
    #[error("unsupported by this backend: {0}")]
    Unsupported(String),
    #[error("no option label found in completion {0:?}")]
    Parse(String),
    #[error("{rejected} unparseable completions exceeded the reject threshold of {threshold}")]
    TooManyRejects { rejected: usize, threshold: usize },
    #[error(transparent)]
    Cbi(#[from] CbiError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub exact_probs: bool,
    pub supports_system_prompt: bool,
    pub supports_steering: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningMode {
    #[default]
    Direct,
    Reasoning,
}

/// Where persona text from [`BackendConfig::system_prompt`] is injected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaRole {
    #[default]
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 5, initial_backoff_ms: 500, max_backoff_ms: 30_000, multiplier: 2.0 }
    }
}

impl RetryPolicy {
    pub fn backoff_ms(&self, attempt: u32) -> u64 {
        let raw = self.initial_backoff_ms as f64 * self.multiplier.powi(attempt as i32);
        (raw as u64).min(self.max_backoff_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    /// `"mock"`, `"scripted"`, `"sidecar"`, `"api"` or an http(s) base URL
    /// for an OpenAI-compatible endpoint.
    pub endpoint: String,
    pub model_name: String,
    pub temperature: f64,
    /// Generations per question on the sampled-frequency path.
    pub max_samples: usize,
    pub reasoning_mode: ReasoningMode,
    pub reasoning_token_budget: u32,
    pub reasoning_paths: usize,
    pub system_prompt: Option<String>,
    pub persona_role: PersonaRole,
    /// Completion length for direct answers.
    pub max_tokens: u32,
    pub request_timeout_secs: u64,
    pub retry_policy: RetryPolicy,
    /// Upper bound on concurrently issued requests.
    pub max_in_flight: usize,
    /// Minimum spacing between request starts, in milliseconds.
    pub min_request_interval_ms: u64,
    /// Unparseable completions tolerated per question before failing it.
    pub reject_threshold: usize,
    /// Ask an OpenAI-compatible endpoint for top logprobs of the first token
    /// and treat them as exact label probabilities.
    pub logprobs: bool,
    pub mock: Option<MockAgentSpec>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "mock".into(),
            model_name: "mock".into(),
            temperature: 0.7,
            max_samples: 10,
            reasoning_mode: ReasoningMode::Direct,
            reasoning_token_budget: 128,
            reasoning_paths: 8,
            system_prompt: None,
            persona_role: PersonaRole::System,
            max_tokens: 16,
            request_timeout_secs: 60,
            retry_policy: RetryPolicy::default(),
            max_in_flight: 8,
            min_request_interval_ms: 0,
            reject_threshold: 20,
            logprobs: false,
            mock: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(BackendError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.max_samples == 0 {
            return Err(BackendError::Config("max_samples must be >= 1".into()));
        }
        if self.reasoning_mode == ReasoningMode::Reasoning && (self.reasoning_token_budget == 0 || self.reasoning_paths == 0)
        {
            return Err(BackendError::Config("reasoning mode needs a token budget and path count >= 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(BackendError::Config("max_in_flight must be >= 1".into()));
        }
        if let Some(m) = &self.mock {
            m.validate()?;
        }
        Ok(())
    }
}

/// Control method families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    PromptNumerical,
    RepeLinear,
    RepeProjection,
    TaskVector,
}

impl ControlKind {
    pub const ALL: [ControlKind; 4] =
        [ControlKind::PromptNumerical, ControlKind::RepeLinear, ControlKind::RepeProjection, ControlKind::TaskVector];

    pub fn as_str(self) -> &'static str {
        match self {
            ControlKind::PromptNumerical => "prompt_numerical",
            ControlKind::RepeLinear => "repe_linear",
            ControlKind::RepeProjection => "repe_projection",
            ControlKind::TaskVector => "task_vector",
        }
    }

    pub fn is_steering(self) -> bool {
        !matches!(self, ControlKind::PromptNumerical)
    }
}

impl fmt::Display for ControlKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControlKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "prompt_numerical" | "prompt" | "pn" => Ok(ControlKind::PromptNumerical),
            "repe_linear" | "linear" => Ok(ControlKind::RepeLinear),
            "repe_projection" | "projection" => Ok(ControlKind::RepeProjection),
            "task_vector" | "finetune" | "task_vector_finetune" => Ok(ControlKind::TaskVector),
            other => Err(format!("unknown control method `{other}`")),
        }
    }
}

/// A control method and coefficient attached to every request of a
/// controlled agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedControl {
    pub kind: ControlKind,
    pub coefficient: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RequestContext {
    pub seed: u64,
    /// Extra system text added by control wrappers, after any persona prompt.
    pub system_prompt: Option<String>,
    pub control: Option<AppliedControl>,
}

impl RequestContext {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn reseeded(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Join persona and control system text.
pub fn merged_system_prompt(config: &BackendConfig, ctx: &RequestContext) -> Option<String> {
    let persona = match config.persona_role {
        PersonaRole::System => config.system_prompt.as_deref(),
        PersonaRole::User => None,
    };
    match (persona, ctx.system_prompt.as_deref()) {
        (Some(a), Some(b)) => Some(format!("{a}\n\n{b}")),
        (Some(a), None) => Some(a.to_owned()),
        (None, Some(b)) => Some(b.to_owned()),
        (None, None) => None,
    }
}

/// Structured view of what a generation is for. Remote backends only see the
/// rendered text; the mock and scripted backends use the structure.
#[derive(Debug, Clone, PartialEq)]
pub enum GenerationContext {
    Likert(Box<PresentedPrompt>),
    Feed { negative_count: usize, feed_len: usize },
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub user_text: String,
    pub max_tokens: u32,
    pub context: GenerationContext,
}

/// Raw label probabilities in presented order (may not sum to one).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelProbs(pub [f64; OPTION_COUNT]);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendStats {
    pub requests: u64,
    pub retries: u64,
    pub rate_limited: u64,
}

#[derive(Debug, Default)]
pub struct StatsCounter {
    requests: AtomicU64,
    retries: AtomicU64,
    rate_limited: AtomicU64,
}

impl StatsCounter {
    pub fn request(&self) {
        self.requests.fetch_add(1, Ordering::Relaxed);
    }
    pub fn retry(&self, rate_limited: bool) {
        self.retries.fetch_add(1, Ordering::Relaxed);
        if rate_limited {
            self.rate_limited.fetch_add(1, Ordering::Relaxed);
        }
    }
    pub fn snapshot(&self) -> BackendStats {
        BackendStats {
            requests: self.requests.load(Ordering::Relaxed),
            retries: self.retries.load(Ordering::Relaxed),
            rate_limited: self.rate_limited.load(Ordering::Relaxed),
        }
    }
}

pub trait AgentBackend: Send + Sync {
    fn id(&self) -> String;

    fn capabilities(&self) -> Capabilities;

    fn config(&self) -> &BackendConfig;

    /// Next-token probabilities of the five presented labels.
    fn option_probs(&self, prompt: &PresentedPrompt, ctx: &RequestContext) -> Result<LabelProbs, BackendError> {
        let _ = (prompt, ctx);
        Err(BackendError::Unsupported(format!("{} does not expose option probabilities", self.id())))
    }

    fn generate(&self, request: &GenerationRequest, ctx: &RequestContext) -> Result<String, BackendError>;

    fn stats(&self) -> BackendStats {
        BackendStats::default()
    }
}

impl<T: AgentBackend + ?Sized> AgentBackend for Arc<T> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
    fn config(&self) -> &BackendConfig {
        (**self).config()
    }
    fn option_probs(&self, prompt: &PresentedPrompt, ctx: &RequestContext) -> Result<LabelProbs, BackendError> {
        (**self).option_probs(prompt, ctx)
    }
    fn generate(&self, request: &GenerationRequest, ctx: &RequestContext) -> Result<String, BackendError> {
        (**self).generate(request, ctx)
    }
    fn stats(&self) -> BackendStats {
        (**self).stats()
    }
}

impl<T: AgentBackend + ?Sized> AgentBackend for &T {
    fn id(&self) -> String {
        (**self).id()
    }
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
    fn config(&self) -> &BackendConfig {
        (**self).config()
    }
    fn option_probs(&self, prompt: &PresentedPrompt, ctx: &RequestContext) -> Result<LabelProbs, BackendError> {
        (**self).option_probs(prompt, ctx)
    }
    fn generate(&self, request: &GenerationRequest, ctx: &RequestContext) -> Result<String, BackendError> {
        (**self).generate(request, ctx)
    }
    fn stats(&self) -> BackendStats {
        (**self).stats()
    }
}

/// Instruction appended in reasoning mode.
pub fn reasoning_instruction(budget: u32) -> String {
    format!(
        "Think briefly about the situation in at most {budget} tokens, then give your final choice \
         on the last line in the form \"Answer: <label>\"."
    )
}

fn likert_request(agent: &dyn AgentBackend, prompt: &PresentedPrompt) -> GenerationRequest {
    let cfg = agent.config();
    let (user_text, max_tokens) = match cfg.reasoning_mode {
        ReasoningMode::Direct => (prompt.full_text.clone(), cfg.max_tokens),
        ReasoningMode::Reasoning => (
            format!("{}\n{}", prompt.full_text, reasoning_instruction(cfg.reasoning_token_budget)),
            cfg.reasoning_token_budget + cfg.max_tokens,
        ),
    };
    let user_text = match (cfg.persona_role, &cfg.system_prompt) {
        (PersonaRole::User, Some(p)) => format!("{p}\n\n{user_text}"),
        _ => user_text,
    };
    GenerationRequest { user_text, max_tokens, context: GenerationContext::Likert(Box::new(prompt.clone())) }
}

/// One generation, parsed and mapped to a canonical option index.
pub fn sample_choice(
    agent: &dyn AgentBackend,
    prompt: &PresentedPrompt,
    ctx: &RequestContext,
) -> Result<usize, BackendError> {
    choice_for(agent, &likert_request(agent, prompt), prompt, ctx)
}

fn choice_for(
    agent: &dyn AgentBackend,
    request: &GenerationRequest,
    prompt: &PresentedPrompt,
    ctx: &RequestContext,
) -> Result<usize, BackendError> {
    let text = agent.generate(request, ctx)?;
    let pos = parse_label(&text, &prompt.labels).ok_or(BackendError::Parse(text))?;
    Ok(prompt.permutation.canonical_of(pos))
}

fn exact_response(
    agent: &dyn AgentBackend,
    prompt: &PresentedPrompt,
    ctx: &RequestContext,
) -> Result<(OptionDistribution, f64), BackendError> {
    let LabelProbs(raw) = agent.option_probs(prompt, ctx)?;
    let (presented, mass) = OptionDistribution::renormalized(raw)?;
    Ok((cbi::unpermute(presented.probs(), &prompt.permutation)?, mass))
}

/// Score one presented prompt. The result is over canonical options.
///
/// Exact-probability backends are read once (direct) or once per reasoning
/// path with that path's reasoning appended, averaging the distributions.
/// Other backends are sampled `max_samples` times (direct) or
/// `reasoning_paths` times (reasoning); unparseable generations are dropped
/// and resampled until the reject threshold is crossed.
pub fn score_options(
    agent: &dyn AgentBackend,
    prompt: &PresentedPrompt,
    ctx: &RequestContext,
) -> Result<VariantResponse, BackendError> {
    let cfg = agent.config();
    let base = VariantResponse {
        variant_index: prompt.variant.variant_index,
        distribution: OptionDistribution::uniform(),
        source: ResponseSource::ExactProbs,
        sample_count: 0,
        permutation_used: prompt.permutation,
        valid_mass: None,
        rejected_samples: 0,
    };
    if agent.capabilities().exact_probs {
        return match cfg.reasoning_mode {
            ReasoningMode::Direct => {
                let (distribution, mass) = exact_response(agent, prompt, ctx)?;
                Ok(VariantResponse { distribution, valid_mass: Some(mass), ..base })
            }
            ReasoningMode::Reasoning => {
                let request = likert_request(agent, prompt);
                let paths = cfg.reasoning_paths;
                let mut acc = [0.0; OPTION_COUNT];
                let mut mass_acc = 0.0;
                for p in 0..paths {
                    let path_ctx = ctx.reseeded(seed::derive(ctx.seed, &[p as u64]));
                    let reasoning = agent.generate(&request, &path_ctx)?;
                    let mut extended = prompt.clone();
                    extended.full_text = format!("{}\n{}\nAnswer:", request.user_text, reasoning.trim());
                    let (d, mass) = exact_response(agent, &extended, &path_ctx)?;
                    for (a, p) in acc.iter_mut().zip(d.probs()) {
                        *a += p;
                    }
                    mass_acc += mass;
                }
                let (distribution, _) = OptionDistribution::renormalized(acc.map(|a| a / paths as f64))?;
                Ok(VariantResponse { distribution, valid_mass: Some(mass_acc / paths as f64), ..base })
            }
        };
    }
    let wanted = match cfg.reasoning_mode {
        ReasoningMode::Direct => cfg.max_samples,
        ReasoningMode::Reasoning => cfg.reasoning_paths,
    };
    let request = likert_request(agent, prompt);
    let mut choices = Vec::with_capacity(wanted);
    let mut rejected = 0usize;
    let mut draw = 0u64;
    while choices.len() < wanted {
        let draw_ctx = ctx.reseeded(seed::derive(ctx.seed, &[draw]));
        draw += 1;
        match choice_for(agent, &request, prompt, &draw_ctx) {
            Ok(c) => choices.push(c),
            Err(BackendError::Parse(text)) => {
                rejected += 1;
                log::debug!("variant {}: rejected completion {text:?}", prompt.variant.variant_index);
                if rejected > cfg.reject_threshold {
                    return Err(BackendError::TooManyRejects { rejected, threshold: cfg.reject_threshold });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(VariantResponse {
        distribution: cbi::estimate_from_samples(&choices)?,
        source: ResponseSource::Frequencies,
        sample_count: choices.len(),
        rejected_samples: rejected,
        ..base
    })
}

/// Build a backend from its config. `mock` and `sidecar` endpoints map to
/// those implementations; anything else is an OpenAI-compatible chat API.
pub fn from_config(config: &BackendConfig) -> Result<Arc<dyn AgentBackend>, BackendError> {
    config.validate()?;
    match config.endpoint.as_str() {
        "mock" => Ok(Arc::new(make_mock(config.mock.clone().unwrap_or_default(), config.clone())?)),
        "sidecar" => Ok(Arc::new(make_sidecar_client(config.clone())?)),
        "scripted" => Err(BackendError::Config("scripted backends are built in code, not from config".into())),
        _ => Ok(Arc::new(make_chat_api(config.clone())?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbed::{LabelScheme, OptionPermutation, Testbed};

    fn prompt(perm: OptionPermutation) -> PresentedPrompt {
        let v = Testbed::bundled().get("asch_line").unwrap().expand_variants().remove(3);
        PresentedPrompt::new(v, perm)
    }

    #[test]
    fn sample_choice_maps_through_permutation() {
        let agent = ScriptedBackend::texts("s", vec!["A. I completely agree.".into()]);
        let id = prompt(OptionPermutation::identity(LabelScheme::Letters));
        assert_eq!(sample_choice(&agent, &id, &RequestContext::default()).unwrap(), 0);
        let rev = prompt(OptionPermutation::new([4, 3, 2, 1, 0], LabelScheme::Letters).unwrap());
        assert_eq!(sample_choice(&agent, &rev, &RequestContext::default()).unwrap(), 4);

        let agent = ScriptedBackend::texts("s", vec!["(d)".into()]);
        assert_eq!(sample_choice(&agent, &id, &RequestContext::default()).unwrap(), 3);

        let agent = ScriptedBackend::texts("s", vec!["no idea".into()]);
        assert!(matches!(sample_choice(&agent, &id, &RequestContext::default()), Err(BackendError::Parse(_))));
    }

    #[test]
    fn frequency_path_records_sample_count() {
        let agent = ScriptedBackend::texts("s", vec!["B".into(), "C.".into()]);
        let r = score_options(&agent, &prompt(OptionPermutation::identity(LabelScheme::Letters)), &RequestContext::default())
            .unwrap();
        assert_eq!(r.source, ResponseSource::Frequencies);
        assert_eq!(r.sample_count, 10);
        let p = r.distribution.probs();
        assert!((p[1] + p[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unparseable_completions_are_resampled_then_fail() {
        let mut cfg = BackendConfig { max_samples: 4, reject_threshold: 100, ..BackendConfig::default() };
        let agent = ScriptedBackend::texts("s", vec!["hmm".into(), "A".into()]).with_config(cfg.clone());
        let r = score_options(&agent, &prompt(OptionPermutation::identity(LabelScheme::Letters)), &RequestContext::default())
            .unwrap();
        assert_eq!(r.sample_count, 4);
        assert!(r.rejected_samples > 0);
        assert_eq!(r.distribution, OptionDistribution::point(0));

        cfg.reject_threshold = 3;
        let agent = ScriptedBackend::texts("s", vec!["hmm".into()]).with_config(cfg);
        let err = score_options(&agent, &prompt(OptionPermutation::identity(LabelScheme::Letters)), &RequestContext::default())
            .unwrap_err();
        assert_eq!(err, BackendError::TooManyRejects { rejected: 4, threshold: 3 });
    }

    #[test]
    fn reasoning_mode_parses_final_answer() {
        let cfg = BackendConfig { reasoning_mode: ReasoningMode::Reasoning, ..BackendConfig::default() };
        let agent = ScriptedBackend::texts("s", vec!["A seems tempting, but...\nAnswer: (E)".into()]).with_config(cfg);
        let r = score_options(&agent, &prompt(OptionPermutation::identity(LabelScheme::Letters)), &RequestContext::default())
            .unwrap();
        assert_eq!(r.sample_count, 8);
        assert_eq!(r.distribution, OptionDistribution::point(4));
    }

    #[test]
    fn control_kind_parsing() {
        assert_eq!("prompt_numerical".parse::<ControlKind>().unwrap(), ControlKind::PromptNumerical);
        assert_eq!("linear".parse::<ControlKind>().unwrap(), ControlKind::RepeLinear);
        assert_eq!("repe-projection".parse::<ControlKind>().unwrap(), ControlKind::RepeProjection);
        assert!("bogus".parse::<ControlKind>().is_err());
    }

    #[test]
    fn config_defaults() {
        let c = BackendConfig::default();
        assert_eq!(c.temperature, 0.7);
        assert_eq!(c.max_samples, 10);
        assert_eq!(c.reasoning_token_budget, 128);
        assert_eq!(c.reasoning_paths, 8);
        assert_eq!(c.max_in_flight, 8);
        let bad = BackendConfig { reasoning_mode: ReasoningMode::Reasoning, reasoning_token_budget: 0, ..c };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn backoff_is_exponential_and_capped() {
        let p = RetryPolicy { max_retries: 3, initial_backoff_ms: 100, max_backoff_ms: 350, multiplier: 2.0 };
        assert_eq!([p.backoff_ms(0), p.backoff_ms(1), p.backoff_ms(2)], [100, 200, 350]);
    }
}
