//! Backend with canned replies, for tests and dry runs.

use super::{
    AgentBackend, BackendConfig, BackendError, BackendStats, Capabilities, GenerationContext, GenerationRequest,
    LabelProbs, RequestContext, StatsCounter,
};
use crate::testbed::{PresentedPrompt, OPTION_COUNT};

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptedReply {
    /// Completions picked by request seed, cycling through the list.
    Texts(Vec<String>),
    /// Always choose this canonical option; exposes exact probabilities.
    Canonical(usize),
}

#[derive(Debug)]
pub struct ScriptedBackend {
    id: String,
    reply: ScriptedReply,
    post_text: String,
    config: BackendConfig,
    stats: StatsCounter,
}

impl ScriptedBackend {
    pub fn texts(id: &str, texts: Vec<String>) -> Self {
        Self::new(id, ScriptedReply::Texts(texts))
    }

    pub fn canonical(id: &str, option: usize) -> Self {
        Self::new(id, ScriptedReply::Canonical(option.min(OPTION_COUNT - 1)))
    }

    fn new(id: &str, reply: ScriptedReply) -> Self {
        Self {
            id: id.to_owned(),
            reply,
            post_text: "Spent the afternoon at the library and walked home.".into(),
            config: BackendConfig { endpoint: "scripted".into(), model_name: id.to_owned(), ..BackendConfig::default() },
            stats: StatsCounter::default(),
        }
    }

    pub fn with_config(mut self, config: BackendConfig) -> Self {
        self.config = config;
        self
    }

    /// Text returned for feed and free-form requests.
    pub fn with_post_text(mut self, text: &str) -> Self {
        self.post_text = text.to_owned();
        self
    }
}

impl AgentBackend for ScriptedBackend {
    fn id(&self) -> String {
        format!("scripted:{}", self.id)
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            exact_probs: matches!(self.reply, ScriptedReply::Canonical(_)),
            supports_system_prompt: true,
            supports_steering: false,
        }
    }

    fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn option_probs(&self, prompt: &PresentedPrompt, _ctx: &RequestContext) -> Result<LabelProbs, BackendError> {
        self.stats.request();
        match self.reply {
            ScriptedReply::Canonical(c) => {
                let mut p = [0.0; OPTION_COUNT];
                p[prompt.permutation.position_of(c)] = 1.0;
                Ok(LabelProbs(p))
            }
            ScriptedReply::Texts(_) => Err(BackendError::Unsupported("text-scripted backend has no probabilities".into())),
        }
    }

    fn generate(&self, request: &GenerationRequest, ctx: &RequestContext) -> Result<String, BackendError> {
        self.stats.request();
        if let Some(c) = &ctx.control {
            if c.kind.is_steering() {
                return Err(BackendError::Unsupported(format!("{} on a scripted backend", c.kind)));
            }
        }
        match (&request.context, &self.reply) {
            (GenerationContext::Likert(_), ScriptedReply::Texts(texts)) if !texts.is_empty() => {
                Ok(texts[(ctx.seed % texts.len() as u64) as usize].clone())
            }
            (GenerationContext::Likert(prompt), ScriptedReply::Canonical(c)) => {
                let pos = prompt.permutation.position_of(*c);
                Ok(format!("{}. {}", prompt.labels[pos], prompt.variant.canonical_options.options[*c]))
            }
            (GenerationContext::Likert(_), _) => Ok(String::new()),
            _ => Ok(self.post_text.clone()),
        }
    }

    fn stats(&self) -> BackendStats {
        self.stats.snapshot()
    }
}
