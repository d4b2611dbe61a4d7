//! OpenAI-compatible chat-completions backend.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::http::{join_url, HttpClient};
use super::{
    merged_system_prompt, AgentBackend, BackendConfig, BackendError, BackendStats, Capabilities, GenerationRequest,
    LabelProbs, RequestContext,
};
use crate::testbed::{PresentedPrompt, OPTION_COUNT};

pub const ENV_API_KEY: &str = "COBRA_API_KEY";
pub const ENV_BASE_URL: &str = "COBRA_BASE_URL";
const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
const TOP_LOGPROBS: u32 = 20;

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    logprobs: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_logprobs: Option<u32>,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ReplyMessage,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Debug, Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Debug, Deserialize)]
struct TokenLogprob {
    #[serde(default)]
    top_logprobs: Vec<TopLogprob>,
}

#[derive(Debug, Deserialize)]
struct TopLogprob {
    token: String,
    logprob: f64,
}

#[derive(Debug)]
pub struct ChatApiBackend {
    config: BackendConfig,
    url: String,
    api_key: String,
    http: HttpClient,
}

/// Build from config, reading the key from `COBRA_API_KEY` and the base URL
/// from the endpoint (when it is a URL) or `COBRA_BASE_URL`.
pub fn make_chat_api(config: BackendConfig) -> Result<ChatApiBackend, BackendError> {
    let base = if config.endpoint.starts_with("http://") || config.endpoint.starts_with("https://") {
        config.endpoint.clone()
    } else {
        std::env::var(ENV_BASE_URL).unwrap_or_else(|_| DEFAULT_BASE_URL.to_owned())
    };
    let key = std::env::var(ENV_API_KEY)
        .map_err(|_| BackendError::Config(format!("{ENV_API_KEY} is not set")))?;
    ChatApiBackend::new(config, &base, &key)
}

impl ChatApiBackend {
    pub fn new(config: BackendConfig, base_url: &str, api_key: &str) -> Result<Self, BackendError> {
        config.validate()?;
        if config.model_name.is_empty() {
            return Err(BackendError::Config("model_name is required for a chat API backend".into()));
        }
        let http = HttpClient::new(
            Duration::from_secs(config.request_timeout_secs),
            config.retry_policy.clone(),
            Duration::from_millis(config.min_request_interval_ms),
        );
        Ok(Self { url: join_url(base_url, "chat/completions"), api_key: api_key.to_owned(), config, http })
    }

    fn complete(
        &self,
        user_text: &str,
        ctx: &RequestContext,
        max_tokens: u32,
        logprobs: bool,
    ) -> Result<Choice, BackendError> {
        if let Some(c) = &ctx.control {
            if c.kind.is_steering() {
                return Err(BackendError::Unsupported(format!("{} needs model internals", c.kind)));
            }
        }
        let system = merged_system_prompt(&self.config, ctx);
        let mut messages = Vec::with_capacity(2);
        if let Some(s) = system.as_deref() {
            messages.push(ChatMessage { role: "system", content: s });
        }
        messages.push(ChatMessage { role: "user", content: user_text });
        let body = ChatRequest {
            model: &self.config.model_name,
            messages,
            temperature: self.config.temperature,
            max_tokens,
            seed: ctx.seed,
            logprobs: logprobs.then_some(true),
            top_logprobs: logprobs.then_some(TOP_LOGPROBS),
        };
        let resp: ChatResponse = self.http.post_json(&self.url, Some(&self.api_key), &body)?;
        resp.choices.into_iter().next().ok_or_else(|| BackendError::Malformed("reply has no choices".into()))
    }
}

fn label_of_token(token: &str, labels: &[String; OPTION_COUNT]) -> Option<usize> {
    let t = token.trim().trim_matches(|c: char| !c.is_ascii_alphanumeric());
    labels.iter().position(|l| l.eq_ignore_ascii_case(t))
}

impl AgentBackend for ChatApiBackend {
    fn id(&self) -> String {
        format!("api:{}", self.config.model_name)
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { exact_probs: self.config.logprobs, supports_system_prompt: true, supports_steering: false }
    }

    fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn option_probs(&self, prompt: &PresentedPrompt, ctx: &RequestContext) -> Result<LabelProbs, BackendError> {
        if !self.config.logprobs {
            return Err(BackendError::Unsupported("logprobs disabled for this endpoint".into()));
        }
        let choice = self.complete(&prompt.full_text, ctx, 1, true)?;
        let first = choice
            .logprobs
            .and_then(|l| l.content)
            .and_then(|c| c.into_iter().next())
            .ok_or_else(|| BackendError::Malformed("reply carries no token logprobs".into()))?;
        let mut probs = [0.0; OPTION_COUNT];
        for t in first.top_logprobs {
            if let Some(pos) = label_of_token(&t.token, &prompt.labels) {
                probs[pos] += t.logprob.exp();
            }
        }
        Ok(LabelProbs(probs))
    }

    fn generate(&self, request: &GenerationRequest, ctx: &RequestContext) -> Result<String, BackendError> {
        let choice = self.complete(&request.user_text, ctx, request.max_tokens, false)?;
        Ok(choice.message.content.unwrap_or_default())
    }

    fn stats(&self) -> BackendStats {
        self.http.stats.snapshot()
    }
}
