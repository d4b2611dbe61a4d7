//! Client for the steering sidecar, a local HTTP service that scores prompts
//! under activation-space or parameter-space control.
//!
//! Endpoints: `GET /health`, `POST /extract`, `POST /stability`,
//! `POST /score`, `POST /generate`, `POST /task/train`, `POST /task/apply`.
//! Every reply carries the model name and seed for the run record.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::http::{join_url, HttpClient};
use super::{
    merged_system_prompt, AgentBackend, BackendConfig, BackendError, BackendStats, Capabilities, ControlKind,
    GenerationRequest, LabelProbs, RequestContext,
};
use crate::regulation::BiasSpec;
use crate::testbed::{PresentedPrompt, OPTION_COUNT};

pub const ENV_SIDECAR_URL: &str = "COBRA_SIDECAR_URL";
const DEFAULT_SIDECAR_URL: &str = "http://127.0.0.1:8765";

/// Steering method names on the wire.
pub fn wire_method(kind: Option<ControlKind>) -> &'static str {
    match kind {
        None | Some(ControlKind::PromptNumerical) => "none",
        Some(ControlKind::RepeLinear) => "linear",
        Some(ControlKind::RepeProjection) => "projection",
        Some(ControlKind::TaskVector) => "task_vector",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    pub options: Vec<String>,
    pub method: String,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub probs: Vec<f64>,
    pub valid_mass: f64,
    pub model_name: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    pub method: String,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub text: String,
    pub model_name: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractRequest {
    pub bias_spec: BiasSpec,
    pub corpus_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractResponse {
    pub vector_id: String,
    pub layers: Vec<usize>,
    pub explained_variance: Vec<f64>,
    pub model_name: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRequest {
    pub vector_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityResponse {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub model_name: String,
    pub seed: u64,
}

/// Adapter training settings for task vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskHyperparams {
    pub rank: u32,
    pub alpha: u32,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: u32,
    pub max_steps: u32,
}

impl Default for TaskHyperparams {
    fn default() -> Self {
        Self { rank: 8, alpha: 16, dropout: 0.05, learning_rate: 2e-4, batch_size: 4, max_steps: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub bias_spec: BiasSpec,
    pub corpus_ref: String,
    pub hyperparams: TaskHyperparams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResponse {
    pub task_id: String,
    pub model_name: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplyRequest {
    pub task_id: String,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplyResponse {
    pub model_name: String,
    pub seed: u64,
}

#[derive(Debug)]
pub struct SidecarBackend {
    config: BackendConfig,
    base_url: String,
    http: HttpClient,
}

/// Connect to the sidecar at `COBRA_SIDECAR_URL` (or the endpoint when it is
/// a URL), checking `/health` first.
pub fn make_sidecar_client(config: BackendConfig) -> Result<SidecarBackend, BackendError> {
    let base = if config.endpoint.starts_with("http://") || config.endpoint.starts_with("https://") {
        config.endpoint.clone()
    } else {
        std::env::var(ENV_SIDECAR_URL).unwrap_or_else(|_| DEFAULT_SIDECAR_URL.to_owned())
    };
    SidecarBackend::connect(config, &base)
}

impl SidecarBackend {
    pub fn connect(config: BackendConfig, base_url: &str) -> Result<Self, BackendError> {
        config.validate()?;
        let http = HttpClient::new(
            Duration::from_secs(config.request_timeout_secs),
            config.retry_policy.clone(),
            Duration::from_millis(config.min_request_interval_ms),
        );
        let this = Self { config, base_url: base_url.trim_end_matches('/').to_owned(), http };
        this.health()?;
        Ok(this)
    }

    pub fn health(&self) -> Result<(), BackendError> {
        self.http.get_ok(&join_url(&self.base_url, "health")).map(|_| ())
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, path: &str, body: &B) -> Result<R, BackendError> {
        self.http.post_json(&join_url(&self.base_url, path), None, body)
    }

    pub fn extract(&self, bias_spec: &BiasSpec, corpus_ref: &str) -> Result<ExtractResponse, BackendError> {
        self.post("extract", &ExtractRequest { bias_spec: bias_spec.clone(), corpus_ref: corpus_ref.to_owned() })
    }

    pub fn stability(&self, vector_id: &str) -> Result<StabilityResponse, BackendError> {
        let r: StabilityResponse = self.post("stability", &StabilityRequest { vector_id: vector_id.to_owned() })?;
        if !(r.lambda_min.is_finite() && r.lambda_max.is_finite() && r.lambda_min < r.lambda_max) {
            return Err(BackendError::Malformed(format!(
                "stability range [{}, {}] is empty",
                r.lambda_min, r.lambda_max
            )));
        }
        Ok(r)
    }

    pub fn train_task(
        &self,
        bias_spec: &BiasSpec,
        corpus_ref: &str,
        hyperparams: TaskHyperparams,
    ) -> Result<TrainResponse, BackendError> {
        self.post("task/train", &TrainRequest { bias_spec: bias_spec.clone(), corpus_ref: corpus_ref.to_owned(), hyperparams })
    }

    pub fn apply_task(&self, task_id: &str, lambda: f64) -> Result<ApplyResponse, BackendError> {
        self.post("task/apply", &ApplyRequest { task_id: task_id.to_owned(), lambda })
    }

    fn control_fields(ctx: &RequestContext) -> (String, f64, Option<String>, Option<String>) {
        match &ctx.control {
            Some(c) if c.kind.is_steering() => {
                (wire_method(Some(c.kind)).to_owned(), c.coefficient, c.vector_id.clone(), c.task_id.clone())
            }
            _ => (wire_method(None).to_owned(), 0.0, None, None),
        }
    }
}

impl AgentBackend for SidecarBackend {
    fn id(&self) -> String {
        format!("sidecar:{}", self.config.model_name)
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { exact_probs: true, supports_system_prompt: true, supports_steering: true }
    }

    fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn option_probs(&self, prompt: &PresentedPrompt, ctx: &RequestContext) -> Result<LabelProbs, BackendError> {
        let (method, lambda, vector_id, task_id) = Self::control_fields(ctx);
        let body = ScoreRequest {
            prompt: prompt.full_text.clone(),
            system_prompt: merged_system_prompt(&self.config, ctx),
            options: prompt.labels.to_vec(),
            method,
            lambda,
            vector_id,
            task_id,
            seed: ctx.seed,
        };
        let r: ScoreResponse = self.post("score", &body)?;
        let probs: [f64; OPTION_COUNT] = r
            .probs
            .as_slice()
            .try_into()
            .map_err(|_| BackendError::Malformed(format!("expected {OPTION_COUNT} probabilities, got {}", r.probs.len())))?;
        Ok(LabelProbs(probs))
    }

    fn generate(&self, request: &GenerationRequest, ctx: &RequestContext) -> Result<String, BackendError> {
        let (method, lambda, vector_id, task_id) = Self::control_fields(ctx);
        let body = GenerateRequest {
            prompt: request.user_text.clone(),
            system_prompt: merged_system_prompt(&self.config, ctx),
            method,
            lambda,
            vector_id,
            task_id,
            temperature: self.config.temperature,
            max_tokens: request.max_tokens,
            seed: ctx.seed,
        };
        let r: GenerateResponse = self.post("generate", &body)?;
        Ok(r.text)
    }

    fn stats(&self) -> BackendStats {
        self.http.stats.snapshot()
    }
}
