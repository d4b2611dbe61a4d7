//! Control methods and the closed measurement loop.
//!
//! A control method turns a coefficient λ into a change of agent behaviour:
//! a numeric system prompt for prompt-numerical control, or a steering
//! handle attached to every sidecar request. [`measure`] scores a paradigm,
//! [`sweep`] traces CBI over a coefficient grid and [`calibrate`] searches
//! for the coefficient that yields a target CBI.

mod calibrate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    self, AgentBackend, AppliedControl, BackendConfig, BackendError, BackendStats, Capabilities, ControlKind,
    GenerationRequest, LabelProbs, RequestContext,
};
use crate::cbi::{self, CbiError, CbiMeasurement, VariantResponse};
use crate::exec::par_map;
use crate::seed;
use crate::testbed::{randomize_presentation, BiasType, ParadigmSpec, PresentedPrompt, TestbedError};

pub use calibrate::{calibrate, CalibrationOptions, CalibrationResult, CalibrationStep};

/// Largest share of variants that may fail before a measurement is rejected.
pub const MAX_FAILED_VARIANT_FRACTION: f64 = 0.05;

/// Step of the prompt-numerical level, as a fraction of the full range.
pub const PROMPT_NUMERICAL_STEP: f64 = 0.05;

#[derive(Debug, Error)]
pub enum RegulationError {
    #[error("coefficient {coefficient} outside the {method} domain [{min}, {max}]")]
    Domain { method: ControlKind, coefficient: f64, min: f64, max: f64 },
    #[error("{method} is not supported by backend {backend}: {reason}")]
    Capability { method: ControlKind, backend: String, reason: String },
    #[error("invalid coefficient grid: {0}")]
    Grid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{failed} of {total} variants of {paradigm} failed: {first_error}")]
    TooManyFailures { paradigm: String, failed: usize, total: usize, first_error: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Cbi(#[from] CbiError),
    #[error(transparent)]
    Testbed(#[from] TestbedError),
}

/// Natural-language description of one bias used to build control prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasSpec {
    pub bias: BiasType,
    /// e.g. "authority bias".
    pub name_text: String,
    /// Behaviour at level 0%.
    pub no_pattern: String,
    /// Behaviour at level 100%.
    pub max_pattern: String,
    /// Opposite behaviour, for contrastive extraction.
    pub anti_pattern: String,
}

impl BiasSpec {
    pub fn new(bias: BiasType, name_text: &str, no_pattern: &str, max_pattern: &str, anti_pattern: &str) -> Self {
        Self {
            bias,
            name_text: name_text.into(),
            no_pattern: no_pattern.into(),
            max_pattern: max_pattern.into(),
            anti_pattern: anti_pattern.into(),
        }
    }

    pub fn validate(&self) -> Result<(), RegulationError> {
        for (field, v) in [
            ("name_text", &self.name_text),
            ("no_pattern", &self.no_pattern),
            ("max_pattern", &self.max_pattern),
            ("anti_pattern", &self.anti_pattern),
        ] {
            if v.trim().is_empty() {
                return Err(RegulationError::InvalidArgument(format!("bias spec {field} is empty")));
            }
        }
        Ok(())
    }

    /// Shipped spec for a built-in bias type.
    pub fn builtin(bias: &BiasType) -> Option<BiasSpec> {
        let spec = match bias {
            BiasType::Authority => BiasSpec::new(
                BiasType::Authority,
                "authority bias",
                "never trust authority figures",
                "always trust authority figures",
                "judge every claim on its evidence and disregard who makes it",
            ),
            BiasType::Bandwagon => BiasSpec::new(
                BiasType::Bandwagon,
                "bandwagon effect",
                "never follow what the majority does",
                "always follow what the majority does",
                "form your own judgement and ignore what the majority does",
            ),
            BiasType::Confirmation => BiasSpec::new(
                BiasType::Confirmation,
                "confirmation bias",
                "never favor information that confirms your existing beliefs",
                "always favor information that confirms your existing beliefs",
                "actively seek out information that could disprove your beliefs",
            ),
            BiasType::Framing => BiasSpec::new(
                BiasType::Framing,
                "framing effect",
                "never let the way a choice is framed change your decision",
                "always let the way a choice is framed change your decision",
                "restate every choice in neutral terms before deciding",
            ),
            BiasType::Custom(_) => return None,
        };
        Some(spec)
    }

    pub fn builtins() -> Vec<BiasSpec> {
        [BiasType::Authority, BiasType::Bandwagon, BiasType::Confirmation, BiasType::Framing]
            .iter()
            .filter_map(Self::builtin)
            .collect()
    }
}

/// Integer percent level for a normalized coefficient, on 5% steps.
pub fn prompt_numerical_level(coefficient: f64) -> Result<u32, RegulationError> {
    if !(0.0..=1.0).contains(&coefficient) {
        return Err(RegulationError::Domain {
            method: ControlKind::PromptNumerical,
            coefficient,
            min: 0.0,
            max: 1.0,
        });
    }
    Ok((coefficient * 20.0).round() as u32 * 5)
}

/// System prompt for prompt-numerical control.
pub fn prompt_numerical_text(spec: &BiasSpec, coefficient: f64) -> Result<String, RegulationError> {
    let level = prompt_numerical_level(coefficient)?;
    Ok(format!(
        "Pretend you have {name} at level {level}% (where 0% = {no}, 100% = {max}). \
         Each level increases bias by exactly 5%. Respond in accordance with this precise level {level}%.",
        name = spec.name_text,
        no = spec.no_pattern,
        max = spec.max_pattern,
    ))
}

/// Plain natural-language control without a numeric level.
pub fn natural_language_text(spec: &BiasSpec) -> String {
    format!("Pretend you have completely {}.", spec.name_text)
}

/// Persona prompt of the form "You are a user with {degree} {bias name}."
pub fn degree_persona_text(spec: &BiasSpec, degree: &str) -> String {
    format!("You are a user with {degree} {}.", title_case(&spec.name_text))
}

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut c = w.chars();
            c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
        })
        .collect::<Vec<String>>()
        .join(" ")
}

/// Coefficient bounds reported by the sidecar for a steering handle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRange {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlMethod {
    pub kind: ControlKind,
    pub domain: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantization: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
}

impl ControlMethod {
    pub fn prompt_numerical() -> Self {
        Self {
            kind: ControlKind::PromptNumerical,
            domain: (0.0, 1.0),
            quantization: Some(PROMPT_NUMERICAL_STEP),
            vector_id: None,
            task_id: None,
        }
    }

    pub fn steering(kind: ControlKind, range: StabilityRange) -> Result<Self, RegulationError> {
        if !kind.is_steering() {
            return Err(RegulationError::InvalidArgument(format!("{kind} is not a steering method")));
        }
        if !(range.lambda_min.is_finite() && range.lambda_max.is_finite() && range.lambda_min < range.lambda_max) {
            return Err(RegulationError::InvalidArgument(format!(
                "empty stability range [{}, {}]",
                range.lambda_min, range.lambda_max
            )));
        }
        Ok(Self { kind, domain: (range.lambda_min, range.lambda_max), quantization: None, vector_id: None, task_id: None })
    }

    /// Default method of a kind: prompt-numerical on [0, 1] with 5% steps,
    /// steering kinds on the unit interval until a stability range is known.
    pub fn default_for(kind: ControlKind) -> Self {
        match kind {
            ControlKind::PromptNumerical => Self::prompt_numerical(),
            _ => Self::steering(kind, StabilityRange { lambda_min: 0.0, lambda_max: 1.0 }).expect("valid unit range"),
        }
    }

    pub fn with_vector_id(mut self, id: &str) -> Self {
        self.vector_id = Some(id.to_owned());
        self
    }

    pub fn with_task_id(mut self, id: &str) -> Self {
        self.task_id = Some(id.to_owned());
        self
    }

    pub fn check(&self, coefficient: f64) -> Result<(), RegulationError> {
        let (min, max) = self.domain;
        let slack = 1e-12 * (max - min).abs().max(1.0);
        if coefficient.is_finite() && coefficient >= min - slack && coefficient <= max + slack {
            Ok(())
        } else {
            Err(RegulationError::Domain { method: self.kind, coefficient, min, max })
        }
    }

    /// Round to the quantization grid anchored at the domain minimum.
    pub fn snap(&self, coefficient: f64) -> f64 {
        let (min, max) = self.domain;
        let c = coefficient.clamp(min, max);
        match self.quantization {
            Some(q) if q > 0.0 => {
                let steps = ((c - min) / q).round();
                (min + steps * q).clamp(min, max)
            }
            _ => c,
        }
    }
}

/// An agent with a control applied to every request. The wrapped agent is
/// not modified.
#[derive(Debug, Clone)]
pub struct ControlledAgent<A> {
    inner: A,
    system_prompt: Option<String>,
    control: Option<AppliedControl>,
}

impl<A: AgentBackend> ControlledAgent<A> {
    /// Agent with extra system text and no coefficient, e.g. a persona or a
    /// natural-language control prompt.
    pub fn with_system_prompt(inner: A, text: &str) -> Result<Self, RegulationError> {
        if !inner.capabilities().supports_system_prompt {
            return Err(RegulationError::Capability {
                method: ControlKind::PromptNumerical,
                backend: inner.id(),
                reason: "no system prompt support".into(),
            });
        }
        Ok(Self { inner, system_prompt: Some(text.to_owned()), control: None })
    }

    pub fn applied(&self) -> Option<&AppliedControl> {
        self.control.as_ref()
    }

    pub fn inner(&self) -> &A {
        &self.inner
    }

    fn context(&self, ctx: &RequestContext) -> RequestContext {
        let system_prompt = match (&ctx.system_prompt, &self.system_prompt) {
            (Some(a), Some(b)) => Some(format!("{a}\n\n{b}")),
            (a, b) => a.clone().or_else(|| b.clone()),
        };
        RequestContext { seed: ctx.seed, system_prompt, control: self.control.clone().or_else(|| ctx.control.clone()) }
    }
}

/// Wrap `agent` so that every request carries `method` at `coefficient`.
pub fn apply_control<A: AgentBackend>(
    agent: A,
    method: &ControlMethod,
    spec: &BiasSpec,
    coefficient: f64,
) -> Result<ControlledAgent<A>, RegulationError> {
    method.check(coefficient)?;
    let caps = agent.capabilities();
    let system_prompt = if method.kind.is_steering() {
        if !caps.supports_steering {
            return Err(RegulationError::Capability {
                method: method.kind,
                backend: agent.id(),
                reason: "steering needs access to model internals".into(),
            });
        }
        None
    } else {
        if !caps.supports_system_prompt {
            return Err(RegulationError::Capability {
                method: method.kind,
                backend: agent.id(),
                reason: "no system prompt support".into(),
            });
        }
        Some(prompt_numerical_text(spec, coefficient)?)
    };
    let control = AppliedControl {
        kind: method.kind,
        coefficient,
        vector_id: method.vector_id.clone(),
        task_id: method.task_id.clone(),
    };
    Ok(ControlledAgent { inner: agent, system_prompt, control: Some(control) })
}

impl<A: AgentBackend> AgentBackend for ControlledAgent<A> {
    fn id(&self) -> String {
        match &self.control {
            Some(c) => format!("{}+{}@{}", self.inner.id(), c.kind, c.coefficient),
            None => format!("{}+prompt", self.inner.id()),
        }
    }
    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }
    fn config(&self) -> &BackendConfig {
        self.inner.config()
    }
    fn option_probs(&self, prompt: &PresentedPrompt, ctx: &RequestContext) -> Result<LabelProbs, BackendError> {
        self.inner.option_probs(prompt, &self.context(ctx))
    }
    fn generate(&self, request: &GenerationRequest, ctx: &RequestContext) -> Result<String, BackendError> {
        self.inner.generate(request, &self.context(ctx))
    }
    fn stats(&self) -> BackendStats {
        self.inner.stats()
    }
}

/// A variant that could not be scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantFailure {
    pub paradigm_id: String,
    pub variant_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureOutcome {
    pub measurement: CbiMeasurement,
    pub responses: Vec<VariantResponse>,
    pub failures: Vec<VariantFailure>,
}

/// Seed of the option presentation for one variant.
pub fn presentation_seed(master: u64, paradigm_id: &str, variant_index: usize) -> u64 {
    seed::derive(master, &[seed::hash_str(paradigm_id), variant_index as u64, 0])
}

/// Seed of the backend requests for one variant.
pub fn request_seed(master: u64, paradigm_id: &str, variant_index: usize) -> u64 {
    seed::derive(master, &[seed::hash_str(paradigm_id), variant_index as u64, 1])
}

/// Measure with per-variant failures reported. Fails when more than 5% of
/// variants could not be scored.
pub fn measure_detailed(
    agent: &dyn AgentBackend,
    paradigm: &ParadigmSpec,
    seed: u64,
) -> Result<MeasureOutcome, RegulationError> {
    let variants = paradigm.expand_variants();
    let results = par_map(&variants, agent.config().max_in_flight, |_, v| {
        let prompt = randomize_presentation(v, presentation_seed(seed, &paradigm.id, v.variant_index));
        let ctx = RequestContext::with_seed(request_seed(seed, &paradigm.id, v.variant_index));
        backend::score_options(agent, &prompt, &ctx)
    });
    let total = variants.len();
    let mut responses = Vec::with_capacity(total);
    let mut failures = Vec::new();
    for (v, r) in variants.iter().zip(results) {
        match r {
            Ok(resp) => responses.push(resp),
            Err(e) => {
                log::warn!("{} variant {}: {e}", paradigm.id, v.variant_index);
                failures.push(VariantFailure {
                    paradigm_id: paradigm.id.clone(),
                    variant_index: v.variant_index,
                    error: e.to_string(),
                });
            }
        }
    }
    if failures.len() as f64 > MAX_FAILED_VARIANT_FRACTION * total as f64 || responses.is_empty() {
        return Err(RegulationError::TooManyFailures {
            paradigm: paradigm.id.clone(),
            failed: failures.len(),
            total,
            first_error: failures.first().map(|f| f.error.clone()).unwrap_or_default(),
        });
    }
    let measurement = if failures.is_empty() {
        cbi::compute_cbi(&paradigm.id, &responses, total)?
    } else {
        cbi::compute_cbi_over(&paradigm.id, &responses)?
    };
    Ok(MeasureOutcome { measurement, responses, failures })
}

/// CBI of `agent` on `paradigm`, with option order and labels randomized per
/// variant from `seed`.
pub fn measure(agent: &dyn AgentBackend, paradigm: &ParadigmSpec, seed: u64) -> Result<CbiMeasurement, RegulationError> {
    measure_detailed(agent, paradigm, seed).map(|o| o.measurement)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub coefficient: f64,
    pub cbi: CbiMeasurement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlCurve {
    pub method: ControlKind,
    pub paradigm_id: String,
    pub backend_id: String,
    pub points: Vec<CurvePoint>,
}

impl ControlCurve {
    pub fn new(
        method: ControlKind,
        paradigm_id: &str,
        backend_id: &str,
        points: Vec<CurvePoint>,
    ) -> Result<Self, RegulationError> {
        let curve = Self { method, paradigm_id: paradigm_id.into(), backend_id: backend_id.into(), points };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<(), RegulationError> {
        check_grid(&self.coefficients())
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.coefficient).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.cbi.value).collect()
    }
}

pub fn check_grid(grid: &[f64]) -> Result<(), RegulationError> {
    if grid.len() < 2 {
        return Err(RegulationError::Grid(format!("need at least 2 coefficients, got {}", grid.len())));
    }
    if grid.iter().any(|c| !c.is_finite()) {
        return Err(RegulationError::Grid("coefficients must be finite".into()));
    }
    if let Some(w) = grid.windows(2).find(|w| w[0] >= w[1]) {
        return Err(RegulationError::Grid(format!("coefficients must increase strictly ({} then {})", w[0], w[1])));
    }
    Ok(())
}

/// Inclusive grid `a, a+step, ..., b`, tolerant of float drift at the end.
pub fn grid_from_range(a: f64, b: f64, step: f64) -> Result<Vec<f64>, RegulationError> {
    if !(a.is_finite() && b.is_finite() && step.is_finite() && step > 0.0 && a < b) {
        return Err(RegulationError::Grid(format!("invalid range {a}:{b}:{step}")));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    let mut g: Vec<f64> = (0..=n).map(|i| a + i as f64 * step).collect();
    // snap values like 0.30000000000000004 onto the decimal grid
    for v in &mut g {
        *v = (*v * 1e9).round() / 1e9;
    }
    Ok(g)
}

/// One measurement per grid coefficient, in grid order.
pub fn sweep(
    agent: &dyn AgentBackend,
    method: &ControlMethod,
    spec: &BiasSpec,
    paradigm: &ParadigmSpec,
    grid: &[f64],
    seed: u64,
) -> Result<ControlCurve, RegulationError> {
    sweep_detailed(agent, method, spec, paradigm, grid, seed).map(|s| s.curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub curve: ControlCurve,
    pub failures: Vec<VariantFailure>,
    pub rejected_samples: usize,
}

/// [`sweep`] with dropped variants and parse rejects reported.
pub fn sweep_detailed(
    agent: &dyn AgentBackend,
    method: &ControlMethod,
    spec: &BiasSpec,
    paradigm: &ParadigmSpec,
    grid: &[f64],
    seed: u64,
) -> Result<SweepOutcome, RegulationError> {
    check_grid(grid)?;
    for &c in grid {
        method.check(c)?;
    }
    // Points run one after another: sidecar methods mutate loaded model state.
    let mut points = Vec::with_capacity(grid.len());
    let mut failures = Vec::new();
    let mut rejected_samples = 0;
    for &coefficient in grid {
        let controlled = apply_control(agent, method, spec, coefficient)?;
        let outcome = measure_detailed(&controlled, paradigm, seed)?;
        rejected_samples += outcome.responses.iter().map(|r| r.rejected_samples).sum::<usize>();
        failures.extend(outcome.failures);
        points.push(CurvePoint { coefficient, cbi: outcome.measurement });
    }
    let curve = ControlCurve::new(method.kind, &paradigm.id, &agent.id(), points)?;
    Ok(SweepOutcome { curve, failures, rejected_samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{make_mock, LambdaResponse, MockAgentSpec, ScriptedBackend};
    use crate::testbed::Testbed;

    #[test]
    fn prompt_numerical_levels() {
        let spec = BiasSpec::builtin(&BiasType::Authority).unwrap();
        let full = prompt_numerical_text(&spec, 1.0).unwrap();
        assert!(full.contains("at level 100%"));
        assert!(full.contains("always trust authority figures"));
        assert!(full.contains("Each level increases bias by exactly 5%"));
        assert!(prompt_numerical_text(&spec, 0.0).unwrap().contains("at level 0%"));
        assert_eq!(prompt_numerical_level(0.426).unwrap(), 45);
        assert_eq!(prompt_numerical_level(0.424).unwrap(), 40);
        assert!(prompt_numerical_text(&spec, 1.01).is_err());
        assert_eq!(prompt_numerical_text(&spec, 0.3).unwrap(), prompt_numerical_text(&spec, 0.3).unwrap());
    }

    #[test]
    fn builtin_specs_cover_all_biases() {
        let all = BiasSpec::builtins();
        assert_eq!(all.len(), 4);
        for s in &all {
            s.validate().unwrap();
        }
        let b = BiasSpec::builtin(&BiasType::Bandwagon).unwrap();
        assert_eq!(degree_persona_text(&b, "much"), "You are a user with much Bandwagon Effect.");
    }

    #[test]
    fn steering_on_chat_backend_is_a_capability_error() {
        let agent = ScriptedBackend::canonical("s", 0);
        let spec = BiasSpec::builtin(&BiasType::Authority).unwrap();
        let err = apply_control(&agent, &ControlMethod::default_for(ControlKind::RepeLinear), &spec, 0.5).unwrap_err();
        assert!(matches!(err, RegulationError::Capability { .. }));
    }

    #[test]
    fn out_of_range_coefficient_names_bounds() {
        let agent = make_mock(MockAgentSpec::default(), Default::default()).unwrap();
        let spec = BiasSpec::builtin(&BiasType::Authority).unwrap();
        let m = ControlMethod::steering(ControlKind::RepeProjection, StabilityRange { lambda_min: -2.0, lambda_max: 3.0 })
            .unwrap();
        let err = apply_control(&agent, &m, &spec, 3.5).unwrap_err().to_string();
        assert!(err.contains("[-2, 3]"), "{err}");
    }

    #[test]
    fn prompt_numerical_on_mock_follows_response() {
        let spec_m = MockAgentSpec {
            base_bias: 1.0,
            lambda_response: LambdaResponse::Linear { intercept: 0.0, slope: 4.0 },
            ..Default::default()
        };
        let agent = make_mock(spec_m, Default::default()).unwrap();
        let tb = Testbed::bundled();
        let p = tb.get("stanford_prison").unwrap();
        let spec = BiasSpec::builtin(&BiasType::Authority).unwrap();
        assert!((measure(&agent, p, 7).unwrap().value - 1.0).abs() < 1e-9);
        let c = apply_control(&agent, &ControlMethod::prompt_numerical(), &spec, 0.65).unwrap();
        assert!((measure(&c, p, 7).unwrap().value - 2.6).abs() < 1e-9);
        assert!(c.id().contains("prompt_numerical@0.65"));
    }

    #[test]
    fn sweep_of_identity_response() {
        let spec_m = MockAgentSpec {
            lambda_response: LambdaResponse::Linear { intercept: 0.0, slope: 4.0 },
            ..Default::default()
        };
        let agent = make_mock(spec_m, Default::default()).unwrap();
        let tb = Testbed::bundled();
        let spec = BiasSpec::builtin(&BiasType::Authority).unwrap();
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        let curve =
            sweep(&agent, &ControlMethod::prompt_numerical(), &spec, tb.get("milgram_obedience").unwrap(), &grid, 1)
                .unwrap();
        for (v, want) in curve.values().iter().zip([0.0, 1.0, 2.0, 3.0, 4.0]) {
            assert!((v - want).abs() < 1e-9);
        }
        assert!(matches!(
            sweep(&agent, &ControlMethod::prompt_numerical(), &spec, tb.get("asch_line").unwrap(), &[0.5], 1),
            Err(RegulationError::Grid(_))
        ));
    }

    #[test]
    fn grid_helper() {
        let g = grid_from_range(0.0, 1.0, 0.1).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[3], 0.3);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(grid_from_range(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn scripted_all_last_option_measures_zero() {
        let agent = ScriptedBackend::canonical("s", 4);
        let tb = Testbed::bundled();
        let m = measure(&agent, tb.get("hotel_towel").unwrap(), 3).unwrap();
        assert_eq!(m.value, 0.0);
    }

    #[test]
    fn failures_above_five_percent_reject_the_measurement() {
        let agent = ScriptedBackend::texts("s", vec!["unparseable".into()])
            .with_config(BackendConfig { reject_threshold: 0, ..Default::default() });
        let tb = Testbed::bundled();
        let err = measure(&agent, tb.get("asch_line").unwrap(), 3).unwrap_err();
        assert!(matches!(err, RegulationError::TooManyFailures { failed: 15, total: 15, .. }));
    }
}
