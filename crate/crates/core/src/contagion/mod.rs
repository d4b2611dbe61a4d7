//! Emotional contagion dose-response experiments.
//!
//! Agents with known CBI read a feed with a controlled number of negative
//! posts, then write a post of their own. The sentiment of that post, as a
//! function of the negative-post count, is the dose-response curve.

mod corpus;
pub mod lexicon;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{AgentBackend, BackendError, GenerationContext, GenerationRequest, RequestContext};
use crate::exec::par_map;
use crate::regulation::{
    self, apply_control, calibrate, degree_persona_text, BiasSpec, CalibrationOptions, ControlMethod, ControlledAgent,
    RegulationError,
};
use crate::seed;
use crate::testbed::{BiasType, Testbed};

pub use corpus::{build_feed, Post, PostCorpus, Valence, CORPUS_GENERATION_PROMPT};
pub use lexicon::SentimentTriple;

/// Highest negative-post count in a feed.
pub const MAX_DOSE: usize = 15;

/// Largest share of failed trials a cell may have.
pub const MAX_TRIAL_LOSS: f64 = 0.2;

#[derive(Debug, Error)]
pub enum ContagionError {
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error(
        "corpus too small: need {negative_needed} negative (have {negative_available}) and \
         {filler_needed} neutral (have {filler_available}) posts"
    )]
    InsufficientCorpus {
        negative_needed: usize,
        negative_available: usize,
        filler_needed: usize,
        filler_available: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("scorer {scorer}: {message}")]
    Scorer { scorer: String, message: String },
    #[error(transparent)]
    Regulation(#[from] RegulationError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

pub trait SentimentScorer: Send + Sync {
    fn id(&self) -> String;
    fn score(&self, text: &str) -> Result<SentimentTriple, ContagionError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LexiconScorer;

impl SentimentScorer for LexiconScorer {
    fn id(&self) -> String {
        "lexicon".into()
    }
    fn score(&self, text: &str) -> Result<SentimentTriple, ContagionError> {
        Ok(lexicon::score_text(text))
    }
}

/// Sentiment triple of `text` under the built-in lexicon.
pub fn lexicon_score(text: &str) -> SentimentTriple {
    lexicon::score_text(text)
}

/// Instruction shown after the feed.
pub const POST_INSTRUCTION: &str = "You have just scrolled through your social media feed above. Now write a short \
post of your own (one to three sentences) about whatever is on your mind today. Reply with the post text only.";

pub fn feed_prompt(feed: &[Post]) -> String {
    let mut s = String::from("Here is your social media feed:\n");
    for (i, p) in feed.iter().enumerate() {
        s.push_str(&format!("\n[{}] {}", i + 1, p.text));
    }
    s.push_str("\n\n");
    s.push_str(POST_INSTRUCTION);
    s
}

/// An agent taking part in a dose-response run, labelled with its CBI.
#[derive(Clone)]
pub struct ContagionAgent {
    pub label: String,
    pub cbi: f64,
    pub backend: Arc<dyn AgentBackend>,
}

impl std::fmt::Debug for ContagionAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContagionAgent")
            .field("label", &self.label)
            .field("cbi", &self.cbi)
            .field("backend", &self.backend.id())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DoseResponseConfig {
    pub doses: Vec<usize>,
    pub trials_per_cell: usize,
    /// Posts per feed; non-negative slots are filled with neutral posts.
    pub feed_len: usize,
    pub max_tokens: u32,
    pub seed: u64,
    pub max_in_flight: usize,
}

impl Default for DoseResponseConfig {
    fn default() -> Self {
        Self { doses: (0..=MAX_DOSE).collect(), trials_per_cell: 30, feed_len: MAX_DOSE, max_tokens: 120, seed: 0, max_in_flight: 8 }
    }
}

impl DoseResponseConfig {
    pub fn validate(&self) -> Result<(), ContagionError> {
        if self.doses.is_empty() || self.trials_per_cell == 0 {
            return Err(ContagionError::Config("need at least one dose and one trial per cell".into()));
        }
        if let Some(d) = self.doses.iter().find(|d| **d > MAX_DOSE || **d > self.feed_len) {
            return Err(ContagionError::Config(format!(
                "dose {d} exceeds the maximum of {}",
                MAX_DOSE.min(self.feed_len)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedTrial {
    pub agent: String,
    pub cbi: f64,
    pub negative_count: usize,
    pub trial: usize,
    pub feed_ids: Vec<String>,
    pub generated_post: Option<String>,
    pub scores: Option<SentimentTriple>,
    pub sentiment: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseCell {
    pub agent: String,
    pub cbi: f64,
    pub dose: usize,
    /// Absent when more than 20% of the cell's trials failed.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n: usize,
    pub failed_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseResponseTable {
    pub scorer: String,
    pub cells: Vec<DoseCell>,
    pub trials: Vec<FeedTrial>,
}

impl DoseResponseTable {
    pub fn cell(&self, agent: &str, dose: usize) -> Option<&DoseCell> {
        self.cells.iter().find(|c| c.agent == agent && c.dose == dose)
    }

    /// Successful trial sentiments of one agent as `(dose, sentiment)`.
    pub fn observations(&self, agent: &str) -> Vec<(f64, f64)> {
        self.trials
            .iter()
            .filter(|t| t.agent == agent)
            .filter_map(|t| t.sentiment.map(|s| (t.negative_count as f64, s)))
            .collect()
    }

    pub fn failed_cells(&self) -> Vec<&DoseCell> {
        self.cells.iter().filter(|c| c.mean.is_none()).collect()
    }
}

/// Ordinary least squares fit of `y = slope · x + intercept` with the
/// standard error of the slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub n: usize,
}

pub fn fit_line(points: &[(f64, f64)]) -> Option<LinearFit> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let slope_stderr = (rss / (nf - 2.0) / sxx).sqrt();
    Some(LinearFit { slope, intercept, slope_stderr, n })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, std)
}

/// Expose every agent to feeds at every dose, `trials_per_cell` times, and
/// score the posts they write.
pub fn run_dose_response(
    agents: &[ContagionAgent],
    corpus: &PostCorpus,
    scorer: &dyn SentimentScorer,
    config: &DoseResponseConfig,
) -> Result<DoseResponseTable, ContagionError> {
    config.validate()?;
    if agents.is_empty() {
        return Err(ContagionError::Config("no agents".into()));
    }
    let max_dose = *config.doses.iter().max().expect("validated non-empty");
    let neg_available = corpus.of(Valence::Negative).len();
    let fill_available = corpus.of(Valence::Neutral).len();
    let min_dose = *config.doses.iter().min().expect("validated non-empty");
    if neg_available < max_dose || fill_available < config.feed_len - min_dose {
        return Err(ContagionError::InsufficientCorpus {
            negative_needed: max_dose,
            negative_available: neg_available,
            filler_needed: config.feed_len - min_dose,
            filler_available: fill_available,
        });
    }
    let jobs: Vec<(usize, usize, usize)> = (0..agents.len())
        .flat_map(|a| config.doses.iter().flat_map(move |&d| (0..config.trials_per_cell).map(move |t| (a, d, t))))
        .collect();
    let trials = par_map(&jobs, config.max_in_flight, |_, &(a, dose, trial)| {
        let agent = &agents[a];
        let path = [seed::hash_str(&agent.label), dose as u64, trial as u64];
        let trial_seed = seed::derive(config.seed, &path);
        let mut record = FeedTrial {
            agent: agent.label.clone(),
            cbi: agent.cbi,
            negative_count: dose,
            trial,
            feed_ids: Vec::new(),
            generated_post: None,
            scores: None,
            sentiment: None,
            error: None,
        };
        let feed = match build_feed(corpus, dose, config.feed_len - dose, seed::derive(trial_seed, &[0])) {
            Ok(f) => f,
            Err(e) => {
                record.error = Some(e.to_string());
                return record;
            }
        };
        record.feed_ids = feed.iter().map(|p| p.id.clone()).collect();
        let request = GenerationRequest {
            user_text: feed_prompt(&feed),
            max_tokens: config.max_tokens,
            context: GenerationContext::Feed { negative_count: dose, feed_len: feed.len() },
        };
        let outcome = agent
            .backend
            .generate(&request, &RequestContext::with_seed(seed::derive(trial_seed, &[1])))
            .map_err(ContagionError::from)
            .and_then(|text| scorer.score(&text).map(|s| (text, s)));
        match outcome {
            Ok((text, s)) if s.is_valid() => {
                record.sentiment = Some(s.sentiment());
                record.scores = Some(s);
                record.generated_post = Some(text);
            }
            Ok((text, s)) => {
                record.error = Some(format!("scorer returned an invalid triple {s:?}"));
                record.generated_post = Some(text);
            }
            Err(e) => {
                log::warn!("{} dose {dose} trial {trial}: {e}", agent.label);
                record.error = Some(e.to_string());
            }
        }
        record
    });
    let mut cells = Vec::new();
    for agent in agents {
        for &dose in &config.doses {
            let vals: Vec<f64> = trials
                .iter()
                .filter(|t| t.agent == agent.label && t.negative_count == dose)
                .filter_map(|t| t.sentiment)
                .collect();
            let failed = config.trials_per_cell - vals.len();
            let ok = !vals.is_empty() && failed as f64 <= MAX_TRIAL_LOSS * config.trials_per_cell as f64;
            let (mean, std) = if ok {
                let (m, s) = mean_std(&vals);
                (Some(m), Some(s))
            } else {
                log::error!("{} dose {dose}: {failed} of {} trials failed", agent.label, config.trials_per_cell);
                (None, None)
            };
            cells.push(DoseCell { agent: agent.label.clone(), cbi: agent.cbi, dose, mean, std, n: vals.len(), failed_trials: failed });
        }
    }
    Ok(DoseResponseTable { scorer: scorer.id(), cells, trials })
}

/// Named agent sets for the contagion demonstration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Persona prompts "You are a user with (no/little/some/much) Bandwagon Effect."
    Baseline,
    /// Five agents calibrated to evenly spaced Bandwagon CBI from 2.55 to 3.13.
    Cobra,
}

impl std::str::FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Preset::Baseline),
            "cobra" => Ok(Preset::Cobra),
            other => Err(format!("unknown preset `{other}` (expected baseline or cobra)")),
        }
    }
}

pub const BASELINE_DEGREES: [&str; 4] = ["no", "little", "some", "much"];
pub const COBRA_TARGETS: [f64; 5] = [2.55, 2.695, 2.84, 2.985, 3.13];
pub const CALIBRATION_PARADIGM: &str = "asch_line";

/// Build the preset's agents on top of `backend`, measuring or calibrating
/// their Bandwagon CBI on the Asch line paradigm.
pub fn preset_agents(
    preset: Preset,
    backend: Arc<dyn AgentBackend>,
    testbed: &Testbed,
    method: &ControlMethod,
    options: &CalibrationOptions,
) -> Result<Vec<ContagionAgent>, ContagionError> {
    let paradigm = testbed.require(CALIBRATION_PARADIGM).map_err(RegulationError::from)?;
    let spec = BiasSpec::builtin(&BiasType::Bandwagon).expect("built-in bandwagon spec");
    let mut agents = Vec::new();
    match preset {
        Preset::Baseline => {
            for degree in BASELINE_DEGREES {
                let persona = ControlledAgent::with_system_prompt(backend.clone(), &degree_persona_text(&spec, degree))?;
                let cbi = regulation::measure(&persona, paradigm, options.seed)?.value;
                agents.push(ContagionAgent { label: degree.to_string(), cbi, backend: Arc::new(persona) });
            }
        }
        Preset::Cobra => {
            for target in COBRA_TARGETS {
                let r = calibrate(&*backend, method, &spec, paradigm, target, None, options)?;
                if !r.converged {
                    log::warn!(
                        "target {target}: not converged ({}); using λ={} with CBI {:.3}",
                        r.note.as_deref().unwrap_or("no note"),
                        r.coefficient,
                        r.achieved_cbi
                    );
                }
                let controlled = apply_control(backend.clone(), method, &spec, r.coefficient)?;
                agents.push(ContagionAgent {
                    label: format!("cbi_{target:.3}"),
                    cbi: r.achieved_cbi,
                    backend: Arc::new(controlled),
                });
            }
        }
    }
    Ok(agents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{make_mock, ContagionResponse, LambdaResponse, MockAgentSpec, ScriptedBackend};

    #[test]
    fn scripted_echo_gives_flat_curve() {
        let text = "Lovely calm evening, grateful for a quiet walk home.";
        let agent = ContagionAgent {
            label: "echo".into(),
            cbi: 0.0,
            backend: Arc::new(ScriptedBackend::canonical("echo", 2).with_post_text(text)),
        };
        let cfg = DoseResponseConfig { doses: vec![0, 5, 15], trials_per_cell: 4, ..Default::default() };
        let t = run_dose_response(&[agent], &PostCorpus::bundled(), &LexiconScorer, &cfg).unwrap();
        let want = lexicon_score(text).sentiment();
        for c in &t.cells {
            assert_eq!(c.mean, Some(want));
            assert_eq!(c.std, Some(0.0));
            assert_eq!(c.n, 4);
        }
        assert_eq!(t.trials.len(), 12);
        assert!(t.trials.iter().all(|tr| tr.feed_ids.len() == 15));
    }

    #[test]
    fn failing_backend_fails_cells() {
        let agent = ContagionAgent {
            label: "mute".into(),
            cbi: 2.0,
            backend: Arc::new(make_mock(MockAgentSpec::default(), Default::default()).unwrap()),
        };
        let cfg = DoseResponseConfig { doses: vec![0, 1], trials_per_cell: 3, ..Default::default() };
        let t = run_dose_response(&[agent], &PostCorpus::bundled(), &LexiconScorer, &cfg).unwrap();
        assert_eq!(t.failed_cells().len(), 2);
        assert!(t.trials.iter().all(|tr| tr.error.is_some()));
    }

    #[test]
    fn mock_slope_is_proportional_to_bias() {
        let mk = |b: f64| {
            let spec = MockAgentSpec {
                base_bias: b,
                contagion: Some(ContagionResponse { kappa: 0.01, ..Default::default() }),
                ..Default::default()
            };
            ContagionAgent { label: format!("b{b}"), cbi: b, backend: Arc::new(make_mock(spec, Default::default()).unwrap()) }
        };
        let agents = [mk(1.0), mk(3.0)];
        let cfg = DoseResponseConfig { trials_per_cell: 10, ..Default::default() };
        let t = run_dose_response(&agents, &PostCorpus::bundled(), &LexiconScorer, &cfg).unwrap();
        for a in &agents {
            let fit = fit_line(&t.observations(&a.label)).unwrap();
            let expected = -0.01 * a.cbi;
            assert!((fit.slope - expected).abs() <= 3.0 * fit.slope_stderr, "{fit:?} vs {expected}");
        }
    }

    #[test]
    fn presets_build_agents() {
        let spec = MockAgentSpec {
            base_bias: 2.0,
            paradigm_base_bias: [("asch_line".to_owned(), 2.9)].into(),
            lambda_response: LambdaResponse::Logistic { low: 2.0, high: 3.5, midpoint: 0.5, slope: 6.0 },
            contagion: Some(ContagionResponse::default()),
            ..Default::default()
        };
        let backend: Arc<dyn AgentBackend> = Arc::new(make_mock(spec, Default::default()).unwrap());
        let tb = Testbed::bundled();
        let m = ControlMethod::steering(
            crate::backend::ControlKind::RepeLinear,
            crate::regulation::StabilityRange { lambda_min: 0.0, lambda_max: 1.0 },
        )
        .unwrap();
        let base = preset_agents(Preset::Baseline, backend.clone(), &tb, &m, &Default::default()).unwrap();
        assert_eq!(base.len(), 4);
        assert!(base.iter().all(|a| (a.cbi - 2.9).abs() < 1e-9));
        let cobra = preset_agents(Preset::Cobra, backend, &tb, &m, &Default::default()).unwrap();
        assert_eq!(cobra.len(), 5);
        for (a, t) in cobra.iter().zip(COBRA_TARGETS) {
            assert!((a.cbi - t).abs() <= 0.05, "{} vs {t}", a.cbi);
        }
    }

    #[test]
    fn config_validation() {
        assert!(DoseResponseConfig { doses: vec![16], ..Default::default() }.validate().is_err());
        assert!(DoseResponseConfig { trials_per_cell: 0, ..Default::default() }.validate().is_err());
        let fit = fit_line(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12 && fit.slope_stderr.abs() < 1e-12);
    }
}
