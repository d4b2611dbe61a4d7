//! Experiment configuration, run orchestration and run records.
//!
//! A run expands an [`ExperimentConfig`] over backends, temperatures,
//! reasoning modes, control methods and paradigms. Every result is appended
//! to `runs/<run_id>/events.jsonl` as it is produced; `summary.json` holds
//! the final [`RunRecord`].

mod config;
mod export;
mod store;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{self, AgentBackend, BackendConfig, BackendStats, ControlKind};
use crate::cbi::CbiMeasurement;
use crate::contagion::{self, ContagionError, DoseResponseTable, LexiconScorer, PostCorpus};
use crate::metrics::{self, GapCurve, MethodCurves, MetricsReport, ModelGapInput, TransferReport};
use crate::regulation::{
    self, apply_control, calibrate, natural_language_text, BiasSpec, CalibrationOptions, CalibrationResult,
    ControlCurve, ControlMethod, ControlledAgent, VariantFailure,
};
use crate::testbed::{ParadigmSpec, Testbed};
use crate::Error;

pub use config::{ControlPoint, ExperimentConfig, GapSpec, Task, TransferSpec};
pub use export::{emit_plots, export_csv, Selector};
pub use store::{list_runs, load_run, RunWriter, EVENTS_FILE, SUMMARY_FILE};

/// Version written into run records. Loaders accept any `1.x`.
pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("invalid experiment config: {0}")]
    Validation(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("malformed run record {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("unsupported run record schema version {found} (this build reads 1.x)")]
    UnsupportedSchema { found: String },
    #[error("run {0} not found")]
    RunNotFound(String),
    #[error("plot error: {0}")]
    Plot(String),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("run {run_id} aborted")]
    Aborted { run_id: String, source: Box<Error> },
}

impl ReportError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Aborted { source, .. } => source.exit_code(),
            ReportError::Io { .. } | ReportError::Plot(_) | ReportError::Csv(_) => crate::EXIT_BACKEND,
            _ => crate::EXIT_VALIDATION,
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        ReportError::Io { path: path.to_owned(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementEntry {
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlPoint>,
    pub measurement: CbiMeasurement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEntry {
    pub backend: String,
    pub curve: ControlCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsEntry {
    pub backend: String,
    pub method: ControlKind,
    pub paradigm_id: String,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub backend: String,
    pub result: CalibrationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferEntry {
    pub backend: String,
    pub method: ControlKind,
    pub report: TransferReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseResponseEntry {
    pub backend: String,
    pub table: DoseResponseTable,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunResults {
    pub measurements: Vec<MeasurementEntry>,
    pub curves: Vec<CurveEntry>,
    pub metrics: Vec<MetricsEntry>,
    pub calibrations: Vec<CalibrationEntry>,
    pub transfers: Vec<TransferEntry>,
    pub gaps: Vec<GapCurve>,
    pub dose_response: Vec<DoseResponseEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureEntry {
    DroppedVariant { backend: String, failure: VariantFailure },
    ParseRejects { backend: String, paradigm_id: String, count: usize },
    BackendStats { backend: String, stats: BackendStats },
    NotConverged { backend: String, paradigm_id: String, target: f64, note: String },
    FailedCell { backend: String, agent: String, dose: usize, failed_trials: usize },
    Aborted { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: String,
    pub run_id: String,
    pub timestamp: String,
    pub config: ExperimentConfig,
    pub results: RunResults,
    pub failures: Vec<FailureEntry>,
    pub status: RunStatus,
}

impl RunRecord {
    pub fn new(run_id: &str, config: ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            run_id: run_id.into(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            config,
            results: RunResults::default(),
            failures: Vec::new(),
            status: RunStatus::Running,
        }
    }

    /// Calibrations that did not reach their target.
    pub fn unconverged(&self) -> Vec<&CalibrationResult> {
        self.results.calibrations.iter().map(|c| &c.result).filter(|r| !r.converged).collect()
    }
}

/// Fresh run id: UTC time plus a random suffix.
pub fn new_run_id() -> String {
    let now = chrono::Utc::now();
    let nanos = now.timestamp_nanos_opt().unwrap_or_default() as u64;
    format!("{}-{:06x}", now.format("%Y%m%dT%H%M%S"), crate::seed::mix64(nanos ^ std::process::id() as u64) & 0xff_ffff)
}

struct Ctx<'a> {
    config: &'a ExperimentConfig,
    testbed: &'a Testbed,
    writer: RunWriter,
}

impl Ctx<'_> {
    fn paradigm(&self, id: &str) -> Result<&ParadigmSpec, Error> {
        Ok(self.testbed.require(id)?)
    }

    fn spec_for(&self, p: &ParadigmSpec) -> Result<BiasSpec, Error> {
        self.config
            .bias_spec_for(&p.bias)
            .ok_or_else(|| ReportError::Validation(format!("no bias spec for {}", p.bias.id())).into())
    }
}

/// A backend instance of the run matrix with its label.
pub struct PreparedBackend {
    pub label: String,
    pub agent: Arc<dyn AgentBackend>,
}

/// Expand backends over the temperature and reasoning-mode sets.
pub fn prepare_backends(config: &ExperimentConfig) -> Result<Vec<PreparedBackend>, Error> {
    let mut out = Vec::new();
    for b in &config.backends {
        for variant in config.backend_variants(b) {
            let label = config::variant_label(b, &variant, config);
            out.push(PreparedBackend { label, agent: backend::from_config(&variant)? });
        }
    }
    Ok(out)
}

/// Validate, execute and persist an experiment. Results are appended to the
/// run's event log as they are produced; on failure the partial record is
/// kept with status `aborted`.
pub fn run(config: &ExperimentConfig, runs_dir: &Path) -> Result<RunRecord, Error> {
    let testbed = config.load_testbed()?;
    config.validate(&testbed)?;
    let backends = prepare_backends(config)?;
    run_with_backends(config, &testbed, backends, runs_dir, &new_run_id())
}

/// Execute with already-built backends (used when backends are constructed
/// in code rather than from config).
pub fn run_with_backends(
    config: &ExperimentConfig,
    testbed: &Testbed,
    backends: Vec<PreparedBackend>,
    runs_dir: &Path,
    run_id: &str,
) -> Result<RunRecord, Error> {
    let writer = RunWriter::create(runs_dir, RunRecord::new(run_id, config.clone()))?;
    let mut ctx = Ctx { config, testbed, writer };
    let outcome = execute(&mut ctx, &backends);
    for b in &backends {
        ctx.writer.failure(FailureEntry::BackendStats { backend: b.label.clone(), stats: b.agent.stats() })?;
    }
    match outcome {
        Ok(()) => Ok(ctx.writer.finish(RunStatus::Complete)?),
        Err(e) => {
            ctx.writer.failure(FailureEntry::Aborted { message: e.to_string() })?;
            let record = ctx.writer.finish(RunStatus::Aborted)?;
            Err(ReportError::Aborted { run_id: record.run_id, source: Box::new(e) }.into())
        }
    }
}

/// Re-run a record's config into a new run.
pub fn rerun(record: &RunRecord, runs_dir: &Path) -> Result<RunRecord, Error> {
    run(&record.config, runs_dir)
}

fn execute(ctx: &mut Ctx<'_>, backends: &[PreparedBackend]) -> Result<(), Error> {
    match &ctx.config.task {
        Task::Measure { control } => run_measure(ctx, backends, control.as_ref()),
        Task::Sweep { grid, direction, transfers, gap } => {
            run_sweep(ctx, backends, grid, *direction, transfers, gap.as_ref())
        }
        Task::Calibrate { targets, tolerance, budget, transfer_paradigm } => {
            run_calibrate(ctx, backends, targets, *tolerance, *budget, transfer_paradigm.as_deref())
        }
        Task::Contagion { preset, doses, corpus } => run_contagion(ctx, backends, *preset, doses, corpus.as_deref()),
    }
}

fn run_measure(ctx: &mut Ctx<'_>, backends: &[PreparedBackend], control: Option<&ControlPoint>) -> Result<(), Error> {
    for b in backends {
        for pid in &ctx.config.paradigms {
            let p = ctx.paradigm(pid)?.clone();
            let outcome = match control {
                None => regulation::measure_detailed(&*b.agent, &p, ctx.config.seed)?,
                Some(c) => {
                    let method = ctx.config.method(c.kind);
                    let controlled = apply_control(&*b.agent, &method, &ctx.spec_for(&p)?, c.coefficient)?;
                    regulation::measure_detailed(&controlled, &p, ctx.config.seed)?
                }
            };
            record_variant_issues(ctx, &b.label, &p.id, &outcome.failures, outcome.responses.iter().map(|r| r.rejected_samples).sum())?;
            ctx.writer.measurement(MeasurementEntry {
                backend: b.label.clone(),
                control: control.cloned(),
                measurement: outcome.measurement,
            })?;
        }
    }
    Ok(())
}

fn record_variant_issues(
    ctx: &mut Ctx<'_>,
    backend: &str,
    paradigm_id: &str,
    failures: &[VariantFailure],
    rejected: usize,
) -> Result<(), Error> {
    for f in failures {
        ctx.writer.failure(FailureEntry::DroppedVariant { backend: backend.into(), failure: f.clone() })?;
    }
    if rejected > 0 {
        ctx.writer.failure(FailureEntry::ParseRejects {
            backend: backend.into(),
            paradigm_id: paradigm_id.into(),
            count: rejected,
        })?;
    }
    Ok(())
}

fn run_sweep(
    ctx: &mut Ctx<'_>,
    backends: &[PreparedBackend],
    grid: &[f64],
    direction: metrics::Direction,
    transfers: &[TransferSpec],
    gap: Option<&GapSpec>,
) -> Result<(), Error> {
    let mut gap_inputs: Vec<ModelGapInput> = Vec::new();
    for b in backends {
        let mut curves: Vec<ControlCurve> = Vec::new();
        for method in ctx.config.methods() {
            for pid in &ctx.config.paradigms {
                let p = ctx.paradigm(pid)?.clone();
                let spec = ctx.spec_for(&p)?;
                let s = regulation::sweep_detailed(&*b.agent, &method, &spec, &p, grid, ctx.config.seed)?;
                record_variant_issues(ctx, &b.label, &p.id, &s.failures, s.rejected_samples)?;
                let report = metrics::curve_metrics(&s.curve, ctx.config.alpha, direction)?;
                ctx.writer.curve(CurveEntry { backend: b.label.clone(), curve: s.curve.clone() })?;
                ctx.writer.metrics(MetricsEntry {
                    backend: b.label.clone(),
                    method: method.kind,
                    paradigm_id: p.id.clone(),
                    report,
                })?;
                curves.push(s.curve);
            }
        }
        let find = |kind: ControlKind, pid: &str| curves.iter().find(|c| c.method == kind && c.paradigm_id == pid);
        for t in transfers {
            for method in ctx.config.methods() {
                if let (Some(a), Some(c)) = (find(method.kind, &t.source), find(method.kind, &t.target)) {
                    let report = metrics::transfer_report(a, c)?;
                    ctx.writer.transfer(TransferEntry { backend: b.label.clone(), method: method.kind, report })?;
                }
            }
        }
        if let Some(g) = gap {
            let target = ctx.paradigm(&g.target_paradigm)?.clone();
            let no_control = regulation::measure(&*b.agent, &target, ctx.config.seed)?.value;
            let nl_agent = ControlledAgent::with_system_prompt(&*b.agent, &natural_language_text(&ctx.spec_for(&target)?))?;
            let nl_control = regulation::measure(&nl_agent, &target, ctx.config.seed)?.value;
            let mut methods = std::collections::BTreeMap::new();
            for method in ctx.config.methods() {
                if let (Some(cal), Some(tgt)) =
                    (find(method.kind, &g.calibration_paradigm), find(method.kind, &g.target_paradigm))
                {
                    methods.insert(
                        method.kind.to_string(),
                        MethodCurves { calibration: cal.clone(), target: tgt.clone() },
                    );
                }
            }
            gap_inputs.push(ModelGapInput {
                model_id: b.label.clone(),
                no_control: Some(no_control),
                nl_control: Some(nl_control),
                methods,
            });
        }
    }
    if let Some(g) = gap {
        let curve = metrics::gap_curve(&gap_inputs, &g.cbi_grid)?;
        ctx.writer.gap(curve)?;
    }
    Ok(())
}

fn run_calibrate(
    ctx: &mut Ctx<'_>,
    backends: &[PreparedBackend],
    targets: &[f64],
    tolerance: f64,
    budget: usize,
    transfer_paradigm: Option<&str>,
) -> Result<(), Error> {
    let options = CalibrationOptions { tolerance, budget, verify: true, seed: ctx.config.seed };
    let transfer = transfer_paradigm.map(|t| ctx.paradigm(t).cloned()).transpose()?;
    for b in backends {
        for method in ctx.config.methods() {
            for pid in &ctx.config.paradigms {
                let p = ctx.paradigm(pid)?.clone();
                let spec = ctx.spec_for(&p)?;
                for &target in targets {
                    let result = calibrate(&*b.agent, &method, &spec, &p, target, transfer.as_ref(), &options)?;
                    if !result.converged {
                        ctx.writer.failure(FailureEntry::NotConverged {
                            backend: b.label.clone(),
                            paradigm_id: p.id.clone(),
                            target,
                            note: result.note.clone().unwrap_or_default(),
                        })?;
                    }
                    ctx.writer.calibration(CalibrationEntry { backend: b.label.clone(), result })?;
                }
            }
        }
    }
    Ok(())
}

fn run_contagion(
    ctx: &mut Ctx<'_>,
    backends: &[PreparedBackend],
    preset: contagion::Preset,
    doses: &contagion::DoseResponseConfig,
    corpus: Option<&Path>,
) -> Result<(), Error> {
    let corpus = match corpus {
        Some(path) => PostCorpus::load(path)?,
        None => PostCorpus::bundled(),
    };
    let method = ctx.config.methods().into_iter().next().unwrap_or_else(ControlMethod::prompt_numerical);
    let options = CalibrationOptions { seed: ctx.config.seed, ..Default::default() };
    for b in backends {
        let agents = contagion::preset_agents(preset, b.agent.clone(), ctx.testbed, &method, &options)?;
        let cfg = contagion::DoseResponseConfig {
            seed: ctx.config.seed,
            max_in_flight: b.agent.config().max_in_flight,
            ..doses.clone()
        };
        let table = contagion::run_dose_response(&agents, &corpus, &LexiconScorer, &cfg)?;
        for c in table.failed_cells() {
            ctx.writer.failure(FailureEntry::FailedCell {
                backend: b.label.clone(),
                agent: c.agent.clone(),
                dose: c.dose,
                failed_trials: c.failed_trials,
            })?;
        }
        ctx.writer.dose_response(DoseResponseEntry { backend: b.label.clone(), table })?;
    }
    if backends.is_empty() {
        return Err(ContagionError::Config("no backends".into()).into());
    }
    Ok(())
}

/// Config for a backend after applying a temperature and reasoning mode.
pub fn backend_variant(base: &BackendConfig, temperature: Option<f64>, mode: Option<backend::ReasoningMode>) -> BackendConfig {
    let mut c = base.clone();
    if let Some(t) = temperature {
        c.temperature = t;
    }
    if let Some(m) = mode {
        c.reasoning_mode = m;
    }
    c
}
