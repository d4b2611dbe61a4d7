use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{ReportError, SCHEMA_VERSION};
use crate::backend::{BackendConfig, ControlKind, ReasoningMode};
use crate::contagion::{DoseResponseConfig, PostCorpus, Preset};
use crate::metrics::Direction;
use crate::regulation::{check_grid, BiasSpec, ControlMethod};
use crate::testbed::{load_testbed_file, BiasType, Testbed};
use crate::Error;

/// A fixed control setting, e.g. `prompt_numerical` at 0.6.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub kind: ControlKind,
    pub coefficient: f64,
}

impl std::str::FromStr for ControlPoint {
    type Err = String;

    /// Parses `method:λ`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (m, c) = s.rsplit_once(':').ok_or_else(|| format!("expected method:coefficient, got `{s}`"))?;
        let kind = m.parse::<ControlKind>().map_err(|e| e.to_string())?;
        let coefficient = c.trim().parse::<f64>().map_err(|e| format!("bad coefficient `{c}`: {e}"))?;
        Ok(Self { kind, coefficient })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSpec {
    pub source: String,
    pub target: String,
}

/// Cross-model gap: curves on `calibration_paradigm` are inverted at each
/// CBI of `cbi_grid` and read on `target_paradigm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSpec {
    pub calibration_paradigm: String,
    pub target_paradigm: String,
    pub cbi_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Measure {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        control: Option<ControlPoint>,
    },
    Sweep {
        grid: Vec<f64>,
        #[serde(default)]
        direction: Direction,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        transfers: Vec<TransferSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gap: Option<GapSpec>,
    },
    Calibrate {
        targets: Vec<f64>,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
        #[serde(default = "default_budget")]
        budget: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        transfer_paradigm: Option<String>,
    },
    Contagion {
        preset: Preset,
        #[serde(default)]
        doses: DoseResponseConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        corpus: Option<PathBuf>,
    },
}

fn default_tolerance() -> f64 {
    0.05
}

fn default_budget() -> usize {
    20
}

/// Declarative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: String,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub backends: Vec<BackendConfig>,
    /// Temperature set; empty uses each backend's own temperature.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub temperatures: Vec<f64>,
    /// Reasoning modes; empty uses each backend's own mode.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reasoning_modes: Vec<ReasoningMode>,
    pub paradigms: Vec<String>,
    /// Control methods; empty means prompt-numerical only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<ControlMethod>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Extra testbed documents registered on top of the bundled paradigms.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub testbed_files: Vec<PathBuf>,
    /// Replacements for the built-in bias descriptions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bias_specs: Vec<BiasSpec>,
    pub task: Task,
}

fn default_schema() -> String {
    SCHEMA_VERSION.into()
}

fn default_alpha() -> f64 {
    crate::metrics::DEFAULT_ALPHA
}

impl ExperimentConfig {
    pub fn new(backends: Vec<BackendConfig>, paradigms: Vec<String>, task: Task) -> Self {
        Self {
            schema_version: default_schema(),
            name: String::new(),
            seed: 0,
            backends,
            temperatures: Vec::new(),
            reasoning_modes: Vec::new(),
            paradigms,
            methods: Vec::new(),
            alpha: default_alpha(),
            testbed_files: Vec::new(),
            bias_specs: Vec::new(),
            task,
        }
    }

    pub fn from_json(source: &str) -> Result<Self, ReportError> {
        serde_json::from_str(source).map_err(|e| ReportError::Validation(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|e| ReportError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn methods(&self) -> Vec<ControlMethod> {
        if self.methods.is_empty() {
            vec![ControlMethod::prompt_numerical()]
        } else {
            self.methods.clone()
        }
    }

    /// Configured method of `kind`, or its default.
    pub fn method(&self, kind: ControlKind) -> ControlMethod {
        self.methods.iter().find(|m| m.kind == kind).cloned().unwrap_or_else(|| ControlMethod::default_for(kind))
    }

    pub fn bias_spec_for(&self, bias: &BiasType) -> Option<BiasSpec> {
        self.bias_specs.iter().find(|s| &s.bias == bias).cloned().or_else(|| BiasSpec::builtin(bias))
    }

    pub fn load_testbed(&self) -> Result<Testbed, Error> {
        let mut tb = Testbed::bundled();
        for path in &self.testbed_files {
            tb.register(load_testbed_file(path)?)?;
        }
        Ok(tb)
    }

    /// Backend configs after expanding the temperature and reasoning sets.
    pub fn backend_variants(&self, base: &BackendConfig) -> Vec<BackendConfig> {
        let temps: Vec<Option<f64>> =
            if self.temperatures.is_empty() { vec![None] } else { self.temperatures.iter().copied().map(Some).collect() };
        let modes: Vec<Option<ReasoningMode>> = if self.reasoning_modes.is_empty() {
            vec![None]
        } else {
            self.reasoning_modes.iter().copied().map(Some).collect()
        };
        let mut out = Vec::new();
        for &t in &temps {
            for &m in &modes {
                out.push(super::backend_variant(base, t, m));
            }
        }
        out
    }

    /// Check everything that can be checked without contacting a backend.
    pub fn validate(&self, testbed: &Testbed) -> Result<(), Error> {
        let bad = |m: String| -> Error { ReportError::Validation(m).into() };
        let major = self.schema_version.split('.').next().unwrap_or_default();
        if major != "1" {
            return Err(ReportError::UnsupportedSchema { found: self.schema_version.clone() }.into());
        }
        if self.backends.is_empty() {
            return Err(bad("at least one backend is required".into()));
        }
        let mut labels = BTreeSet::new();
        for b in &self.backends {
            b.validate()?;
            if !labels.insert(b.model_name.as_str()) {
                return Err(bad(format!("duplicate backend model_name `{}`", b.model_name)));
            }
        }
        if let Some(t) = self.temperatures.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(bad(format!("temperature must be >= 0, got {t}")));
        }
        for b in &self.backends {
            for v in self.backend_variants(b) {
                v.validate()?;
            }
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(bad(format!("alpha must be > 0, got {}", self.alpha)));
        }
        let mut kinds = BTreeSet::new();
        for m in &self.methods {
            if !kinds.insert(m.kind) {
                return Err(bad(format!("method {} listed twice", m.kind)));
            }
            if !(m.domain.0.is_finite() && m.domain.1.is_finite() && m.domain.0 < m.domain.1) {
                return Err(bad(format!("method {} has empty domain {:?}", m.kind, m.domain)));
            }
        }
        let needs_paradigms = !matches!(self.task, Task::Contagion { .. });
        if needs_paradigms && self.paradigms.is_empty() {
            return Err(bad("at least one paradigm is required".into()));
        }
        for pid in &self.paradigms {
            let p = testbed.require(pid)?;
            if self.bias_spec_for(&p.bias).is_none() {
                return Err(bad(format!("no bias description for `{}` (add one under bias_specs)", p.bias)));
            }
        }
        for s in &self.bias_specs {
            s.validate()?;
        }
        let known = |id: &str| -> Result<(), Error> {
            if self.paradigms.iter().any(|p| p == id) {
                Ok(())
            } else {
                Err(bad(format!("paradigm `{id}` is used by the task but not listed in paradigms")))
            }
        };
        match &self.task {
            Task::Measure { control } => {
                if let Some(c) = control {
                    self.method(c.kind).check(c.coefficient)?;
                }
            }
            Task::Sweep { grid, transfers, gap, .. } => {
                check_grid(grid)?;
                for m in self.methods() {
                    for &c in grid {
                        m.check(c)?;
                    }
                }
                for t in transfers {
                    known(&t.source)?;
                    known(&t.target)?;
                }
                if let Some(g) = gap {
                    known(&g.calibration_paradigm)?;
                    known(&g.target_paradigm)?;
                    if g.cbi_grid.is_empty() || g.cbi_grid.iter().any(|v| !(0.0..=4.0).contains(v)) {
                        return Err(bad("gap cbi_grid must be non-empty and within [0, 4]".into()));
                    }
                }
            }
            Task::Calibrate { targets, tolerance, budget, transfer_paradigm } => {
                if targets.is_empty() {
                    return Err(bad("at least one calibration target is required".into()));
                }
                if let Some(t) = targets.iter().find(|t| !(0.0..=4.0).contains(*t)) {
                    return Err(bad(format!("target {t} outside [0, 4]")));
                }
                if !(tolerance.is_finite() && *tolerance > 0.0) {
                    return Err(bad(format!("tolerance must be > 0, got {tolerance}")));
                }
                if *budget < 2 {
                    return Err(bad("calibration budget must be >= 2".into()));
                }
                if let Some(t) = transfer_paradigm {
                    testbed.require(t)?;
                }
            }
            Task::Contagion { doses, corpus, .. } => {
                doses.validate()?;
                testbed.require(crate::contagion::CALIBRATION_PARADIGM)?;
                if let Some(path) = corpus {
                    PostCorpus::load(path)?;
                }
            }
        }
        Ok(())
    }
}

/// Row label of a backend variant: the model name, plus temperature and
/// reasoning mode when those are swept.
pub(crate) fn variant_label(base: &BackendConfig, variant: &BackendConfig, config: &ExperimentConfig) -> String {
    let mut label = base.model_name.clone();
    if config.temperatures.len() > 1 {
        label.push_str(&format!("@t{}", variant.temperature));
    }
    if config.reasoning_modes.len() > 1 {
        let mode = match variant.reasoning_mode {
            ReasoningMode::Direct => "direct",
            ReasoningMode::Reasoning => "reasoning",
        };
        label.push_str(&format!("/{mode}"));
    }
    label
}
