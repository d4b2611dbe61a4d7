//! Coefficient search for a target CBI.
//!
//! Both domain endpoints are measured first; a target outside the achieved
//! span (padded by the tolerance) is reported as out of range. Otherwise the
//! bracket is bisected on measured values, snapping to the method's
//! quantization grid, until a measurement lands within tolerance or the
//! budget runs out. Every evaluation reuses the same seed, so noise in the
//! presentation draw is common to all points.

use serde::{Deserialize, Serialize};

use super::{apply_control, measure, BiasSpec, ControlMethod, RegulationError};
use crate::backend::AgentBackend;
use crate::cbi::{CbiMeasurement, ResponseSource};
use crate::seed;
use crate::testbed::ParadigmSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    pub tolerance: f64,
    /// Maximum number of measurements in the search.
    pub budget: usize,
    /// Re-measure sampled results with a fresh seed before accepting them.
    pub verify: bool,
    /// Master seed shared by every measurement of the search.
    pub seed: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { tolerance: 0.05, budget: 20, verify: true, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStep {
    pub coefficient: f64,
    pub cbi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub paradigm_id: String,
    pub method: crate::backend::ControlKind,
    pub target_cbi: f64,
    pub achieved_cbi: f64,
    pub coefficient: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub tolerance: f64,
    pub stderr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub trace: Vec<CalibrationStep>,
    /// Fresh-seed re-measurement for sampled results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<CbiMeasurement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<CbiMeasurement>,
}

struct Search<'a> {
    agent: &'a dyn AgentBackend,
    method: &'a ControlMethod,
    spec: &'a BiasSpec,
    paradigm: &'a ParadigmSpec,
    seed: u64,
    trace: Vec<CalibrationStep>,
    best: Option<(f64, CbiMeasurement)>,
    target: f64,
}

impl Search<'_> {
    fn eval(&mut self, coefficient: f64) -> Result<f64, RegulationError> {
        let controlled = apply_control(self.agent, self.method, self.spec, coefficient)?;
        let m = measure(&controlled, self.paradigm, self.seed)?;
        let v = m.value;
        log::debug!("calibrate {}: λ={coefficient} → CBI {v:.4}", self.paradigm.id);
        self.trace.push(CalibrationStep { coefficient, cbi: v });
        let better = self.best.as_ref().is_none_or(|(_, b)| (v - self.target).abs() < (b.value - self.target).abs());
        if better {
            self.best = Some((coefficient, m));
        }
        Ok(v)
    }
}

/// Search the coefficient of `method` that makes `agent` score `target` on
/// `paradigm`. Out-of-range and non-convergent searches are reported in the
/// result, not as errors. With `transfer_paradigm`, the calibrated
/// coefficient is also measured there without further search.
pub fn calibrate(
    agent: &dyn AgentBackend,
    method: &ControlMethod,
    spec: &BiasSpec,
    paradigm: &ParadigmSpec,
    target: f64,
    transfer_paradigm: Option<&ParadigmSpec>,
    options: &CalibrationOptions,
) -> Result<CalibrationResult, RegulationError> {
    let seed = options.seed;
    let tol = options.tolerance;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(RegulationError::InvalidArgument(format!("tolerance must be > 0, got {tol}")));
    }
    if options.budget < 3 {
        return Err(RegulationError::InvalidArgument(format!("budget must be >= 3, got {}", options.budget)));
    }
    if !target.is_finite() {
        return Err(RegulationError::InvalidArgument("target must be finite".into()));
    }
    let mut s = Search { agent, method, spec, paradigm, seed, trace: Vec::new(), best: None, target };
    let (lo, hi) = (method.snap(method.domain.0), method.snap(method.domain.1));
    let within = |v: f64| (v - target).abs() <= tol;

    let mut converged = false;
    let mut note = None;
    let c_lo = s.eval(lo)?;
    if within(c_lo) {
        converged = true;
    } else {
        let c_hi = s.eval(hi)?;
        if within(c_hi) {
            converged = true;
        } else if target < c_lo.min(c_hi) - tol || target > c_lo.max(c_hi) + tol {
            note = Some(format!(
                "target {target} outside achievable range [{:.4}, {:.4}]",
                c_lo.min(c_hi),
                c_lo.max(c_hi)
            ));
        } else {
            let increasing = c_hi >= c_lo;
            let (mut a, mut b) = (lo, hi);
            while s.trace.len() < options.budget {
                let mid = method.snap(0.5 * (a + b));
                if mid <= a || mid >= b {
                    note = Some(format!("bracket [{a}, {b}] cannot be split further on the coefficient grid"));
                    break;
                }
                let c = s.eval(mid)?;
                if within(c) {
                    converged = true;
                    break;
                }
                if (c < target) == increasing {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            if !converged && note.is_none() {
                note = Some(format!("budget of {} evaluations exhausted", options.budget));
            }
        }
    }

    let (coefficient, best) = s.best.take().expect("at least one evaluation");
    let mut verification = None;
    if converged && options.verify && best.source == ResponseSource::Frequencies {
        let controlled = apply_control(agent, method, spec, coefficient)?;
        let fresh = measure(&controlled, paradigm, seed::derive(seed, &[0x7665_7269_6679]))?;
        let bound = tol + 3.0 * best.stderr.max(fresh.stderr);
        if (fresh.value - best.value).abs() > bound {
            converged = false;
            note = Some(format!(
                "re-measure gave {:.4}, more than {bound:.4} from {:.4}",
                fresh.value, best.value
            ));
        }
        verification = Some(fresh);
    }
    let transfer = match transfer_paradigm {
        Some(p) => Some(measure(&apply_control(agent, method, spec, coefficient)?, p, seed)?),
        None => None,
    };
    Ok(CalibrationResult {
        paradigm_id: paradigm.id.clone(),
        method: method.kind,
        target_cbi: target,
        achieved_cbi: best.value,
        coefficient,
        evaluations: s.trace.len(),
        converged,
        tolerance: tol,
        stderr: best.stderr,
        note,
        trace: s.trace,
        verification,
        transfer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{make_mock, ControlKind, LambdaResponse, MockAgentSpec};
    use crate::regulation::{StabilityRange, sweep};
    use crate::testbed::{BiasType, Testbed};

    fn setup(resp: LambdaResponse) -> (crate::backend::MockAgent, BiasSpec, ControlMethod) {
        let agent = make_mock(MockAgentSpec { lambda_response: resp, ..Default::default() }, Default::default()).unwrap();
        let spec = BiasSpec::builtin(&BiasType::Authority).unwrap();
        let m = ControlMethod::steering(ControlKind::RepeLinear, StabilityRange { lambda_min: 0.0, lambda_max: 1.0 })
            .unwrap();
        (agent, spec, m)
    }

    #[test]
    fn logistic_target_converges_near_inverse() {
        let resp = LambdaResponse::Logistic { low: 0.2, high: 3.8, midpoint: 0.45, slope: 9.0 };
        let (agent, spec, m) = setup(resp.clone());
        let tb = Testbed::bundled();
        let p = tb.get("stanford_prison").unwrap();
        let r = calibrate(&agent, &m, &spec, p, 2.0, None, &CalibrationOptions { seed: 5, ..Default::default() }).unwrap();
        assert!(r.converged);
        assert!(r.evaluations <= 20);
        assert!((r.achieved_cbi - 2.0).abs() <= 0.05);
        assert!((r.coefficient - resp.logistic_inverse(2.0).unwrap()).abs() < 0.02);
    }

    #[test]
    fn unreachable_target_is_reported() {
        let (agent, spec, m) = setup(LambdaResponse::default());
        let tb = Testbed::bundled();
        let r = calibrate(&agent, &m, &spec, tb.get("asch_line").unwrap(), 5.0, None, &Default::default()).unwrap();
        assert!(!r.converged);
        assert!(r.note.unwrap().contains("outside"));
        assert_eq!(r.evaluations, 2);
    }

    #[test]
    fn endpoint_target_is_found_quickly() {
        let resp = LambdaResponse::Linear { intercept: 1.0, slope: 2.0 };
        let (agent, spec, m) = setup(resp);
        let tb = Testbed::bundled();
        let r = calibrate(&agent, &m, &spec, tb.get("asch_line").unwrap(), 1.0, None, &Default::default()).unwrap();
        assert!(r.converged);
        assert!(r.evaluations <= 3);
    }

    #[test]
    fn decreasing_response_is_handled() {
        let resp = LambdaResponse::Linear { intercept: 3.5, slope: -3.0 };
        let (agent, spec, m) = setup(resp);
        let tb = Testbed::bundled();
        let r = calibrate(&agent, &m, &spec, tb.get("asch_line").unwrap(), 1.7, None, &Default::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((r.coefficient - 0.6).abs() < 0.02);
    }

    #[test]
    fn quantized_prompt_grid_stops_when_bracket_cannot_split() {
        // 4λ on 0.05 steps reaches multiples of 0.2; 2.1 lies 0.1 from both neighbours
        let resp = LambdaResponse::Linear { intercept: 0.0, slope: 4.0 };
        let agent = make_mock(MockAgentSpec { lambda_response: resp, ..Default::default() }, Default::default()).unwrap();
        let spec = BiasSpec::builtin(&BiasType::Authority).unwrap();
        let tb = Testbed::bundled();
        let opts = CalibrationOptions { tolerance: 0.05, ..Default::default() };
        let r = calibrate(&agent, &ControlMethod::prompt_numerical(), &spec, tb.get("asch_line").unwrap(), 2.1, None, &opts)
            .unwrap();
        assert!(!r.converged);
        assert!(r.note.unwrap().contains("cannot be split"));
        let r = calibrate(&agent, &ControlMethod::prompt_numerical(), &spec, tb.get("asch_line").unwrap(), 2.2, None, &opts)
            .unwrap();
        assert!(r.converged);
        assert!((r.coefficient - 0.55).abs() < 1e-12);
    }

    #[test]
    fn invalid_arguments_rejected() {
        let (agent, spec, m) = setup(LambdaResponse::default());
        let tb = Testbed::bundled();
        let p = tb.get("asch_line").unwrap();
        let bad_tol = CalibrationOptions { tolerance: 0.0, ..Default::default() };
        assert!(calibrate(&agent, &m, &spec, p, 2.0, None, &bad_tol).is_err());
        let bad_budget = CalibrationOptions { budget: 2, ..Default::default() };
        assert!(calibrate(&agent, &m, &spec, p, 2.0, None, &bad_budget).is_err());
    }

    #[test]
    fn calibrated_coefficient_lies_between_bracketing_sweep_points() {
        let resp = LambdaResponse::Logistic { low: 0.5, high: 3.5, midpoint: 0.4, slope: 7.0 };
        let (agent, spec, m) = setup(resp);
        let tb = Testbed::bundled();
        let p = tb.get("hotel_towel").unwrap();
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let curve = sweep(&agent, &m, &spec, p, &grid, 9).unwrap();
        for target in [1.0, 2.0, 2.6, 3.1] {
            let opts = CalibrationOptions { tolerance: 1e-3, budget: 40, seed: 9, ..Default::default() };
            let r = calibrate(&agent, &m, &spec, p, target, None, &opts).unwrap();
            assert!(r.converged);
            let ys = curve.values();
            let i = ys.windows(2).position(|w| w[0] <= target && target <= w[1]).unwrap();
            assert!(grid[i] <= r.coefficient && r.coefficient <= grid[i + 1]);
        }
    }

    #[test]
    fn transfer_reports_second_paradigm() {
        let (agent, spec, m) = setup(LambdaResponse::default());
        let tb = Testbed::bundled();
        let r = calibrate(
            &agent,
            &m,
            &spec,
            tb.get("milgram_obedience").unwrap(),
            2.6,
            tb.get("stanford_prison"),
            &Default::default(),
        )
        .unwrap();
        let t = r.transfer.unwrap();
        assert_eq!(t.paradigm_id, "stanford_prison");
        assert!((t.value - r.achieved_cbi).abs() < 1e-9);
    }
}
