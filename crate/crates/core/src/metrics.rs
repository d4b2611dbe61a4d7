//! Control-curve quality metrics and reproducibility analyses.
//!
//! A control curve is scored for soft monotonicity (NDCG against the
//! ascending rearrangement), rank monotonicity (Spearman ρ), smoothness
//! (mean absolute first and second differences) and expressiveness (span).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::regulation::ControlCurve;

pub const DEFAULT_ALPHA: f64 = 1.0;

/// Column order of metric CSV rows.
pub const CSV_COLUMNS: [&str; 5] = ["ndcg", "spearman_rho", "delta1", "delta2", "expressiveness"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("values must be finite")]
    NonFinite,
    #[error("coefficient grids differ")]
    GridMismatch,
    #[error("{0} has zero variance; correlation is undefined")]
    ZeroVariance(&'static str),
    #[error("need at least 2 models, got {0}")]
    TooFewModels(usize),
}

fn check(ys: &[f64], needed: usize) -> Result<(), MetricsError> {
    if ys.len() < needed {
        return Err(MetricsError::TooFewPoints { needed, got: ys.len() });
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    Ok(())
}

fn span(ys: &[f64]) -> f64 {
    let max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Unclipped `DCG / IDCG`. Values above 1 are possible.
pub fn ndcg_soft_raw(ys: &[f64], alpha: f64) -> Result<f64, MetricsError> {
    check(ys, 2)?;
    let range = span(ys);
    if range == 0.0 {
        return Ok(1.0);
    }
    let mut ideal = ys.to_vec();
    ideal.sort_by(f64::total_cmp);
    let mut dcg = 0.0;
    let mut idcg = 0.0;
    for (i, (y, y_ideal)) in ys.iter().zip(&ideal).enumerate() {
        let discount = ((i + 2) as f64).log2();
        dcg += (alpha * (y - y_ideal) / range).exp() / discount;
        idcg += 1.0 / discount;
    }
    Ok(dcg / idcg)
}

/// Soft monotonicity: `DCG / IDCG` with `rel_i = exp(α (y_i − ŷ_i) / range)`,
/// `ŷ` the ascending sort of `ys`, and IDCG the same sum with every
/// `rel_i = 1`. Clipped to `(0, 1]`; a flat curve scores 1.
///
/// The ascending rearrangement minimizes every prefix sum, so with
/// decreasing discounts and convex `exp` the unclipped ratio is at least 1
/// for any curve and the clipped value is always 1. [`ndcg_soft_raw`]
/// keeps the ratio.
pub fn ndcg_soft(ys: &[f64], alpha: f64) -> Result<f64, MetricsError> {
    Ok(ndcg_soft_raw(ys, alpha)?.clamp(f64::MIN_POSITIVE, 1.0))
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in &idx[i..=j] {
            ranks[*k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn has_ties(v: &[f64]) -> bool {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).any(|w| w[0] == w[1])
}

/// Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    check(xs, 2)?;
    check(ys, 2)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 {
        return Err(MetricsError::ZeroVariance("first series"));
    }
    if syy == 0.0 {
        return Err(MetricsError::ZeroVariance("second series"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman ρ and whether it is degenerate (constant `ys`, reported as 1).
pub fn spearman_detail(xs: &[f64], ys: &[f64]) -> Result<(f64, bool), MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    check(xs, 2)?;
    check(ys, 2)?;
    if span(ys) == 0.0 {
        return Ok((1.0, true));
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    if has_ties(xs) || has_ties(ys) {
        return Ok((pearson(&rx, &ry)?, false));
    }
    let n = xs.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((1.0 - 6.0 * d2 / (n * (n * n - 1.0)), false))
}

/// Spearman rank correlation, `1 − 6 Σ d² / (n (n² − 1))` without ties and
/// Pearson on average ranks with ties.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    spearman_detail(xs, ys).map(|(r, _)| r)
}

/// Mean absolute first difference.
pub fn delta1(ys: &[f64]) -> Result<f64, MetricsError> {
    check(ys, 2)?;
    Ok(ys.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (ys.len() - 1) as f64)
}

/// Mean absolute second difference.
pub fn delta2(ys: &[f64]) -> Result<f64, MetricsError> {
    check(ys, 3)?;
    Ok(ys.windows(3).map(|w| ((w[2] - w[1]) - (w[1] - w[0])).abs()).sum::<f64>() / (ys.len() - 2) as f64)
}

/// `max − min`.
pub fn expressiveness(ys: &[f64]) -> Result<f64, MetricsError> {
    check(ys, 2)?;
    Ok(span(ys))
}

/// Intended direction of a control curve. Decreasing curves are negated
/// before the monotonicity metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ndcg: f64,
    /// Ratio before clipping to `(0, 1]`.
    pub ndcg_raw: f64,
    pub spearman_rho: f64,
    pub delta1: f64,
    /// Absent for two-point curves.
    pub delta2: Option<f64>,
    pub expressiveness: f64,
    pub alpha_used: f64,
    pub direction: Direction,
    /// Constant curve: ρ reported as 1.
    pub degenerate: bool,
    pub n_points: usize,
}

impl MetricsReport {
    pub fn csv_row(&self) -> [String; 5] {
        [
            self.ndcg.to_string(),
            self.spearman_rho.to_string(),
            self.delta1.to_string(),
            self.delta2.map(|d| d.to_string()).unwrap_or_default(),
            self.expressiveness.to_string(),
        ]
    }
}

pub fn evaluate(xs: &[f64], ys: &[f64], alpha: f64, direction: Direction) -> Result<MetricsReport, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    check(ys, 2)?;
    let oriented: Vec<f64> = match direction {
        Direction::Increasing => ys.to_vec(),
        Direction::Decreasing => ys.iter().map(|y| -y).collect(),
    };
    let ndcg_raw = ndcg_soft_raw(&oriented, alpha)?;
    let (spearman_rho, degenerate) = spearman_detail(xs, &oriented)?;
    Ok(MetricsReport {
        ndcg: ndcg_raw.clamp(f64::MIN_POSITIVE, 1.0),
        ndcg_raw,
        spearman_rho,
        delta1: delta1(ys)?,
        delta2: if ys.len() >= 3 { Some(delta2(ys)?) } else { None },
        expressiveness: expressiveness(ys)?,
        alpha_used: alpha,
        direction,
        degenerate,
        n_points: ys.len(),
    })
}

pub fn curve_metrics(curve: &ControlCurve, alpha: f64, direction: Direction) -> Result<MetricsReport, MetricsError> {
    evaluate(&curve.coefficients(), &curve.values(), alpha, direction)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferPair {
    pub coefficient: f64,
    pub cbi_source: f64,
    pub cbi_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub source_paradigm: String,
    pub target_paradigm: String,
    pub pairs: Vec<TransferPair>,
    pub pearson_r: f64,
    /// Least-squares fit `target ≈ slope · source + intercept`.
    pub slope: f64,
    pub intercept: f64,
}

/// Pair two curves on the same coefficient grid and fit a line.
pub fn transfer_report(source: &ControlCurve, target: &ControlCurve) -> Result<TransferReport, MetricsError> {
    let (xa, xb) = (source.coefficients(), target.coefficients());
    if xa.len() != xb.len() {
        return Err(MetricsError::LengthMismatch(xa.len(), xb.len()));
    }
    if xa.iter().zip(&xb).any(|(a, b)| a != b) {
        return Err(MetricsError::GridMismatch);
    }
    let (ya, yb) = (source.values(), target.values());
    let pearson_r = pearson(&ya, &yb)?;
    let n = ya.len() as f64;
    let (ma, mb) = (ya.iter().sum::<f64>() / n, yb.iter().sum::<f64>() / n);
    let sab: f64 = ya.iter().zip(&yb).map(|(a, b)| (a - ma) * (b - mb)).sum();
    let saa: f64 = ya.iter().map(|a| (a - ma).powi(2)).sum();
    let slope = sab / saa;
    Ok(TransferReport {
        source_paradigm: source.paradigm_id.clone(),
        target_paradigm: target.paradigm_id.clone(),
        pairs: xa
            .iter()
            .zip(ya.iter().zip(&yb))
            .map(|(&coefficient, (&cbi_source, &cbi_target))| TransferPair { coefficient, cbi_source, cbi_target })
            .collect(),
        pearson_r,
        slope,
        intercept: mb - slope * ma,
    })
}

/// Curves of one model under one control method: coefficient → CBI on the
/// calibration paradigm and on the target paradigm, on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCurves {
    pub calibration: ControlCurve,
    pub target: ControlCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGapInput {
    pub model_id: String,
    /// Target-paradigm CBI without control.
    pub no_control: Option<f64>,
    /// Target-paradigm CBI under a plain natural-language control prompt.
    pub nl_control: Option<f64>,
    pub methods: BTreeMap<String, MethodCurves>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub specified_cbi: f64,
    /// Cross-model `max − min` of target CBI per condition.
    pub spreads: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCurve {
    pub points: Vec<GapPoint>,
    /// Grid values skipped for a model, with the reason.
    pub skipped: Vec<String>,
}

pub const NO_CONTROL: &str = "no_control";
pub const NL_CONTROL: &str = "nl_control";

/// Coefficient at which a piecewise-linear curve first reaches `y`.
pub fn invert_curve(xs: &[f64], ys: &[f64], y: f64) -> Option<f64> {
    for i in 0..xs.len().saturating_sub(1) {
        let (y0, y1) = (ys[i], ys[i + 1]);
        if (y0 <= y && y <= y1) || (y1 <= y && y <= y0) {
            if y1 == y0 {
                return Some(xs[i]);
            }
            return Some(xs[i] + (y - y0) / (y1 - y0) * (xs[i + 1] - xs[i]));
        }
    }
    None
}

/// Linear interpolation of `ys` at `x`, `None` outside the grid.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let i = xs.windows(2).position(|w| w[0] <= x && x <= w[1])?;
    let (x0, x1) = (xs[i], xs[i + 1]);
    Some(ys[i] + (x - x0) / (x1 - x0) * (ys[i + 1] - ys[i]))
}

fn spread(vals: &[f64]) -> Option<f64> {
    (vals.len() >= 2).then(|| span(vals))
}

/// Cross-model target-paradigm spread at each specified CBI. For each
/// control method a model's calibration curve is inverted at the grid value
/// and its target curve read at that coefficient.
pub fn gap_curve(models: &[ModelGapInput], cbi_grid: &[f64]) -> Result<GapCurve, MetricsError> {
    if models.len() < 2 {
        return Err(MetricsError::TooFewModels(models.len()));
    }
    let methods: Vec<&String> = {
        let mut m: Vec<&String> = models.iter().flat_map(|m| m.methods.keys()).collect();
        m.sort();
        m.dedup();
        m
    };
    let fixed = |f: fn(&ModelGapInput) -> Option<f64>| -> Vec<f64> { models.iter().filter_map(f).collect() };
    let no_control = spread(&fixed(|m| m.no_control));
    let nl_control = spread(&fixed(|m| m.nl_control));
    let mut skipped = Vec::new();
    let mut points = Vec::with_capacity(cbi_grid.len());
    for &g in cbi_grid {
        let mut spreads = BTreeMap::new();
        if let Some(s) = no_control {
            spreads.insert(NO_CONTROL.to_owned(), s);
        }
        if let Some(s) = nl_control {
            spreads.insert(NL_CONTROL.to_owned(), s);
        }
        for method in &methods {
            let mut vals = Vec::new();
            for m in models {
                let Some(c) = m.methods.get(*method) else { continue };
                let looked_up = invert_curve(&c.calibration.coefficients(), &c.calibration.values(), g)
                    .and_then(|l| interpolate(&c.target.coefficients(), &c.target.values(), l));
                match looked_up {
                    Some(v) => vals.push(v),
                    None => skipped.push(format!("{} {method}: CBI {g} outside achieved range", m.model_id)),
                }
            }
            if let Some(s) = spread(&vals) {
                spreads.insert((*method).clone(), s);
            }
        }
        points.push(GapPoint { specified_cbi: g, spreads });
    }
    Ok(GapCurve { points, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ControlKind;
    use crate::cbi::{CbiMeasurement, ResponseSource};
    use crate::regulation::CurvePoint;

    /// Direct evaluation of the soft NDCG definition, written independently.
    fn ndcg_oracle(ys: &[f64], alpha: f64) -> f64 {
        let mut ideal = ys.to_vec();
        ideal.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let range = ideal[ideal.len() - 1] - ideal[0];
        if range == 0.0 {
            return 1.0;
        }
        let mut dcg = 0.0;
        let mut idcg = 0.0;
        for i in 0..ys.len() {
            let rel = f64::exp(alpha * (ys[i] - ideal[i]) / range);
            dcg += rel / f64::log2(i as f64 + 2.0);
            idcg += 1.0 / f64::log2(i as f64 + 2.0);
        }
        (dcg / idcg).min(1.0)
    }

    fn curve(pid: &str, xs: &[f64], ys: &[f64]) -> ControlCurve {
        let points = xs
            .iter()
            .zip(ys)
            .map(|(&coefficient, &value)| CurvePoint {
                coefficient,
                cbi: CbiMeasurement {
                    paradigm_id: pid.into(),
                    value,
                    per_variant_scores: vec![value],
                    n_variants: 1,
                    stderr: 0.0,
                    source: ResponseSource::ExactProbs,
                },
            })
            .collect();
        ControlCurve::new(ControlKind::PromptNumerical, pid, "mock", points).unwrap()
    }

    #[test]
    fn ndcg_goldens() {
        assert_eq!(ndcg_soft(&[0.0, 1.0, 2.0, 4.0], 1.0).unwrap(), 1.0);
        assert_eq!(ndcg_soft(&[2.0, 2.0, 2.0], 1.0).unwrap(), 1.0);
        let ys = [0.0, 2.0, 1.0, 4.0];
        let raw = ndcg_soft_raw(&ys, 1.0).unwrap();
        // pinned: (1 + e^{1/4}/log2 3 + e^{-1/4}/2 + 1/log2 5) / (1 + 1/log2 3 + 1/2 + 1/log2 5)
        let pinned = (1.0 + 0.25f64.exp() / 3f64.log2() + (-0.25f64).exp() / 2.0 + 1.0 / 5f64.log2())
            / (1.0 + 1.0 / 3f64.log2() + 0.5 + 1.0 / 5f64.log2());
        assert!((raw - pinned).abs() < 1e-15);
        assert!((raw - 1.026_78).abs() < 1e-5, "{raw}");
        assert_eq!(ndcg_soft(&ys, 1.0).unwrap(), ndcg_oracle(&ys, 1.0));
        assert!(ndcg_soft(&[1.0], 1.0).is_err());
    }

    #[test]
    fn spearman_goldens() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(spearman_rho(&xs, &[1.0, 2.0, 3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(spearman_rho(&xs, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!((spearman_rho(&xs, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(spearman_detail(&xs, &[2.0; 4]).unwrap(), (1.0, true));
        let tied = spearman_rho(&xs, &[1.0, 2.0, 2.0, 3.0]).unwrap();
        // ranks (1, 2.5, 2.5, 4) against (1, 2, 3, 4): 4.5 / √(5 · 4.5)
        assert!((tied - 4.5 / 22.5f64.sqrt()).abs() < 1e-12);
        assert!(spearman_rho(&xs, &[1.0]).is_err());
    }

    #[test]
    fn delta_goldens() {
        assert_eq!(delta1(&[0.0, 1.0, 3.0]).unwrap(), 1.5);
        assert_eq!(delta2(&[0.0, 1.0, 3.0]).unwrap(), 1.0);
        assert_eq!(delta1(&[2.0; 5]).unwrap(), 0.0);
        assert_eq!(delta2(&[2.0; 5]).unwrap(), 0.0);
        assert_eq!(delta2(&[0.5, 1.25, 2.0, 2.75]).unwrap(), 0.0);
        assert!((expressiveness(&[0.2, 1.0, 3.72]).unwrap() - 3.52).abs() < 1e-12);
        assert!(expressiveness(&[1.0]).is_err());
        assert!(delta2(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn decreasing_direction_negates_before_ranking() {
        let r = evaluate(&[0.0, 1.0, 2.0], &[3.0, 2.0, 1.0], 1.0, Direction::Decreasing).unwrap();
        assert_eq!(r.spearman_rho, 1.0);
        assert_eq!(r.delta1, 1.0);
        let r2 = evaluate(&[0.0, 1.0], &[3.0, 2.0], 1.0, Direction::Increasing).unwrap();
        assert_eq!(r2.delta2, None);
        assert_eq!(r2.csv_row()[3], "");
    }

    #[test]
    fn transfer_identity_and_affine() {
        let xs = [0.0, 0.5, 1.0];
        let a = curve("a", &xs, &[0.5, 1.5, 3.0]);
        let t = transfer_report(&a, &a).unwrap();
        assert!((t.pearson_r - 1.0).abs() < 1e-12);
        assert!((t.slope - 1.0).abs() < 1e-12 && t.intercept.abs() < 1e-12);
        let b = curve("b", &xs, &[1.25, 1.75, 2.5]);
        assert!((transfer_report(&a, &b).unwrap().pearson_r - 1.0).abs() < 1e-12);
        let c = curve("c", &[0.0, 0.4, 1.0], &[0.0, 1.0, 2.0]);
        assert_eq!(transfer_report(&a, &c).unwrap_err(), MetricsError::GridMismatch);
    }

    #[test]
    fn gap_of_identical_models_is_zero() {
        let xs = [0.0, 0.5, 1.0];
        let mc = MethodCurves { calibration: curve("k1", &xs, &[0.0, 2.0, 4.0]), target: curve("k2", &xs, &[1.0, 2.0, 3.0]) };
        let model = |id: &str, nat: f64| ModelGapInput {
            model_id: id.into(),
            no_control: Some(nat),
            nl_control: None,
            methods: BTreeMap::from([("prompt_numerical".to_owned(), mc.clone())]),
        };
        let g = gap_curve(&[model("a", 1.0), model("b", 2.5)], &[1.0, 3.0, 5.0]).unwrap();
        assert_eq!(g.points[0].spreads["prompt_numerical"], 0.0);
        assert_eq!(g.points[0].spreads[NO_CONTROL], 1.5);
        assert!(!g.points[2].spreads.contains_key("prompt_numerical"));
        assert_eq!(g.skipped.len(), 2);
        assert!(gap_curve(&[model("a", 1.0)], &[1.0]).is_err());
    }

    #[test]
    fn inversion_and_interpolation() {
        assert_eq!(invert_curve(&[0.0, 1.0], &[1.0, 3.0], 2.0), Some(0.5));
        assert_eq!(invert_curve(&[0.0, 1.0], &[1.0, 3.0], 3.5), None);
        assert_eq!(interpolate(&[0.0, 1.0], &[1.0, 3.0], 0.25), Some(1.5));
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn ndcg_matches_oracle(ys in prop::collection::vec(0.0f64..4.0, 2..12), alpha in 0.1f64..3.0) {
            prop_assert!((ndcg_soft(&ys, alpha).unwrap() - ndcg_oracle(&ys, alpha)).abs() < 1e-12);
        }

        #[test]
        fn invariances(ys in prop::collection::vec(0.0f64..4.0, 3..12), a in 0.1f64..5.0, b in -3.0f64..3.0) {
            let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
            let t: Vec<f64> = ys.iter().map(|y| a * y + b).collect();
            prop_assert!((ndcg_soft(&t, 1.0).unwrap() - ndcg_soft(&ys, 1.0).unwrap()).abs() < 1e-9);
            prop_assert_eq!(spearman_rho(&xs, &t).unwrap(), spearman_rho(&xs, &ys).unwrap());
            prop_assert!((delta1(&t).unwrap() - a * delta1(&ys).unwrap()).abs() < 1e-9);
            prop_assert!((delta2(&t).unwrap() - a * delta2(&ys).unwrap()).abs() < 1e-9);
            prop_assert!((expressiveness(&t).unwrap() - a * expressiveness(&ys).unwrap()).abs() < 1e-9);
            let cubed: Vec<f64> = ys.iter().map(|y| y.powi(3) + y).collect();
            prop_assert_eq!(spearman_rho(&xs, &cubed).unwrap(), spearman_rho(&xs, &ys).unwrap());
        }

        #[test]
        fn raw_ratio_never_below_one(ys in prop::collection::vec(0.0f64..4.0, 2..12)) {
            prop_assert!(ndcg_soft_raw(&ys, 1.0).unwrap() >= 1.0 - 1e-12);
        }

        #[test]
        fn ranges_hold(ys in prop::collection::vec(0.0f64..4.0, 3..12)) {
            let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
            let r = evaluate(&xs, &ys, 1.0, Direction::Increasing).unwrap();
            prop_assert!(r.ndcg > 0.0 && r.ndcg <= 1.0);
            prop_assert!((-1.0..=1.0).contains(&r.spearman_rho));
            prop_assert!(r.delta1 >= 0.0 && r.delta2.unwrap() >= 0.0);
            prop_assert!((0.0..=4.0).contains(&r.expressiveness));
        }
    }
}
