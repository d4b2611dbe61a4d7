use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::{ReportError, RunRecord};
use crate::metrics::CSV_COLUMNS;

/// Table or figure family of a run record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    Metrics,
    Curves,
    Calibrations,
    DoseResponse,
    Measurements,
    Transfers,
    Gaps,
}

impl Selector {
    pub const ALL: [Selector; 7] = [
        Selector::Metrics,
        Selector::Curves,
        Selector::Calibrations,
        Selector::DoseResponse,
        Selector::Measurements,
        Selector::Transfers,
        Selector::Gaps,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Selector::Metrics => "metrics",
            Selector::Curves => "curves",
            Selector::Calibrations => "calibrations",
            Selector::DoseResponse => "dose_response",
            Selector::Measurements => "measurements",
            Selector::Transfers => "transfers",
            Selector::Gaps => "gaps",
        }
    }
}

impl std::str::FromStr for Selector {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Selector::ALL
            .into_iter()
            .find(|x| x.as_str() == s || (s == "dose-response" && *x == Selector::DoseResponse))
            .ok_or_else(|| {
                let names: Vec<_> = Selector::ALL.iter().map(|x| x.as_str()).collect();
                format!("unknown selector `{s}` (expected one of {})", names.join(", "))
            })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write one table of `record` as CSV. Values are copied from the record;
/// an empty record yields the header line only.
pub fn export_csv(record: &RunRecord, selector: Selector, out: impl Write) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| ReportError::Csv(e.to_string());
    let r = &record.results;
    let id = record.run_id.as_str();
    match selector {
        Selector::Metrics => {
            let mut header = vec!["run_id", "backend", "method", "paradigm_id"];
            header.extend(CSV_COLUMNS);
            w.write_record(&header).map_err(err)?;
            for m in &r.metrics {
                let mut row = vec![id.to_owned(), m.backend.clone(), m.method.to_string(), m.paradigm_id.clone()];
                row.extend(m.report.csv_row());
                w.write_record(&row).map_err(err)?;
            }
        }
        Selector::Curves => {
            w.write_record(["run_id", "backend", "method", "paradigm_id", "coefficient", "cbi", "stderr", "n_variants"])
                .map_err(err)?;
            for c in &r.curves {
                for p in &c.curve.points {
                    w.write_record([
                        id.to_owned(),
                        c.backend.clone(),
                        c.curve.method.to_string(),
                        c.curve.paradigm_id.clone(),
                        p.coefficient.to_string(),
                        p.cbi.value.to_string(),
                        p.cbi.stderr.to_string(),
                        p.cbi.n_variants.to_string(),
                    ])
                    .map_err(err)?;
                }
            }
        }
        Selector::Calibrations => {
            w.write_record([
                "run_id",
                "backend",
                "method",
                "paradigm_id",
                "target_cbi",
                "achieved_cbi",
                "coefficient",
                "evaluations",
                "converged",
                "transfer_cbi",
                "note",
            ])
            .map_err(err)?;
            for c in &r.calibrations {
                let x = &c.result;
                w.write_record([
                    id.to_owned(),
                    c.backend.clone(),
                    x.method.to_string(),
                    x.paradigm_id.clone(),
                    x.target_cbi.to_string(),
                    x.achieved_cbi.to_string(),
                    x.coefficient.to_string(),
                    x.evaluations.to_string(),
                    x.converged.to_string(),
                    opt(x.transfer.as_ref().map(|t| t.value)),
                    x.note.clone().unwrap_or_default(),
                ])
                .map_err(err)?;
            }
        }
        Selector::DoseResponse => {
            w.write_record(["agent", "cbi", "dose", "mean", "std", "n"]).map_err(err)?;
            let multi = r.dose_response.len() > 1;
            for d in &r.dose_response {
                for c in &d.table.cells {
                    let agent = if multi { format!("{}/{}", d.backend, c.agent) } else { c.agent.clone() };
                    w.write_record([agent, c.cbi.to_string(), c.dose.to_string(), opt(c.mean), opt(c.std), c.n.to_string()])
                        .map_err(err)?;
                }
            }
        }
        Selector::Measurements => {
            w.write_record(["run_id", "backend", "paradigm_id", "control", "coefficient", "cbi", "stderr", "n_variants", "source"])
                .map_err(err)?;
            for m in &r.measurements {
                let x = &m.measurement;
                w.write_record([
                    id.to_owned(),
                    m.backend.clone(),
                    x.paradigm_id.clone(),
                    m.control.map(|c| c.kind.to_string()).unwrap_or_default(),
                    opt(m.control.map(|c| c.coefficient)),
                    x.value.to_string(),
                    x.stderr.to_string(),
                    x.n_variants.to_string(),
                    serde_json::to_value(x.source).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
                ])
                .map_err(err)?;
            }
        }
        Selector::Transfers => {
            w.write_record([
                "run_id",
                "backend",
                "method",
                "source_paradigm",
                "target_paradigm",
                "pearson_r",
                "slope",
                "intercept",
            ])
            .map_err(err)?;
            for t in &r.transfers {
                w.write_record([
                    id.to_owned(),
                    t.backend.clone(),
                    t.method.to_string(),
                    t.report.source_paradigm.clone(),
                    t.report.target_paradigm.clone(),
                    t.report.pearson_r.to_string(),
                    t.report.slope.to_string(),
                    t.report.intercept.to_string(),
                ])
                .map_err(err)?;
            }
        }
        Selector::Gaps => {
            w.write_record(["run_id", "specified_cbi", "condition", "spread"]).map_err(err)?;
            for g in &r.gaps {
                for p in &g.points {
                    for (cond, spread) in &p.spreads {
                        w.write_record([id.to_owned(), p.specified_cbi.to_string(), cond.clone(), spread.to_string()])
                            .map_err(err)?;
                    }
                }
            }
        }
    }
    w.flush().map_err(|e| ReportError::Csv(e.to_string()))
}

type Series = Vec<(String, Vec<(f64, f64)>)>;

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn bounds(series: &Series) -> ((f64, f64), (f64, f64)) {
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let pad = |a: f64, b: f64| if (b - a).abs() < 1e-12 { (a - 0.5, b + 0.5) } else { (a - 0.05 * (b - a), b + 0.05 * (b - a)) };
    (pad(x0, x1), pad(y0, y1))
}

fn draw(path: &Path, title: &str, x_desc: &str, y_desc: &str, series: &Series, lines: bool) -> Result<(), ReportError> {
    let perr = |e: &dyn std::fmt::Display| ReportError::Plot(format!("{}: {e}", path.display()));
    let ((x0, x1), (y0, y1)) = bounds(series);
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| perr(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| perr(&e))?;
    chart.configure_mesh().x_desc(x_desc).y_desc(y_desc).draw().map_err(|e| perr(&e))?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        if lines {
            chart
                .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                .map_err(|e| perr(&e))?
                .label(name.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        }
        let anno = chart
            .draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(|e| perr(&e))?;
        if !lines {
            anno.label(name.as_str()).legend(move |(x, y)| Circle::new((x + 8, y), 3, color.filled()));
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| perr(&e))?;
    root.present().map_err(|e| perr(&e))
}

/// Render SVG figures of `record` into `out_dir`: one control-curve plot per
/// (method, paradigm), one per gap curve, one dose-response plot per
/// backend and one scatter per transfer pair. `only` restricts the families
/// (`Curves`, `Gaps`, `DoseResponse`, `Transfers`).
pub fn emit_plots(record: &RunRecord, only: Option<Selector>, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(out_dir).map_err(|e| ReportError::io(out_dir, e))?;
    let want = |s: Selector| only.is_none_or(|o| o == s);
    let r = &record.results;
    let mut written = Vec::new();

    if want(Selector::Curves) {
        let mut groups: BTreeMap<(String, String), Series> = BTreeMap::new();
        for c in &r.curves {
            let key = (c.curve.method.to_string(), c.curve.paradigm_id.clone());
            let pts = c.curve.points.iter().map(|p| (p.coefficient, p.cbi.value)).collect();
            groups.entry(key).or_default().push((c.backend.clone(), pts));
        }
        for ((method, pid), series) in groups {
            let path = out_dir.join(format!("curve_{}_{}.svg", slug(&method), slug(&pid)));
            draw(&path, &format!("{method} on {pid}"), "coefficient", "CBI", &series, true)?;
            written.push(path);
        }
    }
    if want(Selector::Gaps) {
        for (i, g) in r.gaps.iter().enumerate() {
            let mut by_cond: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
            for p in &g.points {
                for (cond, s) in &p.spreads {
                    by_cond.entry(cond.clone()).or_default().push((p.specified_cbi, *s));
                }
            }
            if by_cond.is_empty() {
                continue;
            }
            let path = out_dir.join(format!("gap_{i}.svg"));
            draw(&path, "cross-model gap", "specified CBI", "max - min CBI", &by_cond.into_iter().collect(), true)?;
            written.push(path);
        }
    }
    if want(Selector::DoseResponse) {
        for d in &r.dose_response {
            let mut by_agent: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
            for c in &d.table.cells {
                if let Some(m) = c.mean {
                    by_agent.entry(format!("{} (CBI {:.2})", c.agent, c.cbi)).or_default().push((c.dose as f64, m));
                }
            }
            if by_agent.is_empty() {
                continue;
            }
            let path = out_dir.join(format!("dose_response_{}.svg", slug(&d.backend)));
            draw(&path, "dose response", "negative posts in feed", "mean sentiment", &by_agent.into_iter().collect(), true)?;
            written.push(path);
        }
    }
    if want(Selector::Transfers) {
        for t in &r.transfers {
            let pts = t.report.pairs.iter().map(|p| (p.cbi_source, p.cbi_target)).collect();
            let path = out_dir.join(format!(
                "transfer_{}_{}_{}_{}.svg",
                slug(&t.backend),
                slug(t.method.as_str()),
                slug(&t.report.source_paradigm),
                slug(&t.report.target_paradigm)
            ));
            let title = format!("{} r = {:.3}", t.method, t.report.pearson_r);
            draw(&path, &title, &t.report.source_paradigm, &t.report.target_paradigm, &vec![(t.backend.clone(), pts)], false)?;
            written.push(path);
        }
    }
    Ok(written)
}
