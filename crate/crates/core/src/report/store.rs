use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    CalibrationEntry, CurveEntry, DoseResponseEntry, ExperimentConfig, FailureEntry, MeasurementEntry, MetricsEntry,
    ReportError, RunRecord, RunStatus, TransferEntry,
};
use crate::metrics::GapCurve;

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

/// One line of the event log.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", content = "data", rename_all = "snake_case")]
enum Event {
    Start { schema_version: String, run_id: String, timestamp: String, config: Box<ExperimentConfig> },
    Measurement(MeasurementEntry),
    Curve(CurveEntry),
    Metrics(MetricsEntry),
    Calibration(CalibrationEntry),
    Transfer(TransferEntry),
    Gap(GapCurve),
    DoseResponse(DoseResponseEntry),
    Failure(FailureEntry),
    Finish { status: RunStatus },
}

/// Single writer of a run directory. Every result is appended to the event
/// log and flushed before the in-memory record is updated.
pub struct RunWriter {
    dir: PathBuf,
    events: File,
    record: RunRecord,
}

impl RunWriter {
    pub fn create(runs_dir: &Path, record: RunRecord) -> Result<Self, ReportError> {
        let dir = runs_dir.join(&record.run_id);
        if dir.join(EVENTS_FILE).exists() {
            return Err(ReportError::Validation(format!("run {} already exists", record.run_id)));
        }
        fs::create_dir_all(&dir).map_err(|e| ReportError::io(&dir, e))?;
        let path = dir.join(EVENTS_FILE);
        let events = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| ReportError::io(&path, e))?;
        let mut w = Self { dir, events, record };
        w.append(&Event::Start {
            schema_version: w.record.schema_version.clone(),
            run_id: w.record.run_id.clone(),
            timestamp: w.record.timestamp.clone(),
            config: Box::new(w.record.config.clone()),
        })?;
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    fn append(&mut self, event: &Event) -> Result<(), ReportError> {
        let path = self.dir.join(EVENTS_FILE);
        let mut line = serde_json::to_string(event).map_err(|e| ReportError::io(&path, e))?;
        line.push('\n');
        self.events.write_all(line.as_bytes()).map_err(|e| ReportError::io(&path, e))?;
        self.events.flush().map_err(|e| ReportError::io(&path, e))
    }

    pub fn measurement(&mut self, e: MeasurementEntry) -> Result<(), ReportError> {
        self.append(&Event::Measurement(e.clone()))?;
        self.record.results.measurements.push(e);
        Ok(())
    }

    pub fn curve(&mut self, e: CurveEntry) -> Result<(), ReportError> {
        self.append(&Event::Curve(e.clone()))?;
        self.record.results.curves.push(e);
        Ok(())
    }

    pub fn metrics(&mut self, e: MetricsEntry) -> Result<(), ReportError> {
        self.append(&Event::Metrics(e.clone()))?;
        self.record.results.metrics.push(e);
        Ok(())
    }

    pub fn calibration(&mut self, e: CalibrationEntry) -> Result<(), ReportError> {
        self.append(&Event::Calibration(e.clone()))?;
        self.record.results.calibrations.push(e);
        Ok(())
    }

    pub fn transfer(&mut self, e: TransferEntry) -> Result<(), ReportError> {
        self.append(&Event::Transfer(e.clone()))?;
        self.record.results.transfers.push(e);
        Ok(())
    }

    pub fn gap(&mut self, e: GapCurve) -> Result<(), ReportError> {
        self.append(&Event::Gap(e.clone()))?;
        self.record.results.gaps.push(e);
        Ok(())
    }

    pub fn dose_response(&mut self, e: DoseResponseEntry) -> Result<(), ReportError> {
        self.append(&Event::DoseResponse(e.clone()))?;
        self.record.results.dose_response.push(e);
        Ok(())
    }

    pub fn failure(&mut self, e: FailureEntry) -> Result<(), ReportError> {
        self.append(&Event::Failure(e.clone()))?;
        self.record.failures.push(e);
        Ok(())
    }

    /// Close the log and write the summary document.
    pub fn finish(mut self, status: RunStatus) -> Result<RunRecord, ReportError> {
        self.append(&Event::Finish { status: status.clone() })?;
        self.record.status = status;
        write_summary(&self.dir, &self.record)?;
        Ok(self.record)
    }
}

fn write_summary(dir: &Path, record: &RunRecord) -> Result<(), ReportError> {
    let path = dir.join(SUMMARY_FILE);
    let tmp = dir.join(format!("{SUMMARY_FILE}.tmp"));
    let text = serde_json::to_string_pretty(record).map_err(|e| ReportError::io(&path, e))?;
    fs::write(&tmp, text).map_err(|e| ReportError::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| ReportError::io(&path, e))
}

fn check_version(found: &str) -> Result<(), ReportError> {
    if found.split('.').next() == Some("1") {
        Ok(())
    } else {
        Err(ReportError::UnsupportedSchema { found: found.to_owned() })
    }
}

fn malformed(path: &Path, message: impl std::fmt::Display) -> ReportError {
    ReportError::Malformed { path: path.to_owned(), message: message.to_string() }
}

/// Load a run by id from `runs_dir`, or from a path to a run directory or
/// summary file. Runs without a summary (interrupted) are rebuilt from their
/// event log.
pub fn load_run(runs_dir: &Path, id_or_path: &str) -> Result<RunRecord, ReportError> {
    let direct = PathBuf::from(id_or_path);
    let dir = if direct.is_file() {
        return load_summary(&direct);
    } else if direct.is_dir() && direct.join(EVENTS_FILE).exists() {
        direct
    } else {
        runs_dir.join(id_or_path)
    };
    let summary = dir.join(SUMMARY_FILE);
    if summary.exists() {
        return load_summary(&summary);
    }
    let events = dir.join(EVENTS_FILE);
    if events.exists() {
        return replay(&events);
    }
    Err(ReportError::RunNotFound(id_or_path.to_owned()))
}

fn load_summary(path: &Path) -> Result<RunRecord, ReportError> {
    let text = fs::read_to_string(path).map_err(|e| ReportError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| malformed(path, e))?;
    let version = value.get("schema_version").and_then(|v| v.as_str()).ok_or_else(|| malformed(path, "missing schema_version"))?;
    check_version(version)?;
    serde_json::from_value(value).map_err(|e| malformed(path, e))
}

fn replay(path: &Path) -> Result<RunRecord, ReportError> {
    let file = File::open(path).map_err(|e| ReportError::io(path, e))?;
    let mut record: Option<RunRecord> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ReportError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| malformed(path, e))?;
            if let Some(v) = value.pointer("/data/schema_version").and_then(|v| v.as_str()) {
                check_version(v)?;
            }
        }
        let event: Event = match serde_json::from_str(&line) {
            Ok(e) => e,
            // a crash can leave a torn final line
            Err(e) => {
                log::warn!("{}:{}: skipping unreadable event: {e}", path.display(), i + 1);
                continue;
            }
        };
        match (event, record.as_mut()) {
            (Event::Start { schema_version, run_id, timestamp, config }, None) => {
                let mut r = RunRecord::new(&run_id, *config);
                r.schema_version = schema_version;
                r.timestamp = timestamp;
                record = Some(r);
            }
            (Event::Start { .. }, Some(_)) => return Err(malformed(path, "duplicate start event")),
            (_, None) => return Err(malformed(path, "log does not begin with a start event")),
            (Event::Measurement(e), Some(r)) => r.results.measurements.push(e),
            (Event::Curve(e), Some(r)) => r.results.curves.push(e),
            (Event::Metrics(e), Some(r)) => r.results.metrics.push(e),
            (Event::Calibration(e), Some(r)) => r.results.calibrations.push(e),
            (Event::Transfer(e), Some(r)) => r.results.transfers.push(e),
            (Event::Gap(e), Some(r)) => r.results.gaps.push(e),
            (Event::DoseResponse(e), Some(r)) => r.results.dose_response.push(e),
            (Event::Failure(e), Some(r)) => r.failures.push(e),
            (Event::Finish { status }, Some(r)) => r.status = status,
        }
    }
    let mut record = record.ok_or_else(|| malformed(path, "empty event log"))?;
    if record.status == RunStatus::Running {
        record.status = RunStatus::Aborted;
    }
    Ok(record)
}

/// Run ids under `runs_dir`, oldest first.
pub fn list_runs(runs_dir: &Path) -> Result<Vec<String>, ReportError> {
    let Ok(entries) = fs::read_dir(runs_dir) else {
        return Ok(Vec::new());
    };
    let mut ids: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join(EVENTS_FILE).exists())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    ids.sort();
    Ok(ids)
}
