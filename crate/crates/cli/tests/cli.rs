use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn cobra(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cobra"))
        .current_dir(dir)
        .env_remove("COBRA_API_KEY")
        .env_remove("COBRA_BASE_URL")
        .env_remove("COBRA_SIDECAR_URL")
        .args(args)
        .output()
        .expect("spawn cobra")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_id(o: &Output) -> String {
    let out = stdout(o);
    let line = out.lines().find(|l| l.starts_with("run ")).unwrap_or_else(|| panic!("no run line in {out}"));
    line.split_whitespace().nth(1).unwrap().to_owned()
}

fn testbed_doc() -> Value {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/testbed/bandwagon.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn measure_with_prompt_control() {
    let tmp = TempDir::new().unwrap();
    let o = cobra(tmp.path(), &["measure", "--paradigm", "asch_line", "--backend", "mock", "--control", "pn:0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("asch_line prompt_numerical:0.5: CBI 2.0000"), "{}", stdout(&o));
    let id = run_id(&o);
    assert!(tmp.path().join("runs").join(&id).join("summary.json").is_file());
}

#[test]
fn sweep_then_eval_exports_and_plots() {
    let tmp = TempDir::new().unwrap();
    let o = cobra(
        tmp.path(),
        &["sweep", "--paradigm", "asch_line", "--paradigm", "hotel_towel", "--grid", "0:1:0.25", "--transfer", "asch_line:hotel_towel"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let id = run_id(&o);

    let csv = cobra(tmp.path(), &["eval", "--run", &id, "--export", "curves"]);
    assert_eq!(csv.status.code(), Some(0));
    let text = stdout(&csv);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("run_id,backend,method,paradigm_id,coefficient,cbi,stderr,n_variants"));
    assert_eq!(lines.count(), 10);

    let e = cobra(tmp.path(), &["eval", "--run", &id, "--export", "metrics", "--out", "m.csv", "--plots", "figs"]);
    assert_eq!(e.status.code(), Some(0), "{}", String::from_utf8_lossy(&e.stderr));
    let m = std::fs::read_to_string(tmp.path().join("m.csv")).unwrap();
    assert_eq!(m.lines().count(), 3);
    let svgs = std::fs::read_dir(tmp.path().join("figs")).unwrap().count();
    assert_eq!(svgs, 3);

    let bad = cobra(tmp.path(), &["eval", "--run", &id, "--export", "nonsense"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn unreachable_target_exits_three() {
    let tmp = TempDir::new().unwrap();
    let ok = cobra(tmp.path(), &["calibrate", "--paradigm", "asch_line", "--target", "2.6", "--tol", "0.05"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("converged"));
    let o = cobra(tmp.path(), &["calibrate", "--paradigm", "asch_line", "--target", "0.1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert!(stdout(&o).contains("not converged"));
    // eval of a stored unconverged run reports the same status
    let e = cobra(tmp.path(), &["eval", "--run", &run_id(&o)]);
    assert_eq!(e.status.code(), Some(3));
}

#[test]
fn validation_failures_exit_one() {
    let tmp = TempDir::new().unwrap();
    let cases: &[&[&str]] = &[
        &["measure", "--paradigm", "no_such_paradigm"],
        &["sweep", "--paradigm", "asch_line", "--grid", "1:0:0.1"],
        &["sweep", "--paradigm", "asch_line", "--grid", "0:1"],
        &["measure", "--paradigm", "asch_line", "--control", "pn:1.5"],
        &["measure", "--paradigm", "asch_line", "--backend", "api"],
        &["calibrate", "--paradigm", "asch_line", "--target", "5"],
        &["eval", "--run", "missing"],
    ];
    for args in cases {
        let o = cobra(tmp.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(!tmp.path().join("runs").exists() || std::fs::read_dir(tmp.path().join("runs")).unwrap().count() == 0);
}

#[test]
fn backend_failure_exits_two() {
    let tmp = TempDir::new().unwrap();
    let backend = json!({
        "endpoint": "http://127.0.0.1:9",
        "model_name": "offline",
        "retry_policy": {"max_retries": 0, "initial_backoff_ms": 1, "max_backoff_ms": 1, "multiplier": 1.0},
        "request_timeout_secs": 2
    });
    std::fs::write(tmp.path().join("b.json"), backend.to_string()).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cobra"))
        .current_dir(tmp.path())
        .env("COBRA_API_KEY", "k")
        .args(["measure", "--paradigm", "asch_line", "--backend", "b.json", "--samples", "1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("aborted"));
}

#[test]
fn contagion_preset_on_mock() {
    let tmp = TempDir::new().unwrap();
    let o = cobra(tmp.path(), &["contagion", "--preset", "baseline", "--trials", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    for degree in ["no", "little", "some", "much"] {
        assert!(out.contains(&format!("mock {degree} (CBI")), "{out}");
    }
    let csv = cobra(tmp.path(), &["eval", "--run", &run_id(&o), "--export", "dose_response"]);
    assert_eq!(stdout(&csv).lines().count(), 1 + 4 * 16);
    let bad = cobra(tmp.path(), &["contagion", "--preset", "loud"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn run_config_file_and_temperature_matrix() {
    let tmp = TempDir::new().unwrap();
    let config = json!({
        "backends": [{"endpoint": "mock", "model_name": "m"}],
        "temperatures": [0.2, 0.9],
        "paradigms": ["wason_selection"],
        "task": {"kind": "measure"}
    });
    std::fs::write(tmp.path().join("exp.json"), config.to_string()).unwrap();
    let o = cobra(tmp.path(), &["run", "exp.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("m@t0.2 wason_selection") && out.contains("m@t0.9 wason_selection"), "{out}");
}

#[test]
fn testbed_validate() {
    let tmp = TempDir::new().unwrap();
    let mut doc = testbed_doc();
    std::fs::write(tmp.path().join("good.json"), doc.to_string()).unwrap();
    let o = cobra(tmp.path(), &["testbed", "validate", "good.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("asch_line"));
    assert!(stdout(&o).contains("15 variants"));

    doc["paradigms"][0]["placeholders"].as_array_mut().unwrap().pop();
    std::fs::write(tmp.path().join("short.json"), doc.to_string()).unwrap();
    let o = cobra(tmp.path(), &["testbed", "validate", "short.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("invalid:"));

    std::fs::write(tmp.path().join("junk.json"), "{").unwrap();
    assert_eq!(cobra(tmp.path(), &["testbed", "validate", "junk.json"]).status.code(), Some(1));
    assert_eq!(cobra(tmp.path(), &["testbed", "validate", "absent.json"]).status.code(), Some(1));
}
