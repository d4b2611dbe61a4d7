"""Smoke test for the `cobra` extension module.

Build and install first:

    maturin build -m crates/py/Cargo.toml -o dist && pip install dist/cobra_bias-*.whl

then run `python python/smoke_test.py`.
"""

import json
import math
import sys
import tempfile
from pathlib import Path

import cobra


def check(cond, what):
    if not cond:
        raise AssertionError(what)
    print(f"ok  {what}")


def main():
    tb = cobra.Testbed()
    check(len(tb) == 8 and "asch_line" in tb, "bundled testbed has eight paradigms")
    check(tb.variant_count("milgram_obedience") == 75, "milgram expands to 75 variants")
    check(tb.bias("wason_selection") == "confirmation", "paradigm bias lookup")
    variants = tb.variants("asch_line")
    check(len(variants) == 15 and "rendered_scenario" in variants[0], "variants come back as dicts")

    check(cobra.cbi([[1, 0, 0, 0, 0]]) == 4.0, "all mass on the most biased option gives 4")
    check(math.isclose(cobra.cbi([[0.2] * 5, [0, 0, 0, 0, 1]]), 1.0), "cbi averages variant scores")
    try:
        cobra.cbi([[0.5, 0.5, 0.5, 0, 0]])
        check(False, "unnormalized distribution rejected")
    except cobra.ValidationError:
        check(True, "unnormalized distribution rejected")

    mock = cobra.Backend()
    pn = cobra.ControlMethod("pn")
    check(pn.domain == (0.0, 1.0) and math.isclose(pn.quantization, 0.05), "prompt-numerical domain")
    m = cobra.measure(mock, "asch_line", method=pn, coefficient=0.5)
    check(abs(m["value"] - 2.0) < 1e-9 and m["n_variants"] == 15, "mock responds with 4 * lambda")

    grid = [0.0, 0.25, 0.5, 0.75, 1.0]
    curve = cobra.sweep(mock, "hotel_towel", grid)
    values = [p["cbi"]["value"] for p in curve["points"]]
    check(all(abs(v - 4 * x) < 1e-9 for v, x in zip(values, grid)), "sweep follows the programmed response")
    report = cobra.evaluate(grid, values)
    check(report["ndcg"] == 1.0 and report["spearman_rho"] == 1.0, "monotone curve scores 1")
    check(abs(report["expressiveness"] - 4.0) < 1e-9, "full-range expressiveness")

    r = cobra.calibrate(mock, "asch_line", 2.6)
    check(r["converged"] and abs(r["achieved_cbi"] - 2.6) <= 0.05, "calibration reaches 2.6")
    try:
        cobra.calibrate(mock, "asch_line", 0.1, strict=True)
        check(False, "strict calibration raises on an unreachable target")
    except cobra.NonConvergenceError:
        check(True, "strict calibration raises on an unreachable target")

    with tempfile.TemporaryDirectory() as tmp:
        config = {
            "backends": [{"endpoint": "mock", "model_name": "mock"}],
            "paradigms": ["asch_line", "wason_selection"],
            "task": {"kind": "sweep", "grid": grid},
        }
        rec = cobra.run(config, runs_dir=tmp)
        check(rec.status == "complete" and rec.converged, "sweep run completes")
        again = cobra.load_run(rec.run_id, runs_dir=tmp)
        check(json.dumps(again.to_dict()) == json.dumps(rec.to_dict()), "stored run reloads unchanged")
        check(cobra.list_runs(tmp) == [rec.run_id], "run is listed")
        header = rec.csv("metrics").splitlines()[0]
        check(header.startswith("run_id,backend,method,paradigm_id,ndcg"), "metrics CSV header")
        plots = rec.plots(Path(tmp) / "figs")
        check(len(plots) == 2 and all(Path(p).suffix == ".svg" for p in plots), "curve figures rendered")
        try:
            cobra.run({**config, "paradigms": ["nope"]}, runs_dir=tmp)
            check(False, "unknown paradigm rejected")
        except cobra.ValidationError:
            check(True, "unknown paradigm rejected")

    try:
        cobra.Backend({"endpoint": "http://127.0.0.1:9", "logprobs": True,
                       "retry_policy": {"max_retries": 0}, "request_timeout_secs": 1})
        check(False, "missing api key is a configuration error")
    except cobra.ValidationError:
        check(True, "missing api key is a configuration error")

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
