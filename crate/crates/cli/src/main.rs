mod args;

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use args::{BackendArgs, Cli, Command, Common, MethodArgs, TestbedCommand};
use cobra_core::backend::sidecar::make_sidecar_client;
use cobra_core::backend::{BackendConfig, ControlKind};
use cobra_core::contagion::{fit_line, DoseResponseConfig};
use cobra_core::regulation::{grid_from_range, ControlMethod, StabilityRange};
use cobra_core::report::{self, ExperimentConfig, FailureEntry, RunRecord, Selector, Task, TransferSpec};
use cobra_core::testbed::{load_testbed_file, Testbed};
use cobra_core::{Error, EXIT_NON_CONVERGENCE, EXIT_OK, EXIT_VALIDATION};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION as u8 } else { EXIT_OK as u8 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    e.chain().find_map(|c| c.downcast_ref::<Error>()).map_or(EXIT_VALIDATION, Error::exit_code)
}

fn dispatch(cli: Cli) -> Result<i32> {
    let runs = cli.runs_dir;
    match cli.command {
        Command::Measure { common, control } => {
            let config = build(&common, Task::Measure { control })?;
            execute(&config, &runs)
        }
        Command::Sweep { common, grid, direction, transfers } => {
            let grid = parse_grid(&grid)?;
            let transfers = transfers.iter().map(|t| parse_transfer(t)).collect::<Result<Vec<_>>>()?;
            let config = build(&common, Task::Sweep { grid, direction: direction.into(), transfers, gap: None })?;
            execute(&config, &runs)
        }
        Command::Calibrate { common, targets, tolerance, budget, transfer } => {
            let task = Task::Calibrate { targets, tolerance, budget, transfer_paradigm: transfer };
            let config = build(&common, task)?;
            execute(&config, &runs)
        }
        Command::Contagion { backend, preset, trials, corpus, method, seed } => {
            let doses = DoseResponseConfig { trials_per_cell: trials, seed, ..Default::default() };
            let mut agents = backends(&backend)?;
            for b in agents.iter_mut().filter(|b| b.endpoint == "mock") {
                let mock = b.mock.get_or_insert_with(Default::default);
                mock.contagion.get_or_insert_with(Default::default);
            }
            let mut config = ExperimentConfig::new(agents, Vec::new(), Task::Contagion { preset, doses, corpus });
            config.seed = seed;
            config.name = format!("contagion-{}", serde_json::to_value(preset)?.as_str().unwrap_or_default());
            apply_backend_sets(&mut config, &backend);
            config.methods = methods(&method, &config.backends)?;
            execute(&config, &runs)
        }
        Command::Run { config } => {
            let config = ExperimentConfig::load(&config).map_err(Error::from)?;
            execute(&config, &runs)
        }
        Command::Eval { run, export, out, plots, rerun } => eval(&runs, &run, export, out, plots, rerun),
        Command::Testbed { command } => match command {
            TestbedCommand::Validate { file } => validate_testbed(&file),
            TestbedCommand::List => {
                list_paradigms(&Testbed::bundled());
                Ok(EXIT_OK)
            }
        },
    }
}

fn build(common: &Common, task: Task) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::new(backends(&common.backend)?, common.paradigms.clone(), task);
    config.seed = common.seed;
    config.alpha = common.alpha;
    config.testbed_files = common.testbeds.clone();
    apply_backend_sets(&mut config, &common.backend);
    config.methods = methods(&common.method, &config.backends)?;
    if let Task::Measure { control: Some(c) } = &config.task {
        if !config.methods.iter().any(|m| m.kind == c.kind) {
            let m = single_method(c.kind, &common.method, &config.backends)?;
            config.methods.push(m);
        }
    }
    Ok(config)
}

fn apply_backend_sets(config: &mut ExperimentConfig, args: &BackendArgs) {
    config.temperatures = args.temperatures.clone();
    config.reasoning_modes = args.reasoning.iter().map(|&r| r.into()).collect();
}

fn backends(args: &BackendArgs) -> Result<Vec<BackendConfig>> {
    args.backends.iter().map(|b| backend_config(b, args)).collect()
}

fn backend_config(spec: &str, args: &BackendArgs) -> Result<BackendConfig> {
    let mut config = if spec.ends_with(".json") || Path::new(spec).is_file() {
        let text = std::fs::read_to_string(spec).with_context(|| format!("reading backend config {spec}"))?;
        serde_json::from_str::<BackendConfig>(&text).with_context(|| format!("parsing backend config {spec}"))?
    } else {
        match spec {
            "mock" | "api" | "sidecar" | "scripted" => BackendConfig {
                endpoint: spec.to_owned(),
                model_name: spec.to_owned(),
                ..Default::default()
            },
            url if url.starts_with("http://") || url.starts_with("https://") => {
                BackendConfig { endpoint: url.to_owned(), model_name: "model".into(), ..Default::default() }
            }
            other => bail!("unknown backend `{other}` (expected mock, api, sidecar, a URL or a JSON file)"),
        }
    };
    if let Some(m) = &args.model {
        config.model_name = m.clone();
    }
    if let [t] = args.temperatures.as_slice() {
        config.temperature = *t;
    }
    if let Some(n) = args.samples {
        config.max_samples = n;
    }
    if args.logprobs {
        config.logprobs = true;
    }
    Ok(config)
}

fn methods(args: &MethodArgs, backends: &[BackendConfig]) -> Result<Vec<ControlMethod>> {
    args.methods
        .iter()
        .map(|m| {
            let kind: ControlKind = m.parse().map_err(|e| anyhow::anyhow!("{e}"))?;
            single_method(kind, args, backends)
        })
        .collect()
}

/// Resolve a method, asking the sidecar for the stability range of a steering
/// vector when no range is given.
fn single_method(kind: ControlKind, args: &MethodArgs, backends: &[BackendConfig]) -> Result<ControlMethod> {
    let mut method = if !kind.is_steering() {
        ControlMethod::default_for(kind)
    } else if let Some(r) = &args.lambda_range {
        let (a, b) = r.split_once(':').with_context(|| format!("expected min:max, got `{r}`"))?;
        let range = StabilityRange { lambda_min: a.trim().parse()?, lambda_max: b.trim().parse()? };
        ControlMethod::steering(kind, range).map_err(Error::from)?
    } else if let (Some(id), Some(sidecar)) = (&args.vector_id, backends.iter().find(|b| is_sidecar(b))) {
        let client = make_sidecar_client(sidecar.clone()).map_err(Error::from)?;
        let s = client.stability(id).map_err(Error::from)?;
        ControlMethod::steering(kind, StabilityRange { lambda_min: s.lambda_min, lambda_max: s.lambda_max }).map_err(Error::from)?
    } else {
        ControlMethod::default_for(kind)
    };
    if let Some(id) = &args.vector_id {
        method = method.with_vector_id(id);
    }
    if let Some(id) = &args.task_id {
        method = method.with_task_id(id);
    }
    Ok(method)
}

fn is_sidecar(b: &BackendConfig) -> bool {
    b.endpoint == "sidecar"
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, step] = parts.as_slice() else {
        bail!(validation(format!("grid must be start:stop:step, got `{s}`")));
    };
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| validation(format!("bad grid value `{x}`: {e}")));
    Ok(grid_from_range(num(a)?, num(b)?, num(step)?).map_err(Error::from)?)
}

fn parse_transfer(s: &str) -> Result<TransferSpec> {
    let (source, target) = s.split_once(':').ok_or_else(|| validation(format!("transfer must be source:target, got `{s}`")))?;
    Ok(TransferSpec { source: source.to_owned(), target: target.to_owned() })
}

fn validation(msg: String) -> Error {
    Error::Report(report::ReportError::Validation(msg))
}

fn execute(config: &ExperimentConfig, runs: &Path) -> Result<i32> {
    let record = report::run(config, runs)?;
    summarize(&record, &mut io::stdout().lock())?;
    Ok(outcome(&record))
}

fn outcome(record: &RunRecord) -> i32 {
    if record.unconverged().is_empty() {
        EXIT_OK
    } else {
        EXIT_NON_CONVERGENCE
    }
}

fn summarize(record: &RunRecord, out: &mut impl Write) -> io::Result<()> {
    let r = &record.results;
    writeln!(out, "run {} ({:?})", record.run_id, record.status)?;
    for m in &r.measurements {
        let control = m.control.map(|c| format!(" {}:{}", c.kind, c.coefficient)).unwrap_or_default();
        writeln!(
            out,
            "  {} {}{}: CBI {:.4} ± {:.4} (n={})",
            m.backend, m.measurement.paradigm_id, control, m.measurement.value, m.measurement.stderr, m.measurement.n_variants
        )?;
    }
    for m in &r.metrics {
        let rep = &m.report;
        let d2 = rep.delta2.map_or("-".to_owned(), |v| format!("{v:.4}"));
        writeln!(
            out,
            "  {} {} {}: NDCG {:.4} rho {:.4} D1 {:.4} D2 {} E {:.4}",
            m.backend, m.method, m.paradigm_id, rep.ndcg, rep.spearman_rho, rep.delta1, d2, rep.expressiveness
        )?;
    }
    for t in &r.transfers {
        writeln!(
            out,
            "  {} {} {} -> {}: r {:.4}",
            t.backend, t.method, t.report.source_paradigm, t.report.target_paradigm, t.report.pearson_r
        )?;
    }
    for c in &r.calibrations {
        let c2 = &c.result;
        let status = if c2.converged { "converged" } else { "not converged" };
        writeln!(
            out,
            "  {} {} target {:.3}: CBI {:.4} at {} {} after {} evaluations, {status}",
            c.backend, c2.paradigm_id, c2.target_cbi, c2.achieved_cbi, c2.method, c2.coefficient, c2.evaluations
        )?;
        if let Some(note) = &c2.note {
            writeln!(out, "    {note}")?;
        }
    }
    for d in &r.dose_response {
        let mut agents: Vec<(&str, f64)> = d.table.cells.iter().map(|c| (c.agent.as_str(), c.cbi)).collect();
        agents.dedup_by(|a, b| a.0 == b.0);
        for (agent, cbi) in agents {
            let fit = fit_line(&d.table.observations(agent))
                .map_or("no fit".to_owned(), |f| format!("slope {:.5} ± {:.5}", f.slope, f.slope_stderr));
            writeln!(out, "  {} {agent} (CBI {cbi:.3}): {fit}", d.backend)?;
        }
    }
    let failures = record.failures.iter().filter(|f| !matches!(f, FailureEntry::BackendStats { .. })).count();
    if failures > 0 {
        writeln!(out, "  {failures} failure record(s)")?;
    }
    Ok(())
}

fn eval(
    runs: &Path,
    run: &str,
    export: Option<String>,
    out: Option<PathBuf>,
    plots: Option<PathBuf>,
    rerun: bool,
) -> Result<i32> {
    let record = report::load_run(runs, run).map_err(Error::from)?;
    let record = if rerun { report::rerun(&record, runs)? } else { record };
    match export {
        Some(sel) => {
            let selector: Selector = sel.parse().map_err(|e: String| validation(e))?;
            match &out {
                Some(path) => {
                    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
                    report::export_csv(&record, selector, f).map_err(Error::from)?;
                }
                None => report::export_csv(&record, selector, io::stdout().lock()).map_err(Error::from)?,
            }
        }
        None => summarize(&record, &mut io::stdout().lock())?,
    }
    if let Some(dir) = plots {
        let only = None;
        for p in report::emit_plots(&record, only, &dir).map_err(Error::from)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(outcome(&record))
}

fn validate_testbed(file: &Path) -> Result<i32> {
    let mut tb = Testbed::empty();
    if let Err(e) = load_testbed_file(file).and_then(|specs| tb.register(specs)) {
        eprintln!("invalid: {e}");
        return Ok(EXIT_VALIDATION);
    }
    println!("ok: {}", file.display());
    list_paradigms(&tb);
    let bundled = Testbed::bundled();
    for p in tb.paradigms().iter().filter(|p| bundled.get(&p.id).is_some()) {
        println!("note: {} shadows a bundled paradigm", p.id);
    }
    Ok(EXIT_OK)
}

fn list_paradigms(tb: &Testbed) {
    for p in tb.paradigms() {
        println!("  {:<24} {:<16} {} variants", p.id, p.bias.id(), p.variant_count());
    }
}
