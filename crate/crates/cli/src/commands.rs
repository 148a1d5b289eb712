//! The four subcommands. Each prints to the given writer and reports
//! failures as a classified `CliError`.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use vproj_core::bench::{
    format_mse_table, rate_study, run_experiment, write_trace_csv, ExperimentDescriptor, ExperimentKind,
    ExperimentReport, InitSpec, MethodRun, PreparedExperiment, RateStudy, ResidualRegime, DEFAULT_EXPERIMENT_BUDGET,
};
use vproj_core::optim::{Method, OptimizerConfig};
use vproj_core::reduced::SeparableProblem;
use vproj_core::verify::{run_property, Corruption, Property, PropertyReport, VerifyOptions};

use crate::artifact::{
    trace_hash, trace_path_for, write_atomic, write_json_atomic, write_trace_atomic, RunArtifact, SCHEMA_VERSION,
};
use crate::config::{parse_selector, Cli, Command, OutputFormat, Settings};
use crate::error::{CliError, CliResult};

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let file = match &cli.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    match cli.command {
        Command::Fit(args) => {
            let replay = args.replay.clone();
            let settings = file.overlay(args.into());
            match replay {
                Some(path) => replay_artifact(&path, &settings, out),
                None => fit(&settings, out),
            }
        }
        Command::Experiment(args) => experiment(&file.overlay(args.into()), out),
        Command::Verify(args) => {
            let corrupt = args.corrupt_jacobian;
            verify(&file.overlay(args.into()), corrupt, out)
        }
        Command::Rates(args) => rates(&file.overlay(args.into()), out),
    }
}

/// Combined output of `experiment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDocument {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: ExperimentDescriptor,
    /// Per-method artifact files, relative to the report.
    pub artifacts: Vec<String>,
    pub table: String,
    pub report: ExperimentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyDocument {
    pub schema_version: u32,
    pub seed: u64,
    pub corruption: Option<Corruption>,
    pub passed: bool,
    pub properties: Vec<PropertyReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesDocument {
    pub schema_version: u32,
    pub study: RateStudy,
}

fn descriptor(
    kind: ExperimentKind,
    methods: Vec<Method>,
    s: &Settings,
    default_budget: usize,
) -> CliResult<ExperimentDescriptor> {
    let mut d = ExperimentDescriptor::new(kind).with_seed(s.seed.unwrap_or(0));
    d.methods = methods;
    d.data_path = s.data.clone();
    if let Some(f) = s.train_split {
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::Usage(format!(
                "--train-split must lie strictly between 0 and 1, got {f}"
            )));
        }
        d.train_split = Some(f);
    }
    if let Some(a0) = &s.init {
        d.init = InitSpec::Explicit(a0.clone());
    }
    d.base.max_iters = s.max_iters.unwrap_or(default_budget);
    if let Some(e) = s.epsilon {
        d.base.epsilon = e;
    }
    if let Some(j) = &s.jacobian {
        d.base.jacobian = parse_selector(j)?;
    }
    if let [only] = d.methods[..] {
        d.base.method = only;
    }
    d.base.validate().map_err(CliError::usage)?;
    Ok(d)
}

/// Loads the data and checks the starting point before any solver runs, so
/// that input problems and solver failures map to different exit codes.
fn execute(desc: &ExperimentDescriptor) -> CliResult<ExperimentReport> {
    let mut seeded = desc.clone();
    seeded.init = InitSpec::Seeded;
    let prepared = PreparedExperiment::prepare(&seeded).map_err(CliError::data)?;
    if let InitSpec::Explicit(a0) = &desc.init {
        let n = prepared.model().n_nonlinear();
        if a0.len() != n {
            return Err(CliError::Usage(format!(
                "--init has {} values but {} takes {n} nonlinear parameters",
                a0.len(),
                prepared.model().name()
            )));
        }
        let problem = SeparableProblem::new(prepared.model(), &prepared.train).map_err(CliError::data)?;
        problem
            .check_bounds(&DVector::from_vec(a0.clone()))
            .map_err(CliError::usage)?;
    }
    run_experiment(desc).map_err(CliError::numerical)
}

/// Writes the trace CSV and the artifact that points at it.
fn emit_run(
    path: &Path,
    mut config: ExperimentDescriptor,
    report: &ExperimentReport,
    run: &MethodRun,
) -> CliResult<RunArtifact> {
    config.methods = vec![run.method];
    config.base.method = run.method;
    let trace_path = trace_path_for(path);
    write_trace_atomic(&trace_path, &run.trace)?;
    let name = trace_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let artifact = RunArtifact::new(
        config,
        report.model.clone(),
        report.a0.clone(),
        report.provenance.clone(),
        run,
        name,
    );
    write_json_atomic(path, &artifact)?;
    Ok(artifact)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"))
}

fn fit(s: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let kind = ExperimentKind::from_model_name(s.model.as_deref().unwrap_or("complex-exp")).map_err(CliError::usage)?;
    let method: Method = parse_selector(s.optimizer.as_deref().unwrap_or("vplr"))?;
    let desc = descriptor(kind, vec![method], s, OptimizerConfig::default().max_iters)?;
    let report = execute(&desc)?;
    let run = report
        .runs
        .first()
        .ok_or_else(|| CliError::Numerical("no run was produced".into()))?;
    let path = s
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("fit-{}-{}-seed{}.json", kind.model_name(), method, desc.seed)));
    let artifact = emit_run(&path, desc, &report, run)?;
    match s.format {
        None => writeln!(
            out,
            "{} {} on {}: {:?} after {} iterations, objective {:.6e}, train MSE {:.6e}, test MSE {}\nartifact {}\ntrace hash {}",
            method.label(),
            artifact.config.base.jacobian,
            artifact.model,
            artifact.termination,
            artifact.iterations,
            artifact.objective,
            artifact.train_mse,
            fmt_opt(artifact.test_mse),
            path.display(),
            artifact.trace_hash
        )?,
        Some(OutputFormat::Json) => {
            serde_json::to_writer_pretty(&mut *out, &artifact).map_err(CliError::data)?;
            writeln!(out)?;
        }
        Some(OutputFormat::Csv) => write_trace_csv(&mut *out, &run.trace).map_err(CliError::data)?,
    }
    Ok(())
}

fn replay_artifact(path: &Path, s: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let artifact = RunArtifact::load(path)?;
    let report = execute(&artifact.config)?;
    let run = report
        .runs
        .first()
        .ok_or_else(|| CliError::Numerical("no run was produced".into()))?;
    let hash = trace_hash(&run.trace);
    if let Some(new_path) = &s.out {
        emit_run(new_path, artifact.config.clone(), &report, run)?;
    }
    let same = hash == artifact.trace_hash;
    match s.format {
        Some(OutputFormat::Json) => {
            let doc = serde_json::json!({
                "artifact": path.display().to_string(),
                "recorded_hash": artifact.trace_hash,
                "replayed_hash": hash,
                "identical": same,
            });
            serde_json::to_writer_pretty(&mut *out, &doc).map_err(CliError::data)?;
            writeln!(out)?;
        }
        Some(OutputFormat::Csv) => write_trace_csv(&mut *out, &run.trace).map_err(CliError::data)?,
        None => writeln!(
            out,
            "replay of {}: trace {} ({hash})",
            path.display(),
            if same { "identical" } else { "differs" }
        )?,
    }
    if same {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "replayed trace hash {hash} differs from recorded {}",
            artifact.trace_hash
        )))
    }
}

fn parse_methods(list: &str) -> CliResult<Vec<Method>> {
    if list.trim() == "all" {
        return Ok(Method::ALL.to_vec());
    }
    let mut methods = Vec::new();
    for name in list.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        let m: Method = parse_selector(name)?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(CliError::Usage("--optimizer needs at least one method".into()));
    }
    methods.sort();
    Ok(methods)
}

fn experiment(s: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.as_str()).collect();
    let name = s
        .experiment
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("name an experiment: {}", names.join(", "))))?;
    let kind: ExperimentKind = parse_selector(name)?;
    let methods = parse_methods(s.optimizer.as_deref().unwrap_or("all"))?;
    let desc = descriptor(kind, methods, s, DEFAULT_EXPERIMENT_BUDGET)?;
    let report = execute(&desc)?;

    let dir = s
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("vproj-{kind}-seed{}", desc.seed)));
    let mut artifacts = Vec::new();
    for run in &report.runs {
        let file = format!("{}.json", run.method);
        emit_run(&dir.join(&file), desc.clone(), &report, run)?;
        artifacts.push(file);
    }
    let table = format_mse_table(&report);
    write_atomic(&dir.join("table.txt"), |w| Ok(w.write_all(table.as_bytes())?))?;
    let doc = ExperimentDocument {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: desc,
        artifacts,
        table: table.clone(),
        report,
    };
    write_json_atomic(&dir.join("report.json"), &doc)?;

    match s.format {
        None => {
            writeln!(
                out,
                "{} ({}), seed {}, {} train / {} test rows, data {:?}",
                kind, doc.report.model, doc.report.seed, doc.report.n_train, doc.report.n_test, doc.report.provenance
            )?;
            write!(out, "{table}")?;
            writeln!(out, "report {}", dir.join("report.json").display())?;
        }
        Some(OutputFormat::Json) => {
            serde_json::to_writer_pretty(&mut *out, &doc).map_err(CliError::data)?;
            writeln!(out)?;
        }
        Some(OutputFormat::Csv) => {
            let mut w = csv::Writer::from_writer(&mut *out);
            let row = |w: &mut csv::Writer<_>, fields: &[String]| w.write_record(fields).map_err(CliError::data);
            let header = [
                "method",
                "train_mse",
                "test_mse",
                "objective",
                "iterations",
                "termination",
            ];
            row(&mut w, &header.map(String::from))?;
            for r in &doc.report.runs {
                row(
                    &mut w,
                    &[
                        r.method.to_string(),
                        format!("{:e}", r.train_mse),
                        r.test_mse.map_or_else(String::new, |v| format!("{v:e}")),
                        format!("{:e}", r.objective),
                        r.iterations.to_string(),
                        format!("{:?}", r.termination),
                    ],
                )?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn verify(s: &Settings, corrupt: bool, out: &mut dyn Write) -> CliResult<()> {
    let properties: Vec<Property> = match &s.property {
        None => Property::ALL.to_vec(),
        Some(list) => list
            .iter()
            .flat_map(|v| v.split(','))
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(parse_selector)
            .collect::<CliResult<_>>()?,
    };
    if s.instances == Some(0) {
        return Err(CliError::Usage("--instances must be at least 1".into()));
    }
    let opts = VerifyOptions {
        seed: s.seed.unwrap_or(0),
        instances: s.instances,
        corruption: corrupt.then_some(Corruption::FlipJacobianSign),
    };
    let reports = properties
        .iter()
        .map(|&p| run_property(p, &opts).map_err(CliError::numerical))
        .collect::<CliResult<Vec<_>>>()?;
    let doc = VerifyDocument {
        schema_version: SCHEMA_VERSION,
        seed: opts.seed,
        corruption: opts.corruption,
        passed: reports.iter().all(PropertyReport::passed),
        properties: reports,
    };
    if let Some(path) = &s.out {
        write_json_atomic(path, &doc)?;
    }

    match s.format {
        None => {
            for r in &doc.properties {
                writeln!(
                    out,
                    "{} {} ({} instances)",
                    if r.passed() { "PASS" } else { "FAIL" },
                    r.property,
                    r.instances
                )?;
                for c in &r.checks {
                    writeln!(
                        out,
                        "    {:<44} max {:.3e}  gate {:.0e}  samples {}",
                        c.name, c.max_error, c.gate, c.samples
                    )?;
                }
            }
        }
        Some(OutputFormat::Json) => {
            serde_json::to_writer_pretty(&mut *out, &doc).map_err(CliError::data)?;
            writeln!(out)?;
        }
        Some(OutputFormat::Csv) => {
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record(["property", "check", "max_error", "gate", "samples", "passed"])
                .map_err(CliError::data)?;
            for r in &doc.properties {
                for c in &r.checks {
                    w.write_record([
                        r.property.to_string(),
                        c.name.clone(),
                        format!("{:e}", c.max_error),
                        format!("{:e}", c.gate),
                        c.samples.to_string(),
                        c.passed().to_string(),
                    ])
                    .map_err(CliError::data)?;
                }
            }
            w.flush()?;
        }
    }

    if doc.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = doc
            .properties
            .iter()
            .filter(|r| !r.passed())
            .map(|r| r.property.as_str())
            .collect();
        Err(CliError::Property(failed.join(", ")))
    }
}

fn rates(s: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let model = s.model.as_deref().unwrap_or("complex-exp");
    if model != "complex-exp" {
        return Err(CliError::Usage(format!(
            "rates runs on complex-exp only, got '{model}'"
        )));
    }
    let regime: ResidualRegime = parse_selector(s.residual.as_deref().unwrap_or("small"))?;
    let study = rate_study(regime, s.seed.unwrap_or(0)).map_err(CliError::numerical)?;
    let doc = RatesDocument {
        schema_version: SCHEMA_VERSION,
        study,
    };
    if let Some(path) = &s.out {
        write_json_atomic(path, &doc)?;
    }
    let study = &doc.study;

    match s.format {
        None => {
            writeln!(
                out,
                "{regime:?} residual (noise sigma {}), seed {}",
                study.noise_sigma, study.seed
            )?;
            for (variant, est) in &study.estimates {
                match est {
                    Ok(e) => writeln!(
                        out,
                        "    {:<8} q = {:.3}  K = {:.3e}  errors {}..{} ({} pairs, rms {:.2e})",
                        variant.as_str(),
                        e.order,
                        e.linear_factor,
                        e.window.0,
                        e.window.1,
                        e.pairs,
                        e.fit_residual
                    )?,
                    Err(reason) => writeln!(out, "    {:<8} rejected: {reason}", variant.as_str())?,
                }
            }
            if let Some(t) = &study.threshold {
                let it = |v: Option<usize>| v.map_or_else(|| "never".to_string(), |i| i.to_string());
                writeln!(
                    out,
                    "    objective {:.6e} reached by VP at iteration {}, VPLR at iteration {}",
                    t.threshold,
                    it(t.vp_iterations),
                    it(t.vplr_iterations)
                )?;
            }
        }
        Some(OutputFormat::Json) => {
            serde_json::to_writer_pretty(&mut *out, &doc).map_err(CliError::data)?;
            writeln!(out)?;
        }
        Some(OutputFormat::Csv) => {
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record([
                "jacobian",
                "order",
                "linear_factor",
                "first",
                "last",
                "pairs",
                "fit_residual",
                "status",
            ])
            .map_err(CliError::data)?;
            for (variant, est) in &study.estimates {
                let rec: Vec<String> = match est {
                    Ok(e) => vec![
                        variant.as_str().into(),
                        format!("{:e}", e.order),
                        format!("{:e}", e.linear_factor),
                        e.window.0.to_string(),
                        e.window.1.to_string(),
                        e.pairs.to_string(),
                        format!("{:e}", e.fit_residual),
                        "ok".into(),
                    ],
                    Err(reason) => vec![
                        variant.as_str().into(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        format!("rejected: {reason}"),
                    ],
                };
                w.write_record(&rec).map_err(CliError::data)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
