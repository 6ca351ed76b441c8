//! Experiment runner for `genflow`: strict TOML configs, check suites,
//! Fokker–Planck evolution and sampler runs, with JSON reports, CSV traces
//! and a hashed manifest.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod build;
pub mod config;
pub mod formats;
pub mod render;
pub mod report;
pub mod tasks;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{ExperimentConfig, Task};
use report::{ModelInfo, Report, REPORT_SCHEMA};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Unreadable or schema-invalid input.
    Schema(String),
    /// Anything that went wrong while computing.
    Runtime(String),
}

impl CliError {
    pub fn runtime(e: impl fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => EXIT_SCHEMA,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Schema(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<genflow::Error> for CliError {
    fn from(e: genflow::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Serialize)]
struct ManifestFile {
    name: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    library_version: &'static str,
    task: String,
    config_sha256: String,
    wall_clock_seconds: f64,
    files: Vec<ManifestFile>,
}

fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn model_info(b: &genflow::models::ModelBundle, kind: &str) -> ModelInfo {
    ModelInfo { kind: kind.into(), name: b.name.clone(), states: b.space().len(), h: b.h, params: b.params.clone() }
}

fn empty_report(task: Task, cfg: &ExperimentConfig) -> Report {
    Report {
        schema: REPORT_SCHEMA,
        library_version: env!("CARGO_PKG_VERSION").into(),
        task: task.name().into(),
        seed: cfg.seed,
        model: None,
        tolerances: cfg.tolerances.clone(),
        checks: Vec::new(),
        relations: Vec::new(),
        studies: Vec::new(),
        evolution: None,
        sampler: None,
        warnings: Vec::new(),
        pass: true,
        generated_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    }
}

/// Runs one task and writes its artifacts under `out`.
///
/// Independent parts of a full audit run on their own threads; the report
/// is assembled in a fixed order so it does not depend on scheduling.
pub fn execute(task: Task, cfg: &ExperimentConfig, config_text: &str, out: &Path) -> Result<Report, CliError> {
    let start = Instant::now();
    std::fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    let mut report = empty_report(task, cfg);
    let kind = format!("{:?}", cfg.model.kind).to_lowercase();

    let needs_bundle = !matches!(task, Task::PdmpSample);
    let bundle = if needs_bundle { Some(build::bundle(&cfg.model, None)?) } else { None };
    if let Some(b) = &bundle {
        report.model = Some(model_info(b, &kind));
        report.warnings.extend(b.warnings.iter().cloned());
        if cfg.save_generator {
            formats::write_matrix(tasks::create(&out.join("generator.coo"))?, &b.l)?;
        }
    }

    match task {
        Task::StructureCheck => {
            let s = tasks::structure_check(cfg, bundle.as_ref().expect("built"))?;
            report.checks = s.checks;
            report.studies = s.studies;
        }
        Task::HamiltonianCheck => report.relations = tasks::hamiltonian_check(cfg, bundle.as_ref().expect("built"))?,
        Task::FpEvolve => {
            let e = tasks::fp_evolve(cfg, bundle.as_ref().expect("built"), out)?;
            report.checks = e.checks;
            report.evolution = Some(e.section);
        }
        Task::PdmpSample => {
            let s = tasks::pdmp_sample(cfg, out)?;
            report.checks = s.checks;
            report.sampler = Some(s.section);
        }
        Task::FullAudit => {
            let b = bundle.as_ref().expect("built");
            let (st, ham, ev, sa) = std::thread::scope(|sc| {
                let st = sc.spawn(|| tasks::structure_check(cfg, b));
                let ham = sc.spawn(|| tasks::hamiltonian_check(cfg, b));
                let ev = cfg.evolve.as_ref().map(|_| sc.spawn(|| tasks::fp_evolve(cfg, b, out)));
                let sa = cfg.sample.as_ref().map(|_| sc.spawn(|| tasks::pdmp_sample(cfg, out)));
                (joined(st), joined(ham), ev.map(joined), sa.map(joined))
            });
            let st = st?;
            report.checks = st.checks;
            report.studies = st.studies;
            report.relations = ham?;
            if let Some(ev) = ev {
                let ev = ev?;
                report.checks.extend(ev.checks);
                report.evolution = Some(ev.section);
            }
            if let Some(sa) = sa {
                let sa = sa?;
                report.checks.extend(sa.checks);
                report.sampler = Some(sa.section);
            }
        }
    }
    report.settle();

    let text = serde_json::to_string_pretty(&report).map_err(CliError::runtime)? + "\n";
    std::fs::write(out.join("report.json"), &text).map_err(CliError::runtime)?;
    write_manifest(out, task, config_text, start.elapsed().as_secs_f64())?;
    Ok(report)
}

fn joined<T>(h: std::thread::ScopedJoinHandle<'_, Result<T, CliError>>) -> Result<T, CliError> {
    h.join().map_err(|_| CliError::Runtime("worker thread panicked".into()))?
}

fn write_manifest(out: &Path, task: Task, config_text: &str, wall: f64) -> Result<(), CliError> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(out)
        .map_err(CliError::runtime)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != "manifest.json"))
        .collect();
    names.sort();
    let mut files = Vec::with_capacity(names.len());
    for p in names {
        let bytes = std::fs::read(&p).map_err(CliError::runtime)?;
        files.push(ManifestFile { name: p.file_name().expect("file").to_string_lossy().into_owned(), sha256: hex_sha256(&bytes) });
    }
    let m = Manifest {
        library_version: env!("CARGO_PKG_VERSION"),
        task: task.name().into(),
        config_sha256: hex_sha256(config_text.as_bytes()),
        wall_clock_seconds: wall,
        files,
    };
    let text = serde_json::to_string_pretty(&m).map_err(CliError::runtime)? + "\n";
    std::fs::write(out.join("manifest.json"), text).map_err(CliError::runtime)
}

/// Exit code for a finished run.
pub fn exit_code(res: &Result<Report, CliError>) -> i32 {
    match res {
        Ok(r) if r.pass => EXIT_OK,
        Ok(_) => EXIT_CHECK_FAILED,
        Err(e) => e.exit_code(),
    }
}
