use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use genflow_cli::config::{
    load_config, EvolveSection, ExperimentConfig, ModelConfig, ModelKind, PotentialConfig, SampleSection, Task, SCHEMA_VERSION,
};
use genflow_cli::{exit_code, CliError, EXIT_OK};

#[derive(Parser)]
#[command(name = "genflow", version, about = "Structure checks, Fokker-Planck evolution and sampling for non-reversible Markov models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, alias = "model-config")]
    config: PathBuf,
    /// Output directory; defaults to the config's `output`, then ./genflow-out.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Adjoint, splitting, reversibility and hypocoercive/pre-GENERIC checks.
    StructureCheck(Common),
    /// Dissipation-potential and Hamiltonian relations on sampled (ρ, ξ).
    HamiltonianCheck(Common),
    /// Time-step the Fokker–Planck equation with entropy monitors.
    FpEvolve {
        #[command(flatten)]
        common: Common,
        #[arg(long = "T")]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Comma-separated monitor names.
        #[arg(long, value_delimiter = ',')]
        monitors: Option<Vec<String>>,
    },
    /// Simulate the refresh/bounce sampler in continuous space.
    PdmpSample(SampleArgs),
    /// Every check, plus evolution and sampling when configured.
    FullAudit(Common),
    /// Run the task named in the config.
    Run(Common),
    /// Turn a report.json into plot-ready CSV files.
    Render {
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SampleArgs {
    /// Experiment config; the flags below override its [sample] and model entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// quadratic[:k] | quartic:a,b | expr:<expression>
    #[arg(long)]
    potential: Option<String>,
    /// Auxiliary flow potential, same syntax, or tilt:c1,..,cd for Ṽ = V − c·x.
    #[arg(long = "v-tilde")]
    v_tilde: Option<String>,
    #[arg(long = "lambda-r")]
    lambda_r: Option<f64>,
    #[arg(long = "T")]
    t_end: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "skeleton-dt")]
    skeleton_dt: Option<f64>,
    #[arg(long = "h-flow")]
    h_flow: Option<f64>,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_potential(s: &str) -> Result<PotentialConfig, CliError> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let nums = || -> Result<Vec<f64>, CliError> {
        rest.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse::<f64>().map_err(|e| CliError::Schema(format!("`{s}`: {e}"))))
            .collect()
    };
    Ok(match kind {
        "quadratic" => PotentialConfig::Quadratic { k: nums()?.first().copied().unwrap_or(1.0) },
        "quartic" => match nums()?.as_slice() {
            [a, b] => PotentialConfig::Quartic { a: *a, b: *b },
            _ => return Err(CliError::Schema(format!("`{s}`: quartic needs a,b"))),
        },
        "expr" if !rest.is_empty() => PotentialConfig::Expr { expr: rest.into() },
        "tilt" => PotentialConfig::Tilt { c: nums()? },
        _ => return Err(CliError::Schema(format!("cannot parse potential `{s}`"))),
    })
}

fn out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("genflow-out"))
}

fn from_file(path: &Path, task: Option<Task>) -> Result<(ExperimentConfig, String, Task), CliError> {
    let (cfg, text) = load_config(path)?;
    let task = match task.or(cfg.task) {
        Some(t) => t,
        None => return Err(CliError::Schema("config names no `task`".into())),
    };
    Ok((cfg, text, task))
}

fn sample_config(a: SampleArgs) -> Result<(ExperimentConfig, String, PathBuf), CliError> {
    let mut cfg = match &a.config {
        Some(p) => load_config(p)?.0,
        None => {
            let potential = parse_potential(a.potential.as_deref().ok_or_else(|| CliError::Schema("pass --config or --potential".into()))?)?;
            ExperimentConfig {
                version: SCHEMA_VERSION,
                seed: 0,
                task: Some(Task::PdmpSample),
                output: None,
                save_generator: false,
                model: ModelConfig {
                    kind: ModelKind::Andersen,
                    potential: Some(potential),
                    v_tilde: None,
                    lambda_r: None,
                    grid: None,
                    noise: None,
                    rotation: None,
                    rates: None,
                    weights: None,
                    reversible: None,
                    surrogate: None,
                },
                structure: Default::default(),
                hamiltonian: Default::default(),
                evolve: None,
                sample: None,
                tolerances: Default::default(),
            }
        }
    };
    if let Some(p) = &a.potential {
        cfg.model.potential = Some(parse_potential(p)?);
    }
    if let Some(p) = &a.v_tilde {
        cfg.model.v_tilde = Some(parse_potential(p)?);
    }
    if cfg.model.v_tilde.is_some() {
        cfg.model.kind = ModelKind::Hampdmcmc;
    }
    if a.config.is_none() {
        cfg.model.grid = Some(genflow_cli::config::GridConfig { dim: a.dim, x: None, v: None, axes: None });
    }
    if let Some(l) = a.lambda_r {
        cfg.model.lambda_r = Some(l);
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let mut s = cfg.sample.clone().unwrap_or(SampleSection { t_end: 1000.0, z0: None, h_flow: 0.05, skeleton_dt: 0.1, lag: 0.5 });
    if let Some(t) = a.t_end {
        s.t_end = t;
    }
    if let Some(d) = a.skeleton_dt {
        s.skeleton_dt = d;
    }
    if let Some(h) = a.h_flow {
        s.h_flow = h;
    }
    if !(s.t_end > 0.0 && s.skeleton_dt > 0.0 && s.h_flow > 0.0) {
        return Err(CliError::Schema("T, skeleton-dt and h-flow must be positive".into()));
    }
    cfg.sample = Some(s);
    let text = toml::to_string(&cfg).map_err(CliError::runtime)?;
    let out = out_dir(a.out, &cfg);
    Ok((cfg, text, out))
}

/// A task ready to execute, or `None` when the command already finished.
fn prepare(cmd: Command) -> Result<Option<(ExperimentConfig, String, Task, PathBuf)>, CliError> {
    let fixed = |c: Common, task: Option<Task>| -> Result<_, CliError> {
        let (cfg, text, task) = from_file(&c.config, task)?;
        let out = out_dir(c.out, &cfg);
        Ok(Some((cfg, text, task, out)))
    };
    match cmd {
        Command::StructureCheck(c) => fixed(c, Some(Task::StructureCheck)),
        Command::HamiltonianCheck(c) => fixed(c, Some(Task::HamiltonianCheck)),
        Command::FullAudit(c) => fixed(c, Some(Task::FullAudit)),
        Command::Run(c) => fixed(c, None),
        Command::PdmpSample(a) => {
            let (cfg, text, out) = sample_config(a)?;
            Ok(Some((cfg, text, Task::PdmpSample, out)))
        }
        Command::FpEvolve { common, t_end, dt, monitors } => {
            let (mut cfg, text, _) = from_file(&common.config, Some(Task::FpEvolve))?;
            let e = cfg.evolve.get_or_insert(EvolveSection {
                t_end: 1.0,
                dt: None,
                scheme: None,
                monitors: None,
                snapshot_every: 0,
                initial: genflow_cli::config::InitialDensity::Uniform,
            });
            if let Some(t) = t_end {
                e.t_end = t;
            }
            if dt.is_some() {
                e.dt = dt;
            }
            if monitors.is_some() {
                e.monitors = monitors;
            }
            let out = out_dir(common.out, &cfg);
            Ok(Some((cfg, text, Task::FpEvolve, out)))
        }
        Command::Render { report, out } => {
            let r = genflow_cli::render::read_report(&report)?;
            let out = out.unwrap_or_else(|| report.parent().map(Path::to_path_buf).unwrap_or_default());
            for p in genflow_cli::render::render(&r, &out)? {
                println!("{}", p.display());
            }
            Ok(None)
        }
    }
}

fn summarize(res: &Result<genflow_cli::report::Report, CliError>, out: &Path) {
    match res {
        Ok(r) if r.pass => println!("{}: all asserted checks passed; report in {}", r.task, out.display()),
        Ok(r) => {
            eprintln!("{}: failed checks:", r.task);
            for f in r.failures() {
                eprintln!("  {f}");
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
}

fn run(cli: Cli) -> i32 {
    match prepare(cli.command) {
        Ok(Some((cfg, text, task, out))) => {
            let res = genflow_cli::execute(task, &cfg, &text, &out);
            summarize(&res, &out);
            exit_code(&res)
        }
        Ok(None) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(run(cli) as u8)
}
