//! Experiment configuration: a strict TOML schema, versioned by `version`.

use std::path::PathBuf;

use genflow::fpsolve::Scheme;
use genflow::statespace::Boundary;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    StructureCheck,
    HamiltonianCheck,
    FpEvolve,
    PdmpSample,
    FullAudit,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::StructureCheck => "structure-check",
            Task::HamiltonianCheck => "hamiltonian-check",
            Task::FpEvolve => "fp-evolve",
            Task::PdmpSample => "pdmp-sample",
            Task::FullAudit => "full-audit",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub task: Option<Task>,
    pub output: Option<PathBuf>,
    /// Also write the generator in coordinate-list form.
    #[serde(default)]
    pub save_generator: bool,
    pub model: ModelConfig,
    #[serde(default)]
    pub structure: StructureConfig,
    #[serde(default)]
    pub hamiltonian: HamiltonianConfig,
    pub evolve: Option<EvolveSection>,
    pub sample: Option<SampleSection>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Kinetic,
    Diffusion,
    Andersen,
    Hampdmcmc,
    Chain,
    Surrogate,
}

impl ModelKind {
    pub fn is_phase(self) -> bool {
        matches!(self, ModelKind::Kinetic | ModelKind::Andersen | ModelKind::Hampdmcmc)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub potential: Option<PotentialConfig>,
    pub v_tilde: Option<PotentialConfig>,
    pub lambda_r: Option<f64>,
    pub grid: Option<GridConfig>,
    /// Diffusion: noise strength s in σ = s·I.
    pub noise: Option<f64>,
    /// Diffusion: row-major antisymmetric J in the drift −∇V + J∇V.
    pub rotation: Option<Vec<f64>>,
    /// Chain: rate matrix rows.
    pub rates: Option<Vec<Vec<f64>>>,
    /// Chain: reference measure, counting measure when absent.
    pub weights: Option<Vec<f64>>,
    /// Chain: expected outcome of the detailed-balance checks; reported only when absent.
    pub reversible: Option<bool>,
    pub surrogate: Option<SurrogateConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialConfig {
    /// k|x|²/2
    Quadratic {
        #[serde(default = "one")]
        k: f64,
    },
    /// a|x|⁴/4 + b|x|²/2
    Quartic { a: f64, b: f64 },
    /// Expression in x (1-d) or x1..xd; gradient by central differences.
    Expr { expr: String },
    /// Only valid as `v_tilde`: Ṽ = V − c·x.
    Tilt { c: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub min: f64,
    pub max: f64,
    pub n: usize,
    #[serde(default = "truncated")]
    pub boundary: Boundary,
}

fn truncated() -> Boundary {
    Boundary::Truncated
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Position dimension of phase-space models.
    #[serde(default = "one_usize")]
    pub dim: usize,
    /// Phase-space models: axis repeated for every position coordinate.
    pub x: Option<AxisConfig>,
    /// Phase-space models: axis repeated for every velocity coordinate.
    pub v: Option<AxisConfig>,
    /// Diffusions: one axis per coordinate.
    pub axes: Option<Vec<AxisConfig>>,
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateConfig {
    pub shells: usize,
    pub ring: usize,
    pub gap: f64,
    pub omega: f64,
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureConfig {
    pub samples: usize,
    /// Grid sizes for a defect-vs-h study on phase-space models.
    pub refinement: Vec<usize>,
}

impl Default for StructureConfig {
    fn default() -> Self {
        StructureConfig { samples: 10, refinement: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    pub samples: usize,
    /// Evaluate the Lagrangian along the forward equation; on by default for finite spaces.
    pub lagrangian: Option<bool>,
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        HamiltonianConfig { samples: 50, lagrangian: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialDensity {
    /// Product Gaussian with the given centre and standard deviation.
    Gaussian {
        center: Vec<f64>,
        std: f64,
    },
    Uniform,
    /// Density values in index order.
    Values {
        values: Vec<f64>,
    },
    /// A density file in the JSON schema written by `fp-evolve`.
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSection {
    pub t_end: f64,
    pub dt: Option<f64>,
    pub scheme: Option<Scheme>,
    pub monitors: Option<Vec<String>>,
    #[serde(default)]
    pub snapshot_every: usize,
    pub initial: InitialDensity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    pub t_end: f64,
    pub z0: Option<Vec<f64>>,
    #[serde(default = "default_h_flow")]
    pub h_flow: f64,
    #[serde(default = "default_skeleton")]
    pub skeleton_dt: f64,
    /// Lag of the reversal diagnostic.
    #[serde(default = "default_lag")]
    pub lag: f64,
}

fn default_h_flow() -> f64 {
    0.05
}

fn default_skeleton() -> f64 {
    0.1
}

fn default_lag() -> f64 {
    0.5
}

/// Every tolerance the runner asserts against; all are echoed in reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Overrides the model's own consistency tolerance (1e-10 finite, 5h² on grids).
    pub structure: Option<f64>,
    pub adjoint: f64,
    pub detailed_balance: f64,
    /// Smallest defect counted as a detailed-balance failure when `reversible = false`.
    pub irreversibility: f64,
    pub symmetry: f64,
    pub psi_star: f64,
    pub convexity: f64,
    pub lagrangian: f64,
    pub pdmp_inequality: f64,
    pub speed: f64,
    pub min_order: f64,
    /// Largest TV distance of the sampler occupation to μ; reported only when absent.
    pub tv: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            structure: None,
            adjoint: 1e-12,
            detailed_balance: 1e-12,
            irreversibility: 0.01,
            symmetry: 1e-10,
            psi_star: 1e-12,
            convexity: 1e-12,
            lagrangian: 1e-7,
            pdmp_inequality: 1e-10,
            speed: 1e-14,
            min_order: 1.8,
            tv: None,
        }
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
    if cfg.version != SCHEMA_VERSION {
        return Err(CliError::Schema(format!("unsupported config version {}, expected {SCHEMA_VERSION}", cfg.version)));
    }
    validate(&cfg)?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<(ExperimentConfig, String), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    Ok((parse_config(&text)?, text))
}

fn require<T>(v: &Option<T>, what: &str, kind: ModelKind) -> Result<(), CliError> {
    match v {
        Some(_) => Ok(()),
        None => Err(CliError::Schema(format!("model kind {kind:?} needs `{what}`"))),
    }
}

fn validate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let m = &cfg.model;
    let grid = m.grid.as_ref();
    match m.kind {
        k if k.is_phase() => {
            require(&m.potential, "potential", k)?;
            let g = grid.ok_or_else(|| CliError::Schema("phase-space models need `grid.x` and `grid.v`".into()))?;
            if g.x.is_none() || g.v.is_none() {
                return Err(CliError::Schema("phase-space models need `grid.x` and `grid.v`".into()));
            }
            if k != ModelKind::Kinetic {
                require(&m.lambda_r, "lambda_r", k)?;
            }
            if k == ModelKind::Hampdmcmc {
                require(&m.v_tilde, "v_tilde", k)?;
            }
        }
        ModelKind::Diffusion => {
            require(&m.potential, "potential", m.kind)?;
            if grid.and_then(|g| g.axes.as_ref()).is_none() {
                return Err(CliError::Schema("diffusion models need `grid.axes`".into()));
            }
        }
        ModelKind::Chain => require(&m.rates, "rates", m.kind)?,
        ModelKind::Surrogate => require(&m.surrogate, "surrogate", m.kind)?,
        _ => unreachable!(),
    }
    if matches!(m.potential, Some(PotentialConfig::Tilt { .. })) {
        return Err(CliError::Schema("`tilt` is only valid for v_tilde".into()));
    }
    if let Some(s) = &cfg.sample {
        if !m.kind.is_phase() || m.kind == ModelKind::Kinetic {
            return Err(CliError::Schema("[sample] needs an andersen or hampdmcmc model".into()));
        }
        if !(s.t_end > 0.0) {
            return Err(CliError::Schema("sample.t_end must be positive".into()));
        }
    }
    if let Some(e) = &cfg.evolve {
        if !(e.t_end > 0.0) {
            return Err(CliError::Schema("evolve.t_end must be positive".into()));
        }
        for name in e.monitors.iter().flatten() {
            if genflow::fpsolve::Monitor::parse(name).is_none() {
                return Err(CliError::Schema(format!("unknown monitor `{name}`")));
            }
        }
    }
    Ok(())
}
