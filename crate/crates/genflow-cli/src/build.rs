//! From configuration to potentials, grids and model bundles.

use std::sync::Arc;

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use genflow::models::{
    andersen_thermostat, finite_chain, ham_pdmcmc, ito_diffusion, kinetic_fokker_planck, kinetic_surrogate, DiffusionCoefficients, ModelBundle,
    Potential, PotentialSpec,
};
use genflow::statespace::{build_grid, Axis, Space};

use crate::config::{AxisConfig, GridConfig, ModelConfig, ModelKind, PotentialConfig};
use crate::CliError;

fn axis(a: &AxisConfig) -> Axis {
    Axis { min: a.min, max: a.max, n: a.n, boundary: a.boundary }
}

fn variable_names(d: usize) -> Vec<String> {
    if d == 1 {
        vec!["x".into()]
    } else {
        (1..=d).map(|k| format!("x{k}")).collect()
    }
}

/// Compiles an expression potential in x (d = 1) or x1..xd.
pub fn expr_potential(expr: &str, d: usize) -> Result<Potential, CliError> {
    let node: Node<DefaultNumericTypes> = build_operator_tree(expr).map_err(|e| CliError::Schema(format!("potential expression `{expr}`: {e}")))?;
    let names = variable_names(d);
    for id in node.iter_variable_identifiers() {
        if !names.iter().any(|n| n == id) {
            return Err(CliError::Schema(format!("potential expression uses unknown variable `{id}`; expected {names:?}")));
        }
    }
    let node = Arc::new(node);
    let eval = {
        let node = node.clone();
        let names = names.clone();
        move |x: &[f64]| -> f64 {
            let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
            for (n, v) in names.iter().zip(x) {
                ctx.set_value(n.clone(), Value::Float(*v)).expect("fresh context accepts values");
            }
            node.eval_number_with_context(&ctx).unwrap_or(f64::NAN)
        }
    };
    // Probe once so that type errors surface at load time rather than as NaN later.
    let probe = eval(&vec![0.5; d]);
    if !probe.is_finite() {
        return Err(CliError::Schema(format!("potential expression `{expr}` does not evaluate to a finite number")));
    }
    let value = Arc::new(eval);
    let grad = {
        let value = value.clone();
        move |x: &[f64]| -> Vec<f64> {
            let mut y = x.to_vec();
            (0..x.len())
                .map(|k| {
                    let h = 1e-5 * (1.0 + x[k].abs());
                    y[k] = x[k] + h;
                    let up = value(&y);
                    y[k] = x[k] - h;
                    let dn = value(&y);
                    y[k] = x[k];
                    (up - dn) / (2.0 * h)
                })
                .collect()
        }
    };
    let v = value.clone();
    Ok(Potential::new(&format!("expr({expr})"), move |x| v(x), grad))
}

pub fn potential(cfg: &PotentialConfig, d: usize) -> Result<Potential, CliError> {
    Ok(match cfg {
        PotentialConfig::Quadratic { k } => Potential::quadratic(*k),
        PotentialConfig::Quartic { a, b } => Potential::quartic(*a, *b),
        PotentialConfig::Expr { expr } => expr_potential(expr, d)?,
        PotentialConfig::Tilt { .. } => return Err(CliError::Schema("`tilt` is only valid for v_tilde".into())),
    })
}

pub fn potential_spec(v: &PotentialConfig, v_tilde: Option<&PotentialConfig>, d: usize) -> Result<PotentialSpec, CliError> {
    let base = potential(v, d)?;
    Ok(match v_tilde {
        None => PotentialSpec::new(base),
        Some(PotentialConfig::Tilt { c }) => {
            if c.len() != d {
                return Err(CliError::Schema(format!("tilt has {} components for dimension {d}", c.len())));
            }
            PotentialSpec::tilted(base, c.clone())
        }
        Some(t) => PotentialSpec::with_auxiliary(base, potential(t, d)?),
    })
}

/// Phase grid with the position axes first.
pub fn phase_grid(g: &GridConfig) -> Result<Space, CliError> {
    let (x, v) = match (&g.x, &g.v) {
        (Some(x), Some(v)) => (axis(x), axis(v)),
        _ => return Err(CliError::Schema("phase-space grids need `x` and `v`".into())),
    };
    let axes: Vec<Axis> = std::iter::repeat_n(x, g.dim).chain(std::iter::repeat_n(v, g.dim)).collect();
    Ok(build_grid(&axes)?)
}

/// Same grid with every axis resized to n nodes.
pub fn resized(g: &GridConfig, n: usize) -> GridConfig {
    let mut g = g.clone();
    for a in [&mut g.x, &mut g.v].into_iter().flatten() {
        a.n = n;
    }
    for a in g.axes.iter_mut().flatten() {
        a.n = n;
    }
    g
}

pub fn position_dim(m: &ModelConfig) -> usize {
    match m.kind {
        ModelKind::Diffusion => m.grid.as_ref().and_then(|g| g.axes.as_ref()).map_or(1, |a| a.len()),
        _ => m.grid.as_ref().map_or(1, |g| g.dim),
    }
}

pub fn model_potential(m: &ModelConfig) -> Result<Option<PotentialSpec>, CliError> {
    match &m.potential {
        Some(v) => Ok(Some(potential_spec(v, m.v_tilde.as_ref(), position_dim(m))?)),
        None => Ok(None),
    }
}

/// Builds the bundle, optionally on a resized grid.
pub fn bundle(m: &ModelConfig, grid: Option<&GridConfig>) -> Result<ModelBundle, CliError> {
    let grid = grid.or(m.grid.as_ref());
    let missing = |what: &str| CliError::Schema(format!("model is missing `{what}`"));
    Ok(match m.kind {
        ModelKind::Kinetic | ModelKind::Andersen | ModelKind::Hampdmcmc => {
            let pot = model_potential(m)?.ok_or_else(|| missing("potential"))?;
            let space = phase_grid(grid.ok_or_else(|| missing("grid"))?)?;
            match m.kind {
                ModelKind::Kinetic => kinetic_fokker_planck(&pot, &space)?,
                ModelKind::Andersen => andersen_thermostat(&pot, m.lambda_r.ok_or_else(|| missing("lambda_r"))?, &space)?,
                _ => ham_pdmcmc(&pot, m.lambda_r.ok_or_else(|| missing("lambda_r"))?, &space)?,
            }
        }
        ModelKind::Diffusion => {
            let axes: Vec<Axis> = grid.and_then(|g| g.axes.as_ref()).ok_or_else(|| missing("grid.axes"))?.iter().map(axis).collect();
            let d = axes.len();
            let pot = potential(m.potential.as_ref().ok_or_else(|| missing("potential"))?, d)?;
            if let Some(j) = &m.rotation {
                if j.len() != d * d {
                    return Err(CliError::Schema(format!("rotation needs {} entries", d * d)));
                }
            }
            let coeffs = DiffusionCoefficients::langevin(move |x| pot.grad(x), m.rotation.clone(), m.noise.unwrap_or(1.0), d);
            ito_diffusion(&coeffs, &build_grid(&axes)?)?
        }
        ModelKind::Chain => finite_chain(m.rates.as_ref().ok_or_else(|| missing("rates"))?, m.weights.as_deref())?,
        ModelKind::Surrogate => {
            let s = m.surrogate.ok_or_else(|| missing("surrogate"))?;
            kinetic_surrogate(s.shells, s.ring, s.gap, s.omega, s.noise)?
        }
    })
}
