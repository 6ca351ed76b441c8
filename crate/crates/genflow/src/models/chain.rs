//! Finite-state generators.

use alloc::vec::Vec;

use super::ModelBundle;
use crate::generic::HypocoerciveForm;
use crate::linalg::Csr;
use crate::opalg::{stationary_density, Involution, LinOp};
use crate::statespace::{normalize, Density, Space, StateSpace};
use crate::{Error, Result};

/// Continuous-time Markov chain from its rate matrix rows.
///
/// Rows must have nonnegative off-diagonal rates and sum to zero within
/// 1e-12 of their largest rate. `weights` defaults to counting measure.
pub fn finite_chain(rows: &[Vec<f64>], weights: Option<&[f64]>) -> Result<ModelBundle> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty rate matrix".into()));
    }
    let mut t = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(Error::InvalidInput(alloc::format!("row {i} has {} entries, expected {n}", r.len())));
        }
        let top = r.iter().map(|v| libm::fabs(*v)).fold(0.0, f64::max);
        let sum: f64 = r.iter().sum();
        if libm::fabs(sum) > 1e-12 * top.max(1.0) {
            return Err(Error::InvalidInput(alloc::format!("row {i} sums to {sum:e}, not zero")));
        }
        for (j, v) in r.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidInput(alloc::format!("rate ({i},{j}) is not finite")));
            }
            if i != j && *v < 0.0 {
                return Err(Error::Positivity { what: "off-diagonal rate", index: i * n + j, value: *v });
            }
            if *v != 0.0 {
                t.push((i, j, *v));
            }
        }
    }
    let space = match weights {
        Some(w) => StateSpace::finite(w.to_vec())?,
        None => StateSpace::counting(n)?,
    };
    let l = LinOp::from_csr(&space, Csr::from_triplets(n, n, t), "L_chain")?;
    let mu = stationary_density(&l)?;
    Ok(ModelBundle::assemble("chain", l, mu, None))
}

/// Finite caricature of kinetic Fokker–Planck with an exact hypocoercive form.
///
/// States are (s, θ) with energy shell s < `shells` and phase θ on a ring of
/// size `ring`; μ ∝ e^{−gap·s}. Transport rotates each shell at speed
/// ω_s = omega(1 + s), the first dissipative direction moves between shells
/// at strength `noise`, the second smooths along the ring just enough to keep
/// every off-diagonal rate nonnegative. The flip θ ↦ −θ makes the chain
/// generalized reversible.
pub fn kinetic_surrogate(shells: usize, ring: usize, gap: f64, omega: f64, noise: f64) -> Result<ModelBundle> {
    if shells < 2 || ring < 3 {
        return Err(Error::InvalidInput("need at least 2 shells and a ring of 3".into()));
    }
    if !(gap.is_finite() && omega.is_finite() && noise > 0.0 && noise.is_finite()) {
        return Err(Error::InvalidInput("gap, omega must be finite and noise positive".into()));
    }
    let n = shells * ring;
    let space: Space = StateSpace::counting(n)?;
    let at = |s: usize, th: usize| s * ring + th % ring;
    let speed = |s: usize| omega * (1 + s) as f64;
    let kappa = (0..shells).map(|s| libm::fabs(speed(s))).fold(0.0, f64::max) / 2.0;

    let mut bt = Vec::with_capacity(2 * n);
    let mut a1 = Vec::with_capacity(2 * n);
    let mut a2 = Vec::with_capacity(2 * n);
    let sk = libm::sqrt(kappa.max(f64::MIN_POSITIVE));
    for s in 0..shells {
        for th in 0..ring {
            let i = at(s, th);
            bt.push((i, at(s, th + 1), 0.5 * speed(s)));
            bt.push((i, at(s, th + ring - 1), -0.5 * speed(s)));
            if s + 1 < shells {
                a1.push((i, at(s + 1, th), noise));
                a1.push((i, i, -noise));
            }
            a2.push((i, at(s, th + 1), sk));
            a2.push((i, i, -sk));
        }
    }
    let mu = normalize(&Density::new(space.clone(), (0..n).map(|i| libm::exp(-gap * (i / ring) as f64)).collect())?)?;
    let b = LinOp::from_csr(&space, Csr::from_triplets(n, n, bt), "B")?;
    let a = alloc::vec![
        LinOp::from_csr(&space, Csr::from_triplets(n, n, a1), "A_shell")?,
        LinOp::from_csr(&space, Csr::from_triplets(n, n, a2), "A_ring")?,
    ];
    let hypo = HypocoerciveForm::new(a, b.clone(), mu.clone())?;
    let l = hypo.generator()?.with_label("L_surrogate");
    let flip = Involution::new(&space, (0..n).map(|i| at(i / ring, ring - i % ring)).collect())?;
    let mut bundle = ModelBundle::assemble("surrogate", l, mu, None);
    bundle.params.extend([
        ("shells".into(), shells as f64),
        ("ring".into(), ring as f64),
        ("gap".into(), gap),
        ("omega".into(), omega),
        ("noise".into(), noise),
    ]);
    bundle.hypo = Some(hypo);
    bundle.transport = Some(b);
    bundle.flip = Some(flip);
    Ok(bundle)
}
