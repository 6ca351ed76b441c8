//! Nonlinear Hamiltonians of Markov generators, dissipation potentials built
//! from them, and numerical Legendre transforms.
//!
//! Everything here evaluates jump sums `Σ_ij L_ij (e^{ξ_j − ξ_i} − 1)` in
//! difference form, so adding a constant to ξ never changes a value and
//! exponents stay bounded by the spread of ξ rather than its size.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::linalg::Csr;
use crate::num::{max_abs, KahanSum};
use crate::opalg::{adjoint_l2, probe_fields, split_sym_antisym, CheckReport, Involution, LinOp};
use crate::statespace::{weighted_dot, Density, Space, SpaceKind};
use crate::{Error, Result};

/// Largest admissible |ξ| entry and exponent.
pub const XI_GUARD: f64 = 700.0;

/// Default seed for sampled property checks.
pub const DEFAULT_SEED: u64 = 0x9e37_79b9;

/// Largest state space accepted by transform-based operations.
pub const TRANSFORM_MAX_STATES: usize = 4096;

fn guard_xi(xi: &[f64]) -> Result<()> {
    for (i, v) in xi.iter().enumerate() {
        if !(libm::fabs(*v) <= XI_GUARD) {
            return Err(Error::Overflow { index: i, value: *v });
        }
    }
    Ok(())
}

fn guard_len(space: &Space, n: usize) -> Result<()> {
    if n != space.len() {
        return Err(Error::InvalidInput(alloc::format!("field of length {n} on a space of {} states", space.len())));
    }
    Ok(())
}

/// `ξ ↦ ∫ e^{−ξ} (L e^{ξ}) dρ` for a fixed generator.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    op: LinOp,
    m: Csr,
    row_sum: Vec<f64>,
    generator: bool,
}

/// A Hamiltonian value plus a flag raised when L does not annihilate constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianValue {
    pub value: f64,
    pub warning: bool,
}

impl Hamiltonian {
    pub fn new(l: &LinOp) -> Self {
        let m = l.to_csr();
        let row_sum: Vec<f64> = (0..m.nrows)
            .map(|r| {
                let mut s = KahanSum::new();
                m.row(r).for_each(|(_, v)| s.add(v));
                s.value()
            })
            .collect();
        let scale = m.norm_inf().max(f64::MIN_POSITIVE);
        let generator = max_abs(&row_sum) <= 1e-12 * scale;
        Hamiltonian { op: l.clone(), m, row_sum, generator }
    }

    pub fn generator(&self) -> &LinOp {
        &self.op
    }

    pub fn space(&self) -> &Space {
        self.op.space()
    }

    /// Whether L annihilates constants (row sums vanish to 1e-12 relative).
    pub fn is_generator(&self) -> bool {
        self.generator
    }

    fn check(&self, rho: &Density, xi: &[f64]) -> Result<()> {
        if !crate::statespace::StateSpace::same(rho.space(), self.space()) {
            return Err(Error::SpaceMismatch);
        }
        guard_len(self.space(), xi.len())?;
        guard_xi(xi)
    }

    #[inline]
    fn exp_diff(d: f64, index: usize) -> Result<f64> {
        if d > 709.0 {
            return Err(Error::Overflow { index, value: d });
        }
        Ok(libm::expm1(d))
    }

    pub fn eval(&self, rho: &Density, xi: &[f64]) -> Result<f64> {
        self.check(rho, xi)?;
        let w = self.space().weights();
        let r = rho.values();
        let mut total = KahanSum::new();
        for i in 0..self.m.nrows {
            if r[i] == 0.0 {
                continue;
            }
            let mut row = KahanSum::new();
            for (j, l) in self.m.row(i) {
                if j != i {
                    row.add(l * Self::exp_diff(xi[j] - xi[i], j)?);
                }
            }
            if !self.generator {
                row.add(self.row_sum[i]);
            }
            total.add(r[i] * w[i] * row.value());
        }
        Ok(total.value())
    }

    /// Sum of the absolute values of every term in [`Hamiltonian::eval`]; the
    /// natural magnitude against which a difference of two evaluations is judged.
    pub fn magnitude(&self, rho: &Density, xi: &[f64]) -> Result<f64> {
        self.check(rho, xi)?;
        let w = self.space().weights();
        let r = rho.values();
        let mut total = KahanSum::new();
        for i in 0..self.m.nrows {
            let mut row = KahanSum::new();
            for (j, l) in self.m.row(i) {
                if j != i {
                    row.add(libm::fabs(l) * libm::exp((xi[j] - xi[i]).min(709.0)));
                } else {
                    row.add(libm::fabs(l));
                }
            }
            total.add(r[i] * w[i] * row.value());
        }
        Ok(total.value())
    }

    /// Flat L² gradient in ξ (the field G with dH[η] = ⟨G, η⟩).
    pub fn gradient_xi(&self, rho: &Density, xi: &[f64]) -> Result<Vec<f64>> {
        self.check(rho, xi)?;
        let w = self.space().weights();
        let r = rho.values();
        let mut g = vec![0.0; xi.len()];
        for i in 0..self.m.nrows {
            if r[i] == 0.0 {
                continue;
            }
            for (j, l) in self.m.row(i) {
                if j != i {
                    let t = r[i] * w[i] * l * (Self::exp_diff(xi[j] - xi[i], j)? + 1.0);
                    g[i] -= t;
                    g[j] += t;
                }
            }
        }
        for (gi, wi) in g.iter_mut().zip(w) {
            *gi /= wi;
        }
        Ok(g)
    }
}

pub fn hamiltonian_eval(l: &LinOp, rho: &Density, xi: &[f64]) -> Result<HamiltonianValue> {
    let h = Hamiltonian::new(l);
    Ok(HamiltonianValue { value: h.eval(rho, xi)?, warning: !h.is_generator() })
}

/// Hamiltonians of the L²_μ-symmetric and antisymmetric parts, in that order.
pub fn hamiltonian_split(l: &LinOp, mu: &Density) -> Result<(Hamiltonian, Hamiltonian)> {
    let (s, a) = split_sym_antisym(l, mu)?;
    Ok((Hamiltonian::new(&s), Hamiltonian::new(&a)))
}

/// Knobs for [`legendre_transform`].
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LegendreConfig {
    pub max_iter: usize,
    /// Stop once ‖∇‖ ≤ gtol·(1 + ‖g‖) in the weighted norm.
    pub gtol: f64,
    pub memory: usize,
    /// Sup values beyond this (relative to 1 + ‖g‖²) are declared unbounded.
    pub divergence: f64,
}

impl Default for LegendreConfig {
    fn default() -> Self {
        LegendreConfig { max_iter: 500, gtol: 1e-9, memory: 20, divergence: 1e12 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LegendreResult {
    pub value: f64,
    pub maximizer: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Objective callback: value and flat gradient of a convex φ at ξ.
pub type Objective<'a> = dyn Fn(&[f64]) -> Result<(f64, Vec<f64>)> + 'a;

/// `sup_ξ ⟨ξ, g⟩ − φ(ξ)` with the flat pairing ⟨a, b⟩ = Σ a b w.
///
/// Limited-memory BFGS on `φ − ⟨·, g⟩` from ξ = 0, working in the weighted
/// inner product so that flat gradients are the right search directions.
/// Negative curvature along a step means φ is not convex and is reported as
/// such; a value that keeps growing without the gradient shrinking is
/// reported as an unbounded supremum.
pub fn legendre_transform(phi: &Objective<'_>, w: &[f64], g: &[f64], cfg: &LegendreConfig) -> Result<LegendreResult> {
    let n = w.len();
    if n > TRANSFORM_MAX_STATES {
        return Err(Error::InvalidInput(alloc::format!("Legendre transform on {n} states exceeds {TRANSFORM_MAX_STATES}")));
    }
    if g.len() != n {
        return Err(Error::InvalidInput("dual argument has the wrong length".into()));
    }
    let ip = |a: &[f64], b: &[f64]| weighted_dot(a, b, None, w);
    let gnorm = libm::sqrt(ip(g, g));
    let limit = cfg.divergence * (1.0 + gnorm * gnorm);
    let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (f, mut gr) = phi(x)?;
        for (a, b) in gr.iter_mut().zip(g) {
            *a -= b;
        }
        Ok((f - ip(x, g), gr))
    };

    let mut x = vec![0.0; n];
    let (mut f, mut r) = objective(&x)?;
    let mut mem: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut best = f;
    for it in 0..cfg.max_iter {
        let rn = libm::sqrt(ip(&r, &r));
        if rn <= cfg.gtol * (1.0 + gnorm) {
            return Ok(LegendreResult { value: -f, maximizer: x, iterations: it, grad_norm: rn });
        }
        if -f > limit {
            return Err(Error::Unbounded { value: -f });
        }
        // Two-loop recursion.
        let mut q = r.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * ip(s, &q);
            crate::num::axpy(-a, y, &mut q);
            alphas.push(a);
        }
        let gamma = match mem.last() {
            Some((s, y, _)) => ip(s, y) / ip(y, y),
            None => 1.0 / rn.max(1.0),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let b = rho * ip(y, &q);
            crate::num::axpy(a - b, s, &mut q);
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = ip(&r, &d);
        if !(slope < 0.0) {
            d = r.iter().map(|v| -v * gamma.abs().max(1e-12)).collect();
            slope = ip(&r, &d);
            mem.clear();
        }

        // Backtracking Armijo with expansion while the slope stays steep. Near
        // the optimum the decrease drops below the rounding of f, so a step
        // whose value is flat to rounding is judged by its directional
        // derivative instead (approximate Wolfe).
        let mut step = 1.0;
        let mut accepted: Option<(f64, Vec<f64>, Vec<f64>, f64)> = None;
        let mut overflowed = false;
        let noise = 1e-12 * (1.0 + libm::fabs(f));
        for _ in 0..80 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            match objective(&xt) {
                Ok((ft, rt)) if ft.is_finite() && (ft <= f + 1e-4 * step * slope || (ft <= f + noise && ip(&rt, &d) <= -(1.0 - 2e-4) * slope)) => {
                    accepted = Some((ft, xt, rt, step));
                    break;
                }
                Ok(_) => {}
                Err(Error::Overflow { .. }) => overflowed = true,
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        let Some((mut ft, mut xt, mut rt, mut st)) = accepted else {
            if overflowed && max_abs(&x) > 0.5 * XI_GUARD {
                return Err(Error::Unbounded { value: -f });
            }
            if rn <= 1e3 * cfg.gtol * (1.0 + gnorm) {
                return Ok(LegendreResult { value: -f, maximizer: x, iterations: it, grad_norm: rn });
            }
            return Err(Error::NotConverged { iterations: it, best: -best });
        };
        // Steps pushed against the exponent guard mean the ascent is running off to infinity.
        if overflowed && max_abs(&xt) > 0.5 * XI_GUARD {
            return Err(Error::Unbounded { value: -ft });
        }
        let mut grow = 0;
        while ip(&rt, &d) < 0.9 * slope && grow < 40 {
            let s2 = 2.0 * st;
            let x2: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + s2 * b).collect();
            match objective(&x2) {
                Ok((f2, r2)) if f2.is_finite() && f2 < ft => {
                    ft = f2;
                    xt = x2;
                    rt = r2;
                    st = s2;
                    grow += 1;
                }
                _ => break,
            }
        }

        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        if s.iter().all(|v| *v == 0.0) {
            // The step no longer moves ξ in floating point.
            if rn <= 1e3 * cfg.gtol * (1.0 + gnorm) {
                return Ok(LegendreResult { value: -f, maximizer: x, iterations: it, grad_norm: rn });
            }
            return Err(Error::NotConverged { iterations: it, best: -best.min(ft) });
        }
        let y: Vec<f64> = rt.iter().zip(&r).map(|(a, b)| a - b).collect();
        let sy = ip(&s, &y);
        let ss = ip(&s, &s);
        let yy = ip(&y, &y);
        if sy < -1e-8 * libm::sqrt(ss * yy) {
            return Err(Error::NonConvex { curvature: sy / ss });
        }
        if sy > 1e-14 * libm::sqrt(ss * yy) {
            mem.push((s, y, 1.0 / sy));
            if mem.len() > cfg.memory {
                mem.remove(0);
            }
        }
        x = xt;
        f = ft;
        r = rt;
        best = best.min(f);
    }
    Err(Error::NotConverged { iterations: cfg.max_iter, best: -best })
}

/// A convex, nonnegative dissipation potential ψ*(ρ; ξ) and its conjugate.
pub trait DissipationPotential {
    fn space(&self) -> &Space;
    fn psi_star(&self, rho: &Density, xi: &[f64]) -> Result<f64>;
    /// Flat L² gradient in ξ.
    fn grad_psi_star(&self, rho: &Density, xi: &[f64]) -> Result<Vec<f64>>;
    /// ψ*(ρ; ξ) = ψ*(ρ; −ξ).
    fn is_symmetric(&self) -> bool;

    /// ψ(ρ; v) as the Legendre transform of ψ*(ρ; ·).
    fn psi(&self, rho: &Density, v: &[f64], cfg: &LegendreConfig) -> Result<f64> {
        let phi = |x: &[f64]| Ok((self.psi_star(rho, x)?, self.grad_psi_star(rho, x)?));
        Ok(legendre_transform(&phi, self.space().weights(), v, cfg)?.value)
    }
}

/// Dissipation potential induced by an L²_μ-symmetric generator:
/// `Ψ*(ρ; ξ) = H_s(ρ; ½dS + ξ) − H_s(ρ; ½dS)`.
///
/// In difference form each jump i → j contributes
/// `w_i L_ij √(ρ_i ρ_j μ_i / μ_j) (e^{ξ_j − ξ_i} − 1)`, so ρ may vanish
/// wherever no rate touches it.
#[derive(Clone, Debug)]
pub struct HsPotential {
    m: Csr,
    mu: Density,
}

/// Builds Ψ* from the symmetric part after confirming it is symmetric in L²_μ
/// (entrywise, 1e-10 relative) and annihilates constants.
pub fn dissipation_from_hs(ls: &LinOp, mu: &Density) -> Result<HsPotential> {
    let tol = 1e-10;
    let sym = crate::opalg::check_detailed_balance(ls, mu, tol)?;
    if !sym.pass {
        return Err(Error::Structural { invariant: "symmetric part is L2_mu-symmetric", defect: sym.defect, tol });
    }
    let c = ls.constant_defect() / ls.norm_inf().max(f64::MIN_POSITIVE);
    if c > tol {
        return Err(Error::Structural { invariant: "symmetric part annihilates constants", defect: c, tol });
    }
    Ok(HsPotential { m: ls.to_csr(), mu: mu.clone() })
}

impl HsPotential {
    fn coeffs<'a>(&'a self, rho: &'a Density) -> impl Iterator<Item = (usize, usize, f64)> + 'a {
        let w = self.mu.space().weights();
        let m = self.mu.values();
        let r = rho.values();
        (0..self.m.nrows).flat_map(move |i| {
            self.m.row(i).filter(move |(j, _)| *j != i).map(move |(j, l)| (i, j, w[i] * l * libm::sqrt(r[i] * r[j] * m[i] / m[j])))
        })
    }

    fn check(&self, rho: &Density, xi: &[f64]) -> Result<()> {
        if !crate::statespace::StateSpace::same(rho.space(), self.mu.space()) {
            return Err(Error::SpaceMismatch);
        }
        guard_len(self.mu.space(), xi.len())?;
        guard_xi(xi)
    }
}

impl DissipationPotential for HsPotential {
    fn space(&self) -> &Space {
        self.mu.space()
    }

    fn psi_star(&self, rho: &Density, xi: &[f64]) -> Result<f64> {
        self.check(rho, xi)?;
        let mut s = KahanSum::new();
        for (i, j, c) in self.coeffs(rho) {
            s.add(c * Hamiltonian::exp_diff(xi[j] - xi[i], j)?);
        }
        Ok(s.value())
    }

    fn grad_psi_star(&self, rho: &Density, xi: &[f64]) -> Result<Vec<f64>> {
        self.check(rho, xi)?;
        let mut g = vec![0.0; xi.len()];
        for (i, j, c) in self.coeffs(rho) {
            let t = c * (Hamiltonian::exp_diff(xi[j] - xi[i], j)? + 1.0);
            g[i] -= t;
            g[j] += t;
        }
        for (gi, wi) in g.iter_mut().zip(self.mu.space().weights()) {
            *gi /= wi;
        }
        Ok(g)
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}

/// Sampled (ρ, ξ) pairs for property checks: seeded, smooth on grids.
pub fn sample_pairs(space: &Space, mu: Option<&Density>, count: usize, seed: u64) -> Vec<(Density, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.len();
    let mut out = Vec::with_capacity(count);
    let grid = space.kind() == SpaceKind::Grid;
    let probes = if grid { probe_fields(space, 2 * count, seed) } else { Vec::new() };
    let u = Uniform::new(0.2, 1.8).unwrap();
    for k in 0..count {
        let (tilt, xi): (Vec<f64>, Vec<f64>) = if grid {
            let a = &probes[2 * k];
            let b = &probes[2 * k + 1];
            (a.iter().map(|v| libm::exp(0.3 * v)).collect(), b.iter().map(|v| 0.5 * v).collect())
        } else {
            ((0..n).map(|_| u.sample(&mut rng)).collect(), (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
        };
        let base: Vec<f64> = match mu {
            Some(m) => m.values().to_vec(),
            None => vec![1.0; n],
        };
        let vals: Vec<f64> = base.iter().zip(&tilt).map(|(b, t)| b * t).collect();
        let rho = crate::statespace::normalize(&Density::new(space.clone(), vals).expect("positive sample")).expect("positive mass");
        out.push((rho, xi));
    }
    out
}

/// Report for sampled relations; `max_defect` is relative to the term magnitude.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RelationReport {
    pub relation: String,
    pub samples: usize,
    pub seed: u64,
    pub max_defect: f64,
    pub tol: f64,
    pub pass: bool,
}

/// `H(ρ; dS + ξ) = H(F#ρ; −ξ∘F)` over seeded samples.
///
/// The entropy gradient enters only through differences, so the additive
/// constant of log(ρ/μ) + 1 is dropped.
pub fn check_reversibility_relation(l: &LinOp, mu: &Density, f: &Involution, samples: usize, seed: u64, tol: f64) -> Result<RelationReport> {
    let h = Hamiltonian::new(l);
    let mut worst: f64 = 0.0;
    for (rho, xi) in sample_pairs(l.space(), Some(mu), samples, seed) {
        let lhs_xi: Vec<f64> = rho.values().iter().zip(mu.values()).zip(&xi).map(|((r, m), x)| libm::log(r / m) + x).collect();
        let frho = Density::new(rho.space().clone(), f.pull(rho.values()))?;
        let rhs_xi: Vec<f64> = f.pull(&xi).iter().map(|v| -v).collect();
        let lhs = h.eval(&rho, &lhs_xi)?;
        let rhs = h.eval(&frho, &rhs_xi)?;
        let scale = h.magnitude(&rho, &lhs_xi)?.max(h.magnitude(&frho, &rhs_xi)?).max(f64::MIN_POSITIVE);
        worst = worst.max(libm::fabs(lhs - rhs) / scale);
    }
    Ok(RelationReport { relation: "reversibility".into(), samples, seed, max_defect: worst, tol, pass: worst <= tol })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LagrangianReport {
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
    pub iterations: usize,
}

/// Evaluates the Lagrangian at ρ̇ = L′ρ, which vanishes along the forward equation.
pub fn lagrangian_zero_check(l: &LinOp, rho: &Density, cfg: &LegendreConfig, tol: f64) -> Result<LagrangianReport> {
    let h = Hamiltonian::new(l);
    let g = adjoint_l2(l).apply(rho.values());
    let phi = |x: &[f64]| Ok((h.eval(rho, x)?, h.gradient_xi(rho, x)?));
    let r = legendre_transform(&phi, l.space().weights(), &g, cfg)?;
    Ok(LagrangianReport { value: r.value, tol, pass: libm::fabs(r.value) <= tol, iterations: r.iterations })
}

/// Γ(ξ, η) = ½(L(ξη) − ξ Lη − η Lξ).
pub fn carre_du_champ(ls: &LinOp, xi: &[f64], eta: &[f64]) -> Vec<f64> {
    let prod: Vec<f64> = xi.iter().zip(eta).map(|(a, b)| a * b).collect();
    let lp = ls.apply(&prod);
    let le = ls.apply(eta);
    let lx = ls.apply(xi);
    (0..xi.len()).map(|i| 0.5 * (lp[i] - xi[i] * le[i] - eta[i] * lx[i])).collect()
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ConvexityReport {
    /// Smallest gap divided by the magnitude of the three terms forming it.
    pub min_gap: f64,
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub pass: bool,
}

/// Minimum over seeded (ρ, ξ, ξ̄) of `H(ξ + ξ̄) − H(ξ) − ⟨∇H(ξ), ξ̄⟩`.
pub fn convexity_check(hs: &Hamiltonian, samples: usize, seed: u64, tol: f64) -> Result<ConvexityReport> {
    let space = hs.space().clone();
    let w = space.weights();
    let pairs = sample_pairs(&space, None, samples, seed);
    let bars = sample_pairs(&space, None, samples, seed ^ 0x5a5a);
    let mut min_gap = f64::INFINITY;
    for ((rho, xi), (_, bar)) in pairs.iter().zip(&bars) {
        let sum: Vec<f64> = xi.iter().zip(bar).map(|(a, b)| a + b).collect();
        let h1 = hs.eval(rho, &sum)?;
        let h0 = hs.eval(rho, xi)?;
        let d = weighted_dot(&hs.gradient_xi(rho, xi)?, bar, None, w);
        let scale = libm::fabs(h1) + libm::fabs(h0) + libm::fabs(d);
        let gap = (h1 - h0 - d) / scale.max(f64::MIN_POSITIVE);
        min_gap = min_gap.min(gap);
    }
    Ok(ConvexityReport { min_gap, samples, seed, tol, pass: min_gap >= -tol })
}

/// Largest relative deviation between ψ*(ρ; ξ) and ψ*(ρ; −ξ) over sampled pairs.
pub fn symmetry_defect(psi: &dyn DissipationPotential, pairs: &[(Density, Vec<f64>)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (rho, xi) in pairs {
        let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
        let a = psi.psi_star(rho, xi)?;
        let b = psi.psi_star(rho, &neg)?;
        worst = worst.max(libm::fabs(a - b) / libm::fabs(a).max(libm::fabs(b)).max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Whether each sampled pair passes the reversibility relation with F the identity.
pub fn detailed_balance_relation(l: &LinOp, mu: &Density, samples: usize, seed: u64, tol: f64) -> Result<RelationReport> {
    let id = Involution::identity(l.space());
    let mut r = check_reversibility_relation(l, mu, &id, samples, seed, tol)?;
    r.relation = "detailed-balance".into();
    Ok(r)
}

/// Convenience wrapper in report form for Ψ* at zero.
pub fn psi_star_zero_report(psi: &dyn DissipationPotential, pairs: &[(Density, Vec<f64>)]) -> Result<CheckReport> {
    let z = vec![0.0; psi.space().len()];
    let mut worst: f64 = 0.0;
    for (rho, _) in pairs {
        worst = worst.max(libm::fabs(psi.psi_star(rho, &z)?));
    }
    Ok(CheckReport::new("psi-star-zero", worst, 1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalg::stationary_density;
    use crate::statespace::StateSpace;

    fn two_state() -> (LinOp, Density) {
        let s = StateSpace::counting(2).unwrap();
        let q = LinOp::from_rows(&s, &[&[-1.0, 1.0], &[2.0, -2.0]], "Q").unwrap();
        let mu = Density::from_masses(&s, &[2.0 / 3.0, 1.0 / 3.0]).unwrap();
        (q, mu)
    }

    fn cyclic() -> (LinOp, Density) {
        let s = StateSpace::counting(3).unwrap();
        let q = LinOp::from_rows(&s, &[&[-1.0, 1.0, 0.0], &[0.0, -1.0, 1.0], &[1.0, 0.0, -1.0]], "C").unwrap();
        (q, Density::uniform(&s))
    }

    // Once the remaining decrease is below the rounding of the objective the
    // Armijo test alone stalls; this case used to run out of iterations.
    #[test]
    fn transform_converges_when_values_are_flat_to_rounding() {
        let s = StateSpace::counting(3).unwrap();
        let q = LinOp::from_rows(&s, &[&[-3.0, 2.0, 1.0], &[1.0, -3.0, 2.0], &[2.0, 1.0, -3.0]], "Q").unwrap();
        let mu = stationary_density(&q).unwrap();
        let (ls, _) = split_sym_antisym(&q, &mu).unwrap();
        let psi = dissipation_from_hs(&ls, &mu).unwrap();
        for ((rho, xi), scale) in sample_pairs(&s, Some(&mu), 5, 101).into_iter().flat_map(|p| [(p.clone(), 0.5), (p.clone(), 1.0), (p, 1.2)]) {
            let xi: Vec<f64> = xi.iter().map(|x| scale * x).collect();
            let v = psi.grad_psi_star(&rho, &xi).unwrap();
            let cfg = LegendreConfig { gtol: 1e-12, max_iter: 2000, ..LegendreConfig::default() };
            let want = weighted_dot(&xi, &v, None, s.weights()) - psi.psi_star(&rho, &xi).unwrap();
            let got = psi.psi(&rho, &v, &cfg).unwrap();
            assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "{got} vs {want}");
        }
    }

    #[test]
    fn two_state_hand_value() {
        let (q, mu) = two_state();
        let v = hamiltonian_eval(&q, &mu, &[0.0, libm::log(2.0)]).unwrap();
        assert!((v.value - 1.0 / 3.0).abs() < 1e-15);
        assert!(!v.warning);
        assert_eq!(hamiltonian_eval(&q, &mu, &[0.0, 0.0]).unwrap().value, 0.0);
    }

    #[test]
    fn non_generator_is_flagged() {
        let s = StateSpace::counting(2).unwrap();
        let l = LinOp::from_rows(&s, &[&[-1.0, 1.5], &[2.0, -2.0]], "bad").unwrap();
        let v = hamiltonian_eval(&l, &Density::uniform(&s), &[0.1, 0.2]).unwrap();
        assert!(v.warning);
    }

    #[test]
    fn overflow_guard() {
        let (q, mu) = two_state();
        assert!(matches!(hamiltonian_eval(&q, &mu, &[0.0, 800.0]), Err(Error::Overflow { .. })));
    }

    #[test]
    fn split_parts_add_up_and_reversible_antisym_part_vanishes() {
        let (q, mu) = two_state();
        let (hs, ha) = hamiltonian_split(&q, &mu).unwrap();
        let h = Hamiltonian::new(&q);
        for (rho, xi) in sample_pairs(q.space(), None, 20, 3) {
            let t = h.eval(&rho, &xi).unwrap();
            let a = ha.eval(&rho, &xi).unwrap();
            assert!((hs.eval(&rho, &xi).unwrap() + a - t).abs() <= 1e-12 * t.abs().max(1.0));
            assert!(a.abs() < 1e-14);
        }
    }

    #[test]
    fn cyclic_symmetric_part_is_symmetric_walk() {
        let (q, mu) = cyclic();
        let (hs, _) = hamiltonian_split(&q, &mu).unwrap();
        let s = q.space();
        let walk = LinOp::from_rows(s, &[&[-1.0, 0.5, 0.5], &[0.5, -1.0, 0.5], &[0.5, 0.5, -1.0]], "W").unwrap();
        let hw = Hamiltonian::new(&walk);
        for (rho, xi) in sample_pairs(s, None, 10, 9) {
            assert!((hs.eval(&rho, &xi).unwrap() - hw.eval(&rho, &xi).unwrap()).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (q, mu) = cyclic();
        let h = Hamiltonian::new(&q);
        let xi = [0.3, -0.2, 0.9];
        let g = h.gradient_xi(&mu, &xi).unwrap();
        for k in 0..3 {
            let mut p = xi;
            let mut m = xi;
            p[k] += 1e-6;
            m[k] -= 1e-6;
            let fd = (h.eval(&mu, &p).unwrap() - h.eval(&mu, &m).unwrap()) / 2e-6;
            assert!((fd - g[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn carre_du_champ_two_state_walk() {
        let s = StateSpace::counting(2).unwrap();
        let w = LinOp::from_rows(&s, &[&[-1.5, 1.5], &[1.5, -1.5]], "W").unwrap();
        let g = carre_du_champ(&w, &[0.0, 1.0], &[0.0, 1.0]);
        assert!((g[0] - 0.75).abs() < 1e-15 && (g[1] - 0.75).abs() < 1e-15);
        let c = carre_du_champ(&w, &[2.0, 2.0], &[0.3, -1.0]);
        assert!(c.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn legendre_of_quadratic() {
        let s = StateSpace::counting(3).unwrap();
        let w = s.weights().to_vec();
        // φ(ξ) = Σ a_i ξ_i² so sup = Σ g_i² / (4 a_i).
        let a = [1.0, 2.0, 0.5];
        let phi = |x: &[f64]| Ok((x.iter().zip(&a).map(|(x, a)| a * x * x).sum(), x.iter().zip(&a).map(|(x, a)| 2.0 * a * x).collect()));
        let g = [0.3, -1.0, 2.0];
        let r = legendre_transform(&phi, &w, &g, &LegendreConfig::default()).unwrap();
        let exact: f64 = g.iter().zip(&a).map(|(g, a)| g * g / (4.0 * a)).sum();
        assert!((r.value - exact).abs() < 1e-12);
    }

    #[test]
    fn legendre_detects_unbounded_and_nonconvex() {
        let s = StateSpace::counting(2).unwrap();
        let (q, mu) = two_state();
        let h = Hamiltonian::new(&q);
        let phi = |x: &[f64]| Ok((h.eval(&mu, x)?, h.gradient_xi(&mu, x)?));
        // A non mass-conserving rate of change has no finite Lagrangian.
        let r = legendre_transform(&phi, s.weights(), &[1.0, 1.0], &LegendreConfig::default());
        assert!(matches!(r, Err(Error::Unbounded { .. })), "{r:?}");
        let concave = |x: &[f64]| Ok((-(x[0] * x[0] + x[1] * x[1]), vec![-2.0 * x[0], -2.0 * x[1]]));
        let r = legendre_transform(&concave, s.weights(), &[1.0, 0.0], &LegendreConfig::default());
        assert!(matches!(r, Err(Error::NonConvex { .. })), "{r:?}");
    }

    #[test]
    fn reversibility_relation_pass_and_fail() {
        let (q, mu) = two_state();
        assert!(detailed_balance_relation(&q, &mu, 20, DEFAULT_SEED, 1e-12).unwrap().pass);
        let (c, u) = cyclic();
        let r = detailed_balance_relation(&c, &u, 20, DEFAULT_SEED, 1e-12).unwrap();
        assert!(!r.pass && r.max_defect >= 0.01, "{r:?}");
    }

    #[test]
    fn lagrangian_vanishes_on_the_forward_flow() {
        let (q, mu) = two_state();
        let rho = Density::from_masses(q.space(), &[0.5, 0.5]).unwrap();
        let r = lagrangian_zero_check(&q, &rho, &LegendreConfig::default(), 1e-7).unwrap();
        assert!(r.pass && r.value.abs() <= 1e-8, "{r:?}");
        let r = lagrangian_zero_check(&q, &mu, &LegendreConfig::default(), 1e-7).unwrap();
        assert!(r.value.abs() < 1e-14);
    }

    #[test]
    fn hs_potential_properties() {
        let (q, mu) = two_state();
        let (ls, _) = split_sym_antisym(&q, &mu).unwrap();
        let p = dissipation_from_hs(&ls, &mu).unwrap();
        let pairs = sample_pairs(q.space(), None, 50, 4);
        assert!(symmetry_defect(&p, &pairs).unwrap() <= 1e-10);
        assert!(psi_star_zero_report(&p, &pairs).unwrap().pass);
        for (rho, xi) in &pairs {
            assert!(p.psi_star(rho, xi).unwrap() >= 0.0);
        }
    }

    #[test]
    fn hs_potential_refuses_nonsymmetric_input() {
        let (c, u) = cyclic();
        assert!(matches!(dissipation_from_hs(&c, &u), Err(Error::Structural { .. })));
    }
}
