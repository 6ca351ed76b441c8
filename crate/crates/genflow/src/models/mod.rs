//! Discrete generators for the concrete dynamics: Itô diffusions, kinetic
//! Fokker–Planck, the Andersen thermostat and the Hamiltonian bouncy
//! sampler, plus finite chains.

mod chain;
mod diffusion;
mod phase;
mod potential;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub use chain::{finite_chain, kinetic_surrogate};
pub use diffusion::{ito_diffusion, DiffusionCoefficients};
pub use phase::{andersen_thermostat, ham_pdmcmc, kinetic_fokker_planck, PhaseLayout, SNAP_THRESHOLD};
pub use potential::{Potential, PotentialSpec};

use crate::generic::HypocoerciveForm;
use crate::hamiltonian::DissipationPotential;
use crate::num::{max_abs, KahanSum};
use crate::opalg::{action_defect, adjoint_l2, probe_fields, split_sym_antisym, CheckReport, Fiber, Involution, LinOp};
use crate::statespace::{Density, Space, StateSpace};
use crate::{Error, Result};

/// Jump channels of a piecewise deterministic model.
#[derive(Clone, Debug)]
pub struct JumpStructure {
    pub refresh_rate: f64,
    /// Bounce rate at every state, a₊.
    pub bounce_rate: Vec<f64>,
    pub reflection: Involution,
    /// Refresh law: masses over each velocity fiber, summing to one per fiber.
    pub refresh: Fiber,
    /// The signed field a with bounce rate a₊ and a∘R = −a.
    pub a_field: Vec<f64>,
    /// Largest |Rv − snapped| over the grid; zero when the reflection is exact.
    pub snapping_error: f64,
}

impl JumpStructure {
    /// Largest |a(x, Rv) + a(x, v)| relative to max |a|.
    pub fn antisymmetry_defect(&self) -> f64 {
        let r = self.reflection.map();
        let top = max_abs(&self.a_field).max(f64::MIN_POSITIVE);
        (0..r.len()).map(|i| libm::fabs(self.a_field[i] + self.a_field[r[i]])).fold(0.0, f64::max) / top
    }

    /// Largest a₊(x, v)·a₊(x, Rv).
    pub fn overlap(&self) -> f64 {
        let r = self.reflection.map();
        (0..r.len()).map(|i| self.bounce_rate[i] * self.bounce_rate[r[i]]).fold(0.0, f64::max)
    }
}

/// Everything a downstream check needs about one discretized model.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub name: String,
    pub params: Vec<(String, f64)>,
    pub l: LinOp,
    pub l_dual: LinOp,
    pub mu: Density,
    /// Hypocoercive parts (A, B) when the model has them.
    pub hypo: Option<HypocoerciveForm>,
    /// The Liouville transport operator of phase-space models.
    pub transport: Option<LinOp>,
    pub jump: Option<JumpStructure>,
    /// Involution under which the model is generalized reversible.
    pub flip: Option<Involution>,
    pub potential: Option<PotentialSpec>,
    /// Consistency tolerance: 1e-10 on finite spaces, 5h² on grids.
    pub tol_structure: f64,
    /// Largest grid spacing, when on a grid.
    pub h: Option<f64>,
    pub warnings: Vec<String>,
}

impl ModelBundle {
    pub(crate) fn assemble(name: &str, l: LinOp, mu: Density, h: Option<f64>) -> Self {
        let l_dual = adjoint_l2(&l);
        ModelBundle {
            name: name.into(),
            params: Vec::new(),
            l,
            l_dual,
            mu,
            hypo: None,
            transport: None,
            jump: None,
            flip: None,
            potential: None,
            tol_structure: h.map(|h| 5.0 * h * h).unwrap_or(1e-10),
            h,
            warnings: Vec::new(),
        }
    }

    pub fn space(&self) -> &Space {
        self.mu.space()
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// L²_μ symmetric and antisymmetric parts of L.
    pub fn split(&self) -> Result<(LinOp, LinOp)> {
        split_sym_antisym(&self.l, &self.mu)
    }

    /// Stationarity, constant annihilation and, when present, hypocoercive reconstruction.
    pub fn validate(&self) -> Result<Vec<CheckReport>> {
        let mut out = Vec::new();
        let lm = self.l_dual.apply(self.mu.values());
        let scale = self.l_dual.norm_inf() * max_abs(self.mu.values());
        out.push(CheckReport::new("stationarity", max_abs(&lm) / scale, self.tol_structure));
        let c = self.l.constant_defect() / self.l.norm_inf().max(f64::MIN_POSITIVE);
        out.push(CheckReport::new("constants annihilated", c, 1e-12));
        if let Some(h) = &self.hypo {
            let probes = probe_fields(self.space(), 16, 0xb0b);
            let d = action_defect(&self.l, &h.generator()?, &self.mu, &probes);
            out.push(CheckReport::new("hypocoercive reconstruction", d, self.tol_structure));
        }
        Ok(out)
    }
}

/// Cosh-form dissipation potential of the refresh and bounce channels.
#[derive(Clone, Debug)]
pub struct PdmpPotential {
    mu: Density,
    refresh_rate: f64,
    refresh: Fiber,
    abs_a: Vec<f64>,
    reflection: Vec<usize>,
}

/// `ψ*(ρ; ξ)` as the sum of the refresh term
/// `Σ_{i≠j same fiber} λ w_i p_j √(ρ_i ρ_j μ_i/μ_j) (cosh(ξ_j − ξ_i) − 1)`
/// and the bounce term `Σ_i ½ w_i |a_i| √(ρ_i ρ_{Ri} μ_i/μ_{Ri}) (cosh(ξ_{Ri} − ξ_i) − 1)`.
pub fn pdmp_dissipation_potential(bundle: &ModelBundle) -> Result<PdmpPotential> {
    let j = bundle.jump.as_ref().ok_or_else(|| Error::InvalidInput("model has no jump structure".into()))?;
    Ok(PdmpPotential {
        mu: bundle.mu.clone(),
        refresh_rate: j.refresh_rate,
        refresh: j.refresh.clone(),
        abs_a: j.a_field.iter().map(|a| libm::fabs(*a)).collect(),
        reflection: j.reflection.map().to_vec(),
    })
}

impl PdmpPotential {
    fn check(&self, rho: &Density, xi: &[f64]) -> Result<()> {
        if !StateSpace::same(rho.space(), self.mu.space()) {
            return Err(Error::SpaceMismatch);
        }
        if xi.len() != rho.values().len() {
            return Err(Error::InvalidInput("field length mismatch".into()));
        }
        for (i, v) in xi.iter().enumerate() {
            if !(libm::fabs(*v) <= crate::hamiltonian::XI_GUARD) {
                return Err(Error::Overflow { index: i, value: *v });
            }
        }
        Ok(())
    }

    /// Calls `f(i, j, c)` for every unordered channel pair with symmetric weight c.
    fn for_pairs(&self, rho: &Density, mut f: impl FnMut(usize, usize, f64)) {
        let w = self.mu.space().weights();
        let m = self.mu.values();
        let r = rho.values();
        let p = self.refresh.weights();
        if self.refresh_rate > 0.0 {
            for mem in self.refresh.members() {
                for (a, &i) in mem.iter().enumerate() {
                    for &j in &mem[a + 1..] {
                        let c = self.refresh_rate * w[i] * p[j] * libm::sqrt(r[i] * r[j] * m[i] / m[j]);
                        // Both orders of the pair contribute equally.
                        f(i, j, 2.0 * c);
                    }
                }
            }
        }
        for i in 0..r.len() {
            let j = self.reflection[i];
            if j > i && self.abs_a[i] > 0.0 {
                let ci = 0.5 * w[i] * self.abs_a[i] * libm::sqrt(r[i] * r[j] * m[i] / m[j]);
                let cj = 0.5 * w[j] * self.abs_a[j] * libm::sqrt(r[i] * r[j] * m[j] / m[i]);
                f(i, j, ci + cj);
            }
        }
    }
}

impl DissipationPotential for PdmpPotential {
    fn space(&self) -> &Space {
        self.mu.space()
    }

    fn psi_star(&self, rho: &Density, xi: &[f64]) -> Result<f64> {
        self.check(rho, xi)?;
        let mut s = KahanSum::new();
        self.for_pairs(rho, |i, j, c| {
            let d = xi[j] - xi[i];
            // cosh d − 1 = 2 sinh²(d/2), exact near zero.
            let sh = libm::sinh(0.5 * d);
            s.add(c * 2.0 * sh * sh);
        });
        Ok(s.value())
    }

    fn grad_psi_star(&self, rho: &Density, xi: &[f64]) -> Result<Vec<f64>> {
        self.check(rho, xi)?;
        let mut g = vec![0.0; xi.len()];
        self.for_pairs(rho, |i, j, c| {
            let t = c * libm::sinh(xi[j] - xi[i]);
            g[j] += t;
            g[i] -= t;
        });
        for (gi, wi) in g.iter_mut().zip(self.mu.space().weights()) {
            *gi /= wi;
        }
        Ok(g)
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}
