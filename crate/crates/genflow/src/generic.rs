//! Entropy, Wasserstein-type dissipation operators and the passage between
//! hypocoercive form `L = B − A*A` and pre-GENERIC form
//! `ρ̇ = Wρ + dψ*(ρ; −½dS(ρ))`.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::hamiltonian::{DissipationPotential, LegendreConfig};
use crate::num::{max_abs, KahanSum};
use crate::opalg::{action_defect, adjoint_l2, adjoint_l2mu, probe_fields, CheckReport, LinOp};
use crate::statespace::{weighted_dot, Density, Space, StateSpace};
use crate::{Error, Result};

fn same(a: &Space, b: &Space) -> Result<()> {
    if StateSpace::same(a, b) {
        Ok(())
    } else {
        Err(Error::SpaceMismatch)
    }
}

fn check_mass(rho: &Density) -> Result<()> {
    let m = rho.mass();
    if !(libm::fabs(m - 1.0) <= 1e-8) {
        return Err(Error::Mass(m));
    }
    Ok(())
}

/// `Σ ρ log(ρ/μ) w` in nats. Cells with ρ = 0 contribute nothing.
pub fn relative_entropy(rho: &Density, mu: &Density) -> Result<f64> {
    same(rho.space(), mu.space())?;
    mu.require_positive("reference density")?;
    check_mass(rho)?;
    check_mass(mu)?;
    let w = rho.space().weights();
    let mut s = KahanSum::new();
    for ((r, m), w) in rho.values().iter().zip(mu.values()).zip(w) {
        if *r > 0.0 {
            s.add(r * libm::log(r / m) * w);
        }
    }
    Ok(s.value())
}

/// `log(ρ/μ) + 1` pointwise.
pub fn entropy_gradient(rho: &Density, mu: &Density) -> Result<Vec<f64>> {
    same(rho.space(), mu.space())?;
    rho.require_positive("density")?;
    mu.require_positive("reference density")?;
    Ok(rho.values().iter().zip(mu.values()).map(|(r, m)| libm::log(r / m) + 1.0).collect())
}

/// Relative entropy with respect to a fixed reference density.
#[derive(Clone, Debug)]
pub struct EntropyFunctional {
    mu: Density,
}

impl EntropyFunctional {
    pub fn new(mu: Density) -> Result<Self> {
        mu.require_positive("reference density")?;
        Ok(EntropyFunctional { mu })
    }

    pub fn mu(&self) -> &Density {
        &self.mu
    }

    pub fn eval(&self, rho: &Density) -> Result<f64> {
        relative_entropy(rho, &self.mu)
    }

    pub fn gradient(&self, rho: &Density) -> Result<Vec<f64>> {
        entropy_gradient(rho, &self.mu)
    }
}

/// `M_ρ ξ = Σ_k 2 A_k′(ρ ⊙ A_k ξ)`.
pub fn wasserstein_operator(a: &[LinOp], rho: &Density) -> Result<LinOp> {
    rho.require_positive("density")?;
    let space = rho.space();
    let mut m = LinOp::zero(space);
    for ak in a {
        same(ak.space(), space)?;
        let term = adjoint_l2(ak).compose(&ak.left_scale(rho.values()))?.scaled(2.0);
        m = m.add(&term)?;
    }
    Ok(m.with_label("M"))
}

/// `L = B − Σ_k A_k* A_k` with B antisymmetric in L²_μ.
#[derive(Clone, Debug)]
pub struct HypocoerciveForm {
    pub a: Vec<LinOp>,
    pub b: LinOp,
    pub mu: Density,
}

impl HypocoerciveForm {
    pub fn new(a: Vec<LinOp>, b: LinOp, mu: Density) -> Result<Self> {
        mu.require_positive("reference density")?;
        same(b.space(), mu.space())?;
        for ak in &a {
            same(ak.space(), mu.space())?;
        }
        Ok(HypocoerciveForm { a, b, mu })
    }

    pub fn space(&self) -> &Space {
        self.mu.space()
    }

    /// `Σ_k A_k* A_k`.
    pub fn a_star_a(&self) -> Result<LinOp> {
        let mut s = LinOp::zero(self.space());
        for ak in &self.a {
            s = s.add(&adjoint_l2mu(ak, &self.mu)?.compose(ak)?)?;
        }
        Ok(s.with_label("A*A"))
    }

    pub fn generator(&self) -> Result<LinOp> {
        Ok(self.b.sub(&self.a_star_a()?)?.with_label("B-A*A"))
    }

    /// Measured defects of the three invariants, each relative to the operator size.
    pub fn invariant_defects(&self) -> Result<[(&'static str, f64); 3]> {
        let bc = self.b.to_csr();
        let bs = adjoint_l2mu(&self.b, &self.mu)?.to_csr();
        let scale = max_abs(&bc.values).max(f64::MIN_POSITIVE);
        let anti = max_abs(&bs.add(&bc).values) / scale;
        let bnorm = self.b.norm_inf().max(f64::MIN_POSITIVE);
        let b1 = self.b.constant_defect() / bnorm;
        let mut a1: f64 = 0.0;
        for ak in &self.a {
            a1 = a1.max(ak.constant_defect() / ak.norm_inf().max(f64::MIN_POSITIVE));
        }
        Ok([("B* = -B", anti), ("A1 = 0", a1), ("B1 = 0", b1)])
    }

    /// Errors with the first invariant whose defect exceeds `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for (invariant, defect) in self.invariant_defects()? {
            if !(defect <= tol) {
                return Err(Error::Structural { invariant, defect, tol });
            }
        }
        Ok(())
    }
}

/// Builds M_ρ for a given density.
pub type MBuilder = Arc<dyn Fn(&Density) -> Result<LinOp> + Send + Sync>;

/// Conservative part W, mobility ρ ↦ M_ρ and entropy S.
#[derive(Clone)]
pub struct GenericStructure {
    pub w: LinOp,
    pub m: MBuilder,
    pub s: EntropyFunctional,
}

impl core::fmt::Debug for GenericStructure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("GenericStructure").field("w", &self.w).field("s", &self.s).finish_non_exhaustive()
    }
}

impl GenericStructure {
    /// Mobility assembled from components: M_ρ = Σ 2A′(ρA·).
    pub fn from_components(w: LinOp, a: Vec<LinOp>, s: EntropyFunctional) -> Self {
        let a = Arc::new(a);
        GenericStructure { w, m: Arc::new(move |rho: &Density| wasserstein_operator(&a, rho)), s }
    }

    pub fn space(&self) -> &Space {
        self.w.space()
    }

    /// `Wρ − M_ρ(½dS(ρ))`.
    pub fn flow(&self, rho: &Density) -> Result<Vec<f64>> {
        let ds = self.s.gradient(rho)?;
        let half: Vec<f64> = ds.iter().map(|v| 0.5 * v).collect();
        let m = (self.m)(rho)?;
        let mut out = self.w.apply(rho.values());
        let md = m.apply(&half);
        for (o, d) in out.iter_mut().zip(&md) {
            *o -= d;
        }
        Ok(out)
    }

    /// Largest asymmetry `|⟨M h, g⟩ − ⟨h, M g⟩|` and most negative `⟨M g, g⟩`
    /// over probe fields, both relative to `‖M‖∞ ‖h‖ ‖g‖`.
    pub fn mobility_defects(&self, rho: &Density, probes: &[Vec<f64>]) -> Result<(f64, f64)> {
        let m = (self.m)(rho)?;
        let w = self.space().weights();
        let scale = m.norm_inf().max(f64::MIN_POSITIVE);
        let mut asym: f64 = 0.0;
        let mut neg: f64 = 0.0;
        for pair in probes.windows(2) {
            let (h, g) = (&pair[0], &pair[1]);
            let nh = libm::sqrt(weighted_dot(h, h, None, w));
            let ng = libm::sqrt(weighted_dot(g, g, None, w));
            let a = weighted_dot(&m.apply(h), g, None, w);
            let b = weighted_dot(h, &m.apply(g), None, w);
            asym = asym.max(libm::fabs(a - b) / (scale * nh * ng));
            let q = weighted_dot(&m.apply(g), g, None, w);
            neg = neg.max(-q / (scale * ng * ng));
        }
        Ok((asym, neg))
    }
}

/// `W = −B`, `M_ρ = 2A′(ρA·)` and S the relative entropy to μ.
pub fn hypocoercive_to_pregeneric(h: &HypocoerciveForm, tol: f64) -> Result<GenericStructure> {
    h.validate(tol)?;
    let s = EntropyFunctional::new(h.mu.clone())?;
    Ok(GenericStructure::from_components(h.b.scaled(-1.0).with_label("W"), h.a.clone(), s))
}

/// Relative flat-L² distance between L′ρ and the reconstructed pre-GENERIC flow.
pub fn reconstruction_defect(h: &HypocoerciveForm, g: &GenericStructure, rho: &Density) -> Result<f64> {
    let lp = adjoint_l2(&h.generator()?).apply(rho.values());
    let fl = g.flow(rho)?;
    let w = h.space().weights();
    let d: Vec<f64> = lp.iter().zip(&fl).map(|(a, b)| a - b).collect();
    let num = libm::sqrt(weighted_dot(&d, &d, None, w));
    let den = libm::sqrt(weighted_dot(&lp, &lp, None, w));
    Ok(if den > 0.0 { num / den } else { num })
}

/// `⟨Wρ, dS(ρ)⟩`; nonpositive values are the dissipativity condition.
pub fn orthogonality_defect(w: &LinOp, rho: &Density, s: &EntropyFunctional) -> Result<f64> {
    same(w.space(), rho.space())?;
    let ds = s.gradient(rho)?;
    Ok(weighted_dot(&w.apply(rho.values()), &ds, None, w.space().weights()))
}

/// Supplied square-root factor: ρ ↦ components S_k with Σ S_k′S_k = M_ρ.
pub type SqrtBuilder<'a> = dyn Fn(&Density) -> Result<Vec<LinOp>> + 'a;

/// Tolerances of [`pregeneric_to_hypocoercive`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecoveryTolerances {
    pub factorization: f64,
    /// Bound on |⟨Wρ, dS(ρ)⟩| at every sample.
    pub orthogonality: f64,
    /// Bound on the L²_μ antisymmetry defect of the recovered B.
    pub antisymmetry: f64,
}

impl Default for RecoveryTolerances {
    fn default() -> Self {
        RecoveryTolerances { factorization: 1e-10, orthogonality: 1e-10, antisymmetry: 1e-10 }
    }
}

/// Recovers (A, B) from W and a factorization `M_ρ^{1/2} = √(2ρ)·A`.
///
/// The factorization is checked at each sampled ρ and orthogonality is
/// required there too; A is read off at ρ = μ and B = W′. The recovered B
/// is then tested for L²_μ antisymmetry on probe fields, and A1 = 0.
pub fn pregeneric_to_hypocoercive(
    g: &GenericStructure,
    m_sqrt: &SqrtBuilder<'_>,
    samples: &[Density],
    tol: RecoveryTolerances,
) -> Result<HypocoerciveForm> {
    let space = g.space().clone();
    let mu = g.s.mu().clone();
    let probes = probe_fields(&space, 8, 0x51);
    for rho in samples {
        let m = (g.m)(rho)?;
        let mut p = LinOp::zero(&space);
        for sk in m_sqrt(rho)? {
            p = p.add(&adjoint_l2(&sk).compose(&sk)?)?;
        }
        let d = relative_action(&m, &p, &probes);
        if !(d <= tol.factorization) {
            return Err(Error::Structural { invariant: "square-root factorization", defect: d, tol: tol.factorization });
        }
        let o = orthogonality_defect(&g.w, rho, &g.s)?;
        if !(libm::fabs(o) <= tol.orthogonality) {
            return Err(Error::Structural { invariant: "orthogonality", defect: libm::fabs(o), tol: tol.orthogonality });
        }
    }
    let inv: Vec<f64> = mu.values().iter().map(|m| 1.0 / libm::sqrt(2.0 * m)).collect();
    let a: Vec<LinOp> = m_sqrt(&mu)?.into_iter().map(|sk| sk.left_scale(&inv).with_label("A")).collect();
    let b = adjoint_l2(&g.w).with_label("B");

    let bs = adjoint_l2mu(&b, &mu)?;
    let anti = if b.norm_inf() == 0.0 { 0.0 } else { action_defect(&b, &bs.scaled(-1.0), &mu, &probes) };
    if !(anti <= tol.antisymmetry) {
        return Err(Error::Structural { invariant: "B* = -B", defect: anti, tol: tol.antisymmetry });
    }
    for ak in &a {
        let d = ak.constant_defect() / ak.norm_inf().max(f64::MIN_POSITIVE);
        if !(d <= 1e-10) {
            return Err(Error::Structural { invariant: "A1 = 0", defect: d, tol: 1e-10 });
        }
    }
    HypocoerciveForm::new(a, b, mu)
}

fn relative_action(p: &LinOp, q: &LinOp, probes: &[Vec<f64>]) -> f64 {
    let w = p.space().weights();
    let mut worst: f64 = 0.0;
    for f in probes {
        let a = p.apply(f);
        let b = q.apply(f);
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let den = libm::sqrt(weighted_dot(&a, &a, None, w)).max(libm::sqrt(weighted_dot(&b, &b, None, w)));
        let num = libm::sqrt(weighted_dot(&d, &d, None, w));
        worst = worst.max(if den > 0.0 { num / den } else { num });
    }
    worst
}

/// Which pairing closes the pre-GENERIC residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResidualForm {
    /// ½⟨ρ̇, dS⟩, valid when W is orthogonal to dS.
    Orthogonal,
    /// ½⟨ρ̇ − Wρ, dS⟩, valid without orthogonality.
    General,
}

/// `ψ(ρ; ρ̇ − Wρ) + ψ*(ρ; −½dS) + ½⟨·, dS⟩`; nonnegative by Young–Fenchel and
/// zero exactly when ρ̇ is the pre-GENERIC flow.
#[allow(clippy::too_many_arguments)]
pub fn pregeneric_residual(
    flow: &[f64],
    w: &LinOp,
    psi: &dyn DissipationPotential,
    s: &EntropyFunctional,
    rho: &Density,
    form: ResidualForm,
    cfg: &LegendreConfig,
) -> Result<f64> {
    let wr = w.apply(rho.values());
    let v: Vec<f64> = flow.iter().zip(&wr).map(|(a, b)| a - b).collect();
    let ds = s.gradient(rho)?;
    let half: Vec<f64> = ds.iter().map(|x| -0.5 * x).collect();
    let weights = w.space().weights();
    let pair = match form {
        ResidualForm::Orthogonal => weighted_dot(flow, &ds, None, weights),
        ResidualForm::General => weighted_dot(&v, &ds, None, weights),
    };
    Ok(psi.psi(rho, &v, cfg)? + psi.psi_star(rho, &half)? + 0.5 * pair)
}

/// Quadratic dissipation `ψ*(ρ; ξ) = ½⟨ξ, M_ρ ξ⟩` with M_ρ from components.
#[derive(Clone, Debug)]
pub struct QuadraticPotential {
    space: Space,
    a: Vec<LinOp>,
}

impl QuadraticPotential {
    pub fn new(a: Vec<LinOp>) -> Result<Self> {
        let space = a.first().ok_or_else(|| Error::InvalidInput("no components".into()))?.space().clone();
        Ok(QuadraticPotential { space, a })
    }
}

impl DissipationPotential for QuadraticPotential {
    fn space(&self) -> &Space {
        &self.space
    }

    fn psi_star(&self, rho: &Density, xi: &[f64]) -> Result<f64> {
        let m = wasserstein_operator(&self.a, rho)?;
        Ok(0.5 * weighted_dot(xi, &m.apply(xi), None, self.space.weights()))
    }

    fn grad_psi_star(&self, rho: &Density, xi: &[f64]) -> Result<Vec<f64>> {
        Ok(wasserstein_operator(&self.a, rho)?.apply(xi))
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}

/// One explicit Euler step of the pre-GENERIC flow, reporting whether the entropy rose.
pub fn euler_entropy_step(g: &GenericStructure, rho: &Density, dt: f64) -> Result<(Density, f64)> {
    let f = g.flow(rho)?;
    let next: Vec<f64> = rho.values().iter().zip(&f).map(|(r, d)| r + dt * d).collect();
    let next = Density::new(rho.space().clone(), next)?;
    let change = g.s.eval(&next)? - g.s.eval(rho)?;
    Ok((next, change))
}

/// Summary of the checks performed on a hypocoercive form and its pre-GENERIC image.
pub fn structure_reports(h: &HypocoerciveForm, g: &GenericStructure, samples: &[Density], tol: f64) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    for (name, d) in h.invariant_defects()? {
        out.push(CheckReport::new(name, d, tol));
    }
    let mut recon: f64 = 0.0;
    let mut orth: f64 = 0.0;
    for rho in samples {
        recon = recon.max(reconstruction_defect(h, g, rho)?);
        orth = orth.max(libm::fabs(orthogonality_defect(&g.w, rho, &g.s)?));
    }
    out.push(CheckReport::new("flow reconstruction", recon, tol));
    out.push(CheckReport::new("orthogonality", orth, tol));
    let stat = g.flow(&h.mu)?;
    out.push(CheckReport::new("stationary flow", max_abs(&stat), tol * max_abs(h.mu.values()).max(1.0)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Csr;
    use crate::statespace::{build_grid, Axis};
    use alloc::vec;

    #[test]
    fn two_state_entropy() {
        let s = StateSpace::counting(2).unwrap();
        let rho = Density::from_masses(&s, &[0.5, 0.5]).unwrap();
        let mu = Density::from_masses(&s, &[2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let e = relative_entropy(&rho, &mu).unwrap();
        assert!((e - 0.5 * libm::log(9.0 / 8.0)).abs() < 1e-15);
        assert_eq!(relative_entropy(&mu, &mu).unwrap(), 0.0);
        let r2 = Density::new(s.clone(), vec![0.8 * mu.values()[0], 1.2 * mu.values()[1]]).unwrap();
        let g = entropy_gradient(&r2, &mu).unwrap();
        assert!((g[0] - (libm::log(0.8) + 1.0)).abs() < 1e-15);
        assert!((g[1] - (libm::log(1.2) + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn entropy_allows_empty_cells_but_checks_mass() {
        let s = StateSpace::counting(2).unwrap();
        let mu = Density::uniform(&s);
        let rho = Density::new(s.clone(), vec![1.0, 0.0]).unwrap();
        assert!((relative_entropy(&rho, &mu).unwrap() - libm::log(2.0)).abs() < 1e-15);
        let bad = Density::new(s, vec![0.7, 0.7]).unwrap();
        assert!(matches!(relative_entropy(&bad, &mu), Err(Error::Mass(_))));
    }

    #[test]
    fn mobility_on_three_point_ring() {
        let g = build_grid(&[Axis::periodic(0.0, 3.0, 3)]).unwrap();
        let h = 1.0;
        let mut t = Vec::new();
        for i in 0..3 {
            t.push((i, i, -1.0 / h));
            t.push((i, (i + 1) % 3, 1.0 / h));
        }
        let a = LinOp::from_csr(&g, Csr::from_triplets(3, 3, t), "D+").unwrap();
        let rho = Density::uniform(&g);
        let m = wasserstein_operator(&[a], &rho).unwrap().to_dense();
        let c = 2.0 * rho.values()[0] / (h * h);
        for i in 0..3 {
            for j in 0..3 {
                let lap = if i == j { 2.0 } else { -1.0 };
                assert!((m[(i, j)] - c * lap).abs() < 1e-15);
            }
        }
        let z = wasserstein_operator(&[LinOp::zero(&g)], &rho).unwrap().apply(&[1.0, 1.0, 1.0]);
        assert!(max_abs(&z) == 0.0);
    }

    #[test]
    fn uniform_density_is_orthogonal_to_any_generator_dual() {
        let s = StateSpace::finite(vec![0.5, 1.0, 2.0]).unwrap();
        let l = LinOp::from_rows(&s, &[&[-1.0, 0.4, 0.6], &[2.0, -3.0, 1.0], &[0.1, 0.2, -0.3]], "L").unwrap();
        let mu = Density::from_masses(&s, &[0.2, 0.3, 0.5]).unwrap();
        let w = adjoint_l2(&l);
        let ent = EntropyFunctional::new(mu.clone()).unwrap();
        let d = orthogonality_defect(&w, &mu, &ent).unwrap();
        assert!(d.abs() < 1e-13);
    }

    #[test]
    fn hypocoercive_form_names_failing_invariant() {
        let s = StateSpace::counting(2).unwrap();
        let mu = Density::uniform(&s);
        let b = LinOp::from_rows(&s, &[&[0.0, 1.0], &[1.0, 0.0]], "sym").unwrap();
        let h = HypocoerciveForm::new(vec![], b, mu).unwrap();
        match hypocoercive_to_pregeneric(&h, 1e-12) {
            Err(Error::Structural { invariant, .. }) => assert_eq!(invariant, "B* = -B"),
            other => panic!("{other:?}"),
        }
    }
}
