//! Phase-space models on a grid with position axes first and velocity axes last.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{JumpStructure, ModelBundle, PotentialSpec};
use crate::generic::HypocoerciveForm;
use crate::linalg::Csr;
use crate::opalg::{Fiber, Involution, LinOp};
use crate::statespace::{Axis, Boundary, Density, Space, SpaceKind};
use crate::{Error, Result};

/// Reflections snapped further than this fraction of the velocity spacing are refused.
pub const SNAP_THRESHOLD: f64 = 0.1;

/// Index bookkeeping for a grid whose first `d` axes are positions and last `d` velocities.
#[derive(Clone, Debug)]
pub struct PhaseLayout {
    pub d: usize,
    pub nx: usize,
    pub nv: usize,
    space: Space,
    strides: Vec<usize>,
}

impl PhaseLayout {
    pub fn new(space: &Space) -> Result<Self> {
        if space.kind() != SpaceKind::Grid || !space.axes().len().is_multiple_of(2) {
            return Err(Error::InvalidInput("phase-space models need a grid with 2d axes".into()));
        }
        let axes = space.axes();
        let d = axes.len() / 2;
        for a in &axes[d..] {
            if !a.is_symmetric() {
                return Err(Error::InvalidInput("velocity axes must be truncated and symmetric about zero so the flip is defined".into()));
            }
        }
        let nx = axes[..d].iter().map(|a| a.n).product();
        let nv = axes[d..].iter().map(|a| a.n).product();
        Ok(PhaseLayout { d, nx, nv, space: space.clone(), strides: space.strides() })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn x_of(&self, i: usize) -> usize {
        i / self.nv
    }

    pub fn v_of(&self, i: usize) -> usize {
        i % self.nv
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.space.point(i)[..self.d]
    }

    fn axis(&self, a: usize) -> &Axis {
        &self.space.axes()[a]
    }

    fn index_along(&self, i: usize, a: usize) -> usize {
        (i / self.strides[a]) % self.axis(a).n
    }

    fn step(&self, i: usize, a: usize, forward: bool) -> Option<usize> {
        let ax = self.axis(a);
        let s = self.strides[a];
        let k = self.index_along(i, a);
        match (forward, ax.boundary) {
            (true, _) if k + 1 < ax.n => Some(i + s),
            (true, Boundary::Periodic) => Some(i + s - ax.n * s),
            (false, _) if k > 0 => Some(i - s),
            (false, Boundary::Periodic) => Some(i + (ax.n - 1) * s),
            _ => None,
        }
    }

    /// The velocity flip v ↦ −v on node indices.
    pub fn flip(&self) -> Result<Involution> {
        let n = self.space.len();
        let sigma = (0..n)
            .map(|i| {
                let mut idx = self.space.multi_index(i);
                for a in self.d..2 * self.d {
                    idx[a] = self.axis(a).n - 1 - idx[a];
                }
                self.space.linear_index(&idx)
            })
            .collect();
        Involution::new(&self.space, sigma)
    }

    /// Normalised Gaussian masses over the velocity nodes of one fiber.
    fn velocity_masses(&self) -> Vec<f64> {
        let mut m: Vec<f64> = (0..self.nv)
            .map(|k| {
                let i = k; // x index 0
                (self.d..2 * self.d)
                    .map(|a| {
                        let l = self.index_along(i, a);
                        let ax = self.axis(a);
                        let v = ax.coord(l);
                        libm::exp(-0.5 * v * v) * ax.cell(l)
                    })
                    .product()
            })
            .collect();
        let s: f64 = m.iter().sum();
        m.iter_mut().for_each(|v| *v /= s);
        m
    }

    fn refresh_fiber(&self) -> Fiber {
        let p = self.velocity_masses();
        let n = self.space.len();
        Fiber::new((0..n).map(|i| self.x_of(i)).collect(), (0..n).map(|i| p[self.v_of(i)]).collect())
    }

    fn corner(&self, a: usize, c: usize) -> Option<f64> {
        let ax = self.axis(a);
        let h = ax.spacing();
        match ax.boundary {
            Boundary::Truncated if c == 0 || c == ax.n => None,
            _ => Some(ax.min + (c as f64 - 0.5) * h),
        }
    }
}

/// Unnormalised e^{−V(x) − |v|²/2}, shifted so the largest node value is O(1).
struct Gibbs<'a> {
    pot: &'a PotentialSpec,
    shift: f64,
    d: usize,
}

impl Gibbs<'_> {
    fn at(&self, p: &[f64]) -> f64 {
        let v2: f64 = p[self.d..].iter().map(|v| v * v).sum();
        libm::exp(-(self.pot.v.value(&p[..self.d]) - self.shift) - 0.5 * v2)
    }
}

fn gibbs<'a>(lay: &PhaseLayout, pot: &'a PotentialSpec) -> (Gibbs<'a>, Vec<f64>) {
    let n = lay.space.len();
    let shift = (0..n).map(|i| pot.v.value(lay.position(i))).fold(f64::INFINITY, f64::min);
    let g = Gibbs { pot, shift, d: lay.d };
    let raw = (0..n).map(|i| g.at(lay.space.point(i))).collect();
    (g, raw)
}

/// Liouville operator v·∇ₓ − ∇V·∇ᵥ in flux form.
///
/// Each (x_k, v_k) plane carries the divergence-free flux of the stream
/// function e^{−V − |v|²/2} sampled at cell corners (zero on truncated
/// edges). With `raw` the Gibbs weights at the nodes, B_ij = Φ_ij/(2 raw_i w_i)
/// for the antisymmetric face flux Φ, which makes B exactly antisymmetric in
/// L²_μ, kills constants, and keeps μ exactly stationary.
fn liouville(lay: &PhaseLayout, g: &Gibbs<'_>, raw: &[f64]) -> Csr {
    let space = &lay.space;
    let w = space.weights();
    let n = space.len();
    let d = lay.d;
    let mut t = Vec::with_capacity(8 * d * n);
    let mut p = vec![0.0; 2 * d];
    for i in 0..n {
        for k in 0..d {
            let (xa, va) = (k, d + k);
            let ix = lay.index_along(i, xa);
            let iv = lay.index_along(i, va);
            let area: f64 = (0..2 * d).filter(|a| *a != xa && *a != va).map(|a| lay.axis(a).cell(lay.index_along(i, a))).product();
            let mut psi = |cx: usize, cv: usize| -> f64 {
                match (lay.corner(xa, cx), lay.corner(va, cv)) {
                    (Some(x), Some(v)) => {
                        p.copy_from_slice(space.point(i));
                        p[xa] = x;
                        p[va] = v;
                        g.at(&p)
                    }
                    _ => 0.0,
                }
            };
            let mut push = |j: usize, phi: f64| {
                t.push((i, j, phi / (2.0 * raw[i] * w[i])));
                t.push((j, i, -phi / (2.0 * raw[j] * w[j])));
            };
            if let Some(j) = lay.step(i, xa, true) {
                let phi = -(psi(ix + 1, iv + 1) - psi(ix + 1, iv)) * area;
                push(j, phi);
            }
            if let Some(j) = lay.step(i, va, true) {
                let phi = (psi(ix + 1, iv + 1) - psi(ix, iv + 1)) * area;
                push(j, phi);
            }
        }
    }
    Csr::from_triplets(n, n, t)
}

/// Centered derivative along one axis, one-sided at truncated ends.
pub(crate) fn centered_derivative(space: &Space, a: usize, coeff: &dyn Fn(usize) -> f64) -> Csr {
    let n = space.len();
    let ax = space.axes()[a];
    let h = ax.spacing();
    let strides = space.strides();
    let s = strides[a];
    let mut t = Vec::with_capacity(2 * n);
    for i in 0..n {
        let c = coeff(i);
        if c == 0.0 {
            continue;
        }
        let k = (i / s) % ax.n;
        let fwd = if k + 1 < ax.n {
            Some(i + s)
        } else if ax.boundary == Boundary::Periodic {
            Some(i + s - ax.n * s)
        } else {
            None
        };
        let bwd = if k > 0 {
            Some(i - s)
        } else if ax.boundary == Boundary::Periodic {
            Some(i + (ax.n - 1) * s)
        } else {
            None
        };
        match (fwd, bwd) {
            (Some(f), Some(b)) => {
                t.push((i, f, c / (2.0 * h)));
                t.push((i, b, -c / (2.0 * h)));
            }
            (Some(f), None) => {
                t.push((i, f, c / h));
                t.push((i, i, -c / h));
            }
            (None, Some(b)) => {
                t.push((i, i, c / h));
                t.push((i, b, -c / h));
            }
            (None, None) => {}
        }
    }
    Csr::from_triplets(n, n, t)
}

struct Phase {
    lay: PhaseLayout,
    mu: Density,
    transport: LinOp,
    h: f64,
    warnings: Vec<String>,
}

fn phase_common(pot: &PotentialSpec, space: &Space) -> Result<Phase> {
    let lay = PhaseLayout::new(space)?;
    let (g, raw) = gibbs(&lay, pot);
    let b = liouville(&lay, &g, &raw);
    let transport = LinOp::from_csr(space, b, "B")?;
    let mu = Density::from_fn(space, |p| g.at(p))?;
    let h = space.axes().iter().map(|a| a.spacing()).fold(0.0, f64::max);
    let nodes: Vec<Vec<f64>> = (0..space.len()).map(|i| lay.position(i).to_vec()).collect();
    let edge: Vec<bool> = (0..space.len())
        .map(|i| {
            (0..lay.d).any(|a| {
                let ax = lay.axis(a);
                let k = lay.index_along(i, a);
                ax.boundary == Boundary::Truncated && (k == 0 || k + 1 == ax.n)
            })
        })
        .collect();
    let warnings = pot.confinement_warnings(&nodes, &edge);
    Ok(Phase { lay, mu, transport, h, warnings })
}

/// `L = B − Σ_k ∂_{v_k}* ∂_{v_k}` with the flux-form Liouville B.
pub fn kinetic_fokker_planck(pot: &PotentialSpec, space: &Space) -> Result<ModelBundle> {
    let ph = phase_common(pot, space)?;
    let d = ph.lay.d;
    let mut a = Vec::with_capacity(d);
    for k in 0..d {
        a.push(LinOp::from_csr(space, centered_derivative(space, d + k, &|_| 1.0), "dv")?);
    }
    let hypo = HypocoerciveForm::new(a, ph.transport.clone(), ph.mu.clone())?;
    let l = hypo.generator()?.with_label("L_kfp");
    let mut b = ModelBundle::assemble("kinetic", l, ph.mu, Some(ph.h));
    b.hypo = Some(hypo);
    b.flip = Some(ph.lay.flip()?);
    b.transport = Some(ph.transport);
    b.potential = Some(pot.clone());
    b.warnings = ph.warnings;
    Ok(b)
}

/// `L = B + λ_r(Q − I)` with Q the Gaussian velocity refresh.
pub fn andersen_thermostat(pot: &PotentialSpec, lambda_r: f64, space: &Space) -> Result<ModelBundle> {
    if !(lambda_r > 0.0) || !lambda_r.is_finite() {
        return Err(Error::InvalidInput(alloc::format!("refresh rate must be positive, got {lambda_r}")));
    }
    let ph = phase_common(pot, space)?;
    let fiber = ph.lay.refresh_fiber();
    let lq = LinOp::fiber(space, fiber.clone(), "Q").sub(&LinOp::identity(space))?.scaled(lambda_r);
    let l = ph.transport.add(&lq)?.with_label("L_at");
    let flip = ph.lay.flip()?;
    let n = space.len();
    let mut b = ModelBundle::assemble("andersen", l, ph.mu, Some(ph.h));
    b.params.push(("lambda_r".into(), lambda_r));
    b.jump = Some(JumpStructure {
        refresh_rate: lambda_r,
        bounce_rate: vec![0.0; n],
        reflection: flip.clone(),
        refresh: fiber,
        a_field: vec![0.0; n],
        snapping_error: 0.0,
    });
    b.flip = Some(flip);
    b.transport = Some(ph.transport);
    b.potential = Some(pot.clone());
    b.warnings = ph.warnings;
    Ok(b)
}

/// Discrete ∂_v along one velocity axis split as K + diag(v_d/2).
///
/// K is antisymmetric against the Gaussian weights along the axis. Its face
/// coefficients are the running quadrature of −½vπ(v), which approximate
/// ½π at the face midpoint and make v_d = −2K1 equal to the node velocity up
/// to round-off. Returns (K, v_d).
fn gaussian_skew(lay: &PhaseLayout, a: usize) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
    let ax = *lay.axis(a);
    let n = lay.space.len();
    let mass = |l: usize| {
        let v = ax.coord(l);
        libm::exp(-0.5 * v * v) * ax.cell(l)
    };
    // c[l] sits between nodes l and l+1; mirrored so that it is exactly symmetric.
    let mut c = vec![0.0; ax.n - 1];
    let mut run = 0.0;
    for l in 0..ax.n - 1 {
        run -= 0.5 * ax.coord(l) * mass(l);
        c[l] = run;
    }
    for l in 0..ax.n - 1 {
        let m = ax.n - 2 - l;
        if m < l {
            c[l] = c[m];
        }
    }
    let mut t = Vec::with_capacity(2 * n);
    let mut vd = vec![0.0; n];
    for i in 0..n {
        let l = lay.index_along(i, a);
        let den = mass(l);
        let up = if l + 1 < ax.n { c[l] } else { 0.0 };
        let dn = if l > 0 { c[l - 1] } else { 0.0 };
        if let Some(j) = lay.step(i, a, true) {
            t.push((i, j, up / den));
        }
        if let Some(j) = lay.step(i, a, false) {
            t.push((i, j, -dn / den));
        }
        vd[i] = -2.0 * (up - dn) / den;
    }
    (t, vd)
}

/// Reflection of velocities across the bounce direction, on node indices.
///
/// One velocity dimension reflects exactly (v ↦ −v where the bounce field is
/// nonzero). Otherwise the reflected velocity is snapped to the nearest node
/// and the largest snapping distance is returned.
fn reflection(lay: &PhaseLayout, pot: &PotentialSpec) -> Result<(Involution, f64)> {
    let space = &lay.space;
    let d = lay.d;
    let n = space.len();
    let mut sigma: Vec<usize> = (0..n).collect();
    let mut worst: f64 = 0.0;
    let hv = (d..2 * d).map(|a| lay.axis(a).spacing()).fold(0.0, f64::max);
    for i in 0..n {
        let gu = pot.grad_u_tilde(lay.position(i));
        let norm = libm::sqrt(gu.iter().map(|g| g * g).sum::<f64>());
        if norm == 0.0 {
            continue;
        }
        let p = space.point(i);
        let v = &p[d..];
        let dot: f64 = v.iter().zip(&gu).map(|(a, b)| a * b).sum::<f64>() / (norm * norm);
        let mut idx = space.multi_index(i);
        let mut err2 = 0.0;
        for k in 0..d {
            let ax = lay.axis(d + k);
            let target = v[k] - 2.0 * dot * gu[k];
            let r = libm::round((target - ax.min) / ax.spacing());
            if r < 0.0 || r > (ax.n - 1) as f64 {
                return Err(Error::Snapping { error: f64::INFINITY, threshold: SNAP_THRESHOLD * hv });
            }
            let snapped = ax.coord(r as usize);
            err2 += (target - snapped) * (target - snapped);
            idx[d + k] = r as usize;
        }
        worst = worst.max(libm::sqrt(err2));
        sigma[i] = space.linear_index(&idx);
    }
    if d == 1 {
        worst = 0.0;
    }
    if worst > SNAP_THRESHOLD * hv {
        return Err(Error::Snapping { error: worst, threshold: SNAP_THRESHOLD * hv });
    }
    let inv = Involution::new(space, sigma).map_err(|_| Error::Snapping { error: worst.max(hv), threshold: SNAP_THRESHOLD * hv })?;
    Ok((inv, worst))
}

/// Hamiltonian bouncy sampler: flow under Ṽ, bounces at rate a₊ across ∇Ũ,
/// Gaussian refresh at rate λ_r.
///
/// `L = B + Σ_k ∂_kŨ (K_k + diag(v_d,k/2)) + a₊(R − I) + λ_r(Q − I)` with
/// a = Σ_k ∂_kŨ v_d,k. The bounce term's reversed half cancels the diagonal
/// part exactly, so μ is stationary and the symmetric part is
/// `λ_r(Q − I) + ½|a|(R − I)` up to round-off.
pub fn ham_pdmcmc(pot: &PotentialSpec, lambda_r: f64, space: &Space) -> Result<ModelBundle> {
    if !(lambda_r >= 0.0) || !lambda_r.is_finite() {
        return Err(Error::InvalidInput(alloc::format!("refresh rate must be nonnegative, got {lambda_r}")));
    }
    let ph = phase_common(pot, space)?;
    let lay = &ph.lay;
    let d = lay.d;
    let n = space.len();
    let gu: Vec<Vec<f64>> = (0..n).map(|i| pot.grad_u_tilde(lay.position(i))).collect();

    let mut t = Vec::new();
    let mut a_field = vec![0.0; n];
    for k in 0..d {
        let (kt, vd) = gaussian_skew(lay, d + k);
        for (i, j, v) in kt {
            t.push((i, j, gu[i][k] * v));
        }
        for i in 0..n {
            t.push((i, i, 0.5 * gu[i][k] * vd[i]));
            a_field[i] += gu[i][k] * vd[i];
        }
    }
    let (refl, snap) = reflection(lay, pot)?;
    let bounce: Vec<f64> = a_field.iter().map(|a| a.max(0.0)).collect();
    for i in 0..n {
        let j = refl.map()[i];
        if bounce[i] > 0.0 && j != i {
            t.push((i, j, bounce[i]));
            t.push((i, i, -bounce[i]));
        }
    }
    let g = LinOp::from_csr(space, Csr::from_triplets(n, n, t), "G")?;
    let fiber = lay.refresh_fiber();
    let mut l = ph.transport.add(&g)?;
    if lambda_r > 0.0 {
        let lq = LinOp::fiber(space, fiber.clone(), "Q").sub(&LinOp::identity(space))?.scaled(lambda_r);
        l = l.add(&lq)?;
    }
    let mut b = ModelBundle::assemble("hampdmcmc", l.with_label("L_hpd"), ph.mu, Some(ph.h));
    b.params.push(("lambda_r".into(), lambda_r));
    b.jump = Some(JumpStructure { refresh_rate: lambda_r, bounce_rate: bounce, reflection: refl, refresh: fiber, a_field, snapping_error: snap });
    b.flip = Some(lay.flip()?);
    b.transport = Some(ph.transport);
    b.potential = Some(pot.clone());
    b.warnings = ph.warnings;
    if snap > 0.0 {
        b.warnings.push(alloc::format!("velocity reflection snapped to grid, largest error {snap:e}"));
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Potential;
    use crate::num::max_abs;
    use crate::opalg::{adjoint_l2, adjoint_l2mu, split_sym_antisym};
    use crate::statespace::build_grid;

    fn grid(n: usize, l: f64) -> Space {
        build_grid(&[Axis::truncated(-l, l, n), Axis::truncated(-l, l, n)]).unwrap()
    }

    #[test]
    fn liouville_is_exactly_skew_and_consistent() {
        let s = grid(33, 6.0);
        let pot = PotentialSpec::new(Potential::quadratic(1.0));
        let b = kinetic_fokker_planck(&pot, &s).unwrap();
        let tr = b.transport.as_ref().unwrap();
        let ts = adjoint_l2mu(tr, &b.mu).unwrap().to_csr();
        let tc = tr.to_csr();
        assert!(max_abs(&ts.add(&tc).values) <= 1e-13 * max_abs(&tc.values));
        assert!(tr.constant_defect() <= 1e-12 * tr.norm_inf());
        assert!(max_abs(&adjoint_l2(tr).apply(b.mu.values())) <= 1e-12 * tr.norm_inf() * max_abs(b.mu.values()));
        // Interior action against v ∂x f − x ∂v f converges at second order.
        let err = |n: usize| {
            let s = grid(n, 6.0);
            let b = kinetic_fokker_planck(&pot, &s).unwrap();
            let f: Vec<f64> = (0..s.len()).map(|i| libm::sin(s.point(i)[0]) * libm::cos(0.5 * s.point(i)[1])).collect();
            let bf = b.transport.as_ref().unwrap().apply(&f);
            let mut worst: f64 = 0.0;
            for i in 0..s.len() {
                let p = s.point(i);
                if p[0].abs() < 2.0 && p[1].abs() < 2.0 {
                    let exact = p[1] * libm::cos(p[0]) * libm::cos(0.5 * p[1]) + p[0] * 0.5 * libm::sin(p[0]) * libm::sin(0.5 * p[1]);
                    worst = worst.max((bf[i] - exact).abs());
                }
            }
            worst
        };
        let ratio = err(33) / err(65);
        assert!(ratio > 3.5, "{ratio}");
    }

    #[test]
    fn kinetic_bundle_validates_and_is_flip_reversible() {
        let s = grid(17, 6.0);
        let b = kinetic_fokker_planck(&PotentialSpec::new(Potential::quadratic(1.0)), &s).unwrap();
        for r in b.validate().unwrap() {
            assert!(r.pass, "{r:?}");
        }
        let f = b.flip.as_ref().unwrap();
        let r = crate::opalg::check_generalized_reversibility(&b.l, &b.mu, f, 1e-12).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn asymmetric_velocity_axis_is_refused() {
        let s = build_grid(&[Axis::truncated(-4.0, 4.0, 9), Axis::truncated(-3.0, 4.0, 9)]).unwrap();
        assert!(kinetic_fokker_planck(&PotentialSpec::new(Potential::quadratic(1.0)), &s).is_err());
    }

    #[test]
    fn andersen_refresh_channel() {
        let s = grid(13, 5.0);
        let pot = PotentialSpec::new(Potential::quadratic(1.0));
        let b = andersen_thermostat(&pot, 2.0, &s).unwrap();
        let j = b.jump.as_ref().unwrap();
        let lq = LinOp::fiber(&s, j.refresh.clone(), "Q").sub(&LinOp::identity(&s)).unwrap().scaled(2.0);
        let f: Vec<f64> = (0..s.len()).map(|i| libm::sin(s.point(i)[0])).collect();
        assert!(max_abs(&lq.apply(&f)) < 1e-13);
        let lqs = adjoint_l2mu(&lq, &b.mu).unwrap().to_csr();
        let lqc = lq.to_csr();
        assert!(max_abs(&lqs.add(&lqc.scale(None, None, -1.0)).values) < 1e-12);
        assert!(max_abs(&adjoint_l2(&lq).apply(b.mu.values())) < 1e-12);
        // L_Q ∘ L_Q = −λ L_Q
        let sq = lq.compose(&lq).unwrap().to_csr();
        assert!(max_abs(&sq.add(&lqc.scale(None, None, 2.0)).values) < 1e-12);
        assert!(matches!(andersen_thermostat(&pot, 0.0, &s), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn hampd_structure_in_one_dimension() {
        let s = grid(21, 6.0);
        let pot = PotentialSpec::tilted(Potential::quadratic(1.0), vec![1.0]);
        let b = ham_pdmcmc(&pot, 1.0, &s).unwrap();
        for r in b.validate().unwrap() {
            assert!(r.pass, "{r:?}");
        }
        let j = b.jump.as_ref().unwrap();
        assert!(j.antisymmetry_defect() < 1e-14);
        assert_eq!(j.overlap(), 0.0);
        // Reflection is v ↦ −v and the bounce rate tracks v₊.
        let ax = s.axes()[1];
        for i in 0..s.len() {
            let l = i % ax.n;
            assert_eq!(j.reflection.map()[i], i - l + (ax.n - 1 - l));
            let v = s.point(i)[1];
            assert!((j.bounce_rate[i] - v.max(0.0)).abs() < 1e-12);
        }
        // Symmetric part equals the refresh plus the symmetrised bounce channel.
        let (ls, _) = split_sym_antisym(&b.l, &b.mu).unwrap();
        let lq = LinOp::fiber(&s, j.refresh.clone(), "Q").sub(&LinOp::identity(&s)).unwrap();
        let half: Vec<f64> = j.a_field.iter().map(|a| 0.5 * a.abs()).collect();
        let refl = j.reflection.as_op().sub(&LinOp::identity(&s)).unwrap().left_scale(&half);
        let closed = lq.add(&refl).unwrap().to_csr();
        let d = ls.to_csr().add(&closed.scale(None, None, -1.0));
        assert!(max_abs(&d.values) <= 1e-12 * max_abs(&closed.values), "{}", max_abs(&d.values));
    }

    #[test]
    fn degenerate_auxiliary_reduces_to_andersen() {
        let s = grid(11, 5.0);
        let v = Potential::quadratic(1.0);
        let pot = PotentialSpec::with_auxiliary(v.clone(), v.clone());
        let h = ham_pdmcmc(&pot, 1.5, &s).unwrap();
        let a = andersen_thermostat(&PotentialSpec::new(v), 1.5, &s).unwrap();
        assert!(h.jump.as_ref().unwrap().bounce_rate.iter().all(|r| *r == 0.0));
        let d = h.l.to_csr().add(&a.l.to_csr().scale(None, None, -1.0));
        assert!(max_abs(&d.values) < 1e-13);
    }

    #[test]
    fn two_dimensional_reflection_snaps_or_refuses() {
        let ax = Axis::truncated(-3.0, 3.0, 7);
        let s = build_grid(&[ax, ax, ax, ax]).unwrap();
        // Bounce field along a coordinate axis reflects exactly onto nodes.
        let pot = PotentialSpec::tilted(Potential::quadratic(1.0), vec![1.0, 0.0]);
        let b = ham_pdmcmc(&pot, 1.0, &s).unwrap();
        assert_eq!(b.jump.as_ref().unwrap().snapping_error, 0.0);
        // A skew direction cannot be represented on the velocity nodes.
        let pot = PotentialSpec::tilted(Potential::quadratic(1.0), vec![1.0, 0.3]);
        assert!(matches!(ham_pdmcmc(&pot, 1.0, &s), Err(Error::Snapping { .. })));
    }
}
