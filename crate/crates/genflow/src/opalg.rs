//! Discrete operator algebra: linear operators with structural adjoints,
//! symmetric/antisymmetric splitting, stationary densities and
//! (generalized) reversibility checks.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::linalg::{BandedLu, Csr, Dense};
use crate::num::max_abs;
use crate::statespace::{weighted_dot, Density, ScalarField, Space, SpaceKind, StateSpace};

/// Averaging within fibers: (K f)_i = Σ_{j in fiber(i)} p_j f_j.
#[derive(Clone, Debug, PartialEq)]
pub struct Fiber {
    fiber_of: Vec<usize>,
    members: Vec<Vec<usize>>,
    p: Vec<f64>,
}

impl Fiber {
    pub fn new(fiber_of: Vec<usize>, p: Vec<f64>) -> Self {
        let nf = fiber_of.iter().max().map(|m| m + 1).unwrap_or(0);
        let mut members = vec![Vec::new(); nf];
        for (i, f) in fiber_of.iter().enumerate() {
            members[*f].push(i);
        }
        Fiber { fiber_of, members, p }
    }

    fn apply(&self, x: &[f64], y: &mut [f64], transposed: bool, abs: bool) {
        let pv = |j: usize| if abs { libm::fabs(self.p[j]) } else { self.p[j] };
        if !transposed {
            for m in &self.members {
                let s: f64 = m.iter().map(|&j| pv(j) * x[j]).sum();
                for &i in m {
                    y[i] = s;
                }
            }
        } else {
            for m in &self.members {
                let s: f64 = m.iter().map(|&i| x[i]).sum();
                for &j in m {
                    y[j] = pv(j) * s;
                }
            }
        }
    }

    fn triplets(&self, transposed: bool) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for m in &self.members {
            for &i in m {
                for &j in m {
                    if transposed {
                        t.push((j, i, self.p[j]));
                    } else {
                        t.push((i, j, self.p[j]));
                    }
                }
            }
        }
        t
    }

    pub fn fiber_of(&self) -> &[usize] {
        &self.fiber_of
    }

    pub fn weights(&self) -> &[f64] {
        &self.p
    }

    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }
}

#[derive(Clone, Debug)]
enum Kernel {
    Identity,
    Csr(Arc<Csr>),
    Dense(Arc<Dense>),
    Fiber(Arc<Fiber>),
    /// Composition a∘b.
    Product(Arc<LinOp>, Arc<LinOp>),
}

#[derive(Clone, Debug)]
struct Term {
    scale: f64,
    left: Option<Arc<Vec<f64>>>,
    right: Option<Arc<Vec<f64>>>,
    kernel: Kernel,
    transposed: bool,
}

/// Linear operator on fields over one state space, stored as a sum of
/// terms `scale · diag(left) · K · diag(right)` so that adjoints and
/// weight changes stay exact and cheap.
#[derive(Clone, Debug)]
pub struct LinOp {
    space: Space,
    terms: Vec<Term>,
    label: String,
}

fn mul_diag(a: &Option<Arc<Vec<f64>>>, d: &[f64]) -> Option<Arc<Vec<f64>>> {
    Some(Arc::new(match a {
        Some(v) => v.iter().zip(d).map(|(x, y)| x * y).collect(),
        None => d.to_vec(),
    }))
}

impl LinOp {
    fn single(space: &Space, kernel: Kernel, label: &str) -> Self {
        LinOp { space: space.clone(), terms: vec![Term { scale: 1.0, left: None, right: None, kernel, transposed: false }], label: label.into() }
    }

    pub fn zero(space: &Space) -> Self {
        LinOp { space: space.clone(), terms: Vec::new(), label: "0".into() }
    }

    pub fn identity(space: &Space) -> Self {
        Self::single(space, Kernel::Identity, "I")
    }

    pub fn diagonal(space: &Space, d: Vec<f64>) -> Self {
        assert_eq!(d.len(), space.len());
        let mut op = Self::identity(space);
        op.terms[0].left = Some(Arc::new(d));
        op.label = "diag".into();
        op
    }

    pub fn from_csr(space: &Space, m: Csr, label: &str) -> Result<Self> {
        if m.nrows != space.len() || m.ncols != space.len() {
            return Err(Error::InvalidInput(alloc::format!("matrix is {}x{} for {} states", m.nrows, m.ncols, space.len())));
        }
        if m.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        Ok(Self::single(space, Kernel::Csr(Arc::new(m)), label))
    }

    pub fn from_dense(space: &Space, m: Dense, label: &str) -> Result<Self> {
        if m.nrows != space.len() || m.ncols != space.len() {
            return Err(Error::InvalidInput("dense matrix shape mismatch".into()));
        }
        if m.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        Ok(Self::single(space, Kernel::Dense(Arc::new(m)), label))
    }

    pub fn from_rows(space: &Space, rows: &[&[f64]], label: &str) -> Result<Self> {
        Self::from_dense(space, Dense::from_rows(rows), label)
    }

    pub fn fiber(space: &Space, f: Fiber, label: &str) -> Self {
        Self::single(space, Kernel::Fiber(Arc::new(f)), label)
    }

    /// Permutation operator (P f)_i = f_{σ(i)}.
    pub fn permutation(space: &Space, sigma: &[usize], label: &str) -> Self {
        let t = sigma.iter().enumerate().map(|(i, &j)| (i, j, 1.0)).collect();
        Self::single(space, Kernel::Csr(Arc::new(Csr::from_triplets(space.len(), space.len(), t))), label)
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = label.into();
        self
    }

    fn check_space(&self, other: &Space) -> Result<()> {
        if StateSpace::same(&self.space, other) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    fn run(&self, x: &[f64], transposed: bool, abs: bool) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        let mut tin = vec![0.0; n];
        let mut tout = vec![0.0; n];
        for t in &self.terms {
            let (pre, post) = if transposed { (&t.left, &t.right) } else { (&t.right, &t.left) };
            let input: &[f64] = match pre {
                Some(d) => {
                    for i in 0..n {
                        let di = if abs { libm::fabs(d[i]) } else { d[i] };
                        tin[i] = di * x[i];
                    }
                    &tin
                }
                None => x,
            };
            let tr = transposed ^ t.transposed;
            match &t.kernel {
                Kernel::Identity => tout.copy_from_slice(input),
                Kernel::Csr(m) => {
                    if abs {
                        let a = Csr { values: m.values.iter().map(|v| libm::fabs(*v)).collect(), ..(**m).clone() };
                        if tr {
                            a.apply_t(input, &mut tout)
                        } else {
                            a.apply(input, &mut tout)
                        }
                    } else if tr {
                        m.apply_t(input, &mut tout)
                    } else {
                        m.apply(input, &mut tout)
                    }
                }
                Kernel::Dense(m) => {
                    if abs {
                        let a = Dense { data: m.data.iter().map(|v| libm::fabs(*v)).collect(), ..(**m).clone() };
                        if tr {
                            a.apply_t(input, &mut tout)
                        } else {
                            a.apply(input, &mut tout)
                        }
                    } else if tr {
                        m.apply_t(input, &mut tout)
                    } else {
                        m.apply(input, &mut tout)
                    }
                }
                Kernel::Fiber(f) => f.apply(input, &mut tout, tr, abs),
                Kernel::Product(a, b) => {
                    let r = if tr { b.run(&a.run(input, true, abs), true, abs) } else { a.run(&b.run(input, false, abs), false, abs) };
                    tout.copy_from_slice(&r);
                }
            }
            let s = if abs { libm::fabs(t.scale) } else { t.scale };
            match post {
                Some(d) => {
                    for i in 0..n {
                        let di = if abs { libm::fabs(d[i]) } else { d[i] };
                        out[i] += s * di * tout[i];
                    }
                }
                None => {
                    for i in 0..n {
                        out[i] += s * tout[i];
                    }
                }
            }
        }
        out
    }

    /// y = L x on raw values.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.len(), "operand length");
        self.run(x, false, false)
    }

    /// y = Lᵀ x (plain matrix transpose, no weights).
    pub fn apply_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.len(), "operand length");
        self.run(x, true, false)
    }

    pub fn apply_field(&self, f: &ScalarField) -> Result<ScalarField> {
        self.check_space(f.space())?;
        ScalarField::new(self.space.clone(), self.apply(f.values()))
    }

    /// Upper bound on the ∞-norm (exact unless products are present).
    pub fn norm_inf(&self) -> f64 {
        max_abs(&self.run(&vec![1.0; self.len()], false, true))
    }

    /// Plain matrix transpose.
    pub fn transpose(&self) -> LinOp {
        let terms = self
            .terms
            .iter()
            .map(|t| Term { scale: t.scale, left: t.right.clone(), right: t.left.clone(), kernel: t.kernel.clone(), transposed: !t.transposed })
            .collect();
        LinOp { space: self.space.clone(), terms, label: alloc::format!("{}^T", self.label) }
    }

    pub fn scaled(&self, s: f64) -> LinOp {
        let mut op = self.clone();
        for t in &mut op.terms {
            t.scale *= s;
        }
        op
    }

    /// diag(d) · L
    pub fn left_scale(&self, d: &[f64]) -> LinOp {
        let mut op = self.clone();
        for t in &mut op.terms {
            t.left = mul_diag(&t.left, d);
        }
        op
    }

    /// L · diag(d)
    pub fn right_scale(&self, d: &[f64]) -> LinOp {
        let mut op = self.clone();
        for t in &mut op.terms {
            t.right = mul_diag(&t.right, d);
        }
        op
    }

    pub fn add(&self, other: &LinOp) -> Result<LinOp> {
        self.check_space(&other.space)?;
        let mut op = self.clone();
        op.terms.extend(other.terms.iter().cloned());
        op.label = alloc::format!("({} + {})", self.label, other.label);
        Ok(op)
    }

    pub fn sub(&self, other: &LinOp) -> Result<LinOp> {
        let mut op = self.add(&other.scaled(-1.0))?;
        op.label = alloc::format!("({} - {})", self.label, other.label);
        Ok(op)
    }

    /// self ∘ other
    pub fn compose(&self, other: &LinOp) -> Result<LinOp> {
        self.check_space(&other.space)?;
        let mut op = Self::single(&self.space, Kernel::Product(Arc::new(self.clone()), Arc::new(other.clone())), "");
        op.label = alloc::format!("{}.{}", self.label, other.label);
        Ok(op)
    }

    /// Assembled sparse matrix.
    pub fn to_csr(&self) -> Csr {
        let n = self.len();
        let mut acc = Csr::from_triplets(n, n, Vec::new());
        for t in &self.terms {
            let mut k = match &t.kernel {
                Kernel::Identity => Csr::identity(n),
                Kernel::Csr(m) => (**m).clone(),
                Kernel::Dense(m) => m.to_csr(),
                Kernel::Fiber(f) => Csr::from_triplets(n, n, f.triplets(false)),
                Kernel::Product(a, b) => a.to_csr().matmul(&b.to_csr()),
            };
            if t.transposed {
                k = k.transpose();
            }
            let k = k.scale(t.left.as_deref().map(|v| v.as_slice()), t.right.as_deref().map(|v| v.as_slice()), t.scale);
            acc = acc.add(&k);
        }
        acc
    }

    pub fn to_dense(&self) -> Dense {
        self.to_csr().to_dense()
    }

    /// Largest |L 1| entry relative to the operator scale.
    pub fn constant_defect(&self) -> f64 {
        max_abs(&self.apply(&vec![1.0; self.len()])) / self.norm_inf().max(f64::MIN_POSITIVE)
    }
}

/// Volume-preserving involution of the state space, as an index map.
#[derive(Clone, Debug, PartialEq)]
pub struct Involution {
    space: Space,
    sigma: Vec<usize>,
}

impl Involution {
    pub fn new(space: &Space, sigma: Vec<usize>) -> Result<Self> {
        if sigma.len() != space.len() {
            return Err(Error::InvalidInput("involution length mismatch".into()));
        }
        let w = space.weights();
        for (i, &j) in sigma.iter().enumerate() {
            if j >= sigma.len() || sigma[j] != i {
                return Err(Error::InvalidInput(alloc::format!("index map is not an involution at {i}")));
            }
            if libm::fabs(w[i] - w[j]) > 1e-12 * w[i] {
                return Err(Error::InvalidInput(alloc::format!("involution changes the weight at {i}")));
            }
        }
        Ok(Involution { space: space.clone(), sigma })
    }

    pub fn identity(space: &Space) -> Self {
        Involution { space: space.clone(), sigma: (0..space.len()).collect() }
    }

    pub fn map(&self) -> &[usize] {
        &self.sigma
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    /// f ∘ F; for a volume-preserving involution this is also the push-forward of a density.
    pub fn pull(&self, f: &[f64]) -> Vec<f64> {
        self.sigma.iter().map(|&j| f[j]).collect()
    }

    pub fn as_op(&self) -> LinOp {
        LinOp::permutation(&self.space, &self.sigma, "F")
    }

    /// max |μ∘F − μ| / max μ
    pub fn invariance_defect(&self, mu: &Density) -> f64 {
        let m = mu.values();
        let d = self.sigma.iter().enumerate().map(|(i, &j)| libm::fabs(m[i] - m[j])).fold(0.0, f64::max);
        d / max_abs(m)
    }
}

fn require_positive(mu: &Density) -> Result<()> {
    for (i, v) in mu.values().iter().enumerate() {
        if !(*v > 0.0) {
            return Err(Error::Positivity { what: "reference density", index: i, value: *v });
        }
    }
    Ok(())
}

/// L′ = D_w⁻¹ Lᵀ D_w
pub fn adjoint_l2(l: &LinOp) -> LinOp {
    let w = l.space.weights();
    let inv: Vec<f64> = w.iter().map(|x| 1.0 / x).collect();
    l.transpose().left_scale(&inv).right_scale(w).with_label(&alloc::format!("{}'", l.label))
}

/// L* = D_μ⁻¹ D_w⁻¹ Lᵀ D_w D_μ
pub fn adjoint_l2mu(l: &LinOp, mu: &Density) -> Result<LinOp> {
    l.check_space(mu.space())?;
    require_positive(mu)?;
    let d: Vec<f64> = mu.values().iter().zip(l.space.weights()).map(|(m, w)| m * w).collect();
    let inv: Vec<f64> = d.iter().map(|x| 1.0 / x).collect();
    Ok(l.transpose().left_scale(&inv).right_scale(&d).with_label(&alloc::format!("{}*", l.label)))
}

/// (L + L*)/2 and (L − L*)/2.
pub fn split_sym_antisym(l: &LinOp, mu: &Density) -> Result<(LinOp, LinOp)> {
    let ls = adjoint_l2mu(l, mu)?;
    let sym = l.add(&ls)?.scaled(0.5).with_label(&alloc::format!("{}_s", l.label));
    let anti = l.sub(&ls)?.scaled(0.5).with_label(&alloc::format!("{}_a", l.label));
    Ok((sym, anti))
}

const DENSE_STATIONARY_MAX: usize = 2000;

/// Probability density μ with L′μ = 0.
///
/// Up to 2000 states the kernel of Lᵀ comes from a completely pivoted LU,
/// which also yields the kernel dimension. Larger operators use shifted
/// inverse iteration with a banded LU, started from two unrelated vectors;
/// disagreement between the two limits signals a reducible generator.
pub fn stationary_density(l: &LinOp) -> Result<Density> {
    let n = l.len();
    let space = l.space.clone();
    let norm = l.norm_inf();
    let masses = if n <= DENSE_STATIONARY_MAX {
        let lt = l.to_dense().transpose();
        let ns = lt.null_space(1e-11);
        match ns.len() {
            0 => return Err(Error::Infeasible),
            1 => ns.into_iter().next().unwrap(),
            k => return Err(Error::NonErgodic { kernel_dim: k }),
        }
    } else {
        let m = l.to_csr().transpose();
        let shift = 1e-9 * norm.max(1.0);
        let shifted = m.add(&Csr::identity(n).scale(None, None, -shift));
        let lu = BandedLu::factor(&shifted)?;
        let run = |mut x: Vec<f64>| {
            for _ in 0..4 {
                x = lu.solve(&x);
                let s: f64 = x.iter().sum();
                x.iter_mut().for_each(|v| *v /= s);
            }
            x
        };
        let a = run(vec![1.0; n]);
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let b = run((0..n).map(|_| 0.5 + (rng.next_u32() as f64) / (u32::MAX as f64)).collect());
        let diff = a.iter().zip(&b).map(|(x, y)| libm::fabs(x - y)).fold(0.0, f64::max);
        if diff > 1e-6 * max_abs(&a) {
            return Err(Error::NonErgodic { kernel_dim: 2 });
        }
        a
    };
    // Fix the sign, then refuse genuinely mixed-sign kernels.
    let s: f64 = masses.iter().sum();
    let mut masses: Vec<f64> = masses.iter().map(|v| v / s).collect();
    let top = max_abs(&masses);
    if masses.iter().any(|v| *v < -1e-9 * top) {
        return Err(Error::Infeasible);
    }
    masses.iter_mut().for_each(|v| *v = v.max(0.0));
    let mu = Density::from_masses(&space, &masses)?;
    let res = max_abs(&adjoint_l2(l).apply(mu.values()));
    if res > 1e-10 * norm * max_abs(mu.values()).max(1.0) {
        return Err(Error::NotConverged { iterations: 0, best: res });
    }
    Ok(mu)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CheckReport {
    pub check: String,
    pub pass: bool,
    pub defect: f64,
    pub tol: f64,
    /// Set when a precondition failed but the check was still computed.
    pub warning: Option<String>,
}

impl CheckReport {
    pub fn new(check: &str, defect: f64, tol: f64) -> Self {
        CheckReport { check: check.into(), pass: defect <= tol, defect, tol, warning: None }
    }
}

fn entry_defect(a: &Csr, b: &Csr, scale: f64) -> f64 {
    let d = a.add(&b.scale(None, None, -1.0));
    max_abs(&d.values) / scale.max(f64::MIN_POSITIVE)
}

/// Largest entry of L* − L relative to the largest entry of L.
pub fn check_detailed_balance(l: &LinOp, mu: &Density, tol: f64) -> Result<CheckReport> {
    let ls = adjoint_l2mu(l, mu)?.to_csr();
    let lc = l.to_csr();
    let d = entry_defect(&ls, &lc, max_abs(&lc.values));
    Ok(CheckReport::new("detailed-balance", d, tol))
}

/// Number of states up to which generalized reversibility is compared entrywise.
pub const BASIS_CHECK_MAX: usize = 512;

/// Random test fields: smooth low-mode trigonometric sums on grids, i.i.d. otherwise.
pub fn probe_fields(space: &Space, count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand_distr::{Distribution, StandardNormal, Uniform};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.len();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        if space.kind() == SpaceKind::Grid {
            let axes = space.axes();
            let modes: Vec<(Vec<f64>, f64, f64)> = (0..4)
                .map(|_| {
                    let k: Vec<f64> = axes
                        .iter()
                        .map(|a| {
                            let m = Uniform::new(0.0, 3.0).unwrap().sample(&mut rng);
                            m * 2.0 * core::f64::consts::PI / (a.max - a.min)
                        })
                        .collect();
                    let amp: f64 = StandardNormal.sample(&mut rng);
                    let ph = Uniform::new(0.0, 6.3).unwrap().sample(&mut rng);
                    (k, amp, ph)
                })
                .collect();
            out.push(
                (0..n)
                    .map(|i| {
                        let p = space.point(i);
                        modes.iter().map(|(k, a, ph)| a * libm::cos(k.iter().zip(p).map(|(ki, xi)| ki * xi).sum::<f64>() + ph)).sum()
                    })
                    .collect(),
            );
        } else {
            out.push((0..n).map(|_| StandardNormal.sample(&mut rng)).collect());
        }
    }
    out
}

/// Defect of L* = F L F (generalized reversibility up to the involution F).
///
/// Up to [`BASIS_CHECK_MAX`] states this is the entrywise comparison (the
/// full standard basis); beyond, the largest relative L²_μ deviation over
/// 64 seeded probe fields.
pub fn check_generalized_reversibility(l: &LinOp, mu: &Density, f: &Involution, tol: f64) -> Result<CheckReport> {
    l.check_space(f.space())?;
    let ls = adjoint_l2mu(l, mu)?;
    let inv_def = f.invariance_defect(mu);
    let fo = f.as_op();
    let flf = fo.compose(&l.compose(&fo)?)?;
    let defect = if l.len() <= BASIS_CHECK_MAX {
        let lc = l.to_csr();
        entry_defect(&ls.to_csr(), &flf.to_csr(), max_abs(&lc.values))
    } else {
        let w = l.space.weights();
        let m = mu.values();
        let mut worst: f64 = 0.0;
        for p in probe_fields(&l.space, 64, 0x6e7) {
            let a = ls.apply(&p);
            let b = flf.apply(&p);
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let num = libm::sqrt(weighted_dot(&d, &d, Some(m), w));
            let den = libm::sqrt(weighted_dot(&a, &a, Some(m), w));
            worst = worst.max(num / den.max(f64::MIN_POSITIVE));
        }
        worst
    };
    let mut r = CheckReport::new("generalized-reversibility", defect, tol);
    if inv_def > tol.max(1e-12) {
        r.warning = Some(alloc::format!("reference density not invariant under F (defect {inv_def:e})"));
    }
    Ok(r)
}

/// Relative L²_μ distance ‖(P − Q) f‖_μ / ‖P f‖_μ maximised over probe fields.
pub fn action_defect(p: &LinOp, q: &LinOp, mu: &Density, probes: &[Vec<f64>]) -> f64 {
    let w = p.space.weights();
    let m = mu.values();
    let mut worst: f64 = 0.0;
    for f in probes {
        let a = p.apply(f);
        let b = q.apply(f);
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let num = libm::sqrt(weighted_dot(&d, &d, Some(m), w));
        let den = libm::sqrt(weighted_dot(&a, &a, Some(m), w));
        worst = worst.max(num / den.max(f64::MIN_POSITIVE));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::{build_grid, inner_product, Axis};

    fn two_state() -> (Space, LinOp) {
        let s = StateSpace::counting(2).unwrap();
        let q = LinOp::from_rows(&s, &[&[-1.0, 1.0], &[2.0, -2.0]], "Q").unwrap();
        (s, q)
    }

    fn cyclic() -> (Space, LinOp) {
        let s = StateSpace::counting(3).unwrap();
        let q = LinOp::from_rows(&s, &[&[-1.0, 1.0, 0.0], &[0.0, -1.0, 1.0], &[1.0, 0.0, -1.0]], "C").unwrap();
        (s, q)
    }

    fn close(a: &Dense, b: &Dense, tol: f64) -> bool {
        a.data.iter().zip(&b.data).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn adjoint_of_two_state_generator_is_transpose() {
        let (_, q) = two_state();
        let qt = adjoint_l2(&q).to_dense();
        assert!(close(&qt, &q.to_dense().transpose(), 1e-15));
        let back = adjoint_l2(&adjoint_l2(&q)).to_dense();
        assert!(close(&back, &q.to_dense(), 1e-14));
    }

    #[test]
    fn l2_adjoint_pairing_with_weights() {
        let s = StateSpace::finite(vec![0.5, 1.5, 2.0]).unwrap();
        let l = LinOp::from_rows(&s, &[&[1.0, 2.0, 0.0], &[0.5, -1.0, 3.0], &[0.0, 4.0, 1.0]], "L").unwrap();
        let la = adjoint_l2(&l);
        let f = ScalarField::new(s.clone(), vec![1.0, -2.0, 0.3]).unwrap();
        let g = ScalarField::new(s.clone(), vec![0.7, 0.1, -1.1]).unwrap();
        let lhs = inner_product(&l.apply_field(&f).unwrap(), &g, None).unwrap();
        let rhs = inner_product(&f, &la.apply_field(&g).unwrap(), None).unwrap();
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn reversible_chain_is_self_adjoint_in_l2mu() {
        let (s, q) = two_state();
        let mu = Density::from_masses(&s, &[2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let qs = adjoint_l2mu(&q, &mu).unwrap().to_dense();
        assert!(close(&qs, &q.to_dense(), 1e-14));
        let (sym, anti) = split_sym_antisym(&q, &mu).unwrap();
        assert!(anti.to_dense().max_abs() < 1e-14);
        assert!(close(&sym.to_dense(), &q.to_dense(), 1e-14));
    }

    #[test]
    fn cyclic_chain_adjoint_is_transpose() {
        let (s, q) = cyclic();
        let mu = Density::uniform(&s);
        let qs = adjoint_l2mu(&q, &mu).unwrap().to_dense();
        let qt = q.to_dense().transpose();
        assert!(close(&qs, &qt, 1e-15));
        assert!(!close(&qs, &q.to_dense(), 0.5));
        let (sym, anti) = split_sym_antisym(&q, &mu).unwrap();
        let qd = q.to_dense();
        for r in 0..3 {
            for c in 0..3 {
                assert!((sym.to_dense()[(r, c)] - 0.5 * (qd[(r, c)] + qt[(r, c)])).abs() < 1e-15);
                assert!((anti.to_dense()[(r, c)] - 0.5 * (qd[(r, c)] - qt[(r, c)])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn uniform_mu_adjoint_reduces_to_flat() {
        let s = StateSpace::finite(vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        let l = LinOp::from_rows(&s, &[&[-1.0, 1.0, 0.0, 0.0], &[0.2, -1.0, 0.8, 0.0], &[0.0, 0.0, -2.0, 2.0], &[3.0, 0.0, 0.0, -3.0]], "L").unwrap();
        let mu = Density::uniform(&s);
        assert!(close(&adjoint_l2mu(&l, &mu).unwrap().to_dense(), &adjoint_l2(&l).to_dense(), 1e-15));
    }

    #[test]
    fn stationary_examples() {
        let (_, q) = two_state();
        let mu = stationary_density(&q).unwrap();
        assert!((mu.masses()[0] - 2.0 / 3.0).abs() < 1e-14);
        let (_, c) = cyclic();
        let mu = stationary_density(&c).unwrap();
        assert!(mu.masses().iter().all(|m| (m - 1.0 / 3.0).abs() < 1e-14));
        let s = StateSpace::counting(4).unwrap();
        let b = LinOp::from_rows(&s, &[&[-1.0, 1.0, 0.0, 0.0], &[1.0, -1.0, 0.0, 0.0], &[0.0, 0.0, -2.0, 2.0], &[0.0, 0.0, 1.0, -1.0]], "B").unwrap();
        assert!(matches!(stationary_density(&b), Err(Error::NonErgodic { kernel_dim: 2 })));
    }

    #[test]
    fn stationary_banded_path_birth_death() {
        // Large enough to take the banded inverse-iteration path.
        let n = 2100;
        let (up, down) = (1.001, 1.0);
        let s = StateSpace::counting(n).unwrap();
        let mut t = Vec::new();
        for i in 0..n {
            let mut d = 0.0;
            if i + 1 < n {
                t.push((i, i + 1, up));
                d += up;
            }
            if i > 0 {
                t.push((i, i - 1, down));
                d += down;
            }
            t.push((i, i, -d));
        }
        let l = LinOp::from_csr(&s, Csr::from_triplets(n, n, t), "walk").unwrap();
        let mu = stationary_density(&l).unwrap();
        let m = mu.masses();
        for i in [0, 700, n - 2] {
            assert!((m[i + 1] / m[i] - up / down).abs() < 1e-8);
        }
    }

    #[test]
    fn detailed_balance_examples() {
        let (s, q) = two_state();
        let mu = Density::from_masses(&s, &[2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let r = check_detailed_balance(&q, &mu, 1e-12).unwrap();
        assert!(r.pass && r.defect <= 1e-14);
        let (s, c) = cyclic();
        let r = check_detailed_balance(&c, &Density::uniform(&s), 1e-12).unwrap();
        assert!(!r.pass);
        assert!((r.defect - 1.0).abs() < 1e-14);
        let sym = LinOp::from_rows(&s, &[&[-2.0, 1.0, 1.0], &[1.0, -2.0, 1.0], &[1.0, 1.0, -2.0]], "S").unwrap();
        assert!(check_detailed_balance(&sym, &Density::uniform(&s), 1e-12).unwrap().pass);
    }

    #[test]
    fn generalized_reversibility_with_identity() {
        let (s, q) = two_state();
        let mu = Density::from_masses(&s, &[2.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!(check_generalized_reversibility(&q, &mu, &Involution::identity(&s), 1e-12).unwrap().pass);
        let (s, c) = cyclic();
        let r = check_generalized_reversibility(&c, &Density::uniform(&s), &Involution::identity(&s), 1e-12).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn cyclic_chain_is_reversible_up_to_a_reflection() {
        // The map 0↔2 reverses the cycle direction.
        let (s, c) = cyclic();
        let f = Involution::new(&s, vec![2, 1, 0]).unwrap();
        let r = check_generalized_reversibility(&c, &Density::uniform(&s), &f, 1e-12).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn involution_validation() {
        let s = StateSpace::counting(3).unwrap();
        assert!(Involution::new(&s, vec![1, 2, 0]).is_err());
        let w = StateSpace::finite(vec![1.0, 2.0]).unwrap();
        assert!(Involution::new(&w, vec![1, 0]).is_err());
    }

    #[test]
    fn fiber_transpose_and_assembly_agree() {
        let g = build_grid(&[Axis::truncated(0.0, 1.0, 3), Axis::truncated(-1.0, 1.0, 4)]).unwrap();
        let fiber_of: Vec<usize> = (0..12).map(|i| i / 4).collect();
        let p: Vec<f64> = (0..12).map(|i| 0.1 + (i % 4) as f64 * 0.2).collect();
        let op = LinOp::fiber(&g, Fiber::new(fiber_of, p), "Q").left_scale(&[2.0; 12]);
        let x: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let y1 = op.apply_t(&x);
        let mut y2 = vec![0.0; 12];
        op.to_csr().apply_t(&x, &mut y2);
        for i in 0..12 {
            assert!((y1[i] - y2[i]).abs() < 1e-14);
        }
        let prod = op.compose(&op).unwrap();
        let y3 = prod.apply(&x);
        let y4 = op.apply(&op.apply(&x));
        let mut y5 = vec![0.0; 12];
        prod.to_csr().apply(&x, &mut y5);
        for i in 0..12 {
            assert!((y3[i] - y4[i]).abs() < 1e-14 && (y3[i] - y5[i]).abs() < 1e-13);
        }
    }
}
