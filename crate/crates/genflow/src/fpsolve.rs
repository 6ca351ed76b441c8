//! Time integration of `∂_t ρ = L′ρ` with entropy and norm monitors.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::generic::relative_entropy;
use crate::linalg::{BandedLu, Csr};
use crate::models::ModelBundle;
use crate::num::{fitted_order, max_abs, KahanSum};
use crate::opalg::{adjoint_l2, split_sym_antisym, LinOp};
use crate::statespace::{weighted_dot, Density};
use crate::{Error, Result};

/// Default bound on the total mass removed by clipping over one run.
pub const CLIP_BUDGET: f64 = 1e-6;

/// Refresh rate above which [`Scheme::auto`] switches to the implicit scheme.
pub const STIFF_REFRESH: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Scheme {
    ExplicitRk4,
    ImplicitEuler,
}

impl Scheme {
    /// Explicit RK4 unless the model carries a stiff refresh channel.
    pub fn auto(bundle: &ModelBundle) -> Scheme {
        match bundle.jump.as_ref() {
            Some(j) if j.refresh_rate > STIFF_REFRESH => Scheme::ImplicitEuler,
            _ => Scheme::ExplicitRk4,
        }
    }
}

/// Largest explicit step, 0.9·2/‖L′‖∞.
pub fn stability_bound(l_dual: &LinOp) -> f64 {
    let n = l_dual.norm_inf();
    if n > 0.0 {
        1.8 / n
    } else {
        f64::INFINITY
    }
}

/// A density after one step and the negative mass clipped from it.
#[derive(Clone, Debug)]
pub struct Stepped {
    pub rho: Density,
    pub clipped: f64,
}

/// Reusable stepper; the implicit scheme factors `I − dt L′` once.
pub struct Stepper {
    l_dual: LinOp,
    dt: f64,
    scheme: Scheme,
    lu: Option<(BandedLu, Csr)>,
}

impl Stepper {
    pub fn new(l_dual: &LinOp, dt: f64, scheme: Scheme) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(alloc::format!("time step must be positive, got {dt}")));
        }
        let lu = match scheme {
            Scheme::ExplicitRk4 => {
                let bound = stability_bound(l_dual);
                if dt > bound {
                    return Err(Error::StepTooLarge { dt, bound });
                }
                None
            }
            Scheme::ImplicitEuler => {
                let n = l_dual.len();
                let m = Csr::identity(n).add(&l_dual.to_csr().scale(None, None, -dt));
                Some((BandedLu::factor(&m)?, m))
            }
        };
        Ok(Stepper { l_dual: l_dual.clone(), dt, scheme, lu })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    fn raw_step(&self, x: &[f64]) -> Result<Vec<f64>> {
        let dt = self.dt;
        match &self.lu {
            None => {
                let k1 = self.l_dual.apply(x);
                let y: Vec<f64> = x.iter().zip(&k1).map(|(a, k)| a + 0.5 * dt * k).collect();
                let k2 = self.l_dual.apply(&y);
                let y: Vec<f64> = x.iter().zip(&k2).map(|(a, k)| a + 0.5 * dt * k).collect();
                let k3 = self.l_dual.apply(&y);
                let y: Vec<f64> = x.iter().zip(&k3).map(|(a, k)| a + dt * k).collect();
                let k4 = self.l_dual.apply(&y);
                Ok((0..x.len()).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
            }
            Some((lu, m)) => {
                let mut y = lu.solve(x);
                // One round of refinement, then insist on a small residual.
                let mut r = vec![0.0; x.len()];
                m.apply(&y, &mut r);
                let res: Vec<f64> = x.iter().zip(&r).map(|(a, b)| a - b).collect();
                let corr = lu.solve(&res);
                y.iter_mut().zip(&corr).for_each(|(a, c)| *a += c);
                m.apply(&y, &mut r);
                let worst = x.iter().zip(&r).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max);
                if worst > 1e-10 * max_abs(x).max(f64::MIN_POSITIVE) {
                    return Err(Error::NotConverged { iterations: 2, best: worst });
                }
                Ok(y)
            }
        }
    }

    /// One step; negative values are clipped to zero and the rest renormalised.
    pub fn step(&self, rho: &Density) -> Result<Stepped> {
        if !crate::statespace::StateSpace::same(rho.space(), self.l_dual.space()) {
            return Err(Error::SpaceMismatch);
        }
        let mut y = self.raw_step(rho.values())?;
        let w = rho.space().weights();
        let mut clipped = KahanSum::new();
        for (v, wi) in y.iter_mut().zip(w) {
            if !v.is_finite() {
                return Err(Error::InvalidInput("non-finite density after step".into()));
            }
            if *v < 0.0 {
                clipped.add(-*v * wi);
                *v = 0.0;
            }
        }
        let d = Density::new(rho.space().clone(), y)?;
        let m = d.mass();
        let vals = d.values().iter().map(|v| v / m).collect();
        Ok(Stepped { rho: Density::new(rho.space().clone(), vals)?, clipped: clipped.value() })
    }
}

/// Single step of `∂_t ρ = L′ρ`.
pub fn step_fp(l_dual: &LinOp, rho: &Density, dt: f64, scheme: Scheme) -> Result<Stepped> {
    Stepper::new(l_dual, dt, scheme)?.step(rho)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Monitor {
    /// Relative entropy to μ.
    Entropy,
    /// ‖ρ/μ‖² in L²_μ.
    HNorm,
    /// ⟨−Bρ, dS_μ(ρ)⟩ for models with a transport part.
    Orthogonality,
    /// ⟨dS_μ(ρ), L_a′ρ⟩, the antisymmetric entropy pairing.
    Pairing,
    /// The bounce-channel terms of [`pdmp_entropy_terms`].
    PdmpTerms,
}

impl Monitor {
    pub const ALL: [Monitor; 5] = [Monitor::Entropy, Monitor::HNorm, Monitor::Orthogonality, Monitor::Pairing, Monitor::PdmpTerms];

    pub fn name(self) -> &'static str {
        match self {
            Monitor::Entropy => "S_mu",
            Monitor::HNorm => "h_norm2_mu",
            Monitor::Orthogonality => "orthogonality",
            Monitor::Pairing => "antisym_pairing",
            Monitor::PdmpTerms => "t1_plus_t2",
        }
    }

    pub fn parse(s: &str) -> Option<Monitor> {
        Monitor::ALL.iter().copied().find(|m| m.name() == s || alloc::format!("{m:?}").eq_ignore_ascii_case(s))
    }
}

/// Monitored quantities after one step. Unrequested or inapplicable monitors are `None`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MonitorRecord {
    pub t: f64,
    pub mass: f64,
    pub min_value: f64,
    pub clipped: f64,
    pub s_mu: Option<f64>,
    pub h_norm2_mu: Option<f64>,
    pub orthogonality: Option<f64>,
    pub pairing: Option<f64>,
    pub t1_plus_t2: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub snapshots: Vec<(f64, Density)>,
    pub monitors: Vec<MonitorRecord>,
    pub dt: f64,
    pub scheme: Scheme,
    pub total_clipped: f64,
    /// Why the run stopped early, if it did.
    pub aborted: Option<String>,
    pub last: Density,
}

#[derive(Clone, Debug)]
pub struct EvolveConfig {
    pub scheme: Option<Scheme>,
    /// Time step; defaults to the explicit bound (adjusted to divide T).
    pub dt: Option<f64>,
    pub monitors: Vec<Monitor>,
    /// Keep every k-th density; 0 keeps none besides the final one.
    pub snapshot_every: usize,
    pub clip_budget: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig { scheme: None, dt: None, monitors: Monitor::ALL.to_vec(), snapshot_every: 0, clip_budget: CLIP_BUDGET }
    }
}

struct MonitorContext<'a> {
    bundle: &'a ModelBundle,
    la_dual: Option<LinOp>,
    want: &'a [Monitor],
}

impl MonitorContext<'_> {
    fn record(&self, t: f64, rho: &Density, clipped: f64) -> Result<MonitorRecord> {
        let w = rho.space().weights();
        let mu = &self.bundle.mu;
        let has = |m: Monitor| self.want.contains(&m);
        let positive = rho.min_value() > 0.0;
        let log_ratio = || -> Vec<f64> { rho.values().iter().zip(mu.values()).map(|(r, m)| libm::log(r / m) + 1.0).collect() };
        let s_mu = if has(Monitor::Entropy) { Some(relative_entropy(rho, mu)?) } else { None };
        let h_norm2_mu =
            if has(Monitor::HNorm) { Some(rho.values().iter().zip(mu.values()).zip(w).map(|((r, m), wi)| r * r / m * wi).sum()) } else { None };
        let orthogonality = match (&self.bundle.transport, has(Monitor::Orthogonality) && positive) {
            (Some(b), true) => Some(-weighted_dot(&b.apply(rho.values()), &log_ratio(), None, w)),
            _ => None,
        };
        let pairing = match (&self.la_dual, has(Monitor::Pairing) && positive) {
            (Some(la), true) => Some(weighted_dot(&la.apply(rho.values()), &log_ratio(), None, w)),
            _ => None,
        };
        let t1_plus_t2 =
            if has(Monitor::PdmpTerms) && positive && self.bundle.jump.is_some() { Some(bounce_terms(self.bundle, rho)?.0) } else { None };
        Ok(MonitorRecord { t, mass: rho.mass(), min_value: rho.min_value(), clipped, s_mu, h_norm2_mu, orthogonality, pairing, t1_plus_t2 })
    }
}

/// Integrates the Fokker–Planck equation of `bundle` from `rho0` up to `t_end`.
///
/// Clipping beyond the budget stops the run; the partial trace is returned
/// with `aborted` set.
pub fn evolve(bundle: &ModelBundle, rho0: &Density, t_end: f64, cfg: &EvolveConfig) -> Result<EvolutionTrace> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidInput(alloc::format!("final time must be positive, got {t_end}")));
    }
    rho0.require_positive("initial density")?;
    if libm::fabs(rho0.mass() - 1.0) > 1e-8 {
        return Err(Error::Mass(rho0.mass()));
    }
    let scheme = cfg.scheme.unwrap_or_else(|| Scheme::auto(bundle));
    let (dt, steps) = match cfg.dt {
        Some(dt) => (dt, libm::ceil(t_end / dt - 1e-9) as usize),
        None => {
            let bound = stability_bound(&bundle.l_dual);
            let steps = libm::ceil(t_end / bound).max(1.0) as usize;
            (t_end / steps as f64, steps)
        }
    };
    let stepper = Stepper::new(&bundle.l_dual, dt, scheme)?;
    let la_dual = if cfg.monitors.contains(&Monitor::Pairing) {
        let (_, la) = split_sym_antisym(&bundle.l, &bundle.mu)?;
        Some(adjoint_l2(&la))
    } else {
        None
    };
    let ctx = MonitorContext { bundle, la_dual, want: &cfg.monitors };
    let mut trace = EvolutionTrace {
        times: vec![0.0],
        snapshots: Vec::new(),
        monitors: vec![ctx.record(0.0, rho0, 0.0)?],
        dt,
        scheme,
        total_clipped: 0.0,
        aborted: None,
        last: rho0.clone(),
    };
    if cfg.snapshot_every > 0 {
        trace.snapshots.push((0.0, rho0.clone()));
    }
    let mut rho = rho0.clone();
    for k in 1..=steps {
        let s = stepper.step(&rho)?;
        trace.total_clipped += s.clipped;
        rho = s.rho;
        let t = k as f64 * dt;
        trace.times.push(t);
        trace.monitors.push(ctx.record(t, &rho, s.clipped)?);
        if cfg.snapshot_every > 0 && k % cfg.snapshot_every == 0 {
            trace.snapshots.push((t, rho.clone()));
        }
        if trace.total_clipped > cfg.clip_budget {
            trace.aborted = Some(alloc::format!("{}", Error::ClipBudget { clipped: trace.total_clipped, budget: cfg.clip_budget }));
            break;
        }
    }
    trace.last = rho;
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DecayReport {
    pub monotone: bool,
    pub max_uptick: f64,
    pub first_violation_t: Option<f64>,
    pub tol: f64,
}

/// Monotonicity of the entropy monitor: increases up to `1e-10·|S(ρ₀)| + 1e-12` are tolerated.
pub fn entropy_decay_report(trace: &EvolutionTrace) -> Result<DecayReport> {
    let s: Vec<f64> =
        trace.monitors.iter().map(|m| m.s_mu.ok_or_else(|| Error::InvalidInput("trace has no entropy monitor".into()))).collect::<Result<_>>()?;
    Ok(monotone_report(&s, &trace.times))
}

pub(crate) fn monotone_report(s: &[f64], times: &[f64]) -> DecayReport {
    let tol = 1e-10 * libm::fabs(s.first().copied().unwrap_or(0.0)) + 1e-12;
    let mut max_uptick: f64 = 0.0;
    let mut first = None;
    for k in 1..s.len() {
        let up = s[k] - s[k - 1];
        max_uptick = max_uptick.max(up);
        if up > tol && first.is_none() {
            first = Some(times[k]);
        }
    }
    DecayReport { monotone: first.is_none(), max_uptick, first_violation_t: first, tol }
}

/// Addends of the entropy production of a piecewise deterministic model.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PdmpEntropyTerms {
    /// ∫a₊(ρ − ρ∘R).
    pub t1: f64,
    /// ∫a₊ ρ log(ρ∘R/ρ).
    pub t2: f64,
    pub t1_plus_t2: f64,
    /// ⟨dS_μ(ρ), L_Q′ρ⟩.
    pub lq_term: f64,
    /// ½∫|a| ρ log(ρ∘R/ρ) = ⟨dS_μ(ρ), L_JS ρ⟩.
    pub ljs_term: f64,
    /// ∫aρ + ½∫aρ log(ρ∘R/ρ), the closed form of the antisymmetric pairing.
    pub pairing_formula: f64,
    /// ⟨dS_μ(ρ), L_a′ρ⟩ from the assembled operator.
    pub pairing: f64,
    /// lq_term + ljs_term + pairing, the entropy production rate.
    pub total: f64,
    /// Scale used for the T1 + T2 ≤ 0 tolerance.
    pub scale: f64,
}

impl PdmpEntropyTerms {
    /// The inequality T1 + T2 ≤ 0 at tolerance 1e-10·scale.
    pub fn inequality_holds(&self) -> bool {
        self.t1_plus_t2 <= 1e-10 * self.scale
    }
}

/// (T1 + T2, T1, T2, scale).
fn bounce_terms(bundle: &ModelBundle, rho: &Density) -> Result<(f64, f64, f64, f64)> {
    let j = bundle.jump.as_ref().ok_or_else(|| Error::InvalidInput("model has no jump structure".into()))?;
    rho.require_positive("density")?;
    let w = rho.space().weights();
    let r = rho.values();
    let map = j.reflection.map();
    let (mut t1, mut t2, mut scale) = (KahanSum::new(), KahanSum::new(), KahanSum::new());
    for i in 0..r.len() {
        let a = j.bounce_rate[i];
        if a > 0.0 {
            let fr = r[map[i]];
            t1.add(w[i] * a * (r[i] - fr));
            t2.add(w[i] * a * r[i] * libm::log(fr / r[i]));
            scale.add(w[i] * a * (r[i] + fr));
        }
    }
    let (t1, t2) = (t1.value(), t2.value());
    Ok((t1 + t2, t1, t2, scale.value()))
}

/// Entropy-production addends of a bounce model at a positive density.
pub fn pdmp_entropy_terms(bundle: &ModelBundle, rho: &Density) -> Result<PdmpEntropyTerms> {
    let (t12, t1, t2, scale) = bounce_terms(bundle, rho)?;
    let j = bundle.jump.as_ref().expect("checked in bounce_terms");
    let w = rho.space().weights();
    let r = rho.values();
    let map = j.reflection.map();
    let ds: Vec<f64> = r.iter().zip(bundle.mu.values()).map(|(a, m)| libm::log(a / m) + 1.0).collect();
    let space = rho.space();
    let lq_term = if j.refresh_rate > 0.0 {
        let lq = LinOp::fiber(space, j.refresh.clone(), "Q").sub(&LinOp::identity(space))?.scaled(j.refresh_rate);
        weighted_dot(&adjoint_l2(&lq).apply(r), &ds, None, w)
    } else {
        0.0
    };
    let (mut ljs, mut af, mut afl) = (KahanSum::new(), KahanSum::new(), KahanSum::new());
    for i in 0..r.len() {
        let a = j.a_field[i];
        let lg = libm::log(r[map[i]] / r[i]);
        ljs.add(0.5 * w[i] * libm::fabs(a) * r[i] * lg);
        af.add(w[i] * a * r[i]);
        afl.add(0.5 * w[i] * a * r[i] * lg);
    }
    let (_, la) = split_sym_antisym(&bundle.l, &bundle.mu)?;
    let pairing = weighted_dot(&adjoint_l2(&la).apply(r), &ds, None, w);
    let ljs_term = ljs.value();
    Ok(PdmpEntropyTerms {
        t1,
        t2,
        t1_plus_t2: t12,
        lq_term,
        ljs_term,
        pairing_formula: af.value() + afl.value(),
        pairing,
        total: lq_term + ljs_term + pairing,
        scale,
    })
}

/// Observed order of the time-stepping error at `t_end`, from runs with dt, dt/2 and dt/4.
///
/// The error of each run is measured in flat L¹ against a run with dt/16.
pub fn dt_refinement_order(bundle: &ModelBundle, rho0: &Density, t_end: f64, dt: f64, scheme: Scheme) -> Result<(Vec<f64>, f64)> {
    let run = |dt: f64| -> Result<Density> {
        let cfg = EvolveConfig { scheme: Some(scheme), dt: Some(dt), monitors: Vec::new(), snapshot_every: 0, clip_budget: CLIP_BUDGET };
        Ok(evolve(bundle, rho0, t_end, &cfg)?.last)
    };
    let reference = run(dt / 16.0)?;
    let w = rho0.space().weights();
    let mut errs = Vec::new();
    let mut hs = Vec::new();
    for k in 0..3 {
        let h = dt / (1 << k) as f64;
        let r = run(h)?;
        errs.push(r.values().iter().zip(reference.values()).zip(w).map(|((a, b), wi)| libm::fabs(a - b) * wi).sum());
        hs.push(h);
    }
    let order = fitted_order(&hs, &errs);
    Ok((errs, order))
}
