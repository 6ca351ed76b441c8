//! Event-driven simulation of the refresh/bounce samplers in continuous space,
//! with occupation-measure and time-reversal diagnostics.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::models::{Potential, PotentialSpec};
use crate::num::KahanSum;
use crate::statespace::{Boundary, Density, Space, SpaceKind};
use crate::{Error, Result};

type GradField = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

const REFRESH_STREAM: u64 = 1;
const THINNING_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

/// Points per flow step at which the bounce rate is sampled to set the thinning bound.
const BOUND_SAMPLES: usize = 4;
/// Inflation of the sampled maximum rate.
const BOUND_INFLATION: f64 = 1.5;

/// A refresh/bounce sampler: Hamiltonian flow under the flow potential, bounces
/// across ∇Ũ at rate (v·∇Ũ)₊, and Gaussian velocity refresh at rate λ_r.
#[derive(Clone)]
pub struct PdmpSpec {
    pub d: usize,
    pub flow: Potential,
    pub bounce: Option<Arc<GradField>>,
    pub refresh_rate: f64,
    pub seed: u64,
    /// Leapfrog step of the deterministic flow.
    pub h_flow: f64,
    pub skeleton_dt: f64,
}

impl core::fmt::Debug for PdmpSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("PdmpSpec")
            .field("d", &self.d)
            .field("flow", &self.flow)
            .field("bounce", &self.bounce.is_some())
            .field("refresh_rate", &self.refresh_rate)
            .field("seed", &self.seed)
            .field("h_flow", &self.h_flow)
            .field("skeleton_dt", &self.skeleton_dt)
            .finish()
    }
}

impl PdmpSpec {
    /// Andersen thermostat when the potential has no auxiliary part, the bouncy sampler otherwise.
    pub fn from_potential(pot: &PotentialSpec, d: usize, refresh_rate: f64, seed: u64) -> Self {
        let bounce: Option<Arc<GradField>> = pot.v_tilde.as_ref().map(|_| {
            let p = pot.clone();
            Arc::new(move |x: &[f64]| p.grad_u_tilde(x)) as Arc<GradField>
        });
        PdmpSpec { d, flow: pot.flow_potential().clone(), bounce, refresh_rate, seed, h_flow: 0.05, skeleton_dt: 0.1 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.refresh_rate >= 0.0 && self.refresh_rate.is_finite()) {
            return Err(Error::InvalidInput(alloc::format!("refresh rate must be nonnegative, got {}", self.refresh_rate)));
        }
        if !(self.h_flow > 0.0 && self.skeleton_dt > 0.0) {
            return Err(Error::InvalidInput("flow step and skeleton spacing must be positive".into()));
        }
        if self.d == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        Ok(())
    }

    /// Bounce rate (v·∇Ũ(x))₊.
    pub fn bounce_rate(&self, z: &[f64]) -> f64 {
        match &self.bounce {
            Some(g) => {
                let gu = g(&z[..self.d]);
                gu.iter().zip(&z[self.d..]).map(|(a, b)| a * b).sum::<f64>().max(0.0)
            }
            None => 0.0,
        }
    }

    /// Velocity reflection across ∇Ũ; the identity where ∇Ũ vanishes.
    pub fn reflect(&self, z: &mut [f64]) {
        if let Some(g) = &self.bounce {
            let gu = g(&z[..self.d]);
            let nn: f64 = gu.iter().map(|a| a * a).sum();
            if nn > 0.0 {
                if self.d == 1 {
                    z[1] = -z[1];
                } else {
                    let c = 2.0 * gu.iter().zip(&z[self.d..]).map(|(a, b)| a * b).sum::<f64>() / nn;
                    for k in 0..self.d {
                        z[self.d + k] -= c * gu[k];
                    }
                }
            }
        }
    }

    /// Velocity-Verlet step of length s.
    pub fn flow_step(&self, z: &[f64], s: f64) -> Vec<f64> {
        let d = self.d;
        let mut out = z.to_vec();
        let g = self.flow.grad(&z[..d]);
        for k in 0..d {
            out[d + k] -= 0.5 * s * g[k];
            out[k] += s * out[d + k];
        }
        let g = self.flow.grad(&out[..d]);
        for k in 0..d {
            out[d + k] -= 0.5 * s * g[k];
        }
        out
    }

    /// Flow energy V_flow(x) + |v|²/2.
    pub fn energy(&self, z: &[f64]) -> f64 {
        self.flow.value(&z[..self.d]) + 0.5 * z[self.d..].iter().map(|v| v * v).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum EventKind {
    Refresh,
    Bounce,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
}

/// Events plus the state sampled every `skeleton_dt`, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub events: Vec<Event>,
    pub skeleton: Vec<f64>,
    pub skeleton_dt: f64,
    pub seed: u64,
    pub total_time: f64,
    /// Thinning proposals (accepted or not) and bound restarts.
    pub proposals: usize,
    pub bound_restarts: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.skeleton.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.skeleton.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.skeleton[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.skeleton.chunks(self.dim)
    }

    /// Builds a trajectory from sampled states alone.
    pub fn from_states(dim: usize, states: Vec<f64>, skeleton_dt: f64) -> Result<Self> {
        if dim == 0 || !states.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput("state buffer length is not a multiple of the dimension".into()));
        }
        let total_time = (states.len() / dim) as f64 * skeleton_dt;
        Ok(Trajectory { dim, events: Vec::new(), skeleton: states, skeleton_dt, seed: 0, total_time, proposals: 0, bound_restarts: 0 })
    }
}

fn stream(seed: u64, channel: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(channel);
    r
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    // 53 random bits in (0, 1].
    ((rng.next_u64() >> 11) as f64 + 1.0) / (1u64 << 53) as f64
}

fn exp_draw(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    if rate <= 0.0 {
        f64::INFINITY
    } else {
        -libm::log(uniform(rng)) / rate
    }
}

/// Thinning bound over `[0, len]`: the largest sampled rate inflated by 1.5.
fn sampled_bound(rate: &mut dyn FnMut(f64) -> f64, len: f64) -> f64 {
    (0..BOUND_SAMPLES).map(|k| rate(len * k as f64 / (BOUND_SAMPLES - 1) as f64)).fold(0.0, f64::max) * BOUND_INFLATION
}

/// Outcome of thinning one segment.
enum Thin {
    /// Accepted event at offset s.
    Event(f64),
    None,
}

/// First accepted event of a time-dependent rate on `[0, len]` by thinning,
/// restarting with a doubled bound whenever a proposal exceeds it.
fn thin_segment(rate: &mut dyn FnMut(f64) -> f64, len: f64, rng: &mut ChaCha8Rng, proposals: &mut usize, restarts: &mut usize) -> Thin {
    let mut bound = sampled_bound(rate, len);
    'restart: loop {
        if bound <= 0.0 {
            return Thin::None;
        }
        let mut s = 0.0;
        loop {
            s += exp_draw(rng, bound);
            if s >= len {
                return Thin::None;
            }
            *proposals += 1;
            let r = rate(s);
            if r > bound {
                *restarts += 1;
                bound *= 2.0;
                continue 'restart;
            }
            if uniform(rng) * bound <= r {
                return Thin::Event(s);
            }
        }
    }
}

/// Event times of an inhomogeneous Poisson process on `[0, t_end]` by the
/// segment-wise thinning used in [`simulate`]. Returns (times, restarts).
pub fn thinning_times(rate: &mut dyn FnMut(f64) -> f64, t_end: f64, segment: f64, seed: u64) -> (Vec<f64>, usize) {
    let mut rng = stream(seed, THINNING_STREAM);
    let (mut proposals, mut restarts) = (0, 0);
    let mut out = Vec::new();
    let mut t = 0.0;
    while t < t_end {
        let len = segment.min(t_end - t);
        let mut shifted = |s: f64| rate(t + s);
        match thin_segment(&mut shifted, len, &mut rng, &mut proposals, &mut restarts) {
            Thin::Event(s) => {
                out.push(t + s);
                t += s;
            }
            Thin::None => t += len,
        }
    }
    (out, restarts)
}

/// Simulates the sampler from `z0 = (x, v)` up to time `t_end`.
///
/// The flow advances in leapfrog steps of `h_flow`. Within a step the
/// bounce clock is thinned against a sampled bound, and states at proposal,
/// event and skeleton times come from a partial leapfrog step from the step
/// start, so event times are exact for the discretized flow.
pub fn simulate(spec: &PdmpSpec, z0: &[f64], t_end: f64) -> Result<Trajectory> {
    spec.validate()?;
    if z0.len() != 2 * spec.d {
        return Err(Error::InvalidInput(alloc::format!("initial state has {} entries, expected {}", z0.len(), 2 * spec.d)));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidInput(alloc::format!("final time must be positive, got {t_end}")));
    }
    let d = spec.d;
    let mut refresh_rng = stream(spec.seed, REFRESH_STREAM);
    let mut thin_rng = stream(spec.seed, THINNING_STREAM);
    let mut traj = Trajectory {
        dim: 2 * d,
        events: Vec::new(),
        skeleton: Vec::new(),
        skeleton_dt: spec.skeleton_dt,
        seed: spec.seed,
        total_time: t_end,
        proposals: 0,
        bound_restarts: 0,
    };
    let mut z = z0.to_vec();
    let mut t = 0.0;
    let mut next_refresh = exp_draw(&mut refresh_rng, spec.refresh_rate);
    let mut next_skel = 0usize;
    let skel_time = |k: usize| k as f64 * spec.skeleton_dt;
    while t < t_end {
        let len = spec.h_flow.min(t_end - t).min(next_refresh - t);
        let start = z.clone();
        let mut rate = |s: f64| spec.bounce_rate(&spec.flow_step(&start, s));
        let thin = if spec.bounce.is_some() {
            thin_segment(&mut rate, len, &mut thin_rng, &mut traj.proposals, &mut traj.bound_restarts)
        } else {
            Thin::None
        };
        let advance = match thin {
            Thin::Event(s) => s,
            Thin::None => len,
        };
        while next_skel as f64 * spec.skeleton_dt < t_end && skel_time(next_skel) < t + advance {
            let zs = spec.flow_step(&start, skel_time(next_skel) - t);
            traj.skeleton.extend_from_slice(&zs);
            next_skel += 1;
        }
        z = spec.flow_step(&start, advance);
        t += advance;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(alloc::format!("state became non-finite at t = {t}")));
        }
        match thin {
            Thin::Event(_) => {
                let before = z.clone();
                spec.reflect(&mut z);
                traj.events.push(Event { t, kind: EventKind::Bounce, before, after: z.clone() });
            }
            Thin::None if t >= next_refresh && t < t_end => {
                let before = z.clone();
                for k in 0..d {
                    z[d + k] = StandardNormal.sample(&mut refresh_rng);
                }
                traj.events.push(Event { t, kind: EventKind::Refresh, before, after: z.clone() });
                next_refresh = t + exp_draw(&mut refresh_rng, spec.refresh_rate);
            }
            Thin::None => {}
        }
    }
    Ok(traj)
}

/// Kinetic Langevin dynamics dx = v dt, dv = −∇V dt − γv dt + √(2γ) dW by the
/// BAOAB splitting; a reference process that is reversible up to the velocity flip.
#[allow(clippy::too_many_arguments)]
pub fn kinetic_langevin(v: &Potential, d: usize, gamma: f64, z0: &[f64], t_end: f64, dt: f64, skeleton_dt: f64, seed: u64) -> Result<Trajectory> {
    if z0.len() != 2 * d || !(gamma > 0.0 && dt > 0.0 && skeleton_dt >= dt && t_end > 0.0) {
        return Err(Error::InvalidInput("bad Langevin parameters".into()));
    }
    let mut rng = stream(seed, NOISE_STREAM);
    let every = libm::round(skeleton_dt / dt).max(1.0) as usize;
    let steps = libm::ceil(t_end / dt) as usize;
    let c1 = libm::exp(-gamma * dt);
    let c2 = libm::sqrt(1.0 - c1 * c1);
    let mut z = z0.to_vec();
    let mut skel = Vec::with_capacity(2 * d * (steps / every + 1));
    for k in 0..steps {
        if k % every == 0 {
            skel.extend_from_slice(&z);
        }
        let g = v.grad(&z[..d]);
        for i in 0..d {
            z[d + i] -= 0.5 * dt * g[i];
            z[i] += 0.5 * dt * z[d + i];
        }
        for i in 0..d {
            let xi: f64 = StandardNormal.sample(&mut rng);
            z[d + i] = c1 * z[d + i] + c2 * xi;
        }
        for i in 0..d {
            z[i] += 0.5 * dt * z[d + i];
        }
        let g = v.grad(&z[..d]);
        for i in 0..d {
            z[d + i] -= 0.5 * dt * g[i];
        }
    }
    let mut tr = Trajectory::from_states(2 * d, skel, every as f64 * dt)?;
    tr.seed = seed;
    tr.total_time = steps as f64 * dt;
    Ok(tr)
}

/// Fraction of skeleton states in each grid cell (nearest node) and outside the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Occupation {
    pub masses: Vec<f64>,
    pub outside: f64,
}

fn cell_index(space: &Space, z: &[f64]) -> Option<usize> {
    let axes = space.axes();
    let mut idx = Vec::with_capacity(axes.len());
    for (a, x) in axes.iter().zip(z) {
        let h = a.spacing();
        let k = match a.boundary {
            Boundary::Truncated => {
                if *x < a.min || *x > a.max {
                    return None;
                }
                libm::round((x - a.min) / h) as usize
            }
            Boundary::Periodic => libm::round((x - a.min) / h).rem_euclid(a.n as f64) as usize,
        };
        idx.push(k.min(a.n - 1));
    }
    Some(space.linear_index(&idx))
}

/// Time-fraction of the skeleton in each cell of `grid`.
pub fn occupation(traj: &Trajectory, grid: &Space) -> Result<Occupation> {
    if grid.kind() != SpaceKind::Grid || grid.dim() != traj.dim {
        return Err(Error::InvalidInput("occupation needs a grid over the full state".into()));
    }
    if traj.is_empty() {
        return Err(Error::TooShort { have: 0, need: 1 });
    }
    let mut masses = vec![0.0; grid.len()];
    let mut outside = 0usize;
    for z in traj.states() {
        match cell_index(grid, z) {
            Some(i) => masses[i] += 1.0,
            None => outside += 1,
        }
    }
    let n = traj.len() as f64;
    masses.iter_mut().for_each(|m| *m /= n);
    Ok(Occupation { masses, outside: outside as f64 / n })
}

/// Normalised histogram density of the skeleton on `grid`.
pub fn empirical_density(traj: &Trajectory, grid: &Space) -> Result<Density> {
    let occ = occupation(traj, grid)?;
    let inside = 1.0 - occ.outside;
    if inside <= 0.0 {
        return Err(Error::InvalidInput("all samples fall outside the grid".into()));
    }
    let vals = occ.masses.iter().zip(grid.weights()).map(|(m, w)| m / (w * inside)).collect();
    Density::new(grid.clone(), vals)
}

/// Total variation ½Σ|p − q| between two mass vectors.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    let mut s = KahanSum::new();
    for (a, b) in p.iter().zip(q) {
        s.add(libm::fabs(a - b));
    }
    0.5 * s.value()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReversalConfig {
    pub burn_in: f64,
    /// Pairs used in the test, evenly spaced over the stationary part.
    pub pairs: usize,
    pub permutations: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for ReversalConfig {
    fn default() -> Self {
        ReversalConfig { burn_in: 0.1, pairs: 1000, permutations: 199, level: 0.01, seed: 0x5eed }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ReversalReport {
    pub distance: f64,
    pub threshold: f64,
    pub p_value: f64,
    pub pairs: usize,
    pub pass: bool,
}

/// Energy distance between the laws of (z_t, z_{t+Δ}) and (F z_{t+Δ}, F z_t).
///
/// The null distribution comes from randomly swapping the two members of
/// each pair, which leaves the law unchanged exactly when the process is
/// reversible up to F.
pub fn reversal_statistic(traj: &Trajectory, flip: &dyn Fn(&[f64]) -> Vec<f64>, lag: f64, cfg: &ReversalConfig) -> Result<ReversalReport> {
    let k = libm::round(lag / traj.skeleton_dt) as usize;
    let n = traj.len();
    let start = libm::ceil(cfg.burn_in * n as f64) as usize;
    let avail = n.saturating_sub(start + k);
    if avail < cfg.pairs || cfg.pairs < 1000 {
        return Err(Error::TooShort { have: avail.min(cfg.pairs), need: 1000 });
    }
    let m = cfg.pairs;
    let dim = 2 * traj.dim;
    let mut pts = Vec::with_capacity(2 * m * dim);
    let mut rev = Vec::with_capacity(m * dim);
    for p in 0..m {
        let i = start + p * avail / m;
        let a = traj.state(i);
        let b = traj.state(i + k);
        pts.extend_from_slice(a);
        pts.extend_from_slice(b);
        rev.extend(flip(b));
        rev.extend(flip(a));
    }
    pts.extend(rev);
    // Pairwise distances among the 2m points; index p is forward pair p, m + p its reversal.
    let total = 2 * m;
    let mut dist = vec![0.0f32; total * total];
    for i in 0..total {
        for j in i + 1..total {
            let s: f64 = (0..dim).map(|c| (pts[i * dim + c] - pts[j * dim + c]).powi(2)).sum();
            let v = libm::sqrt(s) as f32;
            dist[i * total + j] = v;
            dist[j * total + i] = v;
        }
    }
    let stat = |swap: &[bool]| -> f64 {
        let side = |p: usize, first: bool| if swap[p] ^ !first { m + p } else { p };
        let (mut xy, mut xx, mut yy) = (0.0f64, 0.0f64, 0.0f64);
        for p in 0..m {
            let (xp, yp) = (side(p, true), side(p, false));
            for q in 0..m {
                let (xq, yq) = (side(q, true), side(q, false));
                xy += dist[xp * total + yq] as f64;
                xx += dist[xp * total + xq] as f64;
                yy += dist[yp * total + yq] as f64;
            }
        }
        let mm = (m * m) as f64;
        2.0 * xy / mm - xx / mm - yy / mm
    };
    let observed = stat(&vec![false; m]);
    let mut rng = stream(cfg.seed, THINNING_STREAM);
    let mut null = Vec::with_capacity(cfg.permutations);
    let mut swap = vec![false; m];
    for _ in 0..cfg.permutations {
        for s in swap.iter_mut() {
            *s = rng.next_u32() & 1 == 1;
        }
        null.push(stat(&swap));
    }
    let ge = null.iter().filter(|v| **v >= observed).count();
    let p_value = (ge + 1) as f64 / (cfg.permutations + 1) as f64;
    null.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let q = libm::ceil((1.0 - cfg.level) * null.len() as f64) as usize;
    let threshold = null[q.min(null.len()) - 1];
    Ok(ReversalReport { distance: observed, threshold, p_value, pairs: m, pass: p_value > cfg.level })
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ErgodicAverage {
    pub mean: f64,
    /// Batch-means standard error.
    pub se: f64,
    pub batches: usize,
}

/// Time average of `f` over the skeleton with a 100-batch standard error.
pub fn ergodic_average(traj: &Trajectory, f: &dyn Fn(&[f64]) -> f64) -> Result<ErgodicAverage> {
    const BATCHES: usize = 100;
    let n = traj.len();
    if n < BATCHES {
        return Err(Error::TooShort { have: n, need: BATCHES });
    }
    let per = n / BATCHES;
    let mut means = Vec::with_capacity(BATCHES);
    for b in 0..BATCHES {
        let mut s = KahanSum::new();
        for k in b * per..(b + 1) * per {
            s.add(f(traj.state(k)));
        }
        means.push(s.value() / per as f64);
    }
    let mean = means.iter().sum::<f64>() / BATCHES as f64;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (BATCHES - 1) as f64;
    Ok(ErgodicAverage { mean, se: libm::sqrt(var / BATCHES as f64), batches: BATCHES })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::{build_grid, Axis};

    fn bouncy(seed: u64) -> PdmpSpec {
        PdmpSpec::from_potential(&PotentialSpec::tilted(Potential::quadratic(1.0), vec![1.0]), 1, 1.0, seed)
    }

    #[test]
    fn without_auxiliary_potential_there_are_no_bounces() {
        let spec = PdmpSpec::from_potential(&PotentialSpec::new(Potential::quadratic(1.0)), 2, 1.0, 3);
        let tr = simulate(&spec, &[0.5, 0.0, 1.0, -1.0], 200.0).unwrap();
        assert!(tr.events.iter().all(|e| e.kind == EventKind::Refresh));
        assert!(tr.events.len() > 120 && tr.events.len() < 280);
    }

    #[test]
    fn bounces_flip_velocity_and_preserve_speed() {
        let tr = simulate(&bouncy(1), &[0.0, 1.0], 500.0).unwrap();
        let mut n = 0;
        for e in tr.events.iter().filter(|e| e.kind == EventKind::Bounce) {
            assert_eq!(e.after[1], -e.before[1]);
            assert!(e.before[1] > 0.0);
            n += 1;
        }
        assert!(n > 50);
        for w in tr.events.windows(2) {
            assert!(w[1].t > w[0].t);
        }
        let spec = PdmpSpec::from_potential(&PotentialSpec::tilted(Potential::quadratic(1.0), vec![1.0, -0.4]), 2, 1.0, 5);
        let tr = simulate(&spec, &[0.0, 0.0, 1.0, 0.5], 200.0).unwrap();
        for e in tr.events.iter().filter(|e| e.kind == EventKind::Bounce) {
            let a: f64 = e.before[2..].iter().map(|v| v * v).sum();
            let b: f64 = e.after[2..].iter().map(|v| v * v).sum();
            assert!((a - b).abs() <= 1e-14 * a);
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let a = simulate(&bouncy(9), &[0.3, -0.2], 100.0).unwrap();
        let b = simulate(&bouncy(9), &[0.3, -0.2], 100.0).unwrap();
        assert_eq!(a, b);
        let c = simulate(&bouncy(10), &[0.3, -0.2], 100.0).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn constant_skeleton_gives_an_indicator() {
        let g = build_grid(&[Axis::truncated(-1.0, 1.0, 5), Axis::truncated(-1.0, 1.0, 5)]).unwrap();
        let tr = Trajectory::from_states(2, [0.1, 0.4].repeat(50), 0.1).unwrap();
        let rho = empirical_density(&tr, &g).unwrap();
        let hot = g.linear_index(&[2, 3]);
        for (i, v) in rho.values().iter().enumerate() {
            if i == hot {
                assert!((v * g.weights()[i] - 1.0).abs() < 1e-12);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
        let far = Trajectory::from_states(2, [5.0, 5.0].repeat(10), 0.1).unwrap();
        assert!(empirical_density(&far, &g).is_err());
    }

    #[test]
    fn ergodic_average_of_constant() {
        let tr = Trajectory::from_states(2, [0.1, 0.4].repeat(200), 0.1).unwrap();
        let e = ergodic_average(&tr, &|_| 1.0).unwrap();
        assert_eq!((e.mean, e.se), (1.0, 0.0));
        let short = Trajectory::from_states(2, [0.1, 0.4].repeat(20), 0.1).unwrap();
        assert!(matches!(ergodic_average(&short, &|_| 1.0), Err(Error::TooShort { .. })));
    }

    #[test]
    fn leapfrog_energy_error_is_second_order() {
        let spec = PdmpSpec::from_potential(&PotentialSpec::new(Potential::quartic(0.25, 0.5)), 1, 0.0, 1);
        let drift = |h: f64| {
            let mut z = vec![1.0, 0.5];
            let e0 = spec.energy(&z);
            let mut worst: f64 = 0.0;
            for _ in 0..(5.0 / h) as usize {
                z = spec.flow_step(&z, h);
                worst = worst.max((spec.energy(&z) - e0).abs());
            }
            worst
        };
        let hs = [0.1, 0.05, 0.025];
        let errs: Vec<f64> = hs.iter().map(|h| drift(*h)).collect();
        let order = crate::num::fitted_order(&hs, &errs);
        assert!((order - 2.0).abs() < 0.2, "{order}");
    }
}
