use std::sync::Arc;

use genflow::models::{Potential, PotentialSpec};
use genflow::num::normal_cdf;
use genflow::pdmp_sim::{
    empirical_density, ergodic_average, kinetic_langevin, occupation, reversal_statistic, simulate, thinning_times, tv_distance, EventKind, PdmpSpec,
    ReversalConfig, Trajectory,
};
use genflow::statespace::{build_grid, Axis, Space};
use rand::{Rng, SeedableRng};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

fn chi2_pass(observed: &[f64], expected: &[f64], level: f64) -> bool {
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat) > level
}

/// Exact Gaussian mass of each nearest-node cell of a truncated grid.
fn gaussian_cell_masses(grid: &Space) -> Vec<f64> {
    let per_axis: Vec<Vec<f64>> = grid
        .axes()
        .iter()
        .map(|a| {
            let h = a.spacing();
            (0..a.n)
                .map(|k| {
                    let lo = (a.coord(k) - 0.5 * h).max(a.min);
                    let hi = (a.coord(k) + 0.5 * h).min(a.max);
                    normal_cdf(hi) - normal_cdf(lo)
                })
                .collect()
        })
        .collect();
    (0..grid.len()).map(|i| grid.multi_index(i).iter().enumerate().map(|(a, k)| per_axis[a][*k]).product()).collect()
}

fn bouncy(seed: u64) -> PdmpSpec {
    PdmpSpec::from_potential(&PotentialSpec::tilted(Potential::quadratic(1.0), vec![1.0]), 1, 1.0, seed)
}

#[test]
fn first_bounce_time_is_exponential_with_rate_v() {
    // No flow force and a constant bounce field: the first bounce from v > 0 is Exp(v).
    let v0 = 0.8;
    let mut times = Vec::new();
    for seed in 0..2000 {
        let spec = PdmpSpec {
            d: 1,
            flow: Potential::zero(),
            bounce: Some(Arc::new(|_: &[f64]| vec![1.0])),
            refresh_rate: 0.0,
            seed,
            h_flow: 0.05,
            skeleton_dt: 1.0,
        };
        let tr = simulate(&spec, &[0.0, v0], 40.0).unwrap();
        assert!(tr.events.len() <= 1);
        times.push(tr.events.first().map_or(f64::INFINITY, |e| e.t));
    }
    let bins = 10;
    let mut obs = vec![0.0; bins];
    for t in &times {
        let u = 1.0 - (-v0 * t).exp();
        obs[((u * bins as f64) as usize).min(bins - 1)] += 1.0;
    }
    let exp = vec![times.len() as f64 / bins as f64; bins];
    assert!(chi2_pass(&obs, &exp, 0.01), "{obs:?}");
}

#[test]
fn thinning_counts_are_poisson() {
    let rate = |t: f64| 1.0 + (2.0 * t).sin().powi(2) * 3.0;
    let t_end: f64 = 2.0;
    // ∫(1 + 3 sin²2t) dt = t_end + 1.5 t_end − 0.375 sin 4t_end.
    let lam = 2.5 * t_end - 0.375 * (4.0 * t_end).sin();
    let runs = 4000;
    let mut counts = Vec::with_capacity(runs);
    for seed in 0..runs as u64 {
        let (ts, _) = thinning_times(&mut |t| rate(t), t_end, 0.05, seed);
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        counts.push(ts.len());
    }
    let pois = Poisson::new(lam).unwrap();
    // Bins 0..=lo, single counts, then a tail bin, each with expected count ≥ 5.
    let (lo, hi) = (1usize, 9usize);
    let mut obs = vec![0.0; hi - lo + 2];
    for c in counts {
        obs[c.clamp(lo, hi + 1) - lo] += 1.0;
    }
    let mut exp: Vec<f64> = (lo..=hi).map(|k| pois.pmf(k as u64) * runs as f64).collect();
    exp[0] += pois.pmf(0) * runs as f64;
    exp.push(runs as f64 - exp.iter().sum::<f64>());
    assert!(exp.iter().all(|e| *e >= 5.0), "{exp:?}");
    assert!(chi2_pass(&obs, &exp, 0.01), "{obs:?} vs {exp:?}");
}

#[test]
fn long_run_matches_gibbs_measure() {
    let ax = Axis::truncated(-4.0, 4.0, 32);
    let grid = build_grid(&[ax, ax]).unwrap();
    let exact = gaussian_cell_masses(&grid);
    let outside = 1.0 - exact.iter().sum::<f64>();
    let tv_to_mu = |tr: &Trajectory| {
        let occ = occupation(tr, &grid).unwrap();
        tv_distance(&occ.masses, &exact) + 0.5 * (occ.outside - outside).abs()
    };
    let a = simulate(&bouncy(1), &[0.0, 1.0], 2.0e4).unwrap();
    let b = simulate(&bouncy(2), &[1.0, -1.0], 2.0e4).unwrap();
    let (ta, tb) = (tv_to_mu(&a), tv_to_mu(&b));
    assert!(ta < 0.08 && tb < 0.08, "{ta} {tb}");
    let oa = occupation(&a, &grid).unwrap();
    let ob = occupation(&b, &grid).unwrap();
    let tab = tv_distance(&oa.masses, &ob.masses) + 0.5 * (oa.outside - ob.outside).abs();
    assert!(tab <= 2.0 * (ta + tb), "{tab}");
    assert!(empirical_density(&a, &grid).unwrap().mass() > 0.99);

    let v2 = ergodic_average(&a, &|z| z[1] * z[1]).unwrap();
    assert!((v2.mean - 1.0).abs() <= 3.0 * v2.se, "{v2:?}");
    let x = ergodic_average(&a, &|z| z[0]).unwrap();
    assert!(x.mean.abs() <= 3.0 * x.se, "{x:?}");
    assert!(a.events.iter().any(|e| e.kind == EventKind::Bounce));
    assert!(a.events.iter().any(|e| e.kind == EventKind::Refresh));
}

fn flip(z: &[f64]) -> Vec<f64> {
    vec![z[0], -z[1]]
}

#[test]
fn langevin_is_reversible_only_up_to_the_flip() {
    let tr = kinetic_langevin(&Potential::quadratic(1.0), 1, 1.0, &[0.0, 0.0], 4000.0, 0.01, 0.1, 17).unwrap();
    let cfg = ReversalConfig::default();
    let with_flip = reversal_statistic(&tr, &flip, 0.5, &cfg).unwrap();
    assert!(with_flip.pass, "{with_flip:?}");
    let plain = reversal_statistic(&tr, &|z| z.to_vec(), 0.5, &cfg).unwrap();
    assert!(!plain.pass && plain.distance > plain.threshold, "{plain:?}");

    let short = Trajectory::from_states(2, vec![0.0; 2 * 500], 0.1).unwrap();
    assert!(reversal_statistic(&short, &flip, 0.0, &cfg).is_err());
}

#[test]
fn iid_samples_at_lag_zero_pass() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(4);
    let states: Vec<f64> = (0..2 * 3000).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    let tr = Trajectory::from_states(2, states, 0.1).unwrap();
    let r = reversal_statistic(&tr, &flip, 0.0, &ReversalConfig::default()).unwrap();
    assert!(r.pass, "{r:?}");
}
