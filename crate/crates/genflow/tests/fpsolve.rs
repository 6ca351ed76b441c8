use genflow::fpsolve::{entropy_decay_report, evolve, pdmp_entropy_terms, EvolveConfig, Monitor};
use genflow::hamiltonian::sample_pairs;
use genflow::models::{andersen_thermostat, ham_pdmcmc, kinetic_fokker_planck, ModelBundle, Potential, PotentialSpec};
use genflow::statespace::{build_grid, normalize, Axis, Density, Space};

fn grid(n: usize) -> Space {
    let ax = Axis::truncated(-7.0, 7.0, n);
    build_grid(&[ax, ax]).unwrap()
}

fn shifted(s: &Space) -> Density {
    normalize(&Density::from_fn(s, |p| (-0.5 * (p[0] - 1.0).powi(2) - 0.5 * (p[1] - 0.5).powi(2)).exp()).unwrap()).unwrap()
}

fn run(b: &ModelBundle, t: f64) -> genflow::fpsolve::EvolutionTrace {
    let tr = evolve(b, &shifted(b.space()), t, &EvolveConfig::default()).unwrap();
    assert!(tr.aborted.is_none(), "{:?}", tr.aborted);
    tr
}

#[test]
fn entropy_decays_for_all_phase_space_models() {
    let s = grid(48);
    let v = Potential::quadratic(1.0);
    let models = [
        kinetic_fokker_planck(&PotentialSpec::new(v.clone()), &s).unwrap(),
        andersen_thermostat(&PotentialSpec::new(v.clone()), 1.0, &s).unwrap(),
        ham_pdmcmc(&PotentialSpec::tilted(v, vec![1.0]), 1.0, &s).unwrap(),
    ];
    for b in &models {
        let tr = run(b, 10.0);
        let r = entropy_decay_report(&tr).unwrap();
        assert!(r.monotone, "{}: {r:?}", b.name);
        let first = tr.monitors.first().unwrap().s_mu.unwrap();
        let last = tr.monitors.last().unwrap().s_mu.unwrap();
        assert!(last < 0.2 * first, "{}: {first} -> {last}", b.name);
    }
}

#[test]
fn andersen_h_norm_is_non_increasing() {
    let s = grid(32);
    let b = andersen_thermostat(&PotentialSpec::new(Potential::quadratic(1.0)), 1.0, &s).unwrap();
    let tr = run(&b, 5.0);
    let h: Vec<f64> = tr.monitors.iter().map(|m| m.h_norm2_mu.unwrap()).collect();
    for k in 1..h.len() {
        assert!(h[k] - h[k - 1] <= 1e-10 * h[0], "step {k}");
    }
}

#[test]
fn bounce_inequality_on_random_densities() {
    let s = grid(24);
    let b = ham_pdmcmc(&PotentialSpec::tilted(Potential::quadratic(1.0), vec![1.0]), 1.0, &s).unwrap();
    for (rho, _) in sample_pairs(&s, Some(&b.mu), 100, 21) {
        let t = pdmp_entropy_terms(&b, &rho).unwrap();
        assert!(t.inequality_holds(), "{t:?}");
        assert!(t.lq_term <= 1e-12 && t.ljs_term <= 1e-12);
    }
    // Reflection-invariant densities make both bounce terms vanish.
    let t = pdmp_entropy_terms(&b, &b.mu).unwrap();
    assert!(t.t1.abs() < 1e-14 && t.t2.abs() < 1e-14);
    let even = normalize(&Density::from_fn(&s, |p| (-0.5 * (p[0] - 1.0).powi(2) - p[1] * p[1]).exp()).unwrap()).unwrap();
    let t = pdmp_entropy_terms(&b, &even).unwrap();
    assert!(t.t1.abs() < 1e-14 && t.t2.abs() < 1e-14);
}

#[test]
fn monitors_are_constant_at_equilibrium() {
    let s = grid(16);
    let b = ham_pdmcmc(&PotentialSpec::tilted(Potential::quadratic(1.0), vec![1.0]), 1.0, &s).unwrap();
    let tr = evolve(&b, &b.mu, 1.0, &EvolveConfig { monitors: Monitor::ALL.to_vec(), ..Default::default() }).unwrap();
    let r = entropy_decay_report(&tr).unwrap();
    assert!(r.monotone && r.max_uptick < 1e-13, "{r:?}");
    for m in &tr.monitors {
        assert!(m.s_mu.unwrap().abs() < 1e-12);
        assert!((m.h_norm2_mu.unwrap() - 1.0).abs() < 1e-12);
    }
}
