use genflow::generic::{entropy_gradient, hypocoercive_to_pregeneric, orthogonality_defect, EntropyFunctional};
use genflow::hamiltonian::{dissipation_from_hs, sample_pairs, DissipationPotential};
use genflow::models::{
    andersen_thermostat, ham_pdmcmc, ito_diffusion, kinetic_fokker_planck, pdmp_dissipation_potential, DiffusionCoefficients, ModelBundle, Potential,
    PotentialSpec,
};
use genflow::num::max_abs;
use genflow::opalg::{adjoint_l2, split_sym_antisym, LinOp};
use genflow::statespace::{build_grid, weighted_dot, Axis, Space};

fn phase_grid(n: usize, l: f64) -> Space {
    build_grid(&[Axis::truncated(-l, l, n), Axis::truncated(-l, l, n)]).unwrap()
}

fn pdmp_models(s: &Space) -> Vec<ModelBundle> {
    let v = Potential::quadratic(1.0);
    vec![
        andersen_thermostat(&PotentialSpec::new(v.clone()), 1.3, s).unwrap(),
        ham_pdmcmc(&PotentialSpec::tilted(v.clone(), vec![1.0]), 0.7, s).unwrap(),
        ham_pdmcmc(&PotentialSpec::with_auxiliary(v, Potential::quartic(0.1, 0.2)), 0.0, s).unwrap(),
    ]
}

#[test]
fn pdmp_potential_agrees_with_symmetric_part_potential() {
    let s = phase_grid(13, 5.0);
    for b in pdmp_models(&s) {
        let psi = pdmp_dissipation_potential(&b).unwrap();
        let (ls, _) = b.split().unwrap();
        let hs = dissipation_from_hs(&ls, &b.mu).unwrap();
        for (rho, xi) in sample_pairs(&s, Some(&b.mu), 50, 7) {
            let a = psi.psi_star(&rho, &xi).unwrap();
            let c = hs.psi_star(&rho, &xi).unwrap();
            assert!((a - c).abs() <= 1e-9 * c.abs().max(1e-3), "{}: {a} vs {c}", b.name);
        }
        let (rho, _) = &sample_pairs(&s, Some(&b.mu), 1, 9)[0];
        assert_eq!(psi.psi_star(rho, &vec![0.0; s.len()]).unwrap(), 0.0);
        assert!(psi.psi_star(rho, &vec![3.5; s.len()]).unwrap().abs() < 1e-14);
    }
}

#[test]
fn pdmp_symmetric_flow_is_the_entropy_gradient_flow() {
    let s = phase_grid(15, 5.0);
    for b in pdmp_models(&s) {
        let psi = pdmp_dissipation_potential(&b).unwrap();
        let (ls, _) = b.split().unwrap();
        let lsp = adjoint_l2(&ls);
        for (rho, _) in sample_pairs(&s, Some(&b.mu), 5, 3) {
            let xi: Vec<f64> = entropy_gradient(&rho, &b.mu).unwrap().iter().map(|g| -0.5 * g).collect();
            let flow = psi.grad_psi_star(&rho, &xi).unwrap();
            let exact = lsp.apply(rho.values());
            let d: Vec<f64> = flow.iter().zip(&exact).map(|(a, c)| a - c).collect();
            assert!(max_abs(&d) <= 1e-10 * max_abs(&exact), "{}", b.name);
        }
    }
}

#[test]
fn andersen_transport_is_entropy_orthogonal_to_grid_order() {
    let mut last = f64::INFINITY;
    for n in [17, 33, 65] {
        let s = phase_grid(n, 6.0);
        let b = andersen_thermostat(&PotentialSpec::new(Potential::quadratic(1.0)), 1.0, &s).unwrap();
        let h = s.axes()[0].spacing();
        let ent = EntropyFunctional::new(b.mu.clone()).unwrap();
        let w = b.transport.as_ref().unwrap().scaled(-1.0);
        let mut worst: f64 = 0.0;
        for (rho, _) in sample_pairs(&s, Some(&b.mu), 4, 11) {
            worst = worst.max(orthogonality_defect(&w, &rho, &ent).unwrap().abs());
        }
        assert!(worst <= 5.0 * h * h, "n={n}: {worst}");
        assert!(worst < last);
        last = worst;
    }
}

#[test]
fn kinetic_pregeneric_parts_vanish_at_equilibrium() {
    let s = phase_grid(33, 6.0);
    let pot = PotentialSpec::new(Potential::quadratic(1.0));
    let b = kinetic_fokker_planck(&pot, &s).unwrap();
    let g = hypocoercive_to_pregeneric(b.hypo.as_ref().unwrap(), b.tol_structure).unwrap();
    let h = s.axes()[0].spacing();
    assert!(max_abs(&g.w.apply(b.mu.values())) <= 5.0 * h * h);
    let ds = entropy_gradient(&b.mu, &b.mu).unwrap();
    let m = (g.m)(&b.mu).unwrap();
    assert!(max_abs(&m.apply(&ds)) <= 5.0 * h * h);
    // The entropy gradient is log ρ + V + v²/2 up to a constant.
    let (rho, _) = &sample_pairs(&s, Some(&b.mu), 1, 5)[0];
    let grad = entropy_gradient(rho, &b.mu).unwrap();
    let shifted: Vec<f64> = (0..s.len())
        .map(|i| {
            let p = s.point(i);
            grad[i] - (rho.values()[i].ln() + 0.5 * p[0] * p[0] + 0.5 * p[1] * p[1])
        })
        .collect();
    let c = shifted[0];
    assert!(shifted.iter().all(|v| (v - c).abs() < 1e-10));
}

#[test]
fn diffusion_symmetric_part_matches_closed_form() {
    let n = 41;
    let ax = Axis::truncated(-4.0, 4.0, n);
    let s = build_grid(&[ax, ax]).unwrap();
    let h = ax.spacing();
    let coeffs = DiffusionCoefficients::langevin(|x| vec![x[0], x[1]], Some(vec![0.0, 1.0, -1.0, 0.0]), 1.0, 2);
    let b = ito_diffusion(&coeffs, &s).unwrap();
    let (ls, la) = split_sym_antisym(&b.l, &b.mu).unwrap();
    assert!(max_abs(&la.to_csr().values) > 0.1);

    // Independent assembly of Δφ − ∇V·∇φ with mirror ends.
    let strides = s.strides();
    let mut t = Vec::new();
    for i in 0..s.len() {
        let p = s.point(i);
        for a in 0..2 {
            let k = (i / strides[a]) % n;
            let (up, dn) = (i + strides[a], i.wrapping_sub(strides[a]));
            if k > 0 && k + 1 < n {
                t.push((i, up, 1.0 / (h * h) - p[a] / (2.0 * h)));
                t.push((i, dn, 1.0 / (h * h) + p[a] / (2.0 * h)));
            } else {
                t.push((i, if k == 0 { up } else { dn }, 2.0 / (h * h)));
            }
            t.push((i, i, -2.0 / (h * h)));
        }
    }
    let closed = LinOp::from_csr(&s, genflow::linalg::Csr::from_triplets(s.len(), s.len(), t), "closed").unwrap();
    let pi = std::f64::consts::PI;
    let w = s.weights();
    for (k1, k2) in [(1.0, 0.0), (2.0, 1.0), (1.0, 3.0)] {
        let f: Vec<f64> = (0..s.len())
            .map(|i| {
                let p = s.point(i);
                (k1 * pi * (p[0] + 4.0) / 8.0).cos() * (k2 * pi * (p[1] + 4.0) / 8.0).cos()
            })
            .collect();
        let a = ls.apply(&f);
        let c = closed.apply(&f);
        let d: Vec<f64> = a.iter().zip(&c).map(|(x, y)| x - y).collect();
        let m = b.mu.values();
        let rel = (weighted_dot(&d, &d, Some(m), w) / weighted_dot(&c, &c, Some(m), w)).sqrt();
        assert!(rel <= 5.0 * h * h, "({k1},{k2}): {rel}");
    }
}
