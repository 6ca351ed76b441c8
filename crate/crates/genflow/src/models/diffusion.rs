//! Elliptic Itô diffusions `L u = b·∇u + D:∇²u` with `D = σσᵀ` on a nodal grid.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::phase::centered_derivative;
use super::ModelBundle;
use crate::generic::HypocoerciveForm;
use crate::linalg::Csr;
use crate::opalg::{split_sym_antisym, stationary_density, LinOp};
use crate::statespace::{Boundary, Space, SpaceKind};
use crate::{Error, Result};

type VecField = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Drift b: ℝᵈ → ℝᵈ and noise σ: ℝᵈ → ℝ^{d×m} (row-major).
#[derive(Clone)]
pub struct DiffusionCoefficients {
    pub drift: Arc<VecField>,
    pub sigma: Arc<VecField>,
    /// Number of noise columns.
    pub m: usize,
}

impl core::fmt::Debug for DiffusionCoefficients {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("DiffusionCoefficients").field("m", &self.m).finish_non_exhaustive()
    }
}

impl DiffusionCoefficients {
    pub fn new(
        drift: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        sigma: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        m: usize,
    ) -> Self {
        DiffusionCoefficients { drift: Arc::new(drift), sigma: Arc::new(sigma), m }
    }

    /// Overdamped Langevin dynamics b = −∇V + J∇V, σ = s·I.
    pub fn langevin(grad_v: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static, rotation: Option<Vec<f64>>, s: f64, d: usize) -> Self {
        DiffusionCoefficients::new(
            move |x| {
                let g = grad_v(x);
                let mut b: Vec<f64> = g.iter().map(|v| -v).collect();
                if let Some(j) = &rotation {
                    for r in 0..d {
                        for c in 0..d {
                            b[r] += j[r * d + c] * g[c];
                        }
                    }
                }
                b
            },
            move |_| {
                let mut s_mat = vec![0.0; d * d];
                for k in 0..d {
                    s_mat[k * d + k] = s;
                }
                s_mat
            },
            d,
        )
    }

    fn diffusion_matrix(&self, x: &[f64], d: usize) -> Result<Vec<f64>> {
        let s = (self.sigma)(x);
        if s.len() != d * self.m {
            return Err(Error::InvalidInput(alloc::format!("sigma returned {} entries, expected {}", s.len(), d * self.m)));
        }
        let mut dm = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                dm[r * d + c] = (0..self.m).map(|k| s[r * self.m + k] * s[c * self.m + k]).sum();
            }
        }
        Ok(dm)
    }
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
pub(crate) fn symmetric_eigenvalues(a: &[f64], d: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _ in 0..64 {
        let off: f64 = (0..d).flat_map(|r| (0..d).filter(move |c| *c != r).map(move |c| (r, c))).map(|(r, c)| m[r * d + c] * m[r * d + c]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = m[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * d + q] - m[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..d {
                    let akp = m[k * d + p];
                    let akq = m[k * d + q];
                    m[k * d + p] = c * akp - s * akq;
                    m[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = m[p * d + k];
                    let aqk = m[q * d + k];
                    m[p * d + k] = c * apk - s * aqk;
                    m[q * d + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..d).map(|k| m[k * d + k]).collect()
}

/// Finite-difference generator with reflecting (mirror) ends on truncated axes.
///
/// μ is the discrete stationary density; the hypocoercive parts are
/// B = L_a and A_k = Σ_l σ_lk ∂_l. The smallest eigenvalue of D over the grid
/// is recorded as parameter `min_eig_D`.
pub fn ito_diffusion(coeffs: &DiffusionCoefficients, space: &Space) -> Result<ModelBundle> {
    if space.kind() != SpaceKind::Grid {
        return Err(Error::InvalidInput("diffusions need a grid".into()));
    }
    let axes = space.axes();
    let d = axes.len();
    let n = space.len();
    let strides = space.strides();
    let hs: Vec<f64> = axes.iter().map(|a| a.spacing()).collect();
    let step = |i: usize, a: usize, fwd: bool| -> Option<usize> {
        let ax = &axes[a];
        let s = strides[a];
        let k = (i / s) % ax.n;
        match (fwd, ax.boundary) {
            (true, _) if k + 1 < ax.n => Some(i + s),
            (true, Boundary::Periodic) => Some(i + s - ax.n * s),
            (false, _) if k > 0 => Some(i - s),
            (false, Boundary::Periodic) => Some(i + (ax.n - 1) * s),
            _ => None,
        }
    };

    let mut t = Vec::with_capacity(n * (1 + 2 * d + 4 * d * d));
    let mut min_eig = f64::INFINITY;
    let mut max_eig: f64 = 0.0;
    let mut peclet: f64 = 0.0;
    for i in 0..n {
        let x = space.point(i);
        let b = (coeffs.drift)(x);
        if b.len() != d {
            return Err(Error::InvalidInput(alloc::format!("drift returned {} entries, expected {d}", b.len())));
        }
        let dm = coeffs.diffusion_matrix(x, d)?;
        for e in symmetric_eigenvalues(&dm, d) {
            min_eig = min_eig.min(e);
            max_eig = max_eig.max(e);
        }
        for l in 0..d {
            let (f, bk) = (step(i, l, true), step(i, l, false));
            let h = hs[l];
            if dm[l * d + l] > 0.0 {
                peclet = peclet.max(libm::fabs(b[l]) * h / (2.0 * dm[l * d + l]));
            }
            // Drift: centered; a mirror ghost makes it vanish on truncated ends.
            if let (Some(f), Some(bk)) = (f, bk) {
                t.push((i, f, b[l] / (2.0 * h)));
                t.push((i, bk, -b[l] / (2.0 * h)));
            }
            let dll = dm[l * d + l] / (h * h);
            match (f, bk) {
                (Some(f), Some(bk)) => {
                    t.push((i, f, dll));
                    t.push((i, bk, dll));
                    t.push((i, i, -2.0 * dll));
                }
                (Some(o), None) | (None, Some(o)) => {
                    t.push((i, o, 2.0 * dll));
                    t.push((i, i, -2.0 * dll));
                }
                (None, None) => {}
            }
            for mcol in 0..d {
                if mcol == l || dm[l * d + mcol] == 0.0 {
                    continue;
                }
                let c = dm[l * d + mcol] / (4.0 * h * hs[mcol]);
                let corners = [(true, true, 1.0), (true, false, -1.0), (false, true, -1.0), (false, false, 1.0)];
                let mut ok = true;
                let mut idx = [0usize; 4];
                for (q, (fl, fm, _)) in corners.iter().enumerate() {
                    match step(i, l, *fl).and_then(|j| step(j, mcol, *fm)) {
                        Some(j) => idx[q] = j,
                        None => ok = false,
                    }
                }
                if ok {
                    for (q, (_, _, sgn)) in corners.iter().enumerate() {
                        t.push((i, idx[q], sgn * c));
                    }
                }
            }
        }
    }
    if !(min_eig > 1e-12 * max_eig.max(1.0)) {
        return Err(Error::InvalidInput(alloc::format!(
            "diffusion matrix is degenerate on the grid (smallest eigenvalue {min_eig:e}); use a kinetic builder for hypoelliptic noise"
        )));
    }
    let l = LinOp::from_csr(space, Csr::from_triplets(n, n, t), "L_diff")?;
    let mu = stationary_density(&l)?;
    if mu.min_value() <= 0.0 {
        return Err(Error::InvalidInput(alloc::format!(
            "discrete stationary density is not positive (cell Peclet number {peclet:.3}); refine the grid or shrink the domain"
        )));
    }
    let (_, la) = split_sym_antisym(&l, &mu)?;

    let mut a_ops = Vec::with_capacity(coeffs.m);
    let sig: Vec<Vec<f64>> = (0..n).map(|i| (coeffs.sigma)(space.point(i))).collect();
    for k in 0..coeffs.m {
        let mut acc: Option<Csr> = None;
        for lx in 0..d {
            let col = |i: usize| sig[i][lx * coeffs.m + k];
            let dk = centered_derivative(space, lx, &col);
            acc = Some(match acc {
                Some(a) => a.add(&dk),
                None => dk,
            });
        }
        a_ops.push(LinOp::from_csr(space, acc.unwrap_or_else(|| Csr::from_triplets(n, n, Vec::new())), "sigma_grad")?);
    }
    let hypo = HypocoerciveForm::new(a_ops, la.clone(), mu.clone())?;

    let h = hs.iter().cloned().fold(0.0, f64::max);
    let mut bundle = ModelBundle::assemble("diffusion", l, mu, Some(h));
    bundle.params.push(("min_eig_D".into(), min_eig));
    bundle.params.push(("noise_dim".into(), coeffs.m as f64));
    bundle.hypo = Some(hypo);
    if peclet > 1.0 {
        let w: String = alloc::format!("cell Peclet number {peclet:.3} exceeds 1; the centered drift may oscillate");
        bundle.warnings.push(w);
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::max_abs;
    use crate::statespace::{build_grid, Axis};

    #[test]
    fn jacobi_eigenvalues() {
        let mut e = symmetric_eigenvalues(&[2.0, 1.0, 1.0, 2.0], 2);
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn overdamped_gaussian() {
        let s = build_grid(&[Axis::truncated(-6.0, 6.0, 128)]).unwrap();
        let c = DiffusionCoefficients::langevin(|x| vec![x[0]], None, 1.0, 1);
        let b = ito_diffusion(&c, &s).unwrap();
        let h = s.axes()[0].spacing();
        let z: f64 = (0..s.len()).map(|i| libm::exp(-0.5 * s.point(i)[0].powi(2)) * s.weights()[i]).sum();
        let err: f64 = (0..s.len())
            .map(|i| {
                let e = libm::exp(-0.5 * s.point(i)[0].powi(2)) / z - b.mu.values()[i];
                e * e * s.weights()[i]
            })
            .sum::<f64>();
        assert!(libm::sqrt(err) <= 5.0 * h * h, "{}", libm::sqrt(err));
        let (_, la) = b.split().unwrap();
        assert!(max_abs(&la.to_csr().values) <= 5.0 * h * h);
        for r in b.validate().unwrap() {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn periodic_brownian_motion_is_symmetric_laplacian() {
        let s = build_grid(&[Axis::periodic(0.0, 1.0, 16)]).unwrap();
        let c = DiffusionCoefficients::new(|_| vec![0.0], |_| vec![1.0], 1);
        let b = ito_diffusion(&c, &s).unwrap();
        let m = b.mu.values();
        assert!(m.iter().all(|v| (v - 1.0).abs() < 1e-10));
        let (_, la) = b.split().unwrap();
        assert!(max_abs(&la.to_csr().values) < 1e-10);
        let lc = b.l.to_csr();
        assert!((lc.get(3, 4) - 256.0).abs() < 1e-9 && (lc.get(3, 3) + 512.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_noise_is_refused() {
        let s = build_grid(&[Axis::truncated(-2.0, 2.0, 9), Axis::truncated(-2.0, 2.0, 9)]).unwrap();
        let c = DiffusionCoefficients::new(|x| vec![-x[0], -x[1]], |_| vec![1.0, 0.0], 1);
        assert!(matches!(ito_diffusion(&c, &s), Err(Error::InvalidInput(_))));
    }
}
