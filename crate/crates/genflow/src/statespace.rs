//! State spaces, densities, fields and the two quadrature inner products.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::num::KahanSum;

/// Smallest value treated as strictly positive by log-taking operations.
pub const POSITIVITY_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Boundary {
    Truncated,
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
    pub boundary: Boundary,
}

impl Axis {
    pub fn truncated(min: f64, max: f64, n: usize) -> Self {
        Axis { min, max, n, boundary: Boundary::Truncated }
    }

    pub fn periodic(min: f64, max: f64, n: usize) -> Self {
        Axis { min, max, n, boundary: Boundary::Periodic }
    }

    pub fn spacing(&self) -> f64 {
        match self.boundary {
            Boundary::Periodic => (self.max - self.min) / self.n as f64,
            Boundary::Truncated => (self.max - self.min) / (self.n - 1) as f64,
        }
    }

    pub fn coord(&self, k: usize) -> f64 {
        self.min + k as f64 * self.spacing()
    }

    /// Length of the cell owned by node `k`; end nodes of a truncated axis own half cells.
    pub fn cell(&self, k: usize) -> f64 {
        let h = self.spacing();
        match self.boundary {
            Boundary::Truncated if k == 0 || k + 1 == self.n => 0.5 * h,
            _ => h,
        }
    }

    /// True when the node set is mirror-symmetric about zero.
    pub fn is_symmetric(&self) -> bool {
        let tol = 1e-12 * (1.0 + self.max.abs());
        (0..self.n).all(|k| (self.coord(k) + self.coord(self.n - 1 - k)).abs() <= tol) && self.boundary == Boundary::Truncated
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidInput(alloc::format!("axis needs n >= 2, got {}", self.n)));
        }
        if !self.min.is_finite() || !self.max.is_finite() || self.max <= self.min {
            return Err(Error::InvalidInput(alloc::format!("axis bounds must be finite with max > min, got [{}, {}]", self.min, self.max)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SpaceKind {
    Finite,
    Grid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    kind: SpaceKind,
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    axes: Vec<Axis>,
}

pub type Space = Arc<StateSpace>;

/// Tensor-product grid; the last axis varies fastest in the linear index.
pub fn build_grid(axes: &[Axis]) -> Result<Space> {
    if axes.is_empty() {
        return Err(Error::InvalidInput("grid needs at least one axis".into()));
    }
    for a in axes {
        a.validate()?;
    }
    let dim = axes.len();
    let len: usize = axes.iter().map(|a| a.n).product();
    let mut points = Vec::with_capacity(len * dim);
    let mut weights = Vec::with_capacity(len);
    let mut idx = alloc::vec![0usize; dim];
    for _ in 0..len {
        let mut w = 1.0;
        for (a, &k) in axes.iter().zip(&idx) {
            points.push(a.coord(k));
            w *= a.cell(k);
        }
        weights.push(w);
        for d in (0..dim).rev() {
            idx[d] += 1;
            if idx[d] < axes[d].n {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(Arc::new(StateSpace { kind: SpaceKind::Grid, dim, points, weights, axes: axes.to_vec() }))
}

impl StateSpace {
    /// Finite state space with given weights; coordinates are the state indices.
    pub fn finite(weights: Vec<f64>) -> Result<Space> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("finite space needs at least one state".into()));
        }
        for (i, w) in weights.iter().enumerate() {
            if !(*w > 0.0) || !w.is_finite() {
                return Err(Error::Positivity { what: "weight", index: i, value: *w });
            }
        }
        let points = (0..weights.len()).map(|i| i as f64).collect();
        Ok(Arc::new(StateSpace { kind: SpaceKind::Finite, dim: 1, points, weights, axes: Vec::new() }))
    }

    /// Finite space with unit weights, so densities are cell masses.
    pub fn counting(n: usize) -> Result<Space> {
        Self::finite(alloc::vec![1.0; n])
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn volume(&self) -> f64 {
        let mut s = KahanSum::new();
        for w in &self.weights {
            s.add(*w);
        }
        s.value()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = alloc::vec![1usize; self.axes.len()];
        for d in (0..self.axes.len().saturating_sub(1)).rev() {
            s[d] = s[d + 1] * self.axes[d + 1].n;
        }
        s
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut out = alloc::vec![0; self.axes.len()];
        for d in (0..self.axes.len()).rev() {
            out[d] = i % self.axes[d].n;
            i /= self.axes[d].n;
        }
        out
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (k, a)| acc * a.n + k)
    }

    /// Neighbour of `i` one step along `axis` (`forward` or backward), honouring periodicity.
    pub fn neighbor(&self, i: usize, axis: usize, forward: bool) -> Option<usize> {
        let a = &self.axes[axis];
        let stride = self.strides()[axis];
        let k = (i / stride) % a.n;
        match (forward, a.boundary) {
            (true, _) if k + 1 < a.n => Some(i + stride),
            (true, Boundary::Periodic) => Some(i + stride - a.n * stride),
            (false, _) if k > 0 => Some(i - stride),
            (false, Boundary::Periodic) => Some(i + (a.n - 1) * stride),
            _ => None,
        }
    }

    pub fn same(a: &Space, b: &Space) -> bool {
        Arc::ptr_eq(a, b) || **a == **b
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidInput(alloc::format!("non-finite value {v} at entry {i}")));
        }
    }
    Ok(())
}

/// Real-valued function on a state space.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    space: Space,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(space: Space, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::InvalidInput(alloc::format!("field has {} values for {} states", values.len(), space.len())));
        }
        check_finite(&values)?;
        Ok(ScalarField { space, values })
    }

    pub fn constant(space: &Space, c: f64) -> Self {
        ScalarField { space: space.clone(), values: alloc::vec![c; space.len()] }
    }

    pub fn from_fn(space: &Space, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..space.len()).map(|i| f(space.point(i))).collect();
        Self::new(space.clone(), values)
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.space.clone(), self.values.iter().map(|v| f(*v)).collect())
    }
}

/// Nonnegative density with respect to the quadrature weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Density {
    space: Space,
    values: Vec<f64>,
}

impl Density {
    /// Wraps nonnegative values without normalising.
    pub fn new(space: Space, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::InvalidInput(alloc::format!("density has {} values for {} states", values.len(), space.len())));
        }
        check_finite(&values)?;
        for (i, v) in values.iter().enumerate() {
            if *v < 0.0 {
                return Err(Error::Positivity { what: "density", index: i, value: *v });
            }
        }
        Ok(Density { space, values })
    }

    /// Density from cell masses (values are masses divided by weights), normalised.
    pub fn from_masses(space: &Space, masses: &[f64]) -> Result<Self> {
        let v = masses.iter().zip(space.weights()).map(|(m, w)| m / w).collect();
        normalize(&Density::new(space.clone(), v)?)
    }

    pub fn from_fn(space: &Space, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..space.len()).map(|i| f(space.point(i))).collect();
        normalize(&Self::new(space.clone(), values)?)
    }

    pub fn uniform(space: &Space) -> Self {
        let v = 1.0 / space.volume();
        Density { space: space.clone(), values: alloc::vec![v; space.len()] }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        let mut s = KahanSum::new();
        for (v, w) in self.values.iter().zip(self.space.weights()) {
            s.add(v * w);
        }
        s.value()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.values.iter().zip(self.space.weights()).map(|(v, w)| v * w).collect()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Errors unless every entry clears the positivity floor.
    pub fn require_positive(&self, what: &'static str) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            if !(*v >= POSITIVITY_FLOOR) {
                return Err(Error::Positivity { what, index: i, value: *v });
            }
        }
        Ok(())
    }

    pub fn as_field(&self) -> ScalarField {
        ScalarField { space: self.space.clone(), values: self.values.clone() }
    }
}

fn same_space(a: &Space, b: &Space) -> Result<()> {
    if StateSpace::same(a, b) {
        Ok(())
    } else {
        Err(Error::SpaceMismatch)
    }
}

/// Raw weighted sum Σ f g (μ) w with a fixed index-ascending compensated order.
pub fn weighted_dot(f: &[f64], g: &[f64], mu: Option<&[f64]>, w: &[f64]) -> f64 {
    let mut s = KahanSum::new();
    match mu {
        None => {
            for i in 0..w.len() {
                s.add((f[i] * g[i]) * w[i]);
            }
        }
        Some(m) => {
            for i in 0..w.len() {
                s.add((f[i] * g[i]) * (m[i] * w[i]));
            }
        }
    }
    s.value()
}

/// Flat L² pairing, or the L²_μ pairing when a weight density is given.
pub fn inner_product(f: &ScalarField, g: &ScalarField, weight: Option<&Density>) -> Result<f64> {
    same_space(&f.space, &g.space)?;
    if let Some(mu) = weight {
        same_space(&f.space, &mu.space)?;
    }
    Ok(weighted_dot(&f.values, &g.values, weight.map(|m| m.values.as_slice()), f.space.weights()))
}

pub fn normalize(rho: &Density) -> Result<Density> {
    let m = rho.mass();
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::Mass(m));
    }
    let values = rho.values.iter().map(|v| v / m).collect();
    Ok(Density { space: rho.space.clone(), values })
}

/// h = ρ/μ pointwise.
pub fn ratio_field(rho: &Density, mu: &Density) -> Result<ScalarField> {
    same_space(&rho.space, &mu.space)?;
    for (i, m) in mu.values.iter().enumerate() {
        if !(*m > 0.0) {
            return Err(Error::Positivity { what: "reference density", index: i, value: *m });
        }
    }
    let values = rho.values.iter().zip(&mu.values).map(|(r, m)| r / m).collect();
    ScalarField::new(rho.space.clone(), values)
}
