use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A potential on position space together with its analytic gradient.
#[derive(Clone)]
pub struct Potential {
    label: String,
    value: Arc<ValueFn>,
    grad: Arc<GradFn>,
}

impl core::fmt::Debug for Potential {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "Potential({})", self.label)
    }
}

impl Potential {
    pub fn new(
        label: &str,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Potential { label: label.into(), value: Arc::new(value), grad: Arc::new(grad) }
    }

    /// k|x|²/2
    pub fn quadratic(k: f64) -> Self {
        Self::new(
            &alloc::format!("quadratic(k={k})"),
            move |x| 0.5 * k * x.iter().map(|v| v * v).sum::<f64>(),
            move |x| x.iter().map(|v| k * v).collect(),
        )
    }

    /// a|x|⁴/4 + b|x|²/2
    pub fn quartic(a: f64, b: f64) -> Self {
        Self::new(
            &alloc::format!("quartic(a={a},b={b})"),
            move |x| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                0.25 * a * r2 * r2 + 0.5 * b * r2
            },
            move |x| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                x.iter().map(|v| (a * r2 + b) * v).collect()
            },
        )
    }

    /// c·x
    pub fn linear(c: Vec<f64>) -> Self {
        let c2 = c.clone();
        Self::new(&alloc::format!("linear({c:?})"), move |x| x.iter().zip(&c).map(|(a, b)| a * b).sum(), move |_| c2.clone())
    }

    pub fn zero() -> Self {
        Self::new("zero", |_| 0.0, |x| vec![0.0; x.len()])
    }

    /// self + s·other
    pub fn plus(&self, other: &Potential, s: f64) -> Self {
        let (a, b) = (self.clone(), other.clone());
        let (c, d) = (self.clone(), other.clone());
        Self::new(
            &alloc::format!("{}+{s}*{}", self.label, other.label),
            move |x| a.value(x) + s * b.value(x),
            move |x| c.grad(x).iter().zip(d.grad(x)).map(|(p, q)| p + s * q).collect(),
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        (self.grad)(x)
    }
}

/// Target potential V and, for the bouncy sampler, the auxiliary Ṽ driving
/// the flow. The bounce field is ∇Ũ = ∇V − ∇Ṽ.
#[derive(Clone, Debug)]
pub struct PotentialSpec {
    pub v: Potential,
    pub v_tilde: Option<Potential>,
}

impl PotentialSpec {
    pub fn new(v: Potential) -> Self {
        PotentialSpec { v, v_tilde: None }
    }

    pub fn with_auxiliary(v: Potential, v_tilde: Potential) -> Self {
        PotentialSpec { v, v_tilde: Some(v_tilde) }
    }

    /// Ṽ = V − c·x, so that ∇Ũ = c.
    pub fn tilted(v: Potential, c: Vec<f64>) -> Self {
        let vt = v.plus(&Potential::linear(c), -1.0);
        Self::with_auxiliary(v, vt)
    }

    pub fn flow_potential(&self) -> &Potential {
        self.v_tilde.as_ref().unwrap_or(&self.v)
    }

    pub fn grad_u_tilde(&self, x: &[f64]) -> Vec<f64> {
        match &self.v_tilde {
            Some(vt) => self.v.grad(x).iter().zip(vt.grad(x)).map(|(a, b)| a - b).collect(),
            None => vec![0.0; x.len()],
        }
    }

    /// Warns when V at the edge of the position box is less than 2 above its
    /// smallest value on the given nodes.
    pub fn confinement_warnings(&self, nodes: &[Vec<f64>], on_boundary: &[bool]) -> Vec<String> {
        let vmin = nodes.iter().map(|x| self.v.value(x)).fold(f64::INFINITY, f64::min);
        let edge = nodes.iter().zip(on_boundary).filter(|(_, b)| **b).map(|(x, _)| self.v.value(x)).fold(f64::INFINITY, f64::min);
        let mut out = Vec::new();
        if edge.is_finite() && edge < vmin + 2.0 {
            out.push(alloc::format!("potential {} rises only {:.3} above its minimum at the domain boundary", self.v.label(), edge - vmin));
        }
        out
    }
}
