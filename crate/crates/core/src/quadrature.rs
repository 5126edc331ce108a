//! Fixed quadrature rules for expectations over `Z ~ N(0, 1)` and over `|B|`.

use gauss_quad::{GaussHermite, GaussLegendre};
use serde::Serialize;

use crate::error::{invalid, Result};

const GRADED_PANEL_NODES: usize = 16;
const GRADED_RATIO: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureKind {
    /// Weights sum to one against the standard normal density.
    GaussHermiteNormal,
    GaussLegendreInterval,
    DiscreteExact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: QuadratureKind,
}

impl Quadrature {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>, kind: QuadratureKind) -> Self {
        debug_assert_eq!(nodes.len(), weights.len());
        Quadrature { nodes, weights, kind }
    }

    /// Gauss-Hermite rule rescaled so that `sum w_i f(z_i) ~ E f(Z)` with `Z ~ N(0, 1)`.
    pub fn gauss_hermite_normal(n: usize) -> Result<Self> {
        let rule = GaussHermite::new(n).map_err(|_| invalid(format!("hermite rule needs >= 2 nodes, got {n}")))?;
        let scale = std::f64::consts::PI.sqrt();
        let (nodes, weights) = rule
            .iter()
            .map(|(x, w)| (std::f64::consts::SQRT_2 * x, w / scale))
            .unzip();
        Ok(Quadrature::new(nodes, weights, QuadratureKind::GaussHermiteNormal))
    }

    /// Gauss-Legendre rule integrating against `db` on `[a, b]`.
    pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<Self> {
        let rule = GaussLegendre::new(n).map_err(|_| invalid(format!("legendre rule needs >= 2 nodes, got {n}")))?;
        let half = 0.5 * (b - a);
        let centre = 0.5 * (a + b);
        let (nodes, weights) = rule.iter().map(|(x, w)| (centre + half * x, half * w)).unzip();
        Ok(Quadrature::new(nodes, weights, QuadratureKind::GaussLegendreInterval))
    }

    /// Composite Gauss-Legendre rule on `[0, upper]` whose panels shrink geometrically
    /// toward zero, for integrands with an algebraic singularity or a sharp feature at the origin.
    pub fn graded_legendre(node_budget: usize, upper: f64) -> Result<Self> {
        let panels = (node_budget / GRADED_PANEL_NODES).max(1);
        let per_panel = node_budget / panels;
        let mut nodes = Vec::with_capacity(node_budget);
        let mut weights = Vec::with_capacity(node_budget);
        let mut lo = 0.0;
        for k in 0..panels {
            let hi = upper * GRADED_RATIO.powi((panels - 1 - k) as i32);
            let n = if k + 1 == panels { node_budget - per_panel * (panels - 1) } else { per_panel };
            let panel = Quadrature::gauss_legendre(n, lo, hi)?;
            nodes.extend(panel.nodes);
            weights.extend(panel.weights);
            lo = hi;
        }
        Ok(Quadrature::new(nodes, weights, QuadratureKind::GaussLegendreInterval))
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for w in &mut self.weights {
            *w *= factor;
        }
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}
