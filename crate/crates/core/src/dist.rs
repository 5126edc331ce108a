//! Signal-coordinate distributions.
//!
//! Every variant describes the law of a single coefficient `B`. The magnitude-only
//! variants describe `|B|`; sampled coordinates receive independent fair random signs.
//! All risk integrals depend on `|B|` alone because the proximal map is odd.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{invalid, Result};
use crate::quadrature::{Quadrature, QuadratureKind};

/// Tail mass left out when the exponential-tail support is truncated.
const EXP_TAIL_TRUNCATION: f64 = 1e-14;

pub const DEFAULT_NODE_BUDGET: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalDistribution {
    /// Finitely many nonzero atoms `(value, probability)`.
    #[serde(rename = "point_mass")]
    PointMassSet { atoms: Vec<(f64, f64)> },
    /// `|B| ~ alpha * delta(mu1) + (1 - alpha) * delta(mu2)`.
    #[serde(rename = "two_point")]
    TwoPointMagnitude { mu1: f64, mu2: f64, alpha: f64 },
    /// `|B|` uniform on `[0, theta]`.
    #[serde(rename = "uniform")]
    UniformMagnitude { theta: f64 },
    /// `|B|` with density proportional to `exp(-tau * b^q0)` on `[0, inf)`.
    #[serde(rename = "exp_tail")]
    ExpTailMagnitude { tau: f64, q0: f64 },
    /// `P(|B| <= t) = (t / cap)^ell` on `(0, cap]`.
    #[serde(rename = "power_zero")]
    PowerZeroMagnitude { ell: f64, cap: f64 },
}

/// Value of `E|B|^r`, which may diverge for negative `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    Finite(f64),
    Infinite,
}

impl Moment {
    pub fn finite(self) -> Option<f64> {
        match self {
            Moment::Finite(v) => Some(v),
            Moment::Infinite => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Moment::Finite(_))
    }

    /// `f64::INFINITY` stands in for a divergent moment.
    pub fn as_f64(self) -> f64 {
        match self {
            Moment::Finite(v) => v,
            Moment::Infinite => f64::INFINITY,
        }
    }
}

impl SignalDistribution {
    pub fn point_mass(value: f64) -> Self {
        SignalDistribution::PointMassSet {
            atoms: vec![(value, 1.0)],
        }
    }

    pub fn two_point(mu1: f64, mu2: f64, alpha: f64) -> Self {
        SignalDistribution::TwoPointMagnitude { mu1, mu2, alpha }
    }

    pub fn uniform(theta: f64) -> Self {
        SignalDistribution::UniformMagnitude { theta }
    }

    pub fn exp_tail(tau: f64, q0: f64) -> Self {
        SignalDistribution::ExpTailMagnitude { tau, q0 }
    }

    pub fn power_zero(ell: f64, cap: f64) -> Self {
        SignalDistribution::PowerZeroMagnitude { ell, cap }
    }

    /// Checks the parameter constraints of the variant.
    pub fn validate(&self) -> Result<()> {
        use SignalDistribution::*;
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        match *self {
            PointMassSet { ref atoms } => {
                if atoms.is_empty() {
                    return Err(invalid("point_mass needs at least one atom"));
                }
                let mut total = 0.0;
                for &(value, prob) in atoms {
                    if !value.is_finite() || value == 0.0 {
                        return Err(invalid(format!("atom value must be finite and nonzero, got {value}")));
                    }
                    if !(prob > 0.0 && prob <= 1.0) {
                        return Err(invalid(format!("atom probability must lie in (0, 1], got {prob}")));
                    }
                    total += prob;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(invalid(format!("atom probabilities sum to {total}, not 1")));
                }
                Ok(())
            }
            TwoPointMagnitude { mu1, mu2, alpha } => {
                positive("mu1", mu1)?;
                if !(mu2.is_finite() && mu2 >= mu1) {
                    return Err(invalid(format!("mu2 must be >= mu1, got mu1={mu1}, mu2={mu2}")));
                }
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
                }
                Ok(())
            }
            UniformMagnitude { theta } => positive("theta", theta),
            ExpTailMagnitude { tau, q0 } => {
                positive("tau", tau)?;
                if !(q0 > 0.0 && q0 <= 2.0) {
                    return Err(invalid(format!("q0 must lie in (0, 2], got {q0}")));
                }
                Ok(())
            }
            PowerZeroMagnitude { ell, cap } => {
                positive("ell", ell)?;
                positive("cap", cap)
            }
        }
    }

    /// True when `P(|B| > mu) = 1` for some `mu > 0`.
    pub fn bounded_away_from_zero(&self) -> bool {
        matches!(
            self,
            SignalDistribution::PointMassSet { .. } | SignalDistribution::TwoPointMagnitude { .. }
        )
    }

    /// `E|B|^r`.
    pub fn moment(&self, r: f64) -> Result<Moment> {
        use SignalDistribution::*;
        if r.is_nan() {
            return Err(invalid("moment order is NaN"));
        }
        let m = match *self {
            PointMassSet { ref atoms } => {
                Moment::Finite(atoms.iter().map(|&(v, p)| p * v.abs().powf(r)).sum())
            }
            TwoPointMagnitude { mu1, mu2, alpha } => {
                Moment::Finite(alpha * mu1.powf(r) + (1.0 - alpha) * mu2.powf(r))
            }
            UniformMagnitude { theta } => {
                if r <= -1.0 {
                    Moment::Infinite
                } else {
                    Moment::Finite(theta.powf(r) / (r + 1.0))
                }
            }
            PowerZeroMagnitude { ell, cap } => {
                if r <= -ell {
                    Moment::Infinite
                } else {
                    Moment::Finite(ell * cap.powf(r) / (ell + r))
                }
            }
            ExpTailMagnitude { tau, q0 } => {
                // Substituting t = tau * b^q0 turns every moment into a ratio of gamma functions.
                if r <= -1.0 {
                    Moment::Infinite
                } else {
                    let log_m = ln_gamma((r + 1.0) / q0) - ln_gamma(1.0 / q0) - (r / q0) * tau.ln();
                    Moment::Finite(log_m.exp())
                }
            }
        };
        Ok(m)
    }

    /// Exponent `l` such that `P(|B| <= t) = Theta(t^l)` as `t -> 0`, or `None` when
    /// the law puts no mass near zero.
    pub fn cdf_zero_exponent(&self) -> Option<f64> {
        use SignalDistribution::*;
        match *self {
            PointMassSet { .. } | TwoPointMagnitude { .. } => None,
            UniformMagnitude { .. } | ExpTailMagnitude { .. } => Some(1.0),
            PowerZeroMagnitude { ell, .. } => Some(ell),
        }
    }

    /// `P(|B| <= t)`, exact for every variant.
    pub fn cdf_abs(&self, t: f64) -> f64 {
        use SignalDistribution::*;
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            PointMassSet { ref atoms } => atoms.iter().filter(|(v, _)| v.abs() <= t).map(|&(_, p)| p).sum(),
            TwoPointMagnitude { mu1, mu2, alpha } => {
                let mut c = 0.0;
                if mu1 <= t {
                    c += alpha;
                }
                if mu2 <= t {
                    c += 1.0 - alpha;
                }
                c
            }
            UniformMagnitude { theta } => (t / theta).min(1.0),
            PowerZeroMagnitude { ell, cap } => (t / cap).min(1.0).powf(ell),
            ExpTailMagnitude { tau, q0 } => 1.0 - gamma_ur(1.0 / q0, tau * t.powf(q0)),
        }
    }

    /// Draws `count` coordinates; deterministic in `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(count, &mut rng)
    }

    pub(crate) fn sample_with<R: Rng>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        use SignalDistribution::*;
        match *self {
            PointMassSet { ref atoms } => {
                let mut cumulative = Vec::with_capacity(atoms.len());
                let mut acc = 0.0;
                for &(_, p) in atoms {
                    acc += p;
                    cumulative.push(acc);
                }
                (0..count)
                    .map(|_| {
                        let u: f64 = rng.gen::<f64>() * acc;
                        let idx = cumulative.iter().position(|&c| u < c).unwrap_or(atoms.len() - 1);
                        atoms[idx].0
                    })
                    .collect()
            }
            _ => (0..count)
                .map(|_| {
                    let magnitude = self.sample_magnitude(rng);
                    if rng.gen::<bool>() {
                        magnitude
                    } else {
                        -magnitude
                    }
                })
                .collect(),
        }
    }

    fn sample_magnitude<R: Rng>(&self, rng: &mut R) -> f64 {
        use SignalDistribution::*;
        match *self {
            PointMassSet { .. } => unreachable!("atoms are sampled directly"),
            TwoPointMagnitude { mu1, mu2, alpha } => {
                if rng.gen::<f64>() < alpha {
                    mu1
                } else {
                    mu2
                }
            }
            UniformMagnitude { theta } => theta * rng.gen::<f64>(),
            PowerZeroMagnitude { ell, cap } => cap * rng.gen::<f64>().powf(1.0 / ell),
            ExpTailMagnitude { tau, q0 } => {
                // tau * |B|^q0 ~ Gamma(1/q0, 1)
                let g = Gamma::new(1.0 / q0, 1.0).expect("validated shape");
                (g.sample(rng) / tau).powf(1.0 / q0)
            }
        }
    }

    /// Quadrature rule for expectations over `|B|`.
    pub fn expectation_rule(&self, node_budget: usize) -> Result<Quadrature> {
        use SignalDistribution::*;
        if node_budget < 8 {
            return Err(invalid(format!("node_budget must be >= 8, got {node_budget}")));
        }
        let rule = match *self {
            PointMassSet { ref atoms } => Quadrature::new(
                atoms.iter().map(|&(v, _)| v.abs()).collect(),
                atoms.iter().map(|&(_, p)| p).collect(),
                QuadratureKind::DiscreteExact,
            ),
            TwoPointMagnitude { mu1, mu2, alpha } => {
                Quadrature::new(vec![mu1, mu2], vec![alpha, 1.0 - alpha], QuadratureKind::DiscreteExact)
            }
            UniformMagnitude { theta } => Quadrature::graded_legendre(node_budget, theta)?.scaled(1.0 / theta),
            PowerZeroMagnitude { ell, cap } => {
                // b = cap * u^(1/ell) with u uniform on [0, 1] removes the density singularity.
                let base = Quadrature::graded_legendre(node_budget, 1.0)?;
                let nodes = base.nodes.iter().map(|&u| cap * u.powf(1.0 / ell)).collect();
                Quadrature::new(nodes, base.weights, QuadratureKind::GaussLegendreInterval)
            }
            ExpTailMagnitude { tau, q0 } => {
                let upper = exp_tail_truncation_point(tau, q0);
                let log_norm = q0.ln() + tau.ln() / q0 - ln_gamma(1.0 / q0);
                let base = Quadrature::graded_legendre(node_budget, upper)?;
                let weights = base
                    .nodes
                    .iter()
                    .zip(&base.weights)
                    .map(|(&b, &w)| w * (log_norm - tau * b.powf(q0)).exp())
                    .collect();
                Quadrature::new(base.nodes, weights, QuadratureKind::GaussLegendreInterval)
            }
        };
        Ok(rule)
    }

    /// Largest magnitude that carries non-negligible mass (used for integration ranges).
    pub fn support_upper(&self) -> f64 {
        use SignalDistribution::*;
        match *self {
            PointMassSet { ref atoms } => atoms.iter().map(|(v, _)| v.abs()).fold(0.0, f64::max),
            TwoPointMagnitude { mu2, .. } => mu2,
            UniformMagnitude { theta } => theta,
            PowerZeroMagnitude { cap, .. } => cap,
            ExpTailMagnitude { tau, q0 } => exp_tail_truncation_point(tau, q0),
        }
    }
}

/// Smallest `b` with `P(|B| > b) < 1e-14` for the exponential-tail family.
fn exp_tail_truncation_point(tau: f64, q0: f64) -> f64 {
    let shape = 1.0 / q0;
    let tail = |t: f64| gamma_ur(shape, t);
    let mut hi = 1.0;
    while tail(hi) >= EXP_TAIL_TRUNCATION {
        hi *= 2.0;
    }
    let b = crate::scalar::bisect(|t| tail(t) - EXP_TAIL_TRUNCATION, f64::MIN_POSITIVE, hi, 1e-12, 200);
    (b.hi / tau).powf(1.0 / q0)
}
