//! State-evolution fixed point `s = sigma_eff^2 + s R_q(chi*, sqrt(s)) / delta` and the
//! optimally tuned asymptotic MSE it determines.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::SignalDistribution;
use crate::error::{invalid, Error, Result};
use crate::prox::check_q;
use crate::risk::{QuadConfig, RiskModel, RiskPoint, SearchConfig};
use crate::scalar::bisect;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative bracket width at which the fixed-point bisection stops.
    pub fp_tol: f64,
    pub chi_grid_points: usize,
    pub golden_tol: f64,
    /// Cap on upper-bracket doublings when `delta <= 1`.
    pub max_doublings: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            fp_tol: 1e-12,
            chi_grid_points: 64,
            golden_tol: 1e-10,
            max_doublings: 200,
        }
    }
}

impl SolverConfig {
    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            chi_grid_points: self.chi_grid_points,
            golden_tol: self.golden_tol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fp_tol > 0.0) || !(self.golden_tol > 0.0) {
            return Err(invalid("solver tolerances must be > 0"));
        }
        if self.chi_grid_points < 4 {
            return Err(invalid("chi_grid_points must be >= 4"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeConfig {
    pub quadrature: QuadConfig,
    pub solver: SolverConfig,
}

/// How the threshold is chosen at each fixed-point iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tuning {
    Optimal,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SEOutcome {
    pub q: f64,
    pub delta: f64,
    pub sigma_w: f64,
    pub scaled: bool,
    pub sigma_bar: f64,
    pub chi_star: f64,
    pub amse: f64,
    pub iterations: usize,
    pub residual: f64,
}

pub fn effective_noise(delta: f64, sigma_w: f64, scaled: bool) -> f64 {
    if scaled {
        sigma_w / delta.sqrt()
    } else {
        sigma_w
    }
}

pub fn solve(q: f64, delta: f64, sigma_w: f64, dist: &SignalDistribution, scaled: bool, cfg: &SeConfig) -> Result<SEOutcome> {
    let model = RiskModel::new(dist, &cfg.quadrature)?;
    solve_with(&model, q, delta, sigma_w, scaled, &cfg.solver, Tuning::Optimal)
}

/// Fixed-point solve against a prebuilt risk model.
pub fn solve_with(
    model: &RiskModel,
    q: f64,
    delta: f64,
    sigma_w: f64,
    scaled: bool,
    cfg: &SolverConfig,
    tuning: Tuning,
) -> Result<SEOutcome> {
    check_q(q)?;
    cfg.validate()?;
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(invalid(format!("delta must be finite and > 0, got {delta}")));
    }
    if !(sigma_w >= 0.0) || !sigma_w.is_finite() {
        return Err(invalid(format!("sigma_w must be finite and >= 0, got {sigma_w}")));
    }
    if let Tuning::Fixed(chi) = tuning {
        if !(chi >= 0.0) || !chi.is_finite() {
            return Err(invalid(format!("fixed chi must be finite and >= 0, got {chi}")));
        }
    }
    let sigma_eff = effective_noise(delta, sigma_w, scaled);
    let a = sigma_eff * sigma_eff;
    if sigma_w == 0.0 {
        if delta <= 1.0 {
            return Err(invalid("sigma_w = 0 requires delta > 1; below it the fixed point is degenerate"));
        }
        return Ok(SEOutcome {
            q,
            delta,
            sigma_w,
            scaled,
            sigma_bar: 0.0,
            chi_star: 0.0,
            amse: 0.0,
            iterations: 0,
            residual: 0.0,
        });
    }

    let search = cfg.search();
    let eval = |s: f64| -> Result<RiskPoint> {
        match tuning {
            Tuning::Optimal => model.optimal_chi(q, s.sqrt(), &search),
            Tuning::Fixed(chi) => model.risk(q, chi, s.sqrt()),
        }
    };
    let h = |s: f64, r: f64| s - a - s * r / delta;

    let (lo, hi, mut iterations) = if delta > 1.0 {
        (a, a / (1.0 - 1.0 / delta), 0)
    } else {
        let mut hi = a;
        let mut lo = a;
        let mut found = false;
        let mut trace = Vec::new();
        for _ in 0..cfg.max_doublings {
            hi *= 2.0;
            let hv = h(hi, eval(hi)?.risk);
            trace.push(format!("s={hi:e}: h={hv:e}"));
            if hv >= 0.0 {
                found = true;
                break;
            }
            lo = hi;
        }
        if !found {
            return Err(Error::NonConvergence {
                iterations: cfg.max_doublings,
                detail: format!("no sign change of the fixed-point map; trace: {}", trace.join("; ")),
            });
        }
        (lo, hi, trace.len())
    };

    let mut failure = None;
    let bracket = bisect(
        |s| match eval(s) {
            Ok(p) => h(s, p.risk),
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        lo,
        hi,
        cfg.fp_tol,
        400,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    iterations += bracket.iterations;
    let s = bracket.mid();
    let point = eval(s)?;
    Ok(SEOutcome {
        q,
        delta,
        sigma_w,
        scaled,
        sigma_bar: s.sqrt(),
        chi_star: point.chi,
        amse: s * point.risk,
        iterations,
        residual: h(s, point.risk).abs(),
    })
}

/// Grid axis swept by [`amse_curve`].
#[derive(Debug, Clone, PartialEq)]
pub enum CurveAxis {
    Delta { grid: Vec<f64>, sigma_w: f64 },
    SigmaW { grid: Vec<f64>, delta: f64 },
}

impl CurveAxis {
    fn points(&self) -> Vec<(f64, f64)> {
        match self {
            CurveAxis::Delta { grid, sigma_w } => grid.iter().map(|&d| (d, *sigma_w)).collect(),
            CurveAxis::SigmaW { grid, delta } => grid.iter().map(|&s| (*delta, s)).collect(),
        }
    }
}

/// One outcome per grid point, in grid order; failing points do not abort the sweep.
pub fn amse_curve(q: f64, axis: &CurveAxis, dist: &SignalDistribution, scaled: bool, cfg: &SeConfig) -> Vec<Result<SEOutcome>> {
    let points = axis.points();
    let model = match RiskModel::new(dist, &cfg.quadrature) {
        Ok(m) => m,
        Err(e) => return points.iter().map(|_| Err(e.clone())).collect(),
    };
    points
        .par_iter()
        .map(|&(delta, sigma_w)| solve_with(&model, q, delta, sigma_w, scaled, &cfg.solver, Tuning::Optimal))
        .collect()
}
