//! Finite-size ground truth: Gaussian designs, the bridge program
//! `0.5 ||y - X b||^2 + lambda ||b||_q^q` solved by proximal gradient, and lambda sweeps.

use std::fmt;
use std::sync::OnceLock;

use ndarray::{Array1, Array2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dist::SignalDistribution;
use crate::error::{invalid, Error, Result};
use crate::prox::{check_q, prox_unchecked};

#[derive(Debug, Clone)]
pub struct Instance {
    pub n: usize,
    pub p: usize,
    pub x: Array2<f64>,
    pub beta: Array1<f64>,
    pub w: Array1<f64>,
    pub y: Array1<f64>,
    pub sigma_w: f64,
    pub scaled: bool,
    pub seed: u64,
    normal_eq: OnceLock<NormalEquations>,
}

#[derive(Debug, Clone)]
struct NormalEquations {
    gram: Array2<f64>,
    xty: Array1<f64>,
    yty: f64,
    lipschitz: f64,
}

impl Instance {
    pub fn delta(&self) -> f64 {
        self.n as f64 / self.p as f64
    }

    fn normal_equations(&self, power_iterations: usize) -> &NormalEquations {
        self.normal_eq.get_or_init(|| {
            let gram = self.x.t().dot(&self.x);
            let xty = self.x.t().dot(&self.y);
            let yty = self.y.dot(&self.y);
            let lipschitz = 1.01 * top_eigenvalue(&gram, power_iterations);
            NormalEquations {
                gram,
                xty,
                yty,
                lipschitz,
            }
        })
    }

    /// `0.5 ||y - X b||^2 + lambda sum |b_i|^q`, computed from the design directly.
    pub fn objective(&self, b: &Array1<f64>, lambda: f64, q: f64) -> f64 {
        let r = &self.y - &self.x.dot(b);
        0.5 * r.dot(&r) + lambda * penalty(b, q)
    }
}

fn penalty(b: &Array1<f64>, q: f64) -> f64 {
    b.iter().map(|v| v.abs().powf(q)).sum()
}

fn top_eigenvalue(gram: &Array2<f64>, iterations: usize) -> f64 {
    let p = gram.nrows();
    let mut v = Array1::from_shape_fn(p, |i| 1.0 + 0.5 * ((i * 7919) % 17) as f64 / 17.0);
    v /= v.dot(&v).sqrt();
    let mut value = 0.0;
    for _ in 0..iterations.max(1) {
        let gv = gram.dot(&v);
        let norm = gv.dot(&gv).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        value = v.dot(&gv);
        v = gv / norm;
    }
    value
}

/// Draws `X` (iid `N(0, 1/n)`, row-major), then `beta`, then `w`, from one seeded stream.
pub fn generate(n: usize, p: usize, dist: &SignalDistribution, sigma_w: f64, scaled: bool, seed: u64) -> Result<Instance> {
    if n == 0 || p == 0 {
        return Err(invalid(format!("instance dimensions must be >= 1, got n={n}, p={p}")));
    }
    if !(sigma_w >= 0.0) || !sigma_w.is_finite() {
        return Err(invalid(format!("sigma_w must be finite and >= 0, got {sigma_w}")));
    }
    dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (n as f64).sqrt();
    let x = Array2::from_shape_simple_fn((n, p), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * z
    });
    let beta = Array1::from(dist.sample_with(p, &mut rng));
    let w = Array1::from_shape_simple_fn(n, || {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma_w * z
    });
    let noise_scale = if scaled { (p as f64 / n as f64).sqrt() } else { 1.0 };
    let y = x.dot(&beta) + &w * noise_scale;
    Ok(Instance {
        n,
        p,
        x,
        beta,
        w,
        y,
        sigma_w,
        scaled,
        seed,
        normal_eq: OnceLock::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqlsSettings {
    /// Stop when the fixed-point residual per coordinate is below `tol (1 + ||b|| / sqrt(p))`.
    pub tol: f64,
    pub max_iter: usize,
    pub power_iterations: usize,
    /// Nesterov momentum; the objective is then no longer monotone.
    pub accelerate: bool,
    /// Keep the objective after every accepted iterate.
    pub record_trace: bool,
}

impl Default for LqlsSettings {
    fn default() -> Self {
        LqlsSettings {
            tol: 1e-9,
            max_iter: 50_000,
            power_iterations: 50,
            accelerate: false,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    #[serde(skip)]
    pub beta_hat: Array1<f64>,
    pub lambda: f64,
    pub q: f64,
    pub objective: f64,
    /// Norm of the minimal subgradient of the objective, per `sqrt(p)`.
    pub grad_norm: f64,
    /// Proximal-gradient fixed-point residual per `sqrt(p)` at the base step.
    pub residual: f64,
    pub step: f64,
    pub iterations: usize,
    pub converged: bool,
    pub mse: f64,
    #[serde(skip)]
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LqlsError {
    Invalid(Error),
    /// Iteration cap reached; carries the last iterate.
    NonConvergence(Box<SolveResult>),
}

impl fmt::Display for LqlsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LqlsError::Invalid(e) => e.fmt(f),
            LqlsError::NonConvergence(best) => write!(
                f,
                "proximal gradient hit {} iterations at lambda={} q={} with residual {:e}",
                best.iterations, best.lambda, best.q, best.residual
            ),
        }
    }
}

impl std::error::Error for LqlsError {}

impl From<Error> for LqlsError {
    fn from(e: Error) -> Self {
        LqlsError::Invalid(e)
    }
}

impl From<LqlsError> for Error {
    fn from(e: LqlsError) -> Self {
        match e {
            LqlsError::Invalid(e) => e,
            LqlsError::NonConvergence(best) => Error::NonConvergence {
                iterations: best.iterations,
                detail: format!("residual {:e} at lambda={}", best.residual, best.lambda),
            },
        }
    }
}

fn prox_step(point: &Array1<f64>, grad: &Array1<f64>, step: f64, lambda: f64, q: f64) -> Array1<f64> {
    let chi = lambda * step;
    let mut out = Array1::zeros(point.len());
    Zip::from(&mut out).and(point).and(grad).for_each(|o, &b, &g| {
        *o = prox_unchecked(b - step * g, chi, q).value;
    });
    out
}

fn norm_per_coord(v: &Array1<f64>) -> f64 {
    (v.dot(v) / v.len() as f64).sqrt()
}

/// Minimal subgradient norm of the objective at `b` given `grad = X'(X b - y)`.
fn subgradient_norm(b: &Array1<f64>, grad: &Array1<f64>, lambda: f64, q: f64) -> f64 {
    let mut acc = 0.0;
    for (&v, &g) in b.iter().zip(grad) {
        let s = if v != 0.0 {
            g + lambda * q * v.abs().powf(q - 1.0) * v.signum()
        } else if q == 1.0 {
            (g.abs() - lambda).max(0.0)
        } else {
            g
        };
        acc += s * s;
    }
    (acc / b.len() as f64).sqrt()
}

pub fn solve_lqls(inst: &Instance, lambda: f64, q: f64, settings: &LqlsSettings) -> std::result::Result<SolveResult, LqlsError> {
    solve_lqls_from(inst, lambda, q, settings, None)
}

/// As [`solve_lqls`], starting from `start` instead of zero.
pub fn solve_lqls_from(
    inst: &Instance,
    lambda: f64,
    q: f64,
    settings: &LqlsSettings,
    start: Option<&Array1<f64>>,
) -> std::result::Result<SolveResult, LqlsError> {
    check_q(q)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("lambda must be finite and >= 0, got {lambda}")).into());
    }
    if !(settings.tol > 0.0) {
        return Err(invalid("solver tolerance must be > 0").into());
    }
    let ne = inst.normal_equations(settings.power_iterations);
    if !(ne.lipschitz > 0.0) {
        return Err(Error::NumericalFailure("design has zero spectral norm".into()).into());
    }
    let step = 1.0 / ne.lipschitz;
    let p = inst.p;
    let smooth = |b: &Array1<f64>, gb: &Array1<f64>| 0.5 * ne.yty - b.dot(&ne.xty) + 0.5 * b.dot(gb);

    let mut beta = match start {
        Some(s) if s.len() == p => s.clone(),
        Some(s) => return Err(invalid(format!("warm start has length {}, expected {p}", s.len())).into()),
        None => Array1::zeros(p),
    };
    let mut g_beta = ne.gram.dot(&beta);
    let mut f_beta = smooth(&beta, &g_beta) + lambda * penalty(&beta, q);
    let mut trace = Vec::new();
    if settings.record_trace {
        trace.push(f_beta);
    }
    // momentum state
    let mut prev = beta.clone();
    let mut g_prev = g_beta.clone();
    let mut t: f64 = 1.0;

    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    while iterations < settings.max_iter {
        let grad = &g_beta - &ne.xty;
        let candidate = prox_step(&beta, &grad, step, lambda, q);
        residual = norm_per_coord(&(&candidate - &beta));
        if residual <= settings.tol * (1.0 + norm_per_coord(&beta)) {
            converged = true;
            break;
        }
        iterations += 1;

        let (next, g_next) = if settings.accelerate {
            let t_next: f64 = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let m = (t - 1.0) / t_next;
            let z = &beta + &((&beta - &prev) * m);
            let g_z = &g_beta + &((&g_beta - &g_prev) * m);
            let next = prox_step(&z, &(&g_z - &ne.xty), step, lambda, q);
            t = t_next;
            let g_next = ne.gram.dot(&next);
            (next, g_next)
        } else {
            let g_cand = ne.gram.dot(&candidate);
            let f_cand = smooth(&candidate, &g_cand) + lambda * penalty(&candidate, q);
            if f_cand > f_beta {
                let halved = prox_step(&beta, &grad, 0.5 * step, lambda, q);
                let g_half = ne.gram.dot(&halved);
                (halved, g_half)
            } else {
                (candidate, g_cand)
            }
        };
        prev = std::mem::replace(&mut beta, next);
        g_prev = std::mem::replace(&mut g_beta, g_next);
        f_beta = smooth(&beta, &g_beta) + lambda * penalty(&beta, q);
        if settings.record_trace {
            trace.push(f_beta);
        }
    }

    let grad = &g_beta - &ne.xty;
    let diff = &beta - &inst.beta;
    let result = SolveResult {
        objective: inst.objective(&beta, lambda, q),
        grad_norm: subgradient_norm(&beta, &grad, lambda, q),
        residual,
        step,
        lambda,
        q,
        iterations,
        converged,
        mse: diff.dot(&diff) / p as f64,
        trace,
        beta_hat: beta,
    };
    if converged {
        Ok(result)
    } else {
        Err(LqlsError::NonConvergence(Box::new(result)))
    }
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub best: SolveResult,
    /// One entry per grid value, in descending lambda order.
    pub curve: Vec<(f64, std::result::Result<SolveResult, LqlsError>)>,
}

/// Solves along a lambda grid from the largest value down, warm-starting each solve.
pub fn lambda_sweep(inst: &Instance, q: f64, lambda_grid: &[f64], settings: &LqlsSettings) -> Result<Sweep> {
    if lambda_grid.is_empty() {
        return Err(invalid("lambda grid is empty"));
    }
    if let Some(bad) = lambda_grid.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(invalid(format!("lambda grid values must be finite and >= 0, got {bad}")));
    }
    let mut grid = lambda_grid.to_vec();
    grid.sort_by(|a, b| b.total_cmp(a));
    let mut curve = Vec::with_capacity(grid.len());
    let mut warm: Option<Array1<f64>> = None;
    for &lambda in &grid {
        let out = solve_lqls_from(inst, lambda, q, settings, warm.as_ref());
        warm = match &out {
            Ok(r) => Some(r.beta_hat.clone()),
            Err(LqlsError::NonConvergence(r)) => Some(r.beta_hat.clone()),
            Err(LqlsError::Invalid(e)) => return Err(e.clone()),
        };
        curve.push((lambda, out));
    }
    let best = curve
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok())
        .fold(None::<&SolveResult>, |acc, r| match acc {
            Some(b) if b.mse <= r.mse => Some(b),
            _ => Some(r),
        })
        .cloned()
        .ok_or_else(|| Error::NonConvergence {
            iterations: settings.max_iter,
            detail: "no lambda in the grid converged".into(),
        })?;
    Ok(Sweep { best, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn to_na(inst: &Instance) -> (DMatrix<f64>, DVector<f64>) {
        let x = DMatrix::from_row_iterator(inst.n, inst.p, inst.x.iter().copied());
        let y = DVector::from_iterator(inst.n, inst.y.iter().copied());
        (x, y)
    }

    fn tikhonov(inst: &Instance, lambda: f64) -> DVector<f64> {
        let (x, y) = to_na(inst);
        let a = x.transpose() * &x + DMatrix::identity(inst.p, inst.p) * (2.0 * lambda);
        a.cholesky().unwrap().solve(&(x.transpose() * y))
    }

    #[test]
    fn noiseless_instance_is_exact() {
        let inst = generate(4, 2, &SignalDistribution::point_mass(1.0), 0.0, false, 7).unwrap();
        assert_eq!(inst.y, inst.x.dot(&inst.beta));
    }

    #[test]
    fn generation_is_deterministic() {
        let d = SignalDistribution::uniform(1.0);
        let a = generate(30, 10, &d, 0.5, false, 3).unwrap();
        let b = generate(30, 10, &d, 0.5, false, 3).unwrap();
        assert_eq!((a.x, a.beta, a.y), (b.x, b.beta, b.y));
    }

    #[test]
    fn column_norms_concentrate() {
        let inst = generate(2000, 1000, &SignalDistribution::point_mass(1.0), 0.5, false, 11).unwrap();
        let mean = inst.x.map(|v| v * v).sum() / 1000.0;
        assert!((0.9..=1.1).contains(&mean), "{mean}");
    }

    #[test]
    fn scaled_noise_variance() {
        let mut acc = 0.0;
        for seed in 0..4 {
            let inst = generate(2000, 1000, &SignalDistribution::point_mass(1.0), 0.5, true, seed).unwrap();
            let eff = &inst.y - &inst.x.dot(&inst.beta);
            acc += eff.dot(&eff) / 2000.0;
        }
        let var = acc / 4.0;
        assert!((var / (0.25 / 2.0) - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn zero_penalty_is_least_squares() {
        let inst = generate(120, 40, &SignalDistribution::uniform(1.0), 0.3, false, 1).unwrap();
        let ls = tikhonov(&inst, 0.0);
        let mse_ls = ls.iter().zip(&inst.beta).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 40.0;
        for q in [1.0, 1.5, 2.0] {
            let r = solve_lqls(&inst, 0.0, q, &LqlsSettings::default()).unwrap();
            assert!((r.mse - mse_ls).abs() < 1e-8, "q={q}");
        }
    }

    #[test]
    fn huge_penalty_kills_everything() {
        let inst = generate(60, 30, &SignalDistribution::point_mass(1.0), 0.1, false, 2).unwrap();
        let r = solve_lqls(&inst, 1e8, 1.0, &LqlsSettings::default()).unwrap();
        assert!(r.beta_hat.iter().all(|&v| v == 0.0));
        assert!((r.mse - inst.beta.dot(&inst.beta) / 30.0).abs() < 1e-15);
    }

    #[test]
    fn ridge_matches_tikhonov() {
        let inst = generate(200, 100, &SignalDistribution::two_point(0.5, 2.0, 0.5), 0.4, false, 9).unwrap();
        // residual-to-error amplification is the condition number of X'X + 2 lambda I
        let settings = LqlsSettings {
            tol: 1e-11,
            ..LqlsSettings::default()
        };
        for lambda in [0.01, 0.3, 5.0] {
            let r = solve_lqls(&inst, lambda, 2.0, &settings).unwrap();
            let oracle = tikhonov(&inst, lambda);
            for (a, b) in r.beta_hat.iter().zip(oracle.iter()) {
                assert!((a - b).abs() < 1e-7, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn objective_is_monotone_and_recomputed() {
        let inst = generate(150, 100, &SignalDistribution::point_mass(1.0), 0.5, false, 4).unwrap();
        let settings = LqlsSettings {
            record_trace: true,
            ..LqlsSettings::default()
        };
        for q in [1.0, 1.3, 2.0] {
            let r = solve_lqls(&inst, 0.2, q, &settings).unwrap();
            for w in r.trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-14), "q={q}");
            }
            let last = *r.trace.last().unwrap();
            assert!((last - r.objective).abs() <= 1e-10 * r.objective);
            assert!(r.grad_norm < 1e-6, "q={q}: {}", r.grad_norm);
        }
    }

    #[test]
    fn accelerated_agrees_with_monotone() {
        let inst = generate(150, 100, &SignalDistribution::uniform(1.0), 0.5, false, 8).unwrap();
        let plain = solve_lqls(&inst, 0.1, 1.4, &LqlsSettings::default()).unwrap();
        let fast = solve_lqls(
            &inst,
            0.1,
            1.4,
            &LqlsSettings {
                accelerate: true,
                ..LqlsSettings::default()
            },
        )
        .unwrap();
        assert!(fast.iterations < plain.iterations);
        assert!((&fast.beta_hat - &plain.beta_hat).iter().all(|d| d.abs() < 1e-6));
    }

    #[test]
    fn iteration_cap_reports_last_iterate() {
        let inst = generate(150, 100, &SignalDistribution::uniform(1.0), 0.5, false, 8).unwrap();
        let out = solve_lqls(
            &inst,
            0.1,
            1.5,
            &LqlsSettings {
                max_iter: 3,
                ..LqlsSettings::default()
            },
        );
        match out {
            Err(LqlsError::NonConvergence(best)) => {
                assert_eq!(best.iterations, 3);
                assert!(best.residual > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sweep_picks_minimum() {
        let inst = generate(200, 100, &SignalDistribution::point_mass(1.0), 0.5, false, 6).unwrap();
        let grid: Vec<f64> = (0..10).map(|i| 10f64.powf(-3.0 + 4.0 * i as f64 / 9.0)).collect();
        let sweep = lambda_sweep(&inst, 2.0, &grid, &LqlsSettings::default()).unwrap();
        assert_eq!(sweep.curve.len(), 10);
        assert!(sweep.curve.windows(2).all(|w| w[0].0 > w[1].0));
        let min = sweep.curve.iter().map(|(_, r)| r.as_ref().unwrap().mse).fold(f64::INFINITY, f64::min);
        assert_eq!(sweep.best.mse, min);
        assert!(sweep.curve[0].1.as_ref().unwrap().mse >= sweep.best.mse);
    }

    #[test]
    fn sweep_at_zero_is_ols() {
        let inst = generate(400, 200, &SignalDistribution::point_mass(1.0), 0.5, false, 12).unwrap();
        let sweep = lambda_sweep(&inst, 1.0, &[0.0], &LqlsSettings::default()).unwrap();
        let ols = 0.25 / (1.0 - 0.5);
        assert!((sweep.best.mse / ols - 1.0).abs() < 0.25, "{}", sweep.best.mse);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(generate(0, 3, &SignalDistribution::point_mass(1.0), 0.1, false, 0).is_err());
        let inst = generate(10, 5, &SignalDistribution::point_mass(1.0), 0.1, false, 0).unwrap();
        assert!(solve_lqls(&inst, -1.0, 1.5, &LqlsSettings::default()).is_err());
        assert!(solve_lqls(&inst, 1.0, 2.5, &LqlsSettings::default()).is_err());
        assert!(lambda_sweep(&inst, 1.5, &[], &LqlsSettings::default()).is_err());
    }
}
