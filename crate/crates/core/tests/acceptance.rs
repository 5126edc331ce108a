//! Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.
//!
//! Run with `cargo test -p bridge-lab --test acceptance -- --nocapture`.
//! Criteria hold a shared lock so their wall-clock budgets are measured one at a time.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use bridge_lab::empirics::{generate, lambda_sweep, solve_lqls, Instance};
use bridge_lab::se::{self, SeConfig};
use bridge_lab::theory::{self, QStarConfig};
use bridge_lab::{prox, LqlsSettings, SignalDistribution};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    started: Instant,
    _guard: std::sync::MutexGuard<'static, ()>,
}

impl Criterion {
    fn start(id: u32, name: &'static str, budget_s: u64) -> Self {
        let guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
        Criterion {
            id,
            name,
            budget: Duration::from_secs(budget_s),
            started: Instant::now(),
            _guard: guard,
        }
    }

    /// Prints the verdict line and fails the test when the checks or the budget fail.
    fn finish(self, ok: bool, detail: String) {
        let elapsed = self.started.elapsed();
        let in_budget = elapsed <= self.budget;
        let pass = ok && in_budget;
        println!(
            "criterion {:>2} {}: {} ({}; {:.1}s of {}s)",
            self.id,
            self.name,
            if pass { "PASS" } else { "FAIL" },
            detail,
            elapsed.as_secs_f64(),
            self.budget.as_secs()
        );
        assert!(ok, "criterion {} {} failed: {detail}", self.id, self.name);
        assert!(in_budget, "criterion {} {} exceeded its runtime budget", self.id, self.name);
    }
}

fn point_mass() -> SignalDistribution {
    SignalDistribution::point_mass(1.0)
}

fn amse(q: f64, delta: f64, sigma_w: f64, dist: &SignalDistribution, scaled: bool) -> f64 {
    se::solve(q, delta, sigma_w, dist, scaled, &SeConfig::default())
        .unwrap_or_else(|e| panic!("state evolution failed at q={q} delta={delta} sigma_w={sigma_w}: {e}"))
        .amse
}

fn ols(delta: f64, sigma_w: f64) -> f64 {
    sigma_w * sigma_w / (1.0 - 1.0 / delta)
}

#[test]
fn criterion_01_prox_properties() {
    let c = Criterion::start(1, "prox property battery", 5);
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let (mut fixed, mut scale, mut deriv, mut asym) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    let h = 1e-6;
    for _ in 0..10_000 {
        let q: f64 = match rng.gen_range(0..8) {
            0 => 1.0,
            1 => 2.0,
            _ => rng.gen_range(1.0..2.0),
        };
        let u: f64 = rng.gen_range(-5.0..5.0);
        let chi: f64 = rng.gen_range(-3.0f64..1.0).exp();
        let alpha: f64 = rng.gen_range(-1.5f64..1.5).exp();
        let p = prox(u, chi, q).unwrap();
        let x = p.value;

        // stationarity of 0.5 (u - x)^2 + chi |x|^q
        if q > 1.0 && x != 0.0 {
            let r = (x + chi * q * x.abs().powf(q - 1.0) * x.signum() - u).abs() / u.abs().max(1.0);
            fixed = fixed.max(r);
        } else if q == 1.0 {
            let soft = u.signum() * (u.abs() - chi).max(0.0);
            fixed = fixed.max((x - soft).abs() / u.abs().max(1.0));
        }
        if prox(-u, chi, q).unwrap().value != -x {
            asym += 1;
        }
        let y = prox(alpha * u, alpha.powf(2.0 - q) * chi, q).unwrap().value;
        if x != 0.0 || y != 0.0 {
            scale = scale.max((alpha * x - y).abs() / y.abs().max(alpha * x.abs()));
        }
        if q == 1.0 && (u.abs() - chi).abs() < 1e-4 {
            continue;
        }
        let fd_u = (prox(u + h, chi, q).unwrap().value - prox(u - h, chi, q).unwrap().value) / (2.0 * h);
        let fd_c = (prox(u, chi + h, q).unwrap().value - prox(u, chi - h, q).unwrap().value) / (2.0 * h);
        let rel = |fd: f64, ex: f64| if fd == ex { 0.0 } else { (fd - ex).abs() / fd.abs().max(ex.abs()).max(1e-3) };
        deriv = deriv.max(rel(fd_u, p.d_du)).max(rel(fd_c, p.d_dchi));
    }
    let ok = fixed <= 1e-12 && asym == 0 && scale <= 1e-11 && deriv <= 1e-5;
    c.finish(
        ok,
        format!("fixed point {fixed:.1e}, symmetry violations {asym}, scale {scale:.1e}, derivative {deriv:.1e}"),
    );
}

/// Ridge closed form under the `lambda ||b||^2` penalty.
fn ridge_amse_oracle(lambda: f64, delta: f64, sigma_w: f64, second_moment: f64) -> f64 {
    let chi = (1.0 - delta + 2.0 * lambda * delta
        + ((delta - 1.0 - 2.0 * lambda * delta).powi(2) + 8.0 * lambda * delta * delta).sqrt())
        / (4.0 * delta);
    delta * (4.0 * chi * chi * second_moment + sigma_w * sigma_w) / (delta * (1.0 + 2.0 * chi).powi(2) - 1.0)
}

#[test]
fn criterion_02_ridge_oracle() {
    let c = Criterion::start(2, "ridge closed form vs state evolution", 30);
    let dist = point_mass();
    let mut worst = 0.0f64;
    let mut interior = true;
    for delta in [1.5, 2.0, 4.0] {
        for sigma_w in [0.05f64, 0.2, 0.5] {
            // the optimum sits at sigma_w^2 / (2 E|B|^2); bracket it by a factor 2 each way
            let centre = sigma_w * sigma_w / 2.0;
            let (lo, hi) = (centre / 2.0, centre * 2.0);
            let grid: Vec<f64> = (0..200).map(|i| lo * (hi / lo).powf(i as f64 / 199.0)).collect();
            let values: Vec<f64> = grid.iter().map(|&l| ridge_amse_oracle(l, delta, sigma_w, 1.0)).collect();
            let library: Vec<f64> =
                grid.iter().map(|&l| theory::ridge_amse_closed(l, delta, sigma_w, &dist).unwrap()).collect();
            for (a, b) in values.iter().zip(&library) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "closed form mismatch {a} vs {b}");
            }
            let (arg, best) = values
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
            interior &= arg > 0 && arg < grid.len() - 1;
            worst = worst.max((best - amse(2.0, delta, sigma_w, &dist, false)).abs());
        }
    }
    c.finish(worst <= 1e-6 && interior, format!("max |grid min - se| = {worst:.2e}, minimizer interior {interior}"));
}

#[test]
fn criterion_03_quadratic_fixed_point() {
    let c = Criterion::start(3, "ridge fixed point vs scalar quadratic", 1);
    let (delta, sigma_w) = (2.0f64, 0.1f64);
    // with optimal tuning the normalized ridge risk is 1 / (1 + s), so s solves
    // s^2 + (1 - sigma_w^2 - 1/delta) s - sigma_w^2 = 0 and the AMSE is s / (1 + s)
    let b = 1.0 - sigma_w * sigma_w - 1.0 / delta;
    let s = (-b + (b * b + 4.0 * sigma_w * sigma_w).sqrt()) / 2.0;
    let oracle = s / (1.0 + s);
    let got = amse(2.0, delta, sigma_w, &point_mass(), false);
    let ok = (got - 0.0192446).abs() <= 1e-6 && (got - oracle).abs() <= 1e-10;
    c.finish(ok, format!("amse {got:.10}, quadratic oracle {oracle:.10}"));
}

#[test]
fn criterion_04_small_noise_expansion() {
    let c = Criterion::start(4, "small-noise second-order convergence", 300);
    let delta = 2.0f64;
    let sigmas = [0.1, 0.05, 0.025, 0.0125];
    // C_q by hand: point mass gives (q-1)^2; uniform on [0,1] at q=1.5 gives 0.25 * 2^2 / 0.5
    let cases = [(2.0, point_mass(), 1.0, "q=2 point mass"), (1.5, point_mass(), 0.25, "q=1.5 point mass"), (1.5, SignalDistribution::uniform(1.0), 2.0, "q=1.5 uniform")];
    let mut ok = true;
    let mut parts = Vec::new();
    for (q, dist, cq, label) in cases {
        let target = -delta.powi(3) * cq / (delta - 1.0).powi(3);
        let ratios: Vec<f64> =
            sigmas.iter().map(|&s| (amse(q, delta, s, &dist, false) - ols(delta, s)) / s.powi(4)).collect();
        let gap = ((ratios[3] - target) / target).abs();
        ok &= gap <= 0.15;
        parts.push(format!("{label}: {:.3} -> target {target:.3}, gap {:.2}%", ratios[3], 100.0 * gap));
    }
    c.finish(ok, parts.join("; "));
}

#[test]
fn criterion_05_lasso_near_ols() {
    let c = Criterion::start(5, "LASSO near OLS on bounded-away signal", 10);
    let (delta, sigma_w) = (2.0, 0.05);
    let gap = (amse(1.0, delta, sigma_w, &point_mass(), false) - ols(delta, sigma_w)).abs();
    c.finish(gap <= 1e-8, format!("|amse - ols| = {gap:.2e}"));
}

#[test]
fn criterion_06_lasso_polynomial_rate() {
    let c = Criterion::start(6, "LASSO polynomial rate near zero", 300);
    let ell = 0.5;
    let delta = 2.0;
    let dist = SignalDistribution::power_zero(ell, 1.0);
    let sigmas = [0.2, 0.1, 0.05, 0.025];
    let pts: Vec<(f64, f64)> = sigmas
        .iter()
        .map(|&s| {
            let gain = ols(delta, s) - amse(1.0, delta, s, &dist, false);
            assert!(gain > 0.0, "no gain over OLS at sigma_w={s}");
            (s.ln(), gain.ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let target = 2.0 * ell + 2.0;
    c.finish((slope - target).abs() <= 0.4, format!("fitted slope {slope:.3}, target {target} +- 0.4"));
}

#[test]
fn criterion_07_q_star() {
    let c = Criterion::start(7, "optimal penalty exponent", 30);
    let cfg = QStarConfig::default();
    let uniform = theory::q_star(&SignalDistribution::uniform(1.0), &cfg).unwrap().q_star;
    let exp_tail = theory::q_star(&SignalDistribution::exp_tail(2.0, 1.5), &cfg).unwrap().q_star;
    let two_point = theory::q_star(&SignalDistribution::two_point(1.0, 100.0, 0.5), &cfg).unwrap().q_star;
    let checks = [uniform == 2.0, (exp_tail - 1.5).abs() <= 0.01, two_point <= 1.2];
    c.finish(
        checks.iter().all(|&b| b),
        format!(
            "uniform {uniform} [{}], exp_tail {exp_tail:.4} [{}], two-point {two_point:.4} [{}]",
            verdict(checks[0]),
            verdict(checks[1]),
            verdict(checks[2])
        ),
    );
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "miss"
    }
}

#[test]
fn criterion_08_large_delta_expansion() {
    let c = Criterion::start(8, "large-delta second-order convergence", 120);
    let sigma_w = 0.5f64;
    let target = sigma_w * sigma_w * (1.0 - sigma_w * sigma_w);
    let scaled: Vec<f64> = [25.0, 50.0, 100.0, 200.0]
        .iter()
        .map(|&d: &f64| d * d * (amse(2.0, d, sigma_w, &point_mass(), true) - sigma_w * sigma_w / d))
        .collect();
    let gap = ((scaled[3] - target) / target).abs();
    c.finish(
        gap <= 0.10,
        format!("{:.4} {:.4} {:.4} {:.4} -> target {target}, gap {:.2}%", scaled[0], scaled[1], scaled[2], scaled[3], 100.0 * gap),
    );
}

fn tikhonov(inst: &Instance, lambda: f64) -> DVector<f64> {
    let x = DMatrix::from_row_iterator(inst.n, inst.p, inst.x.iter().copied());
    let y = DVector::from_iterator(inst.n, inst.y.iter().copied());
    let a = x.transpose() * &x + DMatrix::identity(inst.p, inst.p) * (2.0 * lambda);
    a.cholesky().expect("Gram matrix plus ridge is positive definite").solve(&(x.transpose() * y))
}

fn max_coord_gap(a: &ndarray::Array1<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn criterion_09_monte_carlo() {
    let c = Criterion::start(9, "Monte Carlo agreement", 1200);
    let (n, p, sigma_w) = (2000, 1000, 0.5);
    let delta = n as f64 / p as f64;
    let dist = point_mass();
    let qs = [1.0, 1.5, 2.0];
    let lambdas: Vec<f64> = (0..30).map(|i| 1e-3 * 1e4f64.powf(i as f64 / 29.0)).collect();
    let settings = LqlsSettings::default();
    let tight = LqlsSettings {
        tol: 1e-11,
        ..LqlsSettings::default()
    };
    let mut best = vec![Vec::new(); qs.len()];
    let mut tikhonov_gap = 0.0f64;
    let mut monotone = true;
    for seed in 0..10u64 {
        let inst = generate(n, p, &dist, sigma_w, false, seed).unwrap();
        for (k, &q) in qs.iter().enumerate() {
            let sweep = lambda_sweep(&inst, q, &lambdas, &settings).unwrap();
            best[k].push(sweep.best.mse);
            if q == 2.0 {
                let checked: Vec<f64> = if seed == 0 { lambdas.clone() } else { vec![sweep.best.lambda] };
                for lambda in checked {
                    let out = solve_lqls(&inst, lambda, 2.0, &tight).unwrap();
                    tikhonov_gap = tikhonov_gap.max(max_coord_gap(&out.beta_hat, &tikhonov(&inst, lambda)));
                }
            }
        }
        if seed == 0 {
            for &q in &qs {
                let traced = LqlsSettings {
                    record_trace: true,
                    ..LqlsSettings::default()
                };
                let out = solve_lqls(&inst, 0.05, q, &traced).unwrap();
                // increases of a few ulps appear once the iterates stall at rounding level
                monotone &= out.trace.windows(2).all(|w| w[1] <= w[0] + 1e-13 * w[0].abs());
                monotone &= out.trace.len() > 10 && out.trace[out.trace.len() - 1] < out.trace[0];
            }
        }
    }
    let mut ok = tikhonov_gap <= 1e-7 && monotone;
    let mut parts = Vec::new();
    for (k, &q) in qs.iter().enumerate() {
        let mean = best[k].iter().sum::<f64>() / best[k].len() as f64;
        let target = amse(q, delta, sigma_w, &dist, false);
        let rel = (mean - target) / target;
        ok &= rel.abs() <= 0.05;
        parts.push(format!("q={q}: {mean:.4} vs {target:.4} ({:+.2}%)", 100.0 * rel));
    }
    parts.push(format!("Tikhonov max gap {tikhonov_gap:.1e}, monotone {monotone}"));
    c.finish(ok, parts.join("; "));
}

#[test]
fn criterion_10_phase_transition() {
    let c = Criterion::start(10, "noiseless phase transition", 60);
    let sigma_w = 1e-4;
    let dist = point_mass();
    let above: Vec<f64> = [1.5, 2.0].iter().map(|&d| amse(1.5, d, sigma_w, &dist, false)).collect();
    let below: Vec<f64> = [0.5, 0.8].iter().map(|&d| amse(1.5, d, sigma_w, &dist, false)).collect();
    let ok = above.iter().all(|&a| a <= 1e-6) && below.iter().all(|&a| a >= 1e-2);
    c.finish(
        ok,
        format!(
            "delta 1.5, 2: {:.2e} {:.2e}; delta 0.5, 0.8: {:.3} {:.3}",
            above[0], above[1], below[0], below[1]
        ),
    );
}
