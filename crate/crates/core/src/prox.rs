//! Proximal operator of `chi * |z|^q` for `q` in `[1, 2]`.
//!
//! `eta_q(u; chi) = argmin_z 0.5 (u - z)^2 + chi |z|^q`. Closed forms exist at `q = 1`
//! (soft threshold) and `q = 2` (linear shrinkage); in between the minimizer solves
//! `x + chi q x^(q-1) = |u|` on `(0, |u|]` and is reflected for negative `u`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Result};

const MAX_ROOT_ITER: usize = 200;

/// Value and first partial derivatives of `eta_q(u; chi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProxResult {
    pub value: f64,
    pub d_du: f64,
    pub d_dchi: f64,
}

pub(crate) fn check_q(q: f64) -> Result<()> {
    if (1.0..=2.0).contains(&q) {
        Ok(())
    } else {
        Err(invalid(format!("q must lie in [1, 2], got {q}")))
    }
}

/// Evaluates `eta_q(u; chi)` with its partial derivatives.
pub fn prox(u: f64, chi: f64, q: f64) -> Result<ProxResult> {
    check_q(q)?;
    if !(chi >= 0.0) || !chi.is_finite() {
        return Err(invalid(format!("chi must be finite and >= 0, got {chi}")));
    }
    if !u.is_finite() {
        return Err(invalid(format!("u must be finite, got {u}")));
    }
    Ok(prox_unchecked(u, chi, q))
}

/// Same as [`prox`] without argument validation; callers guarantee the domain.
#[inline]
pub(crate) fn prox_unchecked(u: f64, chi: f64, q: f64) -> ProxResult {
    if chi == 0.0 {
        let d_dchi = if u == 0.0 { 0.0 } else { -q * u.abs().powf(q - 1.0) * u.signum() };
        return ProxResult {
            value: u,
            d_du: 1.0,
            d_dchi,
        };
    }
    if q == 1.0 {
        // At the kink |u| = chi the weak derivative selects 0.
        return if u.abs() > chi {
            ProxResult {
                value: u.signum() * (u.abs() - chi),
                d_du: 1.0,
                d_dchi: -u.signum(),
            }
        } else {
            ProxResult {
                value: 0.0,
                d_du: 0.0,
                d_dchi: 0.0,
            }
        };
    }
    if q == 2.0 {
        let shrink = 1.0 / (1.0 + 2.0 * chi);
        return ProxResult {
            value: u * shrink,
            d_du: shrink,
            d_dchi: -2.0 * u * shrink * shrink,
        };
    }
    if u == 0.0 {
        return ProxResult {
            value: 0.0,
            d_du: 0.0,
            d_dchi: 0.0,
        };
    }
    let x = bridge_root(u.abs(), chi, q);
    if x == 0.0 {
        return ProxResult {
            value: 0.0,
            d_du: 0.0,
            d_dchi: 0.0,
        };
    }
    let x_pow = x.powf(q - 1.0);
    let d_du = 1.0 / (1.0 + chi * q * (q - 1.0) * x_pow / x);
    ProxResult {
        value: u.signum() * x,
        d_du,
        d_dchi: -q * x_pow * u.signum() * d_du,
    }
}

/// Unique root of `x + chi q x^(q-1) = a` on `(0, a]` for `q` in `(1, 2)`, `a > 0`.
///
/// Safeguarded Newton on the bracket `(0, hi]`. The function is increasing and concave,
/// so Newton steps taken from the left of the root stay on the left and converge
/// monotonically; steps that leave the bracket fall back to bisection.
fn bridge_root(a: f64, chi: f64, q: f64) -> f64 {
    let cq = chi * q;
    let g = |x: f64| -> (f64, f64) {
        let x_pow = x.powf(q - 1.0);
        (x + cq * x_pow - a, 1.0 + cq * (q - 1.0) * x_pow / x)
    };
    // Both a and (a / (chi q))^(1/(q-1)) bound the root from above.
    let mut hi = a.min((a / cq).powf(1.0 / (q - 1.0)));
    let mut lo = 0.0;
    if hi == 0.0 {
        return 0.0;
    }
    let mut x = hi;
    for _ in 0..MAX_ROOT_ITER {
        let (gx, dg) = g(x);
        if gx == 0.0 {
            return x;
        }
        if gx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - gx / dg;
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x || hi - lo <= 4.0 * f64::EPSILON * hi {
            return next;
        }
        x = next;
    }
    x
}

/// Outcome of the randomized property battery.
#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub points: usize,
    pub max_fixed_point_residual: f64,
    pub max_scale_error: f64,
    pub max_derivative_error: f64,
    pub odd_symmetry_violations: usize,
    /// Largest gap between `q = 1.0005` and the soft threshold on a fixed grid (diagnostic only).
    pub q1_continuity_gap: f64,
    pub failures: Vec<String>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const SCALE_TOL: f64 = 1e-11;
pub const DERIVATIVE_TOL: f64 = 1e-5;
const FD_STEP: f64 = 1e-6;

/// Checks the fixed-point identity, odd symmetry, scale invariance and
/// finite-difference derivatives on `points` random `(u, chi, q)` triples.
pub fn property_battery(points: usize, seed: u64) -> SelftestReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SelftestReport {
        points,
        max_fixed_point_residual: 0.0,
        max_scale_error: 0.0,
        max_derivative_error: 0.0,
        odd_symmetry_violations: 0,
        q1_continuity_gap: 0.0,
        failures: Vec::new(),
    };
    let fail = |report: &mut SelftestReport, msg: String| {
        if report.failures.len() < 20 {
            report.failures.push(msg);
        }
    };

    for _ in 0..points {
        let q = match rng.gen_range(0..10) {
            0 => 1.0,
            1 => 2.0,
            _ => rng.gen_range(1.0..2.0),
        };
        let u = rng.gen_range(-3.0f64..1.5).exp() * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let chi = rng.gen_range(-4.0f64..1.5).exp();
        let alpha = rng.gen_range(-2.3f64..2.3).exp();

        let p = prox_unchecked(u, chi, q);

        // A root below the smallest positive double rounds to zero; the identity cannot hold there.
        let underflows = (u.abs() / (chi * q)).powf(1.0 / (q - 1.0)) < f64::MIN_POSITIVE;
        if q > 1.0 && q < 2.0 && !underflows {
            let x = p.value;
            let residual = (x + chi * q * x.abs().powf(q - 1.0) * u.signum() - u).abs() / u.abs().max(1.0);
            report.max_fixed_point_residual = report.max_fixed_point_residual.max(residual);
            if residual > FIXED_POINT_TOL {
                fail(&mut report, format!("fixed point: u={u} chi={chi} q={q} residual={residual:e}"));
            }
        }

        if prox_unchecked(-u, chi, q).value != -p.value {
            report.odd_symmetry_violations += 1;
            fail(&mut report, format!("odd symmetry: u={u} chi={chi} q={q}"));
        }

        let scaled = prox_unchecked(alpha * u, alpha.powf(2.0 - q) * chi, q).value;
        let scale_err = (alpha * p.value - scaled).abs() / scaled.abs().max(f64::MIN_POSITIVE);
        let scale_err = if p.value == 0.0 && scaled == 0.0 { 0.0 } else { scale_err };
        report.max_scale_error = report.max_scale_error.max(scale_err);
        if scale_err > SCALE_TOL {
            fail(&mut report, format!("scale: u={u} chi={chi} q={q} alpha={alpha} err={scale_err:e}"));
        }

        // Finite differences are meaningless across the soft-threshold kink.
        if q == 1.0 && (u.abs() - chi).abs() < 100.0 * FD_STEP {
            continue;
        }
        let fd_u = (prox_unchecked(u + FD_STEP, chi, q).value - prox_unchecked(u - FD_STEP, chi, q).value) / (2.0 * FD_STEP);
        let fd_chi =
            (prox_unchecked(u, chi + FD_STEP, q).value - prox_unchecked(u, chi - FD_STEP, q).value) / (2.0 * FD_STEP);
        let rel = |fd: f64, exact: f64| {
            if fd == exact {
                0.0
            } else {
                (fd - exact).abs() / exact.abs().max(fd.abs())
            }
        };
        let err = rel(fd_u, p.d_du).max(rel(fd_chi, p.d_dchi));
        report.max_derivative_error = report.max_derivative_error.max(err);
        if err > DERIVATIVE_TOL {
            fail(&mut report, format!("derivative: u={u} chi={chi} q={q} err={err:e}"));
        }
    }

    for i in 0..200 {
        let u = -5.0 + 0.05 * i as f64;
        for chi in [0.1, 0.5, 1.0, 2.0] {
            let gap = (prox_unchecked(u, chi, 1.0005).value - prox_unchecked(u, chi, 1.0).value).abs();
            report.q1_continuity_gap = report.q1_continuity_gap.max(gap);
        }
    }
    report
}
