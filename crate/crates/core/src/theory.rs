//! Closed forms: OLS and ridge AMSE, second-order expansions in the small-noise and
//! large-sample regimes, the constant `C_q` and its maximizer `q*`.

use serde::{Deserialize, Serialize};

use crate::dist::SignalDistribution;
use crate::error::{invalid, Error, Result};
use crate::scalar::golden_section;

/// Slack required between the cdf exponent at zero and `2 - q`.
const EXPONENT_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Validity {
    Valid,
    LassoBracketOnly,
    Inapplicable,
}

impl Validity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Validity::Valid => "valid",
            Validity::LassoBracketOnly => "lasso-bracket-only",
            Validity::Inapplicable => "inapplicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionReport {
    pub q: f64,
    pub delta: f64,
    pub sigma_w: f64,
    pub first_term: f64,
    /// Signed correction. For `lasso-bracket-only` this is the negated rate with unit
    /// constant; NaN when inapplicable.
    pub second_term: f64,
    pub validity: Validity,
    pub cq: Option<f64>,
    /// Exponent of the LASSO rate bracket (in `sigma_w` or `delta`) when one applies.
    pub rate_exponent: Option<f64>,
    pub notes: String,
}

pub fn ols_amse(delta: f64, sigma_w: f64) -> Result<f64> {
    check_sigma(sigma_w)?;
    if !(delta > 1.0) {
        return Err(Error::Inapplicable(format!("least squares needs delta > 1, got {delta}")));
    }
    Ok(sigma_w * sigma_w / (1.0 - 1.0 / delta))
}

/// Ridge threshold matching penalty `lambda`.
pub fn ridge_chi(lambda: f64, delta: f64) -> f64 {
    let t = delta - 1.0 - 2.0 * lambda * delta;
    (1.0 - delta + 2.0 * lambda * delta + (t * t + 8.0 * lambda * delta * delta).sqrt()) / (4.0 * delta)
}

pub fn ridge_amse_closed(lambda: f64, delta: f64, sigma_w: f64, dist: &SignalDistribution) -> Result<f64> {
    check_sigma(sigma_w)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(invalid(format!("delta must be finite and > 0, got {delta}")));
    }
    let m2 = dist
        .moment(2.0)?
        .finite()
        .ok_or_else(|| Error::Inapplicable("E|B|^2 is infinite".into()))?;
    let chi = ridge_chi(lambda, delta);
    let denom = delta * (1.0 + 2.0 * chi).powi(2) - 1.0;
    if !(denom > 0.0) {
        return Err(Error::Inapplicable(format!("ridge denominator {denom} is not positive")));
    }
    Ok(delta * (4.0 * chi * chi * m2 + sigma_w * sigma_w) / denom)
}

/// `C_q = (q-1)^2 (E|B|^(q-2))^2 / E|B|^(2q-2)` for `q` in `(1, 2]`.
pub fn cq(q: f64, dist: &SignalDistribution) -> Result<f64> {
    if !(q > 1.0 && q <= 2.0) {
        return Err(invalid(format!("C_q needs q in (1, 2], got {q}")));
    }
    let lower = dist
        .moment(q - 2.0)?
        .finite()
        .ok_or_else(|| Error::Inapplicable(format!("E|B|^{} diverges", q - 2.0)))?;
    let upper = dist
        .moment(2.0 * q - 2.0)?
        .finite()
        .ok_or_else(|| Error::Inapplicable(format!("E|B|^{} diverges", 2.0 * q - 2.0)))?;
    Ok((q - 1.0).powi(2) * lower * lower / upper)
}

fn check_sigma(sigma_w: f64) -> Result<()> {
    if !(sigma_w >= 0.0) || !sigma_w.is_finite() {
        return Err(invalid(format!("sigma_w must be finite and >= 0, got {sigma_w}")));
    }
    Ok(())
}

fn check_expansion_args(q: f64, delta: f64, sigma_w: f64) -> Result<()> {
    crate::prox::check_q(q)?;
    if !(sigma_w > 0.0) || !sigma_w.is_finite() {
        return Err(invalid(format!("sigma_w must be finite and > 0, got {sigma_w}")));
    }
    if !(delta > 1.0) || !delta.is_finite() {
        return Err(Error::Inapplicable(format!("expansions need delta > 1, got {delta}")));
    }
    Ok(())
}

/// Branch shared by both regimes: whether the `q > 1` correction is covered for `dist`.
fn bridge_branch(q: f64, dist: &SignalDistribution) -> std::result::Result<f64, String> {
    if !dist.bounded_away_from_zero() && q < 2.0 {
        let ell = dist.cdf_zero_exponent().unwrap_or(f64::INFINITY);
        if ell - (2.0 - q) < EXPONENT_MARGIN {
            return Err(format!(
                "P(|B| <= t) ~ t^{ell} near zero does not dominate t^(2-q) = t^{}",
                2.0 - q
            ));
        }
    }
    match dist.moment(2.0) {
        Ok(m) if m.is_finite() => {}
        _ => return Err("E|B|^2 is infinite".into()),
    }
    cq(q, dist).map_err(|e| e.to_string())
}

fn inapplicable(q: f64, delta: f64, sigma_w: f64, first_term: f64, notes: String) -> ExpansionReport {
    ExpansionReport {
        q,
        delta,
        sigma_w,
        first_term,
        second_term: f64::NAN,
        validity: Validity::Inapplicable,
        cq: None,
        rate_exponent: None,
        notes,
    }
}

/// `AMSE ~ first + second` as `sigma_w -> 0` at fixed `delta > 1`.
pub fn small_noise_expansion(q: f64, delta: f64, sigma_w: f64, dist: &SignalDistribution) -> Result<ExpansionReport> {
    check_expansion_args(q, delta, sigma_w)?;
    dist.validate()?;
    let first_term = sigma_w * sigma_w / (1.0 - 1.0 / delta);
    let mut report = ExpansionReport {
        q,
        delta,
        sigma_w,
        first_term,
        second_term: 0.0,
        validity: Validity::Valid,
        cq: None,
        rate_exponent: None,
        notes: String::new(),
    };
    if q == 1.0 {
        if dist.bounded_away_from_zero() {
            report.notes = "exponentially small".into();
        } else {
            let ell = dist.cdf_zero_exponent().unwrap_or(f64::INFINITY);
            let exponent = 2.0 * ell + 2.0;
            report.validity = Validity::LassoBracketOnly;
            report.second_term = -sigma_w.powf(exponent);
            report.rate_exponent = Some(exponent);
            report.notes = format!("-Theta(sigma_w^{exponent}) up to iterated-log factors; constant unknown");
        }
        return Ok(report);
    }
    match bridge_branch(q, dist) {
        Ok(c) => {
            report.cq = Some(c);
            report.second_term = -delta.powi(3) * c * sigma_w.powi(4) / (delta - 1.0).powi(3);
            Ok(report)
        }
        Err(why) => Ok(inapplicable(q, delta, sigma_w, first_term, why)),
    }
}

/// `AMSE ~ first + second` as `delta -> infinity` in the scaled model.
pub fn large_delta_expansion(q: f64, delta: f64, sigma_w: f64, dist: &SignalDistribution) -> Result<ExpansionReport> {
    check_expansion_args(q, delta, sigma_w)?;
    dist.validate()?;
    let first_term = sigma_w * sigma_w / delta;
    let base = sigma_w * sigma_w / (delta * delta);
    let mut report = ExpansionReport {
        q,
        delta,
        sigma_w,
        first_term,
        second_term: base,
        validity: Validity::Valid,
        cq: None,
        rate_exponent: None,
        notes: String::new(),
    };
    if q == 1.0 {
        if dist.bounded_away_from_zero() {
            report.notes = "sigma_w^4 / delta^2 coefficient vanishes at q = 1".into();
            return Ok(report);
        }
        let ell = dist.cdf_zero_exponent().unwrap_or(f64::INFINITY);
        if !(ell > 0.0 && ell < 1.0) {
            return Ok(inapplicable(
                q,
                delta,
                sigma_w,
                first_term,
                format!("LASSO large-delta bracket needs a cdf exponent in (0, 1), got {ell}"),
            ));
        }
        let exponent = -ell - 1.0;
        report.validity = Validity::LassoBracketOnly;
        report.second_term = -delta.powf(exponent);
        report.rate_exponent = Some(exponent);
        report.notes = format!("-Theta(delta^{exponent}) up to iterated-log factors; constant unknown");
        return Ok(report);
    }
    match bridge_branch(q, dist) {
        Ok(c) => {
            report.cq = Some(c);
            report.second_term = base * (1.0 - c * sigma_w * sigma_w);
            Ok(report)
        }
        Err(why) => Ok(inapplicable(q, delta, sigma_w, first_term, why)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QStarConfig {
    pub points: usize,
    /// Open left end of `(1, 2]`.
    pub left: f64,
    pub golden_tol: f64,
}

impl Default for QStarConfig {
    fn default() -> Self {
        QStarConfig {
            points: 200,
            left: 1.0 + 1e-3,
            golden_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QStarResult {
    pub q_star: f64,
    pub cq_max: f64,
    pub curve: Vec<(f64, f64)>,
    pub excluded: Vec<(f64, String)>,
}

/// Maximizer of `C_q` over `(1, 2]`: uniform grid, then golden-section refinement.
pub fn q_star(dist: &SignalDistribution, cfg: &QStarConfig) -> Result<QStarResult> {
    dist.validate()?;
    if cfg.points < 3 || !(cfg.left > 1.0 && cfg.left < 2.0) {
        return Err(invalid("q_star grid needs >= 3 points and a left end in (1, 2)"));
    }
    let n = cfg.points;
    let mut curve = Vec::with_capacity(n);
    let mut excluded = Vec::new();
    for i in 0..n {
        let q = if i + 1 == n {
            2.0
        } else {
            cfg.left + (2.0 - cfg.left) * i as f64 / (n - 1) as f64
        };
        match cq(q, dist) {
            Ok(c) if c.is_finite() => curve.push((q, c)),
            Ok(c) => excluded.push((q, format!("non-finite C_q {c}"))),
            Err(e) => excluded.push((q, e.to_string())),
        }
    }
    if curve.is_empty() {
        return Err(Error::Inapplicable("C_q is not finite anywhere on the grid".into()));
    }
    let mut best = 0;
    for (i, &(_, c)) in curve.iter().enumerate() {
        if c > curve[best].1 {
            best = i;
        }
    }
    let (mut q_best, mut c_best) = curve[best];
    let lo = if best == 0 { curve[0].0 } else { curve[best - 1].0 };
    let hi = if best + 1 == curve.len() { curve[best].0 } else { curve[best + 1].0 };
    if hi > lo {
        let (q_ref, neg, _) = golden_section(|q| cq(q, dist).map(|c| -c).unwrap_or(f64::INFINITY), lo, hi, cfg.golden_tol, 200);
        if -neg > c_best {
            q_best = q_ref;
            c_best = -neg;
        }
    }
    // the closed right end wins ties so that monotone curves report exactly 2
    if let Some(&(q_end, c_end)) = curve.last() {
        if q_end == 2.0 && c_end >= c_best {
            q_best = 2.0;
            c_best = c_end;
        }
    }
    Ok(QStarResult {
        q_star: q_best,
        cq_max: c_best,
        curve,
        excluded,
    })
}
