//! Stress-strength reliability `R = P(X > Y)` and its delta-method interval.

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::likelihood::FitResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ACI")]
    Aci,
    #[serde(rename = "BootP")]
    BootP,
    #[serde(rename = "BootT")]
    BootT,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Aci => "ACI",
            Method::BootP => "BootP",
            Method::BootT => "BootT",
        }
    }
}

/// Point estimate of `R` with an interval.
///
/// `ci_lower`/`ci_upper` are clamped to `[0, 1]`; the unclamped endpoints
/// are kept in `raw_lower`/`raw_upper` and `clamped` records whether
/// clamping changed anything.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityEstimate {
    pub method: Method,
    pub level: f64,
    pub r_hat: f64,
    pub variance: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub raw_lower: f64,
    pub raw_upper: f64,
    pub clamped: bool,
    /// The covariance behind `variance` came from a pseudo-inverse.
    pub singular_info: bool,
}

impl ReliabilityEstimate {
    pub fn new(
        method: Method,
        level: f64,
        r_hat: f64,
        variance: f64,
        raw_lower: f64,
        raw_upper: f64,
    ) -> Self {
        let ci_lower = raw_lower.clamp(0.0, 1.0);
        let ci_upper = raw_upper.clamp(0.0, 1.0);
        Self {
            method,
            level,
            r_hat,
            variance,
            ci_lower,
            ci_upper,
            raw_lower,
            raw_upper,
            clamped: ci_lower != raw_lower || ci_upper != raw_upper,
            singular_info: false,
        }
    }

    pub fn width(&self) -> f64 {
        self.ci_upper - self.ci_lower
    }

    pub fn covers(&self, r: f64) -> bool {
        self.ci_lower <= r && r <= self.ci_upper
    }
}

fn check_domain(eta1: f64, eta2: f64, q: f64) -> Result<()> {
    if eta1 > 0.0 && eta2 > 0.0 && q < 1.0 && eta1.is_finite() && eta2.is_finite() && q.is_finite()
    {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "reliability needs eta1, eta2 > 0 and q < 1 (got {eta1}, {eta2}, {q})"
        )))
    }
}

/// `R = (η2 + 1 - q) / (η1 + η2 + 2(1 - q))`.
pub fn reliability(eta1: f64, eta2: f64, q: f64) -> Result<f64> {
    check_domain(eta1, eta2, q)?;
    let p = 1.0 - q;
    Ok((eta2 + p) / (eta1 + eta2 + 2.0 * p))
}

/// Plug-in estimate from a converged fit.
pub fn reliability_mle(fit: &FitResult) -> Result<f64> {
    if !fit.converged {
        return Err(Error::NotConverged);
    }
    let m = &fit.estimates;
    reliability(m.eta1(), m.eta2(), m.q())
}

/// Gradient of `R` in canonical order `(a, δ, η1, η2, λ, q)`.
///
/// `∂R/∂q = (η2 - η1)/D²`: `R` depends on `q` through `1-q`, whose
/// derivative `(η1 - η2)/D²` flips sign.
pub fn delta_gradient(eta1: f64, eta2: f64, q: f64) -> Result<Vector6<f64>> {
    check_domain(eta1, eta2, q)?;
    let p = 1.0 - q;
    let d = eta1 + eta2 + 2.0 * p;
    let d2 = d * d;
    Ok(Vector6::new(
        0.0,
        0.0,
        -(eta2 + p) / d2,
        (eta1 + p) / d2,
        0.0,
        (eta2 - eta1) / d2,
    ))
}

/// `GᵀΣG` with Σ the fit's covariance; fixed coordinates contribute nothing.
pub fn delta_variance(fit: &FitResult) -> Result<f64> {
    let m = &fit.estimates;
    let g = delta_gradient(m.eta1(), m.eta2(), m.q())?;
    let v = (g.transpose() * fit.info_inverse * g)[(0, 0)];
    let scale = (g.transpose() * fit.info_inverse.abs() * g.abs())[(0, 0)];
    if v < 0.0 {
        if v < -1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::IndefiniteInformation(v));
        }
        return Ok(0.0);
    }
    Ok(v)
}

/// Two-sided standard normal critical value for `level`.
pub(crate) fn normal_critical(level: f64) -> Result<f64> {
    check_level(level)?;
    let n = Normal::standard();
    Ok(n.inverse_cdf(0.5 + 0.5 * level))
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "confidence level must lie in (0, 1), got {level}"
        )))
    }
}

/// Normal-theory interval `R̂ ± z √Var(R̂)`.
pub fn asymptotic_ci(fit: &FitResult, level: f64) -> Result<ReliabilityEstimate> {
    let r = reliability_mle(fit)?;
    let z = normal_critical(level)?;
    let var = delta_variance(fit)?;
    let half = z * var.sqrt();
    let mut est = ReliabilityEstimate::new(Method::Aci, level, r, var, r - half, r + half);
    est.singular_info = fit.singular_info;
    Ok(est)
}
