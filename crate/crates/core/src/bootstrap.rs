//! Parametric bootstrap intervals for `R`: percentile (Boot-p) and
//! studentized (Boot-t).
//!
//! Every replication draws fresh samples of the original sizes from the
//! fitted laws and refits. Replication `i` uses stream `i` of the configured
//! seed, so discarded replications never shift the randomness of the others
//! and results do not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{fit_mle, FitOptions, FitResult, FixedMask, TwoSample};
use crate::reliability::{
    check_level, delta_variance, reliability_mle, Method, ReliabilityEstimate,
};
use crate::rng::SeededRng;

/// Smallest replication count accepted for interval output.
pub const MIN_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub level: f64,
    pub seed: u64,
    pub max_refit_failures: usize,
    /// Options for the refits; no restarts by default.
    pub fit: FitOptions,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self::new(1000, 0.95, 0)
    }
}

impl BootstrapConfig {
    /// Failure allowance defaults to 5% of `replications`.
    pub fn new(replications: usize, level: f64, seed: u64) -> Self {
        Self {
            replications,
            level,
            seed,
            max_refit_failures: replications / 20,
            fit: FitOptions::default().with_restarts(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDraws {
    /// `R̂*` of the successful refits, in replication order.
    pub r_stars: Vec<f64>,
    /// Studentized statistics `T*`, when requested.
    pub t_stars: Option<Vec<f64>>,
    /// Replications whose refit failed even after the retry.
    pub failures: usize,
    /// Successful refits discarded from `t_stars` for a non-positive variance.
    pub variance_failures: usize,
    pub replications: usize,
}

/// One replication's outcome.
enum Replicate {
    Failed,
    Refit { r: f64, t: Option<f64> },
}

/// Runs the bootstrap replications around `fit`.
pub fn draws(
    fit: &FitResult,
    d: &TwoSample,
    cfg: &BootstrapConfig,
    mask: &FixedMask,
    studentize: bool,
) -> Result<BootstrapDraws> {
    check_level(cfg.level)?;
    let r_hat = reliability_mle(fit)?;
    let strength = fit.estimates.strength_law();
    let stress = fit.estimates.stress_law();
    let (n1, n2) = (d.n1(), d.n2());
    let n = (n1 + n2) as f64;

    let outcomes: Vec<Replicate> = (0..cfg.replications)
        .into_par_iter()
        .map(|i| {
            let mut rng = SeededRng::new(cfg.seed, i as u64);
            let x = strength.sample(n1, &mut rng);
            let y = stress.sample(n2, &mut rng);
            let Ok(sample) = TwoSample::new(x, y) else {
                return Replicate::Failed;
            };
            let refit = fit_mle(&sample, mask, None, &cfg.fit)
                .or_else(|_| fit_mle(&sample, mask, Some(&fit.estimates), &cfg.fit));
            let Ok(refit) = refit else {
                return Replicate::Failed;
            };
            let Ok(r) = reliability_mle(&refit) else {
                return Replicate::Failed;
            };
            let t = studentize
                .then(|| match delta_variance(&refit) {
                    Ok(v) if v > 0.0 => Some(n.sqrt() * (r - r_hat) / v.sqrt()),
                    _ => None,
                })
                .flatten();
            Replicate::Refit { r, t }
        })
        .collect();

    let mut out = BootstrapDraws {
        r_stars: Vec::with_capacity(cfg.replications),
        t_stars: studentize.then(Vec::new),
        failures: 0,
        variance_failures: 0,
        replications: cfg.replications,
    };
    for o in outcomes {
        match o {
            Replicate::Failed => out.failures += 1,
            Replicate::Refit { r, t } => {
                out.r_stars.push(r);
                if let Some(ts) = out.t_stars.as_mut() {
                    match t {
                        Some(t) => ts.push(t),
                        None => out.variance_failures += 1,
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Type-7 empirical quantile: linear interpolation between order statistics.
pub fn quantile_of_draws(draws: &[f64], u: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("quantile level {u} outside [0, 1]")));
    }
    let mut v = draws.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(sorted_quantile(&v, u))
}

fn sorted_quantile(v: &[f64], u: f64) -> f64 {
    let h = (v.len() - 1) as f64 * u;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// `(γ/2, 1-γ/2)` quantiles of `draws` for `level = 1-γ`.
pub fn percentile_interval(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    check_level(level)?;
    let g = 1.0 - level;
    Ok((
        quantile_of_draws(draws, g / 2.0)?,
        quantile_of_draws(draws, 1.0 - g / 2.0)?,
    ))
}

/// `R̂ + T*_(u) √(Var(R̂)/n)` at `u = γ/2` and `1-γ/2`.
pub fn studentized_interval(
    r_hat: f64,
    variance: f64,
    n: usize,
    t_stars: &[f64],
    level: f64,
) -> Result<(f64, f64)> {
    let (tl, tu) = percentile_interval(t_stars, level)?;
    let se = (variance / n as f64).sqrt();
    Ok((r_hat + tl * se, r_hat + tu * se))
}

fn check_failures(failures: usize, cfg: &BootstrapConfig) -> Result<()> {
    if failures > cfg.max_refit_failures {
        return Err(Error::TooManyRefitFailures {
            failures,
            allowed: cfg.max_refit_failures,
        });
    }
    Ok(())
}

fn check_replications(cfg: &BootstrapConfig) -> Result<()> {
    if cfg.replications < MIN_REPLICATIONS {
        return Err(Error::Config(format!(
            "bootstrap needs at least {MIN_REPLICATIONS} replications, got {}",
            cfg.replications
        )));
    }
    Ok(())
}

/// Boot-p interval from existing draws.
pub fn boot_p_from(
    fit: &FitResult,
    draws: &BootstrapDraws,
    cfg: &BootstrapConfig,
) -> Result<ReliabilityEstimate> {
    check_failures(draws.failures, cfg)?;
    let r_hat = reliability_mle(fit)?;
    let (lo, hi) = percentile_interval(&draws.r_stars, cfg.level)?;
    let var = sample_variance(&draws.r_stars);
    Ok(ReliabilityEstimate::new(
        Method::BootP,
        cfg.level,
        r_hat,
        var,
        lo,
        hi,
    ))
}

/// Boot-t interval from existing draws; `n = n1 + n2`.
pub fn boot_t_from(
    fit: &FitResult,
    draws: &BootstrapDraws,
    cfg: &BootstrapConfig,
) -> Result<ReliabilityEstimate> {
    check_failures(draws.failures + draws.variance_failures, cfg)?;
    let t_stars = draws.t_stars.as_deref().ok_or(Error::EmptyDraws)?;
    let r_hat = reliability_mle(fit)?;
    let var = delta_variance(fit)?;
    let (lo, hi) = studentized_interval(r_hat, var, fit.n1 + fit.n2, t_stars, cfg.level)?;
    let mut est = ReliabilityEstimate::new(Method::BootT, cfg.level, r_hat, var, lo, hi);
    est.singular_info = fit.singular_info;
    Ok(est)
}

/// Percentile bootstrap interval.
pub fn boot_p(
    fit: &FitResult,
    d: &TwoSample,
    cfg: &BootstrapConfig,
    mask: &FixedMask,
) -> Result<ReliabilityEstimate> {
    check_replications(cfg)?;
    let dr = draws(fit, d, cfg, mask, false)?;
    boot_p_from(fit, &dr, cfg)
}

/// Studentized bootstrap interval.
pub fn boot_t(
    fit: &FitResult,
    d: &TwoSample,
    cfg: &BootstrapConfig,
    mask: &FixedMask,
) -> Result<ReliabilityEstimate> {
    check_replications(cfg)?;
    let dr = draws(fit, d, cfg, mask, true)?;
    boot_t_from(fit, &dr, cfg)
}

/// Both intervals from a single set of replications.
pub fn boot_both(
    fit: &FitResult,
    d: &TwoSample,
    cfg: &BootstrapConfig,
    mask: &FixedMask,
) -> Result<(Result<ReliabilityEstimate>, Result<ReliabilityEstimate>)> {
    check_replications(cfg)?;
    let dr = draws(fit, d, cfg, mask, true)?;
    Ok((boot_p_from(fit, &dr, cfg), boot_t_from(fit, &dr, cfg)))
}

fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_rule() {
        assert_eq!(
            quantile_of_draws(&[5.0, 1.0, 3.0, 2.0, 4.0], 0.5).unwrap(),
            3.0
        );
        assert_eq!(quantile_of_draws(&[1.0, 2.0], 0.25).unwrap(), 1.25);
        assert_eq!(quantile_of_draws(&[0.7; 9], 0.13).unwrap(), 0.7);
        assert!(matches!(
            quantile_of_draws(&[], 0.5),
            Err(Error::EmptyDraws)
        ));
    }

    #[test]
    fn zero_t_stars_give_a_point() {
        let (lo, hi) = studentized_interval(0.4, 0.01, 50, &[0.0; 200], 0.95).unwrap();
        assert_eq!((lo, hi), (0.4, 0.4));
    }

    #[test]
    fn failure_allowance_is_five_percent() {
        assert_eq!(BootstrapConfig::new(1000, 0.95, 1).max_refit_failures, 50);
    }
}
