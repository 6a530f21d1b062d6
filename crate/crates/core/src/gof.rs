//! Goodness of fit for a fitted PGE-1 law: Kolmogorov-Smirnov test, Q-Q and
//! histogram data.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::Pge1Params;
use crate::error::{Error, Result};
use crate::likelihood::{fit_law, FitOptions, FixedMask};
use crate::rng::SeededRng;

const SERIES_TOLERANCE: f64 = 1e-10;
const PDF_GRID: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum GofMethod {
    /// Kolmogorov limit law, treating the parameters as known.
    Asymptotic,
    /// Refit the law on samples drawn from it; the mask says which
    /// parameters are re-estimated (`eta1` stands for `η`).
    ParametricBootstrap {
        replications: usize,
        seed: u64,
        mask: FixedMask,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub ks_stat: f64,
    pub p_value: f64,
    pub method: String,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqSeries {
    pub theoretical: Vec<f64>,
    pub sample: Vec<f64>,
}

impl QqSeries {
    /// Pearson correlation of the two coordinates.
    pub fn correlation(&self) -> f64 {
        let n = self.sample.len() as f64;
        let mx = self.theoretical.iter().sum::<f64>() / n;
        let my = self.sample.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in self.theoretical.iter().zip(&self.sample) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
            syy += (y - my) * (y - my);
        }
        sxy / (sxx * syy).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramOverlay {
    pub edges: Vec<f64>,
    pub densities: Vec<f64>,
    pub grid: Vec<f64>,
    pub pdf: Vec<f64>,
}

fn check_support(sample: &[f64], p: &Pge1Params) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let upper = p.support_bound().upper;
    for &x in sample {
        if !(x > 0.0 && x < upper) {
            return Err(Error::OutOfSupport { x, upper });
        }
    }
    Ok(())
}

/// `D_n = max_i max(i/n - F(x_(i)), F(x_(i)) - (i-1)/n)` against any cdf.
pub fn ks_statistic_with(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        let i = i as f64;
        d.max((i + 1.0) / n - f).max(f - i / n)
    })
}

/// `P(K > t)` for the Kolmogorov limit law.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.0 {
        // Jacobi-transformed series, fast for small t
        let mut cdf = 0.0;
        let pref = (2.0 * PI).sqrt() / t;
        for k in 1.. {
            let m = (2 * k - 1) as f64;
            let term = pref * (-(m * m) * PI * PI / (8.0 * t * t)).exp();
            cdf += term;
            if term < SERIES_TOLERANCE {
                break;
            }
        }
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sf = 0.0;
    for k in 1.. {
        let kf = k as f64;
        let term = 2.0 * (-2.0 * kf * kf * t * t).exp();
        sf += if k % 2 == 1 { term } else { -term };
        if term < SERIES_TOLERANCE {
            break;
        }
    }
    sf.clamp(0.0, 1.0)
}

/// One-sample K-S test of `sample` against `p`.
///
/// Defective laws are compared through their finite part, `F(x)/F(∞)`,
/// the law their samples follow.
pub fn ks_test(sample: &[f64], p: &Pge1Params, method: &GofMethod) -> Result<GofReport> {
    check_support(sample, p)?;
    let n = sample.len();
    let mass = p.total_mass();
    let d = ks_statistic_with(sample, |x| p.cdf(x) / mass);
    let (p_value, label) = match method {
        GofMethod::Asymptotic => (kolmogorov_sf((n as f64).sqrt() * d), "asymptotic"),
        GofMethod::ParametricBootstrap {
            replications,
            seed,
            mask,
        } => (
            bootstrap_p_value(d, n, p, *replications, *seed, mask)?,
            "parametric-bootstrap",
        ),
    };
    Ok(GofReport {
        ks_stat: d,
        p_value,
        method: label.to_string(),
        n,
    })
}

fn bootstrap_p_value(
    d: f64,
    n: usize,
    p: &Pge1Params,
    replications: usize,
    seed: u64,
    mask: &FixedMask,
) -> Result<f64> {
    if replications == 0 {
        return Err(Error::Config(
            "bootstrap p-value needs replications > 0".to_string(),
        ));
    }
    let opts = FitOptions::default().with_restarts(0);
    let stats: Vec<Option<f64>> = (0..replications)
        .into_par_iter()
        .map(|i| {
            let mut rng = SeededRng::new(seed, i as u64);
            let xs = p.sample(n, &mut rng);
            let (refit, _) = fit_law(&xs, mask, None, &opts)
                .or_else(|_| fit_law(&xs, mask, Some(p), &opts))
                .ok()?;
            let mass = refit.total_mass();
            Some(ks_statistic_with(&xs, |x| refit.cdf(x) / mass))
        })
        .collect();
    let ok: Vec<f64> = stats.into_iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::EmptyDraws);
    }
    let exceed = ok.iter().filter(|&&s| s >= d).count();
    Ok((exceed + 1) as f64 / (ok.len() + 1) as f64)
}

/// Theoretical quantiles at `(i - 0.5)/n` of the finite part against the
/// ordered sample.
pub fn qq_series(sample: &[f64], p: &Pge1Params) -> Result<QqSeries> {
    check_support(sample, p)?;
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mass = p.total_mass();
    let theoretical = (0..s.len())
        .map(|i| p.quantile(mass * (i as f64 + 0.5) / n))
        .collect::<Result<Vec<_>>>()?;
    Ok(QqSeries {
        theoretical,
        sample: s,
    })
}

/// Density-scaled histogram on `[0, max]` with the pdf on a matching grid.
pub fn hist_overlay(sample: &[f64], p: &Pge1Params, bins: usize) -> Result<HistogramOverlay> {
    check_support(sample, p)?;
    if bins == 0 {
        return Err(Error::Config(
            "histogram needs at least one bin".to_string(),
        ));
    }
    let max = sample.iter().copied().fold(0.0, f64::max);
    let width = max / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for &x in sample {
        let k = ((x / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = sample.len() as f64;
    let densities = counts.iter().map(|&c| c as f64 / (n * width)).collect();
    let grid: Vec<f64> = (0..=PDF_GRID)
        .map(|i| max * i as f64 / PDF_GRID as f64)
        .collect();
    let mass = p.total_mass();
    let pdf = grid.iter().map(|&x| p.pdf(x) / mass).collect();
    Ok(HistogramOverlay {
        edges,
        densities,
        grid,
        pdf,
    })
}
