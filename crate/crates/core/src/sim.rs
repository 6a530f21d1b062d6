//! Monte Carlo evaluation of the point and interval estimators of `R`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{boot_both, BootstrapConfig};
use crate::error::{Error, Result};
use crate::likelihood::{fit_mle, FitOptions, FixedMask, SsModel, TwoSample};
use crate::reliability::{asymptotic_ci, reliability, reliability_mle, ReliabilityEstimate};
use crate::rng::{derive_seed, SeededRng};

/// Largest tolerated share of replications whose fit fails.
const MAX_FAILURE_SHARE: f64 = 0.10;

/// The five `(n, n)` sample sizes of the reference design.
pub const DESIGN_SIZES: [usize; 5] = [10, 20, 30, 50, 100];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    pub setting: Option<usize>,
    pub truth: SsModel,
    pub n1: usize,
    pub n2: usize,
    pub replications: usize,
    /// Bootstrap replications per Monte Carlo replication; 0 skips Boot-p
    /// and Boot-t.
    pub boot_n: usize,
    pub level: f64,
    pub seed: u64,
    pub mask: FixedMask,
    pub fit: FitOptions,
}

impl Scenario {
    /// Defaults: 1000 replications, level 0.95, no bootstrap, and
    /// `(a, δ, λ, q)` held at the truth.
    pub fn new(truth: SsModel, n1: usize, n2: usize) -> Self {
        Self {
            label: String::new(),
            setting: None,
            truth,
            n1,
            n2,
            replications: 1000,
            boot_n: 0,
            level: 0.95,
            seed: 0,
            mask: FixedMask::shared_from(&truth),
            fit: FitOptions::default().with_restarts(0),
        }
    }

    pub fn r_true(&self) -> f64 {
        reliability(self.truth.eta1(), self.truth.eta2(), self.truth.q())
            .expect("valid model has valid reliability")
    }

    fn mask_note(&self) -> String {
        let fixed: Vec<&str> = crate::likelihood::Param::ALL
            .iter()
            .filter(|&&p| self.mask.is_fixed(p))
            .map(|p| p.name())
            .collect();
        if fixed.is_empty() {
            "all parameters estimated".to_string()
        } else {
            format!("held fixed: {}", fixed.join(", "))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub mean_lower: f64,
    pub mean_upper: f64,
    pub coverage: f64,
    /// Replications that produced this interval.
    pub count: usize,
    pub failures: usize,
}

impl IntervalSummary {
    fn from(r_true: f64, items: &[Option<ReliabilityEstimate>]) -> Option<Self> {
        let ok: Vec<&ReliabilityEstimate> = items.iter().flatten().collect();
        if ok.is_empty() {
            return None;
        }
        let k = ok.len() as f64;
        Some(Self {
            mean_lower: ok.iter().map(|e| e.ci_lower).sum::<f64>() / k,
            mean_upper: ok.iter().map(|e| e.ci_upper).sum::<f64>() / k,
            coverage: ok.iter().filter(|e| e.covers(r_true)).count() as f64 / k,
            count: ok.len(),
            failures: items.len() - ok.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub label: String,
    pub setting: Option<usize>,
    pub n1: usize,
    pub n2: usize,
    pub replications: usize,
    pub boot_n: usize,
    pub level: f64,
    pub seed: u64,
    pub mask: String,
    pub r_true: f64,
    pub mean_r_hat: f64,
    pub bias: f64,
    pub mse: f64,
    pub aci: Option<IntervalSummary>,
    pub boot_p: Option<IntervalSummary>,
    pub boot_t: Option<IntervalSummary>,
    /// Replications whose fit failed.
    pub failures: usize,
}

struct Replicate {
    r_hat: f64,
    aci: Option<ReliabilityEstimate>,
    boot_p: Option<ReliabilityEstimate>,
    boot_t: Option<ReliabilityEstimate>,
}

fn replicate(s: &Scenario, i: usize) -> Option<Replicate> {
    let mut rng = SeededRng::new(s.seed, i as u64);
    let x = s.truth.strength_law().sample(s.n1, &mut rng);
    let y = s.truth.stress_law().sample(s.n2, &mut rng);
    let d = TwoSample::new(x, y).ok()?;
    let fit = fit_mle(&d, &s.mask, None, &s.fit).ok()?;
    let r_hat = reliability_mle(&fit).ok()?;
    let aci = asymptotic_ci(&fit, s.level).ok();
    let (boot_p, boot_t) = if s.boot_n > 0 {
        let cfg = BootstrapConfig {
            fit: s.fit,
            ..BootstrapConfig::new(s.boot_n, s.level, derive_seed(s.seed, i as u64))
        };
        match boot_both(&fit, &d, &cfg, &s.mask) {
            Ok((p, t)) => (p.ok(), t.ok()),
            Err(_) => (None, None),
        }
    } else {
        (None, None)
    };
    Some(Replicate {
        r_hat,
        aci,
        boot_p,
        boot_t,
    })
}

/// Runs the scenario; replication `i` draws from stream `i` of the seed.
pub fn run_scenario(s: &Scenario) -> Result<SimReport> {
    if s.replications == 0 {
        return Err(Error::Config(
            "scenario needs at least one replication".to_string(),
        ));
    }
    if s.n1 == 0 || s.n2 == 0 {
        return Err(Error::Config(
            "scenario sample sizes must be positive".to_string(),
        ));
    }
    crate::reliability::check_level(s.level)?;
    s.mask.validate()?;

    let reps: Vec<Option<Replicate>> = (0..s.replications)
        .into_par_iter()
        .map(|i| replicate(s, i))
        .collect();
    let failures = reps.iter().filter(|r| r.is_none()).count();
    if failures as f64 > MAX_FAILURE_SHARE * s.replications as f64 {
        return Err(Error::ExcessiveFailures {
            failures,
            replications: s.replications,
        });
    }
    let ok: Vec<&Replicate> = reps.iter().flatten().collect();
    let r_true = s.r_true();
    let k = ok.len() as f64;
    let mean_r_hat = ok.iter().map(|r| r.r_hat).sum::<f64>() / k;
    let mse = ok.iter().map(|r| (r.r_hat - r_true).powi(2)).sum::<f64>() / k;
    let pick =
        |f: fn(&Replicate) -> Option<ReliabilityEstimate>| -> Vec<Option<ReliabilityEstimate>> {
            ok.iter().map(|r| f(r)).collect()
        };
    let boot = |v: Vec<Option<ReliabilityEstimate>>| {
        if s.boot_n > 0 {
            IntervalSummary::from(r_true, &v)
        } else {
            None
        }
    };
    Ok(SimReport {
        label: s.label.clone(),
        setting: s.setting,
        n1: s.n1,
        n2: s.n2,
        replications: s.replications,
        boot_n: s.boot_n,
        level: s.level,
        seed: s.seed,
        mask: s.mask_note(),
        r_true,
        mean_r_hat,
        bias: mean_r_hat - r_true,
        mse,
        aci: IntervalSummary::from(r_true, &pick(|r| r.aci)),
        boot_p: boot(pick(|r| r.boot_p)),
        boot_t: boot(pick(|r| r.boot_t)),
        failures,
    })
}

/// True parameters of the three reference settings, in order.
pub fn builtin_truths() -> [SsModel; 3] {
    [
        SsModel::new(4.0, 1.0, 1.5, 10.0, 1.0, 0.2),
        SsModel::new(1.0, 1.0, 0.5, 2.5, 3.0, 0.3),
        SsModel::new(10.0, 1.0, 0.5, 2.0, 20.0, 0.9),
    ]
    .map(|m| m.expect("builtin settings are valid"))
}

/// The 15 reference scenarios: three settings by five sample sizes.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let mut out = Vec::with_capacity(15);
    for (k, truth) in builtin_truths().into_iter().enumerate() {
        for n in DESIGN_SIZES {
            let mut s = Scenario::new(truth, n, n);
            s.setting = Some(k + 1);
            s.label = format!("setting {} n={n}", k + 1);
            out.push(s);
        }
    }
    out
}
