//! Two-sample log-likelihood, its analytic derivatives, and the constrained
//! maximum-likelihood fit.
//!
//! Parameters are always ordered `(a, δ, η1, η2, λ, q)`; see [`Param`].

mod fit;
mod transform;

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::distribution::{ln_one_minus_exp, scale_product, Pge1Params};
use crate::error::{Error, Result};

pub use fit::{fit_law, fit_mle, FitOptions, FitResult};

/// One model coordinate, in the canonical order used by every vector and
/// matrix in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    A,
    Delta,
    Eta1,
    Eta2,
    Lambda,
    Q,
}

impl Param {
    pub const ALL: [Param; 6] = [
        Param::A,
        Param::Delta,
        Param::Eta1,
        Param::Eta2,
        Param::Lambda,
        Param::Q,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::A => "a",
            Param::Delta => "delta",
            Param::Eta1 => "eta1",
            Param::Eta2 => "eta2",
            Param::Lambda => "lambda",
            Param::Q => "q",
        }
    }

    pub fn parse(name: &str) -> Option<Param> {
        match name.trim().to_ascii_lowercase().as_str() {
            "a" => Some(Param::A),
            "delta" | "d" => Some(Param::Delta),
            "eta1" => Some(Param::Eta1),
            "eta2" => Some(Param::Eta2),
            "lambda" | "l" => Some(Param::Lambda),
            "q" => Some(Param::Q),
            _ => None,
        }
    }
}

/// The paired stress-strength model: shared `(a, δ, λ, q)`, group-specific
/// `η1` (strength sample `x`) and `η2` (stress sample `y`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsModel {
    a: f64,
    delta: f64,
    eta1: f64,
    eta2: f64,
    lambda: f64,
    q: f64,
}

impl SsModel {
    pub fn new(a: f64, delta: f64, lambda: f64, eta1: f64, eta2: f64, q: f64) -> Result<Self> {
        Pge1Params::new(a, delta, lambda, eta1, q)?;
        Pge1Params::new(a, delta, lambda, eta2, q)?;
        Ok(Self {
            a,
            delta,
            eta1,
            eta2,
            lambda,
            q,
        })
    }

    /// Builds a model from a vector in canonical order.
    pub fn from_array(v: [f64; 6]) -> Result<Self> {
        Self::new(v[0], v[1], v[4], v[2], v[3], v[5])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.a,
            self.delta,
            self.eta1,
            self.eta2,
            self.lambda,
            self.q,
        ]
    }

    pub fn get(&self, p: Param) -> f64 {
        self.to_array()[p.index()]
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn eta1(&self) -> f64 {
        self.eta1
    }
    pub fn eta2(&self) -> f64 {
        self.eta2
    }
    pub fn q(&self) -> f64 {
        self.q
    }

    /// Law of the strength variable `X`.
    pub fn strength_law(&self) -> Pge1Params {
        Pge1Params::new(self.a, self.delta, self.lambda, self.eta1, self.q)
            .expect("validated on construction")
    }

    /// Law of the stress variable `Y`.
    pub fn stress_law(&self) -> Pge1Params {
        Pge1Params::new(self.a, self.delta, self.lambda, self.eta2, self.q)
            .expect("validated on construction")
    }

    pub fn support_upper(&self) -> f64 {
        self.strength_law().support_bound().upper
    }
}

/// Strength sample `x` and stress sample `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSample {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl TwoSample {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() || y.is_empty() {
            return Err(Error::EmptySample);
        }
        check_observations(&x)?;
        check_observations(&y)?;
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n1(&self) -> usize {
        self.x.len()
    }

    pub fn n2(&self) -> usize {
        self.y.len()
    }

    pub fn max(&self) -> f64 {
        self.x.iter().chain(&self.y).copied().fold(0.0, f64::max)
    }
}

pub(crate) fn check_observations(v: &[f64]) -> Result<()> {
    match v.iter().position(|&x| !(x.is_finite() && x > 0.0)) {
        Some(i) => Err(Error::InvalidData(format!(
            "observation {i} ({}) is not a finite positive number",
            v[i]
        ))),
        None => Ok(()),
    }
}

/// Per-parameter fix/free flags with the value used for fixed coordinates.
///
/// `boundary` pins `a(1-q) = 1` (unbounded support): with both `a` and `q`
/// free only `q` moves and `a = 1/(1-q)` follows it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FixedMask {
    pub a: Option<f64>,
    pub delta: Option<f64>,
    pub lambda: Option<f64>,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub q: Option<f64>,
    #[serde(default)]
    pub boundary: bool,
}

impl FixedMask {
    /// Every coordinate free.
    pub fn free() -> Self {
        Self::default()
    }

    /// Holds `(a, δ, λ, q)` at the values of `m`, leaving `η1, η2` free.
    pub fn shared_from(m: &SsModel) -> Self {
        Self {
            a: Some(m.a),
            delta: Some(m.delta),
            lambda: Some(m.lambda),
            q: Some(m.q),
            ..Self::default()
        }
    }

    pub fn get(&self, p: Param) -> Option<f64> {
        match p {
            Param::A => self.a,
            Param::Delta => self.delta,
            Param::Eta1 => self.eta1,
            Param::Eta2 => self.eta2,
            Param::Lambda => self.lambda,
            Param::Q => self.q,
        }
    }

    pub fn set(&mut self, p: Param, value: Option<f64>) {
        let slot = match p {
            Param::A => &mut self.a,
            Param::Delta => &mut self.delta,
            Param::Eta1 => &mut self.eta1,
            Param::Eta2 => &mut self.eta2,
            Param::Lambda => &mut self.lambda,
            Param::Q => &mut self.q,
        };
        *slot = value;
    }

    pub fn with(mut self, p: Param, value: f64) -> Self {
        self.set(p, Some(value));
        self
    }

    pub fn is_fixed(&self, p: Param) -> bool {
        self.get(p).is_some()
    }

    /// Whether `p` is estimated. Under `boundary`, `a` is never an
    /// independent coordinate when `q` is free.
    pub fn is_free(&self, p: Param) -> bool {
        match p {
            Param::A if self.boundary => false,
            Param::Q if self.boundary => self.a.is_none() && self.q.is_none(),
            _ => self.get(p).is_none(),
        }
    }

    /// Overrides the coordinates of `theta` held by this mask.
    pub fn apply(&self, theta: &mut [f64; 6]) {
        for p in Param::ALL {
            if let Some(v) = self.get(p) {
                theta[p.index()] = v;
            }
        }
        if self.boundary {
            let (a, q) = (self.a, self.q);
            match (a, q) {
                (Some(a), None) => theta[Param::Q.index()] = 1.0 - 1.0 / a,
                (None, _) => theta[Param::A.index()] = 1.0 / (1.0 - theta[Param::Q.index()]),
                (Some(_), Some(_)) => {}
            }
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if let Some(v) = self.q {
            if !(v.is_finite() && v < 1.0) {
                return Err(Error::Config(format!(
                    "fixed q must be finite and below 1, got {v}"
                )));
            }
        }
        for p in [
            Param::A,
            Param::Delta,
            Param::Lambda,
            Param::Eta1,
            Param::Eta2,
        ] {
            if let Some(v) = self.get(p) {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Config(format!(
                        "fixed {} must be finite and positive, got {v}",
                        p.name()
                    )));
                }
            }
        }
        if self.boundary {
            if let (Some(a), Some(q)) = (self.a, self.q) {
                if crate::distribution::scale_product(a, q) != 1.0 {
                    return Err(Error::Config(format!(
                        "boundary constraint a(1-q) = 1 conflicts with fixed a={a}, q={q}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Log-likelihood of the two samples, `-∞` outside the feasible region.
pub fn loglik(m: &SsModel, d: &TwoSample) -> f64 {
    let fx = m.strength_law();
    let fy = m.stress_law();
    let mut total = 0.0;
    for &x in d.x() {
        total += fx.ln_pdf(x);
    }
    for &y in d.y() {
        total += fy.ln_pdf(y);
    }
    total
}

/// Analytic score vector in canonical order.
pub fn score(m: &SsModel, d: &TwoSample) -> Result<Vector6<f64>> {
    let eval = evaluate(&m.to_array(), d.x(), d.y(), Order::Gradient);
    if !eval.loglik.is_finite() {
        return Err(Error::InfeasiblePoint);
    }
    Ok(eval.gradient)
}

/// Observed information `-∇²ℓ` in canonical order.
pub fn observed_information(m: &SsModel, d: &TwoSample) -> Result<Matrix6<f64>> {
    let eval = evaluate(&m.to_array(), d.x(), d.y(), Order::Hessian);
    if !eval.loglik.is_finite() {
        return Err(Error::InfeasiblePoint);
    }
    Ok(-eval.hessian)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Order {
    Value,
    Gradient,
    Hessian,
}

#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub loglik: f64,
    pub gradient: Vector6<f64>,
    pub hessian: Matrix6<f64>,
}

const IA: usize = 0;
const ID: usize = 1;
const IL: usize = 4;
const IQ: usize = 5;

/// Log-likelihood and, on request, its first and second derivatives at a raw
/// canonical-order vector. Either sample may be empty.
pub(crate) fn evaluate(theta: &[f64; 6], x: &[f64], y: &[f64], order: Order) -> Evaluation {
    let mut out = Evaluation {
        loglik: 0.0,
        gradient: Vector6::zeros(),
        hessian: Matrix6::zeros(),
    };
    let [a, delta, eta1, eta2, lambda, q] = *theta;
    let bad = !(a > 0.0 && delta > 0.0 && eta1 > 0.0 && eta2 > 0.0 && lambda > 0.0 && q < 1.0);
    if bad || theta.iter().any(|v| !v.is_finite()) {
        out.loglik = f64::NEG_INFINITY;
        return out;
    }
    for (sample, eta, ie) in [(x, eta1, 2usize), (y, eta2, 3usize)] {
        if sample.is_empty() {
            continue;
        }
        if !accumulate_group(&mut out, sample, a, delta, eta, lambda, q, ie, order) {
            out.loglik = f64::NEG_INFINITY;
            return out;
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn accumulate_group(
    out: &mut Evaluation,
    sample: &[f64],
    a: f64,
    delta: f64,
    eta: f64,
    lambda: f64,
    q: f64,
    ie: usize,
    order: Order,
) -> bool {
    let p = 1.0 - q;
    let s = scale_product(a, q);
    let ln_s = s.ln();
    let c = eta / p;
    let n = sample.len() as f64;
    let ep = eta + p;

    out.loglik += n * (ep.ln() + a.ln() + delta.ln() + lambda.ln());

    // Sums over the group; B is the bracket 1 - s·G^δ.
    let mut sum_x = 0.0;
    let mut sum_lg = 0.0;
    let mut sum_lnb = 0.0;
    let mut g = [0.0f64; 6];
    let mut h = [[0.0f64; 6]; 6];

    for &xi in sample {
        let e = (-lambda * xi).exp();
        let u = -(-lambda * xi).exp_m1();
        let lg = ln_one_minus_exp(-lambda * xi);
        let ln_load = ln_s + delta * lg;
        if !(ln_load < 0.0) {
            return false;
        }
        let pw = (delta * lg).exp();
        let lnb = ln_one_minus_exp(ln_load);
        sum_x += xi;
        sum_lg += lg;
        sum_lnb += lnb;
        if order == Order::Value {
            continue;
        }
        let b = lnb.exp();
        // r = d ln G / dλ, dr = dr/dλ
        let r = xi * e / u;
        let dr = -xi * xi * e / (u * u);

        // dB/dθ over (a, δ, λ, q)
        let ba = -p * pw;
        let bd = -s * pw * lg;
        let bl = -s * delta * pw * r;
        let bq = a * pw;
        let lb = [ba / b, bd / b, bl / b, bq / b];

        g[IA] += c * lb[0];
        g[ID] += c * lb[1];
        g[IL] += (delta - 1.0) * r + c * lb[2];
        g[IQ] += c * lb[3];

        if order < Order::Hessian {
            continue;
        }
        let baa = 0.0;
        let bad = -p * pw * lg;
        let bal = -p * delta * pw * r;
        let baq = pw;
        let bdd = -s * pw * lg * lg;
        let bdl = -s * pw * r * (delta * lg + 1.0);
        let bdq = a * pw * lg;
        let bll = -s * delta * pw * (delta * r * r + dr);
        let blq = a * delta * pw * r;
        let bqq = 0.0;
        let bsec = [
            [baa, bad, bal, baq],
            [bad, bdd, bdl, bdq],
            [bal, bdl, bll, blq],
            [baq, bdq, blq, bqq],
        ];
        let idx = [IA, ID, IL, IQ];
        for i in 0..4 {
            for j in 0..4 {
                let lbij = bsec[i][j] / b - lb[i] * lb[j];
                h[idx[i]][idx[j]] += c * lbij;
            }
        }
        // dc/dq = η/p², dc/dη = 1/p
        let cq = eta / (p * p);
        let ce = 1.0 / p;
        for i in 0..3 {
            h[idx[i]][IQ] += cq * lb[i];
            h[IQ][idx[i]] += cq * lb[i];
            h[ie][idx[i]] += ce * lb[i];
            h[idx[i]][ie] += ce * lb[i];
        }
        h[IQ][IQ] += 2.0 * cq * lb[3];
        h[ie][IQ] += ce * lb[3];
        h[IQ][ie] += ce * lb[3];
        h[IL][IL] += (delta - 1.0) * dr;
        h[ID][IL] += r;
        h[IL][ID] += r;
    }

    out.loglik += -lambda * sum_x + (delta - 1.0) * sum_lg + c * sum_lnb;
    if order == Order::Value {
        return true;
    }

    g[IA] += n / a;
    g[ID] += n / delta + sum_lg;
    g[IL] += n / lambda - sum_x;
    g[IQ] += -n / ep + eta / (p * p) * sum_lnb;
    g[ie] += n / ep + sum_lnb / p;
    for i in 0..6 {
        out.gradient[i] += g[i];
    }
    if order < Order::Hessian {
        return true;
    }

    h[IA][IA] -= n / (a * a);
    h[ID][ID] -= n / (delta * delta);
    h[IL][IL] -= n / (lambda * lambda);
    h[ie][ie] -= n / (ep * ep);
    h[ie][IQ] += n / (ep * ep) + sum_lnb / (p * p);
    h[IQ][ie] += n / (ep * ep) + sum_lnb / (p * p);
    h[IQ][IQ] += -n / (ep * ep) + 2.0 * eta / (p * p * p) * sum_lnb;
    for i in 0..6 {
        for j in 0..6 {
            out.hessian[(i, j)] += h[i][j];
        }
    }
    true
}
