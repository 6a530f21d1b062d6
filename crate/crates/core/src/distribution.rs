//! The type-1 pathway generated exponential (PGE-1) law.
//!
//! The law is the exponential base distribution `G(x) = 1 - exp(-λx)` pushed
//! through the `q < 1` branch of the pathway-generated family:
//!
//! ```text
//! F(x) = 1 - [1 - a(1-q) G(x)^δ]^(η/(1-q) + 1)
//! f(x) = (η+1-q) a δ λ e^(-λx) G(x)^(δ-1) [1 - a(1-q) G(x)^δ]^(η/(1-q))
//! ```
//!
//! Writing `s = a(1-q)`:
//!
//! * `s > 1` gives a right-truncated law with upper bound
//!   `x_max = -ln(1 - s^(-1/δ)) / λ`;
//! * `s = 1` gives unbounded support (with `δ = 1` this is the exponential
//!   law with rate `(aη+1)λ`);
//! * `0 < s < 1` leaves the bracket positive for every `x`, so the formulas
//!   define a defective law whose cdf tends to `1 - (1-s)^(η/(1-q)+1) < 1`.
//!   It is accepted because one of the standard simulation settings sits in
//!   this regime; sampling then draws from the law conditioned on `X < ∞`.
//!
//! Every power of the bracket is evaluated as `exp(c · ln_1p(-s·G^δ))`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Values of `a(1-q)` within this distance of 1 are snapped to the boundary.
const BOUNDARY_SNAP: f64 = 1e-12;

/// Default mgf truncation length.
pub const MGF_DEFAULT_TERMS: usize = 100;
/// Largest accepted ratio of the final mgf term to the partial sum.
pub const MGF_TOLERANCE: f64 = 1e-10;

/// Parameters `(a, δ, λ, η, q)` of one PGE-1 law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pge1Params {
    a: f64,
    delta: f64,
    lambda: f64,
    eta: f64,
    q: f64,
}

/// How the support of a law ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportKind {
    /// `a(1-q) > 1`: finite upper bound, `cdf(upper) = 1`.
    Bounded,
    /// `a(1-q) = 1`: unbounded, proper.
    Unbounded,
    /// `a(1-q) < 1`: unbounded, total mass below one.
    Defective,
}

/// Upper end of the support; `upper` is `+∞` unless the law is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportBound {
    pub upper: f64,
}

impl SupportBound {
    pub fn is_finite(&self) -> bool {
        self.upper.is_finite()
    }
}

/// Partial sum of the mgf series together with its truncation diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgfSeries {
    pub value: f64,
    /// Magnitude of the first omitted term relative to the partial sum.
    pub last_term: f64,
    pub terms: usize,
}

/// Building blocks shared by the density, distribution and derivative code.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Kernel {
    /// `-λx`
    pub neg_lx: f64,
    /// `ln(1 - e^(-λx))`
    pub ln_g: f64,
    /// `ln(1 - s·G^δ)`, `-∞` at or beyond the support bound
    pub ln_bracket: f64,
}

impl Pge1Params {
    pub fn new(a: f64, delta: f64, lambda: f64, eta: f64, q: f64) -> Result<Self> {
        let all_finite = [a, delta, lambda, eta, q].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidParameters(format!(
                "non-finite parameter in (a={a}, delta={delta}, lambda={lambda}, eta={eta}, q={q})"
            )));
        }
        if a <= 0.0 || delta <= 0.0 || lambda <= 0.0 || eta <= 0.0 {
            return Err(Error::InvalidParameters(format!(
                "a, delta, lambda, eta must be positive (a={a}, delta={delta}, lambda={lambda}, eta={eta})"
            )));
        }
        if q >= 1.0 {
            return Err(Error::InvalidParameters(format!(
                "q must be below 1, got {q}"
            )));
        }
        Ok(Self {
            a,
            delta,
            lambda,
            eta,
            q,
        })
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
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn q(&self) -> f64 {
        self.q
    }

    /// `a(1-q)`, snapped to exactly 1 when within rounding of the boundary.
    pub fn scale_product(&self) -> f64 {
        scale_product(self.a, self.q)
    }

    /// Bracket exponent `η/(1-q)`.
    fn bracket_power(&self) -> f64 {
        self.eta / (1.0 - self.q)
    }

    pub fn support_kind(&self) -> SupportKind {
        let s = self.scale_product();
        if s > 1.0 {
            SupportKind::Bounded
        } else if s == 1.0 {
            SupportKind::Unbounded
        } else {
            SupportKind::Defective
        }
    }

    pub fn support_bound(&self) -> SupportBound {
        SupportBound {
            upper: support_upper(self.scale_product(), self.delta, self.lambda),
        }
    }

    /// Total probability mass; below one only for defective laws.
    pub fn total_mass(&self) -> f64 {
        let s = self.scale_product();
        if s >= 1.0 {
            1.0
        } else {
            -((self.bracket_power() + 1.0) * (-s).ln_1p()).exp_m1()
        }
    }

    pub(crate) fn kernel(&self, x: f64) -> Kernel {
        let neg_lx = -self.lambda * x;
        let ln_g = ln_one_minus_exp(neg_lx);
        let ln_load = self.scale_product().ln() + self.delta * ln_g;
        let ln_bracket = if ln_load >= 0.0 {
            f64::NEG_INFINITY
        } else {
            ln_one_minus_exp(ln_load)
        };
        Kernel {
            neg_lx,
            ln_g,
            ln_bracket,
        }
    }

    /// Log density at a point strictly inside `(0, x_max)`.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x.is_nan() || x < 0.0 || x >= self.support_bound().upper {
            return f64::NEG_INFINITY;
        }
        if x == 0.0 {
            return self.ln_pdf_at_zero();
        }
        let k = self.kernel(x);
        if k.ln_bracket == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let p = 1.0 - self.q;
        (self.eta + p).ln()
            + self.a.ln()
            + self.delta.ln()
            + self.lambda.ln()
            + k.neg_lx
            + (self.delta - 1.0) * k.ln_g
            + self.bracket_power() * k.ln_bracket
    }

    fn ln_pdf_at_zero(&self) -> f64 {
        if self.delta < 1.0 {
            f64::INFINITY
        } else if self.delta > 1.0 {
            f64::NEG_INFINITY
        } else {
            let p = 1.0 - self.q;
            (self.eta + p).ln() + self.a.ln() + self.lambda.ln()
        }
    }

    /// Density; zero outside `[0, x_max)`, `+∞` at zero when `δ < 1`.
    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= 0.0 {
            return 0.0;
        }
        if x >= self.support_bound().upper {
            return 1.0;
        }
        let k = self.kernel(x);
        -((self.bracket_power() + 1.0) * k.ln_bracket).exp_m1()
    }

    pub fn survival(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= 0.0 {
            return 1.0;
        }
        if x >= self.support_bound().upper {
            return 0.0;
        }
        let k = self.kernel(x);
        ((self.bracket_power() + 1.0) * k.ln_bracket).exp()
    }

    /// Hazard rate `f/S` in its cancelled form, valid on `[0, x_max)`.
    pub fn hazard(&self, x: f64) -> Result<f64> {
        let upper = self.support_bound().upper;
        if !(x >= 0.0 && x < upper) {
            return Err(Error::OutOfSupport { x, upper });
        }
        let p = 1.0 - self.q;
        let lead = (self.eta + p).ln() + self.a.ln() + self.delta.ln() + self.lambda.ln();
        if x == 0.0 {
            return Ok(match self.delta {
                d if d < 1.0 => f64::INFINITY,
                d if d > 1.0 => 0.0,
                _ => lead.exp(),
            });
        }
        let k = self.kernel(x);
        if k.ln_bracket == f64::NEG_INFINITY {
            return Err(Error::OutOfSupport { x, upper });
        }
        Ok((lead + k.neg_lx + (self.delta - 1.0) * k.ln_g - k.ln_bracket).exp())
    }

    /// Analytic inverse of the cdf for `u ∈ (0, total_mass)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!(
                "quantile level must lie in (0, 1), got {u}"
            )));
        }
        let p = 1.0 - self.q;
        let k = p / (self.eta + p);
        let used = -(k * (-u).ln_1p()).exp_m1();
        let w = (used / self.scale_product()).powf(1.0 / self.delta);
        if w >= 1.0 {
            return Err(Error::Domain(format!(
                "level {u} exceeds the total mass {} of this defective law",
                self.total_mass()
            )));
        }
        Ok(-(-w).ln_1p() / self.lambda)
    }

    /// `n` i.i.d. draws by inverse-transform sampling.
    ///
    /// Draws always lie in `(0, x_max)`; for defective laws they follow the
    /// law conditioned on a finite outcome.
    pub fn sample(&self, n: usize, rng: &mut SeededRng) -> Vec<f64> {
        let mass = self.total_mass();
        let upper = self.support_bound().upper;
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let u = mass * rng.open_unit();
            if let Ok(x) = self.quantile(u) {
                if x > 0.0 && x < upper {
                    out.push(x);
                }
            }
        }
        out
    }

    /// Moment generating function by its Pochhammer/beta series.
    ///
    /// ```text
    /// M(t) = (η+1-q)/(1-q) · Σ_k (t/λ)_k / k! · s^(-k/δ) · B(k/δ + 1, η/(1-q) + 1)
    /// ```
    ///
    /// The series needs `a(1-q) ≥ 1`. It converges geometrically when the
    /// support is bounded and only algebraically at the boundary `s = 1`.
    pub fn mgf(&self, t: f64, terms: usize) -> Result<MgfSeries> {
        let s = self.scale_product();
        if s < 1.0 {
            return Err(Error::InvalidParameters(
                "mgf series requires a(1-q) >= 1".to_string(),
            ));
        }
        if terms == 0 {
            return Err(Error::Config("mgf needs at least one term".to_string()));
        }
        let c = self.bracket_power();
        let b = t / self.lambda;
        let ln_s = s.ln();
        let ln_gamma_c1 = ln_gamma(c + 1.0);
        let mut coef = 1.0;
        let mut sum = 0.0;
        for k in 0..terms {
            let e = k as f64 / self.delta;
            let ln_beta = ln_gamma(e + 1.0) + ln_gamma_c1 - ln_gamma(e + c + 2.0);
            sum += coef * (ln_beta - e * ln_s).exp();
            coef *= (b + k as f64) / (k as f64 + 1.0);
        }
        // magnitude of the first omitted term
        let e = terms as f64 / self.delta;
        let next =
            coef * (ln_gamma(e + 1.0) + ln_gamma_c1 - ln_gamma(e + c + 2.0) - e * ln_s).exp();
        let value = (c + 1.0) * sum;
        let last_term = ((c + 1.0) * next / value).abs();
        if !value.is_finite() || last_term > MGF_TOLERANCE {
            return Err(Error::SeriesNonConvergence { terms, last_term });
        }
        Ok(MgfSeries {
            value,
            last_term,
            terms,
        })
    }

    /// Mean of the law (conditioned on `X < ∞` for defective laws), by
    /// composite Simpson integration of the survival function.
    pub fn mean(&self) -> f64 {
        let mass = self.total_mass();
        let tail = 1.0 - mass;
        let upper = match self.support_kind() {
            SupportKind::Bounded => self.support_bound().upper,
            _ => match self.quantile(mass * (1.0 - 1e-12)) {
                Ok(x) => x,
                Err(_) => return f64::NAN,
            },
        };
        let intervals = 2000;
        let h = upper / intervals as f64;
        let mut acc = 0.0;
        for i in 0..=intervals {
            let x = i as f64 * h;
            let w = if i == 0 || i == intervals {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * (self.survival(x) - tail);
        }
        acc * h / 3.0 / mass
    }
}

/// `ln(1 - e^l)` for `l ≤ 0`, accurate at both ends.
pub(crate) fn ln_one_minus_exp(l: f64) -> f64 {
    if l < -std::f64::consts::LN_2 {
        (-l.exp()).ln_1p()
    } else {
        (-l.exp_m1()).ln()
    }
}

pub(crate) fn scale_product(a: f64, q: f64) -> f64 {
    let s = a * (1.0 - q);
    if (s - 1.0).abs() <= BOUNDARY_SNAP {
        1.0
    } else {
        s
    }
}

pub(crate) fn support_upper(s: f64, delta: f64, lambda: f64) -> f64 {
    if s > 1.0 {
        -(-(s.powf(-1.0 / delta))).ln_1p() / lambda
    } else {
        f64::INFINITY
    }
}
