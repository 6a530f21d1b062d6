//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use pge1::{Pge1Params, SeededRng, SsModel};

/// Tanh-sinh quadrature on `[a, b]`, refining the step until two levels
/// agree to `tol`. Endpoint singularities are tolerated; the endpoints
/// themselves are never evaluated.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let c = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let node = |t: f64| -> (f64, f64, f64) {
        // returns (left point, right point, weight) for ±t
        let u = FRAC_PI_2 * t.sinh();
        let e = (-2.0 * u).exp();
        let gap = 2.0 * e / (1.0 + e); // 1 - tanh(u), without cancellation
        let w = c * FRAC_PI_2 * t.cosh() * 4.0 * e / ((1.0 + e) * (1.0 + e));
        (a + c * gap, b - c * gap, w)
    };
    let eval = |x: f64| -> f64 {
        if x <= a || x >= b {
            return 0.0;
        }
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let mut h = 1.0;
    let mut sum = eval(mid) * c * FRAC_PI_2;
    let tail = |h: f64, start: usize, stride: usize| -> f64 {
        let mut s = 0.0;
        let mut k = start;
        loop {
            let t = k as f64 * h;
            let (xl, xr, w) = node(t);
            if w < 1e-300 || t > 6.5 {
                break;
            }
            s += w * (eval(xl) + eval(xr));
            k += stride;
        }
        s
    };
    sum += tail(h, 1, 1);
    let mut est = sum * h;
    for _ in 0..12 {
        h *= 0.5;
        sum += tail(h, 1, 2);
        let next = sum * h;
        if (next - est).abs() <= tol * next.abs().max(1.0) {
            return next;
        }
        est = next;
    }
    est
}

/// `∫_a^∞ f` through `x = a + t/(1-t)`.
pub fn integrate_to_inf(f: impl Fn(f64) -> f64, a: f64, tol: f64) -> f64 {
    integrate(
        |t| {
            let one = 1.0 - t;
            f(a + t / one) / (one * one)
        },
        0.0,
        1.0,
        tol,
    )
}

/// `∫ f` over the support of `p`.
pub fn over_support(p: &Pge1Params, f: impl Fn(f64) -> f64, tol: f64) -> f64 {
    let upper = p.support_bound().upper;
    if upper.is_finite() {
        integrate(f, 0.0, upper, tol)
    } else {
        integrate_to_inf(f, 0.0, tol)
    }
}

/// Root of an increasing `f` on `[lo, hi]` by bisection.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < tol {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Central difference of `f` at `x` with step `h`.
pub fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Parameters with a finite support bound drawn over moderate ranges.
pub fn random_params(rng: &mut SeededRng) -> Pge1Params {
    let s = rng.uniform(1.05, 6.0);
    let q = rng.uniform(-1.0, 0.9);
    let a = s / (1.0 - q);
    Pge1Params::new(
        a,
        rng.uniform(0.5, 3.0),
        rng.uniform(0.2, 3.0),
        rng.uniform(0.2, 10.0),
        q,
    )
    .unwrap()
}

/// A two-sample model with shared random `(a, δ, λ, q)`.
pub fn random_model(rng: &mut SeededRng) -> SsModel {
    let p = random_params(rng);
    SsModel::new(
        p.a(),
        p.delta(),
        p.lambda(),
        p.eta(),
        rng.uniform(0.2, 10.0),
        p.q(),
    )
    .unwrap()
}

/// `P(X > Y) = ∫ f_X(x) ∫_0^x f_Y(y) dy dx` by nested quadrature.
pub fn reliability_by_quadrature(m: &SsModel) -> f64 {
    let fx = m.strength_law();
    let fy = m.stress_law();
    let upper = m.support_upper();
    let inner = |x: f64| integrate(|y| fy.pdf(y), 0.0, x, 1e-11);
    if upper.is_finite() {
        integrate(|x| fx.pdf(x) * inner(x), 0.0, upper, 1e-10)
    } else {
        integrate_to_inf(|x| fx.pdf(x) * inner(x), 0.0, 1e-10)
    }
}

/// Kolmogorov-Smirnov distance of a sample from a cdf.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}
