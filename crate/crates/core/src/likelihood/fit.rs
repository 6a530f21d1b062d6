//! Maximum-likelihood fitting by safeguarded Newton ascent in unconstrained
//! coordinates, with deterministic multi-start.

use nalgebra::{DMatrix, DVector, Matrix6, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::transform::Layout;
use super::{check_observations, evaluate, FixedMask, Order, Param, SsModel, TwoSample};
use crate::distribution::{ln_one_minus_exp, scale_product, support_upper, Pge1Params};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Largest coordinate change allowed in one Newton step.
const MAX_STEP: f64 = 5.0;
/// Condition number above which the information matrix is pseudo-inverted.
const MAX_CONDITION: f64 = 1e12;
/// Restart results within this log-likelihood distance count as ties.
const TIE_TOLERANCE: f64 = 1e-9;
/// Consecutive negligible-improvement steps that end a start.
const STALL_STEPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Max-norm of the gradient in unconstrained coordinates.
    pub grad_tol: f64,
    /// Relative log-likelihood change treated as no progress.
    pub stall_tol: f64,
    pub max_iter: usize,
    /// Perturbed starts in addition to the initial point.
    pub restarts: usize,
    /// Seed for the restart perturbations.
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            stall_tol: 1e-10,
            max_iter: 500,
            restarts: 10,
            seed: 0,
        }
    }
}

impl FitOptions {
    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }
}

/// Output of [`fit_mle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimates: SsModel,
    pub loglik: f64,
    /// Gradient max-norm in unconstrained coordinates at the estimate.
    pub score_norm: f64,
    /// `-∇²ℓ` over all six canonical coordinates.
    #[serde(with = "matrix_rows")]
    pub observed_info: Matrix6<f64>,
    /// Covariance of the free coordinates, embedded in canonical order;
    /// equals the inverse of `observed_info` when nothing is fixed and the
    /// information is nonsingular.
    #[serde(with = "matrix_rows")]
    pub info_inverse: Matrix6<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub restarts_used: usize,
    /// Index of the start that produced the estimate (0 = initial point).
    pub best_start: usize,
    /// The free-coordinate information was pseudo-inverted.
    pub singular_info: bool,
    pub mask: FixedMask,
    pub n1: usize,
    pub n2: usize,
}

impl FitResult {
    /// Standard errors from the diagonal of `info_inverse`.
    pub fn std_errors(&self) -> [f64; 6] {
        let mut se = [0.0; 6];
        for (i, v) in se.iter_mut().enumerate() {
            *v = self.info_inverse[(i, i)].max(0.0).sqrt();
        }
        se
    }
}

/// Maximizes the two-sample log-likelihood over the parameters left free by
/// `mask`.
///
/// Without `init` the start is a data-driven heuristic: `λ = 1/mean`, `δ = 1`,
/// `q = 1/2`, `a` placing the support bound at 1.5 × the largest observation,
/// and each `η` at its conditional maximizer given the rest.
pub fn fit_mle(
    d: &TwoSample,
    mask: &FixedMask,
    init: Option<&SsModel>,
    opts: &FitOptions,
) -> Result<FitResult> {
    fit_slices(d.x(), d.y(), mask, init.map(|m| m.to_array()), opts)
}

/// Fits one PGE-1 law to a single sample.
pub fn fit_law(
    sample: &[f64],
    mask: &FixedMask,
    init: Option<&Pge1Params>,
    opts: &FitOptions,
) -> Result<(Pge1Params, FitResult)> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    check_observations(sample)?;
    let mut mask = *mask;
    mask.eta2 = Some(1.0);
    let init = init.map(|p| [p.a(), p.delta(), p.eta(), 1.0, p.lambda(), p.q()]);
    let fit = fit_slices(sample, &[], &mask, init, opts)?;
    Ok((fit.estimates.strength_law(), fit))
}

fn fit_slices(
    x: &[f64],
    y: &[f64],
    mask: &FixedMask,
    init: Option<[f64; 6]>,
    opts: &FitOptions,
) -> Result<FitResult> {
    mask.validate()?;
    let theta0 = match init {
        Some(mut t) => {
            mask.apply(&mut t);
            project_into_domain(&mut t, mask, x, y);
            t
        }
        None => heuristic_start(x, y, mask)?,
    };
    let layout = Layout::new(mask, &theta0);
    let null = layout.null_direction();
    let problem = Problem { layout, null, x, y };
    let z0 = problem.layout.unconstrained(&theta0).ok_or_else(|| {
        Error::InfeasibleInit(format!("start {theta0:?} outside the parameter space"))
    })?;
    if !problem.value(&z0).is_finite() {
        return Err(Error::InfeasibleInit(format!(
            "log-likelihood is not finite at the start {theta0:?}"
        )));
    }

    let starts = start_points(&problem, &z0, opts);
    let outcomes: Vec<Start> = starts
        .par_iter()
        .map(|z| problem.ascend(z.clone(), opts))
        .collect();

    let mut best: Option<(usize, &Start)> = None;
    for (i, s) in outcomes.iter().enumerate() {
        if !s.converged {
            continue;
        }
        match best {
            Some((_, b)) if s.loglik <= b.loglik + TIE_TOLERANCE => {}
            _ => best = Some((i, s)),
        }
    }
    let Some((best_start, winner)) = best else {
        let best_score_norm = outcomes
            .iter()
            .map(|s| s.grad_norm)
            .fold(f64::INFINITY, f64::min);
        return Err(Error::NoConvergence {
            starts: outcomes.len(),
            best_score_norm,
        });
    };

    let theta = problem.layout.natural(&winner.z);
    let estimates = SsModel::from_array(theta)?;
    let eval = evaluate(&theta, x, y, Order::Hessian);
    let observed_info = -eval.hessian;
    let jac = problem.layout.jacobian(&winner.z);
    let (info_inverse, singular_info) =
        embedded_covariance(&observed_info, &jac, problem.null.as_ref());

    Ok(FitResult {
        estimates,
        loglik: eval.loglik,
        score_norm: winner.grad_norm,
        observed_info,
        info_inverse,
        converged: true,
        iterations: winner.iterations,
        restarts_used: outcomes.len() - 1,
        best_start,
        singular_info,
        mask: *mask,
        n1: x.len(),
        n2: y.len(),
    })
}

/// `J (Jᵀ I J)⁻¹ Jᵀ`, pseudo-inverting when the reduced matrix is
/// ill-conditioned or has a known flat direction.
fn embedded_covariance(
    info: &Matrix6<f64>,
    jac: &DMatrix<f64>,
    null: Option<&DVector<f64>>,
) -> (Matrix6<f64>, bool) {
    let k = jac.ncols();
    if k == 0 {
        return (Matrix6::zeros(), false);
    }
    let info = DMatrix::from_column_slice(6, 6, info.as_slice());
    let mut reduced = jac.transpose() * info * jac;
    if let Some(v) = null {
        let proj = DMatrix::identity(k, k) - v * v.transpose();
        reduced = &proj * reduced * &proj;
    }
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = SymmetricEigen::new(reduced);
    let largest = eig.eigenvalues.amax();
    let cutoff = largest / MAX_CONDITION;
    let mut singular = !(largest > 0.0) || null.is_some();
    let mut inv_values = eig.eigenvalues.clone();
    for (i, v) in eig.eigenvalues.iter().enumerate() {
        let along_null = null.is_some_and(|n| eig.eigenvectors.column(i).dot(n).abs() > 0.5);
        if along_null || v.abs() <= cutoff {
            singular = true;
            inv_values[i] = 0.0;
        } else {
            inv_values[i] = 1.0 / v;
        }
    }
    let inv =
        &eig.eigenvectors * DMatrix::from_diagonal(&inv_values) * eig.eigenvectors.transpose();
    let cov = jac * inv * jac.transpose();
    let mut out = Matrix6::zeros();
    for i in 0..6 {
        for j in 0..6 {
            out[(i, j)] = 0.5 * (cov[(i, j)] + cov[(j, i)]);
        }
    }
    (out, singular)
}

struct Problem<'a> {
    layout: Layout,
    null: Option<DVector<f64>>,
    x: &'a [f64],
    y: &'a [f64],
}

#[derive(Debug, Clone)]
struct Start {
    z: Vec<f64>,
    loglik: f64,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
}

impl Problem<'_> {
    fn value(&self, z: &[f64]) -> f64 {
        let theta = self.layout.natural(z);
        evaluate(&theta, self.x, self.y, Order::Value).loglik
    }

    fn derivatives(&self, z: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let theta = self.layout.natural(z);
        let e = evaluate(&theta, self.x, self.y, Order::Hessian);
        let (g, h) = self.layout.pull_back(z, &e.gradient, &e.hessian);
        (e.loglik, g, h)
    }

    fn ascend(&self, z0: Vec<f64>, opts: &FitOptions) -> Start {
        let k = self.layout.dim();
        let mut z = DVector::from_vec(z0);
        if k == 0 {
            let loglik = self.value(z.as_slice());
            return Start {
                z: Vec::new(),
                loglik,
                grad_norm: 0.0,
                iterations: 0,
                converged: loglik.is_finite(),
            };
        }
        let mut iterations = 0;
        let mut stalled = 0;
        loop {
            let (loglik, g, h) = self.derivatives(z.as_slice());
            let grad_norm = g.amax();
            let done = iterations;
            let finish = |z: &DVector<f64>, converged: bool| Start {
                z: z.as_slice().to_vec(),
                loglik,
                grad_norm,
                iterations: done,
                converged,
            };
            if !loglik.is_finite() || !grad_norm.is_finite() {
                return finish(&z, false);
            }
            if grad_norm < opts.grad_tol {
                return finish(&z, true);
            }
            if iterations >= opts.max_iter || stalled >= STALL_STEPS {
                return finish(&z, false);
            }
            iterations += 1;

            let (a, g_step) = match &self.null {
                Some(v) => {
                    let k = v.len();
                    let proj = DMatrix::identity(k, k) - v * v.transpose();
                    let a = -(&proj * &h * &proj);
                    let scale = a.diagonal().amax().max(1.0);
                    (a + v * v.transpose() * scale, &proj * &g)
                }
                None => (-&h, g.clone()),
            };
            let (newton, damped) = newton_direction(&a, &g_step);
            let gnorm = g_step.norm();
            let step = newton
                .and_then(|d| self.line_search(&z, loglik, &g, d, !damped))
                .or_else(|| self.line_search(&z, loglik, &g, g_step.clone() / gnorm, false));
            let Some((z_new, ll_new)) = step else {
                return finish(&z, false);
            };
            let change = (ll_new - loglik).abs() / loglik.abs().max(1.0);
            stalled = if change < opts.stall_tol {
                stalled + 1
            } else {
                0
            };
            z = z_new;
        }
    }

    /// Backtracking search along `d`; a full undamped Newton step is also
    /// accepted when it changes `ℓ` only at rounding level.
    fn line_search(
        &self,
        z: &DVector<f64>,
        loglik: f64,
        g: &DVector<f64>,
        mut d: DVector<f64>,
        pure_newton: bool,
    ) -> Option<(DVector<f64>, f64)> {
        let big = d.amax();
        if !big.is_finite() {
            return None;
        }
        if big > MAX_STEP {
            d *= MAX_STEP / big;
        }
        let slope = g.dot(&d);
        if !(slope > 0.0) {
            return None;
        }
        let rounding = 1e-12 * loglik.abs().max(1.0);
        let mut t = 1.0;
        for attempt in 0..60 {
            let cand = z + &d * t;
            let ll = self.value(cand.as_slice());
            if ll.is_finite() {
                if ll >= loglik + 1e-4 * t * slope {
                    return Some((cand, ll));
                }
                if attempt == 0 && pure_newton && ll >= loglik - rounding {
                    return Some((cand, ll));
                }
            }
            t *= 0.5;
        }
        None
    }
}

/// Solves `(A + μI) d = g`, raising `μ` until `A + μI` is positive definite.
fn newton_direction(a: &DMatrix<f64>, g: &DVector<f64>) -> (Option<DVector<f64>>, bool) {
    let k = a.nrows();
    if let Some(ch) = a.clone().cholesky() {
        return (Some(ch.solve(g)), false);
    }
    let scale = a.diagonal().amax().max(1.0);
    let mut mu = 1e-8 * scale;
    for _ in 0..30 {
        let shifted = a + DMatrix::identity(k, k) * mu;
        if let Some(ch) = shifted.cholesky() {
            return (Some(ch.solve(g)), true);
        }
        mu *= 10.0;
    }
    (None, true)
}

fn start_points(problem: &Problem<'_>, z0: &[f64], opts: &FitOptions) -> Vec<Vec<f64>> {
    let mut starts = vec![z0.to_vec()];
    if problem.layout.dim() == 0 {
        return starts;
    }
    for r in 1..=opts.restarts {
        let mut rng = SeededRng::new(opts.seed, r as u64);
        for _ in 0..20 {
            let z: Vec<f64> = z0.iter().map(|&v| v + rng.uniform(0.5, 2.0).ln()).collect();
            if problem.value(&z).is_finite() {
                starts.push(z);
                break;
            }
        }
    }
    starts
}

/// `a(1-q)` that puts the support bound at `target` for given `δ, λ`.
fn scale_for_bound(delta: f64, lambda: f64, target: f64) -> f64 {
    (-(-lambda * target).exp_m1()).powf(-delta)
}

fn heuristic_start(x: &[f64], y: &[f64], mask: &FixedMask) -> Result<[f64; 6]> {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
    let max = pooled.iter().copied().fold(0.0, f64::max);
    let lambda = mask.lambda.unwrap_or(1.0 / mean);
    let delta = mask.delta.unwrap_or(1.0);
    let mut theta = [1.0, delta, 1.0, 1.0, lambda, 0.5];
    let s0 = scale_for_bound(delta, lambda, 1.5 * max);
    match (mask.a, mask.q, mask.boundary) {
        (_, _, true) => theta[Param::Q.index()] = mask.q.unwrap_or(0.5),
        (None, None, false) => theta[Param::A.index()] = s0 / 0.5,
        (Some(a), None, false) => {
            theta[Param::A.index()] = a;
            theta[Param::Q.index()] = 1.0 - s0 / a;
        }
        (None, Some(q), false) => {
            theta[Param::Q.index()] = q;
            theta[Param::A.index()] = s0 / (1.0 - q);
        }
        (Some(_), Some(_), false) => {}
    }
    mask.apply(&mut theta);

    let (a, q) = (theta[Param::A.index()], theta[Param::Q.index()]);
    let s = crate::distribution::scale_product(a, q);
    if support_upper(s, theta[1], theta[4]) <= max {
        if mask.lambda.is_none() && s > 1.0 {
            theta[4] = -(-(s.powf(-1.0 / theta[1]))).ln_1p() / (1.5 * max);
        } else {
            return Err(Error::InfeasibleInit(format!(
                "support bound {} of the start is below the largest observation {max}",
                support_upper(s, theta[1], theta[4])
            )));
        }
    }
    for (sample, p) in [(x, Param::Eta1), (y, Param::Eta2)] {
        if mask.get(p).is_none() && !sample.is_empty() {
            theta[p.index()] = conditional_eta(sample, &theta).unwrap_or(1.0);
        }
    }
    Ok(theta)
}

/// Maximizer of `ℓ` in one `η` with `(a, δ, λ, q)` held at `theta`.
fn conditional_eta(sample: &[f64], theta: &[f64; 6]) -> Option<f64> {
    let [a, delta, _, _, lambda, q] = *theta;
    let p = 1.0 - q;
    let ln_s = scale_product(a, q).ln();
    let mut sum = 0.0;
    for &x in sample {
        let ln_load = ln_s + delta * ln_one_minus_exp(-lambda * x);
        if !(ln_load < 0.0) {
            return None;
        }
        sum += ln_one_minus_exp(ln_load);
    }
    if !(sum < 0.0) {
        return None;
    }
    let eta = -(sample.len() as f64) * p / sum - p;
    Some(eta.max(0.05))
}

/// Moves a user-supplied start into the region the coordinates can reach.
fn project_into_domain(theta: &mut [f64; 6], mask: &FixedMask, x: &[f64], y: &[f64]) {
    if mask.boundary {
        return;
    }
    let (ia, iq) = (Param::A.index(), Param::Q.index());
    let s = theta[ia] * (1.0 - theta[iq]);
    if s > 1.0 || (mask.a.is_some() && mask.q.is_some()) {
        return;
    }
    let max = x.iter().chain(y).copied().fold(0.0, f64::max);
    let target = scale_for_bound(theta[1], theta[4], 1.5 * max).max(1.0 + 1e-3);
    if mask.a.is_some() {
        theta[iq] = 1.0 - target / theta[ia];
    } else {
        theta[ia] = target / (1.0 - theta[iq]);
    }
}

mod matrix_rows {
    use nalgebra::Matrix6;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix6<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<[f64; 6]> = (0..6)
            .map(|i| {
                let mut r = [0.0; 6];
                for (j, v) in r.iter_mut().enumerate() {
                    *v = m[(i, j)];
                }
                r
            })
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix6<f64>, D::Error> {
        let rows: Vec<[f64; 6]> = Vec::deserialize(d)?;
        if rows.len() != 6 {
            return Err(serde::de::Error::custom("expected 6 rows"));
        }
        Ok(Matrix6::from_fn(|i, j| rows[i][j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_model(m: &SsModel, n: usize, seed: u64) -> TwoSample {
        let mut rng = SeededRng::new(seed, 0);
        TwoSample::new(
            m.strength_law().sample(n, &mut rng),
            m.stress_law().sample(n, &mut rng),
        )
        .unwrap()
    }

    #[test]
    fn fully_fixed_mask_evaluates_only() {
        let m = SsModel::new(4.0, 1.0, 1.5, 10.0, 1.0, 0.2).unwrap();
        let d = sample_model(&m, 20, 3);
        let mut mask = FixedMask::shared_from(&m);
        mask.eta1 = Some(10.0);
        mask.eta2 = Some(1.0);
        let fit = fit_mle(&d, &mask, None, &FitOptions::default()).unwrap();
        assert_eq!(fit.estimates, m);
        assert_eq!(fit.info_inverse, Matrix6::zeros());
        assert_eq!(fit.iterations, 0);
    }

    #[test]
    fn conditional_eta_is_stationary() {
        let m = SsModel::new(4.0, 1.0, 1.5, 10.0, 1.0, 0.2).unwrap();
        let d = sample_model(&m, 50, 5);
        let fit = fit_mle(
            &d,
            &FixedMask::shared_from(&m),
            None,
            &FitOptions::default(),
        )
        .unwrap();
        assert!(fit.converged);
        assert!(fit.score_norm < 1e-6);
    }

    #[test]
    fn infeasible_start_is_reported() {
        let m = SsModel::new(4.0, 1.0, 1.5, 10.0, 1.0, 0.2).unwrap();
        let upper = m.support_upper();
        let d = TwoSample::new(vec![0.2, 1.2 * upper], vec![0.1]).unwrap();
        let r = fit_mle(
            &d,
            &FixedMask::shared_from(&m),
            None,
            &FitOptions::default(),
        );
        assert!(matches!(r, Err(Error::InfeasibleInit(_))));
    }

    #[test]
    fn one_sample_fit_recovers_eta() {
        let law = Pge1Params::new(4.0, 1.0, 1.5, 3.0, 0.2).unwrap();
        let mut rng = SeededRng::new(11, 0);
        let xs = law.sample(4000, &mut rng);
        let mask = FixedMask {
            a: Some(4.0),
            delta: Some(1.0),
            lambda: Some(1.5),
            q: Some(0.2),
            ..FixedMask::free()
        };
        let (fitted, _) = fit_law(&xs, &mask, None, &FitOptions::default()).unwrap();
        assert!((fitted.eta() - 3.0).abs() < 0.3);
    }
}
