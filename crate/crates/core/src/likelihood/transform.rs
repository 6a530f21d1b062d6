//! Unconstrained coordinates for the optimizer.
//!
//! `δ, λ, η1, η2` enter as logarithms. The pair `(a, q)` is carried through
//! `s = a(1-q)` and `1-q`: `s = 1 + e^σ` keeps the support bound of the law
//! well defined, `1-q = e^ρ` keeps `q < 1`. Under the boundary mask `s = 1`
//! and only `ρ` remains.

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};

use super::{FixedMask, Param};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Coord {
    /// `θ[i] = exp(z)`
    Log(usize),
    /// `a = s/(1-q)` with `s = 1 + e^σ` and `1-q = e^ρ`; holds `σ`
    Excess,
    /// holds `ρ` of the pair above
    Complement,
    /// `a` fixed: `1-q = (1 + e^σ)/a`
    ExcessFixedA,
    /// `q` fixed: `a = (1 + e^σ)/(1-q)`
    ExcessFixedQ,
    /// boundary: `1-q = e^ρ`, `a = e^-ρ`
    BoundaryComplement,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    base: [f64; 6],
    coords: Vec<Coord>,
}

impl Layout {
    /// `base` supplies the fixed coordinates; free entries are ignored.
    pub fn new(mask: &FixedMask, base: &[f64; 6]) -> Self {
        let mut fixed = *base;
        mask.apply(&mut fixed);
        let mut coords = Vec::new();
        let a_free = mask.a.is_none();
        let q_free = mask.q.is_none();
        match (a_free, q_free, mask.boundary) {
            (true, true, false) => {
                coords.push(Coord::Excess);
                coords.push(Coord::Complement);
            }
            (false, true, false) => coords.push(Coord::ExcessFixedA),
            (true, false, false) => coords.push(Coord::ExcessFixedQ),
            (true, true, true) => coords.push(Coord::BoundaryComplement),
            _ => {}
        }
        for p in [Param::Delta, Param::Eta1, Param::Eta2, Param::Lambda] {
            if mask.is_free(p) {
                coords.push(Coord::Log(p.index()));
            }
        }
        Self {
            base: fixed,
            coords,
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Canonical-order parameters at `z`.
    pub fn natural(&self, z: &[f64]) -> [f64; 6] {
        let mut t = self.base;
        let (ia, iq) = (Param::A.index(), Param::Q.index());
        let sigma = self.find(Coord::Excess).map(|i| z[i]);
        let rho = self.find(Coord::Complement).map(|i| z[i]);
        for (k, c) in self.coords.iter().enumerate() {
            match *c {
                Coord::Log(i) => t[i] = z[k].exp(),
                Coord::ExcessFixedA => t[iq] = 1.0 - (1.0 + z[k].exp()) / t[ia],
                Coord::ExcessFixedQ => t[ia] = (1.0 + z[k].exp()) / (1.0 - t[iq]),
                Coord::BoundaryComplement => {
                    t[iq] = 1.0 - z[k].exp();
                    t[ia] = (-z[k]).exp();
                }
                Coord::Excess | Coord::Complement => {}
            }
        }
        if let (Some(sg), Some(rh)) = (sigma, rho) {
            t[iq] = 1.0 - rh.exp();
            t[ia] = (1.0 + sg.exp()) * (-rh).exp();
        }
        t
    }

    /// Inverse of [`Layout::natural`]; `None` when `theta` lies outside the
    /// region the coordinates can reach.
    pub fn unconstrained(&self, theta: &[f64; 6]) -> Option<Vec<f64>> {
        let (a, q) = (theta[Param::A.index()], theta[Param::Q.index()]);
        let p = 1.0 - q;
        let s = a * p;
        let mut z = Vec::with_capacity(self.dim());
        for c in &self.coords {
            let v = match *c {
                Coord::Log(i) => theta[i].ln(),
                Coord::Excess | Coord::ExcessFixedA | Coord::ExcessFixedQ => (s - 1.0).ln(),
                Coord::Complement | Coord::BoundaryComplement => p.ln(),
            };
            if !v.is_finite() {
                return None;
            }
            z.push(v);
        }
        Some(z)
    }

    /// Jacobian `∂θ/∂z` (6 × k).
    pub fn jacobian(&self, z: &[f64]) -> DMatrix<f64> {
        let t = self.natural(z);
        let (ia, iq) = (Param::A.index(), Param::Q.index());
        let mut j = DMatrix::zeros(6, self.dim());
        for (k, c) in self.coords.iter().enumerate() {
            match *c {
                Coord::Log(i) => j[(i, k)] = t[i],
                Coord::Excess => j[(ia, k)] = z[k].exp() * (1.0 - t[iq]).recip(),
                Coord::Complement => {
                    j[(ia, k)] = -t[ia];
                    j[(iq, k)] = -(1.0 - t[iq]);
                }
                Coord::ExcessFixedA => j[(iq, k)] = -z[k].exp() / t[ia],
                Coord::ExcessFixedQ => j[(ia, k)] = z[k].exp() / (1.0 - t[iq]),
                Coord::BoundaryComplement => {
                    j[(ia, k)] = -t[ia];
                    j[(iq, k)] = -(1.0 - t[iq]);
                }
            }
        }
        j
    }

    /// Gradient and Hessian of `ℓ∘θ` at `z` from the canonical-order ones.
    pub fn pull_back(
        &self,
        z: &[f64],
        grad: &Vector6<f64>,
        hess: &Matrix6<f64>,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let t = self.natural(z);
        let j = self.jacobian(z);
        let g6 = DVector::from_column_slice(grad.as_slice());
        let h6 = DMatrix::from_column_slice(6, 6, hess.as_slice());
        let gz = j.transpose() * &g6;
        let mut hz = j.transpose() * h6 * &j;
        let (ia, iq) = (Param::A.index(), Param::Q.index());
        let (ga, gq) = (grad[ia], grad[iq]);
        let sigma = self.find(Coord::Excess);
        let rho = self.find(Coord::Complement);
        for (k, c) in self.coords.iter().enumerate() {
            match *c {
                Coord::Log(i) => hz[(k, k)] += grad[i] * t[i],
                Coord::ExcessFixedA => hz[(k, k)] += gq * (-z[k].exp() / t[ia]),
                Coord::ExcessFixedQ => hz[(k, k)] += ga * (z[k].exp() / (1.0 - t[iq])),
                Coord::BoundaryComplement => {
                    hz[(k, k)] += ga * t[ia] + gq * (-(1.0 - t[iq]));
                }
                Coord::Excess | Coord::Complement => {}
            }
        }
        if let (Some(ks), Some(kr)) = (sigma, rho) {
            // a = (1 + e^σ) e^-ρ, q = 1 - e^ρ
            let es = z[ks].exp() * (-z[kr]).exp();
            hz[(ks, ks)] += ga * es;
            hz[(ks, kr)] += ga * -es;
            hz[(kr, ks)] += ga * -es;
            hz[(kr, kr)] += ga * t[ia] + gq * (-(1.0 - t[iq]));
        }
        (gz, hz)
    }

    /// Unit direction in `z` along which `ℓ` is exactly constant, if any.
    ///
    /// The density depends on `(a, q, η)` only through `a(1-q)` and
    /// `η/(1-q)`, so with `1-q` and both `η` free, scaling `1-q`, `η1`, `η2`
    /// together at fixed `a(1-q)` leaves every observation's density
    /// unchanged.
    pub fn null_direction(&self) -> Option<DVector<f64>> {
        let rho = self
            .find(Coord::Complement)
            .or_else(|| self.find(Coord::BoundaryComplement))?;
        let e1 = self.find(Coord::Log(Param::Eta1.index()))?;
        let e2 = self.find(Coord::Log(Param::Eta2.index()))?;
        let mut v = DVector::zeros(self.dim());
        let w = 1.0 / 3f64.sqrt();
        v[rho] = w;
        v[e1] = w;
        v[e2] = w;
        Some(v)
    }

    fn find(&self, c: Coord) -> Option<usize> {
        self.coords.iter().position(|&x| x == c)
    }
}
