//! Dielectric tensor of the nematic layer and its reduction to the plate:
//! Schur complement `B̄` and the optimal transverse field coefficient.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2};

use crate::error::{invalid, Error, Result};
use crate::qtensor::QTensor;

const SINGULAR_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DielectricParams {
    pub eps_perp: f64,
    pub eps_par: f64,
    /// Vacuum permittivity, carried for reporting only.
    pub eps0: f64,
}

impl Default for DielectricParams {
    fn default() -> Self {
        DielectricParams { eps_perp: 1.0, eps_par: 4.0, eps0: 8.854_187_8128e-12 }
    }
}

impl DielectricParams {
    pub fn new(eps_perp: f64, eps_par: f64) -> Result<Self> {
        let dp = DielectricParams { eps_perp, eps_par, ..Default::default() };
        dp.check()?;
        Ok(dp)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.eps_perp > 0.0 && self.eps_par > 0.0) || !self.eps_perp.is_finite() || !self.eps_par.is_finite() {
            return invalid(format!("permittivities must be positive, got ({}, {})", self.eps_perp, self.eps_par));
        }
        Ok(())
    }

    pub fn is_isotropic(&self) -> bool {
        self.eps_perp == self.eps_par
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DielectricTensor {
    pub d: Matrix3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedDielectric {
    pub b: Matrix2<f64>,
}

impl DielectricTensor {
    /// Ellipticity constants `(λ_min, λ_max)`.
    pub fn ellipticity(&self) -> (f64, f64) {
        let e = SymmetricEigen::new(self.d).eigenvalues;
        (e.min(), e.max())
    }
}

impl ReducedDielectric {
    pub fn new(b: Matrix2<f64>) -> Result<Self> {
        let rd = ReducedDielectric { b: 0.5 * (b + b.transpose()) };
        if rd.min_eigenvalue() <= 0.0 {
            return invalid("reduced dielectric matrix must be positive definite");
        }
        Ok(rd)
    }

    pub fn identity() -> Self {
        ReducedDielectric { b: Matrix2::identity() }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.b).eigenvalues.min()
    }

    pub fn quad(&self, g: [f64; 2]) -> f64 {
        let v = Vector2::new(g[0], g[1]);
        v.dot(&(self.b * v))
    }
}

/// `D(Q) = (2ε⊥ + ε∥)/3 I + (ε∥ − ε⊥) Q`.
pub fn d_tensor(q: &QTensor, dp: &DielectricParams) -> Result<DielectricTensor> {
    dp.check()?;
    let iso = (2.0 * dp.eps_perp + dp.eps_par) / 3.0;
    Ok(DielectricTensor { d: Matrix3::identity() * iso + q.matrix() * (dp.eps_par - dp.eps_perp) })
}

fn check_d33(d: &DielectricTensor) -> Result<f64> {
    let d33 = d.d[(2, 2)];
    if !(d33 > SINGULAR_TOL) {
        return Err(Error::Singular(format!("transverse permittivity D33 = {d33} is not positive")));
    }
    Ok(d33)
}

/// `B̄_αβ = D̄_αβ − D̄_α3 D̄_β3 / D̄_33`.
pub fn schur_b(dbar: &DielectricTensor) -> Result<ReducedDielectric> {
    let d33 = check_d33(dbar)?;
    let d = &dbar.d;
    let mut b = Matrix2::zeros();
    for a in 0..2 {
        for c in 0..2 {
            b[(a, c)] = 0.5 * (d[(a, c)] + d[(c, a)]) - d[(a, 2)] * d[(c, 2)] / d33;
        }
    }
    Ok(ReducedDielectric { b })
}

/// Transverse component minimising `(g, c)ᵀ D̄ (g, c)` over `c`.
pub fn c_star(dbar: &DielectricTensor, g: [f64; 2]) -> Result<f64> {
    let d33 = check_d33(dbar)?;
    Ok(-(dbar.d[(0, 2)] * g[0] + dbar.d[(1, 2)] * g[1]) / d33)
}
