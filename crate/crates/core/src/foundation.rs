//! Pointwise densities of the nematic foundation: the interface matrix `K`,
//! the relaxed distance term and the frozen-order quadratic term.

use nalgebra::Matrix3;

use crate::error::{invalid, Result};
use crate::qtensor::{dist2_qb, QTensor};

/// Thickness regime of the nematic layer relative to the film.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `p = 0`: in-plane displacements enter the foundation.
    Thin,
    /// `−1 < p < 0`: the foundation only sees the transverse displacement.
    Thick,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Thin => "thin",
            Regime::Thick => "thick",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialParams {
    pub nu: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams { nu: 0.3 }
    }
}

impl MaterialParams {
    pub fn new(nu: f64) -> Result<Self> {
        let mp = MaterialParams { nu };
        mp.check()?;
        Ok(mp)
    }

    /// Evaluation range `ν ∈ (−1, 1/2)` with a guard against the
    /// incompressible limit.
    pub fn check(&self) -> Result<()> {
        if !self.nu.is_finite() || self.nu <= -1.0 || self.nu >= 0.5 || (1.0 - 2.0 * self.nu).abs() < 1e-6 {
            return invalid(format!("Poisson ratio {} outside (-1, 1/2)", self.nu));
        }
        Ok(())
    }

    /// Range in which the limit energies are convex; solvers require it.
    pub fn check_convex(&self) -> Result<()> {
        self.check()?;
        if self.nu < 0.0 {
            return invalid(format!("Poisson ratio {} < 0: convexity of the foundation is not guaranteed", self.nu));
        }
        Ok(())
    }

    /// Foundation volumetric coefficient `ν/(1−2ν)`.
    pub fn foundation_coeff(&self) -> f64 {
        self.nu / (1.0 - 2.0 * self.nu)
    }

    /// Film trace coefficient `ν/(1−ν)`.
    pub fn film_coeff(&self) -> f64 {
        self.nu / (1.0 - self.nu)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FoundationSample {
    pub zeta_prime: [f64; 2],
    pub zeta3: f64,
    pub regime: Regime,
}

impl FoundationSample {
    pub fn new(zeta_prime: [f64; 2], zeta3: f64, regime: Regime) -> Self {
        FoundationSample { zeta_prime, zeta3, regime }
    }

    /// In-plane displacement as seen by the foundation.
    pub fn gated_prime(&self) -> [f64; 2] {
        match self.regime {
            Regime::Thin => self.zeta_prime,
            Regime::Thick => [0.0, 0.0],
        }
    }
}

pub fn k_matrix(zeta_prime: [f64; 2], zeta3: f64) -> Matrix3<f64> {
    let (a, b) = (0.5 * zeta_prime[0], 0.5 * zeta_prime[1]);
    Matrix3::new(0.0, 0.0, a, 0.0, 0.0, b, a, b, zeta3)
}

/// `dist²(K, Q_B) + ν/(1−2ν) ζ₃²` with its gradient in `(ζ₁, ζ₂, ζ₃)`.
pub fn relaxed_density(s: &FoundationSample, mp: &MaterialParams) -> Result<(f64, [f64; 3])> {
    mp.check()?;
    let c = mp.foundation_coeff();
    let k = k_matrix(s.gated_prime(), s.zeta3);
    let (d, g) = dist2_qb(&k);
    let mut grad = [g[(0, 2)], g[(1, 2)], g[(2, 2)] + 2.0 * c * s.zeta3];
    if s.regime == Regime::Thick {
        grad[0] = 0.0;
        grad[1] = 0.0;
    }
    Ok((d + c * s.zeta3 * s.zeta3, grad))
}

/// Frozen-order density. Thin: `|Q̄′|² + 2|½ζ′ − (Q̄e₃)′|² + (ζ₃ − Q̄₃₃)² +
/// ν/(1−2ν) ζ₃²`; thick replaces the shear term by `2|(Q̄e₃)′|²`.
pub fn frozen_density(s: &FoundationSample, qbar: &QTensor, mp: &MaterialParams) -> Result<(f64, [f64; 3])> {
    mp.check()?;
    let c = mp.foundation_coeff();
    let q = qbar.matrix();
    let planar = q[(0, 0)].powi(2) + q[(1, 1)].powi(2) + 2.0 * q[(0, 1)].powi(2);
    let zp = s.gated_prime();
    let sh = [0.5 * zp[0] - q[(0, 2)], 0.5 * zp[1] - q[(1, 2)]];
    let vert = s.zeta3 - q[(2, 2)];
    let value = planar + 2.0 * (sh[0] * sh[0] + sh[1] * sh[1]) + vert * vert + c * s.zeta3 * s.zeta3;
    let grad = match s.regime {
        Regime::Thin => [2.0 * sh[0], 2.0 * sh[1], 2.0 * vert + 2.0 * c * s.zeta3],
        Regime::Thick => [0.0, 0.0, 2.0 * vert + 2.0 * c * s.zeta3],
    };
    Ok((value, grad))
}
