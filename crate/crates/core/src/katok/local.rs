//! Radial change of coordinates inside D_{r0}.
//!
//! `LocalChart` sends the density κ = 1/ψ of the slowed map to a smooth radial
//! density χ̃ that is constant (= κ̄) near the origin and 1 outside D_{r0}.
//! In squared-radius terms, a point at u moves to v = J(u) with
//! X(J(u)) = I(u), where I(u) = ∫₀^u dv/ψ and X(v) = ∫₀^v χ̃.
//! For I(u) ≤ κ̄ v_a this is the closed form v = I(u)/κ̄.

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::error::Result;
use crate::numerics::roots;
use crate::params::Jacobian2;
use crate::slowdown::PsiProfile;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LocalChart {
    pub psi: PsiProfile,
    /// Plateau value of χ̃.
    pub kappa_bar: f64,
    /// χ̃ = κ̄ on [0, v_a], blends down to 1 on [v_a, r0].
    pub v_a: f64,
    /// I(r0) = X(r0).
    pub i_r0: f64,
}

fn smooth_step(w: f64) -> f64 {
    w * w * w * (10.0 + w * (-15.0 + 6.0 * w))
}

impl LocalChart {
    pub fn new(psi: PsiProfile) -> Self {
        let r0 = psi.r0;
        let a = psi.inv_integral(0.5 * r0);
        let i_r0 = psi.inv_integral(r0);
        // X(r0) = κ̄ v_a + (r0 - v_a)(1 + κ̄)/2 = I(r0) with v_a = a/κ̄
        let b = r0 + a - 2.0 * i_r0;
        let kappa_bar = (-b + (b * b + 4.0 * r0 * a).sqrt()) / (2.0 * r0);
        Self {
            psi,
            kappa_bar,
            v_a: a / kappa_bar,
            i_r0,
        }
    }

    fn w(&self, v: f64) -> f64 {
        (v - self.v_a) / (self.psi.r0 - self.v_a)
    }

    /// Target density χ̃ as a function of the squared radius.
    pub fn chi(&self, v: f64) -> f64 {
        if v <= self.v_a {
            self.kappa_bar
        } else if v < self.psi.r0 {
            1.0 + (self.kappa_bar - 1.0) * (1.0 - smooth_step(self.w(v)))
        } else {
            1.0
        }
    }

    pub fn chi_prime(&self, v: f64) -> f64 {
        if v <= self.v_a || v >= self.psi.r0 {
            0.0
        } else {
            let w = self.w(v);
            -(self.kappa_bar - 1.0) * 30.0 * w * w * (1.0 - w) * (1.0 - w)
                / (self.psi.r0 - self.v_a)
        }
    }

    /// X(v) = ∫₀^v χ̃.
    pub fn chi_integral(&self, v: f64) -> f64 {
        let r0 = self.psi.r0;
        if v <= self.v_a {
            self.kappa_bar * v.max(0.0)
        } else if v < r0 {
            let w = self.w(v);
            let tail = w - 2.5 * w.powi(4) + 3.0 * w.powi(5) - w.powi(6);
            self.kappa_bar * self.v_a + (r0 - self.v_a) * (w + (self.kappa_bar - 1.0) * tail)
        } else {
            self.chi_integral_at_r0() + (v - r0)
        }
    }

    fn chi_integral_at_r0(&self) -> f64 {
        self.kappa_bar * self.v_a + 0.5 * (self.psi.r0 - self.v_a) * (1.0 + self.kappa_bar)
    }

    pub fn chi_integral_inverse(&self, target: f64) -> Result<f64> {
        if target <= self.kappa_bar * self.v_a {
            return Ok(target.max(0.0) / self.kappa_bar);
        }
        let top = self.chi_integral_at_r0();
        if target >= top {
            return Ok(self.psi.r0 + target - top);
        }
        roots::newton_bracketed(
            |v| (self.chi_integral(v) - target, self.chi(v)),
            self.v_a,
            self.psi.r0,
            1e-16,
        )
    }

    /// Excess mass π(X(r0) - r0) = κ₀ - 1 carried by χ̃ over the torus.
    pub fn excess_mass(&self) -> f64 {
        std::f64::consts::PI * (self.chi_integral_at_r0() - self.psi.r0)
    }

    /// v = J(u) and dJ/du.
    pub fn radial(&self, u: f64) -> Result<(f64, f64)> {
        if u >= self.psi.r0 {
            return Ok((u, 1.0));
        }
        let v = self.chi_integral_inverse(self.psi.inv_integral(u))?;
        Ok((v, 1.0 / (self.psi.psi(u) * self.chi(v))))
    }

    /// φ_loc on a planar vector in the minimal-image cell, with its differential.
    pub fn forward(&self, x: Vector2<f64>) -> Result<(Vector2<f64>, Jacobian2)> {
        let u = x.norm_squared();
        if u >= self.psi.r0 || u == 0.0 {
            return Ok((x, Jacobian2::identity()));
        }
        let (v, dv) = self.radial(u)?;
        let rho = (v / u).sqrt();
        // ρ' = d/du sqrt(J/u)
        let drho = (dv * u - v) / (2.0 * rho * u * u);
        let jac = Matrix2::identity() * rho + x * x.transpose() * (2.0 * drho);
        Ok((x * rho, jac))
    }

    pub fn inverse(&self, y: Vector2<f64>) -> Result<Vector2<f64>> {
        let v = y.norm_squared();
        if v >= self.psi.r0 || v == 0.0 {
            return Ok(y);
        }
        let u = self.psi.inv_integral_inverse(self.chi_integral(v))?;
        Ok(y * (u / v).sqrt())
    }

    /// φ_loc⁻¹ with its differential (the inverse of dφ_loc at the preimage).
    pub fn inverse_with_jac(&self, y: Vector2<f64>) -> Result<(Vector2<f64>, Jacobian2)> {
        let x = self.inverse(y)?;
        let (_, j) = self.forward(x)?;
        let inv = j.try_inverse().unwrap_or_else(Jacobian2::identity);
        Ok((x, inv))
    }
}
