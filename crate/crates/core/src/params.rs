//! Construction parameters, the eigen-chart at the fixed point, and the disk convention.
//!
//! Disks are written `D_r = {s1^2 + s2^2 <= r}`: the subscript is a squared radius.
//! Every membership test in the crate goes through [`in_disk`].

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{KatokError, Result};
use crate::numerics::quad;
use crate::slowdown::PsiProfile;

pub type Jacobian2 = Matrix2<f64>;

pub const GOLDEN: f64 = 1.618_033_988_749_895;
/// Largest eigenvalue of A = [[2,1],[1,1]], (3+sqrt 5)/2.
pub const LAMBDA: f64 = 2.618_033_988_749_895;
pub const LOG_LAMBDA: f64 = 0.962_423_650_119_206_9;

/// Above this squared radius the minimal-image lift is no longer the unique nearest one.
pub const CHART_LIMIT: f64 = 0.25;

pub fn a_matrix() -> Jacobian2 {
    Matrix2::new(2.0, 1.0, 1.0, 1.0)
}

pub fn a_inv_matrix() -> Jacobian2 {
    Matrix2::new(1.0, -1.0, -1.0, 2.0)
}

/// Unit eigenvectors (e_u, e_s) of A with positive first component.
pub fn eigen_basis() -> (Vector2<f64>, Vector2<f64>) {
    let c = (1.0 + GOLDEN * GOLDEN).sqrt();
    (
        Vector2::new(GOLDEN / c, 1.0 / c),
        Vector2::new(1.0 / c, -GOLDEN / c),
    )
}

/// Columns e_u, e_s: maps eigen coordinates to standard ones.
pub fn chart_matrix() -> Jacobian2 {
    let (eu, es) = eigen_basis();
    Matrix2::from_columns(&[eu, es])
}

pub fn eigen_to_standard(j: &Jacobian2) -> Jacobian2 {
    let p = chart_matrix();
    p * j * p.transpose()
}

pub fn standard_to_eigen(j: &Jacobian2) -> Jacobian2 {
    let p = chart_matrix();
    p.transpose() * j * p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenPoint {
    pub s1: f64,
    pub s2: f64,
}

impl EigenPoint {
    pub const ORIGIN: EigenPoint = EigenPoint { s1: 0.0, s2: 0.0 };

    pub fn new(s1: f64, s2: f64) -> Self {
        Self { s1, s2 }
    }

    /// Squared radius u = s1^2 + s2^2.
    pub fn u(&self) -> f64 {
        self.s1 * self.s1 + self.s2 * self.s2
    }

    pub fn as_vec(&self) -> Vector2<f64> {
        Vector2::new(self.s1, self.s2)
    }

    /// Planar (lifted) standard coordinates.
    pub fn to_plane(&self) -> Vector2<f64> {
        chart_matrix() * self.as_vec()
    }

    pub fn from_plane(v: Vector2<f64>) -> Self {
        let w = chart_matrix().transpose() * v;
        Self::new(w[0], w[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub x: f64,
    pub y: f64,
}

fn wrap01(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

fn wrap_half(v: f64) -> f64 {
    let r = wrap01(v + 0.5) - 0.5;
    if r >= 0.5 {
        r - 1.0
    } else {
        r
    }
}

impl TorusPoint {
    pub const ORIGIN: TorusPoint = TorusPoint { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self {
            x: wrap01(x),
            y: wrap01(y),
        }
    }

    pub fn from_vec(v: Vector2<f64>) -> Self {
        Self::new(v[0], v[1])
    }

    /// Representative in [-1/2, 1/2)^2.
    pub fn lift(&self) -> Vector2<f64> {
        Vector2::new(wrap_half(self.x), wrap_half(self.y))
    }

    /// Euclidean distance on the flat torus.
    pub fn dist(&self, other: &TorusPoint) -> f64 {
        let dx = wrap_half(self.x - other.x);
        let dy = wrap_half(self.y - other.y);
        dx.hypot(dy)
    }

    /// Minimal-image displacement `other - self`.
    pub fn delta_to(&self, other: &TorusPoint) -> Vector2<f64> {
        Vector2::new(wrap_half(other.x - self.x), wrap_half(other.y - self.y))
    }
}

/// Eigen coordinates of the minimal-image lift; infallible.
pub fn lift_eigen(p: TorusPoint) -> EigenPoint {
    EigenPoint::from_plane(p.lift())
}

pub fn to_eigen(p: TorusPoint) -> Result<EigenPoint> {
    let s = lift_eigen(p);
    if s.u() >= CHART_LIMIT {
        return Err(KatokError::ChartDomain {
            u: s.u(),
            limit: CHART_LIMIT,
        });
    }
    Ok(s)
}

pub fn from_eigen(s: EigenPoint) -> TorusPoint {
    TorusPoint::from_vec(s.to_plane())
}

/// The single disk predicate: `s` lies in `D_r` iff `s1^2 + s2^2 <= r`.
#[inline]
pub fn in_disk(s: EigenPoint, r: f64) -> bool {
    s.u() <= r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsConfig {
    pub alpha: f64,
    pub r0: f64,
    #[serde(default = "default_tol")]
    pub ode_tol: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_tol() -> f64 {
    1e-12
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            r0: 0.1,
            ode_tol: 1e-12,
            rng_seed: 0,
        }
    }
}

/// Blend of ψ on [r0/2, r0]. With w = (u - r0/2)/(r0/2):
/// ψ'(u) = ψ'(r0/2) (1 - w^p)^2, and `p` is fixed by ψ(r0) = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiBlend {
    pub p: f64,
    /// ψ'(r0/2) · r0/2 = α 2^{-α}.
    pub slope_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KatokParams {
    pub alpha: f64,
    pub r0: f64,
    pub lambda: f64,
    pub log_lambda: f64,
    pub r1: f64,
    pub c1: f64,
    pub kappa0: f64,
    pub psi_blend: PsiBlend,
    pub ode_tol: f64,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiskInclusionReport {
    pub holds: bool,
    /// Largest s1^2+s2^2 of A^{±1}(∂D_{r0}) over the sampled boundary.
    pub worst_image_u: f64,
    pub r1: f64,
    /// Smallest r1 for which the inclusion would hold (λ² r0).
    pub required_r1: f64,
}

impl KatokParams {
    pub fn new(alpha: f64, r0: f64) -> Result<Self> {
        Self::with_tolerance(alpha, r0, 1e-12, 0)
    }

    pub fn from_config(cfg: &ParamsConfig) -> Result<Self> {
        Self::with_tolerance(cfg.alpha, cfg.r0, cfg.ode_tol, cfg.rng_seed)
    }

    pub fn with_tolerance(alpha: f64, r0: f64, ode_tol: f64, rng_seed: u64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(KatokError::InvalidParams(format!(
                "alpha = {alpha} not in (0,1)"
            )));
        }
        if !(r0 > 0.0 && r0 < 1.0) {
            return Err(KatokError::InvalidParams(format!("r0 = {r0} not in (0,1)")));
        }
        if !(ode_tol > 0.0 && ode_tol < 1e-3) {
            return Err(KatokError::InvalidParams(format!(
                "ode_tol = {ode_tol} out of range"
            )));
        }
        let r1 = 2.0 * r0 * LOG_LAMBDA;
        if r1 >= 0.2 {
            return Err(KatokError::InvalidParams(format!(
                "r1 = {r1} >= 0.2: chart not injective on D_r1"
            )));
        }
        let psi_blend = PsiProfile::solve_blend(alpha)?;
        let mut params = Self {
            alpha,
            r0,
            lambda: LAMBDA,
            log_lambda: LOG_LAMBDA,
            r1,
            c1: 2.0 * alpha * LOG_LAMBDA / r0.powf(alpha),
            kappa0: f64::NAN,
            psi_blend,
            ode_tol,
            rng_seed,
        };
        let psi = PsiProfile::new(&params);
        psi.validate()?;
        params.kappa0 = kappa0_quadrature(&psi)?;
        Ok(params)
    }

    pub fn defaults() -> Self {
        Self::new(0.5, 0.1).expect("default parameters are valid")
    }

    pub fn psi(&self) -> PsiProfile {
        PsiProfile::new(self)
    }

    /// Checks `D_{r0} ⊂ Int A(D_{r1}) ∩ Int A^{-1}(D_{r1})` on `n` boundary samples.
    ///
    /// With r1 = 2 r0 log λ this fails: A^{±1}(∂D_{r0}) reaches squared radius λ² r0.
    pub fn disk_inclusion(&self, n: usize) -> DiskInclusionReport {
        let l2 = self.lambda * self.lambda;
        let mut worst: f64 = 0.0;
        for k in 0..n {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let (s1, s2) = (self.r0.sqrt() * th.cos(), self.r0.sqrt() * th.sin());
            // A^{-1} s ∈ D_r1 and A s ∈ D_r1
            let back = s1 * s1 / l2 + s2 * s2 * l2;
            let fwd = s1 * s1 * l2 + s2 * s2 / l2;
            worst = worst.max(back).max(fwd);
        }
        DiskInclusionReport {
            holds: worst < self.r1,
            worst_image_u: worst,
            r1: self.r1,
            required_r1: l2 * self.r0,
        }
    }
}

/// κ₀ = 1 + π ∫₀^{r0} (1/ψ(u) - 1) du, by adaptive Gauss–Kronrod in the squared radius.
pub fn kappa0_quadrature(psi: &PsiProfile) -> Result<f64> {
    let r0 = psi.r0;
    // The integrand has an integrable u^{-α} singularity at 0; substitute u = r0 t^k
    // with k(1-α) ≥ 2 to make it smooth.
    let k = (2.0 / (1.0 - psi.alpha)).ceil();
    let f = |t: f64| {
        if t <= 0.0 {
            return 0.0;
        }
        let u = r0 * t.powf(k);
        let du = r0 * k * t.powf(k - 1.0);
        (1.0 / psi.psi(u) - 1.0) * du
    };
    let half = quad::adaptive_gk15(f, 0.0, 0.5f64.powf(1.0 / k), 1e-14, 1e-14)?;
    let g = |u: f64| 1.0 / psi.psi(u) - 1.0;
    let blend = quad::adaptive_gk15(g, r0 / 2.0, r0, 1e-14, 1e-14)?;
    Ok(1.0 + std::f64::consts::PI * (half + blend))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_basis_properties() {
        let (eu, es) = eigen_basis();
        let a = a_matrix();
        assert!((a * eu - LAMBDA * eu).norm() < 1e-14);
        assert!((a * es - es / LAMBDA).norm() < 1e-14);
        assert!(eu.dot(&es).abs() < 1e-15);
        assert!((eu[1] / eu[0] - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-14);
        assert!((es[1] / es[0] + (5f64.sqrt() + 1.0) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn constants_match_closed_forms() {
        assert_eq!(LAMBDA, (3.0 + 5f64.sqrt()) / 2.0);
        assert!((LOG_LAMBDA - LAMBDA.ln()).abs() < 1e-15);
        assert!((GOLDEN * GOLDEN - LAMBDA).abs() < 1e-15);
    }

    #[test]
    fn derived_constants_recompute() {
        let p = KatokParams::defaults();
        let q = KatokParams::new(p.alpha, p.r0).unwrap();
        assert_eq!(p, q);
        assert!((p.r1 - 2.0 * 0.1 * LAMBDA.ln()).abs() < 1e-15);
        assert_eq!(p.c1, 2.0 * 0.5 * LOG_LAMBDA / 0.1f64.powf(0.5));
        assert!(p.kappa0 > 1.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(KatokParams::new(0.0, 0.1).is_err());
        assert!(KatokParams::new(1.0, 0.1).is_err());
        assert!(KatokParams::new(0.5, 0.2).is_err());
    }

    #[test]
    fn torus_wrapping() {
        let p = TorusPoint::new(-0.25, 1.75);
        assert_eq!((p.x, p.y), (0.75, 0.75));
        let q = TorusPoint::new(-1e-18, 0.0);
        assert!(q.x < 1.0);
        assert_eq!(
            TorusPoint::new(0.75, 0.25).lift(),
            Vector2::new(-0.25, 0.25)
        );
    }

    #[test]
    fn chart_origin_and_norm() {
        assert_eq!(to_eigen(TorusPoint::ORIGIN).unwrap(), EigenPoint::ORIGIN);
        let p = TorusPoint::new(0.1, -0.2);
        let s = to_eigen(p).unwrap();
        assert!((s.u() - 0.05).abs() < 1e-15);
        assert!(to_eigen(TorusPoint::new(0.45, 0.45)).is_err());
    }

    #[test]
    fn disk_inclusion_fails_for_construction_r1() {
        let p = KatokParams::defaults();
        let rep = p.disk_inclusion(4096);
        assert!(!rep.holds);
        assert!((rep.worst_image_u - LAMBDA * LAMBDA * p.r0).abs() < 1e-9);
        // the inclusion is equivalent to r1 > λ² r0
        let mut q = p.clone();
        q.r1 = 1.01 * LAMBDA * LAMBDA * q.r0;
        assert!(q.disk_inclusion(4096).holds);
    }
}
